//! Retrieval metrics over a dataset manifest and the experiment grid.
//!
//! Rank-based metrics (P@1, Mean r, Med r, MRR) use the rank of the first
//! relevant video of each query. R@K is the fraction of a query's relevant
//! videos found in the top K.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{read_jsonl, SchemaLibrary, TaskRecord, TaskRegistry, VideoCorpus};
use crate::editing::{Ablation, EditParams};
use crate::error::{Error, Result};
use crate::retrieval::{plan_query, rank_pool, Mode, PlanContext, RankedList, RetrievalParams};
use crate::scoring::{Matcher, ScorerProvider};

pub const DEFAULT_KS: [usize; 2] = [5, 10];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestQuery {
    pub task_id: String,
    pub relevant: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ManifestHeader {
    #[serde(default)]
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pool: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub name: String,
    /// Pool file named by the header, resolved against the manifest's
    /// directory.
    pub pool: Option<PathBuf>,
    pub queries: Vec<ManifestQuery>,
}

impl DatasetManifest {
    /// Reads `manifest.jsonl`: an optional header line `{"name", "pool"}`
    /// followed by `{"task_id", "relevant": [...]}` lines.
    pub fn load(path: &Path) -> Result<Self> {
        let rows: Vec<(usize, serde_json::Value)> = read_jsonl(path)?;
        let mut header = ManifestHeader::default();
        let mut queries = Vec::new();
        for (line, row) in rows {
            if row.get("task_id").is_none() {
                header = serde_json::from_value(row).map_err(|source| Error::MalformedLine {
                    path: path.to_path_buf(),
                    line,
                    source,
                })?;
                continue;
            }
            queries.push(serde_json::from_value(row).map_err(|source| Error::MalformedLine {
                path: path.to_path_buf(),
                line,
                source,
            })?);
        }
        let pool = header
            .pool
            .map(|p| if p.is_relative() { path.parent().unwrap_or(Path::new(".")).join(p) } else { p });
        Ok(Self {
            name: header.name,
            pool,
            queries,
        })
    }

    pub fn save(&self, path: &Path, pool_ref: Option<&Path>) -> Result<()> {
        let header = ManifestHeader {
            name: self.name.clone(),
            pool: pool_ref.map(Path::to_path_buf),
        };
        let mut rows = vec![serde_json::to_value(header)?];
        for q in &self.queries {
            rows.push(serde_json::to_value(q)?);
        }
        crate::corpus::write_jsonl(path, &rows)
    }

    /// Every query has relevant videos and every relevant id is in the pool.
    pub fn validate(&self, pool: &VideoCorpus) -> Result<()> {
        if self.queries.is_empty() {
            return Err(Error::invalid("manifest", "no queries"));
        }
        for q in &self.queries {
            if q.relevant.is_empty() {
                return Err(Error::invalid("manifest", format!("query {} has no relevant videos", q.task_id)));
            }
            if let Some(missing) = q.relevant.iter().find(|v| !pool.contains(v)) {
                return Err(Error::UnknownVideo(missing.clone()));
            }
        }
        Ok(())
    }
}

/// 1-based position of the best-ranked relevant video. Every relevant id
/// must appear in the ranking.
pub fn first_relevant_rank<'a>(ranking: impl IntoIterator<Item = &'a str>, relevant: &[String]) -> Result<usize> {
    let positions: BTreeMap<&str, usize> = ranking.into_iter().enumerate().map(|(i, v)| (v, i + 1)).collect();
    let mut best = None;
    let sorted: BTreeSet<&String> = relevant.iter().collect();
    for r in sorted {
        let p = *positions.get(r.as_str()).ok_or_else(|| Error::UnknownVideo(r.clone()))?;
        best = Some(best.map_or(p, |b: usize| b.min(p)));
    }
    best.ok_or_else(|| Error::invalid("query", "no relevant videos"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryOutcome {
    pub task_id: String,
    pub first_rank: usize,
    pub n_relevant: usize,
    /// Relevant videos within the top K, keyed by K.
    pub hits: BTreeMap<usize, usize>,
    /// Rank of every relevant video, by video id.
    pub relevant_ranks: BTreeMap<String, usize>,
    /// Similarity of the best source task (ier mode).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub top_g: Option<f64>,
}

pub fn query_outcome(task_id: &str, ranked: &RankedList, relevant: &[String], ks: &[usize]) -> Result<QueryOutcome> {
    let first_rank = first_relevant_rank(ranked.video_ids(), relevant)?;
    let relevant_set: BTreeSet<&str> = relevant.iter().map(String::as_str).collect();
    let relevant_ranks: BTreeMap<String, usize> = ranked
        .video_ids()
        .enumerate()
        .filter(|(_, v)| relevant_set.contains(v))
        .map(|(i, v)| (v.to_string(), i + 1))
        .collect();
    let hits = ks
        .iter()
        .map(|&k| (k, relevant_ranks.values().filter(|&&r| r <= k).count()))
        .collect();
    Ok(QueryOutcome {
        task_id: task_id.to_string(),
        first_rank,
        n_relevant: relevant_set.len(),
        hits,
        relevant_ranks,
        top_g: ranked.sources.first().and_then(|s| s.similarity).map(|s| s.g),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub n_queries: usize,
    pub p_at_1: f64,
    /// R@K keyed by K.
    pub recall: BTreeMap<usize, f64>,
    pub mean_rank: f64,
    pub median_rank: f64,
    pub mrr: f64,
}

fn median(sorted: &[usize]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2] as f64
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) as f64 / 2.0
    }
}

/// Aggregates per-query outcomes. Outcomes are reduced in task-id order,
/// so the result does not depend on query order.
pub fn metrics(outcomes: &[QueryOutcome], ks: &[usize]) -> Result<Metrics> {
    if outcomes.is_empty() {
        return Err(Error::invalid("metrics", "empty query set"));
    }
    let mut ordered: Vec<&QueryOutcome> = outcomes.iter().collect();
    ordered.sort_by(|a, b| a.task_id.cmp(&b.task_id).then(a.first_rank.cmp(&b.first_rank)));
    let n = ordered.len() as f64;
    let p_at_1 = ordered.iter().filter(|o| o.first_rank == 1).count() as f64 / n;
    let mut recall = BTreeMap::new();
    for &k in ks {
        let mut sum = 0.0;
        for o in &ordered {
            let hits = o.hits.get(&k).copied().unwrap_or_else(|| o.relevant_ranks.values().filter(|&&r| r <= k).count());
            sum += hits as f64 / o.n_relevant as f64;
        }
        recall.insert(k, sum / n);
    }
    let mut ranks: Vec<usize> = ordered.iter().map(|o| o.first_rank).collect();
    let mean_rank = ranks.iter().map(|&r| r as f64).sum::<f64>() / n;
    let mrr = ranks.iter().map(|&r| 1.0 / r as f64).sum::<f64>() / n;
    ranks.sort_unstable();
    Ok(Metrics {
        n_queries: ordered.len(),
        p_at_1,
        recall,
        mean_rank,
        median_rank: median(&ranks),
        mrr,
    })
}

/// One row of the experiment grid. Unset fields take the base values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub name: String,
    pub mode: Mode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default)]
    pub ablation: Ablation,
}

impl ExperimentConfig {
    pub fn new(name: impl Into<String>, mode: Mode) -> Self {
        Self {
            name: name.into(),
            mode,
            lambda: None,
            r: None,
            beta: None,
            ablation: Ablation::Full,
        }
    }
}

/// Reads a grid file: a JSON array of configs or `{"configs": [...]}`.
pub fn load_grid(path: &Path) -> Result<Vec<ExperimentConfig>> {
    let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let value: serde_json::Value = serde_json::from_str(&raw)?;
    let list = match value {
        serde_json::Value::Object(mut m) => m.remove("configs").unwrap_or(serde_json::Value::Null),
        v => v,
    };
    let grid: Vec<ExperimentConfig> = serde_json::from_value(list)?;
    if grid.is_empty() {
        return Err(Error::invalid("grid", "no configurations"));
    }
    Ok(grid)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub dataset: String,
    pub config: ExperimentConfig,
    pub metrics: Metrics,
    pub per_query: Vec<QueryOutcome>,
    /// Resolved parameters the run used.
    pub echo: serde_json::Value,
}

/// Shared inputs of an experiment run.
pub struct ExperimentContext<'a> {
    pub provider: &'a dyn ScorerProvider,
    pub matcher: Matcher,
    pub registry: &'a TaskRegistry,
    pub library: Option<&'a SchemaLibrary>,
    pub pool: &'a VideoCorpus,
    pub retrieval: RetrievalParams,
    pub edit: EditParams,
    pub ks: Vec<usize>,
    /// Extra values echoed into every report (e.g. the seed).
    pub echo: BTreeMap<String, serde_json::Value>,
}

fn query_task(ctx: &ExperimentContext, q: &ManifestQuery) -> Result<TaskRecord> {
    if let Some(t) = ctx.registry.get(&q.task_id) {
        return Ok(t.clone());
    }
    let name = q
        .name
        .clone()
        .or_else(|| ctx.library.and_then(|l| l.meta.task_names.get(&q.task_id).cloned()))
        .ok_or_else(|| Error::UnknownTask(q.task_id.clone()))?;
    Ok(TaskRecord::new(q.task_id.clone(), name, crate::corpus::Partition::Unknown))
}

/// Ranks the pool for one query under a config.
pub fn rank_query(ctx: &ExperimentContext, config: &ExperimentConfig, q: &ManifestQuery) -> Result<RankedList> {
    let (retrieval, edit) = resolve(ctx, config);
    let task = query_task(ctx, q)?;
    let sources: Vec<TaskRecord> = ctx.registry.known().cloned().collect();
    let plan_ctx = PlanContext {
        provider: ctx.provider,
        matcher: ctx.matcher,
        library: ctx.library,
        sources: if sources.is_empty() { None } else { Some(&sources) },
        edit,
        r: retrieval.r,
    };
    let plan = plan_query(&plan_ctx, &task, config.mode)?;
    rank_pool(&plan, ctx.pool, &retrieval)
}

fn resolve(ctx: &ExperimentContext, config: &ExperimentConfig) -> (RetrievalParams, EditParams) {
    let mut retrieval = ctx.retrieval.clone();
    if let Some(l) = config.lambda {
        retrieval.lambda = l;
    }
    if let Some(r) = config.r {
        retrieval.r = r;
    }
    let mut edit = ctx.edit.clone().with_ablation(config.ablation);
    if let Some(b) = config.beta {
        edit.beta = b;
    }
    (retrieval, edit)
}

/// One report per config; queries run in parallel and are reported in
/// manifest order.
pub fn run_experiment(ctx: &ExperimentContext, manifest: &DatasetManifest, grid: &[ExperimentConfig]) -> Result<Vec<EvalReport>> {
    manifest.validate(ctx.pool)?;
    grid.iter()
        .map(|config| {
            let (retrieval, edit) = resolve(ctx, config);
            retrieval.validate()?;
            edit.validate()?;
            let per_query: Vec<QueryOutcome> = manifest
                .queries
                .par_iter()
                .map(|q| {
                    let ranked = rank_query(ctx, config, q)?;
                    query_outcome(&q.task_id, &ranked, &q.relevant, &ctx.ks)
                })
                .collect::<Result<_>>()?;
            let metrics = metrics(&per_query, &ctx.ks)?;
            let mut echo = ctx.echo.clone();
            echo.insert("mode".into(), serde_json::to_value(config.mode)?);
            echo.insert("lambda".into(), retrieval.lambda.into());
            echo.insert("r".into(), retrieval.r.into());
            echo.insert("beta".into(), edit.beta.into());
            echo.insert("ablation".into(), config.ablation.as_str().into());
            echo.insert("retrieval.normalize_g".into(), retrieval.normalize_g.into());
            echo.insert("scoring.normalize".into(), ctx.matcher.normalize.into());
            Ok(EvalReport {
                dataset: manifest.name.clone(),
                config: config.clone(),
                metrics,
                per_query,
                echo: serde_json::to_value(echo)?,
            })
        })
        .collect()
}

/// Flat summary, one row per report.
pub fn write_summary_csv(path: &Path, reports: &[EvalReport], ks: &[usize]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    let mut header: Vec<String> = ["config", "dataset", "mode", "ablation", "lambda", "r", "beta", "n_queries", "p_at_1"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend(ks.iter().map(|k| format!("r_at_{k}")));
    header.extend(["mean_rank", "median_rank", "mrr"].iter().map(|s| s.to_string()));
    w.write_record(&header).map_err(|e| csv_error(path, e))?;
    for r in reports {
        let e = &r.echo;
        let mut row = vec![
            r.config.name.clone(),
            r.dataset.clone(),
            r.config.mode.as_str().to_string(),
            r.config.ablation.as_str().to_string(),
            e["lambda"].to_string(),
            e["r"].to_string(),
            e["beta"].to_string(),
            r.metrics.n_queries.to_string(),
            r.metrics.p_at_1.to_string(),
        ];
        row.extend(ks.iter().map(|k| r.metrics.recall.get(k).copied().unwrap_or(f64::NAN).to_string()));
        row.push(r.metrics.mean_rank.to_string());
        row.push(r.metrics.median_rank.to_string());
        row.push(r.metrics.mrr.to_string());
        w.write_record(&row).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    Error::io(path, std::io::Error::other(e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LengthBin {
    pub config: String,
    pub min_clips: usize,
    /// Exclusive; `None` for the open last bin.
    pub max_clips: Option<usize>,
    pub n_videos: usize,
    pub mean_rank: f64,
}

/// Mean rank of relevant videos grouped by clip count. `edges` are the
/// lower bounds of consecutive bins.
pub fn length_breakdown(reports: &[EvalReport], pool: &VideoCorpus, edges: &[usize]) -> Vec<LengthBin> {
    let mut out = Vec::new();
    for r in reports {
        for (i, &lo) in edges.iter().enumerate() {
            let hi = edges.get(i + 1).copied();
            let ranks: Vec<usize> = r
                .per_query
                .iter()
                .flat_map(|q| &q.relevant_ranks)
                .filter(|(v, _)| {
                    pool.get(v)
                        .is_some_and(|v| v.clips.len() >= lo && hi.is_none_or(|h| v.clips.len() < h))
                })
                .map(|(_, &rank)| rank)
                .collect();
            if ranks.is_empty() {
                continue;
            }
            out.push(LengthBin {
                config: r.config.name.clone(),
                min_clips: lo,
                max_clips: hi,
                n_videos: ranks.len(),
                mean_rank: ranks.iter().sum::<usize>() as f64 / ranks.len() as f64,
            });
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityBatch {
    pub config: String,
    pub batch: usize,
    pub g_min: f64,
    pub g_max: f64,
    pub n_queries: usize,
    pub mean_rank: f64,
    pub mrr: f64,
}

/// Queries sorted by their best source similarity (descending, ties by
/// task id) and cut into batches of `batch_size`. Reports without source
/// similarities are skipped.
pub fn similarity_breakdown(reports: &[EvalReport], batch_size: usize) -> Vec<SimilarityBatch> {
    let mut out = Vec::new();
    for r in reports {
        let mut qs: Vec<(&str, f64, usize)> = r
            .per_query
            .iter()
            .filter_map(|q| q.top_g.map(|g| (q.task_id.as_str(), g, q.first_rank)))
            .collect();
        qs.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(b.0)));
        for (i, chunk) in qs.chunks(batch_size.max(1)).enumerate() {
            let n = chunk.len() as f64;
            out.push(SimilarityBatch {
                config: r.config.name.clone(),
                batch: i,
                g_min: chunk.iter().map(|q| q.1).fold(f64::INFINITY, f64::min),
                g_max: chunk.iter().map(|q| q.1).fold(f64::NEG_INFINITY, f64::max),
                n_queries: chunk.len(),
                mean_rank: chunk.iter().map(|q| q.2 as f64).sum::<f64>() / n,
                mrr: chunk.iter().map(|q| 1.0 / q.2 as f64).sum::<f64>() / n,
            });
        }
    }
    out
}

pub fn write_rows_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    for row in rows {
        w.serialize(row).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
