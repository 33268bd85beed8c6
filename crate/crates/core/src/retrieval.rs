//! Ranking a video pool for a task-name query.
//!
//! Three scorers: global matching (mean clip/query F), step aggregation
//! (mean over schema steps of the best clip F, interpolated with global
//! matching by lambda) and multi-source aggregation over edited schemata of
//! similar known tasks, weighted by task similarity.

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Schema, SchemaLibrary, TaskRecord, VideoCorpus, VideoRecord};
use crate::editing::{edit_schema, EditParams, EditTask, EditTrace};
use crate::error::{Error, Result};
use crate::scoring::{embed_checked, Matcher, ScorerProvider, TextSpace};
use crate::similarity::{profiles, top_r_sources, SimilarityScore};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Global,
    StepAgg,
    Ier,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::Global, Mode::StepAgg, Mode::Ier];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Global => "global",
            Mode::StepAgg => "step_agg",
            Mode::Ier => "ier",
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "global" => Ok(Mode::Global),
            "step_agg" => Ok(Mode::StepAgg),
            "ier" => Ok(Mode::Ier),
            other => Err(Error::invalid("mode", format!("{other:?} (expected global, step_agg or ier)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalParams {
    pub lambda: f64,
    /// Number of source tasks in ier mode.
    pub r: usize,
    /// Divide the weighted schema sum by the sum of g instead of R.
    pub normalize_g: bool,
    /// Videos at the top of the list that get a per-step alignment.
    pub explain_top_k: usize,
}

impl Default for RetrievalParams {
    fn default() -> Self {
        Self {
            lambda: 0.6,
            r: 1,
            normalize_g: false,
            explain_top_k: 5,
        }
    }
}

impl RetrievalParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::invalid("lambda", format!("{} is outside [0, 1]", self.lambda)));
        }
        if self.r == 0 {
            return Err(Error::invalid("r", "must be at least 1"));
        }
        Ok(())
    }
}

/// Mean clip score. Summed in ascending order, so the value is the same
/// bits whatever order the clips come in.
pub fn m_task_from(fs: &[f64]) -> f64 {
    let mut sorted = fs.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.iter().sum::<f64>() / fs.len() as f64
}

/// Step term from an F matrix (`fs[step][clip]`): mean over steps
/// of the best clip. Also returns each step's argmax clip (first on ties).
pub fn m_step_from(fs: &[Vec<f64>]) -> (f64, Vec<(usize, f64)>) {
    let mut sum = 0.0;
    let mut best = Vec::with_capacity(fs.len());
    for row in fs {
        let mut arg = 0;
        for (j, &f) in row.iter().enumerate() {
            if f > row[arg] {
                arg = j;
            }
        }
        sum += row[arg];
        best.push((arg, row[arg]));
    }
    (sum / fs.len() as f64, best)
}

pub fn m_agg(m_task: f64, m_step: f64, lambda: f64) -> f64 {
    (1.0 - lambda) * m_task + lambda * m_step
}

/// `(1 - lambda) m_task + lambda / divisor * sum_s g_s m_step_s`,
/// summed in source order. The divisor is R (or the sum of g when
/// normalising).
pub fn m_unseen(m_task: f64, weighted: &[(f64, f64)], lambda: f64, normalize_g: bool) -> f64 {
    if weighted.is_empty() {
        return m_task;
    }
    let g_sum = weighted.iter().map(|(g, _)| g).sum::<f64>();
    // a non-positive weight sum cannot normalise; fall back to R
    let divisor = if normalize_g && g_sum > 0.0 {
        g_sum
    } else {
        weighted.len() as f64
    };
    let mut sum = 0.0;
    for (g, m) in weighted {
        sum += g * m;
    }
    (1.0 - lambda) * m_task + lambda / divisor * sum
}

/// One schema feeding the step term, with its similarity weight.
#[derive(Debug, Clone, PartialEq)]
pub struct PlannedSchema {
    pub task_id: String,
    pub similarity: Option<SimilarityScore>,
    pub schema: Schema,
    pub trace: Option<EditTrace>,
    sq_norms: Vec<f64>,
}

impl PlannedSchema {
    fn new(task_id: String, similarity: Option<SimilarityScore>, schema: Schema, trace: Option<EditTrace>, matcher: &Matcher) -> Self {
        let sq_norms = schema.steps().map(|s| matcher.prepare(&s.embedding)).collect();
        Self {
            task_id,
            similarity,
            schema,
            trace,
            sq_norms,
        }
    }

    pub fn weight(&self) -> f64 {
        self.similarity.map_or(1.0, |s| s.g)
    }
}

/// Everything needed to score videos for one query, independent of lambda.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryPlan {
    pub query: String,
    pub query_task_id: Option<String>,
    pub mode: Mode,
    pub query_embedding: Vec<f32>,
    query_sq: f64,
    pub schemas: Vec<PlannedSchema>,
    pub matcher: Matcher,
}

/// Inputs for planning a query.
pub struct PlanContext<'a> {
    pub provider: &'a dyn ScorerProvider,
    pub matcher: Matcher,
    pub library: Option<&'a SchemaLibrary>,
    /// Known tasks eligible as sources, with names (and images if any).
    /// Defaults to the library's schemata named by its meta table.
    pub sources: Option<&'a [TaskRecord]>,
    pub edit: EditParams,
    pub r: usize,
}

/// Resolves the schemata a query needs: none for global mode, the task's
/// own schema for step_agg, and edited schemata of the top-R similar known
/// tasks for ier. A source whose edit deletes every step is dropped.
pub fn plan_query(ctx: &PlanContext, target: &TaskRecord, mode: Mode) -> Result<QueryPlan> {
    let q = embed_checked(ctx.provider, TextSpace::Joint, &[target.name.as_str()])?;
    let query_embedding = q.into_iter().next().expect("one embedding");
    let query_sq = ctx.matcher.prepare(&query_embedding);
    if query_sq == 0.0 {
        return Err(Error::ZeroNorm);
    }
    let mut plan = QueryPlan {
        query: target.name.clone(),
        query_task_id: Some(target.task_id.clone()),
        mode,
        query_embedding,
        query_sq,
        schemas: Vec::new(),
        matcher: ctx.matcher,
    };
    let library = || ctx.library.ok_or_else(|| Error::invalid("retrieval", format!("mode {} needs a schema library", mode.as_str())));
    match mode {
        Mode::Global => {}
        Mode::StepAgg => {
            let schema = library()?
                .get(&target.task_id)
                .ok_or_else(|| Error::invalid("retrieval", format!("no schema for task {}", target.task_id)))?;
            plan.schemas
                .push(PlannedSchema::new(target.task_id.clone(), None, schema.clone(), None, &ctx.matcher));
        }
        Mode::Ier => {
            if ctx.r == 0 {
                return Err(Error::invalid("r", "must be at least 1"));
            }
            let lib = library()?;
            let owned;
            let candidates: &[TaskRecord] = match ctx.sources {
                Some(s) => s,
                None => {
                    owned = library_tasks(lib)?;
                    &owned
                }
            };
            let candidates: Vec<&TaskRecord> = candidates.iter().filter(|t| lib.get(&t.task_id).is_some()).collect();
            let known = profiles(ctx.provider, candidates.iter().copied())?;
            let target_profile = profiles(ctx.provider, [target])?.remove(0);
            let chosen = top_r_sources(&target_profile, &known, ctx.r);
            let target_edit = EditTask {
                task_id: &target.task_id,
                name: &target.name,
                main_object: target.main_object.as_deref(),
            };
            for (profile, sim) in chosen {
                let record = candidates
                    .iter()
                    .find(|t| t.task_id == profile.task_id)
                    .expect("profiles come from candidates");
                let source_edit = EditTask {
                    task_id: &record.task_id,
                    name: &record.name,
                    main_object: record.main_object.as_deref(),
                };
                let source_schema = lib.get(&record.task_id).expect("filtered on schema presence");
                match edit_schema(ctx.provider, source_schema, &source_edit, &target_edit, &ctx.edit) {
                    Ok((schema, trace)) => plan.schemas.push(PlannedSchema::new(
                        record.task_id.clone(),
                        Some(sim),
                        schema,
                        Some(trace),
                        &ctx.matcher,
                    )),
                    Err(Error::EmptyEditedSchema { beta }) => {
                        log::warn!(
                            "{}: edit from {} deleted every step at beta = {beta}; source dropped",
                            target.name,
                            record.task_id
                        );
                    }
                    Err(e) => return Err(e),
                }
            }
            if plan.schemas.is_empty() {
                log::warn!("{}: no usable source schema, falling back to global matching", target.name);
            }
        }
    }
    Ok(plan)
}

/// Tasks named in a library's meta table that have a schema, all known.
pub fn library_tasks(lib: &SchemaLibrary) -> Result<Vec<TaskRecord>> {
    lib.schemas
        .keys()
        .map(|id| {
            let name = lib
                .meta
                .task_names
                .get(id)
                .ok_or_else(|| Error::UnknownTask(id.clone()))?;
            Ok(TaskRecord::new(id.clone(), name.clone(), crate::corpus::Partition::Known))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Alignment {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
    pub step: String,
    pub clip_id: String,
    pub f: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedEntry {
    pub video_id: String,
    pub score: f64,
    pub m_task: f64,
    /// One value per schema, in source order.
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub m_step: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub alignment: Option<Vec<Alignment>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceInfo {
    pub task_id: String,
    pub schema_size: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub similarity: Option<SimilarityScore>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedList {
    pub query: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub query_task_id: Option<String>,
    pub mode: Mode,
    pub results: Vec<RankedEntry>,
    #[serde(default)]
    pub sources: Vec<SourceInfo>,
    #[serde(default)]
    pub config: serde_json::Value,
}

impl RankedList {
    pub fn video_ids(&self) -> impl Iterator<Item = &str> {
        self.results.iter().map(|e| e.video_id.as_str())
    }
}

/// Descending score, ties to the smaller video id.
pub fn rank_order(a: (&str, f64), b: (&str, f64)) -> Ordering {
    b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0))
}

struct VideoScores {
    m_task: f64,
    m_step: Vec<f64>,
    argmax: Vec<Vec<(usize, f64)>>,
}

fn score_video(plan: &QueryPlan, video: &VideoRecord) -> Result<VideoScores> {
    let m = &plan.matcher;
    let dim = plan.query_embedding.len();
    let clip_sq: Vec<f64> = video
        .clips
        .iter()
        .map(|c| {
            if c.embedding.len() != dim {
                return Err(Error::SpaceMismatch(format!(
                    "clip {} has dimension {}, query has {dim}",
                    c.clip_id,
                    c.embedding.len()
                )));
            }
            Ok(m.prepare(&c.embedding))
        })
        .collect::<Result<_>>()?;
    let fs: Vec<f64> = video
        .clips
        .iter()
        .zip(&clip_sq)
        .map(|(c, &n)| m.score_with(&c.embedding, n, &plan.query_embedding, plan.query_sq))
        .collect();
    let m_task = m_task_from(&fs);
    let mut m_step = Vec::with_capacity(plan.schemas.len());
    let mut argmax = Vec::with_capacity(plan.schemas.len());
    for s in &plan.schemas {
        let matrix: Vec<Vec<f64>> = s
            .schema
            .steps()
            .zip(&s.sq_norms)
            .map(|(step, &sn)| {
                video
                    .clips
                    .iter()
                    .zip(&clip_sq)
                    .map(|(c, &cn)| m.score_with(&c.embedding, cn, &step.embedding, sn))
                    .collect()
            })
            .collect();
        let (v, best) = m_step_from(&matrix);
        m_step.push(v);
        argmax.push(best);
    }
    Ok(VideoScores { m_task, m_step, argmax })
}

/// Scores every pool video under the plan (in parallel on the current
/// rayon pool) and sorts. Reductions run in a fixed order, so the result
/// does not depend on the number of workers.
pub fn rank_pool(plan: &QueryPlan, pool: &VideoCorpus, params: &RetrievalParams) -> Result<RankedList> {
    params.validate()?;
    if pool.is_empty() {
        return Err(Error::invalid("pool", "no videos to rank"));
    }
    let scored: Vec<VideoScores> = pool.videos().par_iter().map(|v| score_video(plan, v)).collect::<Result<_>>()?;
    let mut order: Vec<(usize, f64)> = scored
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let score = match plan.mode {
                Mode::Global => s.m_task,
                Mode::StepAgg => m_agg(s.m_task, s.m_step[0], params.lambda),
                Mode::Ier => {
                    let weighted: Vec<(f64, f64)> = plan
                        .schemas
                        .iter()
                        .zip(&s.m_step)
                        .map(|(p, &m)| (p.weight(), m))
                        .collect();
                    m_unseen(s.m_task, &weighted, params.lambda, params.normalize_g)
                }
            };
            (i, score)
        })
        .collect();
    let videos = pool.videos();
    order.sort_by(|a, b| rank_order((&videos[a.0].video_id, a.1), (&videos[b.0].video_id, b.1)));

    let results = order
        .into_iter()
        .enumerate()
        .map(|(rank, (i, score))| {
            let v = &videos[i];
            let s = &scored[i];
            let alignment = (rank < params.explain_top_k && !plan.schemas.is_empty()).then(|| {
                let many = plan.schemas.len() > 1 || plan.mode == Mode::Ier;
                plan.schemas
                    .iter()
                    .zip(&s.argmax)
                    .flat_map(|(p, best)| {
                        p.schema.steps().zip(best).map(move |(step, &(clip, f))| Alignment {
                            source: many.then(|| p.task_id.clone()),
                            step: step.text.clone(),
                            clip_id: v.clips[clip].clip_id.clone(),
                            f,
                        })
                    })
                    .collect()
            });
            RankedEntry {
                video_id: v.video_id.clone(),
                score,
                m_task: s.m_task,
                m_step: s.m_step.clone(),
                alignment,
            }
        })
        .collect();

    Ok(RankedList {
        query: plan.query.clone(),
        query_task_id: plan.query_task_id.clone(),
        mode: plan.mode,
        results,
        sources: plan
            .schemas
            .iter()
            .map(|p| SourceInfo {
                task_id: p.task_id.clone(),
                schema_size: p.schema.len(),
                similarity: p.similarity,
            })
            .collect(),
        config: serde_json::Value::Null,
    })
}
