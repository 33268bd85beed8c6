//! Schema induction for known tasks.
//!
//! Per clip, the top-n steps by F are collected; their union is scored
//! against the task's videos, the best m are kept, near-duplicates are
//! merged by average-linkage clustering on cosine distance, and each
//! cluster contributes its best-scoring member.

use std::cmp::Ordering;
use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{
    filter_known_tasks, ClipRecord, ClusteringInfo, LibraryMeta, Provenance, Schema, SchemaEntry, SchemaLibrary,
    StepCorpus, TaskRegistry, VideoCorpus, VideoRecord,
};
use crate::error::{Error, Result};
use crate::scoring::{cosine_with_norms, Matcher};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InductionParams {
    pub per_clip_top_n: usize,
    pub per_task_top_m: usize,
    pub cluster_distance_threshold: f64,
    pub min_videos: usize,
    /// Average over all clips of the task at once instead of per video.
    pub pooled: bool,
}

impl Default for InductionParams {
    fn default() -> Self {
        Self {
            per_clip_top_n: 30,
            per_task_top_m: 100,
            cluster_distance_threshold: 0.10,
            min_videos: 20,
            pooled: false,
        }
    }
}

impl InductionParams {
    pub fn validate(&self) -> Result<()> {
        if self.per_clip_top_n == 0 || self.per_task_top_m == 0 {
            return Err(Error::invalid("induction params", "top-n and top-m must be positive"));
        }
        if !(self.cluster_distance_threshold >= 0.0) {
            return Err(Error::invalid("induction params", "cluster threshold must be non-negative"));
        }
        Ok(())
    }

    pub fn clustering_info(&self) -> ClusteringInfo {
        ClusteringInfo {
            linkage: "average".into(),
            metric: "cosine".into(),
            distance_threshold: self.cluster_distance_threshold,
        }
    }
}

/// Descending score, ties to the smaller index (the corpus is id-sorted,
/// so this is the lexicographic step id).
fn by_score_then_index(a: &(usize, f64), b: &(usize, f64)) -> Ordering {
    b.1.total_cmp(&a.1).then(a.0.cmp(&b.0))
}

fn check_space(clip: &ClipRecord, steps: &StepCorpus) -> Result<()> {
    if clip.embedding.len() != steps.dim() {
        return Err(Error::SpaceMismatch(format!(
            "clip {} has dimension {} but the step corpus has {}",
            clip.clip_id,
            clip.embedding.len(),
            steps.dim()
        )));
    }
    Ok(())
}

/// The `n` best steps for a clip as (corpus index, F), best first.
pub fn top_steps_for_clip(clip: &ClipRecord, steps: &StepCorpus, matcher: &Matcher, n: usize) -> Result<Vec<(usize, f64)>> {
    check_space(clip, steps)?;
    let cn = matcher.prepare(&clip.embedding);
    let mut scored: Vec<(usize, f64)> = steps
        .steps()
        .iter()
        .zip(steps.sq_norms())
        .enumerate()
        .map(|(i, (s, &sn))| {
            let sn = if matcher.normalize { sn } else { 1.0 };
            (i, matcher.score_with(&clip.embedding, cn, &s.embedding, sn))
        })
        .collect();
    if n < scored.len() {
        scored.select_nth_unstable_by(n, by_score_then_index);
        scored.truncate(n);
    }
    scored.sort_by(by_score_then_index);
    Ok(scored)
}

/// Score of one step embedding against a task's videos.
///
/// Per-video reading: mean over videos of the mean F over that video's
/// clips. `pooled` averages over all clips at once. Sums run in the given
/// video and clip order.
pub fn task_step_score(videos: &[&VideoRecord], step: &[f32], matcher: &Matcher, pooled: bool) -> Result<f64> {
    if videos.is_empty() {
        return Err(Error::invalid("task", "no videos to score against"));
    }
    let sn = matcher.prepare(step);
    let f = |c: &ClipRecord| -> Result<f64> {
        if c.embedding.len() != step.len() {
            return Err(Error::SpaceMismatch(format!("clip {} vs step dimension {}", c.clip_id, step.len())));
        }
        Ok(matcher.score_with(&c.embedding, matcher.prepare(&c.embedding), step, sn))
    };
    if pooled {
        let mut sum = 0.0;
        let mut count = 0usize;
        for v in videos {
            for c in &v.clips {
                sum += f(c)?;
                count += 1;
            }
        }
        return Ok(sum / count as f64);
    }
    let mut outer = 0.0;
    for v in videos {
        let mut inner = 0.0;
        for c in &v.clips {
            inner += f(c)?;
        }
        outer += inner / v.clips.len() as f64;
    }
    Ok(outer / videos.len() as f64)
}

/// Average-linkage agglomerative clustering on a precomputed distance
/// matrix. Clusters merge while their linkage distance is strictly below
/// `threshold`; the closest pair merges first, ties to the earliest pair.
/// Returns clusters as lists of item indices, each sorted, ordered by their
/// smallest member.
pub fn average_linkage(distances: &[Vec<f64>], threshold: f64) -> Vec<Vec<usize>> {
    let n = distances.len();
    let mut clusters: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    // linkage between live clusters, indexed by position in `clusters`
    let mut link: Vec<Vec<f64>> = distances.to_vec();
    loop {
        let mut best: Option<(usize, usize, f64)> = None;
        for a in 0..clusters.len() {
            for b in a + 1..clusters.len() {
                let d = link[a][b];
                if d < threshold && best.is_none_or(|(_, _, bd)| d < bd) {
                    best = Some((a, b, d));
                }
            }
        }
        let Some((a, b, _)) = best else {
            break;
        };
        let (na, nb) = (clusters[a].len() as f64, clusters[b].len() as f64);
        for c in 0..clusters.len() {
            if c != a && c != b {
                let d = (na * link[a][c] + nb * link[b][c]) / (na + nb);
                link[a][c] = d;
                link[c][a] = d;
            }
        }
        let moved = clusters.remove(b);
        clusters[a].extend(moved);
        clusters[a].sort_unstable();
        link.remove(b);
        for row in &mut link {
            row.remove(b);
        }
    }
    clusters.sort_by_key(|c| c[0]);
    clusters
}

/// Induces the schema of one task from its videos.
pub fn induce_schema(
    task_id: &str,
    videos: &VideoCorpus,
    steps: &StepCorpus,
    matcher: &Matcher,
    params: &InductionParams,
) -> Result<Schema> {
    params.validate()?;
    let task_videos: Vec<&VideoRecord> = videos.videos_for_task(task_id).collect();
    if task_videos.is_empty() {
        return Err(Error::invalid("task", format!("{task_id} has no videos")));
    }

    let clips: Vec<&ClipRecord> = task_videos.iter().flat_map(|v| &v.clips).collect();
    let per_clip: Vec<Vec<(usize, f64)>> = clips
        .par_iter()
        .map(|c| top_steps_for_clip(c, steps, matcher, params.per_clip_top_n))
        .collect::<Result<_>>()?;
    let candidates: BTreeSet<usize> = per_clip.into_iter().flatten().map(|(i, _)| i).collect();
    if candidates.is_empty() {
        return Err(Error::EmptyCandidates(task_id.to_string()));
    }

    let corpus = steps.steps();
    let mut scored: Vec<(usize, f64)> = candidates
        .into_par_iter()
        .map(|i| Ok((i, task_step_score(&task_videos, &corpus[i].embedding, matcher, params.pooled)?)))
        .collect::<Result<_>>()?;
    scored.sort_by(by_score_then_index);
    scored.truncate(params.per_task_top_m);

    let norms = steps.sq_norms();
    let distances: Vec<Vec<f64>> = scored
        .iter()
        .map(|&(i, _)| {
            scored
                .iter()
                .map(|&(j, _)| {
                    if i == j {
                        0.0
                    } else {
                        1.0 - cosine_with_norms(&corpus[i].embedding, norms[i], &corpus[j].embedding, norms[j])
                    }
                })
                .collect()
        })
        .collect();
    let clusters = average_linkage(&distances, params.cluster_distance_threshold);

    // `scored` is best-first, so each cluster's smallest position is its
    // highest-scoring member
    let entries = clusters
        .iter()
        .map(|c| {
            let (i, score) = scored[c[0]];
            SchemaEntry {
                step: corpus[i].clone(),
                score,
            }
        })
        .collect();
    Schema::new(
        task_id,
        entries,
        Provenance::Induced {
            clustering: Some(params.clustering_info()),
        },
    )
}

/// Induces schemata for every known task with at least `min_videos`
/// videos. Tasks run in parallel; the library is keyed by task id.
pub fn induce_library(
    registry: &TaskRegistry,
    videos: &VideoCorpus,
    steps: &StepCorpus,
    matcher: &Matcher,
    params: &InductionParams,
) -> Result<SchemaLibrary> {
    params.validate()?;
    if let Some(clip) = videos.videos().first().and_then(|v| v.clips.first()) {
        check_space(clip, steps)?;
    }
    let filtered = filter_known_tasks(registry, videos, params.min_videos);
    let known: Vec<&str> = filtered.known().map(|t| t.task_id.as_str()).collect();
    let schemas: Vec<Schema> = known
        .par_iter()
        .map(|t| induce_schema(t, videos, steps, matcher, params))
        .collect::<Result<_>>()?;

    let mut lib = SchemaLibrary {
        meta: LibraryMeta {
            corpus_fingerprint: steps.fingerprint(),
            params: Default::default(),
            task_names: registry.iter().map(|t| (t.task_id.clone(), t.name.clone())).collect(),
        },
        ..Default::default()
    };
    if let serde_json::Value::Object(m) = serde_json::to_value(params)? {
        lib.meta.params.extend(m);
    }
    lib.meta.params.insert("scoring.normalize".into(), matcher.normalize.into());
    for s in schemas {
        lib.insert(s);
    }
    let mean = if lib.is_empty() {
        0.0
    } else {
        lib.schemas.values().map(Schema::len).sum::<usize>() as f64 / lib.len() as f64
    };
    log::info!("induced {} schemata, mean size {mean:.1}", lib.len());
    Ok(lib)
}
