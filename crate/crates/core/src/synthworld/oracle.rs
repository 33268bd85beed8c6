//! Brute-force reference ranking. Deliberately shares nothing with the
//! retrieval module: scores are recomputed from raw vectors with plain
//! loops, sources are chosen by a full sort, and the ordering is rebuilt
//! here. Only the schema editor is reused, since editing is not what the
//! oracle checks.

use crate::corpus::{SchemaLibrary, TaskRecord, VideoCorpus};
use crate::editing::{edit_schema, EditParams, EditTask};
use crate::error::{Error, Result};
use crate::retrieval::Mode;
use crate::scoring::{ScorerProvider, TextSpace};

#[derive(Debug, Clone)]
pub struct OracleQuery<'a> {
    pub task: &'a TaskRecord,
    pub mode: Mode,
    pub lambda: f64,
    pub r: usize,
    pub edit: EditParams,
}

fn cos<A: Copy + Into<f64>, B: Copy + Into<f64>>(a: &[A], b: &[B]) -> f64 {
    let mut ab = 0.0;
    let mut aa = 0.0;
    let mut bb = 0.0;
    for i in 0..a.len() {
        let x: f64 = a[i].into();
        let y: f64 = b[i].into();
        ab += x * y;
        aa += x * x;
        bb += y * y;
    }
    let c = ab / (aa * bb).sqrt();
    c.max(-1.0).min(1.0)
}

fn one(provider: &dyn ScorerProvider, space: TextSpace, text: &str) -> Result<Vec<f32>> {
    provider
        .embed_text(space, &[text])?
        .pop()
        .ok_or_else(|| Error::Provider("empty embedding batch".into()))
}

/// Ranks `pool` for one query; returns `(video_id, score)` best first.
/// `sources` are the known tasks eligible for ier.
pub fn oracle_rank(
    provider: &dyn ScorerProvider,
    library: Option<&SchemaLibrary>,
    sources: &[TaskRecord],
    query: &OracleQuery,
    pool: &VideoCorpus,
) -> Result<Vec<(String, f64)>> {
    let q = one(provider, TextSpace::Joint, &query.task.name)?;

    // (weight, step embeddings) per schema
    let mut schemata: Vec<(f64, Vec<Vec<f32>>)> = Vec::new();
    match query.mode {
        Mode::Global => {}
        Mode::StepAgg => {
            let s = library
                .and_then(|l| l.get(&query.task.task_id))
                .ok_or_else(|| Error::UnknownTask(query.task.task_id.clone()))?;
            schemata.push((1.0, s.entries().iter().map(|e| e.step.embedding.clone()).collect()));
        }
        Mode::Ier => {
            let lib = library.ok_or_else(|| Error::invalid("oracle", "ier needs a library"))?;
            let tq = one(provider, TextSpace::Sentence, &query.task.name)?;
            let mut scored = Vec::new();
            for s in sources {
                if s.task_id == query.task.task_id || lib.get(&s.task_id).is_none() {
                    continue;
                }
                let ts = one(provider, TextSpace::Sentence, &s.name)?;
                let mut g = cos(&tq, &ts);
                if let (Some(a), Some(b)) = (&query.task.image_embedding, &s.image_embedding) {
                    if a.len() == b.len() {
                        g = g.max(cos(a, b));
                    }
                }
                scored.push((g, s));
            }
            scored.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.task_id.cmp(&b.1.task_id)));
            let target = EditTask {
                task_id: &query.task.task_id,
                name: &query.task.name,
                main_object: query.task.main_object.as_deref(),
            };
            for (g, s) in scored.into_iter().take(query.r) {
                let source = EditTask {
                    task_id: &s.task_id,
                    name: &s.name,
                    main_object: s.main_object.as_deref(),
                };
                match edit_schema(provider, lib.get(&s.task_id).unwrap(), &source, &target, &query.edit) {
                    Ok((edited, _)) => {
                        schemata.push((g, edited.entries().iter().map(|e| e.step.embedding.clone()).collect()))
                    }
                    Err(Error::EmptyEditedSchema { .. }) => {}
                    Err(e) => return Err(e),
                }
            }
        }
    }

    let mut out = Vec::new();
    for v in pool.videos() {
        // ascending-order sum, as the engine promises clip-order independence
        let mut fq: Vec<f64> = v.clips.iter().map(|c| cos(&c.embedding, &q)).collect();
        fq.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut task_sum = 0.0;
        for f in fq {
            task_sum += f;
        }
        let m_task = task_sum / v.clips.len() as f64;
        let mut steps = Vec::new();
        for (g, embs) in &schemata {
            let mut total = 0.0;
            for e in embs {
                let mut best = f64::NEG_INFINITY;
                for c in &v.clips {
                    let f = cos(&c.embedding, e);
                    if f > best {
                        best = f;
                    }
                }
                total += best;
            }
            steps.push((*g, total / embs.len() as f64));
        }
        let score = match query.mode {
            Mode::Global => m_task,
            Mode::StepAgg => (1.0 - query.lambda) * m_task + query.lambda * steps[0].1,
            Mode::Ier if steps.is_empty() => m_task,
            Mode::Ier => {
                let mut acc = 0.0;
                for (g, m) in &steps {
                    acc += g * m;
                }
                (1.0 - query.lambda) * m_task + query.lambda / steps.len() as f64 * acc
            }
        };
        out.push((v.video_id.clone(), score));
    }
    out.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then_with(|| a.0.cmp(&b.0)));
    Ok(out)
}
