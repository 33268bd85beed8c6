//! Task-to-task similarity G = max(G_txt, G_vis) and top-R source
//! selection for unseen tasks.

use std::cmp::Ordering;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{read_jsonl, EmbeddingMatrix, TaskRecord, TaskRegistry};
use crate::error::{Error, Result};
use crate::scoring::{cosine, cosine_with_norms, embed_checked, norm_sq, ScorerProvider, TextSpace};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimilarityScore {
    pub g_txt: f64,
    pub g_vis: Option<f64>,
    pub g: f64,
}

impl SimilarityScore {
    pub fn new(g_txt: f64, g_vis: Option<f64>) -> Self {
        let g = match g_vis {
            Some(v) => g_txt.max(v),
            None => g_txt,
        };
        Self { g_txt, g_vis, g }
    }
}

/// What similarity needs to know about a task: its sentence-space name
/// embedding and, when images were ingested, its mean image embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskProfile {
    pub task_id: String,
    pub name: String,
    text: Vec<f32>,
    text_sq: f64,
    image: Option<Vec<f64>>,
}

impl TaskProfile {
    pub fn image(&self) -> Option<&[f64]> {
        self.image.as_deref()
    }
}

/// Profiles for a batch of tasks; names are embedded in one provider call.
pub fn profiles<'a>(provider: &dyn ScorerProvider, tasks: impl IntoIterator<Item = &'a TaskRecord>) -> Result<Vec<TaskProfile>> {
    let tasks: Vec<&TaskRecord> = tasks.into_iter().collect();
    let names: Vec<&str> = tasks.iter().map(|t| t.name.as_str()).collect();
    let vectors = embed_checked(provider, TextSpace::Sentence, &names)?;
    tasks
        .into_iter()
        .zip(vectors)
        .map(|(t, text)| {
            let text_sq = norm_sq(&text);
            if text_sq == 0.0 {
                return Err(Error::ZeroNorm);
            }
            Ok(TaskProfile {
                task_id: t.task_id.clone(),
                name: t.name.clone(),
                text,
                text_sq,
                image: t.image_embedding.clone(),
            })
        })
        .collect()
}

/// Cosine of the sentence embeddings of two raw task names.
pub fn g_txt(provider: &dyn ScorerProvider, a: &str, b: &str) -> Result<f64> {
    let v = embed_checked(provider, TextSpace::Sentence, &[a, b])?;
    cosine(&v[0], &v[1])
}

/// Unit-normalised mean of a task's image embeddings. `None` for an empty
/// set or a zero mean.
pub fn mean_image(images: &[Vec<f64>]) -> Option<Vec<f64>> {
    let first = images.first()?;
    let mut mean = vec![0.0; first.len()];
    for img in images {
        if img.len() != mean.len() {
            return None;
        }
        for (m, x) in mean.iter_mut().zip(img) {
            *m += x;
        }
    }
    let n = images.len() as f64;
    mean.iter_mut().for_each(|m| *m /= n);
    let len = norm_sq(&mean).sqrt();
    (len > 0.0).then(|| mean.into_iter().map(|m| m / len).collect())
}

/// Cosine of the mean image embeddings of two image sets; absent when
/// either set is empty.
pub fn g_vis(a: &[Vec<f64>], b: &[Vec<f64>]) -> Option<f64> {
    let (ma, mb) = (mean_image(a)?, mean_image(b)?);
    cosine(&ma, &mb).ok()
}

pub fn similarity(a: &TaskProfile, b: &TaskProfile) -> SimilarityScore {
    let txt = cosine_with_norms(&a.text, a.text_sq, &b.text, b.text_sq);
    let vis = match (&a.image, &b.image) {
        (Some(x), Some(y)) if x.len() == y.len() => cosine(x, y).ok(),
        _ => None,
    };
    SimilarityScore::new(txt, vis)
}

/// The `r` most similar candidates to `target` by g, best first, ties to
/// the smaller task id. The target itself is never returned.
pub fn top_r_sources<'a>(
    target: &TaskProfile,
    candidates: &'a [TaskProfile],
    r: usize,
) -> Vec<(&'a TaskProfile, SimilarityScore)> {
    let mut scored: Vec<(&TaskProfile, SimilarityScore)> = candidates
        .iter()
        .filter(|c| c.task_id != target.task_id)
        .map(|c| (c, similarity(target, c)))
        .collect();
    scored.sort_by(|a, b| match b.1.g.total_cmp(&a.1.g) {
        Ordering::Equal => a.0.task_id.cmp(&b.0.task_id),
        o => o,
    });
    scored.truncate(r);
    scored
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskImagesLine {
    pub task_id: String,
    #[serde(default)]
    pub images: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding_refs: Option<Vec<usize>>,
}

/// Reads `task_images.jsonl` and sets each listed task's
/// `image_embedding` to the normalised mean of its images. Rows come from
/// `embedding_refs` into the companion binary file when present, otherwise
/// from the provider's image encoder.
pub fn attach_images(
    registry: &mut TaskRegistry,
    manifest: &Path,
    embeddings: Option<&Path>,
    provider: Option<&dyn ScorerProvider>,
) -> Result<usize> {
    let lines: Vec<(usize, TaskImagesLine)> = read_jsonl(manifest)?;
    let needs_matrix = lines.iter().any(|(_, l)| l.embedding_refs.is_some());
    let matrix = if needs_matrix {
        let path = match embeddings {
            Some(p) => p.to_path_buf(),
            None => manifest.with_extension("bin"),
        };
        Some(EmbeddingMatrix::read(&path)?)
    } else {
        None
    };
    let mut attached = 0;
    for (_, line) in lines {
        let vectors: Vec<Vec<f64>> = match (&line.embedding_refs, &matrix) {
            (Some(refs), Some(m)) => refs
                .iter()
                .map(|&r| {
                    m.row(r)
                        .map(|row| row.iter().map(|&x| x as f64).collect())
                        .ok_or_else(|| Error::MissingEmbedding(format!("{} image row {r}", line.task_id)))
                })
                .collect::<Result<_>>()?,
            _ if line.images.is_empty() => Vec::new(),
            _ => {
                let p = provider.ok_or_else(|| {
                    Error::invalid("task images", format!("{}: no embeddings and no image encoder", line.task_id))
                })?;
                let refs: Vec<&str> = line.images.iter().map(String::as_str).collect();
                p.require(crate::scoring::Capability::ImageEmbed)?;
                p.embed_images(&refs)?
                    .into_iter()
                    .map(|v| v.into_iter().map(f64::from).collect())
                    .collect()
            }
        };
        let task = registry
            .get_mut(&line.task_id)
            .ok_or_else(|| Error::UnknownTask(line.task_id.clone()))?;
        task.image_embedding = mean_image(&vectors);
        attached += usize::from(task.image_embedding.is_some());
    }
    Ok(attached)
}
