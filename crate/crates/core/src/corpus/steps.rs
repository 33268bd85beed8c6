use std::collections::HashMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::binary::EmbeddingMatrix;
use super::jsonl::{read_jsonl, write_jsonl};
use crate::error::{Error, Result};
use crate::scoring::{embed_checked, norm_sq, ScorerProvider, TaggedToken, TextSpace};

/// A candidate step sentence from the background corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepSentence {
    #[serde(rename = "id", alias = "step_id")]
    pub step_id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tokens: Option<Vec<TaggedToken>>,
    pub embedding: Vec<f32>,
}

impl StepSentence {
    pub fn new(step_id: impl Into<String>, text: impl Into<String>, embedding: Vec<f32>) -> Result<Self> {
        let step = Self {
            step_id: step_id.into(),
            text: text.into(),
            tokens: None,
            embedding,
        };
        step.validate()?;
        Ok(step)
    }

    pub fn validate(&self) -> Result<()> {
        if self.text.trim().is_empty() {
            return Err(Error::invalid("step", format!("{}: empty text", self.step_id)));
        }
        if let Some(tokens) = &self.tokens {
            if !tokens_round_trip(tokens, &self.text) {
                return Err(Error::invalid(
                    "step tokens",
                    format!("{}: token surfaces do not reassemble the text", self.step_id),
                ));
            }
        }
        Ok(())
    }

    pub fn with_tokens(mut self, tokens: Vec<TaggedToken>) -> Result<Self> {
        self.tokens = Some(tokens);
        self.validate()?;
        Ok(self)
    }

    pub fn words(&self) -> Vec<&str> {
        self.text.split_whitespace().collect()
    }
}

fn tokens_round_trip(tokens: &[TaggedToken], text: &str) -> bool {
    let mut words = text.split_whitespace();
    for t in tokens {
        if words.next() != Some(t.surface.as_str()) {
            return false;
        }
    }
    words.next().is_none()
}

#[derive(Debug, Clone, Default)]
pub struct StepLoadOptions {
    /// Binary embedding file for `embedding_ref` rows. Defaults to the
    /// companion file next to the JSONL.
    pub embeddings: Option<PathBuf>,
}

#[derive(Deserialize)]
struct StepLine {
    #[serde(alias = "step_id")]
    id: String,
    text: String,
    #[serde(default)]
    tokens: Option<Vec<TaggedToken>>,
    #[serde(default)]
    embedding: Option<Vec<f32>>,
    #[serde(default)]
    embedding_ref: Option<usize>,
}

/// The background step corpus B, sorted by step id.
#[derive(Debug, Clone)]
pub struct StepCorpus {
    steps: Vec<StepSentence>,
    sq_norms: Vec<f64>,
    index: HashMap<String, usize>,
    dim: usize,
}

impl PartialEq for StepCorpus {
    fn eq(&self, other: &Self) -> bool {
        self.steps == other.steps
    }
}

impl StepCorpus {
    pub fn from_steps(steps: Vec<StepSentence>) -> Result<Self> {
        Self::build(steps, Path::new("<memory>"))
    }

    fn build(mut steps: Vec<StepSentence>, origin: &Path) -> Result<Self> {
        if steps.is_empty() {
            return Err(Error::EmptyCorpus(origin.to_path_buf()));
        }
        steps.sort_by(|a, b| a.step_id.cmp(&b.step_id));
        let dim = steps[0].embedding.len();
        let mut index = HashMap::with_capacity(steps.len());
        let mut sq_norms = Vec::with_capacity(steps.len());
        for (i, s) in steps.iter().enumerate() {
            s.validate()?;
            if s.embedding.len() != dim || dim == 0 {
                return Err(Error::DimensionMismatch {
                    id: s.step_id.clone(),
                    expected: dim,
                    found: s.embedding.len(),
                });
            }
            let n = norm_sq(&s.embedding);
            if !(n > 0.0 && n.is_finite()) {
                return Err(Error::invalid("step embedding", format!("{}: zero or non-finite norm", s.step_id)));
            }
            if index.insert(s.step_id.clone(), i).is_some() {
                return Err(Error::DuplicateId(s.step_id.clone()));
            }
            sq_norms.push(n);
        }
        Ok(Self {
            steps,
            sq_norms,
            index,
            dim,
        })
    }

    /// Loads `steps.jsonl`. Embeddings come from inline arrays, from
    /// `embedding_ref` rows of the binary file, or, when neither is given
    /// and an embedder is supplied, from its joint text space.
    pub fn load(path: &Path, options: &StepLoadOptions, embedder: Option<&dyn ScorerProvider>) -> Result<Self> {
        let lines: Vec<(usize, StepLine)> = read_jsonl(path)?;
        if lines.is_empty() {
            return Err(Error::EmptyCorpus(path.to_path_buf()));
        }
        let matrix = resolve_matrix(path, options.embeddings.as_deref(), lines.iter().any(|(_, l)| l.embedding_ref.is_some()))?;
        let expected_dim = matrix
            .as_ref()
            .map(EmbeddingMatrix::dim)
            .or_else(|| lines.iter().find_map(|(_, l)| l.embedding.as_ref().map(Vec::len)));

        let mut steps = Vec::with_capacity(lines.len());
        let mut to_embed = Vec::new();
        for (_, line) in lines {
            let embedding = match (line.embedding, line.embedding_ref) {
                (Some(e), _) => Some(e),
                (None, Some(r)) => {
                    let row = matrix
                        .as_ref()
                        .and_then(|m| m.row(r))
                        .ok_or_else(|| Error::MissingEmbedding(line.id.clone()))?;
                    Some(row.to_vec())
                }
                (None, None) => None,
            };
            if let (Some(e), Some(d)) = (&embedding, expected_dim) {
                if e.len() != d {
                    return Err(Error::DimensionMismatch {
                        id: line.id,
                        expected: d,
                        found: e.len(),
                    });
                }
            }
            if embedding.is_none() {
                to_embed.push(steps.len());
            }
            steps.push(StepSentence {
                step_id: line.id,
                text: line.text,
                tokens: line.tokens,
                embedding: embedding.unwrap_or_default(),
            });
        }

        if !to_embed.is_empty() {
            let Some(provider) = embedder else {
                return Err(Error::MissingEmbedding(steps[to_embed[0]].step_id.clone()));
            };
            let texts: Vec<&str> = to_embed.iter().map(|&i| steps[i].text.as_str()).collect();
            let vectors = embed_checked(provider, TextSpace::Joint, &texts)?;
            for (i, v) in to_embed.into_iter().zip(vectors) {
                steps[i].embedding = v;
            }
        }
        Self::build(steps, path)
    }

    /// Writes JSONL with inline embeddings.
    pub fn save(&self, path: &Path) -> Result<()> {
        write_jsonl(path, &self.steps)
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn steps(&self) -> &[StepSentence] {
        &self.steps
    }

    /// Squared Euclidean norms, parallel to [`StepCorpus::steps`].
    pub fn sq_norms(&self) -> &[f64] {
        &self.sq_norms
    }

    pub fn get(&self, step_id: &str) -> Option<&StepSentence> {
        self.index.get(step_id).map(|&i| &self.steps[i])
    }

    pub fn position(&self, step_id: &str) -> Option<usize> {
        self.index.get(step_id).copied()
    }

    /// SHA-256 over ids, texts and embedding bits in id order.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.dim as u64).to_le_bytes());
        for s in &self.steps {
            h.update(s.step_id.as_bytes());
            h.update([0]);
            h.update(s.text.as_bytes());
            h.update([0]);
            for x in &s.embedding {
                h.update(x.to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }
}

pub(crate) fn resolve_matrix(jsonl: &Path, explicit: Option<&Path>, needed: bool) -> Result<Option<EmbeddingMatrix>> {
    if !needed {
        return Ok(None);
    }
    let path = match explicit {
        Some(p) => p.to_path_buf(),
        None => super::companion_bin(jsonl).ok_or_else(|| {
            Error::invalid(
                "embedding file",
                format!("{} uses embedding_ref but no companion .bin file was found", jsonl.display()),
            )
        })?,
    };
    EmbeddingMatrix::read(&path).map(Some)
}
