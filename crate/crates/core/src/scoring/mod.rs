//! Matching function F and every model-backed judgment (QA compatibility,
//! masked-LM fills, POS tags, image embeddings) behind one provider trait.
//!
//! Three backends implement [`ScorerProvider`]:
//! - [`SyntheticProvider`]: hashed bag-of-words text embeddings, a closed
//!   POS lexicon and a table-driven masked LM. Deterministic, no models.
//! - [`FileProvider`]: replays recorded provider responses from a JSON file.
//! - [`SidecarProvider`]: HTTP client for a model sidecar, with an on-disk
//!   response cache keyed by endpoint and request hash.

mod file;
mod lexicon;
mod sidecar;
mod synthetic;

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::corpus::{ClipRecord, StepSentence};
use crate::error::{Error, Result};

pub use file::{FileProvider, RecordedFill, RecordedResponses};
pub use lexicon::{is_noun_tag, word_core, Lexicon, UNKNOWN_TAG};
pub use sidecar::{SidecarOptions, SidecarProvider};
pub use synthetic::{bow_tokens, MlmRule, SyntheticFixture, SyntheticProvider, DEFAULT_SYNTHETIC_DIM};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Capability {
    JointEmbedText,
    SentenceEmbed,
    QaEmbed,
    Mlm,
    PosTag,
    ImageEmbed,
}

impl Capability {
    pub const ALL: [Capability; 6] = [
        Capability::JointEmbedText,
        Capability::SentenceEmbed,
        Capability::QaEmbed,
        Capability::Mlm,
        Capability::PosTag,
        Capability::ImageEmbed,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Capability::JointEmbedText => "joint_embed_text",
            Capability::SentenceEmbed => "sentence_embed",
            Capability::QaEmbed => "qa_embed",
            Capability::Mlm => "mlm",
            Capability::PosTag => "pos_tag",
            Capability::ImageEmbed => "image_embed",
        }
    }
}

impl fmt::Display for Capability {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Embedding space a text is projected into.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TextSpace {
    /// Text tower of the joint video-text model (the space of F).
    Joint,
    /// General sentence encoder, used for task-name similarity.
    Sentence,
    QaQuestion,
    QaAnswer,
}

impl TextSpace {
    pub fn as_str(self) -> &'static str {
        match self {
            TextSpace::Joint => "joint",
            TextSpace::Sentence => "sentence",
            TextSpace::QaQuestion => "qa_question",
            TextSpace::QaAnswer => "qa_answer",
        }
    }

    pub fn capability(self) -> Capability {
        match self {
            TextSpace::Joint => Capability::JointEmbedText,
            TextSpace::Sentence => Capability::SentenceEmbed,
            TextSpace::QaQuestion | TextSpace::QaAnswer => Capability::QaEmbed,
        }
    }
}

/// A word with its Penn-tagset part-of-speech tag.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaggedToken {
    pub surface: String,
    pub tag: String,
}

impl TaggedToken {
    pub fn new(surface: impl Into<String>, tag: impl Into<String>) -> Self {
        Self {
            surface: surface.into(),
            tag: tag.into(),
        }
    }

    pub fn is_noun(&self) -> bool {
        is_noun_tag(&self.tag)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FillCandidate {
    pub word: String,
    pub log_prob: f64,
}

/// Candidates for one masked word, best first, plus the log-probability the
/// model assigns to the word that was masked out.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskedFillResult {
    pub candidates: Vec<FillCandidate>,
    pub original_log_prob: f64,
}

impl MaskedFillResult {
    /// Validates and orders a raw provider answer. The sort is stable, so
    /// equal log-probs keep the provider's order.
    pub fn new(mut candidates: Vec<FillCandidate>, original_log_prob: f64) -> Result<Self> {
        if candidates.is_empty() {
            return Err(Error::Provider("masked fill returned no candidates".into()));
        }
        if !original_log_prob.is_finite() || candidates.iter().any(|c| !c.log_prob.is_finite()) {
            return Err(Error::Provider("masked fill returned a non-finite log-prob".into()));
        }
        candidates.sort_by(|a, b| b.log_prob.total_cmp(&a.log_prob));
        Ok(Self {
            candidates,
            original_log_prob,
        })
    }
}

/// Source of every model judgment the engine consumes.
///
/// Implementations must be deterministic: identical calls return
/// bit-identical results, regardless of thread interleaving. All methods
/// are batch-shaped; element-wise helpers below are thin wrappers.
pub trait ScorerProvider: Send + Sync {
    fn name(&self) -> &str;

    fn capabilities(&self) -> &BTreeSet<Capability>;

    fn embed_text(&self, space: TextSpace, texts: &[&str]) -> Result<Vec<Vec<f32>>>;

    /// `mask_word_index` addresses a whitespace-delimited word of `text`.
    fn mlm_fill(&self, text: &str, mask_word_index: usize, top_k: usize) -> Result<MaskedFillResult>;

    fn pos_tag(&self, texts: &[&str]) -> Result<Vec<Vec<TaggedToken>>>;

    fn embed_images(&self, refs: &[&str]) -> Result<Vec<Vec<f32>>>;

    fn has(&self, capability: Capability) -> bool {
        self.capabilities().contains(&capability)
    }

    fn require(&self, capability: Capability) -> Result<()> {
        if self.has(capability) {
            Ok(())
        } else {
            Err(Error::MissingCapability(capability))
        }
    }
}

pub fn dot<T: Copy + Into<f64>>(u: &[T], v: &[T]) -> f64 {
    u.iter().zip(v).map(|(&a, &b)| a.into() * b.into()).sum()
}

pub fn norm_sq<T: Copy + Into<f64>>(u: &[T]) -> f64 {
    u.iter()
        .map(|&a| {
            let a: f64 = a.into();
            a * a
        })
        .sum()
}

pub fn norm<T: Copy + Into<f64>>(u: &[T]) -> f64 {
    norm_sq(u).sqrt()
}

/// Cosine from precomputed squared norms: `dot / sqrt(|u|^2 |v|^2)`.
/// Identical vectors give exactly 1.0. Clamped to [-1, 1]; callers
/// guarantee non-zero norms.
#[inline]
pub fn cosine_with_norms<T: Copy + Into<f64>>(u: &[T], u_sq: f64, v: &[T], v_sq: f64) -> f64 {
    (dot(u, v) / (u_sq * v_sq).sqrt()).clamp(-1.0, 1.0)
}

pub fn cosine<T: Copy + Into<f64>>(u: &[T], v: &[T]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::DimensionMismatch {
            id: "cosine operand".into(),
            expected: u.len(),
            found: v.len(),
        });
    }
    let (nu, nv) = (norm_sq(u), norm_sq(v));
    if nu == 0.0 || nv == 0.0 {
        return Err(Error::ZeroNorm);
    }
    Ok(cosine_with_norms(u, nu, v, nv))
}

/// The clip/sentence matching function F.
///
/// With `normalize` set (the default) F is cosine similarity; otherwise it
/// is the raw dot product of the stored vectors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Matcher {
    pub normalize: bool,
}

impl Default for Matcher {
    fn default() -> Self {
        Self { normalize: true }
    }
}

impl Matcher {
    pub fn new(normalize: bool) -> Self {
        Self { normalize }
    }

    /// The per-vector factor `score_with` expects alongside each operand
    /// (the squared norm when normalising).
    #[inline]
    pub fn prepare(&self, v: &[f32]) -> f64 {
        if self.normalize {
            norm_sq(v)
        } else {
            1.0
        }
    }

    #[inline]
    pub fn score_with(&self, u: &[f32], u_sq: f64, v: &[f32], v_sq: f64) -> f64 {
        if self.normalize {
            cosine_with_norms(u, u_sq, v, v_sq)
        } else {
            dot(u, v)
        }
    }

    pub fn score(&self, u: &[f32], v: &[f32]) -> Result<f64> {
        if u.len() != v.len() {
            return Err(Error::SpaceMismatch(format!(
                "vectors of dimension {} and {}",
                u.len(),
                v.len()
            )));
        }
        if self.normalize {
            cosine(u, v)
        } else {
            Ok(dot(u, v))
        }
    }
}

/// F(c, s) for a clip and a step sentence.
pub fn match_score(matcher: &Matcher, clip: &ClipRecord, step: &StepSentence) -> Result<f64> {
    matcher.score(&clip.embedding, &step.embedding)
}

/// X(question, answer): question and answer are embedded separately and
/// compared by cosine.
pub fn qa_score(provider: &dyn ScorerProvider, question: &str, answer: &str) -> Result<f64> {
    let scores = qa_scores(provider, question, &[answer])?;
    Ok(scores[0])
}

/// Batch form of [`qa_score`] against a single question.
pub fn qa_scores(provider: &dyn ScorerProvider, question: &str, answers: &[&str]) -> Result<Vec<f64>> {
    provider.require(Capability::QaEmbed)?;
    let q = provider.embed_text(TextSpace::QaQuestion, &[question])?;
    let a = provider.embed_text(TextSpace::QaAnswer, answers)?;
    let q = q
        .first()
        .ok_or_else(|| Error::Provider("qa question embedding missing".into()))?;
    if a.len() != answers.len() {
        return Err(Error::Provider(format!(
            "expected {} answer embeddings, got {}",
            answers.len(),
            a.len()
        )));
    }
    a.iter().map(|v| cosine(q, v)).collect()
}

pub fn masked_fill(
    provider: &dyn ScorerProvider,
    prompt: &str,
    mask_index: usize,
    top_k: usize,
) -> Result<MaskedFillResult> {
    provider.require(Capability::Mlm)?;
    let words = prompt.split_whitespace().count();
    if mask_index >= words {
        return Err(Error::invalid(
            "mask index",
            format!("{mask_index} is out of range for a {words}-word prompt"),
        ));
    }
    provider.mlm_fill(prompt, mask_index, top_k)
}

pub fn pos_tag(provider: &dyn ScorerProvider, sentence: &str) -> Result<Vec<TaggedToken>> {
    if sentence.trim().is_empty() {
        return Err(Error::invalid("sentence", "cannot tag an empty sentence"));
    }
    provider.require(Capability::PosTag)?;
    let mut tags = provider.pos_tag(&[sentence])?;
    let tags = tags
        .pop()
        .ok_or_else(|| Error::Provider("pos tagger returned no result".into()))?;
    let words = sentence.split_whitespace().count();
    if tags.len() != words {
        return Err(Error::Provider(format!(
            "pos tagger returned {} tags for {words} words",
            tags.len()
        )));
    }
    Ok(tags)
}

/// Embeds texts and checks that every returned vector has the same,
/// non-zero dimension.
pub fn embed_checked(provider: &dyn ScorerProvider, space: TextSpace, texts: &[&str]) -> Result<Vec<Vec<f32>>> {
    if texts.is_empty() {
        return Ok(Vec::new());
    }
    provider.require(space.capability())?;
    let vectors = provider.embed_text(space, texts)?;
    if vectors.len() != texts.len() {
        return Err(Error::Provider(format!(
            "expected {} {} embeddings, got {}",
            texts.len(),
            space.as_str(),
            vectors.len()
        )));
    }
    let dim = vectors[0].len();
    if dim == 0 || vectors.iter().any(|v| v.len() != dim) {
        return Err(Error::Provider(format!(
            "inconsistent {} embedding dimensions",
            space.as_str()
        )));
    }
    Ok(vectors)
}
