use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::hash::Hasher;
use std::path::Path;

use fnv::FnvHasher;
use serde::{Deserialize, Serialize};

use super::lexicon::{word_core, Lexicon};
use super::{Capability, FillCandidate, MaskedFillResult, ScorerProvider, TaggedToken, TextSpace};
use crate::error::{Error, Result};

pub const DEFAULT_SYNTHETIC_DIM: usize = 256;

fn default_dim() -> usize {
    DEFAULT_SYNTHETIC_DIM
}
fn default_original_log_prob() -> f64 {
    -6.0
}
fn default_replacement_log_prob() -> f64 {
    -0.5
}
fn default_neutral_log_prob() -> f64 {
    -1.0
}

/// One row of the table-driven masked LM: when every token of `context`
/// occurs in the task part of the prompt, a masked `word` is considered
/// unlikely and `replacement` is proposed instead.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlmRule {
    pub context: String,
    pub word: String,
    pub replacement: String,
    #[serde(default = "default_original_log_prob")]
    pub original_log_prob: f64,
    #[serde(default = "default_replacement_log_prob")]
    pub replacement_log_prob: f64,
}

impl MlmRule {
    pub fn new(context: &str, word: &str, replacement: &str) -> Self {
        Self {
            context: context.to_string(),
            word: word.to_string(),
            replacement: replacement.to_string(),
            original_log_prob: default_original_log_prob(),
            replacement_log_prob: default_replacement_log_prob(),
        }
    }
}

/// Serializable configuration of a [`SyntheticProvider`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticFixture {
    #[serde(default = "default_dim")]
    pub dim: usize,
    /// Additions to the built-in English lexicon.
    #[serde(default)]
    pub lexicon: BTreeMap<String, String>,
    #[serde(default)]
    pub mlm_rules: Vec<MlmRule>,
    /// Extra tokens mixed into QA-space embeddings, e.g. a body part mapped
    /// to the animal it belongs to.
    #[serde(default)]
    pub qa_associations: BTreeMap<String, Vec<String>>,
    /// Precomputed image vectors by reference; unknown references are
    /// embedded as text.
    #[serde(default)]
    pub images: BTreeMap<String, Vec<f32>>,
    #[serde(default = "default_neutral_log_prob")]
    pub neutral_log_prob: f64,
}

impl Default for SyntheticFixture {
    fn default() -> Self {
        Self {
            dim: DEFAULT_SYNTHETIC_DIM,
            lexicon: BTreeMap::new(),
            mlm_rules: Vec::new(),
            qa_associations: BTreeMap::new(),
            images: BTreeMap::new(),
            neutral_log_prob: default_neutral_log_prob(),
        }
    }
}

impl SyntheticFixture {
    pub fn load(path: &Path) -> Result<Self> {
        let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&raw)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let raw = serde_json::to_string_pretty(self)?;
        std::fs::write(path, raw).map_err(|e| Error::io(path, e))
    }
}

/// Lowercased alphanumeric tokens of a text.
pub fn bow_tokens(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
}

fn bucket(token: &str, dim: usize) -> usize {
    let mut h = FnvHasher::default();
    h.write(token.as_bytes());
    (h.finish() % dim as u64) as usize
}

/// Deterministic, model-free provider.
///
/// Text in every space is an L2-normalised hashed bag of words (FNV-1a of
/// each lowercased token, modulo `dim`). QA spaces additionally mix in the
/// fixture's token associations.
#[derive(Debug, Clone)]
pub struct SyntheticProvider {
    fixture: SyntheticFixture,
    lexicon: Lexicon,
    rules_by_word: HashMap<String, Vec<usize>>,
    capabilities: BTreeSet<Capability>,
}

impl Default for SyntheticProvider {
    fn default() -> Self {
        Self::new(SyntheticFixture::default())
    }
}

impl SyntheticProvider {
    pub fn new(fixture: SyntheticFixture) -> Self {
        let mut lexicon = Lexicon::english_base();
        lexicon.extend(&fixture.lexicon);
        let mut rules_by_word: HashMap<String, Vec<usize>> = HashMap::new();
        for (i, rule) in fixture.mlm_rules.iter().enumerate() {
            rules_by_word.entry(rule.word.to_lowercase()).or_default().push(i);
        }
        Self {
            fixture,
            lexicon,
            rules_by_word,
            capabilities: Capability::ALL.into_iter().collect(),
        }
    }

    pub fn with_dim(dim: usize) -> Self {
        Self::new(SyntheticFixture {
            dim,
            ..SyntheticFixture::default()
        })
    }

    pub fn dim(&self) -> usize {
        self.fixture.dim
    }

    pub fn fixture(&self) -> &SyntheticFixture {
        &self.fixture
    }

    pub fn lexicon(&self) -> &Lexicon {
        &self.lexicon
    }

    /// Hashed bag-of-words embedding of `text` in the joint space.
    pub fn embed_one(&self, text: &str) -> Result<Vec<f32>> {
        self.embed_tokens(bow_tokens(text).collect(), text)
    }

    fn embed_tokens(&self, tokens: Vec<String>, text: &str) -> Result<Vec<f32>> {
        let dim = self.fixture.dim;
        let mut acc = vec![0.0f64; dim];
        for t in &tokens {
            acc[bucket(t, dim)] += 1.0;
        }
        let n = acc.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n == 0.0 {
            return Err(Error::Provider(format!("no embeddable tokens in {text:?}")));
        }
        Ok(acc.into_iter().map(|x| (x / n) as f32).collect())
    }

    fn qa_tokens(&self, text: &str) -> Vec<String> {
        let mut tokens: Vec<String> = bow_tokens(text).collect();
        let extra: Vec<String> = tokens
            .iter()
            .filter_map(|t| self.fixture.qa_associations.get(t))
            .flatten()
            .map(|s| s.to_lowercase())
            .collect();
        tokens.extend(extra);
        tokens
    }
}

impl ScorerProvider for SyntheticProvider {
    fn name(&self) -> &str {
        "synthetic"
    }

    fn capabilities(&self) -> &BTreeSet<Capability> {
        &self.capabilities
    }

    fn embed_text(&self, space: TextSpace, texts: &[&str]) -> Result<Vec<Vec<f32>>> {
        texts
            .iter()
            .map(|t| match space {
                TextSpace::Joint | TextSpace::Sentence => self.embed_one(t),
                TextSpace::QaQuestion | TextSpace::QaAnswer => self.embed_tokens(self.qa_tokens(t), t),
            })
            .collect()
    }

    fn mlm_fill(&self, text: &str, mask_word_index: usize, top_k: usize) -> Result<MaskedFillResult> {
        let words: Vec<&str> = text.split_whitespace().collect();
        let target = words
            .get(mask_word_index)
            .ok_or_else(|| Error::invalid("mask index", format!("{mask_word_index} out of range")))?;
        let word = word_core(target).to_lowercase();

        // the task part of "How to <task>? <step>" is everything up to the
        // first word ending in '?'
        let task_end = words
            .iter()
            .position(|w| w.ends_with('?'))
            .unwrap_or(words.len().saturating_sub(1));
        let context: BTreeSet<String> = words[..=task_end.min(words.len() - 1)]
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != mask_word_index)
            .flat_map(|(_, w)| bow_tokens(w).collect::<Vec<_>>())
            .collect();

        let rule = self.rules_by_word.get(&word).and_then(|idxs| {
            idxs.iter()
                .map(|&i| &self.fixture.mlm_rules[i])
                .find(|r| bow_tokens(&r.context).all(|t| context.contains(&t)))
        });

        let (mut candidates, original) = match rule {
            Some(r) => (
                vec![
                    FillCandidate {
                        word: r.replacement.clone(),
                        log_prob: r.replacement_log_prob,
                    },
                    FillCandidate {
                        word: word.clone(),
                        log_prob: r.original_log_prob,
                    },
                ],
                r.original_log_prob,
            ),
            None => (
                vec![FillCandidate {
                    word: word.clone(),
                    log_prob: self.fixture.neutral_log_prob,
                }],
                self.fixture.neutral_log_prob,
            ),
        };
        candidates.truncate(top_k.max(1));
        MaskedFillResult::new(candidates, original)
    }

    fn pos_tag(&self, texts: &[&str]) -> Result<Vec<Vec<TaggedToken>>> {
        Ok(texts
            .iter()
            .map(|t| {
                t.split_whitespace()
                    .map(|w| TaggedToken::new(w, self.lexicon.tag_word(w)))
                    .collect()
            })
            .collect())
    }

    fn embed_images(&self, refs: &[&str]) -> Result<Vec<Vec<f32>>> {
        refs.iter()
            .map(|r| match self.fixture.images.get(*r) {
                Some(v) if v.len() == self.fixture.dim => Ok(v.clone()),
                Some(v) => Err(Error::DimensionMismatch {
                    id: r.to_string(),
                    expected: self.fixture.dim,
                    found: v.len(),
                }),
                None => self.embed_one(r),
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scoring::{cosine, masked_fill, pos_tag, qa_score};

    #[test]
    fn identical_text_scores_one() {
        let p = SyntheticProvider::default();
        let x = qa_score(&p, "Comb and groom your pet.", "Comb and groom your pet.").unwrap();
        assert!((x - 1.0).abs() < 1e-9);
    }

    #[test]
    fn disjoint_tokens_score_zero() {
        let p = SyntheticProvider::default();
        // checked collision-free at dim 256
        let a = p.embed_one("bake chicken").unwrap();
        let b = p.embed_one("wash motorcycle").unwrap();
        assert_eq!(cosine(&a, &b).unwrap(), 0.0);
        assert_eq!(qa_score(&p, "bake chicken", "wash motorcycle").unwrap(), 0.0);
    }

    #[test]
    fn embedding_is_unit_and_deterministic() {
        let p = SyntheticProvider::default();
        let a = p.embed_one("Put the ham in the oven.").unwrap();
        let b = p.embed_one("Put the ham in the oven.").unwrap();
        assert_eq!(a, b);
        let n: f64 = a.iter().map(|&x| f64::from(x) * f64::from(x)).sum();
        assert!((n - 1.0).abs() < 1e-6);
        assert!(p.embed_one("?!").is_err());
    }

    #[test]
    fn table_driven_fill() {
        let fixture = SyntheticFixture {
            mlm_rules: vec![MlmRule::new("crabs", "fins", "shells")],
            ..SyntheticFixture::default()
        };
        let p = SyntheticProvider::new(fixture);
        let prompt = "How to Prepare Crabs? Cut the fins from the crabs using kitchen shears.";
        let r = masked_fill(&p, prompt, 6, 5).unwrap();
        assert_eq!(r.candidates[0].word, "shells");
        assert!(r.original_log_prob < -1.0);

        // without the context the original word is the top candidate
        let r = masked_fill(&p, "How to Prepare Fish? Cut the fins from the fish.", 6, 5).unwrap();
        assert_eq!(r.candidates[0].word, "fins");

        assert!(masked_fill(&p, prompt, 99, 5).is_err());
    }

    #[test]
    fn lexicon_tagging() {
        let p = SyntheticProvider::default();
        let tags = pos_tag(&p, "Bake Chicken").unwrap();
        assert_eq!(tags, vec![TaggedToken::new("Bake", "VB"), TaggedToken::new("Chicken", "NN")]);
        let tags = pos_tag(&p, "Bake zorblat").unwrap();
        assert_eq!(tags[1].tag, "X");
        assert!(pos_tag(&p, "").is_err());
    }

    #[test]
    fn qa_associations_add_tokens() {
        let mut fixture = SyntheticFixture::default();
        fixture
            .qa_associations
            .insert("thigh".into(), vec!["chicken".into()]);
        let p = SyntheticProvider::new(fixture);
        let with = qa_score(&p, "How to Bake Chicken?", "Insert a roasting thermometer into the thigh").unwrap();
        let plain = SyntheticProvider::default();
        let without = qa_score(&plain, "How to Bake Chicken?", "Insert a roasting thermometer into the thigh").unwrap();
        assert!(with > without);
    }
}
