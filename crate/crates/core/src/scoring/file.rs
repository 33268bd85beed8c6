use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Capability, FillCandidate, MaskedFillResult, ScorerProvider, TaggedToken, TextSpace};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordedFill {
    pub text: String,
    pub mask_word_index: usize,
    pub original_log_prob: f64,
    pub candidates: Vec<FillCandidate>,
}

/// Provider answers captured ahead of time, e.g. from a sidecar run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RecordedResponses {
    #[serde(default)]
    pub text: BTreeMap<TextSpace, BTreeMap<String, Vec<f32>>>,
    #[serde(default)]
    pub pos: BTreeMap<String, Vec<(String, String)>>,
    #[serde(default)]
    pub mlm: Vec<RecordedFill>,
    #[serde(default)]
    pub images: BTreeMap<String, Vec<f32>>,
}

/// Replays [`RecordedResponses`]. Any request that was not recorded fails
/// with a provider error; capabilities are derived from what was recorded.
#[derive(Debug, Clone)]
pub struct FileProvider {
    responses: RecordedResponses,
    mlm_index: BTreeMap<(String, usize), usize>,
    capabilities: BTreeSet<Capability>,
}

impl FileProvider {
    pub fn new(responses: RecordedResponses) -> Self {
        let mut capabilities = BTreeSet::new();
        for space in responses.text.keys() {
            capabilities.insert(space.capability());
        }
        if !responses.pos.is_empty() {
            capabilities.insert(Capability::PosTag);
        }
        if !responses.mlm.is_empty() {
            capabilities.insert(Capability::Mlm);
        }
        if !responses.images.is_empty() {
            capabilities.insert(Capability::ImageEmbed);
        }
        let mlm_index = responses
            .mlm
            .iter()
            .enumerate()
            .map(|(i, r)| ((r.text.clone(), r.mask_word_index), i))
            .collect();
        Self {
            responses,
            mlm_index,
            capabilities,
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(Self::new(serde_json::from_str(&raw)?))
    }

    fn missing(what: &str, key: &str) -> Error {
        Error::Provider(format!("no recorded {what} for {key:?}"))
    }
}

impl ScorerProvider for FileProvider {
    fn name(&self) -> &str {
        "file"
    }

    fn capabilities(&self) -> &BTreeSet<Capability> {
        &self.capabilities
    }

    fn embed_text(&self, space: TextSpace, texts: &[&str]) -> Result<Vec<Vec<f32>>> {
        let table = self
            .responses
            .text
            .get(&space)
            .ok_or(Error::MissingCapability(space.capability()))?;
        texts
            .iter()
            .map(|t| {
                table
                    .get(*t)
                    .cloned()
                    .ok_or_else(|| Self::missing(space.as_str(), t))
            })
            .collect()
    }

    fn mlm_fill(&self, text: &str, mask_word_index: usize, top_k: usize) -> Result<MaskedFillResult> {
        let i = self
            .mlm_index
            .get(&(text.to_string(), mask_word_index))
            .ok_or_else(|| Self::missing("mlm fill", &format!("{text}@{mask_word_index}")))?;
        let rec = &self.responses.mlm[*i];
        let mut r = MaskedFillResult::new(rec.candidates.clone(), rec.original_log_prob)?;
        r.candidates.truncate(top_k.max(1));
        Ok(r)
    }

    fn pos_tag(&self, texts: &[&str]) -> Result<Vec<Vec<TaggedToken>>> {
        texts
            .iter()
            .map(|t| {
                self.responses
                    .pos
                    .get(*t)
                    .map(|tags| tags.iter().map(|(w, tag)| TaggedToken::new(w, tag)).collect())
                    .ok_or_else(|| Self::missing("pos tags", t))
            })
            .collect()
    }

    fn embed_images(&self, refs: &[&str]) -> Result<Vec<Vec<f32>>> {
        refs.iter()
            .map(|r| {
                self.responses
                    .images
                    .get(*r)
                    .cloned()
                    .ok_or_else(|| Self::missing("image embedding", r))
            })
            .collect()
    }
}
