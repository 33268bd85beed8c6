//! Run configuration. Defaults live here; a flat TOML file overrides them,
//! `SCHEMAFORGE_SIDECAR_URL` overrides the file's sidecar URL, and the
//! front end applies command-line flags last.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::editing::EditParams;
use crate::error::{Error, Result};
use crate::induction::InductionParams;
use crate::retrieval::RetrievalParams;
use crate::scoring::{FileProvider, ScorerProvider, SidecarOptions, SidecarProvider, SyntheticFixture, SyntheticProvider};
use crate::segmentation::{SegMetric, SegmentationParams};

pub const SIDECAR_URL_ENV: &str = "SCHEMAFORGE_SIDECAR_URL";

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProviderKind {
    #[default]
    Synthetic,
    /// Recorded responses replayed from a JSON file.
    File,
    Sidecar,
}

impl std::str::FromStr for ProviderKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "synthetic" => Ok(Self::Synthetic),
            "file" => Ok(Self::File),
            "sidecar" => Ok(Self::Sidecar),
            other => Err(Error::invalid("provider", format!("unknown backend {other:?}"))),
        }
    }
}

impl ProviderKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Synthetic => "synthetic",
            Self::File => "file",
            Self::Sidecar => "sidecar",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub seed: u64,
    /// Worker threads; `None` lets rayon decide. Never echoed, since it
    /// must not change any output.
    pub workers: Option<usize>,
    pub provider: ProviderKind,
    /// Fixture (synthetic) or recorded responses (file).
    pub fixture: Option<PathBuf>,
    /// Bag-of-words dimension of the synthetic backend without a fixture.
    pub dim: usize,
    pub normalize: bool,
    /// 0 disables the search-rank filter.
    pub rank_cutoff: u32,
    pub induction: InductionParams,
    pub segmentation: SegmentationParams,
    pub edit: EditParams,
    pub retrieval: RetrievalParams,
    pub ks: Vec<usize>,
    pub sidecar_url: Option<String>,
    pub sidecar_max_inflight: usize,
    pub sidecar_retries: u32,
    pub sidecar_timeout_s: u64,
    pub sidecar_cache_dir: Option<PathBuf>,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            seed: 0,
            workers: None,
            provider: ProviderKind::Synthetic,
            fixture: None,
            dim: crate::scoring::DEFAULT_SYNTHETIC_DIM,
            normalize: true,
            rank_cutoff: crate::corpus::DEFAULT_RANK_CUTOFF,
            induction: InductionParams::default(),
            segmentation: SegmentationParams::default(),
            edit: EditParams::default(),
            retrieval: RetrievalParams::default(),
            ks: vec![1, 5, 10],
            sidecar_url: None,
            sidecar_max_inflight: 8,
            sidecar_retries: 3,
            sidecar_timeout_s: 120,
            sidecar_cache_dir: None,
        }
    }
}

fn flatten(prefix: &str, table: &toml::Table, out: &mut BTreeMap<String, toml::Value>) {
    for (k, v) in table {
        let key = if prefix.is_empty() {
            k.clone()
        } else {
            format!("{prefix}.{k}")
        };
        match v {
            toml::Value::Table(t) => flatten(&key, t, out),
            other => {
                out.insert(key, other.clone());
            }
        }
    }
}

fn bad(key: &str, value: &toml::Value, want: &str) -> Error {
    Error::invalid("config", format!("{key} = {value}: expected {want}"))
}

fn as_f64(key: &str, v: &toml::Value) -> Result<f64> {
    match v {
        toml::Value::Float(f) => Ok(*f),
        toml::Value::Integer(i) => Ok(*i as f64),
        _ => Err(bad(key, v, "a number")),
    }
}

fn as_u64(key: &str, v: &toml::Value) -> Result<u64> {
    match v {
        toml::Value::Integer(i) if *i >= 0 => Ok(*i as u64),
        _ => Err(bad(key, v, "a non-negative integer")),
    }
}

fn as_usize(key: &str, v: &toml::Value) -> Result<usize> {
    as_u64(key, v).map(|x| x as usize)
}

fn as_bool(key: &str, v: &toml::Value) -> Result<bool> {
    v.as_bool().ok_or_else(|| bad(key, v, "true or false"))
}

fn as_str<'a>(key: &str, v: &'a toml::Value) -> Result<&'a str> {
    v.as_str().ok_or_else(|| bad(key, v, "a string"))
}

impl Config {
    /// Defaults overridden by the file (if any), then by the environment.
    pub fn resolve(path: Option<&Path>) -> Result<Self> {
        let mut cfg = Self::default();
        if let Some(p) = path {
            let raw = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            cfg.apply_toml(&raw)?;
        }
        if let Ok(url) = std::env::var(SIDECAR_URL_ENV) {
            if !url.is_empty() {
                cfg.sidecar_url = Some(url);
            }
        }
        Ok(cfg)
    }

    pub fn apply_toml(&mut self, raw: &str) -> Result<()> {
        let table: toml::Table =
            toml::from_str(raw).map_err(|e| Error::invalid("config", e.to_string()))?;
        let mut flat = BTreeMap::new();
        flatten("", &table, &mut flat);
        for (k, v) in &flat {
            self.set(k, v)?;
        }
        self.validate()
    }

    /// Sets one key from a command-line string. The string is read as a
    /// TOML value when it parses as one and as a bare string otherwise.
    pub fn set_str(&mut self, key: &str, raw: &str) -> Result<()> {
        let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
            .ok()
            .and_then(|mut t| t.remove("v"))
            .unwrap_or_else(|| toml::Value::String(raw.to_string()));
        match self.set(key, &value) {
            Err(_) if !value.is_str() => self.set(key, &toml::Value::String(raw.to_string())),
            done => done,
        }
    }

    /// Sets one key. Unknown keys are errors so typos do not pass silently.
    pub fn set(&mut self, key: &str, v: &toml::Value) -> Result<()> {
        match key {
            "seed" => self.seed = as_u64(key, v)?,
            "workers" => self.workers = Some(as_usize(key, v)?),
            "provider" => self.provider = as_str(key, v)?.parse()?,
            "fixture" => self.fixture = Some(PathBuf::from(as_str(key, v)?)),
            "dim" => self.dim = as_usize(key, v)?,
            "scoring.normalize" => self.normalize = as_bool(key, v)?,
            "rank_cutoff" => self.rank_cutoff = as_u64(key, v)? as u32,
            "top_n" => self.induction.per_clip_top_n = as_usize(key, v)?,
            "top_m" => self.induction.per_task_top_m = as_usize(key, v)?,
            "cluster_th" => self.induction.cluster_distance_threshold = as_f64(key, v)?,
            "min_videos" => self.induction.min_videos = as_usize(key, v)?,
            "induction.pooled" => self.induction.pooled = as_bool(key, v)?,
            "k_min" => self.segmentation.k_min = as_usize(key, v)?,
            "k_max" => self.segmentation.k_max = as_usize(key, v)?,
            "segmentation.metric" => {
                self.segmentation.metric = match as_str(key, v)? {
                    "euclidean" => SegMetric::Euclidean,
                    "cosine" => SegMetric::Cosine,
                    _ => return Err(bad(key, v, "\"euclidean\" or \"cosine\"")),
                }
            }
            "beta" => self.edit.beta = as_f64(key, v)?,
            "question_template" => self.edit.question_template = as_str(key, v)?.to_string(),
            "max_mlm_candidates" => self.edit.max_mlm_candidates = as_usize(key, v)?,
            "lambda" => self.retrieval.lambda = as_f64(key, v)?,
            "r" | "R" => self.retrieval.r = as_usize(key, v)?,
            "retrieval.normalize_g" => self.retrieval.normalize_g = as_bool(key, v)?,
            "explain_top_k" => self.retrieval.explain_top_k = as_usize(key, v)?,
            "ks" => {
                let arr = v.as_array().ok_or_else(|| bad(key, v, "an array of integers"))?;
                self.ks = arr.iter().map(|x| as_usize(key, x)).collect::<Result<_>>()?;
            }
            "sidecar.url" => self.sidecar_url = Some(as_str(key, v)?.to_string()),
            "sidecar.max_inflight" => self.sidecar_max_inflight = as_usize(key, v)?,
            "sidecar.retries" => self.sidecar_retries = as_u64(key, v)? as u32,
            "sidecar.timeout_s" => self.sidecar_timeout_s = as_u64(key, v)?,
            "sidecar.cache_dir" => self.sidecar_cache_dir = Some(PathBuf::from(as_str(key, v)?)),
            other => return Err(Error::invalid("config", format!("unknown key {other:?}"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.induction.validate()?;
        self.edit.validate()?;
        self.retrieval.validate()?;
        if self.segmentation.k_min == 0 || self.segmentation.k_min > self.segmentation.k_max {
            return Err(Error::invalid(
                "config",
                format!("k_min {} / k_max {}", self.segmentation.k_min, self.segmentation.k_max),
            ));
        }
        if self.workers == Some(0) {
            return Err(Error::invalid("config", "workers must be at least 1"));
        }
        if self.ks.is_empty() || self.ks.contains(&0) {
            return Err(Error::invalid("config", "ks must be non-empty positive integers"));
        }
        if self.sidecar_max_inflight == 0 {
            return Err(Error::invalid("config", "sidecar.max_inflight must be at least 1"));
        }
        Ok(())
    }

    pub fn rank_cutoff(&self) -> Option<u32> {
        (self.rank_cutoff > 0).then_some(self.rank_cutoff)
    }

    pub fn sidecar_options(&self) -> SidecarOptions {
        SidecarOptions {
            max_inflight: self.sidecar_max_inflight,
            retries: self.sidecar_retries,
            timeout: Duration::from_secs(self.sidecar_timeout_s),
            cache_dir: self.sidecar_cache_dir.clone(),
            ..SidecarOptions::default()
        }
    }

    /// Builds the configured scoring backend.
    pub fn provider(&self) -> Result<Box<dyn ScorerProvider>> {
        Ok(match self.provider {
            ProviderKind::Synthetic => match &self.fixture {
                Some(p) => Box::new(SyntheticProvider::new(SyntheticFixture::load(p)?)),
                None => Box::new(SyntheticProvider::with_dim(self.dim)),
            },
            ProviderKind::File => {
                let p = self
                    .fixture
                    .as_ref()
                    .ok_or_else(|| Error::invalid("provider", "the file backend needs a responses file"))?;
                Box::new(FileProvider::load(p)?)
            }
            ProviderKind::Sidecar => {
                let url = self.sidecar_url.as_deref().ok_or_else(|| {
                    Error::invalid("provider", format!("the sidecar backend needs sidecar.url or {SIDECAR_URL_ENV}"))
                })?;
                Box::new(SidecarProvider::connect(url, self.sidecar_options())?)
            }
        })
    }

    /// Every resolved key except `workers`, for embedding in artifacts.
    pub fn echo(&self) -> BTreeMap<String, Value> {
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string());
        let metric = match self.segmentation.metric {
            SegMetric::Euclidean => "euclidean",
            SegMetric::Cosine => "cosine",
        };
        [
            ("seed", json!(self.seed)),
            ("provider", json!(self.provider.as_str())),
            ("fixture", json!(path(&self.fixture))),
            ("dim", json!(self.dim)),
            ("scoring.normalize", json!(self.normalize)),
            ("rank_cutoff", json!(self.rank_cutoff)),
            ("top_n", json!(self.induction.per_clip_top_n)),
            ("top_m", json!(self.induction.per_task_top_m)),
            ("cluster_th", json!(self.induction.cluster_distance_threshold)),
            ("min_videos", json!(self.induction.min_videos)),
            ("induction.pooled", json!(self.induction.pooled)),
            ("k_min", json!(self.segmentation.k_min)),
            ("k_max", json!(self.segmentation.k_max)),
            ("segmentation.metric", json!(metric)),
            ("beta", json!(self.edit.beta)),
            ("question_template", json!(self.edit.question_template)),
            ("max_mlm_candidates", json!(self.edit.max_mlm_candidates)),
            ("lambda", json!(self.retrieval.lambda)),
            ("r", json!(self.retrieval.r)),
            ("retrieval.normalize_g", json!(self.retrieval.normalize_g)),
            ("explain_top_k", json!(self.retrieval.explain_top_k)),
            ("ks", json!(self.ks)),
            ("sidecar.url", json!(self.sidecar_url)),
            ("sidecar.max_inflight", json!(self.sidecar_max_inflight)),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect()
    }
}
