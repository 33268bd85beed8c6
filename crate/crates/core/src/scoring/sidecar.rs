use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;
use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Capability, FillCandidate, MaskedFillResult, ScorerProvider, TaggedToken, TextSpace};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct SidecarOptions {
    pub max_inflight: usize,
    /// Retries after the first attempt, for transport errors and 5xx/429.
    pub retries: u32,
    pub backoff: Duration,
    pub timeout: Duration,
    /// Responses are cached here keyed by endpoint and request hash; a
    /// cached answer is replayed without touching the network.
    pub cache_dir: Option<PathBuf>,
}

impl Default for SidecarOptions {
    fn default() -> Self {
        Self {
            max_inflight: 8,
            retries: 3,
            backoff: Duration::from_millis(100),
            timeout: Duration::from_secs(120),
            cache_dir: None,
        }
    }
}

#[derive(Serialize)]
struct EmbedTextRequest<'a> {
    texts: &'a [&'a str],
    space: TextSpace,
}

#[derive(Serialize)]
struct MlmFillRequest<'a> {
    text: &'a str,
    mask_word_index: usize,
    top_k: usize,
}

#[derive(Serialize)]
struct PosTagRequest<'a> {
    texts: &'a [&'a str],
}

#[derive(Serialize)]
struct EmbedImageRequest<'a> {
    image_paths_or_urls: &'a [&'a str],
}

#[derive(Deserialize)]
struct VectorsResponse {
    dim: usize,
    vectors: Vec<Vec<f32>>,
}

#[derive(Deserialize)]
struct MlmFillResponse {
    original_log_prob: f64,
    candidates: Vec<FillCandidate>,
}

#[derive(Deserialize)]
struct PosTagResponse {
    tags: Vec<Vec<(String, String)>>,
}

#[derive(Deserialize)]
struct CapabilitiesResponse {
    capabilities: Vec<String>,
    #[serde(default)]
    #[allow(dead_code)]
    dims: BTreeMap<String, usize>,
}

#[derive(Deserialize)]
struct ErrorBody {
    error: String,
}

/// Counting semaphore bounding concurrent sidecar requests.
struct InflightLimit {
    in_use: Mutex<usize>,
    freed: Condvar,
    max: usize,
}

impl InflightLimit {
    fn new(max: usize) -> Self {
        Self {
            in_use: Mutex::new(0),
            freed: Condvar::new(),
            max: max.max(1),
        }
    }

    fn acquire(&self) -> InflightGuard<'_> {
        let mut n = self.in_use.lock().unwrap_or_else(|e| e.into_inner());
        while *n >= self.max {
            n = self.freed.wait(n).unwrap_or_else(|e| e.into_inner());
        }
        *n += 1;
        InflightGuard(self)
    }
}

struct InflightGuard<'a>(&'a InflightLimit);

impl Drop for InflightGuard<'_> {
    fn drop(&mut self) {
        let mut n = self.0.in_use.lock().unwrap_or_else(|e| e.into_inner());
        *n -= 1;
        self.0.freed.notify_one();
    }
}

/// HTTP client for the model sidecar.
pub struct SidecarProvider {
    base_url: String,
    agent: ureq::Agent,
    options: SidecarOptions,
    limit: InflightLimit,
    capabilities: BTreeSet<Capability>,
}

impl std::fmt::Debug for SidecarProvider {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SidecarProvider")
            .field("base_url", &self.base_url)
            .field("capabilities", &self.capabilities)
            .finish()
    }
}

impl SidecarProvider {
    /// Connects and reads `/v1/capabilities`.
    pub fn connect(base_url: &str, options: SidecarOptions) -> Result<Self> {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(options.timeout))
            .build()
            .into();
        let mut provider = Self {
            base_url: base_url.trim_end_matches('/').to_string(),
            agent,
            limit: InflightLimit::new(options.max_inflight),
            options,
            capabilities: BTreeSet::new(),
        };
        let caps: CapabilitiesResponse = provider.request("GET", "/v1/capabilities", None)?;
        provider.capabilities = caps
            .capabilities
            .iter()
            .filter_map(|c| serde_json::from_value(serde_json::Value::String(c.clone())).ok())
            .collect();
        Ok(provider)
    }

    fn cache_path(&self, endpoint: &str, body: &str) -> Option<PathBuf> {
        let dir = self.options.cache_dir.as_ref()?;
        let mut h = Sha256::new();
        h.update(endpoint.as_bytes());
        h.update(b"\n");
        h.update(body.as_bytes());
        let slug = endpoint.trim_start_matches('/').replace('/', "_");
        Some(dir.join(slug).join(format!("{}.json", hex::encode(h.finalize()))))
    }

    fn request<T: DeserializeOwned>(&self, method: &str, endpoint: &str, body: Option<String>) -> Result<T> {
        let body_str = body.as_deref().unwrap_or("");
        let cache = self.cache_path(endpoint, body_str);
        if let Some(path) = &cache {
            if let Ok(cached) = std::fs::read_to_string(path) {
                return serde_json::from_str(&cached)
                    .map_err(|e| Error::Provider(format!("corrupt cache entry {}: {e}", path.display())));
            }
        }

        let text = self.send_with_retries(method, endpoint, body.as_deref())?;
        let parsed: T = serde_json::from_str(&text)
            .map_err(|e| Error::Provider(format!("{endpoint}: unexpected response body: {e}")))?;
        if let Some(path) = cache {
            if let Some(parent) = path.parent() {
                std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
            }
            std::fs::write(&path, &text).map_err(|e| Error::io(&path, e))?;
        }
        Ok(parsed)
    }

    fn send_with_retries(&self, method: &str, endpoint: &str, body: Option<&str>) -> Result<String> {
        let url = format!("{}{}", self.base_url, endpoint);
        let mut attempt = 0u32;
        loop {
            let outcome = {
                let _permit = self.limit.acquire();
                self.send_once(method, &url, body)
            };
            match outcome {
                Ok(text) => return Ok(text),
                Err((retryable, msg)) => {
                    if !retryable || attempt >= self.options.retries {
                        return Err(Error::Provider(format!("{endpoint}: {msg}")));
                    }
                    std::thread::sleep(self.options.backoff * 2u32.pow(attempt));
                    attempt += 1;
                }
            }
        }
    }

    /// Err carries (retryable, message).
    fn send_once(&self, method: &str, url: &str, body: Option<&str>) -> std::result::Result<String, (bool, String)> {
        let response = match (method, body) {
            ("GET", _) => self.agent.get(url).call(),
            (_, Some(b)) => self
                .agent
                .post(url)
                .header("content-type", "application/json")
                .send(b),
            (_, None) => self.agent.post(url).send_empty(),
        };
        let mut response = response.map_err(|e| (true, e.to_string()))?;
        let status = response.status().as_u16();
        let text = response
            .body_mut()
            .read_to_string()
            .map_err(|e| (true, e.to_string()))?;
        if (200..300).contains(&status) {
            return Ok(text);
        }
        let msg = serde_json::from_str::<ErrorBody>(&text)
            .map(|e| e.error)
            .unwrap_or(text);
        Err((status >= 500 || status == 429, format!("HTTP {status}: {msg}")))
    }

    fn post<T: DeserializeOwned, B: Serialize>(&self, endpoint: &str, body: &B) -> Result<T> {
        let body = serde_json::to_string(body)?;
        self.request("POST", endpoint, Some(body))
    }

    fn vectors(resp: VectorsResponse, expected: usize) -> Result<Vec<Vec<f32>>> {
        if resp.vectors.len() != expected || resp.vectors.iter().any(|v| v.len() != resp.dim) {
            return Err(Error::Provider(format!(
                "expected {expected} vectors of dimension {}",
                resp.dim
            )));
        }
        Ok(resp.vectors)
    }
}

impl ScorerProvider for SidecarProvider {
    fn name(&self) -> &str {
        "sidecar"
    }

    fn capabilities(&self) -> &BTreeSet<Capability> {
        &self.capabilities
    }

    fn embed_text(&self, space: TextSpace, texts: &[&str]) -> Result<Vec<Vec<f32>>> {
        let resp: VectorsResponse = self.post("/v1/embed_text", &EmbedTextRequest { texts, space })?;
        Self::vectors(resp, texts.len())
    }

    fn mlm_fill(&self, text: &str, mask_word_index: usize, top_k: usize) -> Result<MaskedFillResult> {
        let resp: MlmFillResponse = self.post(
            "/v1/mlm_fill",
            &MlmFillRequest {
                text,
                mask_word_index,
                top_k,
            },
        )?;
        let candidates = resp
            .candidates
            .into_iter()
            .map(|c| FillCandidate {
                word: c.word.trim().to_string(),
                log_prob: c.log_prob,
            })
            .collect();
        MaskedFillResult::new(candidates, resp.original_log_prob)
    }

    fn pos_tag(&self, texts: &[&str]) -> Result<Vec<Vec<TaggedToken>>> {
        let resp: PosTagResponse = self.post("/v1/pos_tag", &PosTagRequest { texts })?;
        if resp.tags.len() != texts.len() {
            return Err(Error::Provider(format!(
                "pos_tag returned {} results for {} texts",
                resp.tags.len(),
                texts.len()
            )));
        }
        Ok(resp
            .tags
            .into_iter()
            .map(|tags| tags.into_iter().map(|(w, t)| TaggedToken::new(w, t)).collect())
            .collect())
    }

    fn embed_images(&self, refs: &[&str]) -> Result<Vec<Vec<f32>>> {
        let resp: VectorsResponse = self.post(
            "/v1/embed_image",
            &EmbedImageRequest {
                image_paths_or_urls: refs,
            },
        )?;
        Self::vectors(resp, refs.len())
    }
}
