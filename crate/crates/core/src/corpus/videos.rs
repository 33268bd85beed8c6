use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::binary::EmbeddingMatrix;
use super::jsonl::{read_jsonl, write_jsonl};
use super::steps::resolve_matrix;
use crate::error::{Error, Result};
use crate::scoring::norm;

pub const DEFAULT_RANK_CUTOFF: u32 = 150;

/// A video segment in the joint embedding space.
#[derive(Debug, Clone, PartialEq)]
pub struct ClipRecord {
    pub clip_id: String,
    pub video_id: String,
    pub start_s: f32,
    pub end_s: f32,
    pub embedding: Vec<f32>,
    /// Optional separate features for segmentation; the joint embedding is
    /// used when absent.
    pub seg_embedding: Option<Vec<f32>>,
}

impl ClipRecord {
    pub fn segmentation_features(&self) -> &[f32] {
        self.seg_embedding.as_deref().unwrap_or(&self.embedding)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VideoRecord {
    pub video_id: String,
    /// Ground-truth task; absent for unlabelled pool members.
    pub task_id: Option<String>,
    pub clips: Vec<ClipRecord>,
    pub source_rank: Option<u32>,
    /// Clips are human-annotated segments; preprocessing leaves them alone.
    pub human_segments: bool,
    /// Metadata written by preprocessing.
    pub segmentation: Option<serde_json::Value>,
}

#[derive(Debug, Clone)]
pub struct VideoLoadOptions {
    pub embeddings: Option<PathBuf>,
    /// Videos whose `source_rank` exceeds this are dropped. `None` keeps all.
    pub rank_cutoff: Option<u32>,
}

impl Default for VideoLoadOptions {
    fn default() -> Self {
        Self {
            embeddings: None,
            rank_cutoff: Some(DEFAULT_RANK_CUTOFF),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct ClipLine {
    clip_id: String,
    start_s: f32,
    end_s: f32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    embedding: Option<Vec<f32>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    embedding_ref: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    seg_embedding: Option<Vec<f32>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    seg_embedding_ref: Option<usize>,
}

#[derive(Serialize, Deserialize)]
struct VideoLine {
    video_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    task_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    source_rank: Option<u32>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    human_segments: bool,
    clips: Vec<ClipLine>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    segmentation: Option<serde_json::Value>,
}

/// A set of videos sorted by video id.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoCorpus {
    videos: Vec<VideoRecord>,
    index: HashMap<String, usize>,
    dim: usize,
}

impl VideoCorpus {
    /// Validates and sorts. An empty corpus is allowed here (a filtered
    /// pool may legitimately be empty); callers that need videos check.
    pub fn from_videos(mut videos: Vec<VideoRecord>) -> Result<Self> {
        videos.sort_by(|a, b| a.video_id.cmp(&b.video_id));
        let dim = videos
            .first()
            .and_then(|v| v.clips.first())
            .map_or(0, |c| c.embedding.len());
        let mut index = HashMap::with_capacity(videos.len());
        let mut clip_ids = HashSet::new();
        for (i, v) in videos.iter().enumerate() {
            if index.insert(v.video_id.clone(), i).is_some() {
                return Err(Error::DuplicateId(v.video_id.clone()));
            }
            if v.clips.is_empty() {
                return Err(Error::invalid("video", format!("{} has no clips", v.video_id)));
            }
            for c in &v.clips {
                validate_clip(c, v, dim)?;
                if !clip_ids.insert(c.clip_id.as_str()) {
                    return Err(Error::DuplicateId(c.clip_id.clone()));
                }
            }
        }
        Ok(Self { videos, index, dim })
    }

    pub fn load(path: &Path, options: &VideoLoadOptions) -> Result<Self> {
        let lines: Vec<(usize, VideoLine)> = read_jsonl(path)?;
        let needs_matrix = lines
            .iter()
            .flat_map(|(_, v)| &v.clips)
            .any(|c| c.embedding_ref.is_some() || c.seg_embedding_ref.is_some());
        let matrix = resolve_matrix(path, options.embeddings.as_deref(), needs_matrix)?;
        let row = |r: Option<usize>, clip_id: &str| -> Result<Option<Vec<f32>>> {
            match r {
                None => Ok(None),
                Some(r) => matrix
                    .as_ref()
                    .and_then(|m| m.row(r))
                    .map(|row| Some(row.to_vec()))
                    .ok_or_else(|| Error::MissingEmbedding(clip_id.to_string())),
            }
        };

        let mut videos = Vec::with_capacity(lines.len());
        let mut dropped = 0usize;
        for (_, line) in lines {
            if let (Some(cutoff), Some(rank)) = (options.rank_cutoff, line.source_rank) {
                if rank > cutoff {
                    dropped += 1;
                    continue;
                }
            }
            let mut clips = Vec::with_capacity(line.clips.len());
            for c in line.clips {
                let embedding = match c.embedding {
                    Some(e) => e,
                    None => row(c.embedding_ref, &c.clip_id)?.ok_or_else(|| Error::MissingEmbedding(c.clip_id.clone()))?,
                };
                let seg_embedding = match c.seg_embedding {
                    Some(e) => Some(e),
                    None => row(c.seg_embedding_ref, &c.clip_id)?,
                };
                clips.push(ClipRecord {
                    clip_id: c.clip_id,
                    video_id: line.video_id.clone(),
                    start_s: c.start_s,
                    end_s: c.end_s,
                    embedding,
                    seg_embedding,
                });
            }
            videos.push(VideoRecord {
                video_id: line.video_id,
                task_id: line.task_id,
                clips,
                source_rank: line.source_rank,
                human_segments: line.human_segments,
                segmentation: line.segmentation,
            });
        }
        if dropped > 0 {
            log::info!("{}: dropped {dropped} videos beyond the rank cutoff", path.display());
        }
        Self::from_videos(videos)
    }

    /// Writes JSONL with inline embeddings.
    pub fn save(&self, path: &Path) -> Result<()> {
        let lines: Vec<VideoLine> = self.videos.iter().map(|v| to_line(v, None)).collect();
        write_jsonl(path, &lines)
    }

    /// Writes JSONL whose clips reference rows of a binary embedding file.
    pub fn save_with_binary(&self, path: &Path, bin_path: &Path) -> Result<()> {
        let mut matrix = EmbeddingMatrix::new(self.dim);
        let mut lines = Vec::with_capacity(self.videos.len());
        for v in &self.videos {
            lines.push(to_line(v, Some(&mut matrix)));
        }
        matrix.write(bin_path)?;
        write_jsonl(path, &lines)
    }

    pub fn videos(&self) -> &[VideoRecord] {
        &self.videos
    }

    pub fn len(&self) -> usize {
        self.videos.len()
    }

    pub fn is_empty(&self) -> bool {
        self.videos.is_empty()
    }

    /// Joint-space dimension (0 for an empty corpus).
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, video_id: &str) -> Option<&VideoRecord> {
        self.index.get(video_id).map(|&i| &self.videos[i])
    }

    pub fn contains(&self, video_id: &str) -> bool {
        self.index.contains_key(video_id)
    }

    /// Videos labelled with `task_id`, in id order.
    pub fn videos_for_task<'a>(&'a self, task_id: &'a str) -> impl Iterator<Item = &'a VideoRecord> + 'a {
        self.videos.iter().filter(move |v| v.task_id.as_deref() == Some(task_id))
    }

    pub fn counts_by_task(&self) -> BTreeMap<&str, usize> {
        let mut counts = BTreeMap::new();
        for v in &self.videos {
            if let Some(t) = &v.task_id {
                *counts.entry(t.as_str()).or_insert(0) += 1;
            }
        }
        counts
    }

    pub fn into_videos(self) -> Vec<VideoRecord> {
        self.videos
    }
}

fn validate_clip(c: &ClipRecord, v: &VideoRecord, dim: usize) -> Result<()> {
    if c.video_id != v.video_id {
        return Err(Error::invalid(
            "clip",
            format!("{} claims video {} but is listed under {}", c.clip_id, c.video_id, v.video_id),
        ));
    }
    if !(c.start_s < c.end_s) {
        return Err(Error::invalid(
            "clip",
            format!("{}: start_s {} is not before end_s {}", c.clip_id, c.start_s, c.end_s),
        ));
    }
    if c.embedding.len() != dim {
        return Err(Error::DimensionMismatch {
            id: c.clip_id.clone(),
            expected: dim,
            found: c.embedding.len(),
        });
    }
    let n = norm(&c.embedding);
    if !(n > 0.0 && n.is_finite()) {
        return Err(Error::invalid("clip embedding", format!("{}: zero or non-finite norm", c.clip_id)));
    }
    Ok(())
}

fn to_line(v: &VideoRecord, mut matrix: Option<&mut EmbeddingMatrix>) -> VideoLine {
    let clips = v
        .clips
        .iter()
        .map(|c| {
            let (embedding, embedding_ref, seg_embedding, seg_embedding_ref) = match matrix.as_deref_mut() {
                None => (Some(c.embedding.clone()), None, c.seg_embedding.clone(), None),
                Some(m) => {
                    // dimensions were validated on construction
                    let e = m.push(&c.embedding).expect("clip dimension");
                    // segmentation features may have their own dimension
                    let (s, sr) = match &c.seg_embedding {
                        Some(s) if s.len() == m.dim() => (None, Some(m.push(s).expect("seg dimension"))),
                        other => (other.clone(), None),
                    };
                    (None, Some(e), s, sr)
                }
            };
            ClipLine {
                clip_id: c.clip_id.clone(),
                start_s: c.start_s,
                end_s: c.end_s,
                embedding,
                embedding_ref,
                seg_embedding,
                seg_embedding_ref,
            }
        })
        .collect();
    VideoLine {
        video_id: v.video_id.clone(),
        task_id: v.task_id.clone(),
        source_rank: v.source_rank,
        human_segments: v.human_segments,
        clips,
        segmentation: v.segmentation.clone(),
    }
}
