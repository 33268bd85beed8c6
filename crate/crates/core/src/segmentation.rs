//! Reduces a video's clips to 5-10 representative segments: k-means for
//! each k, keep the k with the best silhouette, then keep the clip closest
//! to each centroid.

use std::hash::Hasher;

use fnv::FnvHasher;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{VideoCorpus, VideoRecord};
use crate::error::{Error, Result};

pub const MAX_ITERATIONS: usize = 100;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SegMetric {
    #[default]
    Euclidean,
    /// Features are L2-normalised first, so Euclidean distance ranks like
    /// cosine distance.
    Cosine,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegmentationParams {
    pub k_min: usize,
    pub k_max: usize,
    pub metric: SegMetric,
}

impl Default for SegmentationParams {
    fn default() -> Self {
        Self {
            k_min: 5,
            k_max: 10,
            metric: SegMetric::Euclidean,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeans {
    pub assignments: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    pub iterations: usize,
}

impl KMeans {
    /// Sum of squared distances from each point to its centroid.
    pub fn objective(&self, points: &[Vec<f64>]) -> f64 {
        points
            .iter()
            .zip(&self.assignments)
            .map(|(p, &a)| sq_dist(p, &self.centroids[a]))
            .sum()
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    sq_dist(a, b).sqrt()
}

/// Index of the nearest centroid, ties to the lower index.
fn nearest(p: &[f64], centroids: &[Vec<f64>]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (j, c) in centroids.iter().enumerate() {
        let d = sq_dist(p, c);
        if d < best_d {
            best = j;
            best_d = d;
        }
    }
    best
}

fn kmeans_pp(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut centroids = vec![points[rng.random_range(0..n)].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut r = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if w > 0.0 && r < w {
                    chosen = i;
                    break;
                }
                r -= w;
            }
            // rounding can run past the end; take the last positive weight
            if d2[chosen] == 0.0 {
                chosen = d2.iter().rposition(|&w| w > 0.0).unwrap_or(chosen);
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        let c = points[pick].clone();
        for (i, p) in points.iter().enumerate() {
            d2[i] = d2[i].min(sq_dist(p, &c));
        }
        centroids.push(c);
    }
    centroids
}

fn means(points: &[Vec<f64>], assignments: &[usize], k: usize) -> Vec<Vec<f64>> {
    let dim = points[0].len();
    let mut sums = vec![vec![0.0; dim]; k];
    let mut counts = vec![0usize; k];
    for (p, &a) in points.iter().zip(assignments) {
        counts[a] += 1;
        for (s, x) in sums[a].iter_mut().zip(p) {
            *s += x;
        }
    }
    for (s, &c) in sums.iter_mut().zip(&counts) {
        if c > 0 {
            for x in s.iter_mut() {
                *x /= c as f64;
            }
        }
    }
    sums
}

/// Moves the point farthest from its own centroid (taken only from clusters
/// with more than one member) into each empty cluster.
fn fill_empty(points: &[Vec<f64>], assignments: &mut [usize], centroids: &mut [Vec<f64>]) {
    let k = centroids.len();
    loop {
        let mut counts = vec![0usize; k];
        for &a in assignments.iter() {
            counts[a] += 1;
        }
        let Some(empty) = counts.iter().position(|&c| c == 0) else {
            return;
        };
        let mut far = None;
        let mut far_d = -1.0;
        for (i, p) in points.iter().enumerate() {
            if counts[assignments[i]] < 2 {
                continue;
            }
            let d = sq_dist(p, &centroids[assignments[i]]);
            if d > far_d {
                far = Some(i);
                far_d = d;
            }
        }
        let i = far.expect("n >= k leaves a cluster with two members");
        assignments[i] = empty;
        centroids[empty] = points[i].clone();
    }
}

/// Lloyd's algorithm from a seeded k-means++ start. Stops when no
/// assignment changes or after [`MAX_ITERATIONS`]; every cluster ends
/// non-empty.
pub fn kmeans(points: &[Vec<f64>], k: usize, seed: u64) -> Result<KMeans> {
    if k == 0 {
        return Err(Error::invalid("k", "must be at least 1"));
    }
    if points.len() < k {
        return Err(Error::invalid(
            "k",
            format!("{k} clusters requested for {} points", points.len()),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = kmeans_pp(points, k, &mut rng);
    let mut assignments: Vec<usize> = points.iter().map(|p| nearest(p, &centroids)).collect();
    fill_empty(points, &mut assignments, &mut centroids);
    let mut iterations = 0;
    while iterations < MAX_ITERATIONS {
        iterations += 1;
        centroids = means(points, &assignments, k);
        let mut next: Vec<usize> = points.iter().map(|p| nearest(p, &centroids)).collect();
        fill_empty(points, &mut next, &mut centroids);
        if next == assignments {
            break;
        }
        assignments = next;
    }
    let centroids = means(points, &assignments, k);
    Ok(KMeans {
        assignments,
        centroids,
        iterations,
    })
}

/// Mean silhouette. Singleton clusters contribute 0, as does a point whose
/// intra and nearest-other distances are both 0.
pub fn silhouette(points: &[Vec<f64>], assignments: &[usize]) -> Result<f64> {
    if points.len() != assignments.len() || points.is_empty() {
        return Err(Error::invalid("silhouette", "one assignment per point required"));
    }
    let k = assignments.iter().max().map_or(0, |m| m + 1);
    let mut sizes = vec![0usize; k];
    for &a in assignments {
        sizes[a] += 1;
    }
    if sizes.iter().filter(|&&s| s > 0).count() < 2 {
        return Err(Error::invalid("silhouette", "needs at least two non-empty clusters"));
    }
    let n = points.len();
    let mut total = 0.0;
    let mut sums = vec![0.0f64; k];
    for i in 0..n {
        let own = assignments[i];
        if sizes[own] == 1 {
            continue;
        }
        sums.iter_mut().for_each(|s| *s = 0.0);
        for j in 0..n {
            if i != j {
                sums[assignments[j]] += dist(&points[i], &points[j]);
            }
        }
        let a = sums[own] / (sizes[own] - 1) as f64;
        let b = (0..k)
            .filter(|&c| c != own && sizes[c] > 0)
            .map(|c| sums[c] / sizes[c] as f64)
            .fold(f64::INFINITY, f64::min);
        let m = a.max(b);
        if m > 0.0 {
            total += (b - a) / m;
        }
    }
    Ok(total / n as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateK {
    pub k: usize,
    pub silhouette: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentationResult {
    pub chosen_k: usize,
    pub kept_clip_ids: Vec<String>,
    /// Absent for pass-through videos.
    pub silhouette: Option<f64>,
    pub pass_through: bool,
    pub candidates: Vec<CandidateK>,
    pub seed: u64,
    pub init: String,
    pub max_iterations: usize,
    pub metric: SegMetric,
}

fn video_seed(seed: u64, video_id: &str, k: usize) -> u64 {
    let mut h = FnvHasher::default();
    h.write(&seed.to_le_bytes());
    h.write(video_id.as_bytes());
    h.write(&(k as u64).to_le_bytes());
    h.finish()
}

fn features(video: &VideoRecord, metric: SegMetric) -> Vec<Vec<f64>> {
    video
        .clips
        .iter()
        .map(|c| {
            let v: Vec<f64> = c.segmentation_features().iter().map(|&x| x as f64).collect();
            match metric {
                SegMetric::Euclidean => v,
                SegMetric::Cosine => {
                    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                    if n > 0.0 {
                        v.into_iter().map(|x| x / n).collect()
                    } else {
                        v
                    }
                }
            }
        })
        .collect()
}

pub fn select_segments(video: &VideoRecord, seed: u64, params: &SegmentationParams) -> Result<SegmentationResult> {
    let n = video.clips.len();
    let mut result = SegmentationResult {
        chosen_k: n,
        kept_clip_ids: Vec::new(),
        silhouette: None,
        pass_through: true,
        candidates: Vec::new(),
        seed,
        init: "kmeans++".into(),
        max_iterations: MAX_ITERATIONS,
        metric: params.metric,
    };
    if n < params.k_min.max(2) {
        let mut clips: Vec<_> = video.clips.iter().collect();
        sort_by_time(&mut clips);
        result.kept_clip_ids = clips.into_iter().map(|c| c.clip_id.clone()).collect();
        return Ok(result);
    }

    let points = features(video, params.metric);
    let mut best: Option<(f64, KMeans)> = None;
    for k in params.k_min..=params.k_max.min(n) {
        let km = kmeans(&points, k, video_seed(seed, &video.video_id, k))?;
        let s = silhouette(&points, &km.assignments)?;
        result.candidates.push(CandidateK { k, silhouette: s });
        // strict improvement only, so ties keep the smaller k
        if best.as_ref().is_none_or(|(b, _)| s > *b) {
            best = Some((s, km));
        }
    }
    let (s, km) = best.expect("k range is non-empty");
    let k = km.centroids.len();

    let mut kept = Vec::with_capacity(k);
    for (j, centroid) in km.centroids.iter().enumerate() {
        let mut pick: Option<(f64, usize)> = None;
        for (i, p) in points.iter().enumerate() {
            if km.assignments[i] != j {
                continue;
            }
            let d = sq_dist(p, centroid);
            let better = match pick {
                None => true,
                Some((bd, bi)) => d < bd || (d == bd && video.clips[i].clip_id < video.clips[bi].clip_id),
            };
            if better {
                pick = Some((d, i));
            }
        }
        kept.push(&video.clips[pick.expect("clusters are non-empty").1]);
    }
    sort_by_time(&mut kept);

    result.chosen_k = k;
    result.kept_clip_ids = kept.into_iter().map(|c| c.clip_id.clone()).collect();
    result.silhouette = Some(s);
    result.pass_through = false;
    Ok(result)
}

fn sort_by_time(clips: &mut [&crate::corpus::ClipRecord]) {
    clips.sort_by(|a, b| a.start_s.total_cmp(&b.start_s).then_with(|| a.clip_id.cmp(&b.clip_id)));
}

/// Segments every video (in parallel on the current rayon pool) and keeps
/// only the selected clips. Videos flagged `human_segments` are untouched.
pub fn preprocess_corpus(corpus: &VideoCorpus, seed: u64, params: &SegmentationParams) -> Result<VideoCorpus> {
    let videos: Vec<VideoRecord> = corpus
        .videos()
        .par_iter()
        .map(|v| {
            if v.human_segments {
                return Ok(v.clone());
            }
            let r = select_segments(v, seed, params)?;
            let mut out = v.clone();
            out.clips = r
                .kept_clip_ids
                .iter()
                .map(|id| {
                    v.clips
                        .iter()
                        .find(|c| &c.clip_id == id)
                        .cloned()
                        .expect("kept ids come from the video")
                })
                .collect();
            out.segmentation = Some(serde_json::to_value(&r)?);
            Ok(out)
        })
        .collect::<Result<_>>()?;
    VideoCorpus::from_videos(videos)
}
