use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::jsonl::{read_jsonl, write_jsonl};
use super::videos::VideoCorpus;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Partition {
    Known,
    Unknown,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskRecord {
    pub task_id: String,
    /// The query text.
    pub name: String,
    pub partition: Partition,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub main_object: Option<String>,
    /// Unit-normalised mean image embedding (visual task representation).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_embedding: Option<Vec<f64>>,
}

impl TaskRecord {
    pub fn new(task_id: impl Into<String>, name: impl Into<String>, partition: Partition) -> Self {
        Self {
            task_id: task_id.into(),
            name: name.into(),
            partition,
            main_object: None,
            image_embedding: None,
        }
    }

    pub fn is_known(&self) -> bool {
        self.partition == Partition::Known
    }
}

/// Tasks keyed (and iterated) by task id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TaskRegistry {
    tasks: BTreeMap<String, TaskRecord>,
}

impl TaskRegistry {
    pub fn from_tasks(tasks: impl IntoIterator<Item = TaskRecord>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for t in tasks {
            if t.name.trim().is_empty() {
                return Err(Error::invalid("task", format!("{} has an empty name", t.task_id)));
            }
            let id = t.task_id.clone();
            if map.insert(id.clone(), t).is_some() {
                return Err(Error::DuplicateId(id));
            }
        }
        Ok(Self { tasks: map })
    }

    /// Loads `tasks.jsonl`: `{"task_id", "name", "partition", "main_object"?}`.
    pub fn load(path: &Path) -> Result<Self> {
        let rows: Vec<(usize, TaskRecord)> = read_jsonl(path)?;
        Self::from_tasks(rows.into_iter().map(|(_, t)| t))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_jsonl(path, self.tasks.values())
    }

    pub fn get(&self, task_id: &str) -> Option<&TaskRecord> {
        self.tasks.get(task_id)
    }

    pub fn get_mut(&mut self, task_id: &str) -> Option<&mut TaskRecord> {
        self.tasks.get_mut(task_id)
    }

    pub fn require(&self, task_id: &str) -> Result<&TaskRecord> {
        self.get(task_id).ok_or_else(|| Error::UnknownTask(task_id.to_string()))
    }

    /// Resolves a query that is either a task id or a task name (exact
    /// first, then case-insensitive). Ties go to the smallest task id.
    pub fn resolve(&self, id_or_name: &str) -> Option<&TaskRecord> {
        if let Some(t) = self.tasks.get(id_or_name) {
            return Some(t);
        }
        let q = id_or_name.trim();
        self.tasks
            .values()
            .find(|t| t.name == q)
            .or_else(|| self.tasks.values().find(|t| t.name.eq_ignore_ascii_case(q)))
    }

    pub fn iter(&self) -> impl Iterator<Item = &TaskRecord> {
        self.tasks.values()
    }

    pub fn known(&self) -> impl Iterator<Item = &TaskRecord> {
        self.tasks.values().filter(|t| t.is_known())
    }

    pub fn unknown(&self) -> impl Iterator<Item = &TaskRecord> {
        self.tasks.values().filter(|t| !t.is_known())
    }

    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    /// Checks that every labelled video names a registered task and that
    /// every known task has at least one video.
    pub fn check_videos(&self, videos: &VideoCorpus) -> Result<()> {
        let counts = videos.counts_by_task();
        if let Some(t) = counts.keys().find(|t| !self.tasks.contains_key(**t)) {
            return Err(Error::UnknownTask(t.to_string()));
        }
        if let Some(t) = self.known().find(|t| !counts.contains_key(t.task_id.as_str())) {
            return Err(Error::invalid("task", format!("known task {} has no videos", t.task_id)));
        }
        Ok(())
    }
}

/// Drops known tasks with fewer than `min_videos` videos. Unknown tasks are
/// kept as they are.
pub fn filter_known_tasks(registry: &TaskRegistry, videos: &VideoCorpus, min_videos: usize) -> TaskRegistry {
    let counts = videos.counts_by_task();
    let tasks: BTreeMap<String, TaskRecord> = registry
        .tasks
        .iter()
        .filter(|(id, t)| !t.is_known() || counts.get(id.as_str()).copied().unwrap_or(0) >= min_videos)
        .map(|(id, t)| (id.clone(), t.clone()))
        .collect();
    let filtered = TaskRegistry { tasks };
    let before = registry.known().count();
    let after = filtered.known().count();
    if after == 0 && before > 0 {
        log::warn!("no known task has at least {min_videos} videos; the known set is empty");
    } else if after < before {
        log::info!("kept {after} of {before} known tasks with at least {min_videos} videos");
    }
    filtered
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{ClipRecord, VideoRecord};

    fn videos(spec: &[(&str, usize)]) -> VideoCorpus {
        let mut out = Vec::new();
        for (task, n) in spec {
            for i in 0..*n {
                let vid = format!("{task}-{i}");
                out.push(VideoRecord {
                    video_id: vid.clone(),
                    task_id: Some(task.to_string()),
                    clips: vec![ClipRecord {
                        clip_id: format!("{vid}-c"),
                        video_id: vid,
                        start_s: 0.0,
                        end_s: 1.0,
                        embedding: vec![1.0],
                        seg_embedding: None,
                    }],
                    source_rank: None,
                    human_segments: false,
                    segmentation: None,
                });
            }
        }
        VideoCorpus::from_videos(out).unwrap()
    }

    fn registry() -> TaskRegistry {
        TaskRegistry::from_tasks([
            TaskRecord::new("a", "Bake Chicken", Partition::Known),
            TaskRecord::new("b", "Cook Ham", Partition::Known),
            TaskRecord::new("c", "Bake Fish", Partition::Unknown),
        ])
        .unwrap()
    }

    #[test]
    fn nineteen_videos_excluded_at_twenty() {
        let v = videos(&[("a", 20), ("b", 19)]);
        let f = filter_known_tasks(&registry(), &v, 20);
        let known: Vec<_> = f.known().map(|t| t.task_id.as_str()).collect();
        assert_eq!(known, ["a"]);
        assert!(f.get("c").is_some());
    }

    #[test]
    fn zero_threshold_is_identity() {
        let v = videos(&[("a", 1), ("b", 1)]);
        assert_eq!(filter_known_tasks(&registry(), &v, 0), registry());
    }

    #[test]
    fn all_below_threshold_gives_empty_known_set() {
        let v = videos(&[("a", 3), ("b", 2)]);
        assert_eq!(filter_known_tasks(&registry(), &v, 20).known().count(), 0);
    }

    #[test]
    fn resolve_by_id_or_name() {
        let r = registry();
        assert_eq!(r.resolve("b").unwrap().name, "Cook Ham");
        assert_eq!(r.resolve("bake fish").unwrap().task_id, "c");
        assert!(r.resolve("Fix Toilet").is_none());
    }

    #[test]
    fn dangling_video_task_rejected() {
        let v = videos(&[("a", 1), ("b", 1), ("zzz", 1)]);
        assert!(matches!(registry().check_videos(&v), Err(Error::UnknownTask(t)) if t == "zzz"));
        let v = videos(&[("a", 1)]);
        assert!(registry().check_videos(&v).is_err());
    }

    #[test]
    fn jsonl_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("tasks.jsonl");
        let mut r = registry();
        r.get_mut("a").unwrap().main_object = Some("chicken".into());
        r.save(&p).unwrap();
        assert_eq!(TaskRegistry::load(&p).unwrap(), r);
        let raw = std::fs::read_to_string(&p).unwrap();
        assert!(raw.contains("\"partition\":\"unknown\""));
    }
}
