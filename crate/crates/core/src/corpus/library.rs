use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::steps::StepSentence;
use super::tasks::TaskRegistry;
use crate::error::{Error, Result};
use crate::scoring::{embed_checked, ScorerProvider, TaggedToken, TextSpace};

pub const LIBRARY_FORMAT_VERSION: u64 = 1;
pub const MAX_SCHEMA_LEN: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusteringInfo {
    pub linkage: String,
    pub metric: String,
    pub distance_threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Provenance {
    Induced {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        clustering: Option<ClusteringInfo>,
    },
    Edited {
        source_task_id: String,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SchemaEntry {
    pub step: StepSentence,
    pub score: f64,
}

/// A bag of scored step sentences for one task.
#[derive(Debug, Clone, PartialEq)]
pub struct Schema {
    pub task_id: String,
    entries: Vec<SchemaEntry>,
    pub provenance: Provenance,
}

impl Schema {
    /// Orders entries by score (descending, ties by step id), drops later
    /// entries whose text repeats an earlier one, and checks the size bound.
    pub fn new(task_id: impl Into<String>, mut entries: Vec<SchemaEntry>, provenance: Provenance) -> Result<Self> {
        let task_id = task_id.into();
        entries.sort_by(|a, b| {
            b.score
                .total_cmp(&a.score)
                .then_with(|| a.step.step_id.cmp(&b.step.step_id))
        });
        let mut seen = HashSet::new();
        entries.retain(|e| seen.insert(e.step.text.clone()));
        if entries.is_empty() {
            return Err(Error::invalid("schema", format!("{task_id}: no entries")));
        }
        if entries.len() > MAX_SCHEMA_LEN {
            return Err(Error::invalid(
                "schema",
                format!("{task_id}: {} entries exceed the limit of {MAX_SCHEMA_LEN}", entries.len()),
            ));
        }
        Ok(Self {
            task_id,
            entries,
            provenance,
        })
    }

    pub fn entries(&self) -> &[SchemaEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn texts(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.step.text.as_str())
    }

    pub fn steps(&self) -> impl Iterator<Item = &StepSentence> {
        self.entries.iter().map(|e| &e.step)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LibraryMeta {
    #[serde(default)]
    pub corpus_fingerprint: String,
    /// Creation parameters, echoed verbatim.
    #[serde(default)]
    pub params: BTreeMap<String, serde_json::Value>,
    /// Task id → name for every schema, so a library is usable without the
    /// registry it was built from.
    #[serde(default)]
    pub task_names: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SchemaLibrary {
    pub schemas: BTreeMap<String, Schema>,
    pub meta: LibraryMeta,
}

#[derive(Serialize, Deserialize)]
struct EntryWire {
    text: String,
    score: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    step_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    embedding: Option<Vec<f32>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    tokens: Option<Vec<TaggedToken>>,
}

#[derive(Serialize, Deserialize)]
struct SchemaWire {
    task_id: String,
    provenance: Provenance,
    entries: Vec<EntryWire>,
}

#[derive(Serialize, Deserialize)]
struct LibraryWire {
    format_version: u64,
    #[serde(default)]
    meta: LibraryMeta,
    schemas: Vec<SchemaWire>,
}

impl SchemaLibrary {
    pub fn insert(&mut self, schema: Schema) {
        self.schemas.insert(schema.task_id.clone(), schema);
    }

    pub fn get(&self, task_id: &str) -> Option<&Schema> {
        self.schemas.get(task_id)
    }

    pub fn len(&self) -> usize {
        self.schemas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.schemas.is_empty()
    }

    pub fn to_json(&self) -> Result<String> {
        let wire = LibraryWire {
            format_version: LIBRARY_FORMAT_VERSION,
            meta: self.meta.clone(),
            schemas: self
                .schemas
                .values()
                .map(|s| SchemaWire {
                    task_id: s.task_id.clone(),
                    provenance: s.provenance.clone(),
                    entries: s
                        .entries
                        .iter()
                        .map(|e| EntryWire {
                            text: e.step.text.clone(),
                            score: e.score,
                            step_id: Some(e.step.step_id.clone()),
                            embedding: Some(e.step.embedding.clone()),
                            tokens: e.step.tokens.clone(),
                        })
                        .collect(),
                })
                .collect(),
        };
        let mut s = serde_json::to_string_pretty(&wire)?;
        s.push('\n');
        Ok(s)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    /// Loads a library. Every schema's task must resolve in `registry`, or
    /// in the library's own `task_names` table when no registry is given.
    /// Entries without an embedding are embedded with `embedder` (joint
    /// space) or rejected.
    pub fn load(path: &Path, registry: Option<&TaskRegistry>, embedder: Option<&dyn ScorerProvider>) -> Result<Self> {
        let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&raw, registry, embedder)
    }

    pub fn from_json(raw: &str, registry: Option<&TaskRegistry>, embedder: Option<&dyn ScorerProvider>) -> Result<Self> {
        let header: serde_json::Value = serde_json::from_str(raw)?;
        let version = header.get("format_version").and_then(serde_json::Value::as_u64);
        if version != Some(LIBRARY_FORMAT_VERSION) {
            return Err(Error::FormatVersion {
                found: version.unwrap_or(0),
                expected: LIBRARY_FORMAT_VERSION,
            });
        }
        let wire: LibraryWire = serde_json::from_value(header)?;

        let mut missing = Vec::new();
        for s in &wire.schemas {
            let resolves = match registry {
                Some(r) => r.get(&s.task_id).is_some(),
                None => wire.meta.task_names.contains_key(&s.task_id),
            };
            if !resolves {
                missing.push(s.task_id.clone());
            }
        }
        if !missing.is_empty() {
            return Err(Error::UnknownTask(missing.join(", ")));
        }

        let mut lib = SchemaLibrary {
            schemas: BTreeMap::new(),
            meta: wire.meta,
        };
        for s in wire.schemas {
            let unembedded: Vec<&str> = s
                .entries
                .iter()
                .filter(|e| e.embedding.is_none())
                .map(|e| e.text.as_str())
                .collect();
            let mut fresh = match (unembedded.is_empty(), embedder) {
                (true, _) => Vec::new(),
                (false, Some(p)) => embed_checked(p, TextSpace::Joint, &unembedded)?,
                (false, None) => return Err(Error::MissingEmbedding(format!("{}: {}", s.task_id, unembedded[0]))),
            }
            .into_iter();
            let mut entries = Vec::with_capacity(s.entries.len());
            for (i, e) in s.entries.into_iter().enumerate() {
                let embedding = match e.embedding {
                    Some(v) => v,
                    None => fresh.next().expect("one embedding per unembedded entry"),
                };
                let mut step = StepSentence::new(
                    e.step_id.unwrap_or_else(|| format!("{}#{i}", s.task_id)),
                    e.text,
                    embedding,
                )?;
                if let Some(tokens) = e.tokens {
                    step = step.with_tokens(tokens)?;
                }
                entries.push(SchemaEntry { step, score: e.score });
            }
            let schema = Schema::new(s.task_id, entries, s.provenance)?;
            if lib.schemas.contains_key(&schema.task_id) {
                return Err(Error::DuplicateId(schema.task_id));
            }
            lib.insert(schema);
        }
        Ok(lib)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Partition, TaskRecord};
    use proptest::prelude::*;

    fn entry(id: &str, text: &str, score: f64) -> SchemaEntry {
        SchemaEntry {
            step: StepSentence::new(id, text, vec![score as f32 + 0.5, 1.0]).unwrap(),
            score,
        }
    }

    fn library() -> SchemaLibrary {
        let mut lib = SchemaLibrary::default();
        lib.insert(
            Schema::new(
                "t1",
                vec![entry("a", "Put the ham in the oven.", 0.25), entry("b", "Slice the ham.", 0.5)],
                Provenance::Induced {
                    clustering: Some(ClusteringInfo {
                        linkage: "average".into(),
                        metric: "cosine".into(),
                        distance_threshold: 0.1,
                    }),
                },
            )
            .unwrap(),
        );
        lib.insert(
            Schema::new(
                "t2",
                vec![entry("c", "Put the lamb in the oven.", 0.1)],
                Provenance::Edited {
                    source_task_id: "t1".into(),
                },
            )
            .unwrap(),
        );
        lib.meta.task_names.insert("t1".into(), "Cook Ham".into());
        lib.meta.task_names.insert("t2".into(), "Cook Lamb".into());
        lib.meta.params.insert("beta".into(), serde_json::json!(0.8));
        lib
    }

    #[test]
    fn schema_sorted_and_deduplicated() {
        let s = Schema::new(
            "t",
            vec![entry("x", "A.", 0.1), entry("b", "B.", 0.9), entry("a", "A.", 0.9), entry("c", "C.", 0.9)],
            Provenance::Induced { clustering: None },
        )
        .unwrap();
        let ids: Vec<_> = s.steps().map(|s| s.step_id.as_str()).collect();
        assert_eq!(ids, ["a", "b", "c"]);
    }

    #[test]
    fn schema_size_bounds() {
        assert!(Schema::new("t", vec![], Provenance::Induced { clustering: None }).is_err());
        let many = (0..101).map(|i| entry(&format!("{i:03}"), &format!("s{i}"), 0.0)).collect();
        assert!(Schema::new("t", many, Provenance::Induced { clustering: None }).is_err());
    }

    #[test]
    fn save_load_equal() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("lib.json");
        let lib = library();
        lib.save(&p).unwrap();
        assert_eq!(SchemaLibrary::load(&p, None, None).unwrap(), lib);
    }

    #[test]
    fn unknown_version_rejected() {
        let raw = library().to_json().unwrap().replace("\"format_version\": 1", "\"format_version\": 7");
        assert!(matches!(
            SchemaLibrary::from_json(&raw, None, None),
            Err(Error::FormatVersion { found: 7, .. })
        ));
    }

    #[test]
    fn absent_task_listed() {
        let registry = TaskRegistry::from_tasks([TaskRecord::new("t1", "Cook Ham", Partition::Known)]).unwrap();
        let raw = library().to_json().unwrap();
        let err = SchemaLibrary::from_json(&raw, Some(&registry), None).unwrap_err();
        assert!(err.to_string().contains("t2"), "{err}");
    }

    #[test]
    fn minimal_entries_need_embedder() {
        let raw = r#"{"format_version":1,"meta":{"task_names":{"t":"Bake Chicken"}},
            "schemas":[{"task_id":"t","provenance":{"kind":"induced"},"entries":[{"text":"Bake the chicken.","score":0.5}]}]}"#;
        assert!(SchemaLibrary::from_json(raw, None, None).is_err());
        let p = crate::scoring::SyntheticProvider::default();
        let lib = SchemaLibrary::from_json(raw, None, Some(&p)).unwrap();
        assert_eq!(lib.get("t").unwrap().entries()[0].step.step_id, "t#0");
    }

    proptest! {
        #[test]
        fn round_trip_is_identity(
            scores in proptest::collection::vec(-1.0f64..1.0, 1..20),
            emb in proptest::collection::vec(-100.0f32..100.0, 3),
        ) {
            prop_assume!(emb.iter().any(|x| *x != 0.0));
            let entries = scores
                .iter()
                .enumerate()
                .map(|(i, &s)| SchemaEntry {
                    step: StepSentence::new(format!("s{i}"), format!("Step number {i}."), emb.clone()).unwrap(),
                    score: s,
                })
                .collect();
            let mut lib = SchemaLibrary::default();
            lib.insert(Schema::new("t", entries, Provenance::Induced { clustering: None }).unwrap());
            lib.meta.task_names.insert("t".into(), "Task".into());
            let back = SchemaLibrary::from_json(&lib.to_json().unwrap(), None, None).unwrap();
            prop_assert_eq!(back, lib);
        }
    }
}
