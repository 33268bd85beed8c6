//! Data model, ingestion, validation and persistence for tasks, videos,
//! clips, the step corpus and schema libraries.
//!
//! Every collection is sorted by id after load, so iteration order (and
//! with it every downstream tie-break) is reproducible.

mod binary;
mod jsonl;
mod library;
mod steps;
mod tasks;
mod videos;

pub use binary::{EmbeddingMatrix, EMBEDDINGS_MAGIC, EMBEDDINGS_VERSION};
pub use jsonl::{read_jsonl, write_jsonl};
pub use library::{
    ClusteringInfo, LibraryMeta, Provenance, Schema, SchemaEntry, SchemaLibrary, LIBRARY_FORMAT_VERSION,
    MAX_SCHEMA_LEN,
};
pub use steps::{StepCorpus, StepLoadOptions, StepSentence};
pub use tasks::{filter_known_tasks, Partition, TaskRecord, TaskRegistry};
pub use videos::{ClipRecord, VideoCorpus, VideoLoadOptions, VideoRecord, DEFAULT_RANK_CUTOFF};

/// Companion binary embedding file for a JSONL path: same stem, `.bin`
/// extension, falling back to `embeddings.bin` in the same directory.
pub(crate) fn companion_bin(path: &std::path::Path) -> Option<std::path::PathBuf> {
    let same_stem = path.with_extension("bin");
    if same_stem.is_file() {
        return Some(same_stem);
    }
    let shared = path.parent()?.join("embeddings.bin");
    shared.is_file().then_some(shared)
}
