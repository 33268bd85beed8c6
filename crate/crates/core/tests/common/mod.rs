#![allow(dead_code)]

use schemaforge::corpus::SchemaLibrary;
use schemaforge::induction::{induce_library, InductionParams};
use schemaforge::scoring::Matcher;
use schemaforge::synthworld::{generate, World, WorldSpec};

/// A world small enough for per-test generation and induction.
pub fn small_spec(seed: u64) -> WorldSpec {
    WorldSpec {
        seed,
        n_tasks: 8,
        train_videos_per_task: 4,
        videos_per_task: 2,
        distractor_steps: 20,
        distractor_videos: 4,
        vocab_size: 8,
        n_verbs: 3,
        ..WorldSpec::default()
    }
}

pub fn small_world(seed: u64) -> World {
    generate(&small_spec(seed)).unwrap()
}

pub fn library(world: &World) -> SchemaLibrary {
    let params = InductionParams {
        min_videos: 1,
        ..InductionParams::default()
    };
    induce_library(&world.tasks, &world.train, &world.steps, &Matcher::default(), &params).unwrap()
}
