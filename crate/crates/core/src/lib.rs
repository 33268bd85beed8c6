//! Schema induction, editing and schema-aware video retrieval.
//!
//! The pipeline: [`induction`] builds a bag of step sentences for each
//! known task from its videos, [`editing`] rewrites a known task's schema
//! for an unseen one, and [`retrieval`] ranks a video pool for a task-name
//! query with or without schemata. [`eval`] scores rankings and
//! [`synthworld`] generates planted worlds with brute-force oracles.

pub mod config;
pub mod corpus;
pub mod editing;
pub mod error;
pub mod eval;
pub mod induction;
pub mod scoring;
pub mod retrieval;
pub mod segmentation;
pub mod similarity;
pub mod synthworld;

pub use error::{Error, Result};
