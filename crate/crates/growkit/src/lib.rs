//! File formats, corpus loading, experiment specs and the `growkit` command
//! line on top of [`growkit_core`].

pub mod checkpoint;
pub mod cli;
pub mod corpus;
pub mod curves;
pub mod error;
pub mod kv;
pub mod spec;

pub use checkpoint::{Checkpoint, GrowthRecord};
pub use error::{CheckpointError, Error, Result};
pub use spec::{run_spec, CorpusSource, ExperimentSpec, GrowthSpec, RunReport};
