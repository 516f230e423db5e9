//! Model-growth toolkit for small decoder-only transformers.
//!
//! The crate is `no_std` (with `alloc`). It holds everything that is pure
//! computation: the transformer and its exact gradients, the growth
//! operators, function-preservation and gradient checks, the training loop
//! over an in-memory token stream, and the scaling-law arithmetic. File
//! formats, corpus loading and the command line live in the `growkit` crate.
#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

mod error;
pub mod growth;
pub mod laws;
pub mod model;
pub mod rng;
pub mod tensor;
pub mod trainer;
pub mod verify;

pub use error::{Error, Result};
pub use model::{Gates, Gradients, LayerParams, ModelConfig, ParameterSet};
pub use tensor::{Matrix, Scalar};
