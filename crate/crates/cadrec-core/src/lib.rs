//! Core algorithms for the CaDRec recommender.
//!
//! Everything in this crate is pure computation over in-memory data:
//! chronological splitting of interaction logs, the item co-occurrence
//! hypergraph and its normalized slices, the attention-perturbed hypergraph
//! convolution, the weighted multi-label objective with its hand-derived
//! gradients, ranking metrics, and a synthetic corpus generator with planted
//! biases. File formats, the CLI, and the training orchestration live in the
//! companion `cadrec` crate.
//!
//! The crate is `no_std`-compatible (`alloc` required); disable the default
//! `std` feature and enable `libm` for a float-math backend.

#![cfg_attr(not(feature = "std"), no_std)]

#[cfg(all(not(feature = "std"), not(feature = "libm")))]
compile_error!("cadrec-core requires either the `std` or the `libm` feature");

extern crate alloc;

pub mod encoders;
pub mod error;
pub mod evaluation;
pub mod hgc;
pub mod hypergraph;
pub mod interactions;
pub mod math;
pub mod matrix;
pub mod objective;
pub mod synth;

pub use error::CoreError;
pub use matrix::Mat;

/// Result alias used throughout the crate.
pub type Result<T> = core::result::Result<T, CoreError>;
