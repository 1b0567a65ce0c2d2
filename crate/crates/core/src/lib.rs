//! Algorithmic core for CATE estimation under inference-time text confounding.
//!
//! Training data carries the full covariate vector `X`; at prediction time only
//! a text description `T` of the unit is available. The estimator learns
//! outcome and propensity nuisances on `X`, builds doubly-robust pseudo-outcomes,
//! renders text surrogates from `X`, and regresses the pseudo-outcomes on text
//! embeddings so that predictions target `E[tau(X) | T = t]`.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, the remote text
//! client and the experiment runner live in the `tca` companion crate.
#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod data;
pub mod dgp;
pub mod encoder;
mod error;
pub mod eval;
pub mod learners;
pub mod linalg;
pub(crate) mod math;
pub mod nuisance;
pub mod pseudo;
pub mod rng;
pub mod surrogate;
pub mod world;

pub use error::{Error, Result};
