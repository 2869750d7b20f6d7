//! Few-shot intent classification by pairwise similarity.
//!
//! A query utterance is labelled with the intent of its most similar labelled
//! neighbour. This crate provides every piece of that pipeline without touching
//! the filesystem:
//!
//! - [`datamodel`]: utterances, corpora and intent folds.
//! - [`episodes`]: balanced N-way k-shot and imbalanced episode samplers.
//! - [`encoder`]: the backbone contract plus a small trainable transformer.
//! - [`scoring`]: cross-encoder and bi-encoder scoring heads.
//! - [`training`]: the per-query pairwise loss and the non-episodic, episodic
//!   and support/query episodic training regimes.
//! - [`inference`]: nearest-neighbour, prototype, random and frozen-encoder
//!   predictors.
//! - [`harness`]: evaluation, result tables, synthetic corpora and the
//!   in-memory experiment pipeline.
//!
//! The crate is `no_std` and only needs `alloc`.

#![cfg_attr(not(feature = "std"), no_std)]
#![forbid(unsafe_code)]

extern crate alloc;

pub mod datamodel;
pub mod encoder;
pub mod episodes;
mod error;
pub mod harness;
pub mod inference;
pub mod math;
pub mod rng;
pub mod scoring;
pub mod training;

pub use error::{Error, Result};
