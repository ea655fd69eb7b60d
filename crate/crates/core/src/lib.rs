//! Episodic few-shot classification over precomputed frame features.
//!
//! A linear projection head is trained end-to-end through one of three
//! differentiable base learners (prototypes, ridge regression, a multi-class
//! linear SVM) on n-way m-shot episodes drawn from class-disjoint splits.

pub mod bench;
pub mod cli;
pub mod config;
pub mod confusion;
pub mod dataset;
pub mod encoder;
pub mod error;
pub mod learners;
pub mod meta;
pub mod protocol;
pub mod rng;

pub use error::{Error, Result};
