//! Relational-subset weighted knowledge distillation for long-tailed
//! multi-label classification.
//!
//! The pipeline: generate a long-tailed dataset ([`data`]), partition its
//! classes into relational subsets ([`subsets`]), train one teacher per
//! subset and distill them into a unified student ([`train`], [`distill`]),
//! and report per-group mAP ([`eval`]). [`experiment`] wires the stages
//! together for the command-line driver.

pub mod data;
pub mod distill;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod nnet;
pub mod par;
pub mod rng;
pub mod subsets;
pub mod train;

pub use error::{Error, Result};
