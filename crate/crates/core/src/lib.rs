//! Clickstream-based prediction of in-video quiz performance.
//!
//! Sessions of typed player clicks are encoded as per-event feature rows
//! and fed to a GRU classifier that predicts whether the student will be
//! correct on the first attempt (CFA). The GRU can be warmed up by
//! leave-one-out click prediction, and trained with a learned per-sample
//! weighting that is fitted on a small meta set, clustered by behaviour
//! and visited in order of label entropy.

mod error;

pub mod baselines;
pub mod clickstream;
pub mod clustering;
pub mod data;
pub mod dataset;
pub mod eval;
pub mod kv;
pub mod meta;
pub mod model;
pub mod pretrain;
pub mod recipe;
pub mod train;

pub use error::{Error, Result};
