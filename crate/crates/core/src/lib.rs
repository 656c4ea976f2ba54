//! Interpretive efficiency: how much task-relevant information survives an
//! interpretive channel, measured against an information budget.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod channels;
pub mod data;
pub mod efficiency;
pub mod error;
pub mod estimators;
pub mod harness;
pub mod linalg;
pub mod numeric;
pub mod oracles;
pub mod rng;
pub mod score;

pub use data::{DataMatrix, Dataset, LabelVector};
pub use error::{Error, Result};
pub use rng::RngStream;
pub use score::{BaseEstimator, ScoreSpec};
