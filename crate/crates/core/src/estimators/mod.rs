//! Mutual-information estimators. All values are in nats.

pub mod critic;
pub mod featurewise;
pub mod kdtree;
pub mod knn;
pub mod plugin;
pub mod variational;

use serde::{Deserialize, Serialize};

pub use critic::{train_critic, CriticConfig, Mlp, Objective, TrainedCritic};
pub use featurewise::{mi_featurewise, FeaturewiseResult};
pub use knn::{knn_cd_terms, mi_knn_cd, mi_ksg_cc};
pub use plugin::{mi_plugin_discrete, JointTable};
pub use variational::{mi_dv, mi_nwj};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MIEstimate {
    pub value: f64,
    pub estimator: String,
    pub n_samples: usize,
    pub stderr: Option<f64>,
    /// Set when a negative raw estimate was clamped to zero.
    pub clamped: bool,
}

impl MIEstimate {
    pub fn new(value: f64, estimator: impl Into<String>, n_samples: usize) -> Self {
        Self {
            value,
            estimator: estimator.into(),
            n_samples,
            stderr: None,
            clamped: false,
        }
    }

    /// Clamps negative values to zero and records that it happened.
    pub fn clamp_nonnegative(mut self) -> Self {
        if self.value < 0.0 {
            self.value = 0.0;
            self.clamped = true;
        }
        self
    }
}
