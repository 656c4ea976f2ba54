//! Score specifications: which estimator turns `(Z, Y)` into a number.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::estimators::CriticConfig;

/// Per-column estimator used by the featurewise sum.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum BaseEstimator {
    Knn {
        k: usize,
    },
    Dv {
        #[serde(default)]
        critic: CriticConfig,
    },
    Nwj {
        #[serde(default)]
        critic: CriticConfig,
    },
}

impl Default for BaseEstimator {
    fn default() -> Self {
        BaseEstimator::Knn { k: 3 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ScoreSpec {
    /// Sum over columns of a one-dimensional estimate of `I(Z_j; Y)`.
    FeaturewiseMiSum {
        #[serde(default)]
        base: BaseEstimator,
    },
    KnnCdMi {
        k: usize,
    },
    DvMi {
        #[serde(default)]
        critic: CriticConfig,
    },
    NwjMi {
        #[serde(default)]
        critic: CriticConfig,
    },
    /// `I(Z;Y) - beta * I(Z;X)`, both by nearest neighbours.
    Vgib {
        beta: f64,
        k: usize,
    },
}

impl Default for ScoreSpec {
    fn default() -> Self {
        ScoreSpec::FeaturewiseMiSum {
            base: BaseEstimator::default(),
        }
    }
}

impl BaseEstimator {
    pub fn validate(&self) -> Result<()> {
        match self {
            BaseEstimator::Knn { k } if *k == 0 => Err(invalid("score.base.k must be >= 1")),
            BaseEstimator::Knn { .. } => Ok(()),
            BaseEstimator::Dv { critic } | BaseEstimator::Nwj { critic } => critic.validate(),
        }
    }

    pub fn label(&self) -> String {
        match self {
            BaseEstimator::Knn { k } => format!("knn(k={k})"),
            BaseEstimator::Dv { .. } => "dv".into(),
            BaseEstimator::Nwj { .. } => "nwj".into(),
        }
    }
}

impl ScoreSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            ScoreSpec::FeaturewiseMiSum { base } => base.validate(),
            ScoreSpec::KnnCdMi { k } if *k == 0 => Err(invalid("score.k must be >= 1")),
            ScoreSpec::KnnCdMi { .. } => Ok(()),
            ScoreSpec::DvMi { critic } | ScoreSpec::NwjMi { critic } => critic.validate(),
            ScoreSpec::Vgib { beta, k } => {
                if !(*beta >= 0.0 && beta.is_finite()) {
                    Err(invalid("score.beta must be finite and >= 0"))
                } else if *k == 0 {
                    Err(invalid("score.k must be >= 1"))
                } else {
                    Ok(())
                }
            }
        }
    }

    pub fn label(&self) -> String {
        match self {
            ScoreSpec::FeaturewiseMiSum { base } => format!("featurewise-{}", base.label()),
            ScoreSpec::KnnCdMi { k } => format!("knn-cd(k={k})"),
            ScoreSpec::DvMi { .. } => "dv".into(),
            ScoreSpec::NwjMi { .. } => "nwj".into(),
            ScoreSpec::Vgib { beta, k } => format!("vgib(beta={beta},k={k})"),
        }
    }
}
