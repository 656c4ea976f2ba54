//! Per-command JSON configs and the shorthand parsers used by flags.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use ieff::channels::ChannelSpec;
use ieff::efficiency::EfficiencyOptions;
use ieff::harness::experiments::Table2Config;
use ieff::harness::logreg::LogregConfig;
use ieff::score::{BaseEstimator, ScoreSpec};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

/// Reads a JSON config, or returns the default when no path is given.
pub fn load<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T, CliError> {
    let Some(path) = path else {
        return Ok(T::default());
    };
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Validation(format!("cannot read config {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Validation(format!("config {}: {e}", path.display())))
}

/// Hex SHA-256 of the canonical JSON form of a resolved config.
pub fn config_hash<T: Serialize>(cfg: &T) -> Result<String, CliError> {
    let bytes = serde_json::to_vec(cfg).map_err(ieff::Error::from)?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CircleConfig {
    pub n: usize,
    pub alpha: f64,
    pub q: f64,
    pub symmetric: bool,
    pub seed: u64,
}

impl Default for CircleConfig {
    fn default() -> Self {
        Self {
            n: 10_000,
            alpha: PI / 2.0,
            q: 0.0,
            symmetric: false,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RedundantConfig {
    pub n: usize,
    pub sigma_eps: f64,
    pub seed: u64,
}

impl Default for RedundantConfig {
    fn default() -> Self {
        Self {
            n: 10_000,
            sigma_eps: 1.0,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LocationConfig {
    pub reps: usize,
    pub n_per_rep: usize,
    pub theta: f64,
    pub sigma: f64,
    pub tau: f64,
    pub seed: u64,
}

impl Default for LocationConfig {
    fn default() -> Self {
        Self {
            reps: 100_000,
            n_per_rep: 100,
            theta: 0.0,
            sigma: 1.0,
            tau: 0.0,
            seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Norm {
    #[default]
    Ratio,
    Diff,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EfficiencyConfig {
    pub data: Option<PathBuf>,
    pub channel: ChannelSpec,
    pub score: ScoreSpec,
    pub norm: Norm,
    pub options: EfficiencyOptions,
    pub seed: u64,
}

impl EfficiencyConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        if self.data.is_none() {
            return Err(CliError::Validation("efficiency needs a dataset (`data` or --data)".into()));
        }
        if self.norm == Norm::Diff && self.options.s_min.is_none() {
            return Err(CliError::Validation("norm `diff` needs options.s_min (or --smin)".into()));
        }
        self.score.validate()?;
        self.options.validate()?;
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    Signals,
    Digits,
    #[default]
    Both,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub domain: Domain,
    pub signals_n: usize,
    pub digits_csv: Option<PathBuf>,
    pub score: ScoreSpec,
    pub logreg: LogregConfig,
    pub table2: Table2Config,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            domain: Domain::Both,
            signals_n: 4000,
            digits_csv: None,
            score: ScoreSpec::default(),
            logreg: LogregConfig::default(),
            table2: Table2Config::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        if self.signals_n < 20 {
            return Err(CliError::Validation(format!("signals_n must be >= 20, got {}", self.signals_n)));
        }
        self.score.validate()?;
        self.logreg.validate()?;
        Ok(())
    }
}

fn count(s: &str, what: &str) -> Result<usize, CliError> {
    s.parse().map_err(|_| CliError::Validation(format!("{what}: `{s}` is not a count")))
}

/// Channel from JSON or the shorthands `identity`, `standardize`, `zero`,
/// `pca:K`, `randproj:K`, `fft_topk:K`, `downsample:M`.
pub fn parse_channel(s: &str) -> Result<ChannelSpec, CliError> {
    if s.trim_start().starts_with('{') {
        return serde_json::from_str(s).map_err(|e| CliError::Validation(format!("--channel: {e}")));
    }
    let (name, arg) = s.split_once(':').unwrap_or((s, ""));
    let need = |what| count(arg, what);
    Ok(match name {
        "identity" => ChannelSpec::Identity,
        "standardize" => ChannelSpec::Standardize,
        "zero" => ChannelSpec::Zero,
        "pca" => ChannelSpec::Pca { k: need("pca")? },
        "randproj" => ChannelSpec::Randproj { k: need("randproj")? },
        "fft_topk" => ChannelSpec::FftTopk { k: need("fft_topk")? },
        "downsample" => ChannelSpec::Downsample { m: need("downsample")? },
        _ => return Err(CliError::Validation(format!("--channel: unknown channel `{s}`"))),
    })
}

/// Score from JSON or the shorthands `featurewise[:K]`, `knn-cd:K`, `dv`,
/// `nwj`, `vgib:BETA:K`.
pub fn parse_score(s: &str) -> Result<ScoreSpec, CliError> {
    if s.trim_start().starts_with('{') {
        return serde_json::from_str(s).map_err(|e| CliError::Validation(format!("--score: {e}")));
    }
    let parts: Vec<&str> = s.split(':').collect();
    Ok(match parts.as_slice() {
        ["featurewise"] => ScoreSpec::default(),
        ["featurewise", k] => ScoreSpec::FeaturewiseMiSum {
            base: BaseEstimator::Knn { k: count(k, "featurewise")? },
        },
        ["knn-cd", k] => ScoreSpec::KnnCdMi { k: count(k, "knn-cd")? },
        ["dv"] => ScoreSpec::DvMi { critic: Default::default() },
        ["nwj"] => ScoreSpec::NwjMi { critic: Default::default() },
        ["vgib", beta, k] => ScoreSpec::Vgib {
            beta: beta.parse().map_err(|_| CliError::Validation(format!("--score: bad beta `{beta}`")))?,
            k: count(k, "vgib")?,
        },
        _ => return Err(CliError::Validation(format!("--score: unknown score `{s}`"))),
    })
}
