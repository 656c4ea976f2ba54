//! Experiment runners producing the validation and robustness tables.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::generators::{gen_sinusoids, SinusoidConfig};
use super::logreg::{fit_logreg_tuned, logreg_cv_accuracy, FitDiagnostic, LogregConfig};
use super::robustness::{calibrate_sigma, probe_noise, robustness_with_noise};
use crate::channels::{compose, fit_standardizer, Channel, ChannelSpec};
use crate::data::{Dataset, DataMatrix};
use crate::efficiency::{evaluate_score, normalize_ratio, Flag, Flags};
use crate::error::{invalid, Error, Result};
use crate::estimators::CriticConfig;
use crate::numeric::spearman;
use crate::rng::RngStream;
use crate::score::{BaseEstimator, ScoreSpec};

pub const EXPERIMENT_HEADER: &str = "dataset,map,n_feat,sum_mi,per_dim_mi,E_ratio,acc_mean,acc_std,acc_robust,gap";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRow {
    pub dataset: String,
    pub map: String,
    pub n_feat: usize,
    pub sum_mi: f64,
    pub per_dim_mi: f64,
    pub e_ratio: f64,
    pub acc_mean: f64,
    pub acc_std: Option<f64>,
    pub acc_robust: Option<f64>,
    pub gap: Option<f64>,
    pub flags: Flags,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub rows: Vec<ExperimentRow>,
    /// Spearman correlation between `per_dim_mi` and `acc_robust`.
    pub spearman: Option<f64>,
    /// Maps left out of the correlation.
    pub spearman_excluded: Vec<String>,
    pub noise_sigma: Option<f64>,
    pub diagnostics: Vec<FitDiagnostic>,
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl ExperimentResult {
    pub fn sort_rows(&mut self) {
        self.rows
            .sort_by(|a, b| (&a.dataset, &a.map, a.n_feat).cmp(&(&b.dataset, &b.map, b.n_feat)));
    }

    pub fn row(&self, dataset: &str, map: &str) -> Option<&ExperimentRow> {
        self.rows.iter().find(|r| r.dataset == dataset && r.map == map)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(EXPERIMENT_HEADER);
        out.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                r.dataset,
                r.map,
                r.n_feat,
                r.sum_mi,
                r.per_dim_mi,
                r.e_ratio,
                r.acc_mean,
                cell(r.acc_std),
                cell(r.acc_robust),
                cell(r.gap)
            );
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })
    }
}

/// A channel fitted on training rows together with its score.
struct Scored {
    label: String,
    channel: Channel,
    z: DataMatrix,
    sum_mi: f64,
    flags: Flags,
}

fn score_spec(data: &Dataset, phi: &ChannelSpec, spec: &ScoreSpec, rng: &RngStream) -> Result<Scored> {
    let label = phi.label();
    let channel = phi.fit(&data.features, &rng.derive("channel", 0).derive(&label, 0))?;
    let z = channel.apply(&data.features)?;
    let s = evaluate_score(spec, &z, &data.features, &data.labels, &rng.derive("score", 0))?;
    Ok(Scored {
        label,
        channel,
        z,
        sum_mi: s.value,
        flags: s.flags,
    })
}

fn row_from(dataset: &str, s: &Scored, s_ref: f64) -> Result<ExperimentRow> {
    let (e_ratio, exceeds) = normalize_ratio(s.sum_mi, s_ref)?;
    let mut flags = s.flags.clone();
    if exceeds {
        flags.insert(Flag::RatioExceedsOne);
    }
    Ok(ExperimentRow {
        dataset: dataset.to_string(),
        map: s.label.clone(),
        n_feat: s.channel.out_dim,
        sum_mi: s.sum_mi,
        per_dim_mi: s.sum_mi / s.channel.out_dim as f64,
        e_ratio,
        acc_mean: f64::NAN,
        acc_std: None,
        acc_robust: None,
        gap: None,
        flags,
    })
}

/// One dataset of the validation table with the channels to compare.
#[derive(Clone, Debug)]
pub struct Table1Task {
    pub data: Dataset,
    pub channels: Vec<ChannelSpec>,
}

/// Sinusoid task with FFT-top-20, random projection to 16 and downsampling to 32.
pub fn signals_task(n: usize, seed: u64) -> Result<Table1Task> {
    let data = gen_sinusoids(&SinusoidConfig {
        n,
        seed,
        ..Default::default()
    })?;
    Ok(Table1Task {
        data,
        channels: vec![
            ChannelSpec::FftTopk { k: 20 },
            ChannelSpec::Randproj { k: 16 },
            ChannelSpec::Downsample { m: 32 },
        ],
    })
}

/// Digits task (on standardized pixels) with identity, PCA-16 and random projection to 16.
pub fn digits_task(train: Dataset) -> Table1Task {
    Table1Task {
        data: train,
        channels: vec![
            ChannelSpec::Identity,
            ChannelSpec::Pca { k: 16 },
            ChannelSpec::Randproj { k: 16 },
        ],
    }
}

/// Splits the raw digits table and standardizes pixels with train statistics.
pub fn digits_prepare(raw: &Dataset, rng: &RngStream) -> Result<(Dataset, Dataset)> {
    let (train, test) = super::digits::digits_split(raw, rng)?;
    let std = fit_standardizer(&train.features);
    Ok((
        train.with_features(std.apply(&train.features)?)?,
        test.with_features(std.apply(&test.features)?)?,
    ))
}

/// Classifier features: channel outputs standardized with training statistics.
fn standardized(z: &DataMatrix) -> Result<(Channel, DataMatrix)> {
    let s = fit_standardizer(z);
    let out = s.apply(z)?;
    Ok((s, out))
}

/// Scores every channel of every task against the identity reference of
/// its dataset, and measures cross-validated logistic-regression accuracy
/// on the standardized channel outputs.
pub fn run_table1(tasks: &[Table1Task], spec: &ScoreSpec, logreg: &LogregConfig, rng: &RngStream) -> Result<ExperimentResult> {
    spec.validate()?;
    logreg.validate()?;
    let mut result = ExperimentResult::default();
    for task in tasks {
        let name = task.data.name.clone();
        let task_rng = rng.derive("table1", 0).derive(&name, 0);
        let reference = score_spec(&task.data, &ChannelSpec::Identity, spec, &task_rng)?;
        let rows = task
            .channels
            .par_iter()
            .map(|phi| -> Result<(ExperimentRow, Vec<FitDiagnostic>)> {
                let s = score_spec(&task.data, phi, spec, &task_rng)?;
                let mut row = row_from(&name, &s, reference.sum_mi)?;
                let (_, z) = standardized(&s.z)?;
                let cv = logreg_cv_accuracy(&z, &task.data.labels, logreg, &task_rng.derive("cv", 0))?;
                row.acc_mean = cv.mean;
                row.acc_std = Some(cv.std);
                let diag = cv
                    .diagnostics
                    .into_iter()
                    .map(|mut d| {
                        d.context = format!("{name}/{}: {}", row.map, d.context);
                        d
                    })
                    .collect();
                Ok((row, diag))
            })
            .collect::<Result<Vec<_>>>()?;
        for (row, diag) in rows {
            result.rows.push(row);
            result.diagnostics.extend(diag);
        }
    }
    result.sort_rows();
    Ok(result)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Table2Config {
    pub k_list: Vec<usize>,
    /// Fixed test-time noise level; calibrated on the identity channel when absent.
    pub noise_sigma: Option<f64>,
    /// Clean-minus-noisy accuracy drop the calibration aims for.
    pub target_drop: f64,
    pub sigma_max: f64,
    /// Maps left out of the rank correlation.
    pub exclude_from_correlation: Vec<String>,
}

impl Default for Table2Config {
    fn default() -> Self {
        Self {
            k_list: vec![4, 8, 16, 32, 64],
            noise_sigma: None,
            target_drop: 0.15,
            sigma_max: 8.0,
            exclude_from_correlation: vec!["pca_k=64".into()],
        }
    }
}

impl Table2Config {
    pub fn validate(&self, dim: usize) -> Result<()> {
        if self.k_list.is_empty() || self.k_list.iter().any(|&k| k == 0 || k > dim) {
            return Err(invalid(format!("k_list entries must lie in 1..={dim}")));
        }
        if matches!(self.noise_sigma, Some(s) if !(s >= 0.0)) {
            return Err(invalid("noise_sigma must be >= 0"));
        }
        if !(self.target_drop > 0.0 && self.target_drop < 1.0) || !(self.sigma_max > 0.0) {
            return Err(invalid("target_drop must lie in (0, 1) and sigma_max must be positive"));
        }
        Ok(())
    }
}

/// PCA and random-projection sweeps with featurewise scores on `train`,
/// test accuracy with and without input noise, and the rank correlation
/// between per-dimension score and noisy accuracy.
pub fn run_table2(train: &Dataset, test: &Dataset, cfg: &Table2Config, spec: &ScoreSpec, logreg: &LogregConfig, rng: &RngStream) -> Result<ExperimentResult> {
    spec.validate()?;
    logreg.validate()?;
    cfg.validate(train.dim())?;
    let mut specs = vec![ChannelSpec::Identity];
    specs.extend(cfg.k_list.iter().map(|&k| ChannelSpec::Pca { k }));
    specs.extend(cfg.k_list.iter().map(|&k| ChannelSpec::Randproj { k }));
    let row_rng = rng.derive("table2", 0);
    let fitted = specs
        .par_iter()
        .map(|phi| {
            let s = score_spec(train, phi, spec, &row_rng)?;
            let (std, z) = standardized(&s.z)?;
            let (model, diag) = fit_logreg_tuned(&z, &train.labels, logreg, &row_rng.derive("classifier", 0))?;
            let full = compose(std, s.channel.clone())?;
            Ok((s, full, model, diag))
        })
        .collect::<Result<Vec<_>>>()?;
    let (reference, ref_channel, ref_model, _) = &fitted[0];
    let noise_rng = row_rng.derive("noise", 0);
    let sigma = match cfg.noise_sigma {
        Some(s) => s,
        None => calibrate_sigma(ref_channel, ref_model, test, cfg.target_drop, cfg.sigma_max, &noise_rng)?,
    };
    let noise = probe_noise(&test.features, &noise_rng)?;
    let mut result = ExperimentResult {
        noise_sigma: Some(sigma),
        spearman_excluded: cfg.exclude_from_correlation.clone(),
        ..Default::default()
    };
    for (s, channel, model, diag) in &fitted {
        let mut row = row_from(&train.name, s, reference.sum_mi)?;
        let r = robustness_with_noise(channel, model, test, sigma, &noise)?;
        row.acc_mean = r.acc_clean;
        row.acc_robust = Some(r.acc_robust);
        row.gap = Some(r.gap);
        result.rows.push(row);
        result.diagnostics.extend(diag.iter().cloned().map(|mut d| {
            d.context = format!("{}: {}", s.label, d.context);
            d
        }));
    }
    let kept: Vec<&ExperimentRow> = result
        .rows
        .iter()
        .filter(|r| !cfg.exclude_from_correlation.contains(&r.map))
        .collect();
    let xs: Vec<f64> = kept.iter().map(|r| r.per_dim_mi).collect();
    let ys: Vec<f64> = kept.iter().map(|r| r.acc_robust.unwrap_or(f64::NAN)).collect();
    result.spearman = (kept.len() >= 3).then(|| spearman(&xs, &ys));
    result.sort_rows();
    Ok(result)
}

/// `E(FFT-top-k)` with the bins fitted once on a reference draw and the
/// population reference `I(X;Y) = ln 2` (the two tones are separable), for
/// every `(n, seed)` pair. Returns one vector per entry of `n_values`.
pub fn concentration_sweep(n_values: &[usize], seeds: &[u64], k_bins: usize, base: &BaseEstimator, reference_seed: u64) -> Result<Vec<Vec<f64>>> {
    let reference = gen_sinusoids(&SinusoidConfig {
        n: 2000,
        seed: reference_seed,
        ..Default::default()
    })?;
    let channel = ChannelSpec::FftTopk { k: k_bins }.fit(&reference.features, &RngStream::new(reference_seed, 0))?;
    let spec = ScoreSpec::FeaturewiseMiSum { base: base.clone() };
    let s_ref = std::f64::consts::LN_2;
    n_values
        .iter()
        .map(|&n| {
            seeds
                .par_iter()
                .map(|&seed| {
                    let data = gen_sinusoids(&SinusoidConfig {
                        n,
                        seed,
                        ..Default::default()
                    })?;
                    let z = channel.apply(&data.features)?;
                    let s = evaluate_score(&spec, &z, &data.features, &data.labels, &RngStream::new(seed, 1))?;
                    Ok(normalize_ratio(s.value, s_ref)?.0)
                })
                .collect()
        })
        .collect()
}

/// Channel ranking on the sinusoid task under one featurewise base estimator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SwapRanking {
    pub estimator: String,
    pub scores: Vec<(String, f64)>,
    /// Channel labels from highest to lowest score.
    pub order: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SwapOutcome {
    pub seed: u64,
    pub rankings: Vec<SwapRanking>,
    pub agree: bool,
}

/// Ranks the sinusoid channels under the featurewise kNN score and under each variational score.
/// All channels share one reference, so ranking by score is ranking by `E`.
pub fn estimator_swap_ablation(n: usize, seeds: &[u64], knn_k: usize, critic: &CriticConfig) -> Result<Vec<SwapOutcome>> {
    let bases = [
        ("knn", BaseEstimator::Knn { k: knn_k }),
        ("nwj", BaseEstimator::Nwj { critic: critic.clone() }),
        ("dv", BaseEstimator::Dv { critic: critic.clone() }),
    ];
    seeds
        .iter()
        .map(|&seed| {
            let task = signals_task(n, seed)?;
            let rng = RngStream::new(seed, 2);
            let channels = task
                .channels
                .iter()
                .map(|phi| {
                    let ch = phi.fit(&task.data.features, &rng.derive("channel", 0))?;
                    Ok((phi.label(), ch.apply(&task.data.features)?))
                })
                .collect::<Result<Vec<_>>>()?;
            let rankings = bases
                .iter()
                .map(|(name, base)| {
                    let spec = ScoreSpec::FeaturewiseMiSum { base: base.clone() };
                    let scores = channels
                        .iter()
                        .map(|(label, z)| {
                            let s = evaluate_score(&spec, z, &task.data.features, &task.data.labels, &rng.derive("score", 0))?;
                            Ok((label.clone(), s.value))
                        })
                        .collect::<Result<Vec<_>>>()?;
                    let mut order = scores.clone();
                    order.sort_by(|a, b| b.1.total_cmp(&a.1));
                    Ok(SwapRanking {
                        estimator: name.to_string(),
                        scores,
                        order: order.into_iter().map(|(l, _)| l).collect(),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let agree = rankings.windows(2).all(|w| w[0].order == w[1].order);
            Ok(SwapOutcome { seed, rankings, agree })
        })
        .collect()
}
