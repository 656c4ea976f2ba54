//! The efficiency functional and its estimation pipeline.
//! Also hosts the bound calculators used by the property batteries.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channels::{Channel, ChannelFitter, ChannelSpec};
use crate::data::{complement, stratified_folds, DataMatrix, Dataset, LabelVector};
use crate::error::{invalid, Error, Result};
use crate::estimators::critic::{train_critic, Objective};
use crate::estimators::featurewise::mi_column;
use crate::estimators::variational::fit_eval_split;
use crate::estimators::{mi_featurewise, mi_knn_cd, mi_ksg_cc};
use crate::numeric::median;
use crate::rng::RngStream;
use crate::score::{BaseEstimator, ScoreSpec};

/// References at or below this value (nats) are treated as degenerate.
pub const DEGENERATE_REFERENCE: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Flag {
    RatioExceedsOne,
    NegativeScoreClamped,
    DiffClamped,
    /// `I(Z;X)` was estimated for `Z = X`, where it is infinite in population.
    SelfInformationArtifact,
}

impl Flag {
    pub fn as_str(self) -> &'static str {
        match self {
            Flag::RatioExceedsOne => "ratio_exceeds_one",
            Flag::NegativeScoreClamped => "negative_score_clamped",
            Flag::DiffClamped => "diff_clamped",
            Flag::SelfInformationArtifact => "self_information_artifact",
        }
    }
}

pub type Flags = BTreeSet<Flag>;

/// A score value plus the flags its estimator raised.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreOutcome {
    pub value: f64,
    pub flags: Flags,
}

fn outcome(value: f64, clamped: bool) -> ScoreOutcome {
    let mut flags = Flags::new();
    if clamped {
        flags.insert(Flag::NegativeScoreClamped);
    }
    ScoreOutcome { value, flags }
}

/// `I(Z;Y) - beta I(Z;X)` by nearest neighbours.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VgibScore {
    pub value: f64,
    pub i_zy: f64,
    pub i_zx: f64,
    /// `Z` equals `X`; the `I(Z;X)` term is then a finite-sample artifact.
    pub self_information: bool,
}

pub fn vgib_score(x: &DataMatrix, z: &DataMatrix, y: &LabelVector, beta: f64, k: usize, rng: &RngStream) -> Result<VgibScore> {
    if !(beta >= 0.0) {
        return Err(invalid("vgib beta must be >= 0"));
    }
    if x.rows() != z.rows() {
        return Err(Error::DimensionMismatch {
            context: "vgib rows",
            expected: x.rows(),
            got: z.rows(),
        });
    }
    let i_zy = mi_knn_cd(z, y, k, &rng.derive("vgib-zy", 0))?.value;
    let i_zx = if beta == 0.0 {
        0.0
    } else {
        mi_ksg_cc(z, x, k, &rng.derive("vgib-zx", 0))?.value
    };
    Ok(VgibScore {
        value: i_zy - beta * i_zx,
        i_zy,
        i_zx,
        self_information: z == x,
    })
}

/// Scores `z` (with inputs `x` for the V-GIB term) under `spec`.
pub fn evaluate_score(spec: &ScoreSpec, z: &DataMatrix, x: &DataMatrix, y: &LabelVector, rng: &RngStream) -> Result<ScoreOutcome> {
    spec.validate()?;
    match spec {
        ScoreSpec::FeaturewiseMiSum { base } => {
            let r = mi_featurewise(z, y, base, rng)?;
            Ok(outcome(r.sum, r.per_feature.iter().any(|e| e.clamped)))
        }
        ScoreSpec::KnnCdMi { k } => {
            let e = mi_knn_cd(z, y, *k, rng)?;
            Ok(outcome(e.value, e.clamped))
        }
        ScoreSpec::DvMi { critic } => Ok(outcome(crate::estimators::mi_dv(z, y, critic, rng)?.value, false)),
        ScoreSpec::NwjMi { critic } => Ok(outcome(crate::estimators::mi_nwj(z, y, critic, rng)?.value, false)),
        ScoreSpec::Vgib { beta, k } => {
            let v = vgib_score(x, z, y, *beta, *k, rng)?;
            let mut o = outcome(v.value, false);
            if v.self_information && *beta > 0.0 {
                o.flags.insert(Flag::SelfInformationArtifact);
            }
            Ok(o)
        }
    }
}

/// Out-of-sample score: critic-based estimators train on `(z_fit, y_fit)` and
/// are evaluated on `(z_eval, y_eval)`; nearest-neighbour estimators only use
/// the evaluation part.
pub fn evaluate_score_split(
    spec: &ScoreSpec,
    fit: (&DataMatrix, &LabelVector),
    eval: (&DataMatrix, &DataMatrix, &LabelVector),
    rng: &RngStream,
) -> Result<ScoreOutcome> {
    spec.validate()?;
    let (z_fit, y_fit) = fit;
    let (z_eval, x_eval, y_eval) = eval;
    let critic_value = |z_fit: &DataMatrix, z_eval: &DataMatrix, obj: Objective, cfg, rng: &RngStream| -> Result<f64> {
        let c = train_critic(z_fit, y_fit, obj, cfg, rng)?;
        Ok(c.bounds(z_eval, y_eval)?.get(obj))
    };
    match spec {
        ScoreSpec::DvMi { critic } => Ok(outcome(critic_value(z_fit, z_eval, Objective::Dv, critic, rng)?, false)),
        ScoreSpec::NwjMi { critic } => Ok(outcome(critic_value(z_fit, z_eval, Objective::Nwj, critic, rng)?, false)),
        ScoreSpec::FeaturewiseMiSum {
            base: base @ (BaseEstimator::Dv { .. } | BaseEstimator::Nwj { .. }),
        } => {
            let (obj, cfg) = match base {
                BaseEstimator::Dv { critic } => (Objective::Dv, critic),
                BaseEstimator::Nwj { critic } => (Objective::Nwj, critic),
                BaseEstimator::Knn { .. } => unreachable!(),
            };
            let values = (0..z_eval.cols())
                .into_par_iter()
                .map(|j| {
                    let f = DataMatrix::column_vector(z_fit.column(j))?;
                    let e = DataMatrix::column_vector(z_eval.column(j))?;
                    critic_value(&f, &e, obj, cfg, &rng.derive("feature", 0))
                })
                .collect::<Result<Vec<f64>>>()?;
            Ok(outcome(values.iter().sum(), false))
        }
        _ => evaluate_score(spec, z_eval, x_eval, y_eval, rng),
    }
}

/// `S(phi; N)`: applies `phi` to the features and scores the result.
pub fn score_channel(data: &Dataset, phi: &Channel, spec: &ScoreSpec, rng: &RngStream) -> Result<ScoreOutcome> {
    let z = phi.apply(&data.features)?;
    evaluate_score(spec, &z, &data.features, &data.labels, rng)
}

/// `S_ref(N)`: the identity-channel score.
pub fn score_reference(data: &Dataset, spec: &ScoreSpec, rng: &RngStream) -> Result<ScoreOutcome> {
    score_channel(data, &Channel::identity(data.dim()), spec, rng)
}

/// `s / s_ref`, never clamped; the flag reports `e > 1`.
pub fn normalize_ratio(s: f64, s_ref: f64) -> Result<(f64, bool)> {
    if !(s_ref > DEGENERATE_REFERENCE) {
        return Err(Error::DegenerateReference {
            value: s_ref,
            threshold: DEGENERATE_REFERENCE,
        });
    }
    let e = s / s_ref;
    Ok((e, e > 1.0))
}

/// `1 - (s_ref - s)/(s_ref - s_min)` clamped to `[0, 1]`; the flag reports a clamp.
pub fn normalize_diff(s: f64, s_ref: f64, s_min: f64) -> Result<(f64, bool)> {
    if !(s_min < s_ref) {
        return Err(invalid(format!("difference normalization needs s_min < s_ref, got {s_min} >= {s_ref}")));
    }
    let e = 1.0 - (s_ref - s) / (s_ref - s_min);
    let c = e.clamp(0.0, 1.0);
    Ok((c, c != e))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrossFit {
    pub mean: f64,
    pub per_fold: Vec<f64>,
    pub flags: Flags,
}

/// K-fold cross-fitted score: the channel (and any critic) is fitted on the
/// other folds and the score evaluated on the held-out fold.
pub fn cross_fit_score(data: &Dataset, fitter: &dyn ChannelFitter, k: usize, spec: &ScoreSpec, rng: &RngStream) -> Result<CrossFit> {
    if k < 2 {
        return Err(invalid(format!("cross-fitting needs K >= 2, got {k}")));
    }
    spec.validate()?;
    let folds = stratified_folds(&data.labels, k, &rng.derive("folds", k as u64))?;
    let results = folds
        .par_iter()
        .enumerate()
        .map(|(f, held)| -> Result<ScoreOutcome> {
            let fold_rng = rng.derive("fold", f as u64);
            let train = data.subset(&complement(data.len(), held))?;
            let test = data.subset(held)?;
            let phi = fitter.fit_channel(&train.features, &fold_rng.derive("channel", 0))?;
            let z_train = phi.apply(&train.features)?;
            let z_test = phi.apply(&test.features)?;
            evaluate_score_split(
                spec,
                (&z_train, &train.labels),
                (&z_test, &test.features, &test.labels),
                &fold_rng.derive("score", 0),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let per_fold: Vec<f64> = results.iter().map(|r| r.value).collect();
    let flags = results.iter().flat_map(|r| r.flags.iter().copied()).collect();
    Ok(CrossFit {
        mean: per_fold.iter().sum::<f64>() / k as f64,
        per_fold,
        flags,
    })
}

/// Delete-one jackknife of the mean of `contributions`: returns the
/// bias-corrected estimate and the jackknife variance.
pub fn jackknife(contributions: &[f64]) -> Result<(f64, f64)> {
    let n = contributions.len();
    if n < 2 {
        return Err(invalid("jackknife needs at least two values"));
    }
    let total: f64 = contributions.iter().sum();
    let leave_out: Vec<f64> = contributions.iter().map(|c| (total - c) / (n - 1) as f64).collect();
    jackknife_from_replicates(total / n as f64, &leave_out)
}

/// Jackknife from a full-sample statistic and its delete-one (or delete-group)
/// replicates.
pub fn jackknife_from_replicates(full: f64, replicates: &[f64]) -> Result<(f64, f64)> {
    let g = replicates.len();
    if g < 2 {
        return Err(invalid("jackknife needs at least two replicates"));
    }
    let gf = g as f64;
    let mean = replicates.iter().sum::<f64>() / gf;
    let estimate = gf * full - (gf - 1.0) * mean;
    let variance = (gf - 1.0) / gf * replicates.iter().map(|r| (r - mean).powi(2)).sum::<f64>();
    Ok((estimate, variance))
}

/// Median of block means over a seeded random partition into `blocks` blocks.
pub fn median_of_means(contributions: &[f64], blocks: usize, rng: &RngStream) -> Result<f64> {
    let n = contributions.len();
    if blocks == 0 || n < blocks {
        return Err(invalid(format!("median of means needs 1 <= blocks <= n (n = {n}), got {blocks}")));
    }
    let perm = rng.derive("mom", blocks as u64).permutation(n);
    let means: Vec<f64> = (0..blocks)
        .map(|b| {
            let (lo, hi) = (b * n / blocks, (b + 1) * n / blocks);
            perm[lo..hi].iter().map(|&i| contributions[i]).sum::<f64>() / (hi - lo) as f64
        })
        .collect();
    Ok(median(&means))
}

/// `C sqrt((comp + ln(1/delta)) / N)`.
pub fn confidence_radius(c: f64, comp: f64, delta: f64, n: usize) -> Result<f64> {
    if !(c > 0.0) || !(comp >= 0.0) || !(delta > 0.0 && delta < 1.0) || n == 0 {
        return Err(invalid("confidence radius needs C > 0, comp >= 0, 0 < delta < 1, N >= 1"));
    }
    Ok(c * ((comp + (1.0 / delta).ln()) / n as f64).sqrt())
}

/// Two-sided calibration constants linking scores to mutual information.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibConstants {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub c: f64,
    pub d: f64,
}

impl CalibConstants {
    pub const EXACT: CalibConstants = CalibConstants {
        alpha: 1.0,
        beta: 1.0,
        gamma: 0.0,
        c: 1.0,
        d: 1.0,
    };

    pub fn validate(&self) -> Result<()> {
        let pos = [self.alpha, self.beta, self.c, self.d].iter().all(|v| *v > 0.0 && v.is_finite());
        if !pos || !(self.gamma >= 0.0) || self.alpha > self.beta || self.c > self.d {
            return Err(invalid("calibration needs alpha, beta, c, d > 0, gamma >= 0, alpha <= beta, c <= d"));
        }
        Ok(())
    }
}

/// Efficiency bounds `(alpha/d) r` and `(beta/c) r + gamma/(c mi_x)`, `r = mi_z/mi_x`.
pub fn mi_ratio_bounds(mi_z: f64, mi_x: f64, k: &CalibConstants) -> Result<(f64, f64)> {
    k.validate()?;
    if !(mi_x > 0.0) {
        return Err(invalid("mi_ratio_bounds needs mi_x > 0"));
    }
    let r = mi_z / mi_x;
    Ok((k.alpha / k.d * r, k.beta / k.c * r + k.gamma / (k.c * mi_x)))
}

/// `min(1, exp(-eps^2 s_ref^2 / (2 T c^2)))`.
pub fn azuma_tail(eps: f64, s_ref: f64, t: usize, c: f64) -> f64 {
    (-(eps * eps * s_ref * s_ref) / (2.0 * t as f64 * c * c)).exp().min(1.0)
}

/// `L_s * radius / s_ref`.
pub fn stability_bound(l_s: f64, radius: f64, s_ref: f64) -> f64 {
    l_s * radius / s_ref
}

/// Knobs of the end-to-end computation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EfficiencyOptions {
    /// Cross-fitting folds; `None` scores on the full sample.
    pub folds: Option<usize>,
    pub s_min: Option<f64>,
    /// Delete-a-group jackknife bias correction with this many groups.
    pub jackknife_groups: Option<usize>,
    pub delta: Option<f64>,
    /// Radius constant; uncalibrated.
    pub c: f64,
    /// User-supplied channel complexity.
    pub comp: f64,
}

impl Default for EfficiencyOptions {
    fn default() -> Self {
        Self {
            folds: None,
            s_min: None,
            jackknife_groups: None,
            delta: None,
            c: 1.0,
            comp: 0.0,
        }
    }
}

impl EfficiencyOptions {
    pub fn validate(&self) -> Result<()> {
        if matches!(self.folds, Some(k) if k < 2) {
            return Err(invalid("folds must be >= 2"));
        }
        if matches!(self.jackknife_groups, Some(g) if g < 2) {
            return Err(invalid("jackknife_groups must be >= 2"));
        }
        if matches!(self.delta, Some(d) if !(d > 0.0 && d < 1.0)) {
            return Err(invalid("delta must lie in (0, 1)"));
        }
        if !(self.c > 0.0) || !(self.comp >= 0.0) {
            return Err(invalid("c must be > 0 and comp >= 0"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyReport {
    pub dataset: String,
    pub map: String,
    pub n_feat: usize,
    pub s_hat: f64,
    pub s_ref_hat: f64,
    pub s_min: Option<f64>,
    pub e_ratio: f64,
    pub e_diff: Option<f64>,
    pub per_fold_s: Vec<f64>,
    pub confidence_radius: Option<f64>,
    pub flags: Flags,
}

pub const REPORT_HEADER: &str = "dataset,map,n_feat,S,S_ref,E_ratio,E_diff,radius,flags";

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl EfficiencyReport {
    pub fn csv_row(&self) -> String {
        let flags: Vec<&str> = self.flags.iter().map(|f| f.as_str()).collect();
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.dataset,
            self.map,
            self.n_feat,
            self.s_hat,
            self.s_ref_hat,
            self.e_ratio,
            opt(self.e_diff),
            opt(self.confidence_radius),
            flags.join("|")
        )
    }

    pub fn to_csv(reports: &[EfficiencyReport]) -> String {
        let mut out = String::from(REPORT_HEADER);
        out.push('\n');
        for r in reports {
            let _ = writeln!(out, "{}", r.csv_row());
        }
        out
    }
}

/// Group jackknife of a full-sample statistic over `groups` stratified groups.
fn group_jackknife(data: &Dataset, groups: usize, full: f64, rng: &RngStream, stat: impl Fn(&Dataset, &RngStream) -> Result<f64> + Sync) -> Result<f64> {
    let parts = stratified_folds(&data.labels, groups, &rng.derive("jackknife", groups as u64))?;
    let reps = parts
        .par_iter()
        .enumerate()
        .map(|(g, held)| stat(&data.subset(&complement(data.len(), held))?, &rng.derive("jackknife-rep", g as u64)))
        .collect::<Result<Vec<f64>>>()?;
    Ok(jackknife_from_replicates(full, &reps)?.0)
}

/// End-to-end efficiency of the channel recipe `phi` on `data`.
pub fn compute_efficiency(data: &Dataset, phi: &ChannelSpec, spec: &ScoreSpec, opts: &EfficiencyOptions, rng: &RngStream) -> Result<EfficiencyReport> {
    spec.validate()?;
    opts.validate()?;
    let mut flags = Flags::new();
    let fit_score = |d: &Dataset, fitter: &ChannelSpec, r: &RngStream| -> Result<ScoreOutcome> {
        let ch = fitter.fit(&d.features, &r.derive("channel", 0))?;
        score_channel(d, &ch, spec, &r.derive("score", 0))
    };
    let (s_hat, s_ref_hat, per_fold, n_feat) = match opts.folds {
        Some(k) => {
            let cf = cross_fit_score(data, phi, k, spec, &rng.derive("cross-fit", 0))?;
            let rf = cross_fit_score(data, &ChannelSpec::Identity, k, spec, &rng.derive("cross-fit", 0))?;
            flags.extend(cf.flags.iter().copied());
            let n_feat = phi.fit(&data.features, &rng.derive("channel-dims", 0))?.out_dim;
            (cf.mean, rf.mean, cf.per_fold, n_feat)
        }
        None => {
            let ch = phi.fit(&data.features, &rng.derive("full", 0).derive("channel", 0))?;
            let s = score_channel(data, &ch, spec, &rng.derive("full", 0).derive("score", 0))?;
            let r = fit_score(data, &ChannelSpec::Identity, &rng.derive("full", 0))?;
            flags.extend(s.flags.iter().copied());
            (s.value, r.value, Vec::new(), ch.out_dim)
        }
    };
    let (s_hat, s_ref_hat) = match opts.jackknife_groups {
        Some(g) => {
            let s = group_jackknife(data, g, s_hat, rng, |d, r| Ok(fit_score(d, phi, r)?.value))?;
            let r = group_jackknife(data, g, s_ref_hat, rng, |d, r| Ok(fit_score(d, &ChannelSpec::Identity, r)?.value))?;
            (s, r)
        }
        None => (s_hat, s_ref_hat),
    };
    let (e_ratio, exceeds) = normalize_ratio(s_hat, s_ref_hat)?;
    if exceeds {
        flags.insert(Flag::RatioExceedsOne);
    }
    let e_diff = match opts.s_min {
        Some(s_min) => {
            let (e, clamped) = normalize_diff(s_hat, s_ref_hat, s_min)?;
            if clamped {
                flags.insert(Flag::DiffClamped);
            }
            Some(e)
        }
        None => None,
    };
    let confidence_radius = opts
        .delta
        .map(|delta| confidence_radius(opts.c, opts.comp, delta, data.len()))
        .transpose()?;
    Ok(EfficiencyReport {
        dataset: data.name.clone(),
        map: phi.label(),
        n_feat,
        s_hat,
        s_ref_hat,
        s_min: opts.s_min,
        e_ratio,
        e_diff,
        per_fold_s: per_fold,
        confidence_radius,
        flags,
    })
}

/// Raw DV and NWJ values on held-out data with one shared critic.
pub fn shared_critic_bounds(z: &DataMatrix, y: &LabelVector, cfg: &crate::estimators::CriticConfig, rng: &RngStream) -> Result<(f64, f64)> {
    let (fit, eval) = fit_eval_split(y, rng)?;
    let critic = train_critic(&z.select_rows(&fit)?, &y.select(&fit), Objective::Dv, cfg, rng)?;
    let b = critic.bounds(&z.select_rows(&eval)?, &y.select(&eval))?;
    Ok((b.dv, b.nwj))
}

/// Featurewise per-column score as used by the reports.
pub fn per_feature_scores(z: &DataMatrix, y: &LabelVector, base: &BaseEstimator, rng: &RngStream) -> Result<Vec<f64>> {
    (0..z.cols())
        .into_par_iter()
        .map(|j| Ok(mi_column(z, j, y, base, rng)?.value))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ratio_examples() {
        let (e, f) = normalize_ratio(4.73, 13.85).unwrap();
        assert!((e - 0.3415).abs() < 1e-4 && !f);
        assert_eq!(normalize_ratio(2.5, 2.5).unwrap(), (1.0, false));
        let (e, f) = normalize_ratio(1.141 * 3.0, 3.0).unwrap();
        assert!((e - 1.141).abs() < 1e-12 && f);
        assert!(matches!(normalize_ratio(1.0, 1e-7), Err(Error::DegenerateReference { .. })));
    }

    #[test]
    fn diff_examples() {
        assert_eq!(normalize_diff(1.0, 1.0, 0.5).unwrap(), (1.0, false));
        assert_eq!(normalize_diff(0.5, 1.0, 0.5).unwrap(), (0.0, false));
        let (e, _) = normalize_diff(0.8, 1.0, 0.5).unwrap();
        assert!((e - 0.6).abs() < 1e-12);
        assert_eq!(normalize_diff(2.0, 1.0, 0.5).unwrap(), (1.0, true));
        assert!(normalize_diff(0.8, 1.0, 1.0).is_err());
    }

    #[test]
    fn jackknife_examples() {
        let (est, var) = jackknife(&[1.0, 2.0, 3.0]).unwrap();
        assert!((est - 2.0).abs() < 1e-12);
        assert!((var - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(jackknife(&[4.0; 5]).unwrap().1, 0.0);
        assert!(jackknife(&[1.0]).is_err());
    }

    #[test]
    fn median_of_means_examples() {
        let v: Vec<f64> = (0..20).map(f64::from).collect();
        let rng = RngStream::new(1, 0);
        assert!((median_of_means(&v, 1, &rng).unwrap() - 9.5).abs() < 1e-12);
        assert!((median_of_means(&v, 20, &rng).unwrap() - 9.5).abs() < 1e-12);
        let odd = [5.0, 1.0, 9.0];
        assert_eq!(median_of_means(&odd, 3, &rng).unwrap(), 5.0);
        assert!(median_of_means(&v, 0, &rng).is_err());
    }

    #[test]
    fn radius_examples() {
        let r = confidence_radius(1.0, 0.0, (-1.0f64).exp(), 100).unwrap();
        assert!((r - 0.1).abs() < 1e-12);
        let r4 = confidence_radius(1.0, 2.0, 0.1, 400).unwrap();
        let r1 = confidence_radius(1.0, 2.0, 0.1, 100).unwrap();
        assert!((r4 - r1 / 2.0).abs() < 1e-12);
        let r = confidence_radius(2.0, 3.0, 0.05, 1000).unwrap();
        assert!((r - 2.0 * ((3.0 + 20f64.ln()) / 1000.0).sqrt()).abs() < 1e-12);
        assert!((r - 0.154864).abs() < 1e-6);
    }

    #[test]
    fn bound_calculators() {
        assert_eq!(mi_ratio_bounds(0.3, 0.6, &CalibConstants::EXACT).unwrap(), (0.5, 0.5));
        let k = CalibConstants {
            alpha: 0.8,
            beta: 1.2,
            gamma: 0.05,
            c: 0.9,
            d: 1.1,
        };
        let (lo, hi) = mi_ratio_bounds(0.3, 0.6, &k).unwrap();
        assert!((lo - 0.36364).abs() < 1e-5 && (hi - 0.75926).abs() < 1e-5);
        let (lo, hi) = mi_ratio_bounds(0.0, 0.6, &k).unwrap();
        assert_eq!(lo, 0.0);
        assert!((hi - 0.05 / (0.9 * 0.6)).abs() < 1e-12);
        assert!(mi_ratio_bounds(0.1, 0.0, &k).is_err());

        assert!((azuma_tail(0.1, 1.0, 100, 0.01) - (-0.5f64).exp()).abs() < 1e-12);
        assert!((azuma_tail(0.1, 1.0, 100, 0.02) - 0.88250).abs() < 1e-5);
        let tails: Vec<f64> = (1..20).map(|i| azuma_tail(0.05 * i as f64, 1.0, 100, 0.01)).collect();
        assert!(tails.windows(2).all(|w| w[1] <= w[0]));

        assert_eq!(stability_bound(2.0, 0.0, 4.0), 0.0);
        assert!((stability_bound(2.0, 0.1, 4.0) - 0.05).abs() < 1e-15);
        assert_eq!(stability_bound(2.0, 0.2, 4.0), 2.0 * stability_bound(2.0, 0.1, 4.0));
    }

    #[test]
    fn report_csv_row() {
        let mut flags = Flags::new();
        flags.insert(Flag::RatioExceedsOne);
        let r = EfficiencyReport {
            dataset: "sig".into(),
            map: "fft_top20".into(),
            n_feat: 20,
            s_hat: 2.0,
            s_ref_hat: 1.0,
            s_min: None,
            e_ratio: 2.0,
            e_diff: None,
            per_fold_s: vec![],
            confidence_radius: Some(0.1),
            flags,
        };
        assert_eq!(r.csv_row(), "sig,fft_top20,20,2,1,2,,0.1,ratio_exceeds_one");
    }
}
