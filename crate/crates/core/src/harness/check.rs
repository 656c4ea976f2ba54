//! Oracle-agreement checks plus the property batteries, assembled into one
//! deterministic JSON report.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::axioms::{run_axiom_suite, AxiomConfig, Battery, BatteryReport};
use super::generators::{gen_circle, gen_gaussian_location, gen_redundant};
use crate::data::DataMatrix;
use crate::error::{invalid, Result};
use crate::estimators::mi_ksg_cc;
use crate::estimators::plugin::{plugin_mi_value, JointTable};
use crate::numeric::InfoUnit;
use crate::oracles::{circle_brute_force_bits, fisher_from_replications, gaussian_mi, oracle_circle, oracle_gaussian_location, oracle_redundant, CircleChannel};
use crate::rng::RngStream;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CheckConfig {
    pub seed: u64,
    pub location_reps: usize,
    pub location_per_rep: usize,
    pub redundant_n: usize,
    pub circle_samples: usize,
    pub circle_grid: usize,
    pub ksg_n: usize,
    pub ksg_seeds: usize,
    pub axioms: AxiomConfig,
}

impl Default for CheckConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            location_reps: 100_000,
            location_per_rep: 100,
            redundant_n: 10_000,
            circle_samples: 100_000,
            circle_grid: 4096,
            ksg_n: 5000,
            ksg_seeds: 10,
            axioms: AxiomConfig::default(),
        }
    }
}

impl CheckConfig {
    pub fn validate(&self) -> Result<()> {
        if self.location_reps < 30 || self.location_per_rep == 0 {
            return Err(invalid("location check needs at least 30 replications"));
        }
        if self.redundant_n < 100 || self.circle_samples < 100 || self.ksg_n < 100 || self.ksg_seeds == 0 {
            return Err(invalid("sample sizes must be at least 100 and ksg_seeds positive"));
        }
        if self.circle_grid < 64 {
            return Err(invalid("circle_grid must be at least 64"));
        }
        self.axioms.validate()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckItem {
    pub name: String,
    pub passed: bool,
    pub tolerance: f64,
    pub values: BTreeMap<String, f64>,
}

impl CheckItem {
    fn new(name: &str, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            passed: true,
            tolerance,
            values: BTreeMap::new(),
        }
    }

    /// Records `got` and `want` under `key` and fails the item if they
    /// differ by more than the tolerance.
    fn compare(&mut self, key: &str, got: f64, want: f64) {
        self.values.insert(format!("{key}.got"), got);
        self.values.insert(format!("{key}.want"), want);
        if !((got - want).abs() <= self.tolerance) {
            self.passed = false;
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub seed: u64,
    pub oracles: Vec<CheckItem>,
    pub batteries: Vec<BatteryReport>,
    pub passed: bool,
}

impl CheckReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    /// First failing battery and the seed that reproduces it.
    pub fn first_violation(&self) -> Option<(&str, u64)> {
        self.batteries
            .iter()
            .find(|b| !b.passed)
            .and_then(|b| b.first_violation().map(|s| (b.battery.as_str(), s)))
    }
}

/// Monte-Carlo efficiency of the noisy mean as a Fisher-information ratio.
pub fn check_location(cfg: &CheckConfig) -> Result<CheckItem> {
    let mut item = CheckItem::new("gaussian-location", 0.03);
    let cases = [(1.0, 0.0), (1.0, 1.0), (1.0, 3.0)];
    let results = cases
        .par_iter()
        .enumerate()
        .map(|(i, &(s2, t2))| -> Result<(f64, f64)> {
            let mut rng = RngStream::new(cfg.seed, 0).derive("check-location", i as u64);
            let r = gen_gaussian_location(cfg.location_reps, cfg.location_per_rep, 0.0, f64::sqrt(s2), f64::sqrt(t2), &mut rng)?;
            let ratio = fisher_from_replications(&r.z)? / fisher_from_replications(&r.xbar)?;
            Ok((ratio, oracle_gaussian_location(s2, t2)?.value))
        })
        .collect::<Result<Vec<_>>>()?;
    for ((s2, t2), (got, want)) in cases.iter().zip(results) {
        item.compare(&format!("efficiency(sigma2={s2},tau2={t2})"), got, want);
    }
    Ok(item)
}

/// KSG on the redundant-feature example against the oracle, plus the effect of a distractor column or an affine change.
pub fn check_redundant(cfg: &CheckConfig) -> Result<CheckItem> {
    let mut item = CheckItem::new("redundant-features", 0.05);
    let mut rng = RngStream::new(cfg.seed, 0).derive("check-redundant", 0);
    let s = gen_redundant(cfg.redundant_n, 1.0, &mut rng)?;
    let est_rng = RngStream::new(cfg.seed, 0).derive("check-redundant-ksg", 0);
    let x = DataMatrix::column_vector(s.x.clone())?;
    let y = DataMatrix::column_vector(s.y.clone())?;
    let xw = x.hstack(&DataMatrix::column_vector(s.w.clone())?)?;
    let i_x = mi_ksg_cc(&x, &y, 5, &est_rng)?.value;
    let i_xw = mi_ksg_cc(&xw, &y, 5, &est_rng)?.value;
    let i_affine = mi_ksg_cc(&x.map(|v| 2.5 * v - 1.0)?, &y, 5, &est_rng)?.value;
    let oracle = oracle_redundant(1.0)?.value;
    let mut oracle_item = CheckItem::new("", 0.04);
    oracle_item.compare("I(X;Y)", i_x, oracle);
    item.values.extend(oracle_item.values);
    item.passed &= oracle_item.passed;
    item.compare("I(X,W;Y)", i_xw, i_x);
    item.compare("I(aX+b;Y)", i_affine, i_x);
    Ok(item)
}

fn bin(v: f64, lo: f64, hi: f64, bins: usize) -> usize {
    (((v - lo) / (hi - lo) * bins as f64).floor().max(0.0) as usize).min(bins - 1)
}

/// Plug-in MI (bits) of `(channel output, label)` with 64 equal-width bins
/// whose edges include the cap boundaries at `0` and `+-pi/2`.
fn circle_plugin_bits(values: &[f64], labels: &[usize], lo: f64, hi: f64) -> Result<f64> {
    let a: Vec<usize> = values.iter().map(|&v| bin(v, lo, hi, 64)).collect();
    let t = JointTable::from_pairs(&a, labels, 64, 2)?;
    Ok(InfoUnit::Bits.from_nats(plugin_mi_value(&t)?))
}

/// Circle example at `alpha = pi/2`, `q = 0`: grid values, sampled plug-in
/// values, and the symmetric case where both channels are equally efficient.
pub fn check_circle(cfg: &CheckConfig) -> Result<CheckItem> {
    let alpha = PI / 2.0;
    let mut item = CheckItem::new("circle", 0.02);
    let asym = oracle_circle(alpha, 0.0, false)?;
    let mut grid = CheckItem::new("", 1e-3);
    grid.compare("grid I_A bits", circle_brute_force_bits(alpha, 0.0, false, CircleChannel::Angle, cfg.circle_grid)?, asym.i_a);
    grid.compare("grid I_B bits", circle_brute_force_bits(alpha, 0.0, false, CircleChannel::Cosine, cfg.circle_grid)?, asym.i_b);
    item.values.extend(grid.values);
    item.passed &= grid.passed;

    let mut rng = RngStream::new(cfg.seed, 0).derive("check-circle", 0);
    let s = gen_circle(cfg.circle_samples, alpha, 0.0, false, &mut rng)?;
    let labels = s.data.labels.labels();
    let ia = circle_plugin_bits(s.z_angle()?.values(), labels, -PI, PI)?;
    let ib = circle_plugin_bits(s.z_cos()?.values(), labels, -1.0, 1.0)?;
    item.compare("sampled I_A bits", ia, asym.i_a);
    item.compare("sampled I_B bits", ib, asym.i_b);

    let sym = oracle_circle(alpha, 0.0, true)?;
    let mut exact = CheckItem::new("", 0.0);
    exact.compare("oracle symmetric E_B", sym.e_b, 1.0);
    item.values.extend(exact.values);
    item.passed &= exact.passed;
    let mut rng = RngStream::new(cfg.seed, 0).derive("check-circle", 1);
    let s = gen_circle(cfg.circle_samples, alpha, 0.0, true, &mut rng)?;
    let labels = s.data.labels.labels();
    let ia = circle_plugin_bits(s.z_angle()?.values(), labels, -PI, PI)?;
    let ib = circle_plugin_bits(s.z_cos()?.values(), labels, -1.0, 1.0)?;
    let mut e = CheckItem::new("", 0.03);
    e.compare("sampled symmetric E_B", ib / ia, 1.0);
    item.values.extend(e.values);
    item.passed &= e.passed;
    Ok(item)
}

/// KSG against the bivariate Gaussian closed form over several seeds.
pub fn check_gaussian_mi(cfg: &CheckConfig) -> Result<CheckItem> {
    let mut item = CheckItem::new("gaussian-mi-ksg", 0.05);
    let jobs: Vec<(f64, u64)> = [0.0, 0.5, 0.9]
        .iter()
        .flat_map(|&rho| (0..cfg.ksg_seeds as u64).map(move |s| (rho, s)))
        .collect();
    let values = jobs
        .par_iter()
        .map(|&(rho, s)| -> Result<f64> {
            let seed = cfg.seed + s;
            let mut rng = RngStream::new(seed, 0).derive("check-ksg", (rho * 10.0) as u64);
            let mut a = Vec::with_capacity(cfg.ksg_n);
            let mut b = Vec::with_capacity(cfg.ksg_n);
            for _ in 0..cfg.ksg_n {
                let u = rng.normal();
                a.push(u);
                b.push(rho * u + (1.0 - rho * rho).sqrt() * rng.normal());
            }
            let a = DataMatrix::column_vector(a)?;
            let b = DataMatrix::column_vector(b)?;
            Ok(mi_ksg_cc(&a, &b, 5, &RngStream::new(seed, 1))?.value)
        })
        .collect::<Result<Vec<_>>>()?;
    for (&(rho, s), got) in jobs.iter().zip(values) {
        item.compare(&format!("rho={rho},seed={}", cfg.seed + s), got, gaussian_mi(rho)?.value);
    }
    Ok(item)
}

/// Runs the oracle checks (unless `only` selects specific batteries) and the
/// selected property batteries.
pub fn run_check(cfg: &CheckConfig, only: &[Battery]) -> Result<CheckReport> {
    cfg.validate()?;
    let oracles = if only.is_empty() {
        vec![check_location(cfg)?, check_redundant(cfg)?, check_circle(cfg)?, check_gaussian_mi(cfg)?]
    } else {
        Vec::new()
    };
    let axioms = AxiomConfig {
        seed: cfg.seed,
        ..cfg.axioms.clone()
    };
    let batteries = run_axiom_suite(&axioms, only)?;
    let passed = oracles.iter().all(|o| o.passed) && batteries.iter().all(|b| b.passed);
    Ok(CheckReport {
        seed: cfg.seed,
        oracles,
        batteries,
        passed,
    })
}
