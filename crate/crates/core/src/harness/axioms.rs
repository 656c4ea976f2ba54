//! Property batteries for the efficiency functional. Each battery runs a
//! number of seeded trials and reports how many violated the property;
//! violations are data, not errors.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::experiments::concentration_sweep;
use crate::channels::make_affine;
use crate::data::{DataMatrix, LabelVector};
use crate::efficiency::{azuma_tail, normalize_ratio, stability_bound};
use crate::error::{invalid, Result};
use crate::estimators::plugin::{plugin_mi_value, JointTable};
use crate::estimators::mi_knn_cd;
use crate::linalg::Matrix;
use crate::rng::RngStream;
use crate::score::BaseEstimator;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Battery {
    Dpi,
    Invariance,
    Consistency,
    Azuma,
    Perturbation,
}

impl Battery {
    pub const ALL: [Battery; 5] = [
        Battery::Dpi,
        Battery::Invariance,
        Battery::Consistency,
        Battery::Azuma,
        Battery::Perturbation,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Battery::Dpi => "dpi",
            Battery::Invariance => "invariance",
            Battery::Consistency => "consistency",
            Battery::Azuma => "azuma",
            Battery::Perturbation => "perturbation",
        }
    }

    pub fn parse(name: &str) -> Result<Battery> {
        Battery::ALL
            .into_iter()
            .find(|b| b.name() == name)
            .ok_or_else(|| invalid(format!("unknown battery `{name}` (expected dpi, invariance, consistency, azuma or perturbation)")))
    }
}

/// Outcome of one battery. `seeds` lists the trial seeds that violated the
/// property, in trial order, so any failure can be replayed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatteryReport {
    pub battery: String,
    pub trials: usize,
    pub violations: usize,
    pub seeds: Vec<u64>,
    /// Largest number of violations that still counts as a pass.
    pub allowed: usize,
    pub passed: bool,
}

impl BatteryReport {
    fn new(battery: Battery, outcomes: Vec<(u64, bool)>, allowed: usize) -> Self {
        let seeds: Vec<u64> = outcomes.iter().filter(|o| o.1).map(|o| o.0).collect();
        Self {
            battery: battery.name().into(),
            trials: outcomes.len(),
            violations: seeds.len(),
            allowed,
            passed: seeds.len() <= allowed,
            seeds,
        }
    }

    pub fn first_violation(&self) -> Option<u64> {
        self.seeds.first().copied()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AxiomConfig {
    /// Trial `t` of every battery uses seed `seed + t`.
    pub seed: u64,
    pub dpi_trials: usize,
    pub invariance_trials: usize,
    pub invariance_n: usize,
    pub invariance_k: usize,
    pub invariance_tol: f64,
    pub invariance_pass_rate: f64,
    pub consistency_seeds: usize,
    pub consistency_sizes: [usize; 3],
    pub consistency_pass_rate: f64,
    pub azuma_trajectories: usize,
    pub azuma_steps: usize,
    pub azuma_slack: f64,
    pub perturbation_trials: usize,
}

impl Default for AxiomConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            dpi_trials: 100,
            invariance_trials: 50,
            invariance_n: 4000,
            invariance_k: 5,
            invariance_tol: 0.05,
            invariance_pass_rate: 0.95,
            consistency_seeds: 20,
            consistency_sizes: [500, 2000, 8000],
            consistency_pass_rate: 0.8,
            azuma_trajectories: 1000,
            azuma_steps: 100,
            azuma_slack: 1.1,
            perturbation_trials: 100,
        }
    }
}

impl AxiomConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dpi_trials == 0 || self.invariance_trials == 0 || self.consistency_seeds < 2 || self.perturbation_trials == 0 {
            return Err(invalid("axiom batteries need at least one trial (two consistency seeds)"));
        }
        if self.azuma_trajectories == 0 || self.azuma_steps == 0 || !(self.azuma_slack >= 1.0) {
            return Err(invalid("azuma battery needs trajectories, steps and slack >= 1"));
        }
        if !(0.0..=1.0).contains(&self.invariance_pass_rate) || !(0.0..=1.0).contains(&self.consistency_pass_rate) {
            return Err(invalid("pass rates must lie in [0, 1]"));
        }
        if self.invariance_n < 100 || self.invariance_k == 0 || !(self.invariance_tol > 0.0) {
            return Err(invalid("invariance battery needs n >= 100, k >= 1 and a positive tolerance"));
        }
        let s = self.consistency_sizes;
        if !(s[0] < s[1] && s[1] < s[2]) || s[0] < 50 {
            return Err(invalid("consistency_sizes must be increasing and at least 50"));
        }
        Ok(())
    }
}

fn trial_rng(seed: u64, battery: Battery) -> RngStream {
    RngStream::new(seed, 0).derive(battery.name(), 0)
}

/// Random surjection `0..from -> 0..to`.
fn surjection(from: usize, to: usize, rng: &mut RngStream) -> Vec<usize> {
    let mut map: Vec<usize> = (0..from).map(|i| if i < to { i } else { rng.below(to) }).collect();
    rng.shuffle(&mut map);
    map
}

/// One DPI trial: does coarsening the output of a discrete channel ever
/// raise its plug-in efficiency?
pub fn dpi_trial(seed: u64) -> Result<bool> {
    let mut rng = trial_rng(seed, Battery::Dpi);
    let (table, s_ref) = loop {
        let mx = 4 + rng.below(9);
        let k = 2 + rng.below(3);
        let cells = (0..mx * k).map(|_| (1 + rng.below(50)) as f64).collect();
        let t = JointTable::new(mx, k, cells)?;
        let s = plugin_mi_value(&t)?;
        if s > crate::efficiency::DEGENERATE_REFERENCE {
            break (t, s);
        }
    };
    let mz = 2 + rng.below(table.rows() - 1);
    let phi = surjection(table.rows(), mz, &mut rng);
    let mt = 1 + rng.below(mz - 1);
    let post = surjection(mz, mt, &mut rng);
    let z = table.merge_rows(&phi, mz)?;
    let tz = z.merge_rows(&post, mt)?;
    let e_phi = normalize_ratio(plugin_mi_value(&z)?, s_ref)?.0;
    let e_post = normalize_ratio(plugin_mi_value(&tz)?, s_ref)?.0;
    Ok(e_post > e_phi)
}

/// Fixed three-class task in three dimensions; the first two coordinates
/// carry the class signal.
fn invariance_task(n: usize, seed: u64) -> Result<(DataMatrix, LabelVector)> {
    let mut rng = RngStream::new(seed, 0).derive("invariance-task", 0);
    let centers = [(0.0, 1.2), (1.04, -0.6), (-1.04, -0.6)];
    let mut v = Vec::with_capacity(3 * n);
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let c = i % 3;
        v.push(centers[c].0 + rng.normal());
        v.push(centers[c].1 + rng.normal());
        v.push(rng.normal());
        y.push(c);
    }
    Ok((DataMatrix::new(n, 3, v)?, LabelVector::new(y, 3)?))
}

/// `Q1 diag(s) Q2` with Haar-random rotations and `s` in `[0.5, 2]`.
pub fn random_affine_2d(rng: &mut RngStream) -> (Matrix, Vec<f64>) {
    let rot = |t: f64| [[t.cos(), -t.sin()], [t.sin(), t.cos()]];
    let q1 = rot(rng.uniform_range(0.0, std::f64::consts::TAU));
    let q2 = rot(rng.uniform_range(0.0, std::f64::consts::TAU));
    let s = [rng.uniform_range(0.5, 2.0), rng.uniform_range(0.5, 2.0)];
    let mut m = Matrix::zeros(2, 2);
    for i in 0..2 {
        for j in 0..2 {
            m.set(i, j, (0..2).map(|l| q1[i][l] * s[l] * q2[l][j]).sum());
        }
    }
    let b = vec![rng.uniform_range(-3.0, 3.0), rng.uniform_range(-3.0, 3.0)];
    (m, b)
}

/// Efficiencies of the channel "first two coordinates" and of `A x + b`
/// applied after it, joint kNN score, identity reference.
pub struct InvarianceBase {
    x: DataMatrix,
    y: LabelVector,
    z: DataMatrix,
    s_ref: f64,
    e_phi: f64,
    k: usize,
    rng: RngStream,
}

impl InvarianceBase {
    pub fn new(n: usize, k: usize, seed: u64) -> Result<Self> {
        let (x, y) = invariance_task(n, seed)?;
        let rng = RngStream::new(seed, 0).derive("invariance-score", 0);
        let z = x.select_cols(&[0, 1])?;
        let s_ref = mi_knn_cd(&x, &y, k, &rng)?.value;
        let e_phi = normalize_ratio(mi_knn_cd(&z, &y, k, &rng)?.value, s_ref)?.0;
        Ok(Self { x, y, z, s_ref, e_phi, k, rng })
    }

    pub fn e_phi(&self) -> f64 {
        self.e_phi
    }

    pub fn reference(&self) -> (&DataMatrix, f64) {
        (&self.x, self.s_ref)
    }

    /// `|E(A phi + b) - E(phi)|` for the trial's random affine map.
    pub fn delta(&self, trial_seed: u64) -> Result<f64> {
        let mut rng = trial_rng(trial_seed, Battery::Invariance);
        let (a, b) = random_affine_2d(&mut rng);
        let psi = make_affine(&a, &b)?;
        let s = mi_knn_cd(&psi.apply(&self.z)?, &self.y, self.k, &self.rng)?.value;
        Ok((normalize_ratio(s, self.s_ref)?.0 - self.e_phi).abs())
    }
}

/// One bounded-increment submartingale path of length `steps`, increments
/// bounded by `c / s_ref`. Returns `E_T - E_0`.
fn azuma_path(rng: &mut RngStream, steps: usize, c: f64, s_ref: f64) -> f64 {
    let bound = c / s_ref;
    let coin = rng.bernoulli(0.5);
    let p = rng.uniform_range(0.5, 0.6);
    let m = rng.uniform_range(0.0, 0.2);
    (0..steps)
        .map(|_| {
            if coin {
                if rng.bernoulli(p) { bound } else { -bound }
            } else {
                bound * (rng.uniform_range(-1.0, 1.0) * (1.0 - m) + m)
            }
        })
        .sum()
}

/// Azuma check: for each epsilon on the grid, the empirical frequency of
/// `E_T - E_0 <= -eps` must not exceed `slack * azuma_tail(eps, ...)`.
/// Returns `(eps, frequency, bound)` per grid point.
pub fn azuma_simulation(seed: u64, trajectories: usize, steps: usize, c: f64, s_ref: f64) -> Vec<(f64, f64, f64)> {
    let finals: Vec<f64> = (0..trajectories)
        .map(|t| azuma_path(&mut trial_rng(seed + t as u64, Battery::Azuma), steps, c, s_ref))
        .collect();
    let scale = c / s_ref * (steps as f64).sqrt();
    (1..=20)
        .map(|i| {
            let eps = scale * 0.2 * i as f64;
            let freq = finals.iter().filter(|&&d| d <= -eps).count() as f64 / trajectories as f64;
            (eps, freq, azuma_tail(eps, s_ref, steps, c))
        })
        .collect()
}

/// One perturbation trial with the Lipschitz score `1 + tanh(w_y . z + b_y)`:
/// does `|E_eps - E|` ever exceed `L_s eps / S_ref`?
pub fn perturbation_trial(seed: u64) -> Result<bool> {
    let mut rng = trial_rng(seed, Battery::Perturbation);
    let (n, d, k) = (300, 3, 3);
    let w: Vec<Vec<f64>> = (0..k).map(|_| (0..d).map(|_| rng.normal()).collect()).collect();
    let b: Vec<f64> = (0..k).map(|_| rng.normal()).collect();
    let l_s = w.iter().map(|r| r.iter().map(|v| v * v).sum::<f64>().sqrt()).fold(0.0, f64::max);
    let eps = rng.uniform_range(0.01, 0.5);
    let score = |z: &[f64], y: usize| 1.0 + (w[y].iter().zip(z).map(|(a, b)| a * b).sum::<f64>() + b[y]).tanh();
    let mut s = 0.0;
    let mut s_eps = 0.0;
    for i in 0..n {
        let y = i % k;
        let z: Vec<f64> = (0..d).map(|_| rng.normal()).collect();
        let dir: Vec<f64> = (0..d).map(|_| rng.normal()).collect();
        let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
        let r = eps * rng.uniform();
        let zp: Vec<f64> = z.iter().zip(&dir).map(|(a, u)| a + r * u / norm).collect();
        s += score(&z, y);
        s_eps += score(&zp, y);
    }
    let (s, s_eps) = (s / n as f64, s_eps / n as f64);
    // The unperturbed channel is the reference, so E = 1.
    let s_ref = s;
    let delta = (normalize_ratio(s_eps, s_ref)?.0 - normalize_ratio(s, s_ref)?.0).abs();
    Ok(delta > stability_bound(l_s, eps, s_ref))
}

fn allowed(trials: usize, pass_rate: f64) -> usize {
    trials - (pass_rate * trials as f64).ceil() as usize
}

pub fn run_battery(battery: Battery, cfg: &AxiomConfig) -> Result<BatteryReport> {
    cfg.validate()?;
    let seeds = |n: usize| (0..n as u64).map(|t| cfg.seed + t).collect::<Vec<u64>>();
    match battery {
        Battery::Dpi => {
            let out = seeds(cfg.dpi_trials)
                .into_par_iter()
                .map(|s| Ok((s, dpi_trial(s)?)))
                .collect::<Result<Vec<_>>>()?;
            Ok(BatteryReport::new(battery, out, 0))
        }
        Battery::Invariance => {
            let base = InvarianceBase::new(cfg.invariance_n, cfg.invariance_k, cfg.seed)?;
            let out = seeds(cfg.invariance_trials)
                .into_par_iter()
                .map(|s| Ok((s, base.delta(s)? > cfg.invariance_tol)))
                .collect::<Result<Vec<_>>>()?;
            Ok(BatteryReport::new(battery, out, allowed(cfg.invariance_trials, cfg.invariance_pass_rate)))
        }
        Battery::Consistency => {
            let s = seeds(cfg.consistency_seeds);
            let e = concentration_sweep(&cfg.consistency_sizes, &s, 20, &BaseEstimator::Knn { k: 3 }, cfg.seed.wrapping_add(1_000_003))?;
            let out = s
                .iter()
                .enumerate()
                .map(|(i, &seed)| (seed, (e[2][i] - e[1][i]).abs() >= (e[1][i] - e[0][i]).abs()))
                .collect();
            Ok(BatteryReport::new(battery, out, allowed(cfg.consistency_seeds, cfg.consistency_pass_rate)))
        }
        Battery::Azuma => {
            // Trials are trajectories; a violation is a grid point where the
            // empirical tail exceeds the slackened bound.
            let grid = azuma_simulation(cfg.seed, cfg.azuma_trajectories, cfg.azuma_steps, 0.02, 2.0);
            let violations = grid.iter().filter(|&&(_, f, b)| f > cfg.azuma_slack * b).count();
            Ok(BatteryReport {
                battery: battery.name().into(),
                trials: cfg.azuma_trajectories,
                violations,
                seeds: if violations > 0 { vec![cfg.seed] } else { Vec::new() },
                allowed: 0,
                passed: violations == 0,
            })
        }
        Battery::Perturbation => {
            let out = seeds(cfg.perturbation_trials)
                .into_par_iter()
                .map(|s| Ok((s, perturbation_trial(s)?)))
                .collect::<Result<Vec<_>>>()?;
            Ok(BatteryReport::new(battery, out, 0))
        }
    }
}

/// Runs the selected batteries (all when `only` is empty) in a fixed order.
pub fn run_axiom_suite(cfg: &AxiomConfig, only: &[Battery]) -> Result<Vec<BatteryReport>> {
    Battery::ALL
        .into_iter()
        .filter(|b| only.is_empty() || only.contains(b))
        .map(|b| run_battery(b, cfg))
        .collect()
}
