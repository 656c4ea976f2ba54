//! Synthetic data generators. All draws come from the supplied stream, so a
//! given configuration always reproduces the same dataset bit for bit.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::data::{DataMatrix, Dataset, LabelVector};
use crate::error::{invalid, Result};
use crate::rng::RngStream;

/// Replicated outputs of the noisy-mean channel.
#[derive(Clone, Debug, PartialEq)]
pub struct LocationReplicates {
    /// Sample mean of each replication (the full-information statistic).
    pub xbar: Vec<f64>,
    /// `xbar + N(0, tau^2 / n_per_rep)`.
    pub z: Vec<f64>,
}

/// Draws `n_reps` replications of `n_per_rep` observations from
/// `N(theta, sigma^2)` and passes each sample mean through additive Gaussian
/// noise of variance `tau^2 / n_per_rep`.
pub fn gen_gaussian_location(
    n_reps: usize,
    n_per_rep: usize,
    theta: f64,
    sigma: f64,
    tau: f64,
    rng: &mut RngStream,
) -> Result<LocationReplicates> {
    if n_reps == 0 || n_per_rep == 0 || !(sigma > 0.0) || !(tau >= 0.0) {
        return Err(invalid("gaussian location needs positive sizes, sigma > 0 and tau >= 0"));
    }
    let mut xbar = Vec::with_capacity(n_reps);
    let mut z = Vec::with_capacity(n_reps);
    let eta_sd = tau / (n_per_rep as f64).sqrt();
    for _ in 0..n_reps {
        let sum: f64 = (0..n_per_rep).map(|_| theta + sigma * rng.normal()).sum();
        let m = sum / n_per_rep as f64;
        xbar.push(m);
        z.push(m + eta_sd * rng.normal());
    }
    Ok(LocationReplicates { xbar, z })
}

/// Regression triple with `y = x + N(0, sigma_eps^2)` for standard-normal `x`.
/// The column `w ~ N(0,1)` is an independent distractor.
#[derive(Clone, Debug, PartialEq)]
pub struct RedundantSample {
    pub x: Vec<f64>,
    pub w: Vec<f64>,
    pub y: Vec<f64>,
}

impl RedundantSample {
    /// Columns `x, w, y` with every label 0; the regression target is the
    /// last feature column.
    pub fn to_dataset(&self, seed: u64) -> Result<Dataset> {
        let n = self.x.len();
        let mut values = Vec::with_capacity(3 * n);
        for i in 0..n {
            values.extend_from_slice(&[self.x[i], self.w[i], self.y[i]]);
        }
        Dataset::new(
            "redundant",
            DataMatrix::new(n, 3, values)?,
            LabelVector::new(vec![0; n], 2)?,
            seed,
        )
    }
}

pub fn gen_redundant(n: usize, sigma_eps: f64, rng: &mut RngStream) -> Result<RedundantSample> {
    if n < 2 || !(sigma_eps > 0.0) {
        return Err(invalid("redundant generator needs n >= 2 and sigma_eps > 0"));
    }
    let mut s = RedundantSample {
        x: Vec::with_capacity(n),
        w: Vec::with_capacity(n),
        y: Vec::with_capacity(n),
    };
    for _ in 0..n {
        let x = rng.normal();
        let w = rng.normal();
        s.x.push(x);
        s.w.push(w);
        s.y.push(x + sigma_eps * rng.normal());
    }
    Ok(s)
}

/// Points on the unit circle with a cap label flipped with probability `q`.
#[derive(Clone, Debug, PartialEq)]
pub struct CircleSample {
    pub data: Dataset,
    pub theta: Vec<f64>,
}

impl CircleSample {
    /// Angle channel `atan2(x2, x1)`.
    pub fn z_angle(&self) -> Result<DataMatrix> {
        DataMatrix::column_vector(self.data.features.row_iter().map(|r| r[1].atan2(r[0])).collect())
    }

    /// Cosine channel `x1`.
    pub fn z_cos(&self) -> Result<DataMatrix> {
        DataMatrix::column_vector(self.data.features.column(0))
    }
}

/// `theta ~ U(-pi, pi)`, `X = (cos, sin)`; the label is `1{theta in [-alpha, alpha]}`
/// (symmetric) or `1{theta in (0, alpha)}` (asymmetric), XOR `Bernoulli(q)`.
pub fn gen_circle(n: usize, alpha: f64, q: f64, symmetric: bool, rng: &mut RngStream) -> Result<CircleSample> {
    if n == 0 || !(alpha > 0.0 && alpha < PI) || !(0.0..0.5).contains(&q) {
        return Err(invalid("circle generator needs n > 0, alpha in (0, pi), q in [0, 0.5)"));
    }
    let mut values = Vec::with_capacity(2 * n);
    let mut labels = Vec::with_capacity(n);
    let mut theta = Vec::with_capacity(n);
    for _ in 0..n {
        let t = rng.uniform_range(-PI, PI);
        let inside = if symmetric { t.abs() <= alpha } else { t > 0.0 && t < alpha };
        let flip = rng.bernoulli(q);
        labels.push(usize::from(inside ^ flip));
        values.push(t.cos());
        values.push(t.sin());
        theta.push(t);
    }
    Ok(CircleSample {
        data: Dataset::new(
            if symmetric { "circle-symmetric" } else { "circle-asymmetric" },
            DataMatrix::new(n, 2, values)?,
            LabelVector::new(labels, 2)?,
            rng.seed(),
        )?,
        theta,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SinusoidConfig {
    pub n: usize,
    pub fs: f64,
    pub duration: f64,
    pub f0: f64,
    pub f1: f64,
    pub amp_range: [f64; 2],
    pub am_band: [f64; 2],
    pub snr_db_range: [f64; 2],
    pub seed: u64,
}

impl Default for SinusoidConfig {
    fn default() -> Self {
        Self {
            n: 4000,
            fs: 128.0,
            duration: 1.0,
            f0: 5.0,
            f1: 9.0,
            amp_range: [0.8, 1.2],
            am_band: [0.5, 1.0],
            snr_db_range: [15.0, 20.0],
            seed: 0,
        }
    }
}

impl SinusoidConfig {
    /// Samples per signal, `fs * duration`.
    pub fn signal_len(&self) -> usize {
        (self.fs * self.duration).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let ordered = |r: [f64; 2]| r[0].is_finite() && r[1].is_finite() && r[0] <= r[1];
        if self.n == 0 {
            return Err(invalid("sinusoids: n must be positive"));
        }
        if !(self.fs > 0.0 && self.duration > 0.0) || self.signal_len() < 4 {
            return Err(invalid("sinusoids: fs and duration must give at least 4 samples"));
        }
        let nyquist = self.fs / 2.0;
        if !(self.f0 > 0.0 && self.f1 > 0.0) || self.f0 == self.f1 || self.f0 >= nyquist || self.f1 >= nyquist {
            return Err(invalid("sinusoids: f0 and f1 must differ and lie in (0, fs/2)"));
        }
        if !ordered(self.amp_range) || self.amp_range[0] <= 0.0 {
            return Err(invalid("sinusoids: amp_range must be an ordered positive range"));
        }
        if !ordered(self.am_band) || self.am_band[0] < 0.0 {
            return Err(invalid("sinusoids: am_band must be an ordered non-negative range"));
        }
        if !ordered(self.snr_db_range) {
            return Err(invalid("sinusoids: snr_db_range must be an ordered range"));
        }
        Ok(())
    }
}

/// One generated signal with its components kept for inspection.
#[derive(Clone, Debug, PartialEq)]
pub struct SinusoidParts {
    pub clean: Vec<f64>,
    pub noise: Vec<f64>,
    pub snr_db: f64,
}

fn sinusoid(cfg: &SinusoidConfig, label: usize, rng: &mut RngStream) -> SinusoidParts {
    let len = cfg.signal_len();
    let freq = if label == 0 { cfg.f0 } else { cfg.f1 };
    let amp = rng.uniform_range(cfg.amp_range[0], cfg.amp_range[1]);
    let phase = rng.uniform_range(0.0, 2.0 * PI);
    let f_env = rng.uniform_range(cfg.am_band[0], cfg.am_band[1]);
    let phase_env = rng.uniform_range(0.0, 2.0 * PI);
    let snr_db = rng.uniform_range(cfg.snr_db_range[0], cfg.snr_db_range[1]);
    let clean: Vec<f64> = (0..len)
        .map(|j| {
            let t = j as f64 / cfg.fs;
            let env = 1.0 + 0.2 * (2.0 * PI * f_env * t + phase_env).sin();
            amp * env * (2.0 * PI * freq * t + phase).sin()
        })
        .collect();
    let raw: Vec<f64> = (0..len).map(|_| rng.normal()).collect();
    let p_signal = clean.iter().map(|v| v * v).sum::<f64>() / len as f64;
    let p_raw = raw.iter().map(|v| v * v).sum::<f64>() / len as f64;
    let target = p_signal / 10f64.powf(snr_db / 10.0);
    let scale = (target / p_raw).sqrt();
    SinusoidParts {
        clean,
        noise: raw.into_iter().map(|v| v * scale).collect(),
        snr_db,
    }
}

/// Generates the components of every signal; labels alternate `0, 1, 0, ...`.
pub fn gen_sinusoid_parts(cfg: &SinusoidConfig) -> Result<Vec<SinusoidParts>> {
    cfg.validate()?;
    let mut rng = RngStream::new(cfg.seed, 0).derive("sinusoids", 0);
    Ok((0..cfg.n).map(|i| sinusoid(cfg, i % 2, &mut rng)).collect())
}

/// Two-class amplitude-modulated tones in white noise.
pub fn gen_sinusoids(cfg: &SinusoidConfig) -> Result<Dataset> {
    let parts = gen_sinusoid_parts(cfg)?;
    let len = cfg.signal_len();
    let mut values = Vec::with_capacity(cfg.n * len);
    for p in &parts {
        values.extend(p.clean.iter().zip(&p.noise).map(|(c, e)| c + e));
    }
    Dataset::new(
        "sinusoids",
        DataMatrix::new(cfg.n, len, values)?,
        LabelVector::new((0..cfg.n).map(|i| i % 2).collect(), 2)?,
        cfg.seed,
    )
}
