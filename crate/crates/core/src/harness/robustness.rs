//! Test-time robustness: accuracy before and after Gaussian input noise.

use serde::{Deserialize, Serialize};

use super::logreg::ClassifierModel;
use crate::channels::Channel;
use crate::data::{DataMatrix, Dataset};
use crate::error::{invalid, Result};
use crate::rng::RngStream;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Robustness {
    pub acc_clean: f64,
    pub acc_robust: f64,
    pub gap: f64,
}

/// Standard-normal noise matrix shaped like `x`, drawn from `rng`'s
/// `"probe-noise"` child so every channel sees the same perturbation.
pub fn probe_noise(x: &DataMatrix, rng: &RngStream) -> Result<DataMatrix> {
    let mut r = rng.derive("probe-noise", 0);
    DataMatrix::new(x.rows(), x.cols(), (0..x.rows() * x.cols()).map(|_| r.normal()).collect())
}

fn perturb(x: &DataMatrix, noise: &DataMatrix, sigma: f64) -> Result<DataMatrix> {
    if sigma == 0.0 {
        return Ok(x.clone());
    }
    let v = x.values().iter().zip(noise.values()).map(|(a, e)| a + sigma * e).collect();
    DataMatrix::new(x.rows(), x.cols(), v)
}

/// Accuracy of `model` on `channel(test)` and on `channel(test + sigma * noise)`.
/// Noise is added in the channel's input space.
pub fn robustness_probe(channel: &Channel, model: &ClassifierModel, test: &Dataset, sigma: f64, rng: &RngStream) -> Result<Robustness> {
    let noise = probe_noise(&test.features, rng)?;
    robustness_with_noise(channel, model, test, sigma, &noise)
}

pub fn robustness_with_noise(channel: &Channel, model: &ClassifierModel, test: &Dataset, sigma: f64, noise: &DataMatrix) -> Result<Robustness> {
    if !(sigma >= 0.0) {
        return Err(invalid("noise sigma must be >= 0"));
    }
    let acc_clean = model.accuracy(&channel.apply(&test.features)?, &test.labels)?;
    let acc_robust = model.accuracy(&channel.apply(&perturb(&test.features, noise, sigma)?)?, &test.labels)?;
    Ok(Robustness {
        acc_clean,
        acc_robust,
        gap: acc_clean - acc_robust,
    })
}

/// Bisection for the noise level at which the accuracy drop reaches
/// `target_drop`, searching `[0, sigma_max]` with a fixed noise draw.
pub fn calibrate_sigma(
    channel: &Channel,
    model: &ClassifierModel,
    test: &Dataset,
    target_drop: f64,
    sigma_max: f64,
    rng: &RngStream,
) -> Result<f64> {
    if !(target_drop > 0.0 && target_drop < 1.0) || !(sigma_max > 0.0) {
        return Err(invalid("calibration needs target_drop in (0, 1) and sigma_max > 0"));
    }
    let noise = probe_noise(&test.features, rng)?;
    let drop = |s: f64| robustness_with_noise(channel, model, test, s, &noise).map(|r| r.gap);
    if drop(sigma_max)? < target_drop {
        return Err(invalid(format!("accuracy drop at sigma = {sigma_max} stays below {target_drop}")));
    }
    let (mut lo, mut hi) = (0.0, sigma_max);
    for _ in 0..40 {
        let mid = 0.5 * (lo + hi);
        if drop(mid)? < target_drop {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::LabelVector;
    use crate::harness::logreg::fit_logreg;

    fn task() -> Dataset {
        let mut rng = RngStream::new(1, 0);
        let mut v = Vec::new();
        let mut y = Vec::new();
        for i in 0..400 {
            let c = i % 2;
            v.push(if c == 1 { 1.5 } else { -1.5 } + rng.normal());
            v.push(rng.normal());
            y.push(c);
        }
        Dataset::new("t", DataMatrix::new(400, 2, v).unwrap(), LabelVector::new(y, 2).unwrap(), 1).unwrap()
    }

    #[test]
    fn zero_sigma_gives_zero_gap() {
        let d = task();
        let m = fit_logreg(&d.features, &d.labels, 1e-3, 500, 1e-6).unwrap();
        let r = robustness_probe(&Channel::identity(2), &m, &d, 0.0, &RngStream::new(2, 0)).unwrap();
        assert_eq!(r.gap, 0.0);
        assert_eq!(r.acc_clean, r.acc_robust);
    }

    #[test]
    fn calibrated_sigma_hits_target_drop() {
        let d = task();
        let m = fit_logreg(&d.features, &d.labels, 1e-3, 500, 1e-6).unwrap();
        let rng = RngStream::new(3, 0);
        let ch = Channel::identity(2);
        let s = calibrate_sigma(&ch, &m, &d, 0.15, 20.0, &rng).unwrap();
        let r = robustness_probe(&ch, &m, &d, s, &rng).unwrap();
        assert!(r.gap >= 0.15 && r.gap <= 0.2, "{r:?} at {s}");
    }
}
