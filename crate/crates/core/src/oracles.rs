//! Closed-form ground truth for the worked examples.
//! Values here are exact and serve as test oracles.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::linalg::{cholesky, Matrix};
use crate::numeric::{binary_entropy, sample_variance, safe_ln, InfoUnit};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Units {
    Nats,
    Bits,
    Dimensionless,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleValue {
    pub value: f64,
    pub units: Units,
    pub formula_id: String,
}

impl OracleValue {
    fn new(value: f64, units: Units, formula_id: &str) -> Result<Self> {
        if !value.is_finite() {
            return Err(invalid(format!("{formula_id} evaluated to a non-finite value")));
        }
        Ok(Self {
            value,
            units,
            formula_id: formula_id.into(),
        })
    }
}

/// Efficiency of the noisy mean `Z = mean(X) + eta`: `sigma2 / (sigma2 + tau2)`.
pub fn oracle_gaussian_location(sigma2: f64, tau2: f64) -> Result<OracleValue> {
    if !(sigma2 > 0.0) || !(tau2 >= 0.0) {
        return Err(invalid("gaussian location oracle needs sigma2 > 0 and tau2 >= 0"));
    }
    OracleValue::new(sigma2 / (sigma2 + tau2), Units::Dimensionless, "gaussian-location-efficiency")
}

/// Fisher information about a location parameter from replicated statistics:
/// the reciprocal of their unbiased sample variance.
pub fn fisher_from_replications(zbars: &[f64]) -> Result<f64> {
    if zbars.len() < 30 {
        return Err(invalid(format!("need at least 30 replications, got {}", zbars.len())));
    }
    let v = sample_variance(zbars);
    if !(v > 0.0) {
        return Err(invalid("replications have zero variance"));
    }
    Ok(1.0 / v)
}

/// `I(X;Y) = 0.5 ln(1 + 1/sigma_eps2)` for `Y = X + eps`, `X ~ N(0,1)`.
pub fn oracle_redundant(sigma_eps2: f64) -> Result<OracleValue> {
    if !(sigma_eps2 > 0.0) {
        return Err(invalid("redundant oracle needs sigma_eps2 > 0"));
    }
    OracleValue::new(0.5 * (1.0 / sigma_eps2).ln_1p(), Units::Nats, "redundant-gaussian-mi")
}

/// `-0.5 ln(1 - rho^2)` for a standard bivariate Gaussian.
pub fn gaussian_mi(rho: f64) -> Result<OracleValue> {
    if !(rho.abs() < 1.0) {
        return Err(invalid(format!("gaussian MI needs |rho| < 1, got {rho}")));
    }
    OracleValue::new(-0.5 * (-rho * rho).ln_1p(), Units::Nats, "bivariate-gaussian-mi")
}

/// Circle example values, all information quantities in bits.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CircleOracle {
    /// `Pr(Y = 1)`.
    pub p: f64,
    pub i_a: f64,
    pub i_b: f64,
    pub e_a: f64,
    pub e_b: f64,
}

impl CircleOracle {
    pub fn i_a_nats(&self) -> f64 {
        InfoUnit::Bits.to_nats(self.i_a)
    }

    pub fn i_b_nats(&self) -> f64 {
        InfoUnit::Bits.to_nats(self.i_b)
    }
}

fn check_circle(alpha: f64, q: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < PI) {
        return Err(invalid(format!("circle alpha must lie in (0, pi), got {alpha}")));
    }
    if !(0.0..0.5).contains(&q) {
        return Err(invalid(format!("circle flip probability must lie in [0, 0.5), got {q}")));
    }
    Ok(())
}

/// Channel A reads the angle, channel B reads `cos(theta)` only.
///
/// Symmetric cap `[-alpha, alpha]`: both channels carry `H_b(p) - H_b(q)`.
/// Asymmetric cap `(0, alpha)`: channel B loses `(alpha/pi)(1 - H_b(q))`.
pub fn oracle_circle(alpha: f64, q: f64, symmetric: bool) -> Result<CircleOracle> {
    check_circle(alpha, q)?;
    let hq = binary_entropy(q, InfoUnit::Bits)?;
    let (p, i_a, i_b) = if symmetric {
        let p = q + (alpha / PI) * (1.0 - 2.0 * q);
        let i_a = binary_entropy(p, InfoUnit::Bits)? - hq;
        (p, i_a, i_a)
    } else {
        let p = q + (alpha / (2.0 * PI)) * (1.0 - 2.0 * q);
        let i_a = binary_entropy(p, InfoUnit::Bits)? - hq;
        (p, i_a, i_a - (alpha / PI) * (1.0 - hq))
    };
    if !(i_a > 0.0) {
        return Err(invalid("circle configuration carries no information (I_A <= 0)"));
    }
    Ok(CircleOracle {
        p,
        i_a,
        i_b,
        e_a: 1.0,
        e_b: i_b / i_a,
    })
}

/// MI (nats) of a gridded joint `pdf[bin][label]` whose cells sum to 1.
pub fn brute_force_mi(pdf: &[Vec<f64>], grid: usize) -> Result<f64> {
    if grid < 64 {
        return Err(invalid(format!("brute-force grid must be >= 64, got {grid}")));
    }
    if pdf.len() != grid {
        return Err(invalid(format!("pdf has {} bins, grid is {grid}", pdf.len())));
    }
    let labels = pdf.first().map_or(0, Vec::len);
    if labels == 0 || pdf.iter().any(|r| r.len() != labels) {
        return Err(invalid("pdf rows must share a non-zero label count"));
    }
    if pdf.iter().flatten().any(|v| !(*v >= 0.0) || !v.is_finite()) {
        return Err(invalid("pdf cells must be finite and non-negative"));
    }
    let total: f64 = pdf.iter().flatten().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(invalid(format!("pdf is not normalized: total mass {total}")));
    }
    grid_mi(pdf)
}

/// Same summation as the plug-in estimator; `pdf` is normalized by its total.
fn grid_mi(pdf: &[Vec<f64>]) -> Result<f64> {
    let total: f64 = pdf.iter().flatten().sum();
    let labels = pdf[0].len();
    let pr: Vec<f64> = pdf.iter().map(|r| r.iter().sum::<f64>() / total).collect();
    let mut pc = vec![0.0; labels];
    for r in pdf {
        for (acc, v) in pc.iter_mut().zip(r) {
            *acc += v / total;
        }
    }
    let mut mi = 0.0;
    for (r, row) in pdf.iter().enumerate() {
        for (c, &w) in row.iter().enumerate() {
            if w > 0.0 {
                let p = w / total;
                mi += p * (safe_ln(p) - safe_ln(pr[r] * pc[c]));
            }
        }
    }
    Ok(mi)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CircleChannel {
    /// The angle, `grid` bins over `[-pi, pi)`.
    Angle,
    /// `cos(theta)`, `2 * grid` bins over `[-1, 1]`.
    Cosine,
}

fn overlap(a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.1.min(b.1) - a.0.max(b.0)).max(0.0)
}

/// Exact joint of a binned circle channel and the label, built by intersecting
/// each bin's angle set with the cap. Rows are bins, columns `y = 0, 1`.
pub fn circle_joint(alpha: f64, q: f64, symmetric: bool, channel: CircleChannel, grid: usize) -> Result<Vec<Vec<f64>>> {
    check_circle(alpha, q)?;
    let cap = if symmetric { (-alpha, alpha) } else { (0.0, alpha) };
    let cell = |pieces: &[(f64, f64)]| {
        let total: f64 = pieces.iter().map(|p| p.1 - p.0).sum();
        let inside: f64 = pieces.iter().map(|&p| overlap(p, cap)).sum();
        let outside = total - inside;
        let two_pi = 2.0 * PI;
        vec![
            (q * inside + (1.0 - q) * outside) / two_pi,
            ((1.0 - q) * inside + q * outside) / two_pi,
        ]
    };
    let rows = match channel {
        CircleChannel::Angle => (0..grid)
            .map(|b| {
                let lo = -PI + 2.0 * PI * b as f64 / grid as f64;
                let hi = -PI + 2.0 * PI * (b + 1) as f64 / grid as f64;
                cell(&[(lo, hi)])
            })
            .collect(),
        CircleChannel::Cosine => {
            let bins = 2 * grid;
            (0..bins)
                .map(|b| {
                    let c0 = -1.0 + 2.0 * b as f64 / bins as f64;
                    let c1 = -1.0 + 2.0 * (b + 1) as f64 / bins as f64;
                    // cos(theta) in [c0, c1] <=> |theta| in [acos c1, acos c0].
                    let (t0, t1) = (c1.clamp(-1.0, 1.0).acos(), c0.clamp(-1.0, 1.0).acos());
                    cell(&[(t0, t1), (-t1, -t0)])
                })
                .collect()
        }
    };
    Ok(rows)
}

/// Brute-force `I(Z;Y)` in bits for a binned circle channel.
pub fn circle_brute_force_bits(alpha: f64, q: f64, symmetric: bool, channel: CircleChannel, grid: usize) -> Result<f64> {
    let pdf = circle_joint(alpha, q, symmetric, channel, grid)?;
    let bins = pdf.len();
    Ok(InfoUnit::Bits.from_nats(brute_force_mi(&pdf, bins.max(grid))?))
}

/// Ratio of preserved to total Fisher information.
///
/// With `h`: `h' P I P' h / h' I h`. Without: `tr(P I) / tr(I)`. The trace form
/// lies in `[0, 1]` for every orthogonal projection; the directional form does
/// when `P` commutes with `I`.
pub fn projected_fisher_ratio(info: &Matrix, proj: &Matrix, h: Option<&[f64]>) -> Result<f64> {
    let d = info.rows;
    if info.cols != d || proj.rows != d || proj.cols != d {
        return Err(invalid("information and projection must both be d x d"));
    }
    if !info.is_symmetric(1e-10 * (1.0 + info.trace().abs())) || cholesky(info).is_none() {
        return Err(invalid("information matrix must be symmetric positive definite"));
    }
    let p2 = proj.matmul(proj)?;
    if p2.max_abs_diff(proj) > 1e-8 {
        return Err(invalid("projection must be idempotent"));
    }
    match h {
        Some(h) => {
            if h.len() != d {
                return Err(invalid("direction length must match the information matrix"));
            }
            let ph = proj.transpose().matvec(h);
            let num: f64 = ph.iter().zip(info.matvec(&ph)).map(|(a, b)| a * b).sum();
            let den: f64 = h.iter().zip(info.matvec(h)).map(|(a, b)| a * b).sum();
            Ok(num / den)
        }
        None => Ok(proj.matmul(info)?.trace() / info.trace()),
    }
}

/// Information about `theta` kept by `Z = mean(X) + eta`, `eta ~ N(0, tau2/n)`,
/// computed as the variance of the projected score `E[score | Z]`.
///
/// The full-sample score is `n (xbar - theta) / sigma2`; regressing `xbar - theta`
/// on `Z - theta` gives slope `sigma2 / (sigma2 + tau2)`, so
/// `E[score | Z] = n (Z - theta) / (sigma2 + tau2)` with variance `n / (sigma2 + tau2)`.
pub fn projected_info_gaussian_location(n: usize, sigma2: f64, tau2: f64) -> Result<f64> {
    if n == 0 || !(sigma2 > 0.0) || !(tau2 >= 0.0) {
        return Err(invalid("projected information needs n >= 1, sigma2 > 0, tau2 >= 0"));
    }
    let n = n as f64;
    let slope = sigma2 / (sigma2 + tau2);
    let var_z = (sigma2 + tau2) / n;
    let coef = n / sigma2 * slope;
    Ok(coef * coef * var_z)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gaussian_location_values() {
        assert_eq!(oracle_gaussian_location(1.0, 0.0).unwrap().value, 1.0);
        assert_eq!(oracle_gaussian_location(1.0, 1.0).unwrap().value, 0.5);
        assert_eq!(oracle_gaussian_location(1.0, 3.0).unwrap().value, 0.25);
    }

    #[test]
    fn fisher_replications() {
        assert!(fisher_from_replications(&[1.0; 40]).is_err());
        assert!(fisher_from_replications(&[1.0, 2.0]).is_err());
        // Alternating +-2 with an even count has unbiased variance 4 n/(n-1).
        let v: Vec<f64> = (0..40).map(|i| if i % 2 == 0 { 2.0 } else { -2.0 }).collect();
        let f = fisher_from_replications(&v).unwrap();
        assert!((f - 39.0 / (4.0 * 40.0)).abs() < 1e-12);
    }

    #[test]
    fn redundant_and_gaussian_mi() {
        assert!((oracle_redundant(1.0).unwrap().value - 0.346574).abs() < 1e-6);
        assert!((oracle_redundant(0.25).unwrap().value - 0.5 * 5f64.ln()).abs() < 1e-12);
        assert!(oracle_redundant(1e12).unwrap().value < 1e-11);
        assert_eq!(gaussian_mi(0.0).unwrap().value, 0.0);
        assert!((gaussian_mi(0.9).unwrap().value - 0.830366).abs() < 1e-6);
        assert_eq!(gaussian_mi(0.5).unwrap().value, gaussian_mi(-0.5).unwrap().value);
        assert!(gaussian_mi(1.0).is_err());
    }

    #[test]
    fn circle_values() {
        let s = oracle_circle(PI / 2.0, 0.0, true).unwrap();
        assert_eq!((s.p, s.i_a, s.i_b, s.e_a, s.e_b), (0.5, 1.0, 1.0, 1.0, 1.0));
        let a = oracle_circle(PI / 2.0, 0.0, false).unwrap();
        assert!((a.p - 0.25).abs() < 1e-15);
        assert!((a.i_a - 0.811278).abs() < 1e-6);
        assert!((a.i_b - 0.311278).abs() < 1e-6);
        assert!((a.e_b - 0.383689).abs() < 1e-5, "{}", a.e_b);
        // Vanishing cap with q = 0: I_B - I_A -> 0 and E_B climbs toward 1.
        let e: Vec<f64> = [1e-2, 1e-4, 1e-8, 1e-12]
            .iter()
            .map(|&al| oracle_circle(al, 0.0, false).unwrap())
            .inspect(|o| assert!(o.i_a - o.i_b < 0.01))
            .map(|o| o.e_b)
            .collect();
        assert!(e.windows(2).all(|w| w[1] > w[0]), "{e:?}");
        assert!(e[3] > 0.95);
        assert!(oracle_circle(0.0, 0.0, true).is_err());
        assert!(oracle_circle(1.0, 0.5, true).is_err());
    }

    #[test]
    fn brute_force_product_and_validation() {
        let grid = 64;
        let pdf: Vec<Vec<f64>> = (0..grid).map(|_| vec![0.3 / grid as f64, 0.7 / grid as f64]).collect();
        assert!(brute_force_mi(&pdf, grid).unwrap().abs() < 1e-9);
        let bad: Vec<Vec<f64>> = (0..grid).map(|_| vec![0.5 / grid as f64, 0.7 / grid as f64]).collect();
        assert!(brute_force_mi(&bad, grid).is_err());
        assert!(brute_force_mi(&pdf[..32], 32).is_err());
    }

    #[test]
    fn brute_force_matches_circle_oracle() {
        let a = oracle_circle(PI / 2.0, 0.0, false).unwrap();
        let ia = circle_brute_force_bits(PI / 2.0, 0.0, false, CircleChannel::Angle, 4096).unwrap();
        let ib = circle_brute_force_bits(PI / 2.0, 0.0, false, CircleChannel::Cosine, 4096).unwrap();
        assert!((ia - a.i_a).abs() < 1e-3);
        assert!((ib - a.i_b).abs() < 1e-3, "{ib}");
        let ib2 = circle_brute_force_bits(PI / 2.0, 0.0, false, CircleChannel::Cosine, 8192).unwrap();
        assert!((ib - ib2).abs() < 1e-4);
    }

    #[test]
    fn projected_fisher_cases() {
        let info = Matrix::from_rows(&[vec![2.0, 0.3], vec![0.3, 1.0]]).unwrap();
        let id = Matrix::identity(2);
        let zero = Matrix::zeros(2, 2);
        assert!((projected_fisher_ratio(&info, &id, Some(&[0.3, -1.0])).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(projected_fisher_ratio(&info, &zero, None).unwrap(), 0.0);
        let notproj = Matrix::from_rows(&[vec![2.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert!(projected_fisher_ratio(&info, &notproj, None).is_err());
        let indef = Matrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 1.0]]).unwrap();
        assert!(projected_fisher_ratio(&indef, &id, None).is_err());
    }

    #[test]
    fn projected_info_matches_example_one() {
        let n = 100;
        let kept = projected_info_gaussian_location(n, 1.0, 1.0).unwrap();
        let info = Matrix::new(1, 1, vec![n as f64 / 1.0]).unwrap();
        // Express the kept information as a scaled 1-D "projection" of the full information.
        let ratio = kept / info.at(0, 0);
        assert!((ratio - oracle_gaussian_location(1.0, 1.0).unwrap().value).abs() < 1e-12);
        assert!((ratio - 0.5).abs() < 1e-12);
    }
}
