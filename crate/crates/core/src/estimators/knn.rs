//! Nearest-neighbour MI estimators under the max norm.

use rayon::prelude::*;

use super::kdtree::KdTree;
use super::MIEstimate;
use crate::data::{DataMatrix, LabelVector};
use crate::error::{invalid, Error, Result};
use crate::numeric::digamma;
use crate::rng::RngStream;

/// Adds `1e-10 * max(std_j, mean|z_j|)` scaled Gaussian noise per column so
/// that tied values get a strict order. Returns row-major values.
pub fn jitter(z: &DataMatrix, rng: &RngStream) -> Vec<f64> {
    let (n, d) = (z.rows(), z.cols());
    let mut scale = vec![0.0; d];
    for (j, s) in scale.iter_mut().enumerate() {
        let col = z.column(j);
        let mean_abs = col.iter().map(|v| v.abs()).sum::<f64>() / n as f64;
        let m = col.iter().sum::<f64>() / n as f64;
        let sd = (col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n as f64).sqrt();
        let amp = sd.max(mean_abs);
        *s = 1e-10 * if amp > 0.0 { amp } else { 1.0 };
    }
    let mut rng = rng.derive("jitter", 0);
    let mut out = z.values().to_vec();
    for row in out.chunks_exact_mut(d) {
        for (v, s) in row.iter_mut().zip(&scale) {
            *v += s * rng.normal();
        }
    }
    out
}

/// Per-sample terms `psi(N) + psi(k) - psi(N_c(i)) - psi(m_i)` of the
/// continuous-discrete estimator; their mean is the raw estimate.
///
/// For sample `i` in class `c`, `d_i` is the max-norm distance to its k-th
/// neighbour inside class `c`, and `m_i` counts all samples (self included)
/// strictly closer than `d_i`.
pub fn knn_cd_terms(z: &DataMatrix, y: &LabelVector, k: usize, rng: &RngStream) -> Result<Vec<f64>> {
    if k == 0 {
        return Err(invalid("knn estimator needs k >= 1"));
    }
    if z.rows() != y.len() {
        return Err(Error::DimensionMismatch {
            context: "knn-cd labels",
            expected: z.rows(),
            got: y.len(),
        });
    }
    let n = z.rows();
    let d = z.cols();
    let counts = y.class_counts();
    for (class, &count) in counts.iter().enumerate() {
        if count > 0 && count <= k {
            return Err(Error::ClassTooSmall {
                class,
                count,
                needed: k + 1,
            });
        }
    }
    let values = jitter(z, rng);
    let mut radius = vec![0.0; n];
    for members in y.class_members() {
        if members.is_empty() {
            continue;
        }
        let mut pts = Vec::with_capacity(members.len() * d);
        for &i in &members {
            pts.extend_from_slice(&values[i * d..(i + 1) * d]);
        }
        let tree = KdTree::new(&pts, d);
        let radii: Vec<f64> = (0..members.len())
            .into_par_iter()
            .map(|local| tree.kth_distance(&pts[local * d..(local + 1) * d], k, Some(local)))
            .collect();
        for (&i, r) in members.iter().zip(radii) {
            radius[i] = r;
        }
    }
    let all = KdTree::new(&values, d);
    let base = digamma(n as f64) + digamma(k as f64);
    let labels = y.labels();
    Ok((0..n)
        .into_par_iter()
        .map(|i| {
            let m = all.count_within(&values[i * d..(i + 1) * d], radius[i], true).max(1);
            base - digamma(counts[labels[i]] as f64) - digamma(m as f64)
        })
        .collect())
}

/// Continuous-discrete MI with the within-class k-th neighbour radius,
/// clamped at zero.
pub fn mi_knn_cd(z: &DataMatrix, y: &LabelVector, k: usize, rng: &RngStream) -> Result<MIEstimate> {
    let terms = knn_cd_terms(z, y, k, rng)?;
    let raw = terms.iter().sum::<f64>() / terms.len() as f64;
    Ok(MIEstimate::new(raw, format!("knn-cd(k={k})"), terms.len()).clamp_nonnegative())
}

/// KSG (algorithm 1) estimate of `I(Z;W)` for continuous `Z` and `W`.
pub fn mi_ksg_cc(z: &DataMatrix, w: &DataMatrix, k: usize, rng: &RngStream) -> Result<MIEstimate> {
    if k == 0 {
        return Err(invalid("ksg estimator needs k >= 1"));
    }
    if z.rows() != w.rows() {
        return Err(Error::DimensionMismatch {
            context: "ksg paired samples",
            expected: z.rows(),
            got: w.rows(),
        });
    }
    let n = z.rows();
    if n <= k {
        return Err(invalid(format!("ksg needs more than k = {k} samples, got {n}")));
    }
    let zv = jitter(z, &rng.derive("ksg-z", 0));
    let wv = jitter(w, &rng.derive("ksg-w", 0));
    let (dz, dw) = (z.cols(), w.cols());
    let dj = dz + dw;
    let mut joint = Vec::with_capacity(n * dj);
    for i in 0..n {
        joint.extend_from_slice(&zv[i * dz..(i + 1) * dz]);
        joint.extend_from_slice(&wv[i * dw..(i + 1) * dw]);
    }
    let tj = KdTree::new(&joint, dj);
    let tz = KdTree::new(&zv, dz);
    let tw = KdTree::new(&wv, dw);
    let terms: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            let eps = tj.kth_distance(&joint[i * dj..(i + 1) * dj], k, Some(i));
            // Strict counts include the sample itself; remove it.
            let nz = tz.count_within(&zv[i * dz..(i + 1) * dz], eps, true) - 1;
            let nw = tw.count_within(&wv[i * dw..(i + 1) * dw], eps, true) - 1;
            digamma(nz as f64 + 1.0) + digamma(nw as f64 + 1.0)
        })
        .collect();
    let raw = digamma(k as f64) + digamma(n as f64) - terms.iter().sum::<f64>() / n as f64;
    Ok(MIEstimate::new(raw, format!("ksg(k={k})"), n).clamp_nonnegative())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_class_rejected() {
        let z = DataMatrix::column_vector(vec![0.0, 1.0, 2.0, 3.0, 4.0]).unwrap();
        let y = LabelVector::new(vec![0, 0, 0, 0, 1], 2).unwrap();
        let err = mi_knn_cd(&z, &y, 1, &RngStream::new(0, 0)).unwrap_err();
        assert!(matches!(err, Error::ClassTooSmall { class: 1, .. }));
        assert!(mi_ksg_cc(&z, &z, 5, &RngStream::new(0, 0)).is_err());
    }

    #[test]
    fn separated_classes_reach_log_two() {
        let z = DataMatrix::column_vector((0..400).map(|i| if i % 2 == 0 { i as f64 } else { 1e6 + i as f64 }).collect()).unwrap();
        let y = LabelVector::new((0..400).map(|i| i % 2).collect(), 2).unwrap();
        let est = mi_knn_cd(&z, &y, 3, &RngStream::new(1, 0)).unwrap();
        // m_i = k for every sample, so the estimate is psi(N) - psi(N/2) ~ ln 2.
        let exact = digamma(400.0) - digamma(200.0);
        assert!((est.value - exact).abs() < 1e-12, "{}", est.value);
    }
}
