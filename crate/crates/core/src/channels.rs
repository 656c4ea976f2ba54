//! Interpretive channels: fitted maps `Z = phi(X)` and admissible post-maps.
//!
//! A [`Channel`] is immutable once fitted. The one stochastic kind,
//! `gauss_noise`, owns its random stream behind a mutex so a shared channel
//! still draws fresh noise on every [`Channel::apply`] call.
//!
//! [`ChannelSpec`] is the unfitted recipe: it names a channel and its size
//! parameters, and [`ChannelSpec::fit`] produces the fitted map from training
//! data. Cross-fitting refits the recipe on every fold.

use std::sync::Mutex;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::data::DataMatrix;
use crate::error::{invalid, Error, Result};
use crate::linalg::{determinant, symmetric_eigen, Matrix};
use crate::rng::RngStream;

/// Smallest |det| accepted for an affine channel.
pub const AFFINE_DET_MIN: f64 = 1e-12;

/// Noise source of a `gauss_noise` channel.
#[derive(Debug)]
pub struct NoiseSource(Mutex<RngStream>);

impl NoiseSource {
    fn new(rng: RngStream) -> Self {
        Self(Mutex::new(rng))
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, RngStream> {
        self.0.lock().unwrap_or_else(|p| p.into_inner())
    }
}

impl Clone for NoiseSource {
    fn clone(&self) -> Self {
        Self::new(self.lock().clone())
    }
}

impl Serialize for NoiseSource {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.lock().serialize(s)
    }
}

impl<'de> Deserialize<'de> for NoiseSource {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        Ok(Self::new(RngStream::deserialize(d)?))
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ChannelKind {
    Identity,
    Standardize {
        mean: Vec<f64>,
        /// `1/std` per column; zero for constant columns.
        inv_std: Vec<f64>,
    },
    Pca {
        mean: Vec<f64>,
        /// `k x d`, rows are unit eigenvectors.
        components: Vec<Vec<f64>>,
        eigenvalues: Vec<f64>,
        /// Sum of all `d` covariance eigenvalues.
        total_variance: f64,
    },
    Randproj {
        /// `k x d`.
        matrix: Vec<Vec<f64>>,
    },
    FftTopk {
        /// Retained real-FFT bins, highest mean energy first.
        bins: Vec<usize>,
    },
    Downsample {
        indices: Vec<usize>,
    },
    Affine {
        matrix: Vec<Vec<f64>>,
        offset: Vec<f64>,
    },
    GaussNoise {
        sigma: f64,
        rng: NoiseSource,
    },
    Compose {
        outer: Box<Channel>,
        inner: Box<Channel>,
    },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Channel {
    pub in_dim: usize,
    pub out_dim: usize,
    #[serde(flatten)]
    pub kind: ChannelKind,
}

fn rows_of(m: &Matrix) -> Vec<Vec<f64>> {
    (0..m.rows).map(|r| m.row(r).to_vec()).collect()
}

fn mat_of(rows: &[Vec<f64>]) -> Matrix {
    Matrix::from_rows(rows).expect("channel matrices are rectangular by construction")
}

/// `Z = X M^T` for a `k x d` matrix `M` stored as rows.
fn project(x: &DataMatrix, m: &[Vec<f64>], shift: Option<&[f64]>) -> Result<DataMatrix> {
    let k = m.len();
    let mut out = Vec::with_capacity(x.rows() * k);
    let mut buf = vec![0.0; x.cols()];
    for row in x.row_iter() {
        let r: &[f64] = match shift {
            Some(mu) => {
                for ((b, v), m) in buf.iter_mut().zip(row).zip(mu) {
                    *b = v - m;
                }
                &buf
            }
            None => row,
        };
        out.extend(m.iter().map(|w| w.iter().zip(r).map(|(a, b)| a * b).sum::<f64>()));
    }
    DataMatrix::new(x.rows(), k, out)
}

impl Channel {
    pub fn identity(dim: usize) -> Self {
        Self {
            in_dim: dim,
            out_dim: dim,
            kind: ChannelKind::Identity,
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match &self.kind {
            ChannelKind::Identity => "identity",
            ChannelKind::Standardize { .. } => "standardize",
            ChannelKind::Pca { .. } => "pca",
            ChannelKind::Randproj { .. } => "randproj",
            ChannelKind::FftTopk { .. } => "fft_topk",
            ChannelKind::Downsample { .. } => "downsample",
            ChannelKind::Affine { .. } => "affine",
            ChannelKind::GaussNoise { .. } => "gauss_noise",
            ChannelKind::Compose { .. } => "compose",
        }
    }

    /// Rowwise application. Never mutates `x`.
    pub fn apply(&self, x: &DataMatrix) -> Result<DataMatrix> {
        if x.cols() != self.in_dim {
            return Err(Error::DimensionMismatch {
                context: "channel input",
                expected: self.in_dim,
                got: x.cols(),
            });
        }
        match &self.kind {
            ChannelKind::Identity => Ok(x.clone()),
            ChannelKind::Standardize { mean, inv_std } => {
                let mut v = x.values().to_vec();
                for row in v.chunks_exact_mut(x.cols()) {
                    for ((val, m), s) in row.iter_mut().zip(mean).zip(inv_std) {
                        *val = (*val - m) * s;
                    }
                }
                DataMatrix::new(x.rows(), x.cols(), v)
            }
            ChannelKind::Pca {
                mean, components, ..
            } => project(x, components, Some(mean)),
            ChannelKind::Randproj { matrix } => project(x, matrix, None),
            ChannelKind::FftTopk { bins } => {
                let mags = fft_magnitudes(x);
                let half = x.cols() / 2 + 1;
                let mut out = Vec::with_capacity(x.rows() * bins.len());
                for row in mags.chunks_exact(half) {
                    out.extend(bins.iter().map(|&b| row[b]));
                }
                DataMatrix::new(x.rows(), bins.len(), out)
            }
            ChannelKind::Downsample { indices } => x.select_cols(indices),
            ChannelKind::Affine { matrix, offset } => {
                let mut z = project(x, matrix, None)?.into_values();
                for row in z.chunks_exact_mut(offset.len()) {
                    for (v, b) in row.iter_mut().zip(offset) {
                        *v += b;
                    }
                }
                DataMatrix::new(x.rows(), offset.len(), z)
            }
            ChannelKind::GaussNoise { sigma, rng } => {
                if *sigma == 0.0 {
                    return Ok(x.clone());
                }
                let mut rng = rng.lock();
                let v = x.values().iter().map(|v| v + sigma * rng.normal()).collect();
                DataMatrix::new(x.rows(), x.cols(), v)
            }
            ChannelKind::Compose { outer, inner } => outer.apply(&inner.apply(x)?),
        }
    }

    /// Maps PCA scores back to input space (`z W + mean`).
    pub fn pca_reconstruct(&self, z: &DataMatrix) -> Result<DataMatrix> {
        let ChannelKind::Pca {
            mean, components, ..
        } = &self.kind
        else {
            return Err(invalid(format!("{} channel has no reconstruction", self.kind_name())));
        };
        if z.cols() != components.len() {
            return Err(Error::DimensionMismatch {
                context: "pca scores",
                expected: components.len(),
                got: z.cols(),
            });
        }
        let mut out = Vec::with_capacity(z.rows() * self.in_dim);
        for row in z.row_iter() {
            out.extend((0..self.in_dim).map(|j| {
                mean[j] + row.iter().zip(components).map(|(s, w)| s * w[j]).sum::<f64>()
            }));
        }
        DataMatrix::new(z.rows(), self.in_dim, out)
    }

    /// Fraction of total training variance captured by the retained PCA components.
    pub fn explained_variance_fraction(&self) -> Option<f64> {
        match &self.kind {
            ChannelKind::Pca {
                eigenvalues,
                total_variance,
                ..
            } if *total_variance > 0.0 => Some(eigenvalues.iter().sum::<f64>() / total_variance),
            _ => None,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ch: Channel = serde_json::from_str(text)?;
        ch.validate()?;
        Ok(ch)
    }

    fn validate(&self) -> Result<()> {
        let dims_ok = match &self.kind {
            ChannelKind::Identity | ChannelKind::GaussNoise { .. } => self.in_dim == self.out_dim,
            ChannelKind::Standardize { mean, inv_std } => {
                mean.len() == self.in_dim && inv_std.len() == self.in_dim && self.out_dim == self.in_dim
            }
            ChannelKind::Pca {
                mean, components, ..
            } => mean.len() == self.in_dim && components.len() == self.out_dim && components.iter().all(|c| c.len() == self.in_dim),
            ChannelKind::Randproj { matrix } => {
                matrix.len() == self.out_dim && matrix.iter().all(|c| c.len() == self.in_dim)
            }
            ChannelKind::FftTopk { bins } => bins.len() == self.out_dim && bins.iter().all(|&b| b <= self.in_dim / 2),
            ChannelKind::Downsample { indices } => {
                indices.len() == self.out_dim && indices.iter().all(|&i| i < self.in_dim)
            }
            ChannelKind::Affine { matrix, offset } => {
                matrix.len() == self.out_dim && offset.len() == self.out_dim && matrix.iter().all(|r| r.len() == self.in_dim)
            }
            ChannelKind::Compose { outer, inner } => {
                outer.validate()?;
                inner.validate()?;
                inner.out_dim == outer.in_dim && inner.in_dim == self.in_dim && outer.out_dim == self.out_dim
            }
        };
        if dims_ok {
            Ok(())
        } else {
            Err(invalid(format!("inconsistent dimensions in {} channel document", self.kind_name())))
        }
    }
}

/// Column standardizer fitted on `train`; constant columns map to zero.
pub fn fit_standardizer(train: &DataMatrix) -> Channel {
    let n = train.rows() as f64;
    let mean = train.column_means();
    let mut var = vec![0.0; train.cols()];
    for row in train.row_iter() {
        for ((v, x), m) in var.iter_mut().zip(row).zip(&mean) {
            *v += (x - m).powi(2);
        }
    }
    let inv_std = var
        .iter()
        .map(|v| {
            let sd = (v / n).sqrt();
            if sd > 1e-12 * (1.0 + mean.iter().fold(0.0f64, |a, m| a.max(m.abs()))) {
                1.0 / sd
            } else {
                0.0
            }
        })
        .collect();
    Channel {
        in_dim: train.cols(),
        out_dim: train.cols(),
        kind: ChannelKind::Standardize { mean, inv_std },
    }
}

/// Projection onto the top-`k` eigenvectors of the training covariance.
///
/// Each eigenvector is signed so that its largest-magnitude entry is positive.
pub fn fit_pca(train: &DataMatrix, k: usize) -> Result<Channel> {
    let d = train.cols();
    if k == 0 || k > d {
        return Err(invalid(format!("pca needs 1 <= k <= {d}, got {k}")));
    }
    let mean = train.column_means();
    let denom = (train.rows().max(2) - 1) as f64;
    let mut cov = Matrix::zeros(d, d);
    let mut centered = vec![0.0; d];
    for row in train.row_iter() {
        for ((c, x), m) in centered.iter_mut().zip(row).zip(&mean) {
            *c = x - m;
        }
        for i in 0..d {
            let ci = centered[i];
            if ci == 0.0 {
                continue;
            }
            for j in i..d {
                cov.data[i * d + j] += ci * centered[j];
            }
        }
    }
    for i in 0..d {
        for j in i..d {
            let v = cov.data[i * d + j] / denom;
            cov.data[i * d + j] = v;
            cov.data[j * d + i] = v;
        }
    }
    let (values, vectors) = symmetric_eigen(&cov)?;
    let total_variance: f64 = values.iter().map(|v| v.max(0.0)).sum();
    let mut components = Vec::with_capacity(k);
    for r in 0..k {
        let mut w = vectors.row(r).to_vec();
        let lead = w
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()).then(b.0.cmp(&a.0)))
            .map(|(i, _)| i)
            .unwrap_or(0);
        if w[lead] < 0.0 {
            w.iter_mut().for_each(|v| *v = -*v);
        }
        components.push(w);
    }
    Ok(Channel {
        in_dim: d,
        out_dim: k,
        kind: ChannelKind::Pca {
            mean,
            components,
            eigenvalues: values[..k].to_vec(),
            total_variance,
        },
    })
}

/// `k x d` Gaussian random projection with i.i.d. `N(0, 1/k)` entries.
pub fn make_randproj(d: usize, k: usize, rng: &mut RngStream) -> Result<Channel> {
    if k == 0 || d == 0 {
        return Err(invalid("random projection needs k >= 1 and d >= 1"));
    }
    let sd = 1.0 / (k as f64).sqrt();
    let matrix = (0..k)
        .map(|_| (0..d).map(|_| sd * rng.normal()).collect())
        .collect();
    Ok(Channel {
        in_dim: d,
        out_dim: k,
        kind: ChannelKind::Randproj { matrix },
    })
}

/// Real-FFT magnitudes `|X_b|`, `b = 0..=d/2`, for every row (row-major).
pub fn fft_magnitudes(x: &DataMatrix) -> Vec<f64> {
    let d = x.cols();
    let half = d / 2 + 1;
    let fft = FftPlanner::<f64>::new().plan_fft_forward(d);
    let mut buf = vec![Complex::new(0.0, 0.0); d];
    let mut scratch = vec![Complex::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    let mut out = Vec::with_capacity(x.rows() * half);
    for row in x.row_iter() {
        for (b, &v) in buf.iter_mut().zip(row) {
            *b = Complex::new(v, 0.0);
        }
        fft.process_with_scratch(&mut buf, &mut scratch);
        out.extend(buf[..half].iter().map(|c| c.norm()));
    }
    out
}

/// Selects the `k` real-FFT bins with the highest mean energy over `train`,
/// excluding DC; ties go to the lower bin index.
pub fn fit_fft_topk(train: &DataMatrix, k: usize) -> Result<Channel> {
    let d = train.cols();
    if k == 0 || 2 * k >= d {
        return Err(invalid(format!("fft_topk needs 1 <= k < d/2 (d = {d}), got {k}")));
    }
    let half = d / 2 + 1;
    let mags = fft_magnitudes(train);
    // Per-bin energies are summed in sorted order so the selection does not
    // depend on the row order of the training set.
    let mut energy = vec![0.0; half];
    let mut col = Vec::with_capacity(train.rows());
    for (b, e) in energy.iter_mut().enumerate().skip(1) {
        col.clear();
        col.extend(mags.chunks_exact(half).map(|r| r[b] * r[b]));
        col.sort_by(f64::total_cmp);
        *e = col.iter().sum::<f64>() / train.rows() as f64;
    }
    let mut bins: Vec<usize> = (1..half).collect();
    bins.sort_by(|&a, &b| energy[b].total_cmp(&energy[a]).then(a.cmp(&b)));
    bins.truncate(k);
    Ok(Channel {
        in_dim: d,
        out_dim: k,
        kind: ChannelKind::FftTopk { bins },
    })
}

/// Keeps time indices `round(j (d-1)/(m-1))`, `j = 0..m`; `m = 1` keeps index 0.
pub fn make_downsample(d: usize, m: usize) -> Result<Channel> {
    if m == 0 || m > d {
        return Err(invalid(format!("downsample needs 1 <= m <= d (d = {d}), got {m}")));
    }
    let indices = if m == 1 {
        vec![0]
    } else {
        (0..m)
            .map(|j| ((j * (d - 1)) as f64 / (m - 1) as f64).round() as usize)
            .collect()
    };
    Ok(Channel {
        in_dim: d,
        out_dim: m,
        kind: ChannelKind::Downsample { indices },
    })
}

/// `x -> A x + b` for an invertible square `A`.
pub fn make_affine(a: &Matrix, b: &[f64]) -> Result<Channel> {
    if a.rows != a.cols {
        return Err(invalid("affine channel needs a square matrix"));
    }
    if b.len() != a.rows {
        return Err(Error::DimensionMismatch {
            context: "affine offset",
            expected: a.rows,
            got: b.len(),
        });
    }
    let det = determinant(a)?;
    if det.abs() <= AFFINE_DET_MIN || !det.is_finite() {
        return Err(Error::Singular { det });
    }
    Ok(Channel {
        in_dim: a.cols,
        out_dim: a.rows,
        kind: ChannelKind::Affine {
            matrix: rows_of(a),
            offset: b.to_vec(),
        },
    })
}

/// Adds fresh i.i.d. `N(0, sigma^2)` noise on every application.
pub fn make_gauss_noise(dim: usize, sigma: f64, rng: RngStream) -> Result<Channel> {
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(invalid(format!("noise sigma must be finite and >= 0, got {sigma}")));
    }
    Ok(Channel {
        in_dim: dim,
        out_dim: dim,
        kind: ChannelKind::GaussNoise {
            sigma,
            rng: NoiseSource::new(rng),
        },
    })
}

/// `outer ∘ inner`.
pub fn compose(outer: Channel, inner: Channel) -> Result<Channel> {
    if inner.out_dim != outer.in_dim {
        return Err(Error::DimensionMismatch {
            context: "compose",
            expected: outer.in_dim,
            got: inner.out_dim,
        });
    }
    Ok(Channel {
        in_dim: inner.in_dim,
        out_dim: outer.out_dim,
        kind: ChannelKind::Compose {
            outer: Box::new(outer),
            inner: Box::new(inner),
        },
    })
}

/// Matrix and offset of an affine channel.
pub fn affine_parts(c: &Channel) -> Option<(Matrix, Vec<f64>)> {
    match &c.kind {
        ChannelKind::Affine { matrix, offset } => Some((mat_of(matrix), offset.clone())),
        _ => None,
    }
}

/// Unfitted channel recipe.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ChannelSpec {
    #[default]
    Identity,
    Standardize,
    Pca { k: usize },
    Randproj { k: usize },
    FftTopk { k: usize },
    Downsample { m: usize },
    /// Maps every input to the zero vector of the same width.
    Zero,
    /// Stages fitted and applied left to right.
    Pipeline { stages: Vec<ChannelSpec> },
}

impl ChannelSpec {
    /// Short label used in report rows, e.g. `pca_k=16`.
    pub fn label(&self) -> String {
        match self {
            ChannelSpec::Identity => "identity".into(),
            ChannelSpec::Standardize => "standardize".into(),
            ChannelSpec::Pca { k } => format!("pca_k={k}"),
            ChannelSpec::Randproj { k } => format!("randproj_k={k}"),
            ChannelSpec::FftTopk { k } => format!("fft_top{k}"),
            ChannelSpec::Downsample { m } => format!("downsample_{m}"),
            ChannelSpec::Zero => "zero".into(),
            ChannelSpec::Pipeline { stages } => stages
                .iter()
                .filter(|s| **s != ChannelSpec::Standardize)
                .map(ChannelSpec::label)
                .collect::<Vec<_>>()
                .join("+"),
        }
    }

    /// Recipe followed by output standardization.
    pub fn standardized(self) -> ChannelSpec {
        ChannelSpec::Pipeline {
            stages: vec![self, ChannelSpec::Standardize],
        }
    }

    /// Fits the recipe on `train`. `rng` is only consumed by random projections.
    pub fn fit(&self, train: &DataMatrix, rng: &RngStream) -> Result<Channel> {
        let d = train.cols();
        match self {
            ChannelSpec::Identity => Ok(Channel::identity(d)),
            ChannelSpec::Standardize => Ok(fit_standardizer(train)),
            ChannelSpec::Pca { k } => fit_pca(train, *k),
            ChannelSpec::Randproj { k } => make_randproj(d, *k, &mut rng.derive("randproj", *k as u64)),
            ChannelSpec::FftTopk { k } => fit_fft_topk(train, *k),
            ChannelSpec::Downsample { m } => make_downsample(d, *m),
            ChannelSpec::Zero => Ok(Channel {
                in_dim: d,
                out_dim: d,
                kind: ChannelKind::Randproj {
                    matrix: vec![vec![0.0; d]; d],
                },
            }),
            ChannelSpec::Pipeline { stages } => {
                let mut stages = stages.iter();
                let first = stages
                    .next()
                    .ok_or_else(|| invalid("empty channel pipeline"))?;
                let mut channel = first.fit(train, rng)?;
                let mut current = channel.apply(train)?;
                for (i, stage) in stages.enumerate() {
                    let next = stage.fit(&current, &rng.derive("pipeline", i as u64 + 1))?;
                    current = next.apply(&current)?;
                    channel = compose(next, channel)?;
                }
                Ok(channel)
            }
        }
    }
}

/// Anything that can produce a fitted channel from training rows.
pub trait ChannelFitter: Sync {
    fn fit_channel(&self, train: &DataMatrix, rng: &RngStream) -> Result<Channel>;
}

impl ChannelFitter for ChannelSpec {
    fn fit_channel(&self, train: &DataMatrix, rng: &RngStream) -> Result<Channel> {
        self.fit(train, rng)
    }
}

impl<F> ChannelFitter for F
where
    F: Fn(&DataMatrix, &RngStream) -> Result<Channel> + Sync,
{
    fn fit_channel(&self, train: &DataMatrix, rng: &RngStream) -> Result<Channel> {
        self(train, rng)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_matrix(rows: usize, cols: usize, seed: u64) -> DataMatrix {
        let mut rng = RngStream::new(seed, 0);
        DataMatrix::new(rows, cols, (0..rows * cols).map(|_| rng.normal()).collect()).unwrap()
    }

    fn random_affine(d: usize, seed: u64) -> Channel {
        let mut rng = RngStream::new(seed, 1);
        let mut a = Matrix::identity(d);
        for v in a.data.iter_mut() {
            *v += 0.3 * rng.normal();
        }
        let b: Vec<f64> = (0..d).map(|_| rng.normal()).collect();
        make_affine(&a, &b).unwrap()
    }

    #[test]
    fn standardizer_on_training_set() {
        let x = random_matrix(200, 3, 1).map(|v| 5.0 * v + 2.0).unwrap();
        let s = fit_standardizer(&x);
        let z = s.apply(&x).unwrap();
        for j in 0..3 {
            let c = z.column(j);
            let m = c.iter().sum::<f64>() / 200.0;
            let sd = (c.iter().map(|v| (v - m).powi(2)).sum::<f64>() / 200.0).sqrt();
            assert!(m.abs() < 1e-10 && (sd - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn standardizer_constant_column_and_hand_value() {
        let x = DataMatrix::new(3, 2, vec![1.0, 4.0, 2.0, 4.0, 3.0, 4.0]).unwrap();
        let s = fit_standardizer(&x);
        let z = s.apply(&x).unwrap();
        assert!(z.column(1).iter().all(|&v| v == 0.0));
        let one = fit_standardizer(&DataMatrix::column_vector(vec![1.0, 2.0, 3.0]).unwrap());
        // population std of {1,2,3} is sqrt(2/3); (2-2)/sd = 0
        let v = one.apply(&DataMatrix::column_vector(vec![2.0]).unwrap()).unwrap();
        assert_eq!(v.get(0, 0), 0.0);
    }

    #[test]
    fn pca_full_rank_reconstructs() {
        let x = random_matrix(100, 5, 2);
        let p = fit_pca(&x, 5).unwrap();
        let back = p.pca_reconstruct(&p.apply(&x).unwrap()).unwrap();
        let err = back
            .values()
            .iter()
            .zip(x.values())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-8, "{err}");
        assert!(fit_pca(&x, 6).is_err());
    }

    #[test]
    fn pca_components_orthonormal_and_signed() {
        let x = random_matrix(300, 6, 3);
        let p = fit_pca(&x, 4).unwrap();
        let ChannelKind::Pca {
            components,
            eigenvalues,
            ..
        } = &p.kind
        else {
            unreachable!()
        };
        let w = mat_of(components);
        let gram = w.matmul(&w.transpose()).unwrap();
        assert!(gram.max_abs_diff(&Matrix::identity(4)) < 1e-8);
        assert!(eigenvalues.windows(2).all(|e| e[0] >= e[1]));
        for c in components {
            let lead = c.iter().fold(0.0f64, |m, v| if v.abs() > m.abs() { *v } else { m });
            assert!(lead > 0.0);
        }
    }

    #[test]
    fn pca_line_explained_variance() {
        // y = 2x + tiny noise: covariance [[1,2],[2,4]] (+ noise), top eigenvalue ~ 5.
        let mut rng = RngStream::new(4, 0);
        let rows: Vec<Vec<f64>> = (0..500)
            .map(|_| {
                let t = rng.normal();
                vec![t, 2.0 * t + 1e-3 * rng.normal()]
            })
            .collect();
        let x = DataMatrix::from_rows(&rows).unwrap();
        let p = fit_pca(&x, 1).unwrap();
        let frac = p.explained_variance_fraction().unwrap();
        assert!(frac > 0.999, "{frac}");
        let ChannelKind::Pca { components, .. } = &p.kind else {
            unreachable!()
        };
        // Exact 2x2 eigenvector of [[1,2],[2,4]] is (1,2)/sqrt(5).
        let s5 = 5f64.sqrt();
        assert!((components[0][0] - 1.0 / s5).abs() < 1e-3);
        assert!((components[0][1] - 2.0 / s5).abs() < 1e-3);
    }

    #[test]
    fn randproj_shape_determinism_and_scale() {
        let a = make_randproj(64, 16, &mut RngStream::new(5, 0)).unwrap();
        let b = make_randproj(64, 16, &mut RngStream::new(5, 0)).unwrap();
        assert_eq!(a.out_dim, 16);
        let (ChannelKind::Randproj { matrix: ma }, ChannelKind::Randproj { matrix: mb }) = (&a.kind, &b.kind) else {
            unreachable!()
        };
        assert_eq!(ma, mb);
        let big = make_randproj(64, 64, &mut RngStream::new(6, 0)).unwrap();
        let ChannelKind::Randproj { matrix } = &big.kind else {
            unreachable!()
        };
        let ms: f64 = matrix.iter().flatten().map(|v| v * v).sum::<f64>() / 4096.0;
        assert!((ms - 1.0 / 64.0).abs() < 0.2 / 64.0, "{ms}");
        let z = a.apply(&random_matrix(10, 64, 1)).unwrap();
        assert_eq!((z.rows(), z.cols()), (10, 16));
    }

    fn tone(freq: f64, n: usize) -> Vec<f64> {
        (0..n)
            .map(|i| (2.0 * std::f64::consts::PI * freq * i as f64 / n as f64).cos())
            .collect()
    }

    #[test]
    fn fft_topk_pure_tone_and_dc() {
        let x = DataMatrix::from_rows(&[tone(5.0, 128), tone(5.0, 128)]).unwrap();
        let c = fit_fft_topk(&x, 1).unwrap();
        let ChannelKind::FftTopk { bins } = &c.kind else {
            unreachable!()
        };
        assert_eq!(bins, &vec![5]);
        let z = c.apply(&x).unwrap();
        assert!((z.get(0, 0) - 64.0).abs() < 1e-9);

        let dc = DataMatrix::from_rows(&[vec![3.0; 128]]).unwrap();
        let c = fit_fft_topk(&dc, 1).unwrap();
        let ChannelKind::FftTopk { bins } = &c.kind else {
            unreachable!()
        };
        assert_eq!(bins, &vec![1]);
        assert!(c.apply(&dc).unwrap().get(0, 0).abs() < 1e-9);
        assert!(fit_fft_topk(&dc, 64).is_err());
    }

    #[test]
    fn fft_magnitudes_match_naive_dft() {
        // Non-power-of-two length exercises the general-length path.
        let x = random_matrix(3, 45, 8);
        let mags = fft_magnitudes(&x);
        let half = 45 / 2 + 1;
        for (r, row) in x.row_iter().enumerate() {
            for b in 0..half {
                let (mut re, mut im) = (0.0, 0.0);
                for (t, v) in row.iter().enumerate() {
                    let ang = -2.0 * std::f64::consts::PI * (b * t) as f64 / 45.0;
                    re += v * ang.cos();
                    im += v * ang.sin();
                }
                assert!((mags[r * half + b] - (re * re + im * im).sqrt()).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn fft_selection_ignores_row_order() {
        let x = random_matrix(60, 32, 9);
        let a = fit_fft_topk(&x, 5).unwrap();
        let rev: Vec<usize> = (0..60).rev().collect();
        let b = fit_fft_topk(&x.select_rows(&rev).unwrap(), 5).unwrap();
        let (ChannelKind::FftTopk { bins: ba }, ChannelKind::FftTopk { bins: bb }) = (&a.kind, &b.kind) else {
            unreachable!()
        };
        assert_eq!(ba, bb);
    }

    #[test]
    fn downsample_indices() {
        let c = make_downsample(128, 32).unwrap();
        let ChannelKind::Downsample { indices } = &c.kind else {
            unreachable!()
        };
        assert_eq!(indices.len(), 32);
        assert_eq!((indices[0], indices[31]), (0, 127));
        assert!(indices.windows(2).all(|w| w[0] < w[1]));
        let c = make_downsample(5, 3).unwrap();
        let ChannelKind::Downsample { indices } = &c.kind else {
            unreachable!()
        };
        assert_eq!(indices, &vec![0, 2, 4]);
        let c = make_downsample(7, 7).unwrap();
        let ChannelKind::Downsample { indices } = &c.kind else {
            unreachable!()
        };
        assert_eq!(indices, &(0..7).collect::<Vec<_>>());
        let c = make_downsample(7, 1).unwrap();
        assert_eq!(c.out_dim, 1);
    }

    #[test]
    fn affine_cases() {
        let id = make_affine(&Matrix::identity(3), &[0.0; 3]).unwrap();
        let x = random_matrix(4, 3, 10);
        assert_eq!(id.apply(&x).unwrap(), x);
        let scalar = make_affine(&Matrix::new(1, 1, vec![2.0]).unwrap(), &[1.0]).unwrap();
        let z = scalar.apply(&DataMatrix::column_vector(vec![3.0]).unwrap()).unwrap();
        assert_eq!(z.get(0, 0), 7.0);
        let tiny = Matrix::new(2, 2, vec![1e-7, 0.0, 0.0, 1e-6]).unwrap();
        assert!(matches!(make_affine(&tiny, &[0.0, 0.0]), Err(Error::Singular { .. })));
    }

    #[test]
    fn gauss_noise_variance_and_zero_sigma() {
        let x = DataMatrix::new(100_000, 1, vec![0.0; 100_000]).unwrap();
        let quiet = make_gauss_noise(1, 0.0, RngStream::new(1, 0)).unwrap();
        assert_eq!(quiet.apply(&x).unwrap(), x);
        let noisy = make_gauss_noise(1, 1.0, RngStream::new(1, 0)).unwrap();
        let z = noisy.apply(&x).unwrap();
        let v = crate::numeric::sample_variance(z.values());
        assert!((v - 1.0).abs() < 0.05, "{v}");
        // fresh noise per call
        assert_ne!(noisy.apply(&x).unwrap(), z);
    }

    #[test]
    fn compose_rules() {
        let x = random_matrix(20, 4, 11);
        let a1 = random_affine(4, 1);
        let a2 = random_affine(4, 2);
        let via_compose = compose(a2.clone(), a1.clone()).unwrap().apply(&x).unwrap();
        let (m1, b1) = affine_parts(&a1).unwrap();
        let (m2, b2) = affine_parts(&a2).unwrap();
        let m = m2.matmul(&m1).unwrap();
        let b: Vec<f64> = m2.matvec(&b1).iter().zip(&b2).map(|(u, v)| u + v).collect();
        let single = make_affine(&m, &b).unwrap().apply(&x).unwrap();
        let dev = via_compose
            .values()
            .iter()
            .zip(single.values())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(dev < 1e-10);

        let phi = random_affine(4, 3);
        let wrapped = compose(Channel::identity(4), phi.clone()).unwrap();
        assert_eq!(wrapped.apply(&x).unwrap(), phi.apply(&x).unwrap());

        let ds = make_downsample(32, 8).unwrap();
        let fft = fit_fft_topk(&random_matrix(10, 8, 1), 3).unwrap();
        let chain = compose(fft, ds).unwrap();
        assert_eq!((chain.in_dim, chain.out_dim), (32, 3));
        assert!(compose(make_downsample(32, 8).unwrap(), Channel::identity(4)).is_err());
    }

    #[test]
    fn compose_associative() {
        let x = random_matrix(30, 3, 12);
        let (a, b, c) = (random_affine(3, 4), random_affine(3, 5), random_affine(3, 6));
        let left = compose(compose(a.clone(), b.clone()).unwrap(), c.clone()).unwrap();
        let right = compose(a, compose(b, c).unwrap()).unwrap();
        let l = left.apply(&x).unwrap();
        let r = right.apply(&x).unwrap();
        let dev = l.values().iter().zip(r.values()).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
        assert!(dev < 1e-12);
    }

    #[test]
    fn apply_checks_dims_and_preserves_input() {
        let x = random_matrix(5, 3, 13);
        let before = x.clone();
        assert!(Channel::identity(4).apply(&x).is_err());
        let _ = random_affine(3, 7).apply(&x).unwrap();
        assert_eq!(x, before);
    }

    #[test]
    fn json_round_trip() {
        let x = random_matrix(50, 8, 14);
        let spec = ChannelSpec::Pipeline {
            stages: vec![ChannelSpec::Pca { k: 3 }, ChannelSpec::Standardize],
        };
        let ch = spec.fit(&x, &RngStream::new(1, 0)).unwrap();
        let text = ch.to_json().unwrap();
        assert!(text.contains("\"kind\": \"compose\""));
        let back = Channel::from_json(&text).unwrap();
        assert_eq!(back.apply(&x).unwrap(), ch.apply(&x).unwrap());
        let noise = make_gauss_noise(2, 0.5, RngStream::new(3, 4)).unwrap();
        let back = Channel::from_json(&noise.to_json().unwrap()).unwrap();
        assert_eq!(back.kind_name(), "gauss_noise");
    }

    #[test]
    fn spec_labels() {
        assert_eq!(ChannelSpec::Pca { k: 16 }.standardized().label(), "pca_k=16");
        assert_eq!(ChannelSpec::Randproj { k: 4 }.label(), "randproj_k=4");
    }
}
