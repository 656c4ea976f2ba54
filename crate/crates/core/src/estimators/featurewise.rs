//! Featurewise aggregation: one-dimensional MI per column, summed.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::knn::mi_knn_cd;
use super::variational::{mi_dv, mi_nwj};
use super::MIEstimate;
use crate::data::{DataMatrix, LabelVector};
use crate::error::Result;
use crate::rng::RngStream;
use crate::score::BaseEstimator;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeaturewiseResult {
    pub per_feature: Vec<MIEstimate>,
    pub sum: f64,
    /// `sum / d`.
    pub per_dim: f64,
}

/// Estimate for column `j` alone. Every column uses the same stream, so the
/// value depends only on the column contents.
pub fn mi_column(z: &DataMatrix, j: usize, y: &LabelVector, base: &BaseEstimator, rng: &RngStream) -> Result<MIEstimate> {
    let col = DataMatrix::column_vector(z.column(j))?;
    let rng = rng.derive("feature", 0);
    match base {
        BaseEstimator::Knn { k } => mi_knn_cd(&col, y, *k, &rng),
        BaseEstimator::Dv { critic } => mi_dv(&col, y, critic, &rng),
        BaseEstimator::Nwj { critic } => mi_nwj(&col, y, critic, &rng),
    }
}

pub fn mi_featurewise(z: &DataMatrix, y: &LabelVector, base: &BaseEstimator, rng: &RngStream) -> Result<FeaturewiseResult> {
    base.validate()?;
    let per_feature = (0..z.cols())
        .into_par_iter()
        .map(|j| mi_column(z, j, y, base, rng))
        .collect::<Result<Vec<_>>>()?;
    let sum: f64 = per_feature.iter().map(|e| e.value).sum();
    Ok(FeaturewiseResult {
        per_dim: sum / z.cols() as f64,
        sum,
        per_feature,
    })
}
