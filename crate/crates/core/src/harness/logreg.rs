//! Multinomial logistic regression with an l2 penalty, trained by
//! deterministic full-batch gradient descent with Armijo backtracking.

use ndarray::{Array2, ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{complement, stratified_folds, DataMatrix, LabelVector};
use crate::error::{invalid, Result};
use crate::numeric::population_std;
use crate::rng::RngStream;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LogregConfig {
    pub folds: usize,
    pub inner_folds: usize,
    /// Candidate penalties on the mean loss; chosen by inner CV.
    pub l2_grid: Vec<f64>,
    pub max_iter: usize,
    pub grad_tol: f64,
}

impl Default for LogregConfig {
    fn default() -> Self {
        Self {
            folds: 3,
            inner_folds: 3,
            l2_grid: vec![1e-4, 1e-3, 1e-2, 1e-1],
            max_iter: 2000,
            grad_tol: 1e-5,
        }
    }
}

impl LogregConfig {
    pub fn validate(&self) -> Result<()> {
        if self.folds < 2 || self.inner_folds < 2 {
            return Err(invalid("logreg: folds and inner_folds must be >= 2"));
        }
        if self.l2_grid.is_empty() || self.l2_grid.iter().any(|l| !(*l >= 0.0) || !l.is_finite()) {
            return Err(invalid("logreg: l2_grid must be a non-empty list of finite values >= 0"));
        }
        if self.max_iter == 0 || !(self.grad_tol > 0.0) {
            return Err(invalid("logreg: max_iter must be positive and grad_tol > 0"));
        }
        Ok(())
    }
}

/// Trained classifier. `weights` is `K x (d + 1)`, bias in the last column.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassifierModel {
    pub weights: Array2<f64>,
    pub l2: f64,
    pub iterations: usize,
    pub grad_norm: f64,
    pub converged: bool,
    /// Objective after every accepted step, starting with the initial value.
    pub loss_history: Vec<f64>,
}

fn design(x: &DataMatrix) -> Array2<f64> {
    let (n, d) = (x.rows(), x.cols());
    let mut a = Array2::ones((n, d + 1));
    for (i, row) in x.row_iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            a[[i, j]] = *v;
        }
    }
    a
}

/// Row-wise softmax of `x w^T`.
fn probabilities(a: ArrayView2<f64>, w: &Array2<f64>) -> Array2<f64> {
    let mut logits = a.dot(&w.t());
    for mut row in logits.axis_iter_mut(Axis(0)) {
        let m = row.fold(f64::NEG_INFINITY, |acc, &v| acc.max(v));
        row.mapv_inplace(|v| (v - m).exp());
        let s = row.sum();
        row.mapv_inplace(|v| v / s);
    }
    logits
}

fn penalty(w: &Array2<f64>, l2: f64) -> f64 {
    let d = w.ncols() - 1;
    0.5 * l2 * w.iter().enumerate().filter(|(i, _)| i % (d + 1) != d).map(|(_, v)| v * v).sum::<f64>()
}

fn loss(a: ArrayView2<f64>, y: &[usize], w: &Array2<f64>, l2: f64) -> f64 {
    let logits = a.dot(&w.t());
    let mut total = 0.0;
    for (row, &c) in logits.axis_iter(Axis(0)).zip(y) {
        let m = row.fold(f64::NEG_INFINITY, |acc, &v| acc.max(v));
        let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        total += lse - row[c];
    }
    total / y.len() as f64 + penalty(w, l2)
}

fn gradient(a: ArrayView2<f64>, y: &[usize], w: &Array2<f64>, l2: f64) -> Array2<f64> {
    let mut p = probabilities(a, w);
    for (i, &c) in y.iter().enumerate() {
        p[[i, c]] -= 1.0;
    }
    let mut g = p.t().dot(&a) / y.len() as f64;
    let d = w.ncols() - 1;
    for k in 0..w.nrows() {
        for j in 0..d {
            g[[k, j]] += l2 * w[[k, j]];
        }
    }
    g
}

/// Fits on `(x, y)` from zero weights. Stops when the gradient norm drops
/// below `grad_tol` or after `max_iter` steps; the model records whether it
/// converged and the final gradient norm.
pub fn fit_logreg(x: &DataMatrix, y: &LabelVector, l2: f64, max_iter: usize, grad_tol: f64) -> Result<ClassifierModel> {
    if x.rows() != y.len() {
        return Err(invalid("logreg: feature and label counts differ"));
    }
    if !(l2 >= 0.0) {
        return Err(invalid("logreg: l2 must be >= 0"));
    }
    let a = design(x);
    let labels = y.labels();
    let mut w = Array2::<f64>::zeros((y.num_classes(), x.cols() + 1));
    let mut f = loss(a.view(), labels, &w, l2);
    let mut history = vec![f];
    let mut step: f64 = 1.0;
    let mut g = gradient(a.view(), labels, &w, l2);
    let mut gnorm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut iterations = 0;
    while iterations < max_iter && gnorm >= grad_tol {
        let g2 = gnorm * gnorm;
        let mut t = (step * 2.0).min(1e3);
        let mut accepted = None;
        for _ in 0..60 {
            let cand = &w - &(&g * t);
            let fc = loss(a.view(), labels, &cand, l2);
            if fc <= f - 1e-4 * t * g2 {
                accepted = Some((cand, fc));
                break;
            }
            t *= 0.5;
        }
        let Some((cand, fc)) = accepted else { break };
        w = cand;
        f = fc;
        step = t;
        history.push(f);
        iterations += 1;
        g = gradient(a.view(), labels, &w, l2);
        gnorm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
    }
    Ok(ClassifierModel {
        weights: w,
        l2,
        iterations,
        grad_norm: gnorm,
        converged: gnorm < grad_tol,
        loss_history: history,
    })
}

impl ClassifierModel {
    pub fn predict_proba(&self, x: &DataMatrix) -> Result<Array2<f64>> {
        if x.cols() + 1 != self.weights.ncols() {
            return Err(invalid("logreg: feature width does not match the model"));
        }
        Ok(probabilities(design(x).view(), &self.weights))
    }

    pub fn predict(&self, x: &DataMatrix) -> Result<Vec<usize>> {
        let p = self.predict_proba(x)?;
        Ok(p.axis_iter(Axis(0))
            .map(|row| {
                let mut best = 0;
                for (k, v) in row.iter().enumerate() {
                    if *v > row[best] {
                        best = k;
                    }
                }
                best
            })
            .collect())
    }

    pub fn accuracy(&self, x: &DataMatrix, y: &LabelVector) -> Result<f64> {
        let pred = self.predict(x)?;
        let hits = pred.iter().zip(y.labels()).filter(|(a, b)| a == b).count();
        Ok(hits as f64 / y.len() as f64)
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().all(|v| v.is_finite())
    }
}

/// Non-convergence notice for one fit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostic {
    pub context: String,
    pub l2: f64,
    pub iterations: usize,
    pub grad_norm: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvAccuracy {
    pub mean: f64,
    pub std: f64,
    pub per_fold: Vec<f64>,
    pub chosen_l2: Vec<f64>,
    pub diagnostics: Vec<FitDiagnostic>,
}

fn split(x: &DataMatrix, y: &LabelVector, idx: &[usize]) -> Result<(DataMatrix, LabelVector)> {
    Ok((x.select_rows(idx)?, y.select(idx)))
}

fn note(model: &ClassifierModel, context: String) -> Option<FitDiagnostic> {
    (!model.converged).then_some(FitDiagnostic {
        context,
        l2: model.l2,
        iterations: model.iterations,
        grad_norm: model.grad_norm,
    })
}

/// Chooses `l2` from the grid by inner stratified CV, then fits on all of
/// `(x, y)`. Ties go to the earlier grid entry.
pub fn fit_logreg_tuned(x: &DataMatrix, y: &LabelVector, cfg: &LogregConfig, rng: &RngStream) -> Result<(ClassifierModel, Vec<FitDiagnostic>)> {
    cfg.validate()?;
    let mut diagnostics = Vec::new();
    let l2 = if cfg.l2_grid.len() == 1 {
        cfg.l2_grid[0]
    } else {
        let folds = stratified_folds(y, cfg.inner_folds, &rng.derive("inner-folds", 0))?;
        let jobs: Vec<(usize, usize)> = (0..cfg.l2_grid.len()).flat_map(|g| (0..folds.len()).map(move |f| (g, f))).collect();
        let results = jobs
            .par_iter()
            .map(|&(g, f)| -> Result<(f64, Option<FitDiagnostic>)> {
                let (xt, yt) = split(x, y, &complement(x.rows(), &folds[f]))?;
                let (xv, yv) = split(x, y, &folds[f])?;
                let m = fit_logreg(&xt, &yt, cfg.l2_grid[g], cfg.max_iter, cfg.grad_tol)?;
                Ok((m.accuracy(&xv, &yv)?, note(&m, format!("inner fold {f}"))))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut best = (f64::NEG_INFINITY, cfg.l2_grid[0]);
        for (g, &l2) in cfg.l2_grid.iter().enumerate() {
            let chunk = &results[g * folds.len()..(g + 1) * folds.len()];
            let acc = chunk.iter().map(|r| r.0).sum::<f64>() / folds.len() as f64;
            if acc > best.0 {
                best = (acc, l2);
            }
        }
        diagnostics.extend(results.into_iter().filter_map(|r| r.1));
        best.1
    };
    let model = fit_logreg(x, y, l2, cfg.max_iter, cfg.grad_tol)?;
    diagnostics.extend(note(&model, "final fit".into()));
    Ok((model, diagnostics))
}

/// Outer stratified K-fold accuracy with the penalty tuned inside each
/// training split. `std` is the population standard deviation over folds.
pub fn logreg_cv_accuracy(z: &DataMatrix, y: &LabelVector, cfg: &LogregConfig, rng: &RngStream) -> Result<CvAccuracy> {
    cfg.validate()?;
    let folds = stratified_folds(y, cfg.folds, &rng.derive("outer-folds", 0))?;
    let results = folds
        .par_iter()
        .enumerate()
        .map(|(f, held)| -> Result<(f64, f64, Vec<FitDiagnostic>)> {
            let (xt, yt) = split(z, y, &complement(z.rows(), held))?;
            let (xv, yv) = split(z, y, held)?;
            let (m, mut diag) = fit_logreg_tuned(&xt, &yt, cfg, &rng.derive("outer-fold", f as u64))?;
            diag.iter_mut().for_each(|d| d.context = format!("outer fold {f}, {}", d.context));
            Ok((m.accuracy(&xv, &yv)?, m.l2, diag))
        })
        .collect::<Result<Vec<_>>>()?;
    let per_fold: Vec<f64> = results.iter().map(|r| r.0).collect();
    Ok(CvAccuracy {
        mean: per_fold.iter().sum::<f64>() / per_fold.len() as f64,
        std: population_std(&per_fold),
        chosen_l2: results.iter().map(|r| r.1).collect(),
        diagnostics: results.into_iter().flat_map(|r| r.2).collect(),
        per_fold,
    })
}
