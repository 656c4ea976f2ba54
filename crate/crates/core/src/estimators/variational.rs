//! DV and NWJ lower bounds evaluated on held-out data.

use super::critic::{train_critic, BoundValues, CriticConfig, Objective, TrainedCritic};
use super::plugin::JointTable;
use super::MIEstimate;
use crate::data::{stratified_split, DataMatrix, LabelVector};
use crate::error::{invalid, Result};
use crate::rng::RngStream;

/// Fit/eval halves used by the variational estimators.
pub fn fit_eval_split(y: &LabelVector, rng: &RngStream) -> Result<(Vec<usize>, Vec<usize>)> {
    stratified_split(y, y.len() / 2, &rng.derive("fit-eval", 0))
}

/// Trains on one stratified half and returns the critic with both bounds
/// evaluated on the other half.
pub fn fit_and_evaluate(z: &DataMatrix, y: &LabelVector, objective: Objective, cfg: &CriticConfig, rng: &RngStream) -> Result<(TrainedCritic, BoundValues)> {
    let (fit, eval) = fit_eval_split(y, rng)?;
    let critic = train_critic(&z.select_rows(&fit)?, &y.select(&fit), objective, cfg, rng)?;
    let bounds = critic.bounds(&z.select_rows(&eval)?, &y.select(&eval))?;
    Ok((critic, bounds))
}

fn estimate(z: &DataMatrix, y: &LabelVector, objective: Objective, cfg: &CriticConfig, rng: &RngStream) -> Result<MIEstimate> {
    let (_, bounds) = fit_and_evaluate(z, y, objective, cfg, rng)?;
    let name = match objective {
        Objective::Dv => "dv",
        Objective::Nwj => "nwj",
    };
    Ok(MIEstimate::new(bounds.get(objective), name, z.rows() - z.rows() / 2))
}

/// Donsker-Varadhan bound `E_J[T] - log E_P[e^T]`, unclamped.
pub fn mi_dv(z: &DataMatrix, y: &LabelVector, cfg: &CriticConfig, rng: &RngStream) -> Result<MIEstimate> {
    estimate(z, y, Objective::Dv, cfg, rng)
}

/// NWJ bound `E_J[T] - E_P[e^{T-1}]`, unclamped.
pub fn mi_nwj(z: &DataMatrix, y: &LabelVector, cfg: &CriticConfig, rng: &RngStream) -> Result<MIEstimate> {
    estimate(z, y, Objective::Nwj, cfg, rng)
}

fn table_probs(joint: &JointTable, critic: &[f64]) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    if critic.len() != joint.cells().len() {
        return Err(invalid("critic table must match the joint table shape"));
    }
    let total = joint.total();
    if total <= 0.0 {
        return Err(invalid("joint table has zero total mass"));
    }
    let p: Vec<f64> = joint.cells().iter().map(|c| c / total).collect();
    let pr: Vec<f64> = joint.row_marginal().iter().map(|c| c / total).collect();
    let pc: Vec<f64> = joint.col_marginal().iter().map(|c| c / total).collect();
    let prod = (0..p.len()).map(|i| pr[i / joint.cols()] * pc[i % joint.cols()]).collect();
    Ok((p, prod, critic.to_vec()))
}

/// NWJ functional of a tabulated critic on a discrete joint.
pub fn nwj_functional_table(joint: &JointTable, critic: &[f64]) -> Result<f64> {
    let (p, q, t) = table_probs(joint, critic)?;
    let ej: f64 = p.iter().zip(&t).filter(|(p, _)| **p > 0.0).map(|(p, t)| p * t).sum();
    let ep: f64 = q.iter().zip(&t).map(|(q, t)| q * (t - 1.0).exp()).sum();
    Ok(ej - ep)
}

/// DV functional of a tabulated critic on a discrete joint.
pub fn dv_functional_table(joint: &JointTable, critic: &[f64]) -> Result<f64> {
    let (p, q, t) = table_probs(joint, critic)?;
    let ej: f64 = p.iter().zip(&t).filter(|(p, _)| **p > 0.0).map(|(p, t)| p * t).sum();
    let ep: f64 = q.iter().zip(&t).map(|(q, t)| q * t.exp()).sum();
    Ok(ej - ep.ln())
}

/// The NWJ-optimal critic `1 + log(p(a,b) / (p(a) p(b)))` for a joint with no
/// empty cells.
pub fn nwj_optimal_critic(joint: &JointTable) -> Result<Vec<f64>> {
    let (p, q, _) = table_probs(joint, joint.cells())?;
    if p.iter().any(|&v| v <= 0.0) {
        return Err(invalid("optimal critic needs a joint without empty cells"));
    }
    Ok(p.iter().zip(&q).map(|(p, q)| 1.0 + (p / q).ln()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::plugin::plugin_mi_value;

    #[test]
    fn optimal_critic_attains_plugin_mi() {
        let joint = JointTable::from_rows(&[vec![30.0, 10.0], vec![10.0, 30.0]]).unwrap();
        let t = nwj_optimal_critic(&joint).unwrap();
        let nwj = nwj_functional_table(&joint, &t).unwrap();
        assert!((nwj - 0.130812).abs() < 1e-6);
        assert!((nwj - plugin_mi_value(&joint).unwrap()).abs() < 1e-12);
        // DV is shift invariant and also tight at T*.
        let dv = dv_functional_table(&joint, &t).unwrap();
        assert!((dv - nwj).abs() < 1e-12);
    }

    #[test]
    fn dv_dominates_nwj_for_any_table_critic() {
        let joint = JointTable::from_rows(&[vec![5.0, 1.0, 2.0], vec![1.0, 7.0, 3.0]]).unwrap();
        let mut rng = RngStream::new(5, 0);
        for _ in 0..200 {
            let t: Vec<f64> = (0..6).map(|_| 2.0 * rng.normal()).collect();
            let dv = dv_functional_table(&joint, &t).unwrap();
            let nwj = nwj_functional_table(&joint, &t).unwrap();
            assert!(dv >= nwj);
        }
    }
}
