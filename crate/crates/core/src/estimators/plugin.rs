//! Plug-in mutual information for discrete joint count tables.

use serde::{Deserialize, Serialize};

use super::MIEstimate;
use crate::error::{invalid, Result};
use crate::numeric::{entropy_of_weights, safe_ln};

/// Dense `K1 x K2` table of non-negative weights (counts or probabilities).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JointTable {
    rows: usize,
    cols: usize,
    cells: Vec<f64>,
}

impl JointTable {
    pub fn new(rows: usize, cols: usize, cells: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 || cells.len() != rows * cols {
            return Err(invalid(format!(
                "joint table needs {rows}x{cols} = {} cells, got {}",
                rows * cols,
                cells.len()
            )));
        }
        if cells.iter().any(|c| !c.is_finite() || *c < 0.0) {
            return Err(invalid("joint table cells must be finite and non-negative"));
        }
        Ok(Self { rows, cols, cells })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(invalid("ragged joint table"));
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    /// Counts pairs `(a[i], b[i])`.
    pub fn from_pairs(a: &[usize], b: &[usize], rows: usize, cols: usize) -> Result<Self> {
        if a.len() != b.len() {
            return Err(invalid("pair sequences differ in length"));
        }
        let mut cells = vec![0.0; rows * cols];
        for (&i, &j) in a.iter().zip(b) {
            if i >= rows || j >= cols {
                return Err(invalid(format!("pair ({i},{j}) outside {rows}x{cols} table")));
            }
            cells[i * cols + j] += 1.0;
        }
        Self::new(rows, cols, cells)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.cells[r * self.cols + c]
    }

    pub fn cells(&self) -> &[f64] {
        &self.cells
    }

    pub fn total(&self) -> f64 {
        self.cells.iter().sum()
    }

    pub fn row_marginal(&self) -> Vec<f64> {
        self.cells.chunks_exact(self.cols).map(|r| r.iter().sum()).collect()
    }

    pub fn col_marginal(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.cols];
        for r in self.cells.chunks_exact(self.cols) {
            for (acc, v) in m.iter_mut().zip(r) {
                *acc += v;
            }
        }
        m
    }

    pub fn transpose(&self) -> Self {
        let mut cells = vec![0.0; self.cells.len()];
        for r in 0..self.rows {
            for c in 0..self.cols {
                cells[c * self.rows + r] = self.get(r, c);
            }
        }
        Self {
            rows: self.cols,
            cols: self.rows,
            cells,
        }
    }

    /// Merges row `r` into output row `map[r]`; this is a deterministic post-map
    /// applied to the row variable.
    pub fn merge_rows(&self, map: &[usize], out_rows: usize) -> Result<Self> {
        if map.len() != self.rows || map.iter().any(|&m| m >= out_rows) {
            return Err(invalid("row merge map does not fit the table"));
        }
        let mut cells = vec![0.0; out_rows * self.cols];
        for (r, &m) in map.iter().enumerate() {
            for c in 0..self.cols {
                cells[m * self.cols + c] += self.get(r, c);
            }
        }
        Self::new(out_rows, self.cols, cells)
    }

    pub fn row_entropy(&self) -> f64 {
        entropy_of_weights(&self.row_marginal())
    }

    pub fn col_entropy(&self) -> f64 {
        entropy_of_weights(&self.col_marginal())
    }
}

/// Sum over non-zero cells of `p(a,b) log(p(a,b) / (p(a) p(b)))`, in nats.
pub fn plugin_mi_value(table: &JointTable) -> Result<f64> {
    let total = table.total();
    if total <= 0.0 {
        return Err(invalid("joint table has zero total mass"));
    }
    let pr: Vec<f64> = table.row_marginal().iter().map(|v| v / total).collect();
    let pc: Vec<f64> = table.col_marginal().iter().map(|v| v / total).collect();
    let mut mi = 0.0;
    for (r, row) in table.cells.chunks_exact(table.cols).enumerate() {
        for (c, &w) in row.iter().enumerate() {
            if w > 0.0 {
                let p = w / total;
                mi += p * (safe_ln(p) - safe_ln(pr[r] * pc[c]));
            }
        }
    }
    Ok(mi)
}

pub fn mi_plugin_discrete(table: &JointTable) -> Result<MIEstimate> {
    Ok(MIEstimate::new(plugin_mi_value(table)?, "plugin", table.total().round() as usize))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(rows: &[Vec<f64>]) -> JointTable {
        JointTable::from_rows(rows).unwrap()
    }

    #[test]
    fn spec_examples() {
        let ind = plugin_mi_value(&t(&[vec![25.0, 25.0], vec![25.0, 25.0]])).unwrap();
        assert!(ind.abs() < 1e-15);
        let diag = plugin_mi_value(&t(&[vec![50.0, 0.0], vec![0.0, 50.0]])).unwrap();
        assert!((diag - std::f64::consts::LN_2).abs() < 1e-12);
        // Independent summation: 2 * (0.375 ln 1.5) + 2 * (0.125 ln 0.5).
        let oracle = 0.75 * 1.5f64.ln() + 0.25 * 0.5f64.ln();
        let v = plugin_mi_value(&t(&[vec![30.0, 10.0], vec![10.0, 30.0]])).unwrap();
        assert!((v - oracle).abs() < 1e-12);
        // Same value via ln 2 - H_b(1/4).
        assert!((v - 0.130812).abs() < 1e-6);
    }

    #[test]
    fn rejects_empty_mass() {
        assert!(mi_plugin_discrete(&t(&[vec![0.0, 0.0]])).is_err());
        assert!(JointTable::from_rows(&[vec![-1.0]]).is_err());
    }

    #[test]
    fn merge_rows_sums() {
        let table = t(&[vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]]);
        let m = table.merge_rows(&[0, 1, 0], 2).unwrap();
        assert_eq!(m.cells(), &[6.0, 8.0, 3.0, 4.0]);
    }
}
