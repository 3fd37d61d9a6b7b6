//! Discrete optimal transport between empirical feature distributions.
//!
//! Plans are stored row-major with rows indexing source samples and columns
//! indexing target samples.

mod exact;
mod frobenius;
mod newton;
mod sinkhorn;

pub use exact::{exact_ot, EXACT_CELL_LIMIT};
pub use frobenius::{quadratic_objective, sinkhorn_frobenius};
pub use sinkhorn::sinkhorn;

use crate::error::{Error, Result};
use crate::io::FeatureMatrix;

/// Pairwise squared Euclidean distances, source rows by target columns.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl CostMatrix {
    pub fn new(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 || values.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "{} cost entries for a {rows}x{cols} matrix",
                values.len()
            )));
        }
        Ok(Self { rows, cols, values })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Dimension("ragged cost rows".into()));
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.cols + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.cols..(i + 1) * self.cols]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            values: self.values.iter().map(|v| v * factor).collect(),
        }
    }

    pub fn transpose(&self) -> Self {
        let mut values = Vec::with_capacity(self.values.len());
        for j in 0..self.cols {
            for i in 0..self.rows {
                values.push(self.get(i, j));
            }
        }
        Self {
            rows: self.cols,
            cols: self.rows,
            values,
        }
    }

    pub fn median(&self) -> f64 {
        let mut sorted = self.values.clone();
        sorted.sort_by(f64::total_cmp);
        let mid = sorted.len() / 2;
        if sorted.len().is_multiple_of(2) {
            0.5 * (sorted[mid - 1] + sorted[mid])
        } else {
            sorted[mid]
        }
    }

    /// Scale against which relative regularization strengths are measured:
    /// the median entry, falling back to the mean and then to 1.
    pub fn reference_scale(&self) -> f64 {
        let median = self.median();
        if median > 0.0 {
            return median;
        }
        let mean = self.values.iter().sum::<f64>() / self.values.len() as f64;
        if mean > 0.0 {
            mean
        } else {
            1.0
        }
    }

    pub(crate) fn check_finite(&self) -> Result<()> {
        match self.values.iter().position(|v| !v.is_finite()) {
            Some(pos) => Err(Error::Numerical(format!(
                "non-finite cost entry at ({}, {})",
                pos / self.cols,
                pos % self.cols
            ))),
            None => Ok(()),
        }
    }
}

/// Squared Euclidean cost between every source row and every target row.
pub fn cost_matrix(source: &FeatureMatrix, target: &FeatureMatrix) -> Result<CostMatrix> {
    if source.cols() != target.cols() {
        return Err(Error::Dimension(format!(
            "source features have d={}, target features have d={}",
            source.cols(),
            target.cols()
        )));
    }
    let mut values = Vec::with_capacity(source.rows() * target.rows());
    for s in source.iter_rows() {
        for t in target.iter_rows() {
            values.push(s.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum());
        }
    }
    CostMatrix::new(source.rows(), target.rows(), values)
}

/// Source and target probability weights.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginalWeights {
    source: Vec<f64>,
    target: Vec<f64>,
}

const MASS_TOL: f64 = 1e-12;

impl MarginalWeights {
    pub fn new(source: Vec<f64>, target: Vec<f64>) -> Result<Self> {
        for (name, w) in [("source", &source), ("target", &target)] {
            if w.is_empty() {
                return Err(Error::Invalid(format!("{name} weights are empty")));
            }
            if w.iter().any(|&x| !x.is_finite() || x < 0.0) {
                return Err(Error::Invalid(format!("{name} weights must be finite and nonnegative")));
            }
            let total: f64 = w.iter().sum();
            if (total - 1.0).abs() > MASS_TOL {
                return Err(Error::Invalid(format!("{name} weights sum to {total}, not 1")));
            }
        }
        Ok(Self { source, target })
    }

    /// The empirical measures `1/n` and `1/m`.
    pub fn uniform(n: usize, m: usize) -> Self {
        Self {
            source: vec![1.0 / n as f64; n],
            target: vec![1.0 / m as f64; m],
        }
    }

    pub fn source(&self) -> &[f64] {
        &self.source
    }

    pub fn target(&self) -> &[f64] {
        &self.target
    }

    pub fn is_uniform(&self) -> bool {
        let flat = |w: &[f64]| {
            let v = 1.0 / w.len() as f64;
            w.iter().all(|&x| (x - v).abs() <= MASS_TOL)
        };
        flat(&self.source) && flat(&self.target)
    }

    pub(crate) fn check_shape(&self, cost: &CostMatrix) -> Result<()> {
        if self.source.len() != cost.rows() || self.target.len() != cost.cols() {
            return Err(Error::Dimension(format!(
                "marginals of length ({}, {}) for a {}x{} cost matrix",
                self.source.len(),
                self.target.len(),
                cost.rows(),
                cost.cols()
            )));
        }
        Ok(())
    }
}

/// A transport plan together with its cost and solver diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct Coupling {
    rows: usize,
    cols: usize,
    plan: Vec<f64>,
    pub transport_cost: f64,
    pub iterations_used: usize,
    pub converged: bool,
    /// Worst absolute deviation of a row or column sum from its marginal.
    pub marginal_residual: f64,
}

impl Coupling {
    pub(crate) fn from_plan(
        cost: &CostMatrix,
        marginals: &MarginalWeights,
        plan: Vec<f64>,
        iterations_used: usize,
        tol: f64,
    ) -> Self {
        let mut coupling = Self {
            rows: cost.rows(),
            cols: cost.cols(),
            plan,
            transport_cost: 0.0,
            iterations_used,
            converged: false,
            marginal_residual: 0.0,
        };
        coupling.transport_cost = coupling
            .plan
            .iter()
            .zip(cost.values())
            .map(|(p, c)| p * c)
            .sum();
        coupling.marginal_residual = coupling.residual(marginals);
        coupling.converged = coupling.marginal_residual <= tol;
        coupling
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.plan[i * self.cols + j]
    }

    pub fn plan(&self) -> &[f64] {
        &self.plan
    }

    pub fn row_sums(&self) -> Vec<f64> {
        self.plan.chunks_exact(self.cols).map(|r| r.iter().sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<f64> {
        let mut sums = vec![0.0; self.cols];
        for row in self.plan.chunks_exact(self.cols) {
            for (s, v) in sums.iter_mut().zip(row) {
                *s += v;
            }
        }
        sums
    }

    pub fn total_mass(&self) -> f64 {
        self.plan.iter().sum()
    }

    pub fn residual(&self, marginals: &MarginalWeights) -> f64 {
        let rows = self.row_sums().into_iter().zip(marginals.source()).map(|(s, w)| (s - w).abs());
        let cols = self.col_sums().into_iter().zip(marginals.target()).map(|(s, w)| (s - w).abs());
        rows.chain(cols).fold(0.0, f64::max)
    }
}
