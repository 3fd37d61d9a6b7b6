use crate::error::{Error, Result};

use super::{CostMatrix, Coupling, MarginalWeights};

/// `⟨C, π⟩ + eps·‖π‖²_F`.
pub fn quadratic_objective(cost: &CostMatrix, plan: &[f64], eps: f64) -> f64 {
    cost.values()
        .iter()
        .zip(plan)
        .map(|(c, p)| c * p + eps * p * p)
        .sum()
}

/// Euclidean projection of `v` onto `{x ≥ 0, Σx = mass}`, in place.
fn project_simplex(v: &mut [f64], mass: f64, scratch: &mut Vec<f64>) {
    if mass <= 0.0 {
        v.iter_mut().for_each(|x| *x = 0.0);
        return;
    }
    scratch.clear();
    scratch.extend_from_slice(v);
    scratch.sort_by(|a, b| b.total_cmp(a));
    let mut cumulative = 0.0;
    let mut theta = 0.0;
    for (k, &u) in scratch.iter().enumerate() {
        cumulative += u;
        let candidate = (cumulative - mass) / (k + 1) as f64;
        if u - candidate > 0.0 {
            theta = candidate;
        } else {
            break;
        }
    }
    v.iter_mut().for_each(|x| *x = (*x - theta).max(0.0));
}

fn project_rows(x: &mut [f64], cols: usize, mass: &[f64], scratch: &mut Vec<f64>) {
    for (row, &a) in x.chunks_exact_mut(cols).zip(mass) {
        project_simplex(row, a, scratch);
    }
}

fn project_cols(x: &mut [f64], cols: usize, mass: &[f64], column: &mut Vec<f64>, scratch: &mut Vec<f64>) {
    let rows = x.len() / cols;
    for (j, &b) in mass.iter().enumerate() {
        column.clear();
        column.extend((0..rows).map(|i| x[i * cols + j]));
        project_simplex(column, b, scratch);
        for (i, &v) in column.iter().enumerate() {
            x[i * cols + j] = v;
        }
    }
}

/// Quadratically regularized optimal transport.
///
/// Minimizes `⟨C, π⟩ + eps·‖π‖²_F` over the transport polytope. The
/// objective equals `eps·‖π + C/(2·eps)‖²` up to a constant, so one projected
/// gradient step of length `1/(2·eps)` from any point lands on the minimizer:
/// the Euclidean projection of `−C/(2·eps)` onto the polytope. That
/// projection is computed by Dykstra's alternating projections onto the
/// row-sum and column-sum slices of the nonnegative orthant, each of which
/// splits into independent simplex projections. Plans may be exactly sparse.
pub fn sinkhorn_frobenius(
    cost: &CostMatrix,
    marginals: &MarginalWeights,
    eps: f64,
    max_iters: usize,
    tol: f64,
) -> Result<Coupling> {
    if !(eps.is_finite() && eps > 0.0) {
        return Err(Error::Invalid(format!("epsilon must be positive, got {eps}")));
    }
    if max_iters == 0 {
        return Err(Error::Invalid("max_iters must be at least 1".into()));
    }
    cost.check_finite()?;
    marginals.check_shape(cost)?;

    let cols = cost.cols();
    let size = cost.rows() * cols;
    let mut x: Vec<f64> = cost.values().iter().map(|c| -c / (2.0 * eps)).collect();
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("cost / epsilon overflowed".into()));
    }
    let mut p = vec![0.0; size];
    let mut q = vec![0.0; size];
    let mut y = vec![0.0; size];
    let mut scratch = Vec::new();
    let mut column = Vec::new();

    let mut iterations = 0;
    while iterations < max_iters {
        iterations += 1;
        for k in 0..size {
            y[k] = x[k] + p[k];
        }
        project_rows(&mut y, cols, marginals.source(), &mut scratch);
        for k in 0..size {
            p[k] += x[k] - y[k];
            x[k] = y[k] + q[k];
        }
        project_cols(&mut x, cols, marginals.target(), &mut column, &mut scratch);
        for k in 0..size {
            q[k] += y[k] - x[k];
        }
        // Columns and nonnegativity hold exactly after the column projection.
        let row_residual = x
            .chunks_exact(cols)
            .zip(marginals.source())
            .map(|(row, a)| (row.iter().sum::<f64>() - a).abs())
            .fold(0.0, f64::max);
        if row_residual <= tol {
            break;
        }
    }
    Ok(Coupling::from_plan(cost, marginals, x, iterations, tol))
}
