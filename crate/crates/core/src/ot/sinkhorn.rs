use std::ops::Range;

use rayon::prelude::*;

use crate::error::{Error, Result};

use super::newton::{polish, NEWTON_MAX_DIM};
use super::{CostMatrix, Coupling, MarginalWeights};

/// Row count times column count above which work is spread over the rayon
/// pool. Column reductions run over fixed row blocks combined in block
/// order, so results do not depend on the thread count.
const PARALLEL_CELLS: usize = 1 << 16;
const ROW_BLOCK: usize = 64;

/// Sinkhorn iterations before small instances switch to Newton.
const WARMUP_ITERS: usize = 200;

/// Iterations per halving of the regularization while annealing.
const ANNEAL_STEPS: usize = 10;

/// Scalings outside `[1/ABSORB, ABSORB]` are folded into the potentials.
const ABSORB: f64 = 1e50;

fn map_rows(out: &mut [f64], parallel: bool, f: impl Fn(usize) -> f64 + Sync + Send) {
    if parallel {
        out.par_iter_mut().enumerate().for_each(|(i, o)| *o = f(i));
    } else {
        out.iter_mut().enumerate().for_each(|(i, o)| *o = f(i));
    }
}

fn column_reduce(
    n: usize,
    m: usize,
    parallel: bool,
    init: f64,
    combine: fn(f64, f64) -> f64,
    block: impl Fn(Range<usize>, &mut [f64]) + Sync + Send,
) -> Vec<f64> {
    let count = n.div_ceil(ROW_BLOCK);
    let mut partial = vec![init; count * m];
    let run = |(b, out): (usize, &mut [f64])| block(b * ROW_BLOCK..((b + 1) * ROW_BLOCK).min(n), out);
    if parallel {
        partial.par_chunks_mut(m).enumerate().for_each(run);
    } else {
        partial.chunks_mut(m).enumerate().for_each(run);
    }
    let mut total = vec![init; m];
    for chunk in partial.chunks(m) {
        for (t, p) in total.iter_mut().zip(chunk) {
            *t = combine(*t, *p);
        }
    }
    total
}

fn plan_of(cost: &CostMatrix, f: &[f64], g: &[f64], eps: f64) -> Vec<f64> {
    let m = cost.cols();
    (0..cost.rows() * m)
        .map(|k| ((f[k / m] + g[k % m] - cost.values()[k]) / eps).exp())
        .collect()
}

/// `exp((f_i + g_j − C_ij) / eps)` for potentials absorbed so far.
struct Kernel {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
    parallel: bool,
}

impl Kernel {
    fn times(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.rows];
        let m = self.cols;
        map_rows(&mut out, self.parallel, |i| {
            self.values[i * m..(i + 1) * m].iter().zip(v).map(|(k, x)| k * x).sum()
        });
        out
    }

    fn transposed_times(&self, u: &[f64]) -> Vec<f64> {
        let m = self.cols;
        column_reduce(self.rows, m, self.parallel, 0.0, |a, b| a + b, |rows, out| {
            for i in rows {
                let ui = u[i];
                for (o, k) in out.iter_mut().zip(&self.values[i * m..(i + 1) * m]) {
                    *o += k * ui;
                }
            }
        })
    }
}

struct Problem<'a> {
    cost: &'a CostMatrix,
    a: &'a [f64],
    b: &'a [f64],
    log_a: Vec<f64>,
    log_b: Vec<f64>,
    parallel: bool,
}

/// `weight / sum`, or `None` when the scaling leaves the absorbable range.
fn scalings(weights: &[f64], sums: &[f64]) -> Option<Vec<f64>> {
    let mut out = Vec::with_capacity(weights.len());
    for (&w, &s) in weights.iter().zip(sums) {
        if w == 0.0 {
            out.push(0.0);
            continue;
        }
        let x = w / s;
        if !(x.is_finite() && (1.0 / ABSORB..=ABSORB).contains(&x)) {
            return None;
        }
        out.push(x);
    }
    Some(out)
}

impl Problem<'_> {
    /// Log-domain row update: `f_i = eps·log a_i − eps·LSE_j((g_j − C_ij)/eps)`.
    fn log_rows(&self, g: &[f64], eps: f64, f: &mut [f64]) {
        let inv = 1.0 / eps;
        map_rows(f, self.parallel, |i| {
            if self.log_a[i] == f64::NEG_INFINITY {
                return f64::NEG_INFINITY;
            }
            let row = self.cost.row(i);
            let max = row.iter().zip(g).map(|(c, g)| g - c).fold(f64::NEG_INFINITY, f64::max);
            let sum: f64 = row.iter().zip(g).map(|(c, g)| ((g - c - max) * inv).exp()).sum();
            eps * self.log_a[i] - max - eps * sum.ln()
        });
    }

    /// Log-domain column update, the transpose of [`Problem::log_rows`].
    fn log_cols(&self, f: &[f64], eps: f64, g: &mut [f64]) {
        let (n, m) = (self.cost.rows(), self.cost.cols());
        let inv = 1.0 / eps;
        let max = column_reduce(n, m, self.parallel, f64::NEG_INFINITY, f64::max, |rows, out| {
            for i in rows {
                for (o, c) in out.iter_mut().zip(self.cost.row(i)) {
                    *o = o.max(f[i] - c);
                }
            }
        });
        let sum = column_reduce(n, m, self.parallel, 0.0, |a, b| a + b, |rows, out| {
            for i in rows {
                for ((o, c), mx) in out.iter_mut().zip(self.cost.row(i)).zip(&max) {
                    *o += ((f[i] - c - mx) * inv).exp();
                }
            }
        });
        for j in 0..m {
            g[j] = if self.log_b[j] == f64::NEG_INFINITY {
                f64::NEG_INFINITY
            } else {
                eps * self.log_b[j] - max[j] - eps * sum[j].ln()
            };
        }
    }

    fn kernel(&self, f: &[f64], g: &[f64], eps: f64) -> Kernel {
        let (n, m) = (self.cost.rows(), self.cost.cols());
        let inv = 1.0 / eps;
        let mut values = vec![0.0; n * m];
        let fill = |(i, row): (usize, &mut [f64])| {
            for ((k, c), gj) in row.iter_mut().zip(self.cost.row(i)).zip(g) {
                *k = ((f[i] + gj - c) * inv).exp();
            }
        };
        if self.parallel {
            values.par_chunks_mut(m).enumerate().for_each(fill);
        } else {
            values.chunks_mut(m).enumerate().for_each(fill);
        }
        Kernel {
            rows: n,
            cols: m,
            values,
            parallel: self.parallel,
        }
    }

    /// Sinkhorn iterations at regularization `eps` until the worst row
    /// deviation (columns being exact) is at most `tol` or `*iterations`
    /// reaches `limit`. Scalings run on a kernel with the potentials
    /// absorbed; whenever they drift out of range they are folded back in
    /// and the kernel is rebuilt after one log-domain iteration. Returns the
    /// last row deviation.
    fn scaling(&self, f: &mut [f64], g: &mut [f64], eps: f64, iterations: &mut usize, limit: usize, tol: f64) -> f64 {
        let mut residual = f64::INFINITY;
        while *iterations < limit {
            self.log_rows(g, eps, f);
            self.log_cols(f, eps, g);
            *iterations += 1;
            let kernel = self.kernel(f, g, eps);
            let mut u = vec![1.0; f.len()];
            let mut v = vec![1.0; g.len()];
            loop {
                let kv = kernel.times(&v);
                residual = u
                    .iter()
                    .zip(&kv)
                    .zip(self.a)
                    .map(|((ui, s), a)| (ui * s - a).abs())
                    .fold(0.0, f64::max);
                if residual <= tol || *iterations >= limit {
                    break;
                }
                let Some(u_next) = scalings(self.a, &kv) else { break };
                u = u_next;
                let Some(v_next) = scalings(self.b, &kernel.transposed_times(&u)) else { break };
                v = v_next;
                *iterations += 1;
            }
            for (fi, ui) in f.iter_mut().zip(&u) {
                *fi += eps * ui.ln();
            }
            for (gj, vj) in g.iter_mut().zip(&v) {
                *gj += eps * vj.ln();
            }
            if residual <= tol {
                break;
            }
        }
        residual
    }
}

/// Entropy-regularized optimal transport by stabilized Sinkhorn iterations.
///
/// Minimizes `⟨C, π⟩ − eps·H(π)` over plans with the given marginals, where
/// `eps` is an absolute regularization strength. Long runs start from an
/// annealed warm start. Instances with at most a few hundred rows plus
/// columns that have not converged after a short warm-up are finished with
/// Newton steps on the dual, each counted as one iteration. `converged`
/// reports whether the worst marginal deviation reached `tol` within
/// `max_iters` iterations; a non-converged plan is still returned.
pub fn sinkhorn(
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

    let (n, m) = (cost.rows(), cost.cols());
    let problem = Problem {
        cost,
        a: marginals.source(),
        b: marginals.target(),
        log_a: marginals.source().iter().map(|w| w.ln()).collect(),
        log_b: marginals.target().iter().map(|w| w.ln()).collect(),
        parallel: n * m >= PARALLEL_CELLS,
    };
    let mut f = vec![0.0; n];
    let mut g = vec![0.0; m];
    let mut iterations = 0;

    if max_iters >= 4 * WARMUP_ITERS {
        let (lo, hi) = cost
            .values()
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &c| (lo.min(c), hi.max(c)));
        let mut level = hi - lo;
        while level > 2.0 * eps && iterations + ANNEAL_STEPS <= WARMUP_ITERS {
            let limit = iterations + ANNEAL_STEPS;
            problem.scaling(&mut f, &mut g, level, &mut iterations, limit, f64::NEG_INFINITY);
            level *= 0.5;
        }
    }

    let newton = n + m <= NEWTON_MAX_DIM && n > 1 && m > 1;
    let limit = if newton { max_iters.min(iterations + WARMUP_ITERS) } else { max_iters };
    let residual = problem.scaling(&mut f, &mut g, eps, &mut iterations, limit, tol);
    if residual > tol && newton && iterations < max_iters {
        let mut u: Vec<f64> = f.iter().map(|x| x / eps).collect();
        let mut v: Vec<f64> = g.iter().map(|x| x / eps).collect();
        iterations += polish(cost, problem.a, problem.b, eps, &mut u, &mut v, max_iters - iterations, tol);
        let (f_new, g_new): (Vec<f64>, Vec<f64>) =
            (u.iter().map(|x| x * eps).collect(), v.iter().map(|x| x * eps).collect());
        let polished = Coupling::from_plan(cost, marginals, plan_of(cost, &f_new, &g_new, eps), iterations, tol);
        f = f_new;
        g = g_new;
        if !polished.converged {
            problem.scaling(&mut f, &mut g, eps, &mut iterations, max_iters, tol);
        }
    }

    let plan = plan_of(cost, &f, &g, eps);
    if plan.iter().any(|p| !p.is_finite()) {
        return Err(Error::Numerical("Sinkhorn plan overflowed".into()));
    }
    Ok(Coupling::from_plan(cost, marginals, plan, iterations, tol))
}
