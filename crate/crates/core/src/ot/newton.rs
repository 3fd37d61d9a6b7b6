//! Damped Newton steps on the entropic dual.
//!
//! Sinkhorn converges linearly at a rate that approaches 1 as the
//! regularization shrinks, which stalls it on small-`eps` instances. From a
//! Sinkhorn warm start, Newton on the dual converges in a handful of steps.

use super::CostMatrix;

/// Largest `n + m` for which the dense Newton system is formed.
pub(crate) const NEWTON_MAX_DIM: usize = 400;

struct State {
    plan: Vec<f64>,
    rows: Vec<f64>,
    cols: Vec<f64>,
    /// Dual objective in units of `eps`.
    objective: f64,
}

fn state(cost: &CostMatrix, a: &[f64], b: &[f64], u: &[f64], v: &[f64], eps: f64) -> Option<State> {
    let (n, m) = (cost.rows(), cost.cols());
    let mut plan = vec![0.0; n * m];
    let mut rows = vec![0.0; n];
    let mut cols = vec![0.0; m];
    for i in 0..n {
        for j in 0..m {
            let p = (u[i] + v[j] - cost.get(i, j) / eps).exp();
            plan[i * m + j] = p;
            rows[i] += p;
            cols[j] += p;
        }
    }
    let linear: f64 = a.iter().zip(u).map(|(w, x)| w * x).sum::<f64>() + b.iter().zip(v).map(|(w, x)| w * x).sum::<f64>();
    let objective = linear - rows.iter().sum::<f64>();
    objective.is_finite().then_some(State {
        plan,
        rows,
        cols,
        objective,
    })
}

fn residual(s: &State, a: &[f64], b: &[f64]) -> f64 {
    let r = s.rows.iter().zip(a).map(|(x, w)| (x - w).abs());
    let c = s.cols.iter().zip(b).map(|(x, w)| (x - w).abs());
    r.chain(c).fold(0.0, f64::max)
}

/// In-place Cholesky of a dense SPD matrix; false if a pivot is not positive.
fn cholesky(h: &mut [f64], k: usize) -> bool {
    for j in 0..k {
        let mut d = h[j * k + j];
        for p in 0..j {
            d -= h[j * k + p] * h[j * k + p];
        }
        if d.is_nan() || d <= 0.0 {
            return false;
        }
        let d = d.sqrt();
        h[j * k + j] = d;
        for i in j + 1..k {
            let mut s = h[i * k + j];
            for p in 0..j {
                s -= h[i * k + p] * h[j * k + p];
            }
            h[i * k + j] = s / d;
        }
    }
    true
}

fn cholesky_solve(l: &[f64], k: usize, rhs: &mut [f64]) {
    for i in 0..k {
        let mut s = rhs[i];
        for p in 0..i {
            s -= l[i * k + p] * rhs[p];
        }
        rhs[i] = s / l[i * k + i];
    }
    for i in (0..k).rev() {
        let mut s = rhs[i];
        for p in i + 1..k {
            s -= l[p * k + i] * rhs[p];
        }
        rhs[i] = s / l[i * k + i];
    }
}

/// Newton direction for the reduced system with the last column potential
/// held fixed.
fn direction(s: &State, a: &[f64], b: &[f64], n: usize, m: usize) -> Option<Vec<f64>> {
    let k = n + m - 1;
    let mut hess = vec![0.0; k * k];
    for i in 0..n {
        hess[i * k + i] = s.rows[i];
        for j in 0..m - 1 {
            let p = s.plan[i * m + j];
            hess[i * k + n + j] = p;
            hess[(n + j) * k + i] = p;
        }
    }
    for j in 0..m - 1 {
        hess[(n + j) * k + n + j] = s.cols[j];
    }
    let scale = hess.iter().step_by(k + 1).fold(0.0_f64, |acc, &d| acc.max(d));
    let mut grad: Vec<f64> = a
        .iter()
        .zip(&s.rows)
        .map(|(w, r)| w - r)
        .chain(b[..m - 1].iter().zip(&s.cols).map(|(w, c)| w - c))
        .collect();
    // Degenerate supports make the system near singular; add the smallest
    // ridge that lets the factorization through.
    let mut ridge = 0.0;
    loop {
        let mut l = hess.clone();
        for d in 0..k {
            l[d * k + d] += ridge;
        }
        if cholesky(&mut l, k) {
            cholesky_solve(&l, k, &mut grad);
            return grad.iter().all(|x| x.is_finite()).then_some(grad);
        }
        ridge = if ridge == 0.0 { 1e-14 * scale } else { ridge * 100.0 };
        if ridge > scale {
            return None;
        }
    }
}

/// Refines scaled potentials `u = f/eps`, `v = g/eps` until the worst
/// marginal deviation is at most `tol` or `budget` steps are spent.
/// Returns the number of steps taken.
#[allow(clippy::too_many_arguments)]
pub(crate) fn polish(
    cost: &CostMatrix,
    a: &[f64],
    b: &[f64],
    eps: f64,
    u: &mut [f64],
    v: &mut [f64],
    budget: usize,
    tol: f64,
) -> usize {
    let (n, m) = (cost.rows(), cost.cols());
    let Some(mut current) = state(cost, a, b, u, v, eps) else {
        return 0;
    };
    let mut steps = 0;
    while steps < budget && residual(&current, a, b) > tol {
        let Some(delta) = direction(&current, a, b, n, m) else {
            break;
        };
        let slope: f64 = delta
            .iter()
            .zip(a.iter().zip(&current.rows).map(|(w, r)| w - r).chain(b.iter().zip(&current.cols).map(|(w, c)| w - c)))
            .map(|(d, g)| d * g)
            .sum();
        let mut t = 1.0;
        let mut accepted = None;
        while t > 1e-12 {
            let nu: Vec<f64> = u.iter().zip(&delta[..n]).map(|(x, d)| x + t * d).collect();
            let mut nv = v.to_vec();
            for (x, d) in nv.iter_mut().zip(&delta[n..]) {
                *x += t * d;
            }
            if let Some(next) = state(cost, a, b, &nu, &nv, eps) {
                // Near the optimum the objective gain drops below rounding;
                // a halved marginal error is then accepted on its own.
                let armijo = next.objective >= current.objective + 0.25 * t * slope;
                if armijo || residual(&next, a, b) <= 0.5 * residual(&current, a, b) {
                    accepted = Some((nu, nv, next));
                    break;
                }
            }
            t *= 0.5;
        }
        steps += 1;
        let Some((nu, nv, next)) = accepted else {
            break;
        };
        u.copy_from_slice(&nu);
        v.copy_from_slice(&nv);
        current = next;
    }
    steps
}
