//! Exact transport for small instances, used as a reference solution.

use crate::error::{Error, Result};

use super::{CostMatrix, Coupling, MarginalWeights};

/// Largest `rows × cols` handled by [`exact_ot`].
pub const EXACT_CELL_LIMIT: usize = 64;

const PIVOT_TOL: f64 = 1e-12;

/// Minimum-cost transport plan, solved exactly.
///
/// Uniform square instances are optimal at a permutation (Birkhoff), so
/// every assignment is enumerated. Anything else goes through a two-phase
/// simplex on the transportation LP with Bland's pivoting rule.
pub fn exact_ot(cost: &CostMatrix, marginals: &MarginalWeights) -> Result<Coupling> {
    let (n, m) = (cost.rows(), cost.cols());
    if n * m > EXACT_CELL_LIMIT {
        return Err(Error::TooLarge {
            rows: n,
            cols: m,
            limit: EXACT_CELL_LIMIT,
        });
    }
    cost.check_finite()?;
    marginals.check_shape(cost)?;
    let plan = if n == m && marginals.is_uniform() {
        assignment_plan(cost)
    } else {
        transportation_lp(cost, marginals)?
    };
    Ok(Coupling::from_plan(cost, marginals, plan, 1, 1e-10))
}

/// Enumerates all permutations (Heap's algorithm) and keeps the cheapest.
fn assignment_plan(cost: &CostMatrix) -> Vec<f64> {
    let n = cost.rows();
    let mut perm: Vec<usize> = (0..n).collect();
    let total = |p: &[usize]| p.iter().enumerate().map(|(i, &j)| cost.get(i, j)).sum::<f64>();
    let mut best = perm.clone();
    let mut best_cost = total(&perm);
    let mut stack = vec![0usize; n];
    let mut i = 1;
    while i < n {
        if stack[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(stack[i], i);
            }
            let c = total(&perm);
            if c < best_cost {
                best_cost = c;
                best.copy_from_slice(&perm);
            }
            stack[i] += 1;
            i = 1;
        } else {
            stack[i] = 0;
            i += 1;
        }
    }
    let mass = 1.0 / n as f64;
    let mut plan = vec![0.0; n * n];
    for (i, &j) in best.iter().enumerate() {
        plan[i * n + j] = mass;
    }
    plan
}

/// Solves `min ⟨C, x⟩` over the transport polytope.
fn transportation_lp(cost: &CostMatrix, marginals: &MarginalWeights) -> Result<Vec<f64>> {
    let (n, m) = (cost.rows(), cost.cols());
    let vars = n * m;
    // Row constraints, then all but the last column constraint (it is implied).
    let mut a = Vec::new();
    let mut b = Vec::new();
    for i in 0..n {
        let mut row = vec![0.0; vars];
        row[i * m..(i + 1) * m].iter_mut().for_each(|x| *x = 1.0);
        a.push(row);
        b.push(marginals.source()[i]);
    }
    for j in 0..m.saturating_sub(1) {
        let mut row = vec![0.0; vars];
        for i in 0..n {
            row[i * m + j] = 1.0;
        }
        a.push(row);
        b.push(marginals.target()[j]);
    }
    let mut x = Simplex::new(a, b, cost.values().to_vec()).solve()?;
    // Clean pivoting round-off.
    x.iter_mut().for_each(|v| {
        if *v < 0.0 {
            *v = 0.0
        }
    });
    Ok(x)
}

/// Dense two-phase tableau simplex for `min c·x, Ax = b, x ≥ 0` with `b ≥ 0`.
struct Simplex {
    /// Constraint rows: `vars` structural columns, then one artificial per
    /// row, then the right-hand side.
    tableau: Vec<Vec<f64>>,
    basis: Vec<usize>,
    vars: usize,
    cost: Vec<f64>,
}

impl Simplex {
    fn new(a: Vec<Vec<f64>>, b: Vec<f64>, cost: Vec<f64>) -> Self {
        let rows = a.len();
        let vars = cost.len();
        let tableau = a
            .into_iter()
            .zip(b)
            .enumerate()
            .map(|(r, (mut row, rhs))| {
                row.resize(vars + rows + 1, 0.0);
                row[vars + r] = 1.0;
                row[vars + rows] = rhs;
                row
            })
            .collect();
        Self {
            tableau,
            basis: (vars..vars + rows).collect(),
            vars,
            cost,
        }
    }

    fn rhs(&self) -> usize {
        self.vars + self.tableau.len()
    }

    fn pivot(&mut self, row: usize, col: usize) {
        let width = self.tableau[row].len();
        let p = self.tableau[row][col];
        for k in 0..width {
            self.tableau[row][k] /= p;
        }
        let pivot_row = self.tableau[row].clone();
        for (r, other) in self.tableau.iter_mut().enumerate() {
            if r == row {
                continue;
            }
            let factor = other[col];
            if factor != 0.0 {
                for k in 0..width {
                    other[k] -= factor * pivot_row[k];
                }
            }
        }
        self.basis[row] = col;
    }

    /// Runs simplex iterations for objective `obj` over columns `< allowed`.
    fn optimize(&mut self, obj: &[f64], allowed: usize) -> Result<()> {
        let rhs = self.rhs();
        for _ in 0..100_000 {
            // Reduced cost of column j: obj_j − Σ_r obj_basis(r) · T[r][j].
            let entering = (0..allowed).find(|&j| {
                if self.basis.contains(&j) {
                    return false;
                }
                let reduced = obj[j]
                    - self
                        .tableau
                        .iter()
                        .zip(&self.basis)
                        .map(|(row, &bv)| obj[bv] * row[j])
                        .sum::<f64>();
                reduced < -PIVOT_TOL
            });
            let Some(col) = entering else {
                return Ok(());
            };
            let mut leaving: Option<(usize, f64)> = None;
            for (r, row) in self.tableau.iter().enumerate() {
                if row[col] > PIVOT_TOL {
                    let ratio = row[rhs] / row[col];
                    let better = match leaving {
                        None => true,
                        Some((lr, best)) => {
                            ratio < best - PIVOT_TOL
                                || (ratio <= best + PIVOT_TOL && self.basis[r] < self.basis[lr])
                        }
                    };
                    if better {
                        leaving = Some((r, ratio));
                    }
                }
            }
            let Some((row, _)) = leaving else {
                return Err(Error::Numerical("transport LP is unbounded".into()));
            };
            self.pivot(row, col);
        }
        Err(Error::Numerical("simplex iteration limit reached".into()))
    }

    fn solve(mut self) -> Result<Vec<f64>> {
        let rows = self.tableau.len();
        let total = self.vars + rows;
        let mut phase_one = vec![0.0; total];
        phase_one[self.vars..].iter_mut().for_each(|c| *c = 1.0);
        self.optimize(&phase_one, total)?;

        let rhs = self.rhs();
        let infeasibility: f64 = self
            .basis
            .iter()
            .zip(&self.tableau)
            .filter(|(&bv, _)| bv >= self.vars)
            .map(|(_, row)| row[rhs])
            .sum();
        if infeasibility > 1e-9 {
            return Err(Error::Numerical(format!(
                "transport LP infeasible (residual {infeasibility})"
            )));
        }
        // Drive zero-level artificials out of the basis where possible.
        for r in 0..rows {
            if self.basis[r] >= self.vars {
                if let Some(col) = (0..self.vars).find(|&j| self.tableau[r][j].abs() > 1e-9) {
                    self.pivot(r, col);
                }
            }
        }

        let mut phase_two = self.cost.clone();
        phase_two.resize(total, 0.0);
        self.optimize(&phase_two, self.vars)?;

        let mut x = vec![0.0; self.vars];
        for (r, &bv) in self.basis.iter().enumerate() {
            if bv < self.vars {
                x[bv] = self.tableau[r][rhs];
            }
        }
        Ok(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Hungarian algorithm (shortest augmenting path with potentials).
    fn hungarian(cost: &[Vec<f64>]) -> f64 {
        let n = cost.len();
        let inf = f64::INFINITY;
        let mut u = vec![0.0; n + 1];
        let mut v = vec![0.0; n + 1];
        let mut p = vec![0usize; n + 1];
        let mut way = vec![0usize; n + 1];
        for i in 1..=n {
            p[0] = i;
            let mut j0 = 0;
            let mut minv = vec![inf; n + 1];
            let mut used = vec![false; n + 1];
            loop {
                used[j0] = true;
                let i0 = p[j0];
                let mut delta = inf;
                let mut j1 = 0;
                for j in 1..=n {
                    if !used[j] {
                        let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                        if cur < minv[j] {
                            minv[j] = cur;
                            way[j] = j0;
                        }
                        if minv[j] < delta {
                            delta = minv[j];
                            j1 = j;
                        }
                    }
                }
                for j in 0..=n {
                    if used[j] {
                        u[p[j]] += delta;
                        v[j] -= delta;
                    } else {
                        minv[j] -= delta;
                    }
                }
                j0 = j1;
                if p[j0] == 0 {
                    break;
                }
            }
            loop {
                let j1 = way[j0];
                p[j0] = p[j1];
                j0 = j1;
                if j0 == 0 {
                    break;
                }
            }
        }
        (1..=n).map(|j| cost[p[j] - 1][j - 1]).sum()
    }

    fn random_rows(rng: &mut ChaCha8Rng, n: usize, m: usize) -> Vec<Vec<f64>> {
        (0..n).map(|_| (0..m).map(|_| rng.random_range(0.0..1.0)).collect()).collect()
    }

    #[test]
    fn single_cell_is_forced() {
        let cost = CostMatrix::from_rows(&[vec![7.5]]).unwrap();
        let c = exact_ot(&cost, &MarginalWeights::uniform(1, 1)).unwrap();
        assert_eq!(c.plan(), &[1.0]);
        assert_eq!(c.transport_cost, 7.5);
    }

    #[test]
    fn anti_diagonal_cost_is_zero() {
        let cost = CostMatrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        assert_eq!(exact_ot(&cost, &MarginalWeights::uniform(2, 2)).unwrap().transport_cost, 0.0);
    }

    #[test]
    fn uniform_square_matches_hungarian() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..20 {
            let rows = random_rows(&mut rng, 4, 4);
            let cost = CostMatrix::from_rows(&rows).unwrap();
            let c = exact_ot(&cost, &MarginalWeights::uniform(4, 4)).unwrap();
            assert!((c.transport_cost - hungarian(&rows) / 4.0).abs() < 1e-12);
        }
    }

    #[test]
    fn lp_agrees_with_assignment_path() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for n in 1..=6 {
            let rows = random_rows(&mut rng, n, n);
            let cost = CostMatrix::from_rows(&rows).unwrap();
            let marg = MarginalWeights::uniform(n, n);
            let lp = transportation_lp(&cost, &marg).unwrap();
            let lp_cost: f64 = lp.iter().zip(cost.values()).map(|(p, c)| p * c).sum();
            let assign = exact_ot(&cost, &marg).unwrap().transport_cost;
            assert!((lp_cost - assign).abs() < 1e-12, "n={n}: {lp_cost} vs {assign}");
        }
    }

    #[test]
    fn rectangular_plan_is_feasible_and_dominates_sinkhorn() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for (n, m) in [(3, 5), (8, 2), (1, 7), (6, 6)] {
            let rows = random_rows(&mut rng, n, m);
            let cost = CostMatrix::from_rows(&rows).unwrap();
            let mut a: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..1.0)).collect();
            let total: f64 = a.iter().sum();
            a.iter_mut().for_each(|x| *x /= total);
            let sum_but_last: f64 = a[..n - 1].iter().sum();
            a[n - 1] = 1.0 - sum_but_last;
            let marg = MarginalWeights::new(a, vec![1.0 / m as f64; m]).unwrap();
            let exact = exact_ot(&cost, &marg).unwrap();
            assert!(exact.marginal_residual <= 1e-10, "({n},{m})");
            let approx = crate::ot::sinkhorn(&cost, &marg, 0.05, 10_000, 1e-9).unwrap();
            assert!(exact.transport_cost <= approx.transport_cost + 1e-9);
        }
    }

    #[test]
    fn too_large_is_rejected() {
        let cost = CostMatrix::new(9, 8, vec![0.0; 72]).unwrap();
        assert!(matches!(
            exact_ot(&cost, &MarginalWeights::uniform(9, 8)),
            Err(Error::TooLarge { .. })
        ));
    }

    #[test]
    fn scaling_cost_scales_value_and_keeps_plan() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for (n, m) in [(4, 4), (3, 5)] {
            let cost = CostMatrix::from_rows(&random_rows(&mut rng, n, m)).unwrap();
            let marg = MarginalWeights::uniform(n, m);
            let base = exact_ot(&cost, &marg).unwrap();
            for s in [0.5, 2.0, 8.0] {
                let scaled = exact_ot(&cost.scaled(s), &marg).unwrap();
                assert_eq!(scaled.plan(), base.plan());
                assert!((scaled.transport_cost - s * base.transport_cost).abs() < 1e-12);
            }
            let odd = exact_ot(&cost.scaled(3.7), &marg).unwrap();
            assert!((odd.transport_cost - 3.7 * base.transport_cost).abs() < 1e-12);
        }
    }
}
