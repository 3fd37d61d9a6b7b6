//! Correlation statistics between transferability scores and accuracies.

use std::path::Path;

use crate::error::{Error, Result};
use crate::io::{format_real, write_text, FeatureMatrix, LabelVector, PredictionVector};
use crate::selection::EnsembleCandidate;

/// One ensemble's estimate (`alpha`, higher is better) and, when known,
/// its realized accuracy.
#[derive(Debug, Clone, PartialEq)]
pub struct RankingRecord {
    pub candidate: EnsembleCandidate,
    pub alpha: f64,
    pub accuracy: Option<f64>,
}

impl RankingRecord {
    pub fn validate(&self) -> Result<()> {
        if !self.alpha.is_finite() {
            return Err(Error::Invalid(format!("non-finite alpha {}", self.alpha)));
        }
        if let Some(acc) = self.accuracy {
            if !(0.0..=1.0).contains(&acc) {
                return Err(Error::Invalid(format!("accuracy {acc} outside [0, 1]")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrelationReport {
    pub pcc: f64,
    pub kendall_tau: f64,
    pub weighted_kendall_tau: f64,
    pub n_pairs: usize,
}

impl CorrelationReport {
    pub fn to_csv(&self) -> String {
        format!(
            "metric,value\npcc,{}\nkendall_tau,{}\nweighted_kendall_tau,{}\nn_pairs,{}\n",
            format_real(self.pcc),
            format_real(self.kendall_tau),
            format_real(self.weighted_kendall_tau),
            self.n_pairs
        )
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_text(path, &self.to_csv())
    }
}

fn check_pair(xs: &[f64], ys: &[f64]) -> Result<()> {
    if xs.len() != ys.len() {
        return Err(Error::Dimension(format!("{} scores against {} accuracies", xs.len(), ys.len())));
    }
    if xs.len() < 2 {
        return Err(Error::Invalid(format!("need at least 2 points, got {}", xs.len())));
    }
    if xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(Error::Invalid("non-finite value in correlation input".into()));
    }
    Ok(())
}

fn clamp_unit(x: f64) -> f64 {
    x.clamp(-1.0, 1.0)
}

/// Pearson product-moment correlation.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64> {
    check_pair(xs, ys)?;
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Invalid("zero variance: correlation undefined".into()));
    }
    Ok(clamp_unit(sxy / (sxx * syy).sqrt()))
}

/// Per-item pair statistics: `s_i = Σ_j sgn(x_i−x_j)·sgn(y_i−y_j)`, and the
/// number of items untied with `i` in `x` and in `y`.
struct PairCounts {
    score: Vec<i64>,
    untied_x: Vec<i64>,
    untied_y: Vec<i64>,
}

/// Dense ranks `0..` of `values` (ties share a rank).
fn dense_ranks(values: &[f64]) -> (Vec<usize>, usize) {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0; values.len()];
    let mut rank = 0;
    for (pos, &i) in order.iter().enumerate() {
        if pos > 0 && values[i] != values[order[pos - 1]] {
            rank += 1;
        }
        ranks[i] = rank;
    }
    (ranks, rank + 1)
}

struct Fenwick(Vec<i64>);

impl Fenwick {
    fn new(n: usize) -> Self {
        Self(vec![0; n + 1])
    }

    fn add(&mut self, i: usize) {
        let mut i = i + 1;
        while i < self.0.len() {
            self.0[i] += 1;
            i += i & i.wrapping_neg();
        }
    }

    /// Count of inserted ranks `< i`.
    fn below(&self, i: usize) -> i64 {
        let mut i = i;
        let mut total = 0;
        while i > 0 {
            total += self.0[i];
            i &= i - 1;
        }
        total
    }
}

/// `O(n log n)` sweep over `x` with a Fenwick tree on `y` ranks.
fn pair_counts(xs: &[f64], ys: &[f64]) -> PairCounts {
    let n = xs.len();
    let (xr, nx) = dense_ranks(xs);
    let (yr, ny) = dense_ranks(ys);
    let mut tied_x = vec![0i64; nx];
    let mut tied_y = vec![0i64; ny];
    for i in 0..n {
        tied_x[xr[i]] += 1;
        tied_y[yr[i]] += 1;
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&i| xr[i]);

    let mut score = vec![0i64; n];
    // Forward pass sees items with smaller x, backward pass larger x.
    for forward in [true, false] {
        let mut tree = Fenwick::new(ny);
        let mut inserted = 0i64;
        let groups: Vec<&[usize]> = order.chunk_by(|&a, &b| xr[a] == xr[b]).collect();
        let iter: Box<dyn Iterator<Item = &&[usize]>> =
            if forward { Box::new(groups.iter()) } else { Box::new(groups.iter().rev()) };
        for group in iter {
            for &i in group.iter() {
                let lower = tree.below(yr[i]);
                let higher = inserted - tree.below(yr[i] + 1);
                // Forward: x_j < x_i, so y_j < y_i is concordant.
                score[i] += if forward { lower - higher } else { higher - lower };
            }
            for &i in group.iter() {
                tree.add(yr[i]);
                inserted += 1;
            }
        }
    }
    let n = n as i64;
    PairCounts {
        score,
        untied_x: xr.iter().map(|&r| n - tied_x[r]).collect(),
        untied_y: yr.iter().map(|&r| n - tied_y[r]).collect(),
    }
}

fn weighted_tau(counts: &PairCounts, weights: &[f64]) -> Result<f64> {
    let mut num = 0.0;
    let mut dx = 0.0;
    let mut dy = 0.0;
    for (i, w) in weights.iter().enumerate() {
        num += w * counts.score[i] as f64;
        dx += w * counts.untied_x[i] as f64;
        dy += w * counts.untied_y[i] as f64;
    }
    if dx == 0.0 || dy == 0.0 {
        return Err(Error::Invalid("all values tied: rank correlation undefined".into()));
    }
    Ok(clamp_unit(num / (dx * dy).sqrt()))
}

/// Kendall τ-b.
pub fn kendall_tau(xs: &[f64], ys: &[f64]) -> Result<f64> {
    check_pair(xs, ys)?;
    weighted_tau(&pair_counts(xs, ys), &vec![1.0; xs.len()])
}

/// Hyperbolic weight `1/(r+1)` of each item, `r` being the number of
/// items with strictly larger `y` (so the best item has rank 0).
pub fn hyperbolic_weights(ys: &[f64]) -> Vec<f64> {
    let (ranks, levels) = dense_ranks(ys);
    let mut count = vec![0usize; levels];
    for &r in &ranks {
        count[r] += 1;
    }
    // above[r] = items in levels strictly higher than r
    let mut above = vec![0usize; levels];
    for r in (0..levels.saturating_sub(1)).rev() {
        above[r] = above[r + 1] + count[r + 1];
    }
    ranks.iter().map(|&r| 1.0 / (above[r] as f64 + 1.0)).collect()
}

/// Weighted Kendall τ: pair `(i, j)` carries weight `w_i + w_j` with the
/// hyperbolic weights of [`hyperbolic_weights`] on `ys`. Ties are
/// normalized as in τ-b.
pub fn weighted_kendall_tau(xs: &[f64], ys: &[f64]) -> Result<f64> {
    check_pair(xs, ys)?;
    weighted_tau(&pair_counts(xs, ys), &hyperbolic_weights(ys))
}

/// Correlations between `alpha` and accuracy over records that have one.
pub fn evaluate(records: &[RankingRecord]) -> Result<CorrelationReport> {
    for r in records {
        r.validate()?;
    }
    let (alpha, accuracy): (Vec<f64>, Vec<f64>) = records
        .iter()
        .filter_map(|r| r.accuracy.map(|a| (r.alpha, a)))
        .unzip();
    if alpha.len() < 2 {
        return Err(Error::Invalid(format!(
            "need at least 2 records with accuracy, got {}",
            alpha.len()
        )));
    }
    Ok(CorrelationReport {
        pcc: pearson(&alpha, &accuracy)?,
        kendall_tau: kendall_tau(&alpha, &accuracy)?,
        weighted_kendall_tau: weighted_kendall_tau(&alpha, &accuracy)?,
        n_pairs: alpha.len(),
    })
}

fn check_members(lengths: impl Iterator<Item = usize>, truth: &LabelVector) -> Result<()> {
    let mut any = false;
    for len in lengths {
        any = true;
        if len != truth.len() {
            return Err(Error::Dimension(format!("{len} predictions for {} labels", truth.len())));
        }
    }
    if !any {
        return Err(Error::Invalid("empty ensemble".into()));
    }
    Ok(())
}

fn accuracy_of(predicted: impl Iterator<Item = usize>, truth: &LabelVector) -> f64 {
    let hits = predicted.zip(truth.values()).filter(|(p, t)| p == *t).count();
    hits as f64 / truth.len() as f64
}

/// Majority-vote accuracy of hard predictions; ties go to the smallest class.
pub fn ensemble_accuracy_votes(members: &[&PredictionVector], truth: &LabelVector) -> Result<f64> {
    check_members(members.iter().map(|m| m.len()), truth)?;
    let classes = members.iter().map(|m| m.num_classes()).max().unwrap_or(0);
    let mut votes = vec![0usize; classes];
    let predicted = (0..truth.len()).map(|i| {
        votes.iter_mut().for_each(|v| *v = 0);
        for m in members {
            votes[m.get(i)] += 1;
        }
        argmax(votes.iter().map(|&v| v as f64))
    });
    Ok(accuracy_of(predicted.collect::<Vec<_>>().into_iter(), truth))
}

/// Accuracy of the argmax of averaged per-class scores (one row per sample,
/// one column per class); ties go to the smallest class.
pub fn ensemble_accuracy_scores(members: &[&FeatureMatrix], truth: &LabelVector) -> Result<f64> {
    check_members(members.iter().map(|m| m.rows()), truth)?;
    let classes = members[0].cols();
    if let Some(bad) = members.iter().find(|m| m.cols() != classes) {
        return Err(Error::Dimension(format!("{} score columns, expected {classes}", bad.cols())));
    }
    let mut sum = vec![0.0; classes];
    let predicted: Vec<usize> = (0..truth.len())
        .map(|i| {
            sum.iter_mut().for_each(|s| *s = 0.0);
            for m in members {
                for (s, v) in sum.iter_mut().zip(m.row(i)) {
                    *s += v;
                }
            }
            argmax(sum.iter().copied())
        })
        .collect();
    Ok(accuracy_of(predicted.into_iter(), truth))
}

fn argmax(values: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in values.enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best.0
}
