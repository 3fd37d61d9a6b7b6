//! Cardinality-constrained maximization of the ensemble score.

use std::collections::HashSet;
use std::path::Path;
use std::time::{Duration, Instant};

use itertools::Itertools;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::io::{format_real, write_text, TEConfig};
use crate::metrics::{PairwiseCache, Scorer};

/// Largest number of candidate subsets enumerated by exhaustive paths.
pub const SUBSET_BUDGET: u128 = 1_000_000;

/// An ensemble: distinct model ids in selection order.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct EnsembleCandidate {
    members: Vec<String>,
}

impl EnsembleCandidate {
    pub fn new(members: Vec<String>) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::Invalid("ensemble must have at least one member".into()));
        }
        let mut seen = HashSet::new();
        for id in &members {
            if !crate::io::valid_id(id) {
                return Err(Error::Invalid(format!("invalid model id `{id}`")));
            }
            if !seen.insert(id.as_str()) {
                return Err(Error::Invalid(format!("model `{id}` listed twice")));
            }
        }
        Ok(Self { members })
    }

    pub fn members(&self) -> &[String] {
        &self.members
    }

    pub fn k(&self) -> usize {
        self.members.len()
    }

    pub fn contains(&self, id: &str) -> bool {
        self.members.iter().any(|m| m == id)
    }

    /// Copy with the members sorted lexicographically.
    pub fn sorted(&self) -> Self {
        let mut members = self.members.clone();
        members.sort();
        Self { members }
    }

    /// Semicolon-joined sorted ids.
    pub fn sorted_key(&self) -> String {
        self.sorted().members.join(";")
    }
}

/// One greedy step.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionStep {
    pub chosen: String,
    pub gain: f64,
    pub f_cumulative: f64,
    pub elapsed: Duration,
}

/// Full greedy trace.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionTrace {
    pub steps: Vec<SelectionStep>,
    pub ensemble: EnsembleCandidate,
}

impl SelectionTrace {
    pub fn f_value(&self) -> f64 {
        self.steps.last().map_or(0.0, |s| s.f_cumulative)
    }

    /// `selection.csv`: step rows, then the final `ensemble` row.
    /// Timings are omitted so the file is reproducible.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,chosen_id,gain,f_cumulative\n");
        for (t, step) in self.steps.iter().enumerate() {
            out.push_str(&format!(
                "{},{},{},{}\n",
                t + 1,
                step.chosen,
                format_real(step.gain),
                format_real(step.f_cumulative)
            ));
        }
        out.push_str(&format!("ensemble,{}\n", self.ensemble.members().join(";")));
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_text(path, &self.to_csv())
    }
}

fn check_k(k: usize, pool: usize) -> Result<()> {
    if k == 0 || k > pool {
        return Err(Error::Invalid(format!("k = {k} must lie in [1, {pool}]")));
    }
    Ok(())
}

fn binomial(n: usize, k: usize) -> u128 {
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i as u128 + 1))
}

fn check_budget(pool: usize, k: usize) -> Result<()> {
    let count = binomial(pool, k);
    if count > SUBSET_BUDGET {
        return Err(Error::Budget {
            pool,
            k,
            count,
            budget: SUBSET_BUDGET,
        });
    }
    Ok(())
}

/// `f(current ∪ {v}) − f(current)`, from cached terms in `O(|current|)`.
pub fn marginal_gain(
    current: &[impl AsRef<str>],
    candidate: &str,
    cache: &PairwiseCache,
    config: &TEConfig,
) -> Result<f64> {
    let scorer = Scorer::new(cache, config)?;
    let members = scorer.indices(current)?;
    let v = cache.index_of(candidate)?;
    if members.contains(&v) {
        return Err(Error::Invalid(format!("model `{candidate}` is already in the ensemble")));
    }
    Ok(scorer.gain(&members, v))
}

/// Greedy maximization: `k` times, add the model with the largest gain.
///
/// Ties go to the lexicographically smallest model id. Gains within a step
/// are evaluated in parallel.
pub fn greedy_select(cache: &PairwiseCache, k: usize, config: &TEConfig) -> Result<SelectionTrace> {
    check_k(k, cache.len())?;
    let scorer = Scorer::new(cache, config)?;
    greedy_with(&scorer, k)
}

pub(crate) fn greedy_with(scorer: &Scorer<'_>, k: usize) -> Result<SelectionTrace> {
    let ids = scorer.cache().ids();
    check_k(k, ids.len())?;
    let mut chosen: Vec<usize> = Vec::with_capacity(k);
    let mut steps = Vec::with_capacity(k);
    let mut f_cumulative = 0.0;
    for _ in 0..k {
        let started = Instant::now();
        let best = (0..ids.len())
            .into_par_iter()
            .filter(|v| !chosen.contains(v))
            .map(|v| (v, scorer.gain(&chosen, v)))
            .reduce_with(|a, b| {
                let (ga, gb) = (a.1, b.1);
                if gb > ga || (gb == ga && ids[b.0] < ids[a.0]) {
                    b
                } else {
                    a
                }
            })
            .ok_or_else(|| Error::Invalid("no candidates left".into()))?;
        chosen.push(best.0);
        f_cumulative += best.1;
        steps.push(SelectionStep {
            chosen: ids[best.0].clone(),
            gain: best.1,
            f_cumulative,
            elapsed: started.elapsed(),
        });
    }
    let ensemble = EnsembleCandidate::new(chosen.iter().map(|&i| ids[i].clone()).collect())?;
    Ok(SelectionTrace { steps, ensemble })
}

/// All `k`-subsets as index lists, in lexicographic order of sorted ids.
fn subsets(cache: &PairwiseCache, k: usize) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..cache.len()).collect();
    order.sort_by(|&a, &b| cache.ids()[a].cmp(&cache.ids()[b]));
    order.into_iter().combinations(k).collect()
}

fn candidate_of(cache: &PairwiseCache, members: &[usize]) -> EnsembleCandidate {
    EnsembleCandidate {
        members: members.iter().map(|&i| cache.ids()[i].clone()).collect(),
    }
}

/// Exact maximizer of `f` over all `k`-subsets.
///
/// Ties go to the lexicographically first sorted member list.
pub fn exhaustive_select(cache: &PairwiseCache, k: usize, config: &TEConfig) -> Result<(EnsembleCandidate, f64)> {
    check_k(k, cache.len())?;
    check_budget(cache.len(), k)?;
    let scorer = Scorer::new(cache, config)?;
    Ok(exhaustive_with(&scorer, k))
}

pub(crate) fn exhaustive_with(scorer: &Scorer<'_>, k: usize) -> (EnsembleCandidate, f64) {
    let all = subsets(scorer.cache(), k);
    let values: Vec<f64> = all.par_iter().map(|s| scorer.f(s)).collect();
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    (candidate_of(scorer.cache(), &all[best]), values[best])
}

/// Score of every `k`-subset, lexicographic on sorted ids.
///
/// Each row carries the osborn value (lower is better).
pub fn score_all(cache: &PairwiseCache, k: usize, config: &TEConfig) -> Result<Vec<(EnsembleCandidate, f64)>> {
    check_k(k, cache.len())?;
    check_budget(cache.len(), k)?;
    let scorer = Scorer::new(cache, config)?;
    let all = subsets(cache, k);
    let values: Vec<f64> = all.par_iter().map(|s| scorer.osborn(s)).collect();
    Ok(all
        .iter()
        .zip(values)
        .map(|(s, v)| (candidate_of(cache, s), v))
        .collect())
}
