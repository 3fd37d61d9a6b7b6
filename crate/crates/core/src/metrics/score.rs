use std::collections::HashSet;

use crate::error::{Error, Result};
use crate::io::{TEConfig, Weights};

use super::cache::PairwiseCache;

/// A cached term in both raw and standardized form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TermValue {
    pub raw: f64,
    pub standardized: f64,
}

/// `H(member | given)` for one ordered pair of ensemble members.
#[derive(Debug, Clone, PartialEq)]
pub struct PairTerm {
    pub member: String,
    pub given: String,
    pub raw: f64,
    pub standardized: f64,
}

/// Every ingredient of an ensemble's score.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreBreakdown {
    pub members: Vec<String>,
    pub domain: Vec<TermValue>,
    pub task: Vec<TermValue>,
    pub cohesion: Vec<PairTerm>,
    pub weights: Weights,
    /// Whether `osborn_value` was built from the standardized terms.
    pub standardized: bool,
    /// False if any member's transport solve hit the iteration cap.
    pub all_converged: bool,
    /// Lower is better.
    pub osborn_value: f64,
    /// `−osborn_value`; higher is better.
    pub f_value: f64,
}

/// Scores ensembles against a raw cache, reusing one standardization.
///
/// Members are addressed by their index in the cache.
#[derive(Debug, Clone)]
pub struct Scorer<'a> {
    raw: &'a PairwiseCache,
    standardized: PairwiseCache,
    weights: Weights,
    use_standardized: bool,
}

impl<'a> Scorer<'a> {
    pub fn new(cache: &'a PairwiseCache, config: &TEConfig) -> Result<Self> {
        if cache.is_standardized() {
            return Err(Error::Invalid("scoring expects a raw (unstandardized) cache".into()));
        }
        config.validate()?;
        Ok(Self {
            raw: cache,
            standardized: cache.standardized(),
            weights: config.weights,
            use_standardized: config.standardize,
        })
    }

    pub fn cache(&self) -> &PairwiseCache {
        self.raw
    }

    pub fn len(&self) -> usize {
        self.raw.len()
    }

    pub fn is_empty(&self) -> bool {
        self.raw.is_empty()
    }

    /// The terms actually combined into the score.
    fn terms(&self) -> &PairwiseCache {
        if self.use_standardized {
            &self.standardized
        } else {
            self.raw
        }
    }

    /// Resolves ids to indices, rejecting unknown ids and duplicates.
    pub fn indices(&self, ids: &[impl AsRef<str>]) -> Result<Vec<usize>> {
        let mut seen = HashSet::new();
        ids.iter()
            .map(|id| {
                let i = self.raw.index_of(id.as_ref())?;
                if !seen.insert(i) {
                    return Err(Error::Invalid(format!("model `{}` listed twice", id.as_ref())));
                }
                Ok(i)
            })
            .collect()
    }

    /// `λ_D·ΣW_D + λ_T·ΣW_T + λ_C·W_C` for the members at `members`.
    pub fn osborn(&self, members: &[usize]) -> f64 {
        let t = self.terms();
        let domain: f64 = members.iter().map(|&i| t.domain(i)).sum();
        let task: f64 = members.iter().map(|&i| t.task(i)).sum();
        let mut cohesion = 0.0;
        for &i in members {
            for &j in members {
                if i != j {
                    cohesion += t.cohesion(i, j);
                }
            }
        }
        self.weights.domain * domain + self.weights.task * task + self.weights.cohesion * cohesion
    }

    /// The maximized set function, `−osborn`.
    pub fn f(&self, members: &[usize]) -> f64 {
        -self.osborn(members)
    }

    /// `f(S ∪ {v}) − f(S)` in closed form:
    /// `−(λ_D·W_D(v) + λ_T·W_T(v)) − λ_C·Σ_{m∈S} [H(m|v) + H(v|m)]`.
    pub fn gain(&self, members: &[usize], candidate: usize) -> f64 {
        let t = self.terms();
        let pairwise: f64 = members
            .iter()
            .map(|&m| t.cohesion(m, candidate) + t.cohesion(candidate, m))
            .sum();
        -(self.weights.domain * t.domain(candidate) + self.weights.task * t.task(candidate))
            - self.weights.cohesion * pairwise
    }

    pub fn breakdown(&self, members: &[usize]) -> ScoreBreakdown {
        let ids = self.raw.ids();
        let term = |raw: f64, standardized: f64| TermValue { raw, standardized };
        let mut cohesion = Vec::new();
        for &i in members {
            for &j in members {
                if i != j {
                    cohesion.push(PairTerm {
                        member: ids[i].clone(),
                        given: ids[j].clone(),
                        raw: self.raw.cohesion(i, j),
                        standardized: self.standardized.cohesion(i, j),
                    });
                }
            }
        }
        let osborn_value = self.osborn(members);
        ScoreBreakdown {
            members: members.iter().map(|&i| ids[i].clone()).collect(),
            domain: members
                .iter()
                .map(|&i| term(self.raw.domain(i), self.standardized.domain(i)))
                .collect(),
            task: members
                .iter()
                .map(|&i| term(self.raw.task(i), self.standardized.task(i)))
                .collect(),
            cohesion,
            weights: self.weights,
            standardized: self.use_standardized,
            all_converged: members.iter().all(|&i| self.raw.converged(i)),
            osborn_value,
            f_value: -osborn_value,
        }
    }
}

/// Scores one ensemble given by model ids.
pub fn osborn_score(ids: &[impl AsRef<str>], cache: &PairwiseCache, config: &TEConfig) -> Result<ScoreBreakdown> {
    if ids.is_empty() {
        return Err(Error::Invalid("ensemble must have at least one member".into()));
    }
    let scorer = Scorer::new(cache, config)?;
    let members = scorer.indices(ids)?;
    Ok(scorer.breakdown(&members))
}

/// Raw cohesion `Σ_{i≠j} H(m_i | m_j)` over ordered member pairs.
pub fn w_cohesion(ids: &[impl AsRef<str>], cache: &PairwiseCache) -> Result<f64> {
    let members = ids
        .iter()
        .map(|id| cache.index_of(id.as_ref()))
        .collect::<Result<Vec<_>>>()?;
    let mut total = 0.0;
    for &i in &members {
        for &j in &members {
            if i != j {
                total += cache.cohesion(i, j);
            }
        }
    }
    Ok(total)
}
