use std::collections::HashMap;
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::io::{
    format_real, parse_real, read_text, stratified_indices, stratified_subsample, write_text, FeatureMatrix,
    LabelVector, ModelRecord, Pool, Regularizer, TEConfig,
};
use crate::ot::{cost_matrix, sinkhorn, sinkhorn_frobenius, Coupling, MarginalWeights};
use crate::seed::substream;

use super::entropy::{cohesion_pair, joint_from_coupling, w_task};

/// Domain difference: transport cost between source and target latents.
///
/// The solver's regularization strength is `config.epsilon` times the
/// median cost; for the quadratic regularizer it is further multiplied by
/// `n·m` so that `eps·‖π‖²` is on the scale of the cost term for a spread-out
/// plan.
pub fn w_domain(source: &FeatureMatrix, target: &FeatureMatrix, config: &TEConfig) -> Result<(f64, Coupling)> {
    let cost = cost_matrix(source, target)?;
    let marginals = MarginalWeights::uniform(cost.rows(), cost.cols());
    let scale = config.epsilon * cost.reference_scale();
    let coupling = match config.regularizer {
        Regularizer::Entropic => sinkhorn(&cost, &marginals, scale, config.max_iters, config.convergence_tol)?,
        Regularizer::Frobenius => {
            let eps = scale * (cost.rows() * cost.cols()) as f64;
            sinkhorn_frobenius(&cost, &marginals, eps, config.max_iters, config.convergence_tol)?
        }
    };
    Ok((coupling.transport_cost.max(0.0), coupling))
}

/// Per-model scalar summary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelTerms {
    pub domain: f64,
    pub task: f64,
    pub converged: bool,
}

/// Computes `W_D` and `W_T` for one model.
///
/// `target_rows` selects the (shared) target subsample; the source side is
/// subsampled per model from its own seed substream.
pub fn model_terms(
    record: &ModelRecord,
    target_labels: &LabelVector,
    target_rows: &[usize],
    config: &TEConfig,
) -> Result<ModelTerms> {
    let (source, source_labels) = stratified_subsample(
        &record.source_features,
        &record.source_labels,
        config.subsample_cap,
        substream(config.seed, &["source", &record.model_id]),
    )?;
    let target = record.target_features.select_rows(target_rows);
    let target_labels = target_labels.select(target_rows);
    let (domain, coupling) = w_domain(&source, &target, config)?;
    let joint = joint_from_coupling(&coupling, &source_labels, &target_labels)?;
    Ok(ModelTerms {
        domain,
        task: w_task(&joint),
        converged: coupling.converged,
    })
}

/// Precomputed per-model `(W_D, W_T)` and per-ordered-pair cohesion entropies.
#[derive(Debug, Clone, PartialEq)]
pub struct PairwiseCache {
    ids: Vec<String>,
    index: HashMap<String, usize>,
    domain: Vec<f64>,
    task: Vec<f64>,
    converged: Vec<bool>,
    /// Row-major `M × M`; entry `(i, j)` is `H(m_i | m_j)`, zero diagonal.
    cohesion: Vec<f64>,
    standardized: bool,
}

impl PairwiseCache {
    pub fn new(ids: Vec<String>, terms: Vec<ModelTerms>, cohesion: Vec<f64>) -> Result<Self> {
        let m = ids.len();
        if m == 0 || terms.len() != m || cohesion.len() != m * m {
            return Err(Error::Dimension(format!(
                "cache with {m} ids, {} model entries and {} cohesion entries",
                terms.len(),
                cohesion.len()
            )));
        }
        let mut index = HashMap::with_capacity(m);
        for (i, id) in ids.iter().enumerate() {
            if index.insert(id.clone(), i).is_some() {
                return Err(Error::Invalid(format!("duplicate model id `{id}` in cache")));
            }
        }
        if terms.iter().any(|t| !t.domain.is_finite() || !t.task.is_finite() || t.domain < 0.0 || t.task < 0.0) {
            return Err(Error::Invalid("cached W_D / W_T must be finite and nonnegative".into()));
        }
        if cohesion.iter().any(|h| !h.is_finite() || *h < 0.0) {
            return Err(Error::Invalid("cached cohesion entropies must be finite and nonnegative".into()));
        }
        Ok(Self {
            ids,
            index,
            domain: terms.iter().map(|t| t.domain).collect(),
            task: terms.iter().map(|t| t.task).collect(),
            converged: terms.iter().map(|t| t.converged).collect(),
            cohesion,
            standardized: false,
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn index_of(&self, id: &str) -> Result<usize> {
        self.index.get(id).copied().ok_or_else(|| Error::UnknownModel(id.to_string()))
    }

    pub fn domain(&self, i: usize) -> f64 {
        self.domain[i]
    }

    pub fn task(&self, i: usize) -> f64 {
        self.task[i]
    }

    pub fn converged(&self, i: usize) -> bool {
        self.converged[i]
    }

    pub fn all_converged(&self) -> bool {
        self.converged.iter().all(|&c| c)
    }

    /// `H(m_i | m_j)`.
    pub fn cohesion(&self, i: usize, j: usize) -> f64 {
        self.cohesion[i * self.ids.len() + j]
    }

    pub fn is_standardized(&self) -> bool {
        self.standardized
    }

    /// Z-scores `W_D` and `W_T` across models and the cohesion entropies
    /// across all `M(M−1)` ordered pairs (population standard deviation;
    /// a zero-variance population maps to zeros).
    pub fn standardized(&self) -> Self {
        let m = self.ids.len();
        let off_diagonal: Vec<usize> = (0..m * m).filter(|k| k / m != k % m).collect();
        let pair_values: Vec<f64> = off_diagonal.iter().map(|&k| self.cohesion[k]).collect();
        let pair_z = z_scores(&pair_values);
        let mut cohesion = vec![0.0; m * m];
        for (&k, z) in off_diagonal.iter().zip(pair_z) {
            cohesion[k] = z;
        }
        Self {
            ids: self.ids.clone(),
            index: self.index.clone(),
            domain: z_scores(&self.domain),
            task: z_scores(&self.task),
            converged: self.converged.clone(),
            cohesion,
            standardized: true,
        }
    }

    /// Checks that the cache covers exactly the pool's models.
    pub fn check_pool(&self, pool: &Pool) -> Result<()> {
        let pool_ids = pool.ids();
        if pool_ids.len() != self.ids.len() || pool_ids.iter().any(|id| !self.index.contains_key(*id)) {
            return Err(Error::Invalid(format!(
                "cache models [{}] do not match pool models [{}]",
                self.ids.join(", "),
                pool_ids.join(", ")
            )));
        }
        Ok(())
    }

    /// Serializes as `cache.csv`.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for (i, id) in self.ids.iter().enumerate() {
            out.push_str(&format!(
                "model,{id},wd,{},wt,{},converged,{}\n",
                format_real(self.domain[i]),
                format_real(self.task[i]),
                u8::from(self.converged[i])
            ));
        }
        for (i, a) in self.ids.iter().enumerate() {
            for (j, b) in self.ids.iter().enumerate() {
                if i != j {
                    out.push_str(&format!("pair,{a},{b},h,{}\n", format_real(self.cohesion(i, j))));
                }
            }
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        if self.standardized {
            return Err(Error::Invalid("only raw caches are persisted".into()));
        }
        write_text(path, &self.to_csv())
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut ids = Vec::new();
        let mut terms = Vec::new();
        let mut pairs = Vec::new();
        for (offset, line) in text.lines().enumerate() {
            let line_no = offset + 1;
            let cells: Vec<&str> = line.trim().split(',').collect();
            match cells.as_slice() {
                [""] => {}
                ["model", id, "wd", wd, "wt", wt, "converged", flag] => {
                    let converged = match *flag {
                        "1" => true,
                        "0" => false,
                        other => return Err(Error::parse(path, line_no, format!("bad converged flag `{other}`"))),
                    };
                    ids.push(id.to_string());
                    terms.push(ModelTerms {
                        domain: parse_real(wd, path, line_no)?,
                        task: parse_real(wt, path, line_no)?,
                        converged,
                    });
                }
                ["pair", a, b, "h", h] => {
                    pairs.push((a.to_string(), b.to_string(), parse_real(h, path, line_no)?, line_no));
                }
                _ => return Err(Error::parse(path, line_no, format!("unrecognized cache row `{line}`"))),
            }
        }
        let m = ids.len();
        let position: HashMap<&str, usize> = ids.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();
        let mut cohesion = vec![0.0; m * m];
        let mut seen = vec![false; m * m];
        for (a, b, h, line_no) in pairs {
            let (Some(&i), Some(&j)) = (position.get(a.as_str()), position.get(b.as_str())) else {
                return Err(Error::parse(path, line_no, format!("pair ({a}, {b}) names an unknown model")));
            };
            if i == j || seen[i * m + j] {
                return Err(Error::parse(path, line_no, format!("invalid or repeated pair ({a}, {b})")));
            }
            seen[i * m + j] = true;
            cohesion[i * m + j] = h;
        }
        let missing = (0..m * m).filter(|&k| k / m != k % m && !seen[k]).count();
        if missing > 0 {
            return Err(Error::parse(path, 0, format!("cache is missing {missing} ordered pairs")));
        }
        Self::new(ids, terms, cohesion).map_err(|e| Error::parse(path, 0, e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&read_text(path)?, path)
    }
}

fn z_scores(values: &[f64]) -> Vec<f64> {
    if values.is_empty() {
        return Vec::new();
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    if std <= 1e-12 * mean.abs().max(1.0) {
        return vec![0.0; values.len()];
    }
    values.iter().map(|v| (v - mean) / std).collect()
}

/// Standardized copy of a cache, see [`PairwiseCache::standardized`].
pub fn standardize_terms(cache: &PairwiseCache) -> PairwiseCache {
    cache.standardized()
}

/// Computes every per-model and per-pair term of a pool.
///
/// Models and pairs are evaluated in parallel on the current rayon pool;
/// each entry depends only on its own inputs, so results are independent of
/// the thread count.
pub fn build_cache(pool: &Pool, config: &TEConfig) -> Result<PairwiseCache> {
    config.validate()?;
    let target_rows = stratified_indices(
        &pool.target_labels,
        config.subsample_cap,
        substream(config.seed, &["target"]),
    )?;
    let terms = pool
        .models
        .par_iter()
        .map(|record| {
            model_terms(record, &pool.target_labels, &target_rows, config)
                .map_err(|e| Error::model(&record.model_id, e))
        })
        .collect::<Vec<_>>();
    // Collected in pool order so the reported error is deterministic.
    let terms = terms.into_iter().collect::<Result<Vec<_>>>()?;

    let m = pool.len();
    let cohesion = (0..m * m)
        .into_par_iter()
        .map(|k| {
            let (i, j) = (k / m, k % m);
            if i == j {
                Ok(0.0)
            } else {
                cohesion_pair(&pool.models[i].target_predictions, &pool.models[j].target_predictions)
            }
        })
        .collect::<Vec<_>>()
        .into_iter()
        .collect::<Result<Vec<_>>>()?;

    PairwiseCache::new(pool.ids().into_iter().map(String::from).collect(), terms, cohesion)
}
