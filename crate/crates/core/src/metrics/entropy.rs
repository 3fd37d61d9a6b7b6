use crate::error::{Error, Result};
use crate::io::{LabelVector, PredictionVector};
use crate::ot::Coupling;

/// Joint distribution of source-side classes (rows) against target classes
/// (columns), accumulated from a transport plan.
#[derive(Debug, Clone, PartialEq)]
pub struct JointLabelDistribution {
    source_classes: usize,
    target_classes: usize,
    table: Vec<f64>,
}

impl JointLabelDistribution {
    pub fn new(source_classes: usize, target_classes: usize, table: Vec<f64>) -> Result<Self> {
        if source_classes == 0 || target_classes == 0 || table.len() != source_classes * target_classes {
            return Err(Error::Dimension(format!(
                "{} entries for a {source_classes}x{target_classes} joint table",
                table.len()
            )));
        }
        if table.iter().any(|&p| !p.is_finite() || p < 0.0) {
            return Err(Error::Invalid("joint probabilities must be finite and nonnegative".into()));
        }
        let total: f64 = table.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Invalid(format!("joint table sums to {total}, not 1")));
        }
        Ok(Self {
            source_classes,
            target_classes,
            table,
        })
    }

    pub fn source_classes(&self) -> usize {
        self.source_classes
    }

    pub fn target_classes(&self) -> usize {
        self.target_classes
    }

    pub fn get(&self, source_class: usize, target_class: usize) -> f64 {
        self.table[source_class * self.target_classes + target_class]
    }

    pub fn table(&self) -> &[f64] {
        &self.table
    }

    /// Marginal over target classes (column sums).
    pub fn target_marginal(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.target_classes];
        for row in self.table.chunks_exact(self.target_classes) {
            for (o, p) in out.iter_mut().zip(row) {
                *o += p;
            }
        }
        out
    }
}

/// `P̂(ŷ, y) = Σ π_ij` over source samples `i` with class `ŷ` and target
/// samples `j` with class `y`.
pub fn joint_from_coupling(
    coupling: &Coupling,
    source_labels: &LabelVector,
    target_labels: &LabelVector,
) -> Result<JointLabelDistribution> {
    if source_labels.len() != coupling.rows() || target_labels.len() != coupling.cols() {
        return Err(Error::Dimension(format!(
            "{} source / {} target labels for a {}x{} coupling",
            source_labels.len(),
            target_labels.len(),
            coupling.rows(),
            coupling.cols()
        )));
    }
    let cs = source_labels.num_classes();
    let ct = target_labels.num_classes();
    let mut table = vec![0.0; cs * ct];
    for (i, row) in coupling.plan().chunks_exact(coupling.cols()).enumerate() {
        let base = source_labels.get(i) * ct;
        for (j, &mass) in row.iter().enumerate() {
            table[base + target_labels.get(j)] += mass;
        }
    }
    // Absorb the solver's residual so the table is an exact distribution.
    let total: f64 = table.iter().sum();
    if total > 0.0 {
        table.iter_mut().for_each(|p| *p /= total);
    }
    JointLabelDistribution::new(cs, ct, table)
}

/// Conditional entropy `H(row | column)` in nats of a nonnegative table
/// normalized by `total`, with `0·log 0 = 0`.
fn conditional_entropy(table: &[f64], cols: usize, total: f64) -> f64 {
    let mut column_mass = vec![0.0; cols];
    for row in table.chunks_exact(cols) {
        for (c, v) in column_mass.iter_mut().zip(row) {
            *c += v;
        }
    }
    let mut h = 0.0;
    for row in table.chunks_exact(cols) {
        for (&v, &c) in row.iter().zip(&column_mass) {
            if v > 0.0 {
                h -= (v / total) * (v / c).ln();
            }
        }
    }
    h.max(0.0)
}

/// Task difference: `H(Ŷ | Y)` of the joint label distribution, in nats.
pub fn w_task(joint: &JointLabelDistribution) -> f64 {
    conditional_entropy(&joint.table, joint.target_classes, 1.0)
}

/// `H(pred_i | pred_j)` of the empirical joint of two prediction vectors.
pub fn cohesion_pair(pred_i: &PredictionVector, pred_j: &PredictionVector) -> Result<f64> {
    if pred_i.len() != pred_j.len() {
        return Err(Error::Dimension(format!(
            "prediction vectors of length {} and {}",
            pred_i.len(),
            pred_j.len()
        )));
    }
    let (ci, cj) = (pred_i.num_classes(), pred_j.num_classes());
    let mut counts = vec![0.0; ci * cj];
    for (&a, &b) in pred_i.values().iter().zip(pred_j.values()) {
        counts[a * cj + b] += 1.0;
    }
    Ok(conditional_entropy(&counts, cj, pred_i.len() as f64))
}
