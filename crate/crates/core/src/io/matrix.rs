use crate::error::{Error, Result};

/// Row-major matrix of latent features, one row per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl FeatureMatrix {
    pub fn new(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Invalid(format!(
                "feature matrix must be non-empty, got {rows}x{cols}"
            )));
        }
        if values.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "{} values for a {rows}x{cols} matrix",
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Invalid(format!(
                "non-finite feature at row {}, column {}",
                pos / cols,
                pos % cols
            )));
        }
        Ok(Self { rows, cols, values })
    }

    /// Builds a matrix from equally sized rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().position(|r| r.len() != cols) {
            return Err(Error::Dimension(format!(
                "row {bad} has {} columns, expected {cols}",
                rows[bad].len()
            )));
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.cols..(i + 1) * self.cols]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.cols)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Copies the listed rows, in the given order.
    pub fn select_rows(&self, indices: &[usize]) -> Self {
        let mut values = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            values.extend_from_slice(self.row(i));
        }
        Self {
            rows: indices.len(),
            cols: self.cols,
            values,
        }
    }
}

/// Class indices in `[0, num_classes)`.
///
/// Used both for ground-truth labels and for a model's hard predictions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelVector {
    num_classes: usize,
    values: Vec<usize>,
}

/// Hard (argmax) predictions of a source model on the target samples.
pub type PredictionVector = LabelVector;

impl LabelVector {
    pub fn new(num_classes: usize, values: Vec<usize>) -> Result<Self> {
        if num_classes == 0 {
            return Err(Error::Invalid("class count must be at least 1".into()));
        }
        if values.is_empty() {
            return Err(Error::Invalid("label vector must be non-empty".into()));
        }
        if let Some(pos) = values.iter().position(|&v| v >= num_classes) {
            return Err(Error::Invalid(format!(
                "label {} at position {pos} out of range [0, {num_classes})",
                values[pos]
            )));
        }
        Ok(Self {
            num_classes,
            values,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[usize] {
        &self.values
    }

    pub fn get(&self, i: usize) -> usize {
        self.values[i]
    }

    /// Per-class sample counts, indexed by class.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for &v in &self.values {
            counts[v] += 1;
        }
        counts
    }

    /// Number of classes with at least one sample.
    pub fn distinct_classes(&self) -> usize {
        self.class_counts().iter().filter(|&&c| c > 0).count()
    }

    pub fn select(&self, indices: &[usize]) -> Self {
        Self {
            num_classes: self.num_classes,
            values: indices.iter().map(|&i| self.values[i]).collect(),
        }
    }
}
