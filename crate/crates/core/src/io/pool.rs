use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::{read_features, read_labels, read_text, write_features, write_labels, write_text};
use super::{FeatureMatrix, LabelVector, PredictionVector};

/// One model entry of `pool.json`. Paths are relative to the manifest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelEntry {
    pub id: String,
    pub source_features: PathBuf,
    pub source_labels: PathBuf,
    pub target_features: PathBuf,
    pub target_predictions: PathBuf,
    pub num_source_classes: usize,
}

/// The `pool.json` manifest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolManifest {
    pub target_labels: PathBuf,
    pub models: Vec<ModelEntry>,
}

/// A source model's artifacts for one target dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelRecord {
    pub model_id: String,
    pub source_features: FeatureMatrix,
    pub source_labels: LabelVector,
    /// Target samples embedded by this model's own feature extractor.
    pub target_features: FeatureMatrix,
    pub target_predictions: PredictionVector,
    pub num_source_classes: usize,
}

impl ModelRecord {
    pub fn validate(&self) -> Result<()> {
        let fail = |message: String| Error::Model {
            model: self.model_id.clone(),
            message,
        };
        if self.source_features.cols() != self.target_features.cols() {
            return Err(fail(format!(
                "dimension mismatch: source features have d={}, target features have d={}",
                self.source_features.cols(),
                self.target_features.cols()
            )));
        }
        if self.source_features.rows() != self.source_labels.len() {
            return Err(fail(format!(
                "{} source feature rows but {} source labels",
                self.source_features.rows(),
                self.source_labels.len()
            )));
        }
        if self.target_features.rows() != self.target_predictions.len() {
            return Err(fail(format!(
                "{} target feature rows but {} target predictions",
                self.target_features.rows(),
                self.target_predictions.len()
            )));
        }
        for (what, labels) in [("source label", &self.source_labels), ("prediction", &self.target_predictions)] {
            if let Some(&bad) = labels.values().iter().find(|&&v| v >= self.num_source_classes) {
                return Err(fail(format!(
                    "{what} {bad} out of range [0, {})",
                    self.num_source_classes
                )));
            }
        }
        Ok(())
    }

    pub fn target_len(&self) -> usize {
        self.target_features.rows()
    }
}

/// A fully loaded and validated source pool for one target dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct Pool {
    pub models: Vec<ModelRecord>,
    pub target_labels: LabelVector,
}

impl Pool {
    pub fn new(models: Vec<ModelRecord>, target_labels: LabelVector) -> Result<Self> {
        let pool = Self {
            models,
            target_labels,
        };
        pool.validate()?;
        Ok(pool)
    }

    pub fn validate(&self) -> Result<()> {
        if self.models.is_empty() {
            return Err(Error::Invalid("pool must contain at least one model".into()));
        }
        let mut seen = HashSet::new();
        for record in &self.models {
            if !valid_id(&record.model_id) {
                return Err(Error::Invalid(format!(
                    "model id `{}` must be non-empty without commas, semicolons or whitespace",
                    record.model_id
                )));
            }
            if !seen.insert(record.model_id.as_str()) {
                return Err(Error::Invalid(format!("duplicate model id `{}`", record.model_id)));
            }
            record.validate()?;
            if record.target_len() != self.target_labels.len() {
                return Err(Error::Model {
                    model: record.model_id.clone(),
                    message: format!(
                        "target sample count {} differs from the {} target labels",
                        record.target_len(),
                        self.target_labels.len()
                    ),
                });
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }

    pub fn ids(&self) -> Vec<&str> {
        self.models.iter().map(|m| m.model_id.as_str()).collect()
    }

    pub fn model(&self, id: &str) -> Result<&ModelRecord> {
        self.models
            .iter()
            .find(|m| m.model_id == id)
            .ok_or_else(|| Error::UnknownModel(id.to_string()))
    }

    /// Writes every record plus a `pool.json` manifest into `dir`.
    ///
    /// Returns the manifest path.
    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let target_labels = PathBuf::from("target_labels.csv");
        write_labels(&dir.join(&target_labels), &self.target_labels)?;
        let mut models = Vec::with_capacity(self.models.len());
        for record in &self.models {
            let entry = ModelEntry {
                id: record.model_id.clone(),
                source_features: format!("{}.source_features.csv", record.model_id).into(),
                source_labels: format!("{}.source_labels.csv", record.model_id).into(),
                target_features: format!("{}.target_features.csv", record.model_id).into(),
                target_predictions: format!("{}.target_predictions.csv", record.model_id).into(),
                num_source_classes: record.num_source_classes,
            };
            write_features(&dir.join(&entry.source_features), &record.source_features)?;
            write_labels(&dir.join(&entry.source_labels), &record.source_labels)?;
            write_features(&dir.join(&entry.target_features), &record.target_features)?;
            write_labels(&dir.join(&entry.target_predictions), &record.target_predictions)?;
            models.push(entry);
        }
        let manifest = PoolManifest {
            target_labels,
            models,
        };
        let path = dir.join("pool.json");
        let json = serde_json::to_string_pretty(&manifest)
            .map_err(|e| Error::Invalid(format!("cannot serialize manifest: {e}")))?;
        write_text(&path, &(json + "\n"))?;
        Ok(path)
    }
}

pub(crate) fn valid_id(id: &str) -> bool {
    !id.is_empty() && !id.chars().any(|c| c == ',' || c == ';' || c.is_whitespace())
}

fn resolve(base: &Path, path: &Path) -> PathBuf {
    if path.is_absolute() {
        path.to_path_buf()
    } else {
        base.join(path)
    }
}

fn load_record(entry: &ModelEntry, base: &Path) -> Result<ModelRecord> {
    let source_labels = read_labels(&resolve(base, &entry.source_labels))?;
    let target_predictions = read_labels(&resolve(base, &entry.target_predictions))?;
    let record = ModelRecord {
        model_id: entry.id.clone(),
        source_features: read_features(&resolve(base, &entry.source_features))?,
        source_labels,
        target_features: read_features(&resolve(base, &entry.target_features))?,
        target_predictions,
        num_source_classes: entry.num_source_classes,
    };
    record.validate()?;
    Ok(record)
}

/// Loads and validates a pool manifest and every file it references.
pub fn load_pool(manifest_path: &Path) -> Result<Pool> {
    let text = read_text(manifest_path)?;
    let manifest: PoolManifest =
        serde_json::from_str(&text).map_err(|e| Error::parse(manifest_path, e.line(), e.to_string()))?;
    let base = manifest_path.parent().unwrap_or_else(|| Path::new("."));
    let target_labels = read_labels(&resolve(base, &manifest.target_labels))?;
    let models = manifest
        .models
        .iter()
        .map(|entry| load_record(entry, base).map_err(|e| Error::model(&entry.id, e)))
        .collect::<Result<Vec<_>>>()?;
    Pool::new(models, target_labels)
}
