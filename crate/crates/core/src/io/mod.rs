//! On-disk formats and in-memory containers for features, labels,
//! predictions, pool manifests and scoring configuration.
//!
//! Text formats:
//!
//! * `features.csv`: a `d=<int>` header, then one row of `d` comma-separated
//!   reals per sample.
//! * `labels.csv` / `predictions.csv`: a `C=<int>` header, then one class
//!   index per line.
//! * `pool.json`: the manifest, see [`PoolManifest`].
//! * config: `key = value` lines, see [`TEConfig`].

mod config;
mod matrix;
mod pool;
mod scores;
mod subsample;

pub use config::{Regularizer, TEConfig, Weights};
pub use matrix::{FeatureMatrix, LabelVector, PredictionVector};
pub use pool::{load_pool, ModelEntry, ModelRecord, Pool, PoolManifest};
pub(crate) use pool::valid_id;
pub use scores::{read_scores, write_scores};
pub use subsample::{stratified_indices, stratified_subsample};

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// Formats a real so that parsing it back yields the identical `f64`.
///
/// Uses plain decimal notation in the usual range and scientific notation
/// outside it; both are the shortest representation that round-trips.
pub fn format_real(value: f64) -> String {
    let magnitude = value.abs();
    if value == 0.0 || (1e-4..1e15).contains(&magnitude) {
        format!("{value}")
    } else {
        format!("{value:e}")
    }
}

pub(crate) fn parse_real(token: &str, path: &Path, line: usize) -> Result<f64> {
    let value: f64 = token
        .trim()
        .parse()
        .map_err(|_| Error::parse(path, line, format!("not a real number: `{}`", token.trim())))?;
    if !value.is_finite() {
        return Err(Error::parse(path, line, format!("non-finite value `{}`", token.trim())));
    }
    Ok(value)
}

pub(crate) fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn write_text(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Parses a `key=<int>` header line.
fn parse_header(line: Option<&str>, key: &str, path: &Path) -> Result<usize> {
    let line = line.ok_or_else(|| Error::parse(path, 1, format!("missing `{key}=` header")))?;
    let value = line
        .trim()
        .strip_prefix(key)
        .and_then(|rest| rest.trim_start().strip_prefix('='))
        .ok_or_else(|| Error::parse(path, 1, format!("expected `{key}=<int>` header, found `{}`", line.trim())))?;
    value
        .trim()
        .parse()
        .map_err(|_| Error::parse(path, 1, format!("bad `{key}` value `{}`", value.trim())))
}

/// Reads a `features.csv` file.
pub fn read_features(path: &Path) -> Result<FeatureMatrix> {
    let text = read_text(path)?;
    let mut lines = text.lines();
    let dim = parse_header(lines.next(), "d", path)?;
    let mut values = Vec::new();
    let mut rows = 0;
    for (offset, line) in lines.enumerate() {
        let line_no = offset + 2;
        if line.trim().is_empty() {
            continue;
        }
        let before = values.len();
        for token in line.split(',') {
            values.push(parse_real(token, path, line_no)?);
        }
        if values.len() - before != dim {
            return Err(Error::parse(
                path,
                line_no,
                format!("expected {dim} columns, found {}", values.len() - before),
            ));
        }
        rows += 1;
    }
    FeatureMatrix::new(rows, dim, values).map_err(|e| Error::parse(path, 1, e.to_string()))
}

/// Writes a `features.csv` file.
pub fn write_features(path: &Path, features: &FeatureMatrix) -> Result<()> {
    let mut out = format!("d={}\n", features.cols());
    for row in features.iter_rows() {
        let line: Vec<String> = row.iter().map(|&v| format_real(v)).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    write_text(path, &out)
}

/// Reads a `labels.csv` or `predictions.csv` file.
pub fn read_labels(path: &Path) -> Result<LabelVector> {
    let text = read_text(path)?;
    let mut lines = text.lines();
    let classes = parse_header(lines.next(), "C", path)?;
    let mut values = Vec::new();
    for (offset, line) in lines.enumerate() {
        let line_no = offset + 2;
        let token = line.trim();
        if token.is_empty() {
            continue;
        }
        let label: usize = token
            .parse()
            .map_err(|_| Error::parse(path, line_no, format!("not a class index: `{token}`")))?;
        if label >= classes {
            return Err(Error::parse(
                path,
                line_no,
                format!("label {label} out of range [0, {classes})"),
            ));
        }
        values.push(label);
    }
    LabelVector::new(classes, values).map_err(|e| Error::parse(path, 1, e.to_string()))
}

/// Writes a `labels.csv` or `predictions.csv` file.
pub fn write_labels(path: &Path, labels: &LabelVector) -> Result<()> {
    let mut out = format!("C={}\n", labels.num_classes());
    for &label in labels.values() {
        out.push_str(&label.to_string());
        out.push('\n');
    }
    write_text(path, &out)
}
