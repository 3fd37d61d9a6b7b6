use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

use super::{FeatureMatrix, LabelVector};

/// Picks at most `cap` sample indices, class-balanced by inverse frequency.
///
/// Every present class first gets one uniformly drawn sample. The remaining
/// `cap - classes` slots are filled by weighted sampling without replacement
/// (Efraimidis–Spirakis keys) with per-sample weight `1 / count(class)`.
/// The returned indices are ascending.
pub fn stratified_indices(labels: &LabelVector, cap: usize, seed: u64) -> Result<Vec<usize>> {
    let counts = labels.class_counts();
    let present = counts.iter().filter(|&&c| c > 0).count();
    if cap < present {
        return Err(Error::Invalid(format!(
            "subsample cap {cap} is smaller than the {present} classes present"
        )));
    }
    let n = labels.len();
    if n <= cap {
        return Ok((0..n).collect());
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); labels.num_classes()];
    for (i, &label) in labels.values().iter().enumerate() {
        members[label].push(i);
    }

    let mut taken = vec![false; n];
    for class_members in members.iter().filter(|m| !m.is_empty()) {
        let pick = class_members[rng.random_range(0..class_members.len())];
        taken[pick] = true;
    }

    let mut keyed: Vec<(f64, usize)> = Vec::with_capacity(n - present);
    for (i, &label) in labels.values().iter().enumerate() {
        // Draw for every index so the stream does not depend on the guaranteed picks.
        let u: f64 = rng.random();
        if taken[i] {
            continue;
        }
        let weight = 1.0 / counts[label] as f64;
        // ln(u) / w orders identically to u^(1/w); u = 0 maps to -inf.
        keyed.push((u.ln() / weight, i));
    }
    keyed.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    for &(_, i) in keyed.iter().take(cap - present) {
        taken[i] = true;
    }

    Ok((0..n).filter(|&i| taken[i]).collect())
}

/// Class-balanced subsample of a labelled feature matrix.
pub fn stratified_subsample(
    features: &FeatureMatrix,
    labels: &LabelVector,
    cap: usize,
    seed: u64,
) -> Result<(FeatureMatrix, LabelVector)> {
    if features.rows() != labels.len() {
        return Err(Error::Dimension(format!(
            "{} feature rows but {} labels",
            features.rows(),
            labels.len()
        )));
    }
    let indices = stratified_indices(labels, cap, seed)?;
    if indices.len() == features.rows() {
        return Ok((features.clone(), labels.clone()));
    }
    Ok((features.select_rows(&indices), labels.select(&indices)))
}
