//! Seeded synthetic pools with controllable shift, noise and redundancy.
//!
//! Every model sees the same base target sample. Its source features are
//! that sample as drawn, its target features the sample translated by
//! `domain_shift` along a direction shared by its redundancy group, and
//! its source labels and target predictions the class `y mod C_s` flipped
//! with probability `prediction_noise`. Flip draws are shared within a
//! group, so group members with equal noise predict identically.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::eval::ensemble_accuracy_votes;
use crate::io::{format_real, read_text, write_text, FeatureMatrix, LabelVector, ModelRecord, Pool};
use crate::seed::substream;
use crate::selection::EnsembleCandidate;

const DEFAULT_CLASS_SCALE: f64 = 3.0;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub num_models: usize,
    pub dim: usize,
    pub source_classes: usize,
    pub target_classes: usize,
    pub samples: usize,
    pub domain_shift: Vec<f64>,
    pub prediction_noise: Vec<f64>,
    /// Redundancy group label of each model.
    pub groups: Vec<String>,
    pub seed: u64,
    /// Distance of each class mean from the origin.
    pub class_scale: f64,
}

const REQUIRED: [&str; 9] = [
    "num_models",
    "dim",
    "source_classes",
    "target_classes",
    "samples",
    "domain_shift",
    "prediction_noise",
    "groups",
    "seed",
];

fn list<T: std::str::FromStr + Clone>(key: &str, value: &str, len: usize) -> Result<Vec<T>> {
    let items: Vec<&str> = value.split(',').map(str::trim).collect();
    let parsed = items
        .iter()
        .map(|s| s.parse().map_err(|_| Error::Invalid(format!("bad `{key}` entry `{s}`"))))
        .collect::<Result<Vec<T>>>()?;
    match parsed.len() {
        n if n == len => Ok(parsed),
        // A single value applies to every model.
        1 => Ok(std::iter::repeat_n(parsed.into_iter().next().unwrap(), len).collect()),
        n => Err(Error::Invalid(format!("`{key}` has {n} entries for {len} models"))),
    }
}

impl SynthSpec {
    /// Parses `key = value` lines; list values are comma-separated.
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (offset, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(path, offset + 1, format!("expected `key = value`, found `{line}`")))?;
            let key = key.trim();
            if !REQUIRED.contains(&key) && key != "class_scale" {
                return Err(Error::parse(path, offset + 1, format!("unknown synth key `{key}`")));
            }
            entries.insert(key.to_string(), (offset + 1, value.trim().to_string()));
        }
        if let Some(missing) = REQUIRED.iter().find(|k| !entries.contains_key(**k)) {
            return Err(Error::parse(path, 0, format!("missing required key `{missing}`")));
        }
        let at = |key: &str, e: Error| Error::parse(path, entries[key].0, e.to_string());
        let scalar = |key: &str| -> Result<usize> {
            let value = &entries[key].1;
            value
                .parse()
                .map_err(|_| Error::parse(path, entries[key].0, format!("bad `{key}` value `{value}`")))
        };
        let num_models = scalar("num_models")?;
        let vector = |key: &str| list::<f64>(key, &entries[key].1, num_models).map_err(|e| at(key, e));
        let seed = entries["seed"]
            .1
            .parse()
            .map_err(|_| Error::parse(path, entries["seed"].0, "bad `seed` value"))?;
        let class_scale = match entries.get("class_scale") {
            Some((line, v)) => v
                .parse()
                .map_err(|_| Error::parse(path, *line, format!("bad `class_scale` value `{v}`")))?,
            None => DEFAULT_CLASS_SCALE,
        };
        let spec = SynthSpec {
            num_models,
            dim: scalar("dim")?,
            source_classes: scalar("source_classes")?,
            target_classes: scalar("target_classes")?,
            samples: scalar("samples")?,
            domain_shift: vector("domain_shift")?,
            prediction_noise: vector("prediction_noise")?,
            groups: list::<String>("groups", &entries["groups"].1, num_models).map_err(|e| at("groups", e))?,
            seed,
            class_scale,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&read_text(path)?, path)
    }

    pub fn to_text(&self) -> String {
        let join = |v: &[f64]| v.iter().map(|x| format_real(*x)).collect::<Vec<_>>().join(",");
        format!(
            "num_models = {}\ndim = {}\nsource_classes = {}\ntarget_classes = {}\nsamples = {}\n\
             domain_shift = {}\nprediction_noise = {}\ngroups = {}\nseed = {}\nclass_scale = {}\n",
            self.num_models,
            self.dim,
            self.source_classes,
            self.target_classes,
            self.samples,
            join(&self.domain_shift),
            join(&self.prediction_noise),
            self.groups.join(","),
            self.seed,
            format_real(self.class_scale)
        )
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Invalid(format!("infeasible synth spec: {m}")));
        let m = self.num_models;
        if m < 2 {
            return fail(format!("need at least 2 models, got {m}"));
        }
        if self.source_classes < 2 || self.target_classes < 2 {
            return fail("need at least 2 source and 2 target classes".into());
        }
        if self.dim < self.target_classes {
            return fail(format!(
                "dim {} cannot hold {} separated class means",
                self.dim, self.target_classes
            ));
        }
        if self.samples < self.source_classes.max(self.target_classes) {
            return fail(format!("{} samples cannot cover every class", self.samples));
        }
        if self.domain_shift.len() != m || self.prediction_noise.len() != m || self.groups.len() != m {
            return fail(format!("per-model lists must have {m} entries"));
        }
        if self.domain_shift.iter().any(|s| !s.is_finite() || *s < 0.0) {
            return fail("domain_shift must be finite and nonnegative".into());
        }
        if self.prediction_noise.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return fail("prediction_noise must lie in [0, 1]".into());
        }
        if self.groups.iter().any(|g| !crate::io::valid_id(g)) {
            return fail("group labels must be non-empty without commas, semicolons or whitespace".into());
        }
        if !(self.class_scale.is_finite() && self.class_scale >= 0.0) {
            return fail("class_scale must be finite and nonnegative".into());
        }
        Ok(())
    }

    /// Model ids `m0..`, zero-padded so lexicographic order is numeric.
    pub fn model_ids(&self) -> Vec<String> {
        let width = (self.num_models - 1).to_string().len();
        (0..self.num_models).map(|r| format!("m{r:0width$}")).collect()
    }
}

/// Generator parameters and realized accuracy of one model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelTruth {
    pub id: String,
    pub group: String,
    pub domain_shift: f64,
    pub prediction_noise: f64,
    /// Single-model proxy accuracy.
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthPool {
    pub pool: Pool,
    pub truth: Vec<ModelTruth>,
}

impl SynthPool {
    pub fn proxy_accuracy(&self, ensemble: &EnsembleCandidate) -> Result<f64> {
        proxy_accuracy(ensemble, &self.pool)
    }

    pub fn truth_csv(&self) -> String {
        let mut out = String::from("id,group,domain_shift,prediction_noise,accuracy\n");
        for t in &self.truth {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                t.id,
                t.group,
                format_real(t.domain_shift),
                format_real(t.prediction_noise),
                format_real(t.accuracy)
            ));
        }
        out
    }

    /// Writes the pool directory plus `truth.csv`; returns the manifest path.
    pub fn write_to_dir(&self, dir: &Path) -> Result<PathBuf> {
        let manifest = self.pool.write(dir)?;
        write_text(&dir.join("truth.csv"), &self.truth_csv())?;
        Ok(manifest)
    }
}

fn normal_vec(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

pub fn generate(spec: &SynthSpec) -> Result<SynthPool> {
    spec.validate()?;
    let (n, d) = (spec.samples, spec.dim);
    let (cs, ct) = (spec.source_classes, spec.target_classes);

    let mut rng = ChaCha8Rng::seed_from_u64(substream(spec.seed, &["synth", "target"]));
    let y: Vec<usize> = (0..n).map(|i| i % ct).collect();
    let mut base = Vec::with_capacity(n * d);
    for &c in &y {
        let mut x = normal_vec(&mut rng, d);
        x[c] += spec.class_scale;
        base.extend(x);
    }
    let base = FeatureMatrix::new(n, d, base)?;
    let target_labels = LabelVector::new(ct, y.clone())?;

    let ids = spec.model_ids();
    let mut models = Vec::with_capacity(spec.num_models);
    let mut truth = Vec::with_capacity(spec.num_models);
    for (r, id) in ids.iter().enumerate() {
        let group = spec.groups[r].as_str();
        let mut dir_rng = ChaCha8Rng::seed_from_u64(substream(spec.seed, &["synth", "direction", group]));
        let mut u = normal_vec(&mut dir_rng, d);
        let norm = u.iter().map(|v| v * v).sum::<f64>().sqrt();
        u.iter_mut().for_each(|v| *v /= norm);
        let shift = spec.domain_shift[r];
        let shifted: Vec<f64> = base
            .iter_rows()
            .flat_map(|row| row.iter().zip(&u).map(|(x, ui)| x + shift * ui).collect::<Vec<_>>())
            .collect();

        let mut noise_rng = ChaCha8Rng::seed_from_u64(substream(spec.seed, &["synth", "noise", group]));
        let p = spec.prediction_noise[r];
        let predictions: Vec<usize> = y
            .iter()
            .map(|&c| {
                let flip: f64 = noise_rng.random();
                let offset = noise_rng.random_range(1..cs);
                let clean = c % cs;
                if flip < p {
                    (clean + offset) % cs
                } else {
                    clean
                }
            })
            .collect();
        let predictions = LabelVector::new(cs, predictions)?;

        let record = ModelRecord {
            model_id: id.clone(),
            source_features: base.clone(),
            source_labels: predictions.clone(),
            target_features: FeatureMatrix::new(n, d, shifted)?,
            target_predictions: predictions,
            num_source_classes: cs,
        };
        models.push(record);
        truth.push(ModelTruth {
            id: id.clone(),
            group: group.to_string(),
            domain_shift: shift,
            prediction_noise: p,
            accuracy: 0.0,
        });
    }
    let pool = Pool::new(models, target_labels)?;
    let reference = reference_labels(&pool)?;
    for (t, record) in truth.iter_mut().zip(&pool.models) {
        t.accuracy = ensemble_accuracy_votes(&[&record.target_predictions], &reference)?;
    }
    Ok(SynthPool { pool, truth })
}

/// Target truth mapped into the shared prediction label space, `y mod C_s`.
pub fn reference_labels(pool: &Pool) -> Result<LabelVector> {
    let cs = pool.models[0].num_source_classes;
    if let Some(other) = pool.models.iter().find(|m| m.num_source_classes != cs) {
        return Err(Error::Model {
            model: other.model_id.clone(),
            message: format!(
                "has {} source classes, expected {cs} shared by the pool",
                other.num_source_classes
            ),
        });
    }
    LabelVector::new(cs, pool.target_labels.values().iter().map(|y| y % cs).collect())
}

/// Majority-vote accuracy of the members' target predictions against
/// [`reference_labels`].
pub fn proxy_accuracy(ensemble: &EnsembleCandidate, pool: &Pool) -> Result<f64> {
    let reference = reference_labels(pool)?;
    let members = ensemble
        .members()
        .iter()
        .map(|id| pool.model(id).map(|m| &m.target_predictions))
        .collect::<Result<Vec<_>>>()?;
    ensemble_accuracy_votes(&members, &reference)
}
