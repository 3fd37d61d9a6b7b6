use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

use super::{format_real, read_text};

/// Regularizer used when solving the transport problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regularizer {
    Entropic,
    Frobenius,
}

impl FromStr for Regularizer {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "entropic" => Ok(Regularizer::Entropic),
            "frobenius" => Ok(Regularizer::Frobenius),
            other => Err(Error::Invalid(format!(
                "unknown regularizer `{other}` (expected entropic or frobenius)"
            ))),
        }
    }
}

impl fmt::Display for Regularizer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Regularizer::Entropic => "entropic",
            Regularizer::Frobenius => "frobenius",
        })
    }
}

/// Per-term weights of the score: domain, task and cohesion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Weights {
    pub domain: f64,
    pub task: f64,
    pub cohesion: f64,
}

impl Weights {
    pub const UNIT: Weights = Weights {
        domain: 1.0,
        task: 1.0,
        cohesion: 1.0,
    };

    pub fn new(domain: f64, task: f64, cohesion: f64) -> Result<Self> {
        let w = Weights {
            domain,
            task,
            cohesion,
        };
        w.validate()?;
        Ok(w)
    }

    fn validate(&self) -> Result<()> {
        let all = [self.domain, self.task, self.cohesion];
        if all.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::Invalid(format!("weights must be finite and nonnegative, got {self}")));
        }
        if all.iter().all(|&w| w == 0.0) {
            return Err(Error::Invalid("weights must not all be zero".into()));
        }
        Ok(())
    }
}

impl Default for Weights {
    fn default() -> Self {
        Weights::UNIT
    }
}

impl FromStr for Weights {
    type Err = Error;

    /// Parses `λD,λT,λC`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        if parts.len() != 3 {
            return Err(Error::Invalid(format!("expected three comma-separated weights, got `{s}`")));
        }
        let mut vals = [0.0; 3];
        for (slot, part) in vals.iter_mut().zip(&parts) {
            *slot = part
                .parse()
                .map_err(|_| Error::Invalid(format!("bad weight `{part}`")))?;
        }
        Weights::new(vals[0], vals[1], vals[2])
    }
}

impl fmt::Display for Weights {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{},{}", self.domain, self.task, self.cohesion)
    }
}

/// Scoring configuration.
///
/// `epsilon` is scale-free: the regularization strength handed to the
/// solver is `epsilon × median(cost matrix)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TEConfig {
    pub epsilon: f64,
    pub regularizer: Regularizer,
    pub max_iters: usize,
    pub convergence_tol: f64,
    pub weights: Weights,
    pub standardize: bool,
    pub subsample_cap: usize,
    pub seed: u64,
}

impl Default for TEConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.1,
            regularizer: Regularizer::Entropic,
            max_iters: 1000,
            convergence_tol: 1e-6,
            weights: Weights::UNIT,
            standardize: true,
            subsample_cap: 5000,
            seed: 0,
        }
    }
}

const KEYS: [&str; 10] = [
    "epsilon",
    "regularizer",
    "max_iters",
    "convergence_tol",
    "lambda_d",
    "lambda_t",
    "lambda_c",
    "standardize",
    "subsample_cap",
    "seed",
];

fn parse_bool(value: &str) -> Option<bool> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "1" | "yes" => Some(true),
        "false" | "0" | "no" => Some(false),
        _ => None,
    }
}

impl TEConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return Err(Error::Invalid(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        if self.max_iters == 0 {
            return Err(Error::Invalid("max_iters must be at least 1".into()));
        }
        if !(self.convergence_tol.is_finite() && self.convergence_tol > 0.0) {
            return Err(Error::Invalid(format!(
                "convergence_tol must be positive, got {}",
                self.convergence_tol
            )));
        }
        self.weights.validate()
    }

    /// Sets one `key = value` entry.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        let bad = || Error::Invalid(format!("bad value `{value}` for `{key}`"));
        match key.trim() {
            "epsilon" => self.epsilon = value.parse().map_err(|_| bad())?,
            "regularizer" => self.regularizer = value.parse()?,
            "max_iters" => self.max_iters = value.parse().map_err(|_| bad())?,
            "convergence_tol" => self.convergence_tol = value.parse().map_err(|_| bad())?,
            "lambda_d" => self.weights.domain = value.parse().map_err(|_| bad())?,
            "lambda_t" => self.weights.task = value.parse().map_err(|_| bad())?,
            "lambda_c" => self.weights.cohesion = value.parse().map_err(|_| bad())?,
            "standardize" => self.standardize = parse_bool(value).ok_or_else(bad)?,
            "subsample_cap" => self.subsample_cap = value.parse().map_err(|_| bad())?,
            "seed" => self.seed = value.parse().map_err(|_| bad())?,
            other => {
                return Err(Error::Invalid(format!(
                    "unknown config key `{other}` (expected one of {})",
                    KEYS.join(", ")
                )))
            }
        }
        Ok(())
    }

    /// Parses config text; keys not present keep their defaults.
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut config = TEConfig::default();
        for (offset, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(path, offset + 1, format!("expected `key = value`, found `{line}`")))?;
            config
                .set(key, value)
                .map_err(|e| Error::parse(path, offset + 1, e.to_string()))?;
        }
        config
            .validate()
            .map_err(|e| Error::parse(path, 0, e.to_string()))?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&read_text(path)?, path)
    }

    pub fn to_text(&self) -> String {
        format!(
            "epsilon = {}\nregularizer = {}\nmax_iters = {}\nconvergence_tol = {}\nlambda_d = {}\nlambda_t = {}\nlambda_c = {}\nstandardize = {}\nsubsample_cap = {}\nseed = {}\n",
            format_real(self.epsilon),
            self.regularizer,
            self.max_iters,
            format_real(self.convergence_tol),
            format_real(self.weights.domain),
            format_real(self.weights.task),
            format_real(self.weights.cohesion),
            self.standardize,
            self.subsample_cap,
            self.seed
        )
    }
}
