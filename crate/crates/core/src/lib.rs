//! Transferability estimation for ensembles of pre-trained models.
//!
//! Each source model is summarized against the target dataset by an
//! optimal-transport domain difference `W_D` and a coupling-derived task
//! difference `W_T`; model pairs are summarized by the conditional entropy
//! of their target predictions. An ensemble's score is the weighted sum
//! `λ_D·ΣW_D + λ_T·ΣW_T + λ_C·W_C` (lower is better), and its negation is a
//! submodular set function that [`selection::greedy_select`] maximizes
//! under a cardinality constraint.
//!
//! The pipeline mirrors the CLI: [`io::load_pool`] → [`metrics::build_cache`]
//! → [`selection::score_all`] / [`selection::greedy_select`] →
//! [`eval::evaluate`]. [`synth`] generates seeded pools for experiments.

pub mod cli;
pub mod error;
pub mod eval;
pub mod io;
pub mod metrics;
pub mod ot;
pub mod seed;
pub mod selection;
pub mod synth;

pub use error::{Error, Result};
