//! Transferability terms: domain difference `W_D`, task difference `W_T`,
//! inter-model cohesion `W_C`, and their weighted combination.

mod cache;
mod entropy;
mod score;

pub use cache::{build_cache, model_terms, standardize_terms, w_domain, ModelTerms, PairwiseCache};
pub use entropy::{cohesion_pair, joint_from_coupling, w_task, JointLabelDistribution};
pub use score::{osborn_score, w_cohesion, PairTerm, ScoreBreakdown, Scorer, TermValue};
