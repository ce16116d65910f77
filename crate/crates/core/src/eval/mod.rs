//! Trial construction, cosine scoring, adaptive s-norm and EER.

mod eer;
mod pipeline;
mod scoring;
mod trials;

pub use eer::{compute_eer, Eer};
pub use pipeline::{
    build_cohort, dump_mixture_embeddings, embed, evaluate, evaluate_with, EmbeddingRow, EmbeddingTable,
    EvalOptions, Evaluation, ScoreSet, ScoredTrial, UtteranceSource,
};
pub use scoring::{
    adaptive_snorm, cosine_score, snorm_from_stats, Cohort, CohortStats, NormalizedScore, SNORM_STD_EPS,
};
pub use trials::{build_trials, parse_trials, write_trials, Interferer, SnrRange, Trial, UttRef};
