//! Synthetic bilingual unit task: corpus generation, speed adaptation of the
//! corpus, an exact posterior oracle, a trainable count denoiser and the
//! evaluation harness.

mod count;
mod eval;
mod oracle;
mod task;

pub use crate::diffusion::SourceContext;
pub use count::{
    held_out_oracle_ce, train_count_denoiser, CountArtifact, CountDenoiser, CountKey, Slot,
    TrainConfig, TrainOutcome, ARTIFACT_FORMAT_VERSION,
};
pub use eval::{
    duration_sweep_corpus, edit_distance, evaluate_translation, skeleton_accuracy,
    translate_corpus, DurationRow, NfeRow,
};
pub use oracle::{
    composition_count, exact_posterior, oracle_log_likelihood, oracle_posterior, ExactPosterior,
    OracleDenoiser, MAX_ORACLE_LEN,
};
pub use task::{
    adapt_corpus, generate_corpus, generate_corpus_from, generate_pair, ParallelPair, ToyTaskSpec,
};
