//! Prototype-based classification and novelty detection over embedding
//! vectors.
//!
//! Each class is summarized by a handful of prototypes found online as
//! density peaks of its training embeddings. A new embedding is scored
//! against every class; the best score is compared with an m-sigma
//! envelope of the training scores, and samples that fall outside it are
//! reported as novel (deepfakes or unseen identities).

pub mod detect;
pub mod error;
pub mod eval;
pub mod interpret;
pub mod io;
pub mod learn;
pub mod model;
pub mod stats;

pub use detect::{decide, decide_batch, decide_top_k, score_density, score_verbatim, TraceTable};
pub use error::{Error, Result};
pub use eval::{bench_retrain, evaluate, oracle_decide, synth_dataset, Metrics, SynthConfig, Truth};
pub use interpret::{extract_rule, Rule};
pub use learn::{add_class, add_samples, learn_class, train, LearnOptions};
pub use model::{
    ClassModel, Decision, DetectorModel, Embedding, LabeledSample, Prototype, ScoringMode, ThresholdStats, Verdict,
};
pub use stats::{cauchy_density, squared_distance, RunningStats};
