//! Student intent translators and weighted pairwise distillation.
//!
//! The student maps a prompt embedding to a distribution over a quantized
//! preference vocabulary. Training pushes probability toward the teacher's
//! vector and away from divergent historical vectors, relative to a frozen
//! reference; each sample's temperature shrinks with its distance from the
//! dataset mean, so atypical samples pull less.
//!
//! The "failure" outcome of a prediction is a confidence threshold: a
//! stand-in for a language model failing to emit a well-formed vector.

mod loss;
mod student;
mod train;
mod vocab;

pub use loss::{dynamic_beta, iokd_loss, IokdLoss, BETA_FLOOR_FRACTION};
pub use student::{policy_logprob, predict, HeadBasis, Prediction, ReferencePolicy, StudentModel, StudentSize};
pub use train::{
    evaluate, even_baseline_metrics, read_distill_log, train_distill, write_distill_log, Checkpoint, DistillConfig, DistillLogRow, DistillMetrics,
    DistillRun,
};
pub use vocab::{snap_to_vocab, PreferenceVocab};
