//! Desk-scale decoder-only transformer with full, partial and prefix tuning.
//!
//! All arithmetic is f64 with hand-written backpropagation. Parameters live in
//! one flat buffer addressed through [`ParamLayout`].

pub mod config;
pub mod data;
pub mod io;
pub mod model;
pub mod params;
pub mod tune;

pub use config::{LmConfig, ParamLayout, TensorKind, TensorSpec};
pub use data::{topic_task, BigramSource, Sentence, SentenceSet, TaskDataset, TokenSequence};
pub use io::{load_model, save_model, ModelMeta};
pub use model::{embed_sequence, forward, hidden_states, logits};
pub use params::{PrefixBank, ToyLmParams};
pub use tune::{
    grad_check, pretrain, select_trainable, smoothed_increases, train, tune, GradCheckReport,
    OptimizerConfig, OptimizerKind, PretrainSpec, ToyLm, TrainableMask, TuneConfig, TuneMode,
    TuneOutcome, DEFAULT_PREFIX_LEN,
};
