//! Dense feed-forward networks trained by per-sample SGD with a softmax
//! cross-entropy head, plus backpropagated-error tracing.

mod activation;
mod layer;
mod network;
mod train;

pub use activation::Activation;
pub use layer::{xavier_init, xavier_init_with, Layer, XavierBound};
pub use network::{argmax, evaluate, evaluate_with, rbe, softmax, BackpropTrace, Gradients, LabeledBatch, Network};
pub use train::{train_sgd, EvalSchedule, LogRow, TrainFailure, TrainOptions, TrainingLog, CSV_HEADER};

use thiserror::Error;

use crate::tensor::TensorError;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NeuralError {
    #[error("dimension mismatch: expected {expected}, got {got} ({context})")]
    DimensionMismatch {
        expected: usize,
        got: usize,
        context: &'static str,
    },
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("classification head must be linear, got {0}")]
    HeadActivation(Activation),
    #[error("network needs at least an input dimension")]
    EmptyArchitecture,
    #[error("RBE undefined: output error vanishes")]
    RbeUndefined,
    #[error("divergence: non-finite loss at sample {sample_index}")]
    Divergence { sample_index: usize },
    #[error("learning rate must be finite and non-negative, got {0}")]
    InvalidRate(f64),
    #[error("empty sample set")]
    EmptySamples,
    #[error("invalid schedule: {eval_every} must be positive and divide {total}")]
    BadSchedule { total: usize, eval_every: usize },
    #[error("training sequence ended after {got} of {expected} samples")]
    ShortSequence { expected: usize, got: usize },
    #[error(transparent)]
    Tensor(#[from] TensorError),
}
