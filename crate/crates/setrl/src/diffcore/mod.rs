//! Dense tensors, a reverse-mode tape, small dense networks, Adam, and
//! checkpoint I/O.
//!
//! Everything is 64-bit. The tape is an arena: values live in one flat
//! buffer, nodes reference earlier nodes only, and backward is a single
//! reverse sweep. That is enough machinery for the set encoders and the
//! PPO losses without pulling in a tensor framework.

mod adam;
mod checkpoint;
mod fd;
mod nets;
mod tape;
mod tensor;

pub use adam::{clip_global_norm, AdamState};
pub use checkpoint::{load_checkpoint, load_into, load_into_str, parse_checkpoint, render_checkpoint, save_checkpoint};
pub use fd::{finite_difference_check, GradModel};
pub use nets::{DenseLayer, DenseLayerIds, Mlp, MlpIds};
pub use tape::{Shape, Tape, ValueId};
pub use tensor::Tensor;

/// Errors from tensor construction, tape recording, optimization, and
/// checkpoint I/O.
#[derive(Debug, thiserror::Error)]
pub enum DiffError {
    #[error("{op}: shape mismatch, {expected} vs {got}")]
    ShapeMismatch {
        op: &'static str,
        expected: String,
        got: String,
    },
    #[error("{op}: empty input")]
    EmptyInput { op: &'static str },
    #[error("reduce axis {axis} out of range for rank-{rank} value")]
    AxisOutOfRange { axis: usize, rank: usize },
    #[error("index {index} out of range for length {len}")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("backward target must be a scalar, got {got}")]
    NonScalarLoss { got: String },
    #[error("non-finite value in `{name}` at index {index}: {value}")]
    NonFinite {
        name: String,
        index: usize,
        value: f64,
    },
    #[error("non-finite gradient in `{name}` at index {index}: {value}; update rejected")]
    NonFiniteGrad {
        name: String,
        index: usize,
        value: f64,
    },
    #[error("missing gradient for `{name}`")]
    MissingGrad { name: String },
    #[error("optimizer state tracks {expected} parameters, got {got}")]
    OptimizerMismatch { expected: usize, got: usize },
    #[error("{what} must be positive, got {value}")]
    NonPositive { what: &'static str, value: f64 },
    #[error("checkpoint {path}: {source}")]
    CheckpointIo {
        path: String,
        source: std::io::Error,
    },
    #[error("checkpoint {path}, line {line}: {msg}")]
    CheckpointParse {
        path: String,
        line: usize,
        msg: String,
    },
    #[error("checkpoint block `{name}`: expected shape {expected}, got {got}")]
    CheckpointShape {
        name: String,
        expected: String,
        got: String,
    },
    #[error("checkpoint is missing parameter block `{name}`")]
    CheckpointMissing { name: String },
    #[error("checkpoint has unused parameter block `{name}`")]
    CheckpointUnused { name: String },
}
