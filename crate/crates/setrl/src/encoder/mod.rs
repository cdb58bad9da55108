//! Set encoders: attention pooling, its sum-decomposition oracle, a
//! Deep-Sets-style encoder, the ordered baseline, and per-class composition.
//!
//! All set encoders map an unordered collection of feature vectors to a
//! fixed-width output that does not depend on the order objects are listed
//! in. The ordered encoder is the deliberate exception: it concatenates
//! rows as given, and exists as the baseline the invariant encoders are
//! compared against.

mod attention;
mod deepsets;
mod multiclass;
mod ordered;
mod set;

pub use attention::{
    attention_as_sum_form, encode_attention, AttentionIds, AttentionParams, AttentionTrace,
};
pub use deepsets::{encode_deepsets, DeepSetsIds, DeepSetsParams};
pub use multiclass::{MulticlassEncoder, MulticlassIds, SetEncoder, SetEncoderIds};
pub use ordered::encode_ordered;
pub use set::{ClassObjects, ObjectSet};

use crate::diffcore::DiffError;

#[derive(Debug, thiserror::Error)]
pub enum EncoderError {
    #[error("cannot encode an empty object set")]
    EmptySet,
    #[error("object {index} has dimension {got}, expected {expected}")]
    DimMismatch {
        index: usize,
        expected: usize,
        got: usize,
    },
    #[error("{m} objects exceed the {max_slots} ordered slots")]
    Capacity { m: usize, max_slots: usize },
    #[error("class `{class}` is populated but has no encoder")]
    MissingEncoder { class: String },
    #[error("ego vector has length {got}, encoder expects {expected}")]
    EgoMismatch { expected: usize, got: usize },
    #[error("filter network must output a single score, got width {0}")]
    FilterWidth(usize),
    #[error("pooling width mismatch: phi outputs {phi_out}, rho expects {rho_in}")]
    PoolingWidth { phi_out: usize, rho_in: usize },
    #[error(transparent)]
    Diff(#[from] DiffError),
}
