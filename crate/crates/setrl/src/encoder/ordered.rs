//! The ordered baseline: slot concatenation with zero padding.

use super::EncoderError;

/// Concatenates object vectors in their given order and zero-pads to
/// `max_slots` slots of `dim` values each. Deliberately not permutation
/// invariant: this is the representation the set encoders are compared
/// against.
pub fn encode_ordered(
    objects: &[Vec<f64>],
    dim: usize,
    max_slots: usize,
) -> Result<Vec<f64>, EncoderError> {
    if objects.len() > max_slots {
        return Err(EncoderError::Capacity {
            m: objects.len(),
            max_slots,
        });
    }
    let mut out = Vec::with_capacity(max_slots * dim);
    for (index, o) in objects.iter().enumerate() {
        if o.len() != dim {
            return Err(EncoderError::DimMismatch {
                index,
                expected: dim,
                got: o.len(),
            });
        }
        out.extend_from_slice(o);
    }
    out.resize(max_slots * dim, 0.0);
    Ok(out)
}
