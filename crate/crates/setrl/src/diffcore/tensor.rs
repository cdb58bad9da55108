//! The value-holding tensor type used for parameters and observations.

use super::DiffError;

/// A dense row-major tensor of 64-bit reals with an optional gradient
/// accumulator of the same shape.
///
/// Construction validates that the value count matches the shape product
/// and that every value is finite. Code that mutates values directly
/// (optimizer steps, projections) is responsible for keeping them finite;
/// the optimizer re-validates before committing an update.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    values: Vec<f64>,
    grad: Option<Vec<f64>>,
}

impl Tensor {
    /// All-zero tensor of the given shape. Extents must be positive.
    pub fn zeros(shape: &[usize]) -> Tensor {
        assert!(
            !shape.is_empty() && shape.iter().all(|&e| e > 0),
            "tensor extents must be positive, got {shape:?}"
        );
        let n: usize = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            values: vec![0.0; n],
            grad: None,
        }
    }

    /// Builds a tensor from explicit values, validating shape and finiteness.
    pub fn from_values(shape: &[usize], values: Vec<f64>) -> Result<Tensor, DiffError> {
        let n: usize = shape.iter().product();
        if shape.is_empty() || shape.contains(&0) || n != values.len() {
            return Err(DiffError::ShapeMismatch {
                op: "tensor",
                expected: format!("{shape:?} ({n} values)"),
                got: format!("{} values", values.len()),
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(DiffError::NonFinite {
                name: "tensor".into(),
                index: i,
                value: values[i],
            });
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            values,
            grad: None,
        })
    }

    /// Rank-1 tensor from a value list.
    pub fn vector(values: Vec<f64>) -> Result<Tensor, DiffError> {
        let n = values.len();
        Tensor::from_values(&[n], values)
    }

    /// Rank-2 tensor from row-major values.
    pub fn matrix(rows: usize, cols: usize, values: Vec<f64>) -> Result<Tensor, DiffError> {
        Tensor::from_values(&[rows, cols], values)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    /// Row count of a rank-2 tensor.
    pub fn rows(&self) -> usize {
        assert_eq!(self.rank(), 2, "rows() on rank-{} tensor", self.rank());
        self.shape[0]
    }

    /// Column count of a rank-2 tensor.
    pub fn cols(&self) -> usize {
        assert_eq!(self.rank(), 2, "cols() on rank-{} tensor", self.rank());
        self.shape[1]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Direct mutable access for optimizer updates and projections.
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn grad(&self) -> Option<&[f64]> {
        self.grad.as_deref()
    }

    /// Overwrites the gradient accumulator with `g`.
    pub fn set_grad(&mut self, g: &[f64]) {
        assert_eq!(g.len(), self.values.len(), "gradient length mismatch");
        match &mut self.grad {
            Some(buf) => buf.copy_from_slice(g),
            None => self.grad = Some(g.to_vec()),
        }
    }

    pub fn clear_grad(&mut self) {
        self.grad = None;
    }

    /// Scales the gradient in place, if present.
    pub fn scale_grad(&mut self, c: f64) {
        if let Some(g) = &mut self.grad {
            for v in g.iter_mut() {
                *v *= c;
            }
        }
    }
}
