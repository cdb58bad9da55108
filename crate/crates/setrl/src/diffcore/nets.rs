//! Dense feed-forward networks: tanh hidden layers, linear output.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::tape::{Tape, ValueId};
use super::tensor::Tensor;
use super::DiffError;

/// One affine layer, weights stored out×in.
#[derive(Clone, Debug)]
pub struct DenseLayer {
    pub w: Tensor,
    pub b: Tensor,
}

/// Tape handles for one recorded layer.
#[derive(Clone, Copy, Debug)]
pub struct DenseLayerIds {
    pub w: ValueId,
    pub b: ValueId,
}

impl DenseLayer {
    /// Xavier-uniform initialization, zero bias.
    pub fn xavier(in_dim: usize, out_dim: usize, rng: &mut ChaCha8Rng) -> DenseLayer {
        let bound = (6.0 / (in_dim + out_dim) as f64).sqrt();
        let w: Vec<f64> = (0..in_dim * out_dim)
            .map(|_| rng.random_range(-bound..bound))
            .collect();
        DenseLayer {
            w: Tensor::matrix(out_dim, in_dim, w).expect("finite init"),
            b: Tensor::zeros(&[out_dim]),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.w.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.w.rows()
    }

    /// Value-mode evaluation. Loop order matches the tape's affine so both
    /// paths produce bit-identical results.
    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        let (r, c) = (self.out_dim(), self.in_dim());
        assert_eq!(x.len(), c, "layer expects {c} inputs, got {}", x.len());
        let wv = self.w.values();
        let bv = self.b.values();
        let mut out = vec![0.0; r];
        for i in 0..r {
            let row = &wv[i * c..(i + 1) * c];
            let mut acc = 0.0;
            for j in 0..c {
                acc += row[j] * x[j];
            }
            out[i] = acc + bv[i];
        }
        out
    }

    pub fn record(&self, tape: &mut Tape) -> DenseLayerIds {
        DenseLayerIds {
            w: tape.leaf(&self.w),
            b: tape.leaf(&self.b),
        }
    }
}

/// A multi-layer perceptron: affine layers with tanh between them and a
/// linear final layer.
#[derive(Clone, Debug)]
pub struct Mlp {
    pub layers: Vec<DenseLayer>,
}

/// Tape handles for a recorded [`Mlp`].
#[derive(Clone, Debug)]
pub struct MlpIds {
    pub layers: Vec<DenseLayerIds>,
}

impl MlpIds {
    /// Parameter leaves in [`Mlp::params_mut`] order.
    pub fn leaf_ids(&self) -> Vec<ValueId> {
        let mut out = Vec::with_capacity(self.layers.len() * 2);
        for l in &self.layers {
            out.push(l.w);
            out.push(l.b);
        }
        out
    }
}

impl Mlp {
    /// Builds an MLP with the given layer widths, e.g. `[2, 64, 64, 1]`.
    pub fn xavier(dims: &[usize], rng: &mut ChaCha8Rng) -> Mlp {
        assert!(dims.len() >= 2, "an MLP needs input and output widths");
        let layers = dims
            .windows(2)
            .map(|d| DenseLayer::xavier(d[0], d[1], rng))
            .collect();
        Mlp { layers }
    }

    pub fn in_dim(&self) -> usize {
        self.layers.first().expect("nonempty").in_dim()
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().expect("nonempty").out_dim()
    }

    /// Shrinks the final layer's weights; used for small policy-head init.
    pub fn scale_last(&mut self, c: f64) {
        let last = self.layers.last_mut().expect("nonempty");
        for v in last.w.values_mut() {
            *v *= c;
        }
    }

    /// Value-mode forward pass.
    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        let last = self.layers.len() - 1;
        let mut h = self.layers[0].eval(x);
        if last > 0 {
            for v in h.iter_mut() {
                *v = v.tanh();
            }
        }
        for (i, layer) in self.layers.iter().enumerate().skip(1) {
            h = layer.eval(&h);
            if i < last {
                for v in h.iter_mut() {
                    *v = v.tanh();
                }
            }
        }
        h
    }

    /// Records parameter leaves on a tape.
    pub fn record(&self, tape: &mut Tape) -> MlpIds {
        MlpIds {
            layers: self.layers.iter().map(|l| l.record(tape)).collect(),
        }
    }

    /// Tape-mode forward pass from recorded parameter leaves.
    pub fn forward(&self, tape: &mut Tape, ids: &MlpIds, x: ValueId) -> Result<ValueId, DiffError> {
        let last = self.layers.len() - 1;
        let mut h = x;
        for (i, ids) in ids.layers.iter().enumerate() {
            h = tape.affine(ids.w, ids.b, h)?;
            if i < last {
                h = tape.tanh(h);
            }
        }
        Ok(h)
    }

    /// Parameter tensors in a stable order (layer 0 weights, layer 0 bias,
    /// layer 1 weights, ...), matching [`Mlp::named_params`].
    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = Vec::with_capacity(self.layers.len() * 2);
        for layer in &mut self.layers {
            out.push(&mut layer.w);
            out.push(&mut layer.b);
        }
        out
    }

    /// `(name, tensor)` pairs, names like `<prefix>.l0.w`.
    pub fn named_params(&self, prefix: &str) -> Vec<(String, &Tensor)> {
        let mut out = Vec::with_capacity(self.layers.len() * 2);
        for (i, layer) in self.layers.iter().enumerate() {
            out.push((format!("{prefix}.l{i}.w"), &layer.w));
            out.push((format!("{prefix}.l{i}.b"), &layer.b));
        }
        out
    }

    /// Parameter names in the same order as [`Mlp::params_mut`].
    pub fn param_names(&self, prefix: &str) -> Vec<String> {
        self.named_params(prefix)
            .into_iter()
            .map(|(n, _)| n)
            .collect()
    }
}
