//! Sum-pooled set encoder: per-object transform, sum, final transform.

use rand_chacha::ChaCha8Rng;

use super::EncoderError;
use crate::diffcore::{Mlp, MlpIds, Tape, Tensor, ValueId};

/// Parameters of the sum-pooling encoder: `phi` maps each object to a
/// pooled-space vector, `rho` maps the pooled sum to the output.
#[derive(Clone, Debug)]
pub struct DeepSetsParams {
    phi: Mlp,
    rho: Mlp,
}

/// Tape handles for recorded parameters.
#[derive(Clone, Debug)]
pub struct DeepSetsIds {
    pub phi: MlpIds,
    pub rho: MlpIds,
}

impl DeepSetsIds {
    /// Parameter leaves in [`DeepSetsParams::params_mut`] order.
    pub fn leaf_ids(&self) -> Vec<ValueId> {
        let mut out = self.phi.leaf_ids();
        out.extend(self.rho.leaf_ids());
        out
    }
}

impl DeepSetsParams {
    /// Validates that `rho` consumes exactly what `phi` produces.
    pub fn new(phi: Mlp, rho: Mlp) -> Result<DeepSetsParams, EncoderError> {
        if phi.out_dim() != rho.in_dim() {
            return Err(EncoderError::PoolingWidth {
                phi_out: phi.out_dim(),
                rho_in: rho.in_dim(),
            });
        }
        Ok(DeepSetsParams { phi, rho })
    }

    /// Fresh Xavier-initialized encoder: objects of dimension `d`, pooled
    /// width `p`, output width `k`, shared hidden widths.
    pub fn xavier(
        d: usize,
        hidden: &[usize],
        p: usize,
        k: usize,
        rng: &mut ChaCha8Rng,
    ) -> DeepSetsParams {
        let mut phi_dims = vec![d];
        phi_dims.extend_from_slice(hidden);
        phi_dims.push(p);
        let mut rho_dims = vec![p];
        rho_dims.extend_from_slice(hidden);
        rho_dims.push(k);
        DeepSetsParams {
            phi: Mlp::xavier(&phi_dims, rng),
            rho: Mlp::xavier(&rho_dims, rng),
        }
    }

    pub fn phi(&self) -> &Mlp {
        &self.phi
    }

    pub fn rho(&self) -> &Mlp {
        &self.rho
    }

    pub fn in_dim(&self) -> usize {
        self.phi.in_dim()
    }

    pub fn k(&self) -> usize {
        self.rho.out_dim()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = self.phi.params_mut();
        out.extend(self.rho.params_mut());
        out
    }

    pub fn named_params(&self, prefix: &str) -> Vec<(String, &Tensor)> {
        let mut out = self.phi.named_params(&format!("{prefix}.phi"));
        out.extend(self.rho.named_params(&format!("{prefix}.rho")));
        out
    }

    pub fn record(&self, tape: &mut Tape) -> DeepSetsIds {
        DeepSetsIds {
            phi: self.phi.record(tape),
            rho: self.rho.record(tape),
        }
    }

    /// Tape-mode encode over already-recorded object leaves.
    pub fn forward(
        &self,
        tape: &mut Tape,
        ids: &DeepSetsIds,
        objects: &[ValueId],
    ) -> Result<ValueId, EncoderError> {
        if objects.is_empty() {
            return Err(EncoderError::EmptySet);
        }
        let mut acc = self.phi.forward(tape, &ids.phi, objects[0])?;
        for &o in &objects[1..] {
            let mapped = self.phi.forward(tape, &ids.phi, o)?;
            acc = tape.add(acc, mapped)?;
        }
        Ok(self.rho.forward(tape, &ids.rho, acc)?)
    }
}

/// Encodes an object set as `rho(sum_j phi(object_j))`. Invariant under any
/// permutation of the objects because summation is symmetric.
pub fn encode_deepsets(
    params: &DeepSetsParams,
    objects: &[Vec<f64>],
) -> Result<Vec<f64>, EncoderError> {
    if objects.is_empty() {
        return Err(EncoderError::EmptySet);
    }
    let d = params.in_dim();
    for (index, o) in objects.iter().enumerate() {
        if o.len() != d {
            return Err(EncoderError::DimMismatch {
                index,
                expected: d,
                got: o.len(),
            });
        }
    }
    let mut acc = vec![0.0; params.phi.out_dim()];
    for o in objects {
        let mapped = params.phi.eval(o);
        for (a, v) in acc.iter_mut().zip(&mapped) {
            *a += v;
        }
    }
    Ok(params.rho.eval(&acc))
}
