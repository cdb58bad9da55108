//! Gaussian policy with a pluggable observation encoder.
//!
//! The same parameters drive two forward paths: a value-mode pass used
//! during rollouts and evaluation, and a tape pass used inside the loss.
//! Both follow the same operation order, so the log-probability recorded
//! while acting is bit-identical to the one the loss recomputes at
//! unchanged parameters, making the first likelihood ratio exactly 1.

use std::f64::consts::PI;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::PpoError;
use crate::diffcore::{
    finite_difference_check, DenseLayer, DenseLayerIds, GradModel, Mlp, MlpIds, Tape, Tensor,
    ValueId,
};
use crate::encoder::{
    AttentionParams, DeepSetsParams, EncoderError, MulticlassEncoder, MulticlassIds, SetEncoder,
};
use crate::envs::{Observation, ObsSpec};

/// Environments here take 2-D velocity commands.
pub const ACTION_DIM: usize = 2;

const LOG_STD_MIN: f64 = -5.0;
const LOG_STD_MAX: f64 = 2.0;
const LOG_STD_INIT: f64 = -1.0;

/// Log-density of a diagonal Gaussian at `action`. The operation order
/// mirrors the tape construction in the loss exactly.
pub fn gaussian_logp(mean: &[f64], log_std: &[f64], action: &[f64]) -> f64 {
    let z0 = (action[0] - mean[0]) / log_std[0].exp();
    let z1 = (action[1] - mean[1]) / log_std[1].exp();
    -0.5 * (z0 * z0 + z1 * z1) - (log_std[0] + log_std[1]) - (2.0 * PI).ln()
}

/// Entropy of the same Gaussian; depends only on the log-stds.
pub fn gaussian_entropy(log_std: &[f64]) -> f64 {
    (log_std[0] + log_std[1]) + (1.0 + (2.0 * PI).ln())
}

/// How the policy reads an observation.
pub enum PolicyEncoder {
    /// Permutation-invariant set pooling over the class-tagged view.
    Set(MulticlassEncoder),
    /// The flat slot-ordered view, passed through unchanged.
    Ordered { in_dim: usize },
}

/// Tape handles for a recorded [`PolicyEncoder`].
pub enum PolicyEncoderIds {
    Set(MulticlassIds),
    Ordered,
}

impl PolicyEncoder {
    pub fn out_dim(&self) -> usize {
        match self {
            PolicyEncoder::Set(enc) => enc.out_dim(),
            PolicyEncoder::Ordered { in_dim } => *in_dim,
        }
    }

    /// True if the encoder is invariant to within-class permutations.
    pub fn is_invariant(&self) -> bool {
        matches!(self, PolicyEncoder::Set(_))
    }

    fn encode(&self, obs: &Observation) -> Result<Vec<f64>, EncoderError> {
        match self {
            PolicyEncoder::Set(enc) => enc.encode(&obs.set),
            PolicyEncoder::Ordered { in_dim } => {
                if obs.flat.len() != *in_dim {
                    return Err(EncoderError::DimMismatch {
                        index: 0,
                        expected: *in_dim,
                        got: obs.flat.len(),
                    });
                }
                Ok(obs.flat.clone())
            }
        }
    }

    fn record(&self, tape: &mut Tape) -> PolicyEncoderIds {
        match self {
            PolicyEncoder::Set(enc) => PolicyEncoderIds::Set(enc.record(tape)),
            PolicyEncoder::Ordered { .. } => PolicyEncoderIds::Ordered,
        }
    }

    fn forward(
        &self,
        tape: &mut Tape,
        ids: &PolicyEncoderIds,
        obs: &Observation,
    ) -> Result<ValueId, EncoderError> {
        match (self, ids) {
            (PolicyEncoder::Set(enc), PolicyEncoderIds::Set(i)) => enc.forward(tape, i, &obs.set),
            (PolicyEncoder::Ordered { in_dim }, PolicyEncoderIds::Ordered) => {
                if obs.flat.len() != *in_dim {
                    return Err(EncoderError::DimMismatch {
                        index: 0,
                        expected: *in_dim,
                        got: obs.flat.len(),
                    });
                }
                Ok(tape.leaf_slice(&obs.flat))
            }
            _ => unreachable!("ids recorded from a different encoder"),
        }
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        match self {
            PolicyEncoder::Set(enc) => enc.params_mut(),
            PolicyEncoder::Ordered { .. } => Vec::new(),
        }
    }

    fn named_params(&self, prefix: &str) -> Vec<(String, &Tensor)> {
        match self {
            PolicyEncoder::Set(enc) => enc.named_params(prefix),
            PolicyEncoder::Ordered { .. } => Vec::new(),
        }
    }
}

/// Which encoder a freshly built policy should use.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EncoderKind {
    Attention,
    DeepSets,
    Ordered,
}

/// One sampled (or deterministic) action with its bookkeeping.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ActionSample {
    pub action: [f64; 2],
    pub logp: f64,
    pub value: f64,
}

/// Encoder, shared tanh trunk, Gaussian mean head, value head, and a
/// state-independent log-std vector.
pub struct Policy {
    encoder: PolicyEncoder,
    trunk: Mlp,
    mean_head: DenseLayer,
    value_head: DenseLayer,
    log_std: Tensor,
}

/// Tape handles for a recorded [`Policy`].
pub struct PolicyIds {
    pub encoder: PolicyEncoderIds,
    pub trunk: MlpIds,
    pub mean: DenseLayerIds,
    pub value: DenseLayerIds,
    pub log_std: ValueId,
}

impl PolicyIds {
    /// Parameter leaves in [`Policy::params_mut`] order.
    pub fn leaf_ids(&self) -> Vec<ValueId> {
        let mut out = match &self.encoder {
            PolicyEncoderIds::Set(i) => i.leaf_ids(),
            PolicyEncoderIds::Ordered => Vec::new(),
        };
        out.extend(self.trunk.leaf_ids());
        out.extend([self.mean.w, self.mean.b, self.value.w, self.value.b]);
        out.push(self.log_std);
        out
    }
}

impl Policy {
    /// Builds heads on top of the encoder. `hidden` gives the trunk's
    /// layer widths and must be nonempty. The mean head starts scaled
    /// down so initial actions stay near the Gaussian center.
    pub fn new(encoder: PolicyEncoder, hidden: &[usize], rng: &mut ChaCha8Rng) -> Policy {
        assert!(!hidden.is_empty(), "policy trunk needs at least one hidden layer");
        let mut dims = vec![encoder.out_dim()];
        dims.extend_from_slice(hidden);
        let trunk = Mlp::xavier(&dims, rng);
        let last = *hidden.last().expect("nonempty");
        let mut mean_head = DenseLayer::xavier(last, ACTION_DIM, rng);
        for v in mean_head.w.values_mut() {
            *v *= 0.01;
        }
        let value_head = DenseLayer::xavier(last, 1, rng);
        Policy {
            encoder,
            trunk,
            mean_head,
            value_head,
            log_std: Tensor::vector(vec![LOG_STD_INIT; ACTION_DIM]).expect("finite"),
        }
    }

    pub fn encoder(&self) -> &PolicyEncoder {
        &self.encoder
    }

    pub fn log_std(&self) -> &[f64] {
        self.log_std.values()
    }

    /// Shared feature pass: encoder, trunk, tanh.
    fn features(&self, obs: &Observation) -> Result<Vec<f64>, PpoError> {
        let enc = self.encoder.encode(obs)?;
        let mut f = self.trunk.eval(&enc);
        for v in f.iter_mut() {
            *v = v.tanh();
        }
        Ok(f)
    }

    /// Action-distribution parameters and value estimate for one
    /// observation: `(mean, log_std, value)`.
    pub fn dist(&self, obs: &Observation) -> Result<([f64; 2], [f64; 2], f64), PpoError> {
        let f = self.features(obs)?;
        let mean = self.mean_head.eval(&f);
        let value = self.value_head.eval(&f);
        let ls = self.log_std.values();
        Ok(([mean[0], mean[1]], [ls[0], ls[1]], value[0]))
    }

    pub fn value(&self, obs: &Observation) -> Result<f64, PpoError> {
        let f = self.features(obs)?;
        Ok(self.value_head.eval(&f)[0])
    }

    /// Samples an action (or takes the mean when `deterministic`), with
    /// its log-probability under the current parameters and the value
    /// estimate of the observation.
    pub fn act(
        &self,
        obs: &Observation,
        rng: &mut ChaCha8Rng,
        deterministic: bool,
    ) -> Result<ActionSample, PpoError> {
        let (mean, log_std, value) = self.dist(obs)?;
        let action = if deterministic {
            mean
        } else {
            let n0: f64 = rng.sample(StandardNormal);
            let n1: f64 = rng.sample(StandardNormal);
            [
                mean[0] + log_std[0].exp() * n0,
                mean[1] + log_std[1].exp() * n1,
            ]
        };
        Ok(ActionSample {
            action,
            logp: gaussian_logp(&mean, &log_std, &action),
            value,
        })
    }

    /// Records all parameters as tape leaves.
    pub fn record(&self, tape: &mut Tape) -> PolicyIds {
        PolicyIds {
            encoder: self.encoder.record(tape),
            trunk: self.trunk.record(tape),
            mean: self.mean_head.record(tape),
            value: self.value_head.record(tape),
            log_std: tape.leaf(&self.log_std),
        }
    }

    /// Tape forward pass for one observation: `(mean, value)` nodes.
    /// Matches [`Policy::dist`] bit for bit at equal parameters.
    pub fn forward(
        &self,
        tape: &mut Tape,
        ids: &PolicyIds,
        obs: &Observation,
    ) -> Result<(ValueId, ValueId), PpoError> {
        let enc = self.encoder.forward(tape, &ids.encoder, obs)?;
        let t = self.trunk.forward(tape, &ids.trunk, enc)?;
        let f = tape.tanh(t);
        let mean = tape.affine(ids.mean.w, ids.mean.b, f)?;
        let v = tape.affine(ids.value.w, ids.value.b, f)?;
        let value = tape.pick(v, 0)?;
        Ok((mean, value))
    }

    /// Parameter tensors in a stable order: encoder, trunk, mean head,
    /// value head, log-std. Matches [`Policy::param_names`].
    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = self.encoder.params_mut();
        out.extend(self.trunk.params_mut());
        out.push(&mut self.mean_head.w);
        out.push(&mut self.mean_head.b);
        out.push(&mut self.value_head.w);
        out.push(&mut self.value_head.b);
        out.push(&mut self.log_std);
        out
    }

    pub fn named_params(&self) -> Vec<(String, &Tensor)> {
        let mut out = self.encoder.named_params("enc");
        out.extend(self.trunk.named_params("trunk"));
        out.push(("mean.w".into(), &self.mean_head.w));
        out.push(("mean.b".into(), &self.mean_head.b));
        out.push(("value.w".into(), &self.value_head.w));
        out.push(("value.b".into(), &self.value_head.b));
        out.push(("log_std".into(), &self.log_std));
        out
    }

    pub fn param_names(&self) -> Vec<String> {
        self.named_params().into_iter().map(|(n, _)| n).collect()
    }

    /// Copies of all parameter tensors, for rollback.
    pub fn snapshot(&self) -> Vec<Tensor> {
        self.named_params().into_iter().map(|(_, t)| t.clone()).collect()
    }

    pub fn restore(&mut self, snapshot: &[Tensor]) {
        let mut params = self.params_mut();
        assert_eq!(params.len(), snapshot.len(), "snapshot from a different policy");
        for (p, s) in params.iter_mut().zip(snapshot) {
            assert_eq!(p.shape(), s.shape(), "snapshot from a different policy");
            **p = s.clone();
        }
    }

    /// Projects the log-std parameters back into their legal range. Run
    /// after each optimizer step; projecting values (rather than clamping
    /// on the tape) keeps the gradient alive at the boundary.
    pub fn clamp_log_std(&mut self) {
        for v in self.log_std.values_mut() {
            *v = v.clamp(LOG_STD_MIN, LOG_STD_MAX);
        }
    }

    /// Writes all parameters as a plain-text checkpoint.
    pub fn save(&self, path: &std::path::Path) -> Result<(), PpoError> {
        Ok(crate::diffcore::save_checkpoint(path, &self.named_params())?)
    }

    /// Restores parameters from a checkpoint written by [`Policy::save`].
    /// The checkpoint must cover exactly this architecture; a missing or
    /// misshapen tensor fails with its parameter name.
    pub fn load(&mut self, path: &std::path::Path) -> Result<(), PpoError> {
        let names = self.param_names();
        let mut targets: Vec<(String, &mut crate::diffcore::Tensor)> =
            names.into_iter().zip(self.params_mut()).collect();
        Ok(crate::diffcore::load_into(path, &mut targets)?)
    }

    /// [`Policy::load`] from checkpoint text already in memory, for
    /// embedded or downloaded checkpoints with no filesystem behind them.
    pub fn load_str(&mut self, text: &str) -> Result<(), PpoError> {
        let names = self.param_names();
        let mut targets: Vec<(String, &mut crate::diffcore::Tensor)> =
            names.into_iter().zip(self.params_mut()).collect();
        Ok(crate::diffcore::load_into_str(text, "<embedded>", &mut targets)?)
    }
}

/// Builds a policy for an environment's observation spec. Set encoders
/// get one per-class module each; the ordered baseline reads the padded
/// flat view, sized by each class's `max_slots`.
pub fn build_policy(
    spec: &ObsSpec,
    kind: EncoderKind,
    k: usize,
    enc_hidden: &[usize],
    trunk_hidden: &[usize],
    rng: &mut ChaCha8Rng,
) -> Policy {
    let encoder = match kind {
        EncoderKind::Attention => PolicyEncoder::Set(MulticlassEncoder::new(
            spec.classes
                .iter()
                .map(|c| {
                    let enc = AttentionParams::xavier(c.dim, enc_hidden, k, rng);
                    (c.name.clone(), SetEncoder::Attention(enc))
                })
                .collect(),
            spec.d_ego,
        )),
        EncoderKind::DeepSets => PolicyEncoder::Set(MulticlassEncoder::new(
            spec.classes
                .iter()
                .map(|c| {
                    let enc = DeepSetsParams::xavier(c.dim, enc_hidden, k, k, rng);
                    (c.name.clone(), SetEncoder::DeepSets(enc))
                })
                .collect(),
            spec.d_ego,
        )),
        EncoderKind::Ordered => PolicyEncoder::Ordered {
            in_dim: spec.flat_len(),
        },
    };
    Policy::new(encoder, trunk_hidden, rng)
}

/// Finite-difference probe over every policy parameter: a smooth scalar
/// readout (value estimate plus the log-density of a fixed action) that
/// reaches the encoder, trunk, both heads, and the log-std.
pub struct PolicyProbeModel<'a> {
    policy: &'a mut Policy,
    obs: Observation,
    action: [f64; 2],
    offsets: Vec<usize>,
    total: usize,
}

impl<'a> PolicyProbeModel<'a> {
    pub fn new(policy: &'a mut Policy, obs: Observation, action: [f64; 2]) -> PolicyProbeModel<'a> {
        let mut offsets = Vec::new();
        let mut total = 0;
        for (_, t) in policy.named_params() {
            offsets.push(total);
            total += t.len();
        }
        PolicyProbeModel {
            policy,
            obs,
            action,
            offsets,
            total,
        }
    }

    fn locate(&self, i: usize) -> (usize, usize) {
        let p = self.offsets.partition_point(|&o| o <= i) - 1;
        (p, i - self.offsets[p])
    }

    /// Readout and parameter leaves on a fresh tape.
    fn build(&self, tape: &mut Tape) -> Result<(ValueId, Vec<ValueId>), PpoError> {
        let ids = self.policy.record(tape);
        let (mean, value) = self.policy.forward(tape, &ids, &self.obs)?;
        let a = tape.leaf_slice(&self.action);
        let diff = tape.sub(a, mean)?;
        let sigma = tape.exp(ids.log_std);
        let z = tape.div(diff, sigma)?;
        let zsq = tape.mul(z, z)?;
        let s = tape.sum_all(zsq);
        let half = tape.scale(s, -0.5);
        let sum_ls = tape.sum_all(ids.log_std);
        let t4 = tape.sub(half, sum_ls)?;
        let logp = tape.add_const(t4, -(2.0 * PI).ln());
        let out = tape.add(value, logp)?;
        Ok((out, ids.leaf_ids()))
    }
}

impl GradModel for PolicyProbeModel<'_> {
    fn dim(&self) -> usize {
        self.total
    }

    fn get_param(&self, i: usize) -> f64 {
        let (p, off) = self.locate(i);
        self.policy.named_params()[p].1.values()[off]
    }

    fn set_param(&mut self, i: usize, v: f64) {
        let (p, off) = self.locate(i);
        self.policy.params_mut()[p].values_mut()[off] = v;
    }

    fn loss(&mut self) -> f64 {
        let mut tape = Tape::new();
        let (out, _) = self.build(&mut tape).expect("probe model forward");
        tape.val_scalar(out)
    }

    fn grad(&mut self) -> Vec<f64> {
        let mut tape = Tape::new();
        let (out, leaves) = self.build(&mut tape).expect("probe model forward");
        tape.backward(out).expect("probe model backward");
        let mut g = Vec::with_capacity(self.total);
        for id in leaves {
            g.extend_from_slice(tape.grad(id));
        }
        g
    }
}

/// Convenience wrapper for gradient checks on a full policy.
pub fn probe_gradient_error(
    policy: &mut Policy,
    obs: Observation,
    action: [f64; 2],
    h: f64,
) -> Result<f64, PpoError> {
    let mut model = PolicyProbeModel::new(policy, obs, action);
    Ok(finite_difference_check(&mut model, h)?)
}
