//! Clipped-surrogate loss for one minibatch, built on the tape.
//!
//! The per-transition log-probability is assembled in the same operation
//! order as the value-mode density helper, so at unchanged parameters
//! the likelihood ratio is exactly 1 and the surrogate reduces to the
//! negated mean advantage.

use std::f64::consts::PI;

use super::policy::{Policy, PolicyIds};
use super::rollout::RolloutBatch;
use super::PpoError;
use crate::diffcore::{Tape, ValueId};

/// Value-mode diagnostics read off the recorded loss.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossStats {
    pub total: f64,
    /// Negated mean clipped surrogate, before coefficients.
    pub policy_loss: f64,
    /// Mean squared value error, before the value coefficient.
    pub value_loss: f64,
    pub entropy: f64,
    /// Mean of (behavior logp − new logp) over the minibatch.
    pub approx_kl: f64,
    /// Fraction of transitions with |ratio − 1| > ε.
    pub clip_fraction: f64,
}

/// Records the PPO loss for the transitions at `indices` into `batch`.
///
/// Returns the scalar loss node (differentiable with respect to every
/// leaf in `ids`) together with value-mode stats. A non-finite ratio
/// aborts with the offending batch index and both log-probabilities.
pub fn minibatch_loss(
    tape: &mut Tape,
    policy: &Policy,
    ids: &PolicyIds,
    batch: &RolloutBatch,
    indices: &[usize],
    clip_eps: f64,
    value_coef: f64,
    entropy_coef: f64,
) -> Result<(ValueId, LossStats), PpoError> {
    if indices.is_empty() {
        return Err(PpoError::EmptyBatch);
    }

    // Shared nodes: every transition divides by the same stds and
    // subtracts the same log-std sum.
    let sigma = tape.exp(ids.log_std);
    let sum_ls = tape.sum_all(ids.log_std);

    let mut surrogates = Vec::with_capacity(indices.len());
    let mut value_sqs = Vec::with_capacity(indices.len());
    let mut kl_sum = 0.0;
    let mut clipped = 0usize;

    for &i in indices {
        let t = &batch.transitions[i];
        let (mean, value) = policy.forward(tape, ids, &t.obs)?;

        // logp = -0.5*(z0^2+z1^2) - (ls0+ls1) - ln(2π), z = (a-μ)/σ.
        let a = tape.leaf_slice(&t.action);
        let diff = tape.sub(a, mean)?;
        let z = tape.div(diff, sigma)?;
        let zsq = tape.mul(z, z)?;
        let s = tape.sum_all(zsq);
        let half = tape.scale(s, -0.5);
        let centered = tape.sub(half, sum_ls)?;
        let logp = tape.add_const(centered, -(2.0 * PI).ln());

        let log_ratio = tape.add_const(logp, -t.logp);
        let ratio = tape.exp(log_ratio);
        let ratio_val = tape.val_scalar(ratio);
        if !ratio_val.is_finite() {
            return Err(PpoError::NonFiniteRatio {
                index: i,
                new_logp: tape.val_scalar(logp),
                old_logp: t.logp,
            });
        }
        if (ratio_val - 1.0).abs() > clip_eps {
            clipped += 1;
        }
        kl_sum += t.logp - tape.val_scalar(logp);

        let adv = batch.advantages[i];
        let unclipped = tape.scale(ratio, adv);
        let bounded = tape.clamp(ratio, 1.0 - clip_eps, 1.0 + clip_eps);
        let bounded_adv = tape.scale(bounded, adv);
        let surrogate = tape.min_pair(unclipped, bounded_adv)?;
        surrogates.push(surrogate);

        let err = tape.add_const(value, -batch.returns[i]);
        let sq = tape.mul(err, err)?;
        value_sqs.push(sq);
    }

    let surr_vec = tape.concat(&surrogates)?;
    let surr_mean = tape.mean_all(surr_vec);
    let policy_term = tape.scale(surr_mean, -1.0);

    let sq_vec = tape.concat(&value_sqs)?;
    let value_mse = tape.mean_all(sq_vec);
    let value_term = tape.scale(value_mse, value_coef);

    let entropy = tape.add_const(sum_ls, 1.0 + (2.0 * PI).ln());
    let entropy_term = tape.scale(entropy, -entropy_coef);

    let partial = tape.add(policy_term, value_term)?;
    let total = tape.add(partial, entropy_term)?;

    let total_val = tape.val_scalar(total);
    let stats = LossStats {
        total: total_val,
        policy_loss: tape.val_scalar(policy_term),
        value_loss: tape.val_scalar(value_mse),
        entropy: tape.val_scalar(entropy),
        approx_kl: kl_sum / indices.len() as f64,
        clip_fraction: clipped as f64 / indices.len() as f64,
    };
    Ok((total, stats))
}
