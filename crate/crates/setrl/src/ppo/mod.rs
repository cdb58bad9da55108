//! Clipped-surrogate PPO over any encoder + environment pairing.
//!
//! The trainer collects on-policy rollouts from persistent worker
//! environments, computes generalized advantage estimates, and applies
//! shuffled minibatch Adam steps on the clipped objective. Every source of
//! randomness is seeded per stream, so a single-worker run is a pure
//! function of `(seed, config)`.

mod evaluate;
mod gae;
mod loss;
mod oracle;
mod policy;
mod rollout;
mod trainer;

pub use evaluate::{evaluate_policy, EvalStats};
pub use gae::compute_gae;
pub use loss::{minibatch_loss, LossStats};
pub use oracle::{greedy_convoy_action, greedy_scavenger_action, scripted_mean_return};
pub use policy::{
    build_policy, gaussian_entropy, gaussian_logp, probe_gradient_error, ActionSample,
    EncoderKind, Policy, PolicyEncoder, PolicyIds, PolicyProbeModel, ACTION_DIM,
};
pub use rollout::{RolloutBatch, RolloutCollector, Transition};
pub use trainer::Trainer;

use crate::diffcore::DiffError;
use crate::encoder::EncoderError;
use crate::envs::EnvError;

#[derive(Debug, thiserror::Error)]
pub enum PpoError {
    #[error("invalid ppo config: {0}")]
    Config(String),
    #[error("length mismatch: {0}")]
    LengthMismatch(String),
    #[error("empty batch")]
    EmptyBatch,
    #[error(
        "likelihood ratio for transition {index} is not finite \
         (new log-prob {new_logp}, behavior log-prob {old_logp})"
    )]
    NonFiniteRatio {
        index: usize,
        new_logp: f64,
        old_logp: f64,
    },
    #[error("loss became non-finite at iteration {iteration}; parameters rolled back")]
    NonFiniteLoss { iteration: u32 },
    #[error("worker {worker}: {source}")]
    Worker { worker: usize, source: EnvError },
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error(transparent)]
    Diff(#[from] DiffError),
}

/// PPO hyperparameters. Defaults are standard practice for small
/// continuous-control tasks.
#[derive(Clone, Debug, PartialEq)]
pub struct PpoConfig {
    /// Discount factor.
    pub gamma: f64,
    /// GAE decay.
    pub lam: f64,
    /// Surrogate clip width.
    pub clip_eps: f64,
    pub lr: f64,
    /// Transitions collected per worker per iteration.
    pub rollout_steps: usize,
    /// Full passes over the batch per iteration.
    pub update_epochs: usize,
    pub minibatch: usize,
    pub value_coef: f64,
    pub entropy_coef: f64,
    /// Total training iterations (one rollout + update cycle each).
    pub iters: u32,
    /// Remaining passes stop once the approximate KL exceeds this.
    pub kl_stop: f64,
    /// Global gradient-norm ceiling applied before each Adam step.
    pub max_grad_norm: f64,
}

impl Default for PpoConfig {
    fn default() -> PpoConfig {
        PpoConfig {
            gamma: 0.99,
            lam: 0.95,
            clip_eps: 0.2,
            lr: 3e-4,
            rollout_steps: 2048,
            update_epochs: 10,
            minibatch: 256,
            value_coef: 0.5,
            entropy_coef: 0.01,
            iters: 500,
            kl_stop: 0.02,
            max_grad_norm: 0.5,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<(), PpoError> {
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(PpoError::Config(format!("gamma must be in [0,1], got {}", self.gamma)));
        }
        if !(0.0..=1.0).contains(&self.lam) {
            return Err(PpoError::Config(format!("lam must be in [0,1], got {}", self.lam)));
        }
        if !(self.clip_eps > 0.0) {
            return Err(PpoError::Config(format!(
                "clip_eps must be positive, got {}",
                self.clip_eps
            )));
        }
        if !(self.lr >= 0.0) {
            return Err(PpoError::Config(format!("lr must be non-negative, got {}", self.lr)));
        }
        if self.rollout_steps == 0 {
            return Err(PpoError::Config("rollout_steps must be at least 1".into()));
        }
        if self.update_epochs == 0 {
            return Err(PpoError::Config("update_epochs must be at least 1".into()));
        }
        if self.minibatch == 0 {
            return Err(PpoError::Config("minibatch must be at least 1".into()));
        }
        if self.iters == 0 {
            return Err(PpoError::Config("iters must be at least 1".into()));
        }
        if !(self.kl_stop > 0.0) {
            return Err(PpoError::Config(format!(
                "kl_stop must be positive, got {}",
                self.kl_stop
            )));
        }
        if !(self.max_grad_norm > 0.0) {
            return Err(PpoError::Config(format!(
                "max_grad_norm must be positive, got {}",
                self.max_grad_norm
            )));
        }
        Ok(())
    }
}
