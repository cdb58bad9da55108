//! The iteration loop: collect, shuffle, update, project, report.

use std::collections::VecDeque;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;

use super::loss::minibatch_loss;
use super::policy::Policy;
use super::rollout::RolloutCollector;
use super::{PpoConfig, PpoError};
use crate::analysis::MetricRecord;
use crate::diffcore::{clip_global_norm, AdamState, Tape};
use crate::rng::{stream_rng, streams};

/// How many recent episode returns feed the running-average diagnostics.
const RETURN_WINDOW: usize = 100;

/// Owns the policy, its optimizer state, and the rollout workers for one
/// training run. Single-threaded; exactly reproducible from (seed,
/// config, initial policy).
pub struct Trainer {
    policy: Policy,
    collector: RolloutCollector,
    cfg: PpoConfig,
    opt: AdamState,
    names: Vec<String>,
    shuffle_rng: ChaCha8Rng,
    run: String,
    seed: u64,
    iteration: u32,
    env_steps: u64,
    recent_returns: VecDeque<f64>,
}

impl Trainer {
    pub fn new(
        policy: Policy,
        collector: RolloutCollector,
        cfg: PpoConfig,
        run: impl Into<String>,
        seed: u64,
    ) -> Result<Trainer, PpoError> {
        cfg.validate()?;
        let names = policy.param_names();
        let opt = AdamState::new(cfg.lr);
        Ok(Trainer {
            policy,
            collector,
            opt,
            names,
            shuffle_rng: stream_rng(seed, streams::SHUFFLE),
            run: run.into(),
            seed,
            cfg,
            iteration: 0,
            env_steps: 0,
            recent_returns: VecDeque::with_capacity(RETURN_WINDOW),
        })
    }

    pub fn policy(&self) -> &Policy {
        &self.policy
    }

    pub fn policy_mut(&mut self) -> &mut Policy {
        &mut self.policy
    }

    pub fn into_policy(self) -> Policy {
        self.policy
    }

    pub fn cfg(&self) -> &PpoConfig {
        &self.cfg
    }

    pub fn iteration(&self) -> u32 {
        self.iteration
    }

    pub fn env_steps(&self) -> u64 {
        self.env_steps
    }

    /// Mean return over the most recent completed episodes (up to 100),
    /// spanning iteration boundaries. NaN before any episode finishes.
    pub fn recent_mean_return(&self) -> f64 {
        if self.recent_returns.is_empty() {
            f64::NAN
        } else {
            self.recent_returns.iter().sum::<f64>() / self.recent_returns.len() as f64
        }
    }

    /// One collect-and-update cycle. Runs `update_epochs` shuffled
    /// minibatch passes, stopping the remaining passes early once a
    /// minibatch's approximate KL exceeds the configured limit (that
    /// minibatch is not applied). A non-finite loss or ratio rolls the
    /// policy back to the parameters it held when this iteration began
    /// and aborts with the iteration number.
    pub fn train_iteration(&mut self) -> Result<MetricRecord, PpoError> {
        let start = Instant::now();
        let batch = self.collector.collect(
            &self.policy,
            self.cfg.rollout_steps,
            self.cfg.gamma,
            self.cfg.lam,
        )?;
        self.env_steps += batch.len() as u64;

        let last_good = self.policy.snapshot();
        let mut agg = StatAgg::default();
        let mut order: Vec<usize> = (0..batch.len()).collect();

        'epochs: for _ in 0..self.cfg.update_epochs {
            order.shuffle(&mut self.shuffle_rng);
            for chunk in order.chunks(self.cfg.minibatch) {
                let mut tape = Tape::new();
                let ids = self.policy.record(&mut tape);
                let built = minibatch_loss(
                    &mut tape,
                    &self.policy,
                    &ids,
                    &batch,
                    chunk,
                    self.cfg.clip_eps,
                    self.cfg.value_coef,
                    self.cfg.entropy_coef,
                );
                let (loss, stats) = match built {
                    Ok(ok) => ok,
                    Err(e) => {
                        self.policy.restore(&last_good);
                        return Err(e);
                    }
                };
                if !stats.total.is_finite() {
                    self.policy.restore(&last_good);
                    return Err(PpoError::NonFiniteLoss {
                        iteration: self.iteration,
                    });
                }
                if stats.approx_kl > self.cfg.kl_stop {
                    break 'epochs;
                }
                if let Err(e) = tape.backward(loss) {
                    self.policy.restore(&last_good);
                    return Err(e.into());
                }
                let leaves = ids.leaf_ids();
                {
                    let mut params = self.policy.params_mut();
                    for (p, id) in params.iter_mut().zip(&leaves) {
                        p.set_grad(tape.grad(*id));
                    }
                    clip_global_norm(&mut params, self.cfg.max_grad_norm);
                    if let Err(e) = self.opt.step(&self.names, &mut params) {
                        drop(params);
                        self.policy.restore(&last_good);
                        return Err(e.into());
                    }
                }
                self.policy.clamp_log_std();
                agg.add(&stats);
            }
        }

        for &r in &batch.episode_returns {
            if self.recent_returns.len() == RETURN_WINDOW {
                self.recent_returns.pop_front();
            }
            self.recent_returns.push_back(r);
        }
        self.iteration += 1;
        Ok(self.record(&batch.episode_returns, &batch.episode_lengths, &agg, start))
    }

    fn record(
        &self,
        returns: &[f64],
        lengths: &[u32],
        agg: &StatAgg,
        start: Instant,
    ) -> MetricRecord {
        let n = returns.len() as f64;
        let (mean_return, std_return, mean_ep_len) = if returns.is_empty() {
            (f64::NAN, f64::NAN, f64::NAN)
        } else {
            let mean = returns.iter().sum::<f64>() / n;
            let var = returns.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / n;
            let len = lengths.iter().map(|l| f64::from(*l)).sum::<f64>() / n;
            (mean, var.sqrt(), len)
        };
        let (policy_loss, value_loss, entropy, approx_kl, clip_fraction) = agg.means();
        MetricRecord {
            run: self.run.clone(),
            seed: self.seed,
            iteration: self.iteration,
            env_steps: self.env_steps,
            mean_return,
            std_return,
            mean_ep_len,
            policy_loss,
            value_loss,
            entropy,
            approx_kl,
            clip_fraction,
            wall_secs: start.elapsed().as_secs_f64(),
        }
    }
}

/// Averages loss diagnostics over the minibatch updates actually applied.
#[derive(Default)]
struct StatAgg {
    n: usize,
    policy_loss: f64,
    value_loss: f64,
    entropy: f64,
    approx_kl: f64,
    clip_fraction: f64,
}

impl StatAgg {
    fn add(&mut self, s: &super::loss::LossStats) {
        self.n += 1;
        self.policy_loss += s.policy_loss;
        self.value_loss += s.value_loss;
        self.entropy += s.entropy;
        self.approx_kl += s.approx_kl;
        self.clip_fraction += s.clip_fraction;
    }

    fn means(&self) -> (f64, f64, f64, f64, f64) {
        if self.n == 0 {
            return (f64::NAN, f64::NAN, f64::NAN, f64::NAN, f64::NAN);
        }
        let n = self.n as f64;
        (
            self.policy_loss / n,
            self.value_loss / n,
            self.entropy / n,
            self.approx_kl / n,
            self.clip_fraction / n,
        )
    }
}
