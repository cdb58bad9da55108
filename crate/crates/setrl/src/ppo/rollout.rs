//! Rollout collection under a frozen policy snapshot.
//!
//! Each worker owns one environment instance plus two private seed
//! streams derived from the run seed and the worker index: one feeds
//! episode reset seeds, the other drives action sampling. Workers never
//! share mutable state, so a single-worker collection is bit-for-bit
//! reproducible and multi-worker batches are worker-order concatenations.

use std::mem;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::gae::compute_gae;
use super::policy::Policy;
use super::PpoError;
use crate::envs::{Env, Observation, ObsSpec};
use crate::rng::{derive_seed, streams};

/// One environment step as seen by the behavior policy.
#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    /// Observation the action was chosen from.
    pub obs: Observation,
    pub action: [f64; 2],
    pub reward: f64,
    pub done: bool,
    /// Log-probability of `action` under the behavior policy.
    pub logp: f64,
    /// Value estimate of `obs` under the behavior policy.
    pub value: f64,
}

/// A batch of transitions with advantage estimates.
///
/// Transitions are grouped per worker in collection order; `done` flags
/// mark episode boundaries. Advantages are normalized across the whole
/// batch; `returns` keep the unnormalized advantage plus value targets.
#[derive(Clone, Debug, PartialEq)]
pub struct RolloutBatch {
    pub transitions: Vec<Transition>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
    /// Total return of each episode completed inside this batch.
    pub episode_returns: Vec<f64>,
    pub episode_lengths: Vec<u32>,
}

impl RolloutBatch {
    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }
}

struct Worker {
    env: Box<dyn Env>,
    obs: Observation,
    env_seed_base: u64,
    episode_counter: u64,
    action_rng: ChaCha8Rng,
    ep_return: f64,
    ep_len: u32,
}

/// Owns the worker environments between iterations so episodes carry
/// across batch boundaries instead of restarting every collection.
pub struct RolloutCollector {
    workers: Vec<Worker>,
}

impl RolloutCollector {
    /// Takes one environment per worker. All must expose the same
    /// observation spec. Each is reset immediately on its own stream.
    pub fn new(envs: Vec<Box<dyn Env>>, seed: u64) -> Result<RolloutCollector, PpoError> {
        if envs.is_empty() {
            return Err(PpoError::Config("rollout needs at least one worker".into()));
        }
        let spec0 = envs[0].spec().clone();
        let env_stream = derive_seed(seed, streams::ENV);
        let action_stream = derive_seed(seed, streams::ACTIONS);
        let workers = envs
            .into_iter()
            .enumerate()
            .map(|(w, mut env)| {
                if *env.spec() != spec0 {
                    return Err(PpoError::Config(format!(
                        "worker {w} environment has a different observation spec"
                    )));
                }
                let env_seed_base = derive_seed(env_stream, w as u64);
                let obs = env.reset(derive_seed(env_seed_base, 0));
                Ok(Worker {
                    env,
                    obs,
                    env_seed_base,
                    episode_counter: 0,
                    action_rng: ChaCha8Rng::seed_from_u64(derive_seed(action_stream, w as u64)),
                    ep_return: 0.0,
                    ep_len: 0,
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(RolloutCollector { workers })
    }

    pub fn num_workers(&self) -> usize {
        self.workers.len()
    }

    pub fn spec(&self) -> &ObsSpec {
        self.workers[0].env.spec()
    }

    /// Gathers exactly `steps_per_worker` transitions from every worker,
    /// then computes GAE per worker (bootstrapping unfinished episodes
    /// with the value of the observation left on deck) and normalizes
    /// advantages across the batch.
    pub fn collect(
        &mut self,
        policy: &Policy,
        steps_per_worker: usize,
        gamma: f64,
        lam: f64,
    ) -> Result<RolloutBatch, PpoError> {
        if steps_per_worker == 0 {
            return Err(PpoError::Config("rollout length must be at least 1".into()));
        }
        let mut transitions = Vec::with_capacity(steps_per_worker * self.workers.len());
        let mut advantages = Vec::with_capacity(transitions.capacity());
        let mut returns = Vec::with_capacity(transitions.capacity());
        let mut episode_returns = Vec::new();
        let mut episode_lengths = Vec::new();

        for (w, worker) in self.workers.iter_mut().enumerate() {
            let start = transitions.len();
            for _ in 0..steps_per_worker {
                let sample = policy.act(&worker.obs, &mut worker.action_rng, false)?;
                let step = worker
                    .env
                    .step(sample.action)
                    .map_err(|source| PpoError::Worker { worker: w, source })?;
                let done = step.done;
                let prev = mem::replace(&mut worker.obs, step.obs);
                transitions.push(Transition {
                    obs: prev,
                    action: sample.action,
                    reward: step.reward,
                    done,
                    logp: sample.logp,
                    value: sample.value,
                });
                worker.ep_return += step.reward;
                worker.ep_len += 1;
                if done {
                    episode_returns.push(worker.ep_return);
                    episode_lengths.push(worker.ep_len);
                    worker.ep_return = 0.0;
                    worker.ep_len = 0;
                    worker.episode_counter += 1;
                    worker.obs = worker
                        .env
                        .reset(derive_seed(worker.env_seed_base, worker.episode_counter));
                }
            }
            let slice = &transitions[start..];
            let rewards: Vec<f64> = slice.iter().map(|t| t.reward).collect();
            let values: Vec<f64> = slice.iter().map(|t| t.value).collect();
            let dones: Vec<bool> = slice.iter().map(|t| t.done).collect();
            // Ignored by the recursion when the last transition is done.
            let bootstrap = policy.value(&worker.obs)?;
            let (adv, ret) = compute_gae(&rewards, &values, &dones, bootstrap, gamma, lam)?;
            advantages.extend(adv);
            returns.extend(ret);
        }

        normalize(&mut advantages);
        Ok(RolloutBatch {
            transitions,
            advantages,
            returns,
            episode_returns,
            episode_lengths,
        })
    }
}

/// Centers to zero mean; rescales to unit variance unless the batch
/// variance is too small to divide through safely.
fn normalize(advantages: &mut [f64]) {
    let n = advantages.len() as f64;
    let mean = advantages.iter().sum::<f64>() / n;
    let var = advantages.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n;
    if var < 1e-8 {
        for a in advantages.iter_mut() {
            *a -= mean;
        }
    } else {
        let std = var.sqrt();
        for a in advantages.iter_mut() {
            *a = (*a - mean) / std;
        }
    }
}
