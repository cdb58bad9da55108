//! Policy evaluation over freshly seeded episodes.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::policy::Policy;
use super::PpoError;
use crate::envs::Env;
use crate::rng::{derive_seed, streams};

/// Aggregates over the evaluated episodes.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalStats {
    pub episodes: usize,
    pub mean_return: f64,
    pub std_return: f64,
    pub mean_length: f64,
    /// Episode count per termination cause name.
    pub causes: BTreeMap<String, usize>,
}

impl EvalStats {
    /// Fraction of episodes that ended with the named cause.
    pub fn cause_fraction(&self, cause: &str) -> f64 {
        *self.causes.get(cause).unwrap_or(&0) as f64 / self.episodes as f64
    }
}

/// Runs `episodes` complete episodes and reports return statistics.
///
/// Episode e resets the environment on a seed derived from (seed, e), and
/// draws actions from its own stream, so results depend only on the
/// arguments. With `deterministic` set the policy's mean action is used
/// and the action stream goes untouched.
pub fn evaluate_policy(
    policy: &Policy,
    env: &mut dyn Env,
    episodes: usize,
    seed: u64,
    deterministic: bool,
) -> Result<EvalStats, PpoError> {
    if episodes == 0 {
        return Err(PpoError::Config("evaluation needs at least one episode".into()));
    }
    let env_base = derive_seed(seed, streams::EVAL);
    let act_base = derive_seed(seed, streams::ACTIONS);
    let mut returns = Vec::with_capacity(episodes);
    let mut lengths = Vec::with_capacity(episodes);
    let mut causes: BTreeMap<String, usize> = BTreeMap::new();
    for e in 0..episodes {
        let mut obs = env.reset(derive_seed(env_base, e as u64));
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(act_base, e as u64));
        let mut total = 0.0;
        let mut len = 0u32;
        loop {
            let sample = policy.act(&obs, &mut rng, deterministic)?;
            let step = env.step(sample.action)?;
            total += step.reward;
            len += 1;
            if step.done {
                if let Some(cause) = step.info.cause {
                    *causes.entry(cause.as_str().to_string()).or_insert(0) += 1;
                }
                break;
            }
            obs = step.obs;
        }
        returns.push(total);
        lengths.push(len);
    }
    let n = episodes as f64;
    let mean_return = returns.iter().sum::<f64>() / n;
    let var = returns
        .iter()
        .map(|r| (r - mean_return) * (r - mean_return))
        .sum::<f64>()
        / n;
    Ok(EvalStats {
        episodes,
        mean_return,
        std_return: var.sqrt(),
        mean_length: lengths.iter().map(|l| f64::from(*l)).sum::<f64>() / n,
        causes,
    })
}
