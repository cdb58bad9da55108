//! Scripted reference policies.
//!
//! These set the acceptance thresholds for training: a learned policy
//! should approach the return of the matching script, and a fraction of
//! that return makes a sound "has learned something" bar. Both scripts
//! read the class-tagged view and emit an over-long command vector,
//! relying on the environment's speed clip.

use super::PpoError;
use crate::envs::{Env, Observation};
use crate::rng::{derive_seed, streams};

fn toward(rel: &[f64]) -> [f64; 2] {
    let n = (rel[0] * rel[0] + rel[1] * rel[1]).sqrt();
    if n <= 1e-12 {
        [0.0, 0.0]
    } else {
        [rel[0] / n, rel[1] / n]
    }
}

fn nearest<'a>(objects: impl Iterator<Item = &'a Vec<f64>>) -> Option<&'a Vec<f64>> {
    objects.min_by(|a, b| {
        let da = a[0] * a[0] + a[1] * a[1];
        let db = b[0] * b[0] + b[1] * b[1];
        da.partial_cmp(&db).expect("finite distances")
    })
}

/// Heads straight for the nearest food particle, ignoring poison.
pub fn greedy_scavenger_action(obs: &Observation) -> [f64; 2] {
    match obs.set.class("food").and_then(|c| nearest(c.objects.iter())) {
        Some(rel) => toward(rel),
        None => [0.0, 0.0],
    }
}

/// Chases the nearest attacker; with none on the field, shadows the
/// nearest convoy member still in transit.
pub fn greedy_convoy_action(obs: &Observation) -> [f64; 2] {
    if let Some(rel) = obs
        .set
        .class("attacker")
        .and_then(|c| nearest(c.objects.iter()))
    {
        return toward(rel);
    }
    let transit = obs
        .set
        .class("member")
        .map(|c| c.objects.iter().filter(|o| o[2] == 0.0))
        .and_then(nearest);
    match transit {
        Some(rel) => toward(rel),
        None => [0.0, 0.0],
    }
}

/// Mean return of a scripted policy over complete episodes, seeded the
/// same way as policy evaluation.
pub fn scripted_mean_return(
    env: &mut dyn Env,
    script: impl Fn(&Observation) -> [f64; 2],
    episodes: usize,
    seed: u64,
) -> Result<f64, PpoError> {
    if episodes == 0 {
        return Err(PpoError::Config("evaluation needs at least one episode".into()));
    }
    let env_base = derive_seed(seed, streams::EVAL);
    let mut total = 0.0;
    for e in 0..episodes {
        let mut obs = env.reset(derive_seed(env_base, e as u64));
        loop {
            let step = env.step(script(&obs))?;
            total += step.reward;
            if step.done {
                break;
            }
            obs = step.obs;
        }
    }
    Ok(total / episodes as f64)
}
