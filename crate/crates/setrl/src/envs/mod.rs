//! Benchmark environments built around exchangeable objects.
//!
//! Every environment produces observations in two views at once: an
//! [`ObjectSet`] for the invariant encoders and a flat ordered vector for
//! the baseline. Episodes are deterministic functions of `(seed, action
//! sequence)`, bit for bit.

mod convoy;
mod scavenger;

pub use convoy::{ConvoyConfig, ConvoyEnv};
pub use scavenger::{ScavengerConfig, ScavengerEnv};

use crate::encoder::ObjectSet;

#[derive(Debug, thiserror::Error)]
pub enum EnvError {
    #[error("episode is done; reset before stepping")]
    EpisodeDone,
    #[error("action component {0} is not finite")]
    BadAction(f64),
    #[error("invalid environment config: {0}")]
    Config(String),
}

/// Why an episode ended.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TerminationCause {
    /// Scavenger reached a food particle.
    Food,
    /// Scavenger touched a poison particle.
    Poison,
    /// Step limit hit.
    Timeout,
    /// Every convoy member has arrived or been lost.
    Resolved,
}

impl TerminationCause {
    pub fn as_str(self) -> &'static str {
        match self {
            TerminationCause::Food => "food",
            TerminationCause::Poison => "poison",
            TerminationCause::Timeout => "timeout",
            TerminationCause::Resolved => "resolved",
        }
    }
}

impl std::fmt::Display for TerminationCause {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Diagnostic counters for one step.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct StepInfo {
    pub cause: Option<TerminationCause>,
    /// Attackers removed by the defender this step.
    pub blocked: u32,
    /// Convoy members lost this step.
    pub losses: u32,
    /// Convoy members that reached the goal this step.
    pub arrivals: u32,
}

/// Both observation views of one state.
#[derive(Clone, Debug, PartialEq)]
pub struct Observation {
    pub set: ObjectSet,
    pub flat: Vec<f64>,
}

/// Result of one environment step.
#[derive(Clone, Debug)]
pub struct Step {
    pub obs: Observation,
    pub reward: f64,
    pub done: bool,
    pub info: StepInfo,
}

/// Shape of one object class in the observation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClassSpec {
    pub name: String,
    pub dim: usize,
    /// Slot count in the flat view; also the most objects the class holds.
    pub max_slots: usize,
}

/// Shape of an environment's observations.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ObsSpec {
    pub classes: Vec<ClassSpec>,
    pub d_ego: usize,
}

impl ObsSpec {
    /// Length of the flat ordered view.
    pub fn flat_len(&self) -> usize {
        self.classes
            .iter()
            .map(|c| c.dim * c.max_slots)
            .sum::<usize>()
            + self.d_ego
    }
}

/// An episodic environment with a 2-D continuous action interpreted as a
/// velocity command.
pub trait Env {
    fn spec(&self) -> &ObsSpec;
    /// Starts a new episode; deterministic given `seed`.
    fn reset(&mut self, seed: u64) -> Observation;
    fn step(&mut self, action: [f64; 2]) -> Result<Step, EnvError>;
    fn done(&self) -> bool;
}

/// Scales `v` so its norm is at most `cap`.
pub(crate) fn clip_speed(v: [f64; 2], cap: f64) -> [f64; 2] {
    let norm = (v[0] * v[0] + v[1] * v[1]).sqrt();
    if norm > cap {
        let s = cap / norm;
        [v[0] * s, v[1] * s]
    } else {
        v
    }
}

pub(crate) fn check_action(action: [f64; 2]) -> Result<(), EnvError> {
    for a in action {
        if !a.is_finite() {
            return Err(EnvError::BadAction(a));
        }
    }
    Ok(())
}

pub(crate) fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    (dx * dx + dy * dy).sqrt()
}
