//! Reinforcement learning on exchangeable object sets.
//!
//! Many control problems have states made of interchangeable parts: food
//! particles to collect, attackers to intercept, vehicles to track. The order
//! in which those parts are listed carries no information, yet a policy fed an
//! ordered vector has to relearn the same behavior for every ordering. This
//! crate provides encoders that map an unordered object set to a fixed-width
//! feature vector that is invariant under permutations of the set, a small
//! reverse-mode autodiff engine to train them, a PPO trainer, three benchmark
//! environments built around exchangeable objects, and the combinatorial
//! accounting that quantifies how much smaller the invariant input space is.
//!
//! The main pieces:
//!
//! - [`diffcore`]: dense `f64` tensors, a tape for reverse-mode
//!   differentiation, Adam, checkpoint I/O, and a finite-difference harness.
//! - [`encoder`]: the softmax attention set encoder, its sum-decomposition
//!   form, a Deep-Sets-style encoder, the ordered (padded concatenation)
//!   baseline, and per-class composition with an ego context vector.
//! - [`envs`]: scavenger (with and without poison) and convoy-protection
//!   environments with deterministic seeded episodes.
//! - [`ppo`]: Gaussian policies over any encoder, rollout collection, GAE,
//!   the clipped surrogate loss, and a training loop.
//! - [`analysis`]: exact ordered-vs-invariant state-space sizes, training
//!   metrics CSV, and run summaries.
//! - [`verify`]: runnable property suites (invariance, decomposition
//!   equivalence, gradient checks, space-size cross-checks).

pub mod analysis;
pub mod diffcore;
pub mod encoder;
pub mod envs;
pub mod ppo;
pub mod rng;
pub mod verify;
