//! Headless simulation state behind the browser demo.
//!
//! Everything here is plain Rust so it can be unit-tested natively; the
//! wasm layer only serializes these calls to JSON strings.

use std::collections::BTreeMap;

use serde::Serialize;
use setrl::analysis::{parse_metrics, space_sizes};
use setrl::encoder::{encode_attention, SetEncoder};
use setrl::envs::{Env, Observation, ScavengerConfig, ScavengerEnv};
use setrl::ppo::{build_policy, EncoderKind, Policy, PolicyEncoder};
use setrl::rng::{derive_seed, splitmix64, stream_rng, streams};
use thiserror::Error;

/// Trained policy parameters baked into the binary; regenerate with the
/// command in the crate README.
const POLICY_TEXT: &str = include_str!("../assets/policy.txt");
/// Training curves for the curve panel, one attention and one ordered
/// run on the same task.
const CURVES_TEXT: &str = include_str!("../assets/curves.csv");

/// Architecture of the embedded checkpoint. Must match the training
/// command that produced `assets/policy.txt`.
const POLICY_K: usize = 32;
const POLICY_HIDDEN: [usize; 2] = [32, 32];
const POLICY_TRUNK: [usize; 1] = [32];
const NUM_FOOD: usize = 3;

#[derive(Debug, Error)]
pub enum DemoError {
    #[error("{0}")]
    Setup(String),
    #[error("{0}")]
    Sim(String),
}

/// The environment the embedded policy was trained on.
pub fn demo_env_config() -> ScavengerConfig {
    ScavengerConfig {
        num_food: NUM_FOOD,
        include_poison: true,
        ..ScavengerConfig::default()
    }
}

fn demo_policy() -> Result<Policy, DemoError> {
    let env = ScavengerEnv::new(demo_env_config()).map_err(|e| DemoError::Setup(e.to_string()))?;
    // The init stream is irrelevant: every parameter comes from the
    // checkpoint.
    let mut rng = stream_rng(0, streams::INIT);
    let mut policy = build_policy(
        env.spec(),
        EncoderKind::Attention,
        POLICY_K,
        &POLICY_HIDDEN,
        &POLICY_TRUNK,
        &mut rng,
    );
    policy
        .load_str(POLICY_TEXT)
        .map_err(|e| DemoError::Setup(format!("embedded checkpoint: {e}")))?;
    Ok(policy)
}

/// One object as the page draws it.
#[derive(Clone, Debug, Serialize)]
pub struct ObjectView {
    /// Absolute arena position.
    pub pos: [f64; 2],
    /// Attention weight inside its class (softmax, sums to one).
    pub weight: f64,
    /// Raw filter score behind the weight.
    pub score: f64,
}

/// Full drawable state plus the policy's view of it.
#[derive(Clone, Debug, Serialize)]
pub struct SimState {
    pub episode: u64,
    pub t: u32,
    pub agent: [f64; 2],
    pub food: Vec<ObjectView>,
    pub poison: Vec<ObjectView>,
    /// Mean action at the current observation.
    pub action: [f64; 2],
    pub value: f64,
    pub ep_return: f64,
    pub done: bool,
    pub cause: Option<String>,
    pub half_width: f64,
    pub reach_radius: f64,
}

/// Result of re-encoding the current observation with its objects
/// permuted.
#[derive(Clone, Debug, Serialize)]
pub struct ShuffleCheck {
    /// Permutation applied to the food objects.
    pub food_order: Vec<usize>,
    /// Permutation applied to the poison objects.
    pub poison_order: Vec<usize>,
    pub action_before: [f64; 2],
    pub action_after: [f64; 2],
    /// Largest absolute difference over action mean and value.
    pub max_delta: f64,
}

/// An interactive scavenger episode driven by the embedded policy.
pub struct DemoSim {
    env: ScavengerEnv,
    policy: Policy,
    obs: Observation,
    seed: u64,
    episode: u64,
    t: u32,
    ep_return: f64,
    done: bool,
    cause: Option<String>,
}

impl DemoSim {
    pub fn new(seed: u64) -> Result<DemoSim, DemoError> {
        let mut env =
            ScavengerEnv::new(demo_env_config()).map_err(|e| DemoError::Setup(e.to_string()))?;
        let policy = demo_policy()?;
        let obs = env.reset(derive_seed(seed, 0));
        Ok(DemoSim {
            env,
            policy,
            obs,
            seed,
            episode: 0,
            t: 0,
            ep_return: 0.0,
            done: false,
            cause: None,
        })
    }

    /// Starts the next episode of this sim's seed sequence.
    pub fn reset(&mut self) {
        self.episode += 1;
        self.obs = self.env.reset(derive_seed(self.seed, self.episode));
        self.t = 0;
        self.ep_return = 0.0;
        self.done = false;
        self.cause = None;
    }

    /// Advances one step with the policy's mean action. Finished
    /// episodes stay frozen until `reset`.
    pub fn step(&mut self) -> Result<(), DemoError> {
        if self.done {
            return Ok(());
        }
        let (mean, _, _) = self
            .policy
            .dist(&self.obs)
            .map_err(|e| DemoError::Sim(e.to_string()))?;
        let step = self.env.step(mean).map_err(|e| DemoError::Sim(e.to_string()))?;
        self.obs = step.obs;
        self.ep_return += step.reward;
        self.t += 1;
        self.done = step.done;
        self.cause = step.info.cause.map(|c| c.as_str().to_string());
        Ok(())
    }

    /// Attention trace of one class of the current observation, in the
    /// same order as the observation's objects.
    fn class_views(&self, class: &str) -> Result<Vec<ObjectView>, DemoError> {
        let objects = match self.obs.set.class(class) {
            Some(c) if !c.is_empty() => &c.objects,
            _ => return Ok(Vec::new()),
        };
        let PolicyEncoder::Set(mc) = self.policy.encoder() else {
            return Err(DemoError::Sim("embedded policy is not a set encoder".into()));
        };
        let enc = mc
            .classes()
            .iter()
            .find(|(n, _)| n == class)
            .map(|(_, e)| e)
            .ok_or_else(|| DemoError::Sim(format!("no encoder for class {class}")))?;
        let SetEncoder::Attention(params) = enc else {
            return Err(DemoError::Sim("embedded policy does not use attention".into()));
        };
        let trace = encode_attention(params, objects)
            .map_err(|e| DemoError::Sim(e.to_string()))?
            .1;
        let agent = self.agent_pos();
        Ok(objects
            .iter()
            .zip(trace.weights.iter().zip(&trace.scores))
            .map(|(o, (w, s))| ObjectView {
                // Object features are agent-relative.
                pos: [agent[0] + o[0], agent[1] + o[1]],
                weight: *w,
                score: *s,
            })
            .collect())
    }

    fn agent_pos(&self) -> [f64; 2] {
        [self.obs.set.ego[0], self.obs.set.ego[1]]
    }

    pub fn state(&self) -> Result<SimState, DemoError> {
        let (action, _, value) = self
            .policy
            .dist(&self.obs)
            .map_err(|e| DemoError::Sim(e.to_string()))?;
        let cfg = demo_env_config();
        Ok(SimState {
            episode: self.episode,
            t: self.t,
            agent: self.agent_pos(),
            food: self.class_views("food")?,
            poison: self.class_views("poison")?,
            action,
            value,
            ep_return: self.ep_return,
            done: self.done,
            cause: self.cause.clone(),
            half_width: cfg.half_width,
            reach_radius: cfg.reach_radius,
        })
    }

    /// Recomputes the action with every class's objects permuted, as a
    /// live demonstration that order carries no information.
    pub fn shuffle_check(&self, perm_seed: u64) -> Result<ShuffleCheck, DemoError> {
        let (before_mean, _, before_value) = self
            .policy
            .dist(&self.obs)
            .map_err(|e| DemoError::Sim(e.to_string()))?;
        let mut shuffled = self.obs.clone();
        let mut orders: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for (i, class) in shuffled.set.classes.iter_mut().enumerate() {
            let order = permutation(class.objects.len(), derive_seed(perm_seed, i as u64));
            class.objects = order.iter().map(|&j| class.objects[j].clone()).collect();
            orders.insert(class.name.clone(), order);
        }
        // The flat view is ordered by construction; rebuild it so both
        // views describe the same permuted scene.
        shuffled.flat = flatten(&self.env, &shuffled);
        let (after_mean, _, after_value) = self
            .policy
            .dist(&shuffled)
            .map_err(|e| DemoError::Sim(e.to_string()))?;
        let mut max_delta: f64 = (before_value - after_value).abs();
        for a in 0..2 {
            max_delta = max_delta.max((before_mean[a] - after_mean[a]).abs());
        }
        Ok(ShuffleCheck {
            food_order: orders.remove("food").unwrap_or_default(),
            poison_order: orders.remove("poison").unwrap_or_default(),
            action_before: before_mean,
            action_after: after_mean,
            max_delta,
        })
    }
}

/// Rebuilds the padded flat view in the set view's current order.
fn flatten(env: &ScavengerEnv, obs: &Observation) -> Vec<f64> {
    let spec = env.spec();
    let mut flat = Vec::with_capacity(spec.flat_len());
    for class_spec in &spec.classes {
        let objects = obs
            .set
            .class(&class_spec.name)
            .map(|c| c.objects.as_slice())
            .unwrap_or(&[]);
        for slot in 0..class_spec.max_slots {
            match objects.get(slot) {
                Some(o) => flat.extend_from_slice(o),
                None => flat.extend(std::iter::repeat(0.0).take(class_spec.dim)),
            }
        }
    }
    flat.extend_from_slice(&obs.set.ego);
    flat
}

/// Deterministic Fisher-Yates order for `len` items.
fn permutation(len: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..len).collect();
    let mut state = seed;
    for i in (1..len).rev() {
        state = splitmix64(state);
        let j = (state % (i as u64 + 1)) as usize;
        order.swap(i, j);
    }
    order
}

/// One run's return curve.
#[derive(Clone, Debug, Serialize)]
pub struct Curve {
    pub run: String,
    pub iterations: Vec<u32>,
    pub mean_returns: Vec<f64>,
}

/// The embedded attention-vs-ordered training curves.
pub fn training_curves() -> Result<Vec<Curve>, DemoError> {
    let records =
        parse_metrics(CURVES_TEXT, "<embedded>").map_err(|e| DemoError::Setup(e.to_string()))?;
    let mut by_run: BTreeMap<String, Curve> = BTreeMap::new();
    for r in records {
        let c = by_run.entry(r.run.clone()).or_insert_with(|| Curve {
            run: r.run.clone(),
            iterations: Vec::new(),
            mean_returns: Vec::new(),
        });
        c.iterations.push(r.iteration);
        c.mean_returns.push(r.mean_return);
    }
    Ok(by_run.into_values().collect())
}

/// Search-space sizes with the counts as decimal strings, since they
/// outgrow JavaScript's safe integers almost immediately.
#[derive(Clone, Debug, Serialize)]
pub struct SpaceView {
    pub n: u64,
    pub m: u64,
    pub ordered: String,
    pub invariant: String,
    pub reduction: String,
}

pub fn space_view(n: u64, m: u64) -> Result<SpaceView, DemoError> {
    let r = space_sizes(n, m).map_err(|e| DemoError::Setup(e.to_string()))?;
    Ok(SpaceView {
        n: r.n,
        m: r.m,
        ordered: r.ordered_size.to_string(),
        invariant: r.invariant_size.to_string(),
        reduction: r.reduction.to_string(),
    })
}
