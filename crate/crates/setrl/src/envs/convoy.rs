//! Convoy escort: a defender shields convoy members traveling a fixed path
//! while attackers spawn at the arena edge and home in on them.
//!
//! Attackers are the exchangeable class here, and their count varies over
//! the episode, so this world exercises both the empty-set path and the
//! variable-m path of the set encoders.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{
    check_action, clip_speed, dist, ClassSpec, Env, EnvError, Observation, ObsSpec, Step,
    StepInfo, TerminationCause,
};
use crate::encoder::{encode_ordered, ClassObjects, ObjectSet};

/// Steps between consecutive members' departures, so the column stays
/// spaced in time whatever the convoy speed.
const STAGGER_STEPS: u32 = 5;

/// Convoy parameters. The speed ordering keeps the task winnable but
/// contested: the defender outruns attackers, attackers outrun the convoy.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvoyConfig {
    pub convoy_size: usize,
    /// Polyline the convoy follows, at least two points, inside the arena.
    pub path: Vec<[f64; 2]>,
    pub convoy_speed: f64,
    pub attacker_speed: f64,
    pub defender_speed: f64,
    /// Chance per step of one attacker appearing on the arena boundary.
    pub spawn_prob: f64,
    /// Attackers this close to the defender are removed.
    pub block_radius: f64,
    /// Attackers this close to a member kill it.
    pub attack_radius: f64,
    /// Most attackers alive at once; also the flat view's slot count.
    pub max_attackers: usize,
    pub half_width: f64,
    pub step_limit: u32,
    /// Shaping: reward per blocked attacker.
    pub block_reward: f64,
    /// Shaping: penalty charged when a member is lost.
    pub loss_penalty: f64,
    /// Reward when a member reaches the end of the path.
    pub arrival_reward: f64,
    /// Shaping: reward per step while any member is still in transit.
    pub survival_bonus: f64,
}

impl Default for ConvoyConfig {
    fn default() -> ConvoyConfig {
        ConvoyConfig {
            convoy_size: 3,
            path: vec![[-1.0, 0.0], [1.0, 0.0]],
            convoy_speed: 0.01,
            attacker_speed: 0.02,
            defender_speed: 0.04,
            spawn_prob: 0.1,
            block_radius: 0.12,
            attack_radius: 0.05,
            max_attackers: 6,
            half_width: 1.0,
            step_limit: 400,
            block_reward: 0.3,
            loss_penalty: 1.0,
            arrival_reward: 1.0,
            survival_bonus: 0.01,
        }
    }
}

impl ConvoyConfig {
    fn validate(&self) -> Result<f64, EnvError> {
        if self.convoy_size == 0 {
            return Err(EnvError::Config("convoy_size must be at least 1".into()));
        }
        if self.half_width <= 0.0 {
            return Err(EnvError::Config("half_width must be positive".into()));
        }
        if self.path.len() < 2 {
            return Err(EnvError::Config("path needs at least two waypoints".into()));
        }
        let hw = self.half_width;
        if self
            .path
            .iter()
            .any(|p| p[0].abs() > hw || p[1].abs() > hw || !p[0].is_finite() || !p[1].is_finite())
        {
            return Err(EnvError::Config("path waypoint outside the arena".into()));
        }
        let mut len = 0.0;
        for pair in self.path.windows(2) {
            let seg = dist(pair[0], pair[1]);
            if seg == 0.0 {
                return Err(EnvError::Config("repeated consecutive waypoint".into()));
            }
            len += seg;
        }
        if !(self.convoy_speed > 0.0
            && self.attacker_speed > self.convoy_speed
            && self.defender_speed > self.attacker_speed)
        {
            return Err(EnvError::Config(format!(
                "need defender_speed > attacker_speed > convoy_speed > 0, got {} / {} / {}",
                self.defender_speed, self.attacker_speed, self.convoy_speed
            )));
        }
        if !(0.0..=1.0).contains(&self.spawn_prob) {
            return Err(EnvError::Config(format!(
                "spawn_prob must lie in [0,1], got {}",
                self.spawn_prob
            )));
        }
        if self.block_radius <= 0.0 || self.attack_radius <= 0.0 {
            return Err(EnvError::Config("radii must be positive".into()));
        }
        if self.max_attackers == 0 {
            return Err(EnvError::Config("max_attackers must be at least 1".into()));
        }
        if self.step_limit == 0 {
            return Err(EnvError::Config("step_limit must be at least 1".into()));
        }
        Ok(len)
    }

    fn obs_spec(&self) -> ObsSpec {
        ObsSpec {
            classes: vec![
                ClassSpec {
                    name: "member".into(),
                    dim: 3,
                    max_slots: self.convoy_size,
                },
                ClassSpec {
                    name: "attacker".into(),
                    dim: 2,
                    max_slots: self.max_attackers,
                },
            ],
            d_ego: 2,
        }
    }
}

#[derive(Clone, Debug)]
struct Member {
    pos: [f64; 2],
    alive: bool,
    arrived: bool,
}

impl Member {
    fn in_transit(&self) -> bool {
        self.alive && !self.arrived
    }
}

/// Convoy environment instance. Members depart from the path start in
/// file, [`STAGGER_STEPS`] apart, and are resolved by arriving or being
/// lost; attackers chase the nearest unresolved member and are expended
/// when they make a kill.
pub struct ConvoyEnv {
    cfg: ConvoyConfig,
    spec: ObsSpec,
    path_len: f64,
    defender: [f64; 2],
    members: Vec<Member>,
    attackers: Vec<[f64; 2]>,
    rng: ChaCha8Rng,
    elapsed: u32,
    done: bool,
}

impl ConvoyEnv {
    pub fn new(cfg: ConvoyConfig) -> Result<ConvoyEnv, EnvError> {
        let path_len = cfg.validate()?;
        let spec = cfg.obs_spec();
        Ok(ConvoyEnv {
            spec,
            path_len,
            defender: [0.0, 0.0],
            members: Vec::with_capacity(cfg.convoy_size),
            attackers: Vec::new(),
            rng: ChaCha8Rng::seed_from_u64(0),
            elapsed: 0,
            done: true,
            cfg,
        })
    }

    pub fn config(&self) -> &ConvoyConfig {
        &self.cfg
    }

    /// Point on the path at arc distance `d` from the start.
    fn path_point(&self, d: f64) -> [f64; 2] {
        let mut remaining = d.max(0.0);
        for pair in self.cfg.path.windows(2) {
            let (p, q) = (pair[0], pair[1]);
            let seg = dist(p, q);
            if remaining <= seg {
                let t = remaining / seg;
                return [p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])];
            }
            remaining -= seg;
        }
        *self.cfg.path.last().expect("validated path")
    }

    fn observe(&self) -> Observation {
        let rel = |p: [f64; 2]| [p[0] - self.defender[0], p[1] - self.defender[1]];

        // The set view carries every living member; lost members leave it.
        let member_objs: Vec<Vec<f64>> = self
            .members
            .iter()
            .filter(|m| m.alive)
            .map(|m| {
                let r = rel(m.pos);
                vec![r[0], r[1], if m.arrived { 1.0 } else { 0.0 }]
            })
            .collect();
        let attacker_objs: Vec<Vec<f64>> = self
            .attackers
            .iter()
            .map(|a| {
                let r = rel(*a);
                vec![r[0], r[1]]
            })
            .collect();

        // The flat view keeps one slot per member index so the baseline
        // sees a stable layout; lost members read as zeros. Attackers are
        // packed in spawn order and zero-padded.
        let mut flat = Vec::with_capacity(self.spec.flat_len());
        for m in &self.members {
            if m.alive {
                let r = rel(m.pos);
                flat.extend_from_slice(&[r[0], r[1], if m.arrived { 1.0 } else { 0.0 }]);
            } else {
                flat.extend_from_slice(&[0.0, 0.0, 0.0]);
            }
        }
        flat.extend(
            encode_ordered(&attacker_objs, 2, self.cfg.max_attackers).expect("capped spawn"),
        );
        flat.extend_from_slice(&self.defender);

        Observation {
            set: ObjectSet::new(
                vec![
                    ClassObjects::new("member", 3, member_objs),
                    ClassObjects::new("attacker", 2, attacker_objs),
                ],
                self.defender.to_vec(),
            ),
            flat,
        }
    }
}

impl Env for ConvoyEnv {
    fn spec(&self) -> &ObsSpec {
        &self.spec
    }

    /// Defender at the arena center, members queued at the path start,
    /// no attackers.
    fn reset(&mut self, seed: u64) -> Observation {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        self.defender = [0.0, 0.0];
        let start = self.cfg.path[0];
        self.members = (0..self.cfg.convoy_size)
            .map(|_| Member {
                pos: start,
                alive: true,
                arrived: false,
            })
            .collect();
        self.attackers.clear();
        self.elapsed = 0;
        self.done = false;
        self.observe()
    }

    fn step(&mut self, action: [f64; 2]) -> Result<Step, EnvError> {
        if self.done {
            return Err(EnvError::EpisodeDone);
        }
        check_action(action)?;
        self.elapsed += 1;
        let mut reward = 0.0;
        let mut info = StepInfo::default();

        // Defender moves under its own speed cap, confined to the arena.
        let v = clip_speed(action, self.cfg.defender_speed);
        let hw = self.cfg.half_width;
        self.defender[0] = (self.defender[0] + v[0]).clamp(-hw, hw);
        self.defender[1] = (self.defender[1] + v[1]).clamp(-hw, hw);

        // Convoy advances. Member i has been moving for elapsed - i*stagger
        // steps; distance covered is that integer times the speed, which
        // keeps arrival times exact instead of accumulating rounding.
        for (i, m) in self.members.iter_mut().enumerate() {
            if !m.in_transit() {
                continue;
            }
            let moved = self.elapsed.saturating_sub(i as u32 * STAGGER_STEPS);
            let d = f64::from(moved) * self.cfg.convoy_speed;
            if d >= self.path_len {
                m.arrived = true;
                reward += self.cfg.arrival_reward;
                info.arrivals += 1;
            }
        }
        let positions: Vec<[f64; 2]> = self
            .members
            .iter()
            .enumerate()
            .map(|(i, _)| {
                let moved = self.elapsed.saturating_sub(i as u32 * STAGGER_STEPS);
                self.path_point((f64::from(moved) * self.cfg.convoy_speed).min(self.path_len))
            })
            .collect();
        for (m, p) in self.members.iter_mut().zip(positions) {
            if m.alive {
                m.pos = p;
            }
        }

        // Each attacker homes in on the nearest member still in transit;
        // with nothing left to chase they hold position.
        let targets: Vec<[f64; 2]> = self
            .members
            .iter()
            .filter(|m| m.in_transit())
            .map(|m| m.pos)
            .collect();
        if !targets.is_empty() {
            for a in &mut self.attackers {
                let t = targets
                    .iter()
                    .min_by(|x, y| dist(*a, **x).partial_cmp(&dist(*a, **y)).unwrap())
                    .unwrap();
                let d = dist(*a, *t);
                if d > 1e-12 {
                    let s = self.cfg.attacker_speed.min(d) / d;
                    a[0] += s * (t[0] - a[0]);
                    a[1] += s * (t[1] - a[1]);
                }
            }
        }

        // Blocks resolve before attacks: an attacker the defender reaches
        // this step never gets its kill.
        let before = self.attackers.len();
        let defender = self.defender;
        let block_radius = self.cfg.block_radius;
        self.attackers.retain(|a| dist(*a, defender) > block_radius);
        info.blocked = (before - self.attackers.len()) as u32;
        reward += self.cfg.block_reward * f64::from(info.blocked);

        // A kill expends the attacker, so one attacker downs at most one
        // member per step.
        for m in &mut self.members {
            if !m.in_transit() {
                continue;
            }
            let hit = self
                .attackers
                .iter()
                .position(|a| dist(*a, m.pos) <= self.cfg.attack_radius);
            if let Some(idx) = hit {
                m.alive = false;
                self.attackers.remove(idx);
                reward -= self.cfg.loss_penalty;
                info.losses += 1;
            }
        }

        // The spawn coin is tossed every step; the position draw happens
        // only on an actual spawn, and the population cap suppresses it.
        let coin = self.rng.random::<f64>() < self.cfg.spawn_prob;
        if coin && self.attackers.len() < self.cfg.max_attackers {
            let side = self.rng.random_range(0..4u8);
            let offset = self.rng.random_range(-hw..hw);
            let pos = match side {
                0 => [offset, hw],
                1 => [offset, -hw],
                2 => [hw, offset],
                _ => [-hw, offset],
            };
            self.attackers.push(pos);
        }

        if self.members.iter().any(|m| m.in_transit()) {
            reward += self.cfg.survival_bonus;
        }

        if self.members.iter().all(|m| !m.in_transit()) {
            self.done = true;
            info.cause = Some(TerminationCause::Resolved);
        } else if self.elapsed >= self.cfg.step_limit {
            self.done = true;
            info.cause = Some(TerminationCause::Timeout);
        }

        Ok(Step {
            obs: self.observe(),
            reward,
            done: self.done,
            info,
        })
    }

    fn done(&self) -> bool {
        self.done
    }
}
