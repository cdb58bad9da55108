//! Scavenger world: collect a food particle in a continuous 2-D arena.
//!
//! Task 1 has food only; task 2 adds poison particles that terminate the
//! episode with a penalty. Food and poison are exchangeable within their
//! class: the world behaves identically however they are listed.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{
    check_action, clip_speed, dist, ClassSpec, Env, EnvError, Observation, ObsSpec, Step,
    StepInfo, TerminationCause,
};
use crate::encoder::{encode_ordered, ClassObjects, ObjectSet};

/// Scavenger parameters. Defaults give episodes around forty optimal steps
/// with a positive optimal return.
#[derive(Clone, Debug, PartialEq)]
pub struct ScavengerConfig {
    /// Food particles per episode (also poison count in task 2).
    pub num_food: usize,
    /// Task 2: add poison particles that end the episode at -1.0.
    pub include_poison: bool,
    /// Arena spans [-half_width, half_width] in each axis.
    pub half_width: f64,
    /// Contact distance for food and poison.
    pub reach_radius: f64,
    /// Per-step movement cap on the action's norm.
    pub speed_cap: f64,
    pub step_limit: u32,
}

impl Default for ScavengerConfig {
    fn default() -> ScavengerConfig {
        ScavengerConfig {
            num_food: 1,
            include_poison: false,
            half_width: 1.0,
            reach_radius: 0.1,
            speed_cap: 0.1,
            step_limit: 100,
        }
    }
}

impl ScavengerConfig {
    fn validate(&self) -> Result<(), EnvError> {
        if self.num_food == 0 {
            return Err(EnvError::Config("num_food must be at least 1".into()));
        }
        if !(self.reach_radius > 0.0 && self.reach_radius < self.half_width) {
            return Err(EnvError::Config(format!(
                "reach_radius must be in (0, half_width), got {} vs {}",
                self.reach_radius, self.half_width
            )));
        }
        if self.speed_cap <= 0.0 {
            return Err(EnvError::Config("speed_cap must be positive".into()));
        }
        if self.step_limit == 0 {
            return Err(EnvError::Config("step_limit must be at least 1".into()));
        }
        Ok(())
    }

    fn obs_spec(&self) -> ObsSpec {
        let mut classes = vec![ClassSpec {
            name: "food".into(),
            dim: 2,
            max_slots: self.num_food,
        }];
        if self.include_poison {
            classes.push(ClassSpec {
                name: "poison".into(),
                dim: 2,
                max_slots: self.num_food,
            });
        }
        ObsSpec { classes, d_ego: 2 }
    }
}

/// Scavenger environment instance. One instance runs one episode at a
/// time; create several for parallel rollouts.
pub struct ScavengerEnv {
    cfg: ScavengerConfig,
    spec: ObsSpec,
    agent: [f64; 2],
    food: Vec<[f64; 2]>,
    poison: Vec<[f64; 2]>,
    elapsed: u32,
    done: bool,
}

impl ScavengerEnv {
    pub fn new(cfg: ScavengerConfig) -> Result<ScavengerEnv, EnvError> {
        cfg.validate()?;
        let spec = cfg.obs_spec();
        Ok(ScavengerEnv {
            cfg,
            spec,
            agent: [0.0, 0.0],
            food: Vec::new(),
            poison: Vec::new(),
            elapsed: 0,
            done: true,
        })
    }

    pub fn config(&self) -> &ScavengerConfig {
        &self.cfg
    }

    fn observe(&self) -> Observation {
        let rel = |p: &[f64; 2]| vec![p[0] - self.agent[0], p[1] - self.agent[1]];
        let food_rel: Vec<Vec<f64>> = self.food.iter().map(rel).collect();
        let mut classes = vec![ClassObjects::new("food", 2, food_rel.clone())];
        let mut flat = encode_ordered(&food_rel, 2, self.cfg.num_food).expect("fixed food count");
        if self.cfg.include_poison {
            let poison_rel: Vec<Vec<f64>> = self.poison.iter().map(rel).collect();
            flat.extend(encode_ordered(&poison_rel, 2, self.cfg.num_food).expect("fixed count"));
            classes.push(ClassObjects::new("poison", 2, poison_rel));
        }
        flat.extend_from_slice(&self.agent);
        Observation {
            set: ObjectSet::new(classes, self.agent.to_vec()),
            flat,
        }
    }
}

impl Env for ScavengerEnv {
    fn spec(&self) -> &ObsSpec {
        &self.spec
    }

    /// Places the agent at the arena center and particles uniformly at
    /// random, rejecting positions within reach of the agent. Poison is
    /// additionally rejected within two reach radii of any food particle
    /// so food is never fenced off.
    fn reset(&mut self, seed: u64) -> Observation {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let hw = self.cfg.half_width;
        self.agent = [0.0, 0.0];
        let draw = |rng: &mut ChaCha8Rng| -> [f64; 2] {
            [rng.random_range(-hw..hw), rng.random_range(-hw..hw)]
        };
        self.food.clear();
        for _ in 0..self.cfg.num_food {
            let p = loop {
                let p = draw(&mut rng);
                if dist(p, self.agent) > self.cfg.reach_radius {
                    break p;
                }
            };
            self.food.push(p);
        }
        self.poison.clear();
        if self.cfg.include_poison {
            for _ in 0..self.cfg.num_food {
                let p = loop {
                    let p = draw(&mut rng);
                    let clear_of_agent = dist(p, self.agent) > self.cfg.reach_radius;
                    let clear_of_food = self
                        .food
                        .iter()
                        .all(|f| dist(p, *f) > 2.0 * self.cfg.reach_radius);
                    if clear_of_agent && clear_of_food {
                        break p;
                    }
                };
                self.poison.push(p);
            }
        }
        self.elapsed = 0;
        self.done = false;
        self.observe()
    }

    fn step(&mut self, action: [f64; 2]) -> Result<Step, EnvError> {
        if self.done {
            return Err(EnvError::EpisodeDone);
        }
        check_action(action)?;
        let v = clip_speed(action, self.cfg.speed_cap);
        let hw = self.cfg.half_width;
        self.agent[0] = (self.agent[0] + v[0]).clamp(-hw, hw);
        self.agent[1] = (self.agent[1] + v[1]).clamp(-hw, hw);
        self.elapsed += 1;

        let touching = |ps: &[[f64; 2]], agent: [f64; 2], r: f64| {
            ps.iter().any(|p| dist(*p, agent) <= r)
        };
        let mut info = StepInfo::default();
        let reward;
        if touching(&self.food, self.agent, self.cfg.reach_radius) {
            reward = 1.0;
            self.done = true;
            info.cause = Some(TerminationCause::Food);
        } else if self.cfg.include_poison
            && touching(&self.poison, self.agent, self.cfg.reach_radius)
        {
            reward = -1.0;
            self.done = true;
            info.cause = Some(TerminationCause::Poison);
        } else {
            reward = -0.05;
            if self.elapsed >= self.cfg.step_limit {
                self.done = true;
                info.cause = Some(TerminationCause::Timeout);
            }
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

#[cfg(test)]
mod tests {
    use super::*;

    fn env(num_food: usize, poison: bool) -> ScavengerEnv {
        ScavengerEnv::new(ScavengerConfig {
            num_food,
            include_poison: poison,
            ..ScavengerConfig::default()
        })
        .unwrap()
    }

    /// Direction of the nearest object of a class, scaled to full speed.
    fn toward_nearest(obs: &Observation, class: &str, cap: f64) -> [f64; 2] {
        let c = obs.set.class(class).unwrap();
        let near = c
            .objects
            .iter()
            .min_by(|a, b| {
                let da = a[0] * a[0] + a[1] * a[1];
                let db = b[0] * b[0] + b[1] * b[1];
                da.partial_cmp(&db).unwrap()
            })
            .unwrap();
        let n = (near[0] * near[0] + near[1] * near[1]).sqrt();
        [near[0] / n * cap, near[1] / n * cap]
    }

    #[test]
    fn same_seed_gives_bit_identical_initial_observations() {
        let mut e = env(3, true);
        let a = e.reset(123);
        let b = e.reset(123);
        assert_eq!(a, b);
        let c = e.reset(124);
        assert_ne!(a, c);
    }

    #[test]
    fn flat_observation_has_documented_length() {
        let mut e = env(3, false);
        let obs = e.reset(0);
        // One 2-D relative position per food particle plus the 2-D ego.
        assert_eq!(obs.flat.len(), 2 * 3 + 2);
        assert_eq!(e.spec().flat_len(), 8);

        let mut e2 = env(3, true);
        let obs2 = e2.reset(0);
        assert_eq!(obs2.flat.len(), 4 * 3 + 2);
    }

    #[test]
    fn ten_thousand_resets_respect_rejection_rules() {
        let mut e = env(3, true);
        for seed in 0..10_000u64 {
            e.reset(seed);
            for f in &e.food {
                assert!(dist(*f, e.agent) > e.cfg.reach_radius);
            }
            for p in &e.poison {
                assert!(dist(*p, e.agent) > e.cfg.reach_radius);
                for f in &e.food {
                    assert!(dist(*p, *f) > 2.0 * e.cfg.reach_radius);
                }
            }
        }
    }

    #[test]
    fn greedy_pursuit_reaches_food() {
        let mut e = env(1, false);
        let mut obs = e.reset(7);
        let mut total = 0.0;
        loop {
            let a = toward_nearest(&obs, "food", e.cfg.speed_cap);
            let step = e.step(a).unwrap();
            total += step.reward;
            if step.done {
                assert_eq!(step.reward, 1.0);
                assert_eq!(step.info.cause, Some(TerminationCause::Food));
                break;
            }
            obs = step.obs;
        }
        assert!(total > 0.0, "greedy return {total}");
    }

    #[test]
    fn empty_space_step_costs_the_step_penalty() {
        let mut e = env(1, false);
        e.reset(3);
        let step = e.step([0.0, 0.0]).unwrap();
        assert_eq!(step.reward, -0.05);
        assert!(!step.done);
    }

    #[test]
    fn walking_into_poison_ends_the_episode() {
        let mut e = env(2, true);
        let mut obs = e.reset(11);
        loop {
            let a = toward_nearest(&obs, "poison", e.cfg.speed_cap);
            let step = e.step(a).unwrap();
            if step.done {
                // The path to the nearest poison may cross a food particle;
                // this seed was picked so it does not.
                assert_eq!(step.reward, -1.0);
                assert_eq!(step.info.cause, Some(TerminationCause::Poison));
                return;
            }
            obs = step.obs;
        }
    }

    #[test]
    fn idling_times_out_with_exact_total_penalty() {
        let mut e = env(1, false);
        e.reset(5);
        let mut total = 0.0;
        let mut steps = 0;
        loop {
            let step = e.step([0.0, 0.0]).unwrap();
            total += step.reward;
            steps += 1;
            if step.done {
                assert_eq!(step.info.cause, Some(TerminationCause::Timeout));
                break;
            }
        }
        assert_eq!(steps, 100);
        assert!((total - (-0.05 * 100.0)).abs() < 1e-12);
        assert!(matches!(e.step([0.0, 0.0]), Err(EnvError::EpisodeDone)));
    }

    #[test]
    fn reward_partition_holds_under_random_actions() {
        use rand::Rng;
        let mut rng = crate::rng::stream_rng(71, 0);
        let mut e = env(2, true);
        for seed in 0..200 {
            e.reset(seed);
            let mut len = 0u32;
            loop {
                let a = [rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1)];
                let step = e.step(a).unwrap();
                len += 1;
                let r = step.reward;
                assert!(
                    r == 1.0 || r == -1.0 || r == -0.05,
                    "unexpected reward {r}"
                );
                if r == 1.0 || r == -1.0 {
                    assert!(step.done);
                }
                if step.done {
                    assert!(step.info.cause.is_some());
                    break;
                }
            }
            assert!(len <= e.cfg.step_limit);
        }
    }

    #[test]
    fn trajectories_replay_bit_exactly() {
        use rand::Rng;
        let actions: Vec<[f64; 2]> = {
            let mut rng = crate::rng::stream_rng(72, 0);
            (0..60)
                .map(|_| [rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1)])
                .collect()
        };
        let run = |seed: u64| {
            let mut e = env(3, true);
            let mut log: Vec<u64> = Vec::new();
            let obs = e.reset(seed);
            for v in &obs.flat {
                log.push(v.to_bits());
            }
            for a in &actions {
                if e.done() {
                    break;
                }
                let step = e.step(*a).unwrap();
                log.push(step.reward.to_bits());
                for v in &step.obs.flat {
                    log.push(v.to_bits());
                }
            }
            log
        };
        assert_eq!(run(9), run(9));
        assert_ne!(run(9), run(10));
    }

    #[test]
    fn ego_plus_relative_recovers_stationary_absolutes() {
        let mut e = env(3, true);
        let obs0 = e.reset(21);
        let absolutes = |obs: &Observation| -> Vec<[f64; 2]> {
            let ego = &obs.set.ego;
            let mut out = Vec::new();
            for class in ["food", "poison"] {
                for o in &obs.set.class(class).unwrap().objects {
                    out.push([o[0] + ego[0], o[1] + ego[1]]);
                }
            }
            out
        };
        let before = absolutes(&obs0);
        let step = e.step([0.07, -0.03]).unwrap();
        let after = absolutes(&step.obs);
        // Particles never move, so ego + relative must be constant.
        for (a, b) in before.iter().zip(&after) {
            assert!((a[0] - b[0]).abs() <= 1e-12);
            assert!((a[1] - b[1]).abs() <= 1e-12);
        }
    }

    #[test]
    fn config_validation_rejects_nonsense() {
        let bad = ScavengerConfig {
            reach_radius: 2.0,
            ..ScavengerConfig::default()
        };
        assert!(ScavengerEnv::new(bad).is_err());
        let bad = ScavengerConfig {
            num_food: 0,
            ..ScavengerConfig::default()
        };
        assert!(ScavengerEnv::new(bad).is_err());
        let mut e = env(1, false);
        e.reset(0);
        assert!(matches!(
            e.step([f64::NAN, 0.0]),
            Err(EnvError::BadAction(_))
        ));
    }
}
