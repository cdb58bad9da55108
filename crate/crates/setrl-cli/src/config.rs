//! Sectioned key = value run configuration.
//!
//! Four sections: `[env]`, `[encoder]`, `[ppo]`, `[run]`. Every key has
//! a default, so an empty file is a valid config. Unknown or misapplied
//! keys are rejected by name before anything runs; `--set section.key=
//! value` overrides go through the same validation as file entries.

use std::collections::BTreeMap;
use std::path::PathBuf;

use anyhow::{anyhow, bail, Context, Result};
use rand_chacha::ChaCha8Rng;
use setrl::envs::{ConvoyConfig, Env, ScavengerConfig};
use setrl::ppo::{build_policy, EncoderKind, Policy, PpoConfig};

/// Which benchmark world a run trains on.
#[derive(Clone, Debug, PartialEq)]
pub enum EnvChoice {
    Scavenger(ScavengerConfig),
    Convoy(ConvoyConfig),
}

#[derive(Clone, Debug, PartialEq)]
pub struct EncoderCfg {
    pub kind: EncoderKind,
    pub k: usize,
    pub hidden: Vec<usize>,
    pub trunk: Vec<usize>,
}

impl Default for EncoderCfg {
    fn default() -> EncoderCfg {
        EncoderCfg {
            kind: EncoderKind::Attention,
            k: 64,
            hidden: vec![64, 64],
            trunk: vec![64],
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunBlock {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub workers: usize,
    /// Run id for metrics; defaults to env-encoder-seed.
    pub name: Option<String>,
    /// Periodic checkpoint cadence in iterations.
    pub checkpoint_every: u32,
}

impl Default for RunBlock {
    fn default() -> RunBlock {
        RunBlock {
            seed: 0,
            out_dir: PathBuf::from("runs/out"),
            workers: 1,
            name: None,
            checkpoint_every: 100,
        }
    }
}

/// Fully validated configuration for one run.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub env_name: String,
    pub env: EnvChoice,
    pub encoder: EncoderCfg,
    pub ppo: PpoConfig,
    pub run: RunBlock,
}

impl RunConfig {
    /// Fresh environment instance for this configuration.
    pub fn build_env(&self) -> Result<Box<dyn Env>> {
        Ok(match &self.env {
            EnvChoice::Scavenger(cfg) => Box::new(
                setrl::envs::ScavengerEnv::new(cfg.clone()).context("invalid env config")?,
            ),
            EnvChoice::Convoy(cfg) => Box::new(
                setrl::envs::ConvoyEnv::new(cfg.clone()).context("invalid env config")?,
            ),
        })
    }

    /// Fresh policy matching this configuration's observation spec.
    pub fn build_policy(&self, rng: &mut ChaCha8Rng) -> Result<Policy> {
        let env = self.build_env()?;
        Ok(build_policy(
            env.spec(),
            self.encoder.kind,
            self.encoder.k,
            &self.encoder.hidden,
            &self.encoder.trunk,
            rng,
        ))
    }

    pub fn encoder_name(&self) -> &'static str {
        match self.encoder.kind {
            EncoderKind::Attention => "attention",
            EncoderKind::DeepSets => "deepsets",
            EncoderKind::Ordered => "ordered",
        }
    }

    /// Metrics run id: the configured name, or env-encoder-seed.
    pub fn run_id(&self) -> String {
        match &self.run.name {
            Some(n) => n.clone(),
            None => format!("{}-{}-s{}", self.env_name, self.encoder_name(), self.run.seed),
        }
    }
}

/// Parsed but not yet validated key/value sections.
#[derive(Clone, Debug, Default)]
pub struct RawConfig {
    sections: BTreeMap<String, BTreeMap<String, String>>,
}

const SECTIONS: [&str; 4] = ["env", "encoder", "ppo", "run"];

impl RawConfig {
    /// Parses sectioned `key = value` text. Lines starting with `#` or
    /// `;` are comments; keys before any section header are rejected.
    pub fn parse(text: &str) -> Result<RawConfig> {
        let mut cfg = RawConfig::default();
        let mut section: Option<String> = None;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            let lineno = i + 1;
            if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                let name = name.trim();
                if !SECTIONS.contains(&name) {
                    bail!("line {lineno}: unknown section `[{name}]`");
                }
                section = Some(name.to_string());
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("line {lineno}: expected `key = value`, got `{line}`"))?;
            let Some(section) = &section else {
                bail!("line {lineno}: key `{}` appears before any section header", key.trim());
            };
            cfg.sections
                .entry(section.clone())
                .or_default()
                .insert(key.trim().to_string(), value.trim().to_string());
        }
        Ok(cfg)
    }

    /// Applies one `section.key=value` override.
    pub fn set(&mut self, dotted: &str, value: &str) -> Result<()> {
        let (section, key) = dotted
            .split_once('.')
            .ok_or_else(|| anyhow!("override `{dotted}` must look like section.key"))?;
        if !SECTIONS.contains(&section) {
            bail!("unknown section `{section}` in override `{dotted}`");
        }
        self.sections
            .entry(section.to_string())
            .or_default()
            .insert(key.to_string(), value.trim().to_string());
        Ok(())
    }

    fn take(&mut self, section: &str, key: &str) -> Option<String> {
        self.sections.get_mut(section).and_then(|s| s.remove(key))
    }

    fn parse_key<T: std::str::FromStr>(&mut self, section: &str, key: &str, into: &mut T) -> Result<()>
    where
        T::Err: std::fmt::Display,
    {
        if let Some(raw) = self.take(section, key) {
            *into = raw
                .parse()
                .map_err(|e| anyhow!("key `{section}.{key}`: bad value `{raw}` ({e})"))?;
        }
        Ok(())
    }

    fn parse_widths(&mut self, section: &str, key: &str, into: &mut Vec<usize>) -> Result<()> {
        if let Some(raw) = self.take(section, key) {
            let widths: Vec<usize> = raw
                .split(',')
                .map(|p| {
                    p.trim()
                        .parse()
                        .map_err(|_| anyhow!("key `{section}.{key}`: bad width `{}`", p.trim()))
                })
                .collect::<Result<_>>()?;
            if widths.is_empty() || widths.contains(&0) {
                bail!("key `{section}.{key}`: widths must be positive");
            }
            *into = widths;
        }
        Ok(())
    }

    /// Validates everything and produces the run configuration. Any key
    /// left unconsumed is unknown (or inapplicable to the chosen
    /// environment) and is reported by its full name.
    pub fn into_run_config(mut self) -> Result<RunConfig> {
        let env_name = self
            .take("env", "name")
            .unwrap_or_else(|| "scavenger1".to_string());
        let env = match env_name.as_str() {
            "scavenger1" | "scavenger2" => {
                let mut cfg = ScavengerConfig {
                    include_poison: env_name == "scavenger2",
                    ..ScavengerConfig::default()
                };
                self.parse_key("env", "num_food", &mut cfg.num_food)?;
                self.parse_key("env", "half_width", &mut cfg.half_width)?;
                self.parse_key("env", "reach_radius", &mut cfg.reach_radius)?;
                self.parse_key("env", "speed_cap", &mut cfg.speed_cap)?;
                self.parse_key("env", "step_limit", &mut cfg.step_limit)?;
                EnvChoice::Scavenger(cfg)
            }
            "convoy" => {
                let mut cfg = ConvoyConfig::default();
                self.parse_key("env", "convoy_size", &mut cfg.convoy_size)?;
                self.parse_key("env", "convoy_speed", &mut cfg.convoy_speed)?;
                self.parse_key("env", "attacker_speed", &mut cfg.attacker_speed)?;
                self.parse_key("env", "defender_speed", &mut cfg.defender_speed)?;
                self.parse_key("env", "spawn_prob", &mut cfg.spawn_prob)?;
                self.parse_key("env", "block_radius", &mut cfg.block_radius)?;
                self.parse_key("env", "attack_radius", &mut cfg.attack_radius)?;
                self.parse_key("env", "max_attackers", &mut cfg.max_attackers)?;
                self.parse_key("env", "half_width", &mut cfg.half_width)?;
                self.parse_key("env", "step_limit", &mut cfg.step_limit)?;
                self.parse_key("env", "block_reward", &mut cfg.block_reward)?;
                self.parse_key("env", "loss_penalty", &mut cfg.loss_penalty)?;
                self.parse_key("env", "arrival_reward", &mut cfg.arrival_reward)?;
                self.parse_key("env", "survival_bonus", &mut cfg.survival_bonus)?;
                EnvChoice::Convoy(cfg)
            }
            other => bail!(
                "key `env.name`: unknown environment `{other}` \
                 (expected scavenger1, scavenger2, or convoy)"
            ),
        };

        let mut encoder = EncoderCfg::default();
        if let Some(raw) = self.take("encoder", "type") {
            encoder.kind = match raw.as_str() {
                "attention" => EncoderKind::Attention,
                "deepsets" => EncoderKind::DeepSets,
                "ordered" => EncoderKind::Ordered,
                other => bail!(
                    "key `encoder.type`: unknown encoder `{other}` \
                     (expected attention, deepsets, or ordered)"
                ),
            };
        }
        self.parse_key("encoder", "k", &mut encoder.k)?;
        self.parse_widths("encoder", "hidden", &mut encoder.hidden)?;
        self.parse_widths("encoder", "trunk", &mut encoder.trunk)?;
        if encoder.k == 0 {
            bail!("key `encoder.k`: output width must be positive");
        }

        let mut ppo = PpoConfig::default();
        self.parse_key("ppo", "gamma", &mut ppo.gamma)?;
        self.parse_key("ppo", "lam", &mut ppo.lam)?;
        self.parse_key("ppo", "clip_eps", &mut ppo.clip_eps)?;
        self.parse_key("ppo", "lr", &mut ppo.lr)?;
        self.parse_key("ppo", "rollout_steps", &mut ppo.rollout_steps)?;
        self.parse_key("ppo", "update_epochs", &mut ppo.update_epochs)?;
        self.parse_key("ppo", "minibatch", &mut ppo.minibatch)?;
        self.parse_key("ppo", "value_coef", &mut ppo.value_coef)?;
        self.parse_key("ppo", "entropy_coef", &mut ppo.entropy_coef)?;
        self.parse_key("ppo", "iters", &mut ppo.iters)?;
        self.parse_key("ppo", "kl_stop", &mut ppo.kl_stop)?;
        self.parse_key("ppo", "max_grad_norm", &mut ppo.max_grad_norm)?;
        ppo.validate().map_err(|e| anyhow!("{e}"))?;

        let mut run = RunBlock::default();
        self.parse_key("run", "seed", &mut run.seed)?;
        if let Some(raw) = self.take("run", "out_dir") {
            run.out_dir = PathBuf::from(raw);
        }
        self.parse_key("run", "workers", &mut run.workers)?;
        if let Some(raw) = self.take("run", "name") {
            run.name = Some(raw);
        }
        self.parse_key("run", "checkpoint_every", &mut run.checkpoint_every)?;
        if run.workers == 0 {
            bail!("key `run.workers`: need at least one worker");
        }
        if run.checkpoint_every == 0 {
            bail!("key `run.checkpoint_every`: cadence must be at least 1");
        }

        // Everything consumed is valid; anything left is a typo or does
        // not apply to the chosen environment.
        for (section, keys) in &self.sections {
            if let Some(key) = keys.keys().next() {
                bail!("unknown key `{section}.{key}`");
            }
        }

        let cfg = RunConfig {
            env_name,
            env,
            encoder,
            ppo,
            run,
        };
        // Environment parameter validation happens on construction.
        cfg.build_env()?;
        Ok(cfg)
    }
}

/// Renders a configuration back to the sectioned text format, so a run
/// directory carries everything needed to rebuild its policy. Convoy
/// waypoints are fixed, not config keys, so the round trip is complete.
pub fn render_config(cfg: &RunConfig) -> String {
    use std::fmt::Write;
    let mut out = String::new();
    let _ = writeln!(out, "[env]");
    let _ = writeln!(out, "name = {}", cfg.env_name);
    match &cfg.env {
        EnvChoice::Scavenger(s) => {
            let _ = writeln!(out, "num_food = {}", s.num_food);
            let _ = writeln!(out, "half_width = {}", s.half_width);
            let _ = writeln!(out, "reach_radius = {}", s.reach_radius);
            let _ = writeln!(out, "speed_cap = {}", s.speed_cap);
            let _ = writeln!(out, "step_limit = {}", s.step_limit);
        }
        EnvChoice::Convoy(c) => {
            let _ = writeln!(out, "convoy_size = {}", c.convoy_size);
            let _ = writeln!(out, "convoy_speed = {}", c.convoy_speed);
            let _ = writeln!(out, "attacker_speed = {}", c.attacker_speed);
            let _ = writeln!(out, "defender_speed = {}", c.defender_speed);
            let _ = writeln!(out, "spawn_prob = {}", c.spawn_prob);
            let _ = writeln!(out, "block_radius = {}", c.block_radius);
            let _ = writeln!(out, "attack_radius = {}", c.attack_radius);
            let _ = writeln!(out, "max_attackers = {}", c.max_attackers);
            let _ = writeln!(out, "half_width = {}", c.half_width);
            let _ = writeln!(out, "step_limit = {}", c.step_limit);
            let _ = writeln!(out, "block_reward = {}", c.block_reward);
            let _ = writeln!(out, "loss_penalty = {}", c.loss_penalty);
            let _ = writeln!(out, "arrival_reward = {}", c.arrival_reward);
            let _ = writeln!(out, "survival_bonus = {}", c.survival_bonus);
        }
    }
    let join = |ws: &[usize]| {
        ws.iter().map(|w| w.to_string()).collect::<Vec<_>>().join(",")
    };
    let _ = writeln!(out, "\n[encoder]");
    let _ = writeln!(out, "type = {}", cfg.encoder_name());
    let _ = writeln!(out, "k = {}", cfg.encoder.k);
    let _ = writeln!(out, "hidden = {}", join(&cfg.encoder.hidden));
    let _ = writeln!(out, "trunk = {}", join(&cfg.encoder.trunk));
    let p = &cfg.ppo;
    let _ = writeln!(out, "\n[ppo]");
    let _ = writeln!(out, "gamma = {}", p.gamma);
    let _ = writeln!(out, "lam = {}", p.lam);
    let _ = writeln!(out, "clip_eps = {}", p.clip_eps);
    let _ = writeln!(out, "lr = {}", p.lr);
    let _ = writeln!(out, "rollout_steps = {}", p.rollout_steps);
    let _ = writeln!(out, "update_epochs = {}", p.update_epochs);
    let _ = writeln!(out, "minibatch = {}", p.minibatch);
    let _ = writeln!(out, "value_coef = {}", p.value_coef);
    let _ = writeln!(out, "entropy_coef = {}", p.entropy_coef);
    let _ = writeln!(out, "iters = {}", p.iters);
    let _ = writeln!(out, "kl_stop = {}", p.kl_stop);
    let _ = writeln!(out, "max_grad_norm = {}", p.max_grad_norm);
    let r = &cfg.run;
    let _ = writeln!(out, "\n[run]");
    let _ = writeln!(out, "seed = {}", r.seed);
    let _ = writeln!(out, "out_dir = {}", r.out_dir.display());
    let _ = writeln!(out, "workers = {}", r.workers);
    if let Some(name) = &r.name {
        let _ = writeln!(out, "name = {}", name);
    }
    let _ = writeln!(out, "checkpoint_every = {}", r.checkpoint_every);
    out
}

/// Loads a config file (optional), applies `--set` overrides and the
/// `--seed` shorthand, validates, and builds the run configuration.
pub fn load_config(
    path: Option<&std::path::Path>,
    sets: &[String],
    seed: Option<u64>,
) -> Result<RunConfig> {
    let mut raw = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .with_context(|| format!("cannot read config {}", p.display()))?;
            RawConfig::parse(&text)?
        }
        None => RawConfig::default(),
    };
    for s in sets {
        let (key, value) = s
            .split_once('=')
            .ok_or_else(|| anyhow!("override `{s}` must look like section.key=value"))?;
        raw.set(key.trim(), value)?;
    }
    if let Some(seed) = seed {
        raw.set("run.seed", &seed.to_string())?;
    }
    raw.into_run_config()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_yields_defaults() {
        let cfg = load_config(None, &[], None).unwrap();
        assert_eq!(cfg.env_name, "scavenger1");
        assert_eq!(cfg.encoder.kind, EncoderKind::Attention);
        assert_eq!(cfg.ppo.rollout_steps, 2048);
        assert_eq!(cfg.run.workers, 1);
        assert_eq!(cfg.run_id(), "scavenger1-attention-s0");
    }

    #[test]
    fn sections_and_overrides_compose() {
        let text = "\n# comment\n[env]\nname = scavenger2\nnum_food = 3\n\n[ppo]\nlr = 1e-4\n\n[run]\nseed = 9\n";
        let mut raw = RawConfig::parse(text).unwrap();
        raw.set("encoder.type", "ordered").unwrap();
        raw.set("run.seed", "11").unwrap();
        let cfg = raw.into_run_config().unwrap();
        match &cfg.env {
            EnvChoice::Scavenger(s) => {
                assert_eq!(s.num_food, 3);
                assert!(s.include_poison);
            }
            other => panic!("wrong env {other:?}"),
        }
        assert_eq!(cfg.encoder.kind, EncoderKind::Ordered);
        assert_eq!(cfg.ppo.lr, 1e-4);
        assert_eq!(cfg.run.seed, 11);
    }

    #[test]
    fn unknown_keys_are_named() {
        let raw = RawConfig::parse("[env]\nnum_fod = 3\n").unwrap();
        let err = raw.into_run_config().unwrap_err().to_string();
        assert!(err.contains("env.num_fod"), "{err}");

        let raw = RawConfig::parse("[env]\nname = convoy\nnum_food = 2\n").unwrap();
        let err = raw.into_run_config().unwrap_err().to_string();
        assert!(err.contains("env.num_food"), "{err}");
    }

    #[test]
    fn malformed_lines_and_sections_are_rejected() {
        assert!(RawConfig::parse("[nope]\n").is_err());
        assert!(RawConfig::parse("key = 1\n").is_err());
        assert!(RawConfig::parse("[env]\njust-a-word\n").is_err());
        let mut raw = RawConfig::default();
        assert!(raw.set("noseparator", "1").is_err());
        assert!(raw.set("bogus.key", "1").is_err());
    }

    #[test]
    fn bad_values_name_the_key() {
        let raw = RawConfig::parse("[ppo]\nlr = fast\n").unwrap();
        let err = raw.into_run_config().unwrap_err().to_string();
        assert!(err.contains("ppo.lr"), "{err}");

        let raw = RawConfig::parse("[encoder]\nhidden = 64,,64\n").unwrap();
        let err = raw.into_run_config().unwrap_err().to_string();
        assert!(err.contains("encoder.hidden"), "{err}");
    }

    #[test]
    fn env_validation_runs_before_any_training() {
        let raw = RawConfig::parse("[env]\nname = convoy\ndefender_speed = 0.001\n").unwrap();
        assert!(raw.into_run_config().is_err());
    }

    #[test]
    fn render_round_trips_every_field() {
        let text = "[env]\nname = convoy\nspawn_prob = 0.07\n[encoder]\ntype = deepsets\nhidden = 32\n[ppo]\nlr = 0.00025\niters = 7\n[run]\nseed = 3\nname = trial\n";
        let cfg = RawConfig::parse(text).unwrap().into_run_config().unwrap();
        let rendered = render_config(&cfg);
        let back = RawConfig::parse(&rendered).unwrap().into_run_config().unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn convoy_ordered_policy_builds_with_slot_padding() {
        let raw = RawConfig::parse("[env]\nname = convoy\n[encoder]\ntype = ordered\n").unwrap();
        let cfg = raw.into_run_config().unwrap();
        let mut rng = setrl::rng::stream_rng(0, setrl::rng::streams::INIT);
        let policy = cfg.build_policy(&mut rng).unwrap();
        let env = cfg.build_env().unwrap();
        // Flat view: 3 member slots of width 3, 6 attacker slots of
        // width 2, defender position.
        assert_eq!(env.spec().flat_len(), 3 * 3 + 6 * 2 + 2);
        assert_eq!(policy.encoder().out_dim(), env.spec().flat_len());
    }
}
