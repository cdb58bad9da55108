//! Single-binary front end: training, evaluation, sweeps, the property
//! verification suite, and search-space reports.
//!
//! Exit codes: 0 success, 1 runtime failure (training aborted, a sweep
//! cell failed, a verification property failed), 2 usage or config
//! error. All artifacts land under the run's out directory.

mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use setrl::analysis::{
    render_summary_csv, render_summary_text, space_sizes, summarize_runs, write_metrics,
};
use setrl::ppo::{
    evaluate_policy, greedy_convoy_action, greedy_scavenger_action, scripted_mean_return,
    Trainer, RolloutCollector,
};
use setrl::rng::{stream_rng, streams};
use setrl::verify::{run_verification, Fault, VerifyOptions};

use config::{load_config, render_config, EnvChoice, RunConfig};

#[derive(Parser)]
#[command(name = "setrl", version, about = "Set-input reinforcement learning toolkit")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train a policy and write metrics plus checkpoints.
    Train(TrainArgs),
    /// Evaluate a checkpoint over fresh episodes.
    Eval(EvalArgs),
    /// Train a grid of (num_food, encoder, seed) cells and summarize.
    Sweep(SweepArgs),
    /// Run the invariance, decomposition, gradient, and counting suites.
    Verify(VerifyArgs),
    /// Report ordered vs invariant search-space sizes.
    SpaceReport(SpaceArgs),
}

/// Flags shared by every command that reads a run configuration.
#[derive(Args)]
struct ConfigArgs {
    /// Sectioned key = value configuration file.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Override one entry, as section.key=value. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
    /// Shorthand for --set run.seed=N.
    #[arg(long)]
    seed: Option<u64>,
    /// Shorthand for --set run.out_dir=DIR.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<RunConfig> {
        let mut sets = self.sets.clone();
        if let Some(out) = &self.out {
            sets.push(format!("run.out_dir={}", out.display()));
        }
        load_config(self.config.as_deref(), &sets, self.seed)
    }
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    cfg: ConfigArgs,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    cfg: ConfigArgs,
    /// Run directory; implies --config DIR/config.txt and
    /// --checkpoint DIR/ckpt_final.txt unless given explicitly.
    #[arg(long, value_name = "DIR")]
    run: Option<PathBuf>,
    /// Checkpoint file to load.
    #[arg(long, value_name = "FILE")]
    checkpoint: Option<PathBuf>,
    #[arg(long, default_value_t = 100)]
    episodes: usize,
    /// Use the mean action instead of sampling.
    #[arg(long)]
    deterministic: bool,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    cfg: ConfigArgs,
    /// Food counts to sweep, comma separated.
    #[arg(long = "num-food", value_name = "LIST", default_value = "1")]
    num_food: String,
    /// Encoders to sweep, comma separated.
    #[arg(long, value_name = "LIST", default_value = "attention,ordered")]
    encoders: String,
    /// Seeds to sweep, comma separated.
    #[arg(long, value_name = "LIST", default_value = "0")]
    seeds: String,
    /// Rolling window (iterations) for summary statistics.
    #[arg(long, default_value_t = 50)]
    window: usize,
    /// Final-window return threshold for flagging runs; defaults to
    /// half the scripted greedy oracle's mean return on the base env.
    #[arg(long)]
    threshold: Option<f64>,
}

#[derive(Args)]
struct VerifyArgs {
    /// Random (params, set) draws per pooling property.
    #[arg(long, default_value_t = 1000)]
    trials: usize,
    /// Absolute tolerance for the pooling properties.
    #[arg(long, default_value_t = 1e-9)]
    tolerance: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Policy instances for the gradient check.
    #[arg(long = "grad-instances", default_value_t = 20)]
    grad_instances: usize,
    /// Relative tolerance for the gradient check.
    #[arg(long = "grad-tolerance", default_value_t = 1e-4)]
    grad_tolerance: f64,
    /// Inject a known defect to demonstrate which suite catches it.
    #[arg(long, value_enum, value_name = "FAULT")]
    inject: Option<InjectFault>,
}

#[derive(Clone, Copy, ValueEnum)]
enum InjectFault {
    /// Pool with raw scores instead of their softmax.
    SkipSoftmax,
}

#[derive(Args)]
struct SpaceArgs {
    /// Total objects available (n).
    #[arg(long)]
    n: u64,
    /// Objects present in a state (m).
    #[arg(long)]
    m: u64,
    /// Also print the report as CSV.
    #[arg(long)]
    csv: bool,
}

/// A failed command, tagged with which exit code it deserves.
enum Failure {
    Usage(anyhow::Error),
    Runtime(anyhow::Error),
}

trait Classify<T> {
    fn usage(self) -> Result<T, Failure>;
    fn runtime(self) -> Result<T, Failure>;
}

impl<T> Classify<T> for Result<T> {
    fn usage(self) -> Result<T, Failure> {
        self.map_err(Failure::Usage)
    }
    fn runtime(self) -> Result<T, Failure> {
        self.map_err(Failure::Runtime)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.cmd {
        Cmd::Train(a) => cmd_train(&a),
        Cmd::Eval(a) => cmd_eval(&a),
        Cmd::Sweep(a) => cmd_sweep(&a),
        Cmd::Verify(a) => cmd_verify(&a),
        Cmd::SpaceReport(a) => cmd_space_report(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn cmd_train(args: &TrainArgs) -> Result<(), Failure> {
    let cfg = args.cfg.resolve().usage()?;
    run_training(&cfg).runtime()
}

/// One full training run: fresh metrics file, periodic checkpoints, a
/// final checkpoint on completion or abort.
fn run_training(cfg: &RunConfig) -> Result<()> {
    let out = &cfg.run.out_dir;
    std::fs::create_dir_all(out).with_context(|| format!("cannot create {}", out.display()))?;
    std::fs::write(out.join("config.txt"), render_config(cfg))
        .context("cannot write resolved config")?;
    let metrics = out.join("metrics.csv");
    if metrics.exists() {
        // A fresh run must not append to a stale file: mixed runs would
        // break the per-run monotonicity the reader enforces.
        std::fs::remove_file(&metrics)
            .with_context(|| format!("cannot clear stale {}", metrics.display()))?;
    }

    let seed = cfg.run.seed;
    let mut init_rng = stream_rng(seed, streams::INIT);
    let policy = cfg.build_policy(&mut init_rng)?;
    let envs = (0..cfg.run.workers)
        .map(|_| cfg.build_env())
        .collect::<Result<Vec<_>>>()?;
    let collector = RolloutCollector::new(envs, seed)?;
    let mut trainer = Trainer::new(policy, collector, cfg.ppo.clone(), cfg.run_id(), seed)?;

    let iters = cfg.ppo.iters;
    println!(
        "training {} on {} for {} iterations ({} workers)",
        cfg.run_id(),
        cfg.env_name,
        iters,
        cfg.run.workers
    );
    let final_path = out.join("ckpt_final.txt");
    for i in 1..=iters {
        let record = match trainer.train_iteration() {
            Ok(r) => r,
            Err(e) => {
                // The trainer restored the last good parameters; keep
                // them so the run is not a total loss.
                if let Err(save) = trainer.policy().save(&final_path) {
                    eprintln!("warning: could not save abort checkpoint: {save}");
                }
                return Err(anyhow!(e).context(format!("training aborted at iteration {i}")));
            }
        };
        write_metrics(&metrics, std::slice::from_ref(&record)).context("cannot append metrics")?;
        if i % 10 == 0 || i == iters {
            println!(
                "iter {i:>5}/{iters}  return(100) {:>8.3}  kl {:.4}  clip {:.2}",
                trainer.recent_mean_return(),
                record.approx_kl,
                record.clip_fraction
            );
        }
        if i % cfg.run.checkpoint_every == 0 && i != iters {
            trainer.policy().save(&out.join(format!("ckpt_{i}.txt")))?;
        }
    }
    trainer.policy().save(&final_path)?;
    println!("done: {} and {}", metrics.display(), final_path.display());
    Ok(())
}

fn cmd_eval(args: &EvalArgs) -> Result<(), Failure> {
    let mut cfg_args = ConfigArgs {
        config: args.cfg.config.clone(),
        sets: args.cfg.sets.clone(),
        seed: args.cfg.seed,
        out: args.cfg.out.clone(),
    };
    let mut checkpoint = args.checkpoint.clone();
    if let Some(run_dir) = &args.run {
        if cfg_args.config.is_none() {
            cfg_args.config = Some(run_dir.join("config.txt"));
        }
        if checkpoint.is_none() {
            checkpoint = Some(run_dir.join("ckpt_final.txt"));
        }
    }
    let checkpoint =
        checkpoint.ok_or_else(|| anyhow!("need --checkpoint FILE or --run DIR")).usage()?;
    let cfg = cfg_args.resolve().usage()?;

    let mut rng = stream_rng(cfg.run.seed, streams::INIT);
    let mut policy = cfg.build_policy(&mut rng).usage()?;
    // A shape or name mismatch means the checkpoint was trained under a
    // different encoder block; the error names the offending tensor.
    policy
        .load(&checkpoint)
        .map_err(|e| anyhow!(e).context(format!("checkpoint {} does not match config", checkpoint.display())))
        .usage()?;

    let mut env = cfg.build_env().usage()?;
    let stats = evaluate_policy(&policy, env.as_mut(), args.episodes, cfg.run.seed, args.deterministic)
        .map_err(|e| anyhow!(e))
        .runtime()?;
    println!("episodes     {}", stats.episodes);
    println!("mean_return  {:.6}", stats.mean_return);
    println!("std_return   {:.6}", stats.std_return);
    println!("mean_length  {:.2}", stats.mean_length);
    for (cause, count) in &stats.causes {
        println!("cause {cause:<9} {count:>4}  ({:.2})", stats.cause_fraction(cause));
    }
    Ok(())
}

fn parse_list<T: std::str::FromStr>(raw: &str, what: &str) -> Result<Vec<T>> {
    let items: Vec<T> = raw
        .split(',')
        .map(|p| p.trim().parse().map_err(|_| anyhow!("bad {what} entry `{}`", p.trim())))
        .collect::<Result<_>>()?;
    if items.is_empty() {
        bail!("{what} list is empty");
    }
    Ok(items)
}

fn cmd_sweep(args: &SweepArgs) -> Result<(), Failure> {
    let foods: Vec<usize> = parse_list(&args.num_food, "num-food").usage()?;
    let encoders: Vec<String> = parse_list(&args.encoders, "encoder").usage()?;
    let seeds: Vec<u64> = parse_list(&args.seeds, "seed").usage()?;
    if args.window == 0 {
        return Err(anyhow!("window must be at least 1")).usage();
    }
    let base = args.cfg.resolve().usage()?;
    let threshold = match args.threshold {
        Some(t) => t,
        None => oracle_threshold(&base).runtime()?,
    };
    let sweep_dir = base.run.out_dir.clone();

    let mut failures: Vec<String> = Vec::new();
    let mut metric_files: Vec<PathBuf> = Vec::new();
    for food in &foods {
        for encoder in &encoders {
            for seed in &seeds {
                let cell = format!("f{food}-{encoder}-s{seed}");
                let cell_dir = sweep_dir.join(&cell);
                let mut sets = args.cfg.sets.clone();
                sets.push(format!("env.num_food={food}"));
                sets.push(format!("encoder.type={encoder}"));
                sets.push(format!("run.seed={seed}"));
                sets.push(format!("run.out_dir={}", cell_dir.display()));
                sets.push(format!("run.name={cell}"));
                let cell_cfg = match load_config(args.cfg.config.as_deref(), &sets, None) {
                    Ok(c) => c,
                    Err(e) => {
                        eprintln!("cell {cell}: {e:#}");
                        failures.push(cell);
                        continue;
                    }
                };
                if cell_dir.join("ckpt_final.txt").exists() {
                    println!("cell {cell}: complete, skipping");
                } else if let Err(e) = run_training(&cell_cfg) {
                    eprintln!("cell {cell}: {e:#}");
                    failures.push(cell);
                    continue;
                }
                metric_files.push(cell_dir.join("metrics.csv"));
            }
        }
    }

    if !metric_files.is_empty() {
        let summaries = summarize_runs(&metric_files, args.window, threshold)
            .map_err(|e| anyhow!(e))
            .runtime()?;
        let text = render_summary_text(&summaries, args.window, threshold);
        print!("{text}");
        std::fs::write(sweep_dir.join("summary.txt"), &text)
            .context("cannot write summary")
            .runtime()?;
        std::fs::write(sweep_dir.join("summary.csv"), render_summary_csv(&summaries))
            .context("cannot write summary")
            .runtime()?;
    }
    if failures.is_empty() {
        Ok(())
    } else {
        Err(anyhow!("{} cell(s) failed: {}", failures.len(), failures.join(", "))).runtime()
    }
}

/// Half the scripted greedy oracle's mean return on the base
/// environment: a learned policy clearing this is genuinely pursuing
/// objects rather than wandering.
fn oracle_threshold(cfg: &RunConfig) -> Result<f64> {
    let mut env = cfg.build_env()?;
    let script = match cfg.env {
        EnvChoice::Scavenger(_) => greedy_scavenger_action,
        EnvChoice::Convoy(_) => greedy_convoy_action,
    };
    let oracle = scripted_mean_return(env.as_mut(), script, 100, 0)?;
    Ok(0.5 * oracle)
}

fn cmd_verify(args: &VerifyArgs) -> Result<(), Failure> {
    if args.trials == 0 || args.grad_instances == 0 {
        return Err(anyhow!("trials and grad-instances must be at least 1")).usage();
    }
    let opts = VerifyOptions {
        trials: args.trials,
        tolerance: args.tolerance,
        seed: args.seed,
        grad_instances: args.grad_instances,
        grad_tolerance: args.grad_tolerance,
        fault: match args.inject {
            None => Fault::None,
            Some(InjectFault::SkipSoftmax) => Fault::SkipSoftmax,
        },
    };
    let report = run_verification(&opts);
    print!("{}", report.render());
    if report.all_pass() {
        Ok(())
    } else {
        Err(anyhow!("verification failed")).runtime()
    }
}

fn cmd_space_report(args: &SpaceArgs) -> Result<(), Failure> {
    let report = space_sizes(args.n, args.m).map_err(|e| anyhow!(e)).usage()?;
    println!("objects available (n)   {}", report.n);
    println!("objects per state (m)   {}", report.m);
    println!("ordered mappings        {}", report.ordered_size);
    println!("invariant mappings      {}", report.invariant_size);
    println!("reduction factor (m!)   {}", report.reduction);
    if args.csv {
        println!("n,m,ordered,invariant,reduction");
        println!(
            "{},{},{},{},{}",
            report.n, report.m, report.ordered_size, report.invariant_size, report.reduction
        );
    }
    Ok(())
}
