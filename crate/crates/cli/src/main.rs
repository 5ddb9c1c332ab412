use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use mtnav::config::{ablation_run, echo_config, load_config, Experiment, RunConfig, FINAL_CHECKPOINT};
use mtnav::env::{save_plans, FloorPlan};
use mtnav::eval::export_traces;
use mtnav::nn::Checkpoint;

/// Multiple-thinking object navigation on a generated gridworld.
#[derive(Parser, Debug)]
#[command(name = "mtnav", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate the training and held-out floor plans into `<out>/plans.txt`.
    GenMaps(Common),
    /// Train with A3C, writing the log and checkpoints into the output directory.
    Train {
        #[command(flatten)]
        common: Common,
        /// Resume from this checkpoint.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Evaluate a checkpoint on the held-out suite.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Defaults to `<out>/final.ckpt`.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Train and evaluate every configured ablation variant.
    Ablate(Common),
    /// Replay one evaluation episode and export its full trace.
    Trace {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Suite index of the episode; overrides `eval.trace_episode`.
        #[arg(long)]
        episode: Option<usize>,
    },
}

#[derive(Args, Debug)]
struct Common {
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; overrides `out_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Training worker threads; overrides `train.workers`.
    #[arg(long)]
    workers: Option<usize>,
}

impl Common {
    fn resolve(&self) -> Result<RunConfig> {
        if !self.config.is_file() {
            return Err(mtnav::Error::Validation(format!("config file {} does not exist", self.config.display())).into());
        }
        let mut cfg = load_config(&self.config)?;
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(out) = &self.out {
            cfg.out_dir = out.clone();
        }
        if let Some(w) = self.workers {
            cfg.train.workers = w;
        }
        cfg.validate()?;
        let path = echo_config(&cfg, &cfg.out_dir)?;
        log::info!("resolved configuration written to {}", path.display());
        Ok(cfg)
    }
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn checkpoint_path(cfg: &RunConfig, given: Option<PathBuf>) -> Result<PathBuf> {
    let path = given.unwrap_or_else(|| cfg.out_dir.join(FINAL_CHECKPOINT));
    if !path.is_file() {
        return Err(mtnav::Error::Validation(format!("checkpoint {} does not exist", path.display())).into());
    }
    Ok(path)
}

fn gen_maps(common: &Common) -> Result<()> {
    let cfg = common.resolve()?;
    let exp = Experiment::new(cfg)?;
    let suite = exp.plans()?;
    let plans: Vec<FloorPlan> = suite.train.iter().chain(&suite.heldout).map(|p| (**p).clone()).collect();
    let path = exp.cfg.out_dir.join("plans.txt");
    save_plans(&path, &plans)?;
    println!(
        "wrote {} training and {} held-out plans to {}",
        suite.train.len(),
        suite.heldout.len(),
        path.display()
    );
    Ok(())
}

fn train(common: &Common, checkpoint: Option<PathBuf>) -> Result<()> {
    let cfg = common.resolve()?;
    let resume = match checkpoint {
        Some(p) => Some(Checkpoint::load(&checkpoint_path(&cfg, Some(p))?)?),
        None => None,
    };
    let exp = Experiment::new(cfg)?;
    let plans = exp.plans()?;
    let started = Instant::now();
    let (_, report) = exp.train(&plans.train, Some(&exp.cfg.out_dir), resume)?;
    println!(
        "trained {} episodes in {:.1}s: {} batches, {} dropped; checkpoint {}",
        report.episodes_completed,
        started.elapsed().as_secs_f64(),
        report.batches,
        report.dropped,
        exp.cfg.out_dir.join(FINAL_CHECKPOINT).display()
    );
    Ok(())
}

fn eval(common: &Common, checkpoint: Option<PathBuf>) -> Result<()> {
    let cfg = common.resolve()?;
    let ckpt = checkpoint_path(&cfg, checkpoint)?;
    let exp = Experiment::new(cfg)?;
    let params = exp.load_params(&ckpt)?;
    let plans = exp.plans()?;
    let suite = exp.eval_suite(&plans.heldout)?;
    let (report, traces) = exp.evaluate(&params, &suite)?;
    let out = &exp.cfg.out_dir;
    write(&out.join("report.txt"), &report.to_string())?;
    write(&out.join("report.json"), &serde_json::to_string_pretty(&report)?)?;
    export_traces(&traces, &out.join("traces.jsonl"))?;
    print!("{report}");
    Ok(())
}

fn ablate(common: &Common) -> Result<()> {
    let cfg = common.resolve()?;
    let result = ablation_run(&cfg)?;
    write(&cfg.out_dir.join("ablation.txt"), &result.to_string())?;
    write(&cfg.out_dir.join("ablation.json"), &serde_json::to_string_pretty(&result)?)?;
    print!("{result}");
    Ok(())
}

fn trace(common: &Common, checkpoint: Option<PathBuf>, episode: Option<usize>) -> Result<()> {
    let cfg = common.resolve()?;
    let ckpt = checkpoint_path(&cfg, checkpoint)?;
    let index = episode.unwrap_or(cfg.eval.trace_episode);
    let exp = Experiment::new(cfg)?;
    let params = exp.load_params(&ckpt)?;
    let plans = exp.plans()?;
    let suite = exp.eval_suite(&plans.heldout)?;
    let task = suite.get(index).cloned().ok_or_else(|| {
        mtnav::Error::Validation(format!("episode {index} outside the {}-episode suite", suite.len()))
    })?;
    let (_, traces) = exp.evaluate(&params, std::slice::from_ref(&task))?;
    let Some(t) = traces.first() else {
        anyhow::bail!("episode {index} has an unreachable target and was skipped");
    };
    let path = exp.cfg.out_dir.join(format!("trace_{index:04}.jsonl"));
    export_traces(std::slice::from_ref(t), &path)?;
    println!(
        "episode {index}: plan {} target {} steps {} success {}",
        t.plan_id,
        t.target,
        t.steps.len(),
        t.outcome.success
    );
    println!("{:>4} {:>12} {:>7} {:>7} {:>7} {:>7} {:>7}", "t", "action", "IT", "ST", "NT", "ET", "OT");
    for (i, s) in t.steps.iter().enumerate() {
        let a = &s.activation_means;
        println!(
            "{i:>4} {:>12} {:>7.3} {:>7.3} {:>7.3} {:>7.3} {:>7.3}",
            format!("{:?}", s.action),
            a[0],
            a[1],
            a[2],
            a[3],
            a[4]
        );
    }
    println!("trace written to {}", path.display());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenMaps(c) => gen_maps(&c),
        Command::Train { common, checkpoint } => train(&common, checkpoint),
        Command::Eval { common, checkpoint } => eval(&common, checkpoint),
        Command::Ablate(c) => ablate(&c),
        Command::Trace {
            common,
            checkpoint,
            episode,
        } => trace(&common, checkpoint, episode),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let validation = e.downcast_ref::<mtnav::Error>().is_some_and(|e| e.is_validation());
            ExitCode::from(if validation { 1 } else { 2 })
        }
    }
}
