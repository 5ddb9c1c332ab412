use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::agent::{make_target_code, ClassEmbeddings, MtModel, TargetMode};
use crate::env::{EnvConfig, FloorPlan};
use crate::error::{Error, Result};
use crate::eval::EpisodeTrace;
use crate::nn::{AdamConfig, Mode, ParamSet, RngStream};
use crate::perception::{AppearanceTable, MemoryConfig};
use crate::tensor::Tape;

use super::loss::{rollout_losses, RolloutStep};
use super::reward::RewardConfig;
use super::rollout::{sample_action, Episode, EpisodeSpec};
use super::store::{apply_gradients, LogRecord, SharedParamStore};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub workers: usize,
    pub gamma: f64,
    pub n_step: usize,
    pub value_coef: f64,
    pub entropy_coef: f64,
    pub total_episodes: u64,
    pub adam: AdamConfig,
    /// Save a checkpoint every this many completed episodes; 0 disables.
    pub checkpoint_every: u64,
    /// Set from the run seed rather than read from configuration files.
    #[serde(skip)]
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            workers: 4,
            gamma: 0.99,
            n_step: 20,
            value_coef: 0.5,
            entropy_coef: 0.01,
            total_episodes: 30_000,
            adam: AdamConfig::default(),
            checkpoint_every: 0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.workers == 0 {
            return Err(Error::Config("train.workers must be at least 1".into()));
        }
        if self.n_step == 0 {
            return Err(Error::Config("train.n_step must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::Config(format!("train.gamma {} outside [0, 1]", self.gamma)));
        }
        if !(self.adam.lr > 0.0 && self.adam.lr.is_finite()) {
            return Err(Error::Config("train.adam.lr must be positive".into()));
        }
        if self.value_coef < 0.0 || self.entropy_coef < 0.0 {
            return Err(Error::Config("loss coefficients must be non-negative".into()));
        }
        Ok(())
    }
}

/// Read-only state shared by every worker.
pub struct TrainJob<'a> {
    pub model: &'a MtModel,
    pub table: &'a AppearanceTable,
    pub plans: &'a [Arc<FloorPlan>],
    /// Classes that may be drawn as targets.
    pub targets: &'a [usize],
    pub allowed: Option<Arc<[bool]>>,
    pub env: &'a EnvConfig,
    pub memory: MemoryConfig,
    pub reward: &'a RewardConfig,
    pub target_mode: TargetMode,
    pub embeddings: Option<&'a ClassEmbeddings>,
    pub train: &'a TrainConfig,
    pub checkpoint_dir: Option<PathBuf>,
    /// Keep every episode trace in the report.
    pub keep_traces: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct EpisodeSummary {
    pub episode_id: u64,
    pub worker: usize,
    pub success: bool,
    pub steps: usize,
    pub episode_return: f64,
}

#[derive(Clone, Debug, Default)]
pub struct WorkerReport {
    pub worker: usize,
    pub batches: u64,
    pub episodes: Vec<EpisodeSummary>,
    pub traces: Vec<EpisodeTrace>,
}

#[derive(Clone, Debug, Default)]
pub struct TrainReport {
    pub workers: Vec<WorkerReport>,
    pub batches: u64,
    pub dropped: u64,
    pub episodes_completed: u64,
}

impl TrainReport {
    /// Episode summaries from all workers ordered by episode number.
    pub fn episodes(&self) -> Vec<EpisodeSummary> {
        let mut all: Vec<EpisodeSummary> = self.workers.iter().flat_map(|w| w.episodes.iter().cloned()).collect();
        all.sort_by_key(|e| e.episode_id);
        all
    }

    pub fn traces(&self) -> Vec<EpisodeTrace> {
        let mut all: Vec<EpisodeTrace> = self.workers.iter().flat_map(|w| w.traces.iter().cloned()).collect();
        all.sort_by_key(|t| t.episode_id);
        all
    }
}

fn validate_job(job: &TrainJob<'_>) -> Result<()> {
    job.train.validate()?;
    job.reward.validate()?;
    job.env.validate()?;
    job.memory.validate()?;
    if job.plans.is_empty() {
        return Err(Error::Config("no training plans".into()));
    }
    if job.targets.is_empty() {
        return Err(Error::Config("no training target classes".into()));
    }
    if let Some(&bad) = job.targets.iter().find(|&&c| c >= job.model.n_classes()) {
        return Err(Error::Task(format!("target class {bad} exceeds {} classes", job.model.n_classes())));
    }
    Ok(())
}

/// Runs A3C until `total_episodes` episodes have completed. With one worker
/// the run is fully determined by the seed; more workers run on threads and
/// interleave their updates.
pub fn train(job: &TrainJob<'_>, store: &SharedParamStore) -> Result<TrainReport> {
    validate_job(job)?;
    if let Some(dir) = &job.checkpoint_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let root = RngStream::new(job.train.seed);
    let workers = if job.train.workers == 1 {
        vec![worker_loop(0, job, store, root.derive(1))?]
    } else {
        std::thread::scope(|s| {
            let handles: Vec<_> = (0..job.train.workers)
                .map(|w| {
                    let rng = root.derive(1 + w as u64);
                    s.spawn(move || worker_loop(w, job, store, rng))
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().unwrap_or_else(|_| Err(Error::Contract("training worker panicked".into()))))
                .collect::<Result<Vec<_>>>()
        })?
    };
    let g = store.lock();
    Ok(TrainReport {
        workers,
        batches: g.batches,
        dropped: g.dropped,
        episodes_completed: store.episodes_completed(),
    })
}

fn draw_task(job: &TrainJob<'_>, rng: &mut RngStream) -> Result<(Arc<FloorPlan>, usize)> {
    for _ in 0..1000 {
        let plan = &job.plans[rng.below(job.plans.len())];
        let present: Vec<usize> = job.targets.iter().copied().filter(|&c| plan.has_class(c)).collect();
        if !present.is_empty() {
            return Ok((plan.clone(), present[rng.below(present.len())]));
        }
    }
    Err(Error::Task("no training plan contains any of the target classes".into()))
}

/// One A3C worker: claims episodes from the shared budget, rolls out
/// `n_step` segments against a local parameter copy and pushes gradients.
pub fn worker_loop(worker: usize, job: &TrainJob<'_>, store: &SharedParamStore, mut rng: RngStream) -> Result<WorkerReport> {
    let spec = EpisodeSpec {
        model: job.model,
        table: job.table,
        env: job.env,
        memory: job.memory,
        reward: job.reward,
    };
    let cfg = job.train;
    let mut local: ParamSet = store.snapshot();
    let mut report = WorkerReport {
        worker,
        ..WorkerReport::default()
    };
    while let Some(episode_id) = store.claim_episode(cfg.total_episodes) {
        let mut ep = loop {
            let (plan, class) = draw_task(job, &mut rng)?;
            let code = make_target_code(class, job.model.n_classes(), job.target_mode, job.embeddings)?;
            let use_rma = job.reward.uses_rma(episode_id);
            let ep = Episode::begin(&spec, plan, code, Mode::Train, &mut rng, job.allowed.clone(), episode_id, use_rma)?;
            // unreachable targets teach nothing and cannot succeed
            if ep.env().l_star().is_some() {
                break ep;
            }
        };
        let mut episode_return = 0.0;
        while !ep.is_over() {
            store.copy_into(&mut local)?;
            let mut tape = Tape::new();
            let p = local.bind(&mut tape, true);
            let (mut h, mut c) = ep.recurrent_vars(&mut tape);
            let mut steps = Vec::with_capacity(cfg.n_step);
            while steps.len() < cfg.n_step && !ep.is_over() {
                let out = ep.forward(job.model, job.table, &mut tape, &p, h, c, Mode::Train, &mut rng)?;
                let action = sample_action(&tape, out.logits, &mut rng);
                let r = ep.advance(&tape, &out, action, job.reward)?;
                episode_return += r.total;
                steps.push(RolloutStep {
                    logits: out.logits,
                    value: out.value,
                    action: action.index(),
                    reward: r.total,
                });
                h = out.h;
                c = out.c;
            }
            let bootstrap = if ep.is_over() {
                0.0
            } else {
                let out = ep.forward(job.model, job.table, &mut tape, &p, h, c, Mode::Train, &mut rng)?;
                tape.value(out.value).item()
            };
            let loss = rollout_losses(&mut tape, &steps, cfg.gamma, cfg.value_coef, cfg.entropy_coef, bootstrap)?;
            tape.backward(loss.total)?;
            let grads = local.grads(&tape, &p);
            let applied = apply_gradients(store, &grads, &cfg.adam)?;
            report.batches += 1;
            let n = steps.len() as f64;
            store.write_log(&LogRecord {
                step: store.lock().batches,
                worker,
                loss: tape.value(loss.total).item() / n,
                entropy: loss.entropy / n,
                episodes: store.episodes_completed(),
                dropped: !applied,
            });
        }
        let trace = ep.finish();
        report.episodes.push(EpisodeSummary {
            episode_id,
            worker,
            success: trace.outcome.success,
            steps: trace.steps.len(),
            episode_return,
        });
        if job.keep_traces {
            report.traces.push(trace);
        }
        let done = store.complete_episode();
        if let Some(dir) = &job.checkpoint_dir {
            if cfg.checkpoint_every > 0 && done.is_multiple_of(cfg.checkpoint_every) {
                save_checkpoint(store, &dir.join(format!("ckpt_{done:06}.bin")))?;
            }
        }
        if done.is_multiple_of(500) {
            log::info!("worker {worker}: {done} episodes completed");
        }
    }
    Ok(report)
}

pub fn save_checkpoint(store: &SharedParamStore, path: &Path) -> Result<()> {
    store.checkpoint().save(path)
}
