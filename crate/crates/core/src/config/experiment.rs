use std::fs;
use std::path::Path;
use std::sync::Arc;

use crate::agent::{ClassEmbeddings, MtModel, TargetMode};
use crate::env::{generate_suite, load_plans, FloorPlan, Split};
use crate::error::{Error, Result};
use crate::eval::{build_suite, ActionSelection, evaluate, EpisodeTrace, EvalSetup, EvalTask, MetricsReport};
use crate::nn::{Checkpoint, ParamSet};
use crate::perception::AppearanceTable;
use crate::training::{train, EpisodeSpec, SharedParamStore, TrainJob, TrainReport};

use super::run::RunConfig;
use super::split::{apply_split, Phase, SplitPlan, TaskSplit};

pub const TRAIN_LOG: &str = "train_log.jsonl";
pub const CHECKPOINT_DIR: &str = "checkpoints";
pub const FINAL_CHECKPOINT: &str = "final.ckpt";

#[derive(Clone, Debug)]
pub struct PlanSuite {
    pub train: Vec<Arc<FloorPlan>>,
    pub heldout: Vec<Arc<FloorPlan>>,
}

/// A configuration turned into a model, its initial parameters and the
/// fixed inputs (appearance table, embeddings, split) shared by training and
/// evaluation.
pub struct Experiment {
    pub cfg: RunConfig,
    pub model: MtModel,
    pub init: ParamSet,
    pub table: AppearanceTable,
    pub embeddings: Option<ClassEmbeddings>,
    pub split: Option<TaskSplit>,
}

impl Experiment {
    pub fn new(cfg: RunConfig) -> Result<Experiment> {
        cfg.validate()?;
        let n = cfg.n_classes();
        let (model, init) = MtModel::new(&cfg.model, cfg.variant, n, cfg.env.grid_channels, cfg.seed)?;
        let table = AppearanceTable::seeded(n, cfg.model.appearance_dim, cfg.model.appearance_seed);
        let embeddings = match (&cfg.zero_shot.embedding_file, cfg.target_mode()) {
            (Some(p), TargetMode::Similarity) => {
                let e = ClassEmbeddings::load(p)?;
                if e.len() != n {
                    return Err(Error::Validation(format!(
                        "{} holds {} class embeddings, config has {n} classes",
                        p.display(),
                        e.len()
                    )));
                }
                Some(e)
            }
            _ => None,
        };
        let split = cfg.task_split()?;
        Ok(Experiment {
            cfg,
            model,
            init,
            table,
            embeddings,
            split,
        })
    }

    /// Training and held-out plans, loaded from `suite.plans_file` or
    /// generated from the suite seeds.
    pub fn plans(&self) -> Result<PlanSuite> {
        let s = &self.cfg.suite;
        let (train, heldout): (Vec<FloorPlan>, Vec<FloorPlan>) = match &s.plans_file {
            Some(p) => load_plans(p)?.into_iter().partition(|pl| pl.split == Split::Train),
            None => (
                generate_suite(s.train_seed, s.train_plans, &self.cfg.generation, "train", Split::Train)?,
                generate_suite(s.heldout_seed, s.heldout_plans, &self.cfg.generation, "test", Split::Test)?,
            ),
        };
        if train.is_empty() || heldout.is_empty() {
            return Err(Error::Validation("plan suite needs both training and held-out plans".into()));
        }
        Ok(PlanSuite {
            train: train.into_iter().map(Arc::new).collect(),
            heldout: heldout.into_iter().map(Arc::new).collect(),
        })
    }

    pub fn split_plan(&self, phase: Phase) -> Result<SplitPlan> {
        let n = self.cfg.n_classes();
        match &self.split {
            Some(split) => apply_split(split, phase, self.cfg.zero_shot.eval_on, n),
            None => Ok(SplitPlan {
                targets: (0..n).collect(),
                allowed: None,
            }),
        }
    }

    fn spec(&self) -> EpisodeSpec<'_> {
        EpisodeSpec {
            model: &self.model,
            table: &self.table,
            env: &self.cfg.env,
            memory: self.cfg.memory,
            reward: &self.cfg.reward,
        }
    }

    /// Trains from the initial parameters, or from `resume` when given.
    /// With `out`, the training log, periodic checkpoints and the final
    /// checkpoint are written there.
    pub fn train(&self, plans: &[Arc<FloorPlan>], out: Option<&Path>, resume: Option<Checkpoint>) -> Result<(ParamSet, TrainReport)> {
        let split = self.split_plan(Phase::Train)?;
        let mut train_cfg = self.cfg.train.clone();
        train_cfg.seed = self.cfg.seed;
        let store = match resume {
            Some(ck) => {
                let mut probe = self.init.clone();
                probe.copy_from(&ck.params)?;
                SharedParamStore::from_checkpoint(ck)
            }
            None => SharedParamStore::new(self.init.clone()),
        };
        let store = match out {
            Some(dir) => {
                fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
                let path = dir.join(TRAIN_LOG);
                let file = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
                store.with_log(Box::new(std::io::BufWriter::new(file)))
            }
            None => store,
        };
        let job = TrainJob {
            model: &self.model,
            table: &self.table,
            plans,
            targets: &split.targets,
            allowed: split.allowed.clone(),
            env: &self.cfg.env,
            memory: self.cfg.memory,
            reward: &self.cfg.reward,
            target_mode: self.cfg.target_mode(),
            embeddings: self.embeddings.as_ref(),
            train: &train_cfg,
            checkpoint_dir: out.map(|d| d.join(CHECKPOINT_DIR)),
            keep_traces: false,
        };
        let report = train(&job, &store)?;
        if let Some(dir) = out {
            store.checkpoint().save(&dir.join(FINAL_CHECKPOINT))?;
        }
        Ok((store.snapshot(), report))
    }

    /// Parameters from a checkpoint, checked against this model's layout.
    pub fn load_params(&self, path: &Path) -> Result<ParamSet> {
        if !path.is_file() {
            return Err(Error::Validation(format!("checkpoint {} does not exist", path.display())));
        }
        let ck = Checkpoint::load(path)?;
        let mut params = self.init.clone();
        params.copy_from(&ck.params)?;
        Ok(params)
    }

    /// Held-out evaluation tasks for the eval-phase target classes.
    pub fn eval_suite(&self, heldout: &[Arc<FloorPlan>]) -> Result<Vec<EvalTask>> {
        let split = self.split_plan(Phase::Eval)?;
        let suite = build_suite(heldout, &split.targets, self.cfg.eval.starts_per_pair, self.cfg.eval.seed);
        if suite.is_empty() {
            return Err(Error::Task("no held-out plan contains an evaluation target class".into()));
        }
        Ok(suite)
    }

    pub fn evaluate(&self, params: &ParamSet, suite: &[EvalTask]) -> Result<(MetricsReport, Vec<EpisodeTrace>)> {
        self.evaluate_with(params, suite, self.cfg.eval.selection)
    }

    /// Evaluation with `selection` in place of the configured action choice.
    pub fn evaluate_with(
        &self,
        params: &ParamSet,
        suite: &[EvalTask],
        selection: ActionSelection,
    ) -> Result<(MetricsReport, Vec<EpisodeTrace>)> {
        let split = self.split_plan(Phase::Eval)?;
        let setup = EvalSetup {
            spec: self.spec(),
            params,
            target_mode: self.cfg.target_mode(),
            embeddings: self.embeddings.as_ref(),
            allowed: split.allowed,
            selection,
        };
        evaluate(&setup, suite)
    }
}

impl RunConfig {
    /// Target encoding in effect: similarity codes only in zero-shot mode.
    pub fn target_mode(&self) -> TargetMode {
        if self.zero_shot.enabled {
            self.zero_shot.target_mode
        } else {
            TargetMode::OneHot
        }
    }
}
