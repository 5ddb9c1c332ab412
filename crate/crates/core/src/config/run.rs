use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::agent::{ModelConfig, TargetMode, Variant};
use crate::env::{EnvConfig, GenConfig};
use crate::error::{Error, Result};
use crate::eval::ActionSelection;
use crate::perception::MemoryConfig;
use crate::training::{RewardConfig, TrainConfig};

use super::split::{EvalClasses, SplitSpec, TaskSplit};

/// Name of the resolved configuration written into every run directory.
pub const RESOLVED_CONFIG: &str = "config.resolved.toml";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SuiteConfig {
    /// Plan file to load instead of generating; train-split plans are used
    /// for training, the rest are held out.
    pub plans_file: Option<PathBuf>,
    pub train_plans: usize,
    pub heldout_plans: usize,
    pub train_seed: u64,
    pub heldout_seed: u64,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        SuiteConfig {
            plans_file: None,
            train_plans: 16,
            heldout_plans: 4,
            train_seed: 1,
            heldout_seed: 2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    /// Start poses drawn per (plan, target) pair.
    pub starts_per_pair: usize,
    pub seed: u64,
    pub selection: ActionSelection,
    /// Suite index of the episode the `trace` command replays.
    pub trace_episode: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            starts_per_pair: 5,
            seed: 99,
            selection: ActionSelection::Greedy,
            trace_episode: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AblationConfig {
    /// One entry per variant; toggles joined with `+`, e.g. `"no_ot"` or
    /// `"no_et+no_ot"`. The base configuration is always run as well.
    pub variants: Vec<String>,
    pub seeds: Vec<u64>,
}

impl Default for AblationConfig {
    fn default() -> Self {
        AblationConfig {
            variants: Vec::new(),
            seeds: vec![1, 2, 3],
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ZeroShotConfig {
    pub enabled: bool,
    pub target_mode: TargetMode,
    /// Class embedding vectors, required for similarity target codes.
    pub embedding_file: Option<PathBuf>,
    pub split: SplitSpec,
    /// Seed for drawing preset splits; kept apart from the run seed so that
    /// every training seed sees the same classes.
    pub split_seed: u64,
    pub eval_on: EvalClasses,
}

/// Everything a run needs; parsed from TOML with every field defaulted.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub env: EnvConfig,
    pub generation: GenConfig,
    pub suite: SuiteConfig,
    pub model: ModelConfig,
    pub variant: Variant,
    pub memory: MemoryConfig,
    pub reward: RewardConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
    pub ablation: AblationConfig,
    pub zero_shot: ZeroShotConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            out_dir: PathBuf::from("runs/default"),
            env: EnvConfig::default(),
            generation: GenConfig::default(),
            suite: SuiteConfig::default(),
            model: ModelConfig::default(),
            variant: Variant::default(),
            memory: MemoryConfig::default(),
            reward: RewardConfig::default(),
            train: TrainConfig::default(),
            eval: EvalConfig::default(),
            ablation: AblationConfig::default(),
            zero_shot: ZeroShotConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn n_classes(&self) -> usize {
        self.generation.n_classes
    }

    /// Seen / unseen split when zero-shot mode is on.
    pub fn task_split(&self) -> Result<Option<TaskSplit>> {
        if !self.zero_shot.enabled {
            return Ok(None);
        }
        TaskSplit::from_spec(&self.zero_shot.split, self.n_classes(), self.zero_shot.split_seed).map(Some)
    }

    pub fn validate(&self) -> Result<()> {
        self.env.validate()?;
        self.generation.validate()?;
        self.model.validate()?;
        self.memory.validate()?;
        self.reward.validate()?;
        self.train.validate()?;
        if self.variant.thinkings.count() == 0 {
            return Err(Error::Config("at least one thinking must be enabled".into()));
        }
        // TOML integers are signed 64-bit
        let seeds = [
            self.seed,
            self.suite.train_seed,
            self.suite.heldout_seed,
            self.eval.seed,
            self.zero_shot.split_seed,
        ];
        if seeds.iter().chain(&self.ablation.seeds).any(|&s| s > i64::MAX as u64) {
            return Err(Error::Config("seeds must fit in a signed 64-bit integer".into()));
        }
        if self.suite.plans_file.is_none() && (self.suite.train_plans == 0 || self.suite.heldout_plans == 0) {
            return Err(Error::Config("suite needs at least one training and one held-out plan".into()));
        }
        if self.eval.starts_per_pair == 0 {
            return Err(Error::Config("eval.starts_per_pair must be positive".into()));
        }
        for v in &self.ablation.variants {
            super::ablation_toggles(v)?;
        }
        if self.ablation.seeds.is_empty() {
            return Err(Error::Config("ablation.seeds must not be empty".into()));
        }
        if let Some(p) = &self.suite.plans_file {
            require_file(p)?;
        }
        let zs = &self.zero_shot;
        if zs.target_mode == TargetMode::Similarity {
            match &zs.embedding_file {
                Some(p) => require_file(p)?,
                None => return Err(Error::Config("similarity target mode needs zero_shot.embedding_file".into())),
            }
        }
        self.task_split()?;
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(format!("cannot serialise config: {e}")))
    }

    /// Parses TOML text; unknown keys anywhere in the document are
    /// collected and reported together. Relative paths, including the
    /// output directory, are resolved against `base_dir`.
    pub fn from_toml(text: &str, base_dir: &Path) -> Result<RunConfig> {
        let mut unknown = Vec::new();
        let de = toml::Deserializer::new(text);
        let mut cfg: RunConfig = serde_ignored::deserialize(de, |path| unknown.push(path.to_string()))
            .map_err(|e| Error::Config(e.to_string()))?;
        if !unknown.is_empty() {
            return Err(Error::Config(format!("unknown configuration keys: {}", unknown.join(", "))));
        }
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                let joined = base_dir.join(&*p);
                *p = std::path::absolute(&joined).unwrap_or(joined);
            }
        };
        resolve(&mut cfg.out_dir);
        if let Some(p) = cfg.suite.plans_file.as_mut() {
            resolve(p);
        }
        if let Some(p) = cfg.zero_shot.embedding_file.as_mut() {
            resolve(p);
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn require_file(p: &Path) -> Result<()> {
    if p.is_file() {
        Ok(())
    } else {
        Err(Error::Validation(format!("referenced file {} does not exist", p.display())))
    }
}

/// Reads, defaults and validates a configuration file.
pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new("."));
    RunConfig::from_toml(&text, base)
}

/// Writes the fully resolved configuration into `dir` and returns its path.
pub fn echo_config(cfg: &RunConfig, dir: &Path) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let path = dir.join(RESOLVED_CONFIG);
    fs::write(&path, cfg.to_toml()?).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}
