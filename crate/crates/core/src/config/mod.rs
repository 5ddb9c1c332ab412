//! Run configuration, the seen/unseen task split and the experiment
//! pipeline shared by the command-line tool and the acceptance suite.

mod ablation;
mod experiment;
mod run;
mod split;
mod toggles;

pub use ablation::{ablation_run, AblationResult, AblationRow, VariantMean, BASE_VARIANT};
pub use experiment::{Experiment, PlanSuite, CHECKPOINT_DIR, FINAL_CHECKPOINT, TRAIN_LOG};
pub use run::{
    echo_config, load_config, AblationConfig, EvalConfig, RunConfig, SuiteConfig, ZeroShotConfig, RESOLVED_CONFIG,
};
pub use split::{apply_split, EvalClasses, Phase, SplitPlan, SplitSpec, TaskSplit, CLASS_POOLS};
pub use toggles::{ablation_toggles, apply_toggles, Toggle};
