//! Evaluation: episode traces, navigation and meta-ability metrics, and
//! trace export.

mod evaluate;
mod metrics;
mod trace;

pub use evaluate::{build_suite, evaluate, run_episode, ActionSelection, EvalSetup, EvalTask};
pub use metrics::{
    is_long, meta_metrics, metrics_report, navigate_length, nsnpl_term, rep_cp_terms, split_phases, spl_term,
    MetricsReport, SubsetMetrics, LONG_PATH_STEPS, NA,
};
pub use trace::{export_traces, import_traces, EpisodeTrace, Outcome, StepRecord, REWARD_COMPONENTS};
