use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::agent::{make_target_code, ClassEmbeddings, TargetMode};
use crate::env::{Action, FloorPlan};
use crate::error::Result;
use crate::nn::{Mode, ParamSet, RngStream};
use crate::tensor::Tape;
use crate::training::{greedy_action, sample_action, Episode, EpisodeSpec};

use super::metrics::{metrics_report, MetricsReport};
use super::trace::EpisodeTrace;

/// One evaluation episode: a plan, a target class and the seed that fixes
/// the start pose (and sampled actions when not greedy).
#[derive(Clone, Debug)]
pub struct EvalTask {
    pub plan: Arc<FloorPlan>,
    pub target: usize,
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionSelection {
    #[default]
    Greedy,
    Sample,
    /// Uniform over all actions, ignoring the network output.
    Random,
}

pub struct EvalSetup<'a> {
    pub spec: EpisodeSpec<'a>,
    pub params: &'a ParamSet,
    pub target_mode: TargetMode,
    pub embeddings: Option<&'a ClassEmbeddings>,
    pub allowed: Option<Arc<[bool]>>,
    pub selection: ActionSelection,
}

/// Runs one episode in eval mode. Returns `None` when the target cannot be
/// reached from the drawn start.
pub fn run_episode(setup: &EvalSetup<'_>, task: &EvalTask, episode_id: u64) -> Result<Option<EpisodeTrace>> {
    let model = setup.spec.model;
    let code = make_target_code(task.target, model.n_classes(), setup.target_mode, setup.embeddings)?;
    let mut rng = RngStream::new(task.seed);
    let mut ep = Episode::begin(
        &setup.spec,
        task.plan.clone(),
        code,
        Mode::Eval,
        &mut rng,
        setup.allowed.clone(),
        episode_id,
        false,
    )?;
    if ep.env().l_star().is_none() {
        log::warn!(
            "skipping episode {episode_id}: class {} unreachable in plan {}",
            task.target,
            task.plan.id
        );
        return Ok(None);
    }
    let mut tape = Tape::new();
    let p = setup.params.bind(&mut tape, false);
    let (mut h, mut c) = ep.recurrent_vars(&mut tape);
    while !ep.is_over() {
        let out = ep.forward(model, setup.spec.table, &mut tape, &p, h, c, Mode::Eval, &mut rng)?;
        let action = match setup.selection {
            ActionSelection::Greedy => greedy_action(&tape, out.logits),
            ActionSelection::Sample => sample_action(&tape, out.logits, &mut rng),
            ActionSelection::Random => Action::ALL[rng.below(Action::COUNT)],
        };
        ep.advance(&tape, &out, action, setup.spec.reward)?;
        h = out.h;
        c = out.c;
    }
    Ok(Some(ep.finish()))
}

/// Evaluates every task (in parallel) and aggregates the metrics. Episode
/// ids are task indices, so results do not depend on scheduling.
pub fn evaluate(setup: &EvalSetup<'_>, suite: &[EvalTask]) -> Result<(MetricsReport, Vec<EpisodeTrace>)> {
    if suite.is_empty() {
        return Err(crate::Error::Config("evaluation suite is empty".into()));
    }
    let results: Vec<Result<Option<EpisodeTrace>>> = suite
        .par_iter()
        .enumerate()
        .map(|(i, task)| run_episode(setup, task, i as u64))
        .collect();
    let mut traces = Vec::with_capacity(suite.len());
    for r in results {
        if let Some(t) = r? {
            traces.push(t);
        }
    }
    let report = metrics_report(&traces)?;
    Ok((report, traces))
}

/// Tasks covering every (plan, target) pair present, `per_pair` start seeds
/// each, seeds derived from `seed`.
pub fn build_suite(plans: &[Arc<FloorPlan>], targets: &[usize], per_pair: usize, seed: u64) -> Vec<EvalTask> {
    let root = RngStream::new(seed);
    let mut out = Vec::new();
    for plan in plans {
        for &t in targets {
            if !plan.has_class(t) {
                continue;
            }
            for _ in 0..per_pair {
                let s = root.derive(out.len() as u64 + 1).next_u64();
                out.push(EvalTask {
                    plan: plan.clone(),
                    target: t,
                    seed: s,
                });
            }
        }
    }
    out
}
