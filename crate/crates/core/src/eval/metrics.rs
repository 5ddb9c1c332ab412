use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::env::{Action, AgentState, CELL_METERS};
use crate::error::{Error, Result};

use super::trace::{EpisodeTrace, StepRecord};

/// Episodes whose optimal path is longer than this many grid steps form the
/// "L≥5" subset.
pub const LONG_PATH_STEPS: f64 = 5.0;

/// Metrics over one subset of episodes, in percent.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubsetMetrics {
    pub episodes: usize,
    pub nav_episodes: usize,
    pub sr: f64,
    pub spl: f64,
    pub ssr: f64,
    /// `None` when no episode reached the navigate phase.
    pub nsnpl: Option<f64>,
    pub rep: f64,
    pub cp: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub all: SubsetMetrics,
    pub long: SubsetMetrics,
}

/// Search / navigate split at the first step whose pose already had the
/// target in view.
pub fn split_phases(trace: &EpisodeTrace) -> (&[StepRecord], &[StepRecord]) {
    let k = trace.outcome.first_visible_step.unwrap_or(trace.steps.len()).min(trace.steps.len());
    trace.steps.split_at(k)
}

fn ratio_or_one(num: f64, den: f64) -> f64 {
    // success with a zero-length optimal and actual path counts as perfect
    if den == 0.0 {
        1.0
    } else {
        num / den
    }
}

fn l_star(trace: &EpisodeTrace) -> Result<f64> {
    trace
        .outcome
        .l_star
        .ok_or_else(|| Error::Validation(format!("episode {} has no optimal path length", trace.episode_id)))
}

/// `Suc·L*/max(L, L*)`.
pub fn spl_term(trace: &EpisodeTrace) -> Result<f64> {
    if !trace.outcome.success {
        return Ok(0.0);
    }
    let ls = l_star(trace)?;
    Ok(ratio_or_one(ls, trace.outcome.path_length.max(ls)))
}

/// Meters walked during the navigate phase.
pub fn navigate_length(trace: &EpisodeTrace) -> f64 {
    let k = trace.outcome.first_visible_step.unwrap_or(trace.steps.len()).min(trace.steps.len());
    let mut prev = trace.first_visible_pose().unwrap_or(trace.start);
    let mut moves = 0usize;
    for s in &trace.steps[k..] {
        if s.action == Action::MoveAhead && s.pose != prev {
            moves += 1;
        }
        prev = s.pose;
    }
    moves as f64 * CELL_METERS
}

/// `Suc·Nav·L*Nav/max(L^Nav, L*Nav)`; `None` when there is no navigate phase.
pub fn nsnpl_term(trace: &EpisodeTrace) -> Result<Option<f64>> {
    if trace.outcome.first_visible_step.is_none() {
        return Ok(None);
    }
    if !trace.outcome.success {
        return Ok(Some(0.0));
    }
    let ls = trace.outcome.l_star_nav.ok_or_else(|| {
        Error::Validation(format!("episode {} has a navigate phase but no L*Nav", trace.episode_id))
    })?;
    Ok(Some(ratio_or_one(ls, navigate_length(trace).max(ls))))
}

/// `(L − RS)/L` and `OA/L`, with `L` the number of non-Done actions; both
/// are 0 for an episode without such actions.
pub fn rep_cp_terms(trace: &EpisodeTrace) -> (f64, f64) {
    let acting: Vec<&StepRecord> = trace.steps.iter().filter(|s| s.action != Action::Done).collect();
    if acting.is_empty() {
        return (0.0, 0.0);
    }
    let l = acting.len() as f64;
    let distinct: HashSet<AgentState> = acting.iter().map(|s| s.pose).collect();
    let collisions = acting.iter().filter(|s| s.collided).count() as f64;
    ((l - distinct.len() as f64) / l, collisions / l)
}

/// SSR, NSNPL, REP and CP in percent.
pub fn meta_metrics(traces: &[EpisodeTrace]) -> Result<(f64, Option<f64>, f64, f64)> {
    let m = subset_metrics(traces.iter())?;
    Ok((m.ssr, m.nsnpl, m.rep, m.cp))
}

fn subset_metrics<'a>(traces: impl Iterator<Item = &'a EpisodeTrace>) -> Result<SubsetMetrics> {
    let (mut f, mut f_nav) = (0usize, 0usize);
    let (mut sr, mut spl, mut nsnpl, mut rep, mut cp) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for tr in traces {
        f += 1;
        if tr.outcome.success {
            sr += 1.0;
        }
        spl += spl_term(tr)?;
        if let Some(t) = nsnpl_term(tr)? {
            f_nav += 1;
            nsnpl += t;
        }
        let (r, c) = rep_cp_terms(tr);
        rep += r;
        cp += c;
    }
    let pct = |x: f64, n: usize| if n == 0 { 0.0 } else { 100.0 * x / n as f64 };
    Ok(SubsetMetrics {
        episodes: f,
        nav_episodes: f_nav,
        sr: pct(sr, f),
        spl: pct(spl, f),
        ssr: pct(f_nav as f64, f),
        nsnpl: (f_nav > 0).then(|| pct(nsnpl, f_nav)),
        rep: pct(rep, f),
        cp: pct(cp, f),
    })
}

pub fn is_long(trace: &EpisodeTrace) -> bool {
    trace.outcome.l_star.is_some_and(|l| l / CELL_METERS > LONG_PATH_STEPS)
}

pub fn metrics_report(traces: &[EpisodeTrace]) -> Result<MetricsReport> {
    Ok(MetricsReport {
        all: subset_metrics(traces.iter())?,
        long: subset_metrics(traces.iter().filter(|t| is_long(t)))?,
    })
}

/// Printed in place of a metric that is undefined for the subset.
pub const NA: &str = "n/a";

impl fmt::Display for MetricsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:<8} {:>6} {:>6} {:>8} {:>8} {:>8} {:>8} {:>8} {:>8}",
            "subset", "F", "F_Nav", "SR", "SPL", "SSR", "NSNPL", "REP", "CP"
        )?;
        for (name, m) in [("ALL", &self.all), ("L>=5", &self.long)] {
            let nsnpl = m.nsnpl.map_or_else(|| NA.to_string(), |v| format!("{v:.2}"));
            writeln!(
                f,
                "{name:<8} {:>6} {:>6} {:>8.2} {:>8.2} {:>8.2} {nsnpl:>8} {:>8.2} {:>8.2}",
                m.episodes, m.nav_episodes, m.sr, m.spl, m.ssr, m.rep, m.cp
            )?;
        }
        Ok(())
    }
}
