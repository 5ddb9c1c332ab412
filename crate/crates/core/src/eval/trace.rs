//! Per-episode traces and their line-delimited JSON export.
//!
//! Each episode is written as one header line followed by one line per
//! step:
//!
//! ```text
//! {"kind":"episode","episode_id":0,"plan_id":"p000",...}
//! {"kind":"step","t":0,"pose":{...},"action":"MoveAhead",...}
//! ```

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::env::{Action, AgentState};
use crate::error::{Error, Result};

/// Labels of the seven reward components, in storage order.
pub const REWARD_COMPONENTS: [&str; 7] = ["step", "move", "success", "r_s", "r_n", "r_e", "r_o"];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    /// Pose after the action.
    pub pose: AgentState,
    pub action: Action,
    pub reward: [f64; 7],
    pub total: f64,
    /// Target detected in the observation that followed the action.
    pub target_detected: bool,
    pub collided: bool,
    /// Mean recalibrated activation of each thinking (IT, ST, NT, ET, OT)
    /// in the forward pass that chose the action.
    pub activation_means: [f64; 5],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub success: bool,
    /// Meters walked: 0.5 per MoveAhead that changed the pose.
    pub path_length: f64,
    pub l_star: Option<f64>,
    /// Actions taken before the target was first seen; `Some(0)` when it
    /// was visible from the start pose.
    pub first_visible_step: Option<usize>,
    /// Geodesic distance to the target from the pose of the first sighting.
    pub l_star_nav: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeTrace {
    pub episode_id: u64,
    pub plan_id: String,
    pub target: usize,
    pub start: AgentState,
    pub start_detected: bool,
    pub steps: Vec<StepRecord>,
    pub outcome: Outcome,
}

impl EpisodeTrace {
    /// Pose from which the target was first seen.
    pub fn first_visible_pose(&self) -> Option<AgentState> {
        match self.outcome.first_visible_step? {
            0 => Some(self.start),
            k => Some(self.steps[k - 1].pose),
        }
    }

    /// Actions counted for path-based metrics: everything except `Done`.
    pub fn action_count(&self) -> usize {
        self.steps.iter().filter(|s| s.action != Action::Done).count()
    }
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum Line {
    Episode {
        episode_id: u64,
        plan_id: String,
        target: usize,
        start: AgentState,
        start_detected: bool,
        n_steps: usize,
        outcome: Outcome,
    },
    Step {
        t: usize,
        #[serde(flatten)]
        record: StepRecord,
    },
}

pub fn export_traces(traces: &[EpisodeTrace], path: &Path) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let mut put = |line: &Line| -> Result<()> {
        let text = serde_json::to_string(line).map_err(|e| Error::format(path, e.to_string()))?;
        writeln!(w, "{text}").map_err(|e| Error::io(path, e))
    };
    for tr in traces {
        put(&Line::Episode {
            episode_id: tr.episode_id,
            plan_id: tr.plan_id.clone(),
            target: tr.target,
            start: tr.start,
            start_detected: tr.start_detected,
            n_steps: tr.steps.len(),
            outcome: tr.outcome.clone(),
        })?;
        for (t, record) in tr.steps.iter().enumerate() {
            put(&Line::Step { t, record: *record })?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn import_traces(path: &Path) -> Result<Vec<EpisodeTrace>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut traces: Vec<(EpisodeTrace, usize)> = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: Line =
            serde_json::from_str(&line).map_err(|e| Error::format(path, format!("line {}: {e}", i + 1)))?;
        match parsed {
            Line::Episode {
                episode_id,
                plan_id,
                target,
                start,
                start_detected,
                n_steps,
                outcome,
            } => traces.push((
                EpisodeTrace {
                    episode_id,
                    plan_id,
                    target,
                    start,
                    start_detected,
                    steps: Vec::with_capacity(n_steps),
                    outcome,
                },
                n_steps,
            )),
            Line::Step { t, record } => {
                let (tr, _) = traces
                    .last_mut()
                    .ok_or_else(|| Error::format(path, format!("line {}: step before any episode header", i + 1)))?;
                if t != tr.steps.len() {
                    return Err(Error::format(
                        path,
                        format!("line {}: step {t} out of order (expected {})", i + 1, tr.steps.len()),
                    ));
                }
                tr.steps.push(record);
            }
        }
    }
    traces
        .into_iter()
        .map(|(tr, n)| {
            if tr.steps.len() == n {
                Ok(tr)
            } else {
                Err(Error::format(
                    path,
                    format!("episode {} declares {n} steps, found {}", tr.episode_id, tr.steps.len()),
                ))
            }
        })
        .collect()
}
