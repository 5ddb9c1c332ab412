use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::env::{Action, AgentState};
use crate::error::{Error, Result};

/// When the meta-ability rewards are paid.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RmaMode {
    /// Episodes numbered below `schedule_c` only.
    #[default]
    Scheduled,
    Always,
    Off,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RewardConfig {
    pub step_penalty: f64,
    pub move_bonus: f64,
    pub success_reward: f64,
    pub r_s: f64,
    pub r_n: f64,
    pub r_e: f64,
    pub r_o: f64,
    pub schedule_c: u64,
    pub rma: RmaMode,
}

impl Default for RewardConfig {
    fn default() -> Self {
        RewardConfig {
            step_penalty: -0.01,
            move_bonus: 0.01,
            success_reward: 5.0,
            r_s: 0.01,
            r_n: 0.01,
            r_e: -0.01,
            r_o: -0.01,
            schedule_c: 6000,
            rma: RmaMode::Scheduled,
        }
    }
}

impl RewardConfig {
    pub fn validate(&self) -> Result<()> {
        let values = [
            self.step_penalty,
            self.move_bonus,
            self.success_reward,
            self.r_s,
            self.r_n,
            self.r_e,
            self.r_o,
        ];
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("reward values must be finite".into()));
        }
        Ok(())
    }

    /// Whether episode number `episode` receives the meta-ability rewards.
    pub fn uses_rma(&self, episode: u64) -> bool {
        match self.rma {
            RmaMode::Scheduled => episode < self.schedule_c,
            RmaMode::Always => true,
            RmaMode::Off => false,
        }
    }
}

/// What the reward function needs to remember within one episode.
#[derive(Clone, Debug)]
pub struct RewardContext {
    visited: HashSet<AgentState>,
    located: bool,
    success_paid: bool,
}

impl RewardContext {
    pub fn new(start: AgentState, start_detected: bool) -> Self {
        RewardContext {
            visited: HashSet::from([start]),
            located: start_detected,
            success_paid: false,
        }
    }

    pub fn located(&self) -> bool {
        self.located
    }
}

/// Observable consequences of one action.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepFacts {
    pub action: Action,
    pub post: AgentState,
    pub collided: bool,
    pub target_detected: bool,
    pub done_valid: bool,
    /// Geodesic distance to the target before and after the action, meters.
    pub geo_before: Option<f64>,
    pub geo_after: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Reward {
    pub total: f64,
    /// `step, move, success, r_s, r_n, r_e, r_o`.
    pub components: [f64; 7],
}

/// Base reward plus, when `use_rma`, the four meta-ability terms. The
/// context is updated afterwards, so "located" and "visited" refer to
/// observations before this step.
pub fn compute_reward(ctx: &mut RewardContext, f: &StepFacts, cfg: &RewardConfig, use_rma: bool) -> Reward {
    let mut c = [0.0; 7];
    c[0] = cfg.step_penalty;
    if f.action == Action::MoveAhead {
        c[1] = cfg.move_bonus;
    }
    if f.action == Action::Done && f.done_valid && !ctx.success_paid {
        c[2] = cfg.success_reward;
        ctx.success_paid = true;
    }
    if use_rma {
        if f.target_detected {
            c[3] = cfg.r_s;
        }
        if ctx.located {
            if let (Some(before), Some(after)) = (f.geo_before, f.geo_after) {
                if after < before {
                    c[4] = cfg.r_n;
                }
            }
        }
        if ctx.visited.contains(&f.post) {
            c[5] = cfg.r_e;
        }
        if f.collided {
            c[6] = cfg.r_o;
        }
    }
    ctx.visited.insert(f.post);
    ctx.located |= f.target_detected;
    Reward {
        total: component_sum(&c),
        components: c,
    }
}

/// Left-to-right sum of the components; totals are defined by this order.
pub fn component_sum(c: &[f64; 7]) -> f64 {
    c.iter().sum()
}
