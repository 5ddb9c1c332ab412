use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Mode, RngStream};
use crate::tensor::Tensor;

use super::geometry::{Heading, Pitch};
use super::paths::DistanceField;
use super::plan::FloorPlan;
use super::sensor::{local_grid, visibility, AgentState, Detection};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Action {
    MoveAhead,
    RotateLeft,
    RotateRight,
    LookDown,
    LookUp,
    Done,
}

impl Action {
    pub const COUNT: usize = 6;
    /// Policy output order.
    pub const ALL: [Action; 6] = [
        Action::MoveAhead,
        Action::RotateLeft,
        Action::RotateRight,
        Action::LookDown,
        Action::LookUp,
        Action::Done,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Action> {
        Action::ALL.get(i).copied()
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

impl FromStr for Action {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Action::ALL
            .into_iter()
            .find(|a| a.to_string() == s)
            .ok_or_else(|| format!("unknown action `{s}`"))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnvConfig {
    pub max_steps: usize,
    /// Detection range in cells.
    pub view_range: i32,
    pub success_distance: f64,
    /// Channels of the egocentric grid: occupancy, distance, class planes.
    pub grid_channels: usize,
    /// Half-width of the uniform confidence jitter applied in training.
    pub confidence_noise: f64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig {
            max_steps: 100,
            view_range: 5,
            success_distance: 1.5,
            grid_channels: 8,
            confidence_noise: 0.05,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_steps == 0 || self.view_range < 1 || self.grid_channels < 3 {
            return Err(Error::Config(
                "max_steps and view_range must be positive and grid_channels at least 3".into(),
            ));
        }
        if self.success_distance.is_nan() || self.success_distance <= 0.0 || !(0.0..=0.5).contains(&self.confidence_noise) {
            return Err(Error::Config(format!(
                "success_distance {} must be positive and confidence_noise {} within [0, 0.5]",
                self.success_distance, self.confidence_noise
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepResult {
    pub detections: Vec<Detection>,
    pub local_grid: Tensor,
    pub collided: bool,
    /// Cell the agent bumped into, when `collided`.
    pub blocked: Option<(i32, i32)>,
    pub done_valid: bool,
    pub episode_over: bool,
    pub target_detected: bool,
}

/// One navigation episode on a shared plan.
#[derive(Clone, Debug)]
pub struct NavEnv {
    plan: Arc<FloorPlan>,
    cfg: EnvConfig,
    target: usize,
    state: AgentState,
    steps: usize,
    over: bool,
    mode: Mode,
    noise: RngStream,
    allowed: Option<Arc<[bool]>>,
    field: DistanceField,
    l_star: Option<f64>,
}

impl NavEnv {
    /// Random free start cell and heading, level pitch.
    pub fn reset(
        plan: Arc<FloorPlan>,
        target: usize,
        cfg: &EnvConfig,
        mode: Mode,
        rng: &mut RngStream,
        allowed: Option<Arc<[bool]>>,
    ) -> Result<(NavEnv, StepResult)> {
        if !plan.has_class(target) {
            return Err(Error::Task(format!("target class {target} does not occur in plan {}", plan.id)));
        }
        let free = plan.free_cells();
        let (x, y) = free[rng.below(free.len())];
        let heading = Heading::ALL[rng.below(4)];
        let stream = rng.next_u64();
        let noise = rng.derive(stream);
        Self::start(plan, target, cfg, mode, AgentState::new(x, y, heading, Pitch::Level), noise, allowed)
    }

    /// Episode from a fixed start pose; used by scripted scenarios.
    pub fn start(
        plan: Arc<FloorPlan>,
        target: usize,
        cfg: &EnvConfig,
        mode: Mode,
        start: AgentState,
        noise: RngStream,
        allowed: Option<Arc<[bool]>>,
    ) -> Result<(NavEnv, StepResult)> {
        cfg.validate()?;
        if !plan.is_free(start.x, start.y) {
            return Err(Error::Task(format!("start cell ({}, {}) is not free", start.x, start.y)));
        }
        let field = DistanceField::to_class(&plan, target, cfg.success_distance)?;
        let l_star = field.meters(start.cell());
        if l_star.is_none() {
            log::warn!("plan {}: class {target} unreachable from ({}, {})", plan.id, start.x, start.y);
        }
        let mut env = NavEnv {
            plan,
            cfg: cfg.clone(),
            target,
            state: start,
            steps: 0,
            over: false,
            mode,
            noise,
            allowed,
            field,
            l_star,
        };
        let obs = env.observe(false, None, false);
        Ok((env, obs))
    }

    pub fn step(&mut self, action: Action) -> Result<StepResult> {
        if self.over {
            return Err(Error::Contract("step called after the episode ended".into()));
        }
        self.steps += 1;
        let mut collided = false;
        let mut blocked = None;
        let mut done = false;
        let s = &mut self.state;
        match action {
            Action::MoveAhead => {
                let (dx, dy) = s.heading.step();
                let next = (s.x + dx, s.y + dy);
                if self.plan.is_free(next.0, next.1) {
                    s.x = next.0;
                    s.y = next.1;
                } else {
                    collided = true;
                    blocked = Some(next);
                }
            }
            Action::RotateLeft => s.heading = s.heading.left(),
            Action::RotateRight => s.heading = s.heading.right(),
            Action::LookDown => s.pitch = s.pitch.lower().unwrap_or(s.pitch),
            Action::LookUp => s.pitch = s.pitch.raise().unwrap_or(s.pitch),
            Action::Done => done = true,
        }
        let mut obs = self.observe(collided, blocked, false);
        if done {
            let near = self
                .plan
                .instances_of(self.target)
                .map(|o| self.state.distance_m((o.x, o.y)))
                .fold(f64::INFINITY, f64::min);
            obs.done_valid = near <= self.cfg.success_distance && obs.target_detected;
        }
        self.over = done || self.steps >= self.cfg.max_steps;
        obs.episode_over = self.over;
        Ok(obs)
    }

    fn observe(&mut self, collided: bool, blocked: Option<(i32, i32)>, over: bool) -> StepResult {
        let mut detections = Vec::new();
        for o in &self.plan.objects {
            if let Some(allowed) = &self.allowed {
                if !allowed.get(o.class_id).copied().unwrap_or(false) {
                    continue;
                }
            }
            if let Some(mut d) = visibility(&self.plan, &self.state, o, self.cfg.view_range) {
                if self.mode == Mode::Train && self.cfg.confidence_noise > 0.0 {
                    let n = self.cfg.confidence_noise;
                    d.confidence = (d.confidence + self.noise.range(-n, n)).clamp(0.0, 1.0);
                }
                detections.push(d);
            }
        }
        let target_detected = detections.iter().any(|d| d.class_id == self.target);
        let grid = local_grid(
            &self.plan,
            &self.state,
            &detections,
            self.cfg.grid_channels,
            self.cfg.view_range,
        );
        StepResult {
            detections,
            local_grid: grid,
            collided,
            blocked,
            done_valid: false,
            episode_over: over,
            target_detected,
        }
    }

    pub fn state(&self) -> AgentState {
        self.state
    }

    pub fn target(&self) -> usize {
        self.target
    }

    pub fn plan(&self) -> &Arc<FloorPlan> {
        &self.plan
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn steps_taken(&self) -> usize {
        self.steps
    }

    pub fn is_over(&self) -> bool {
        self.over
    }

    /// Optimal path length from the start pose in meters.
    pub fn l_star(&self) -> Option<f64> {
        self.l_star
    }

    /// Geodesic distance in meters from the agent's current cell to the target.
    pub fn geodesic_m(&self) -> Option<f64> {
        self.field.meters(self.state.cell())
    }

    pub fn distance_field(&self) -> &DistanceField {
        &self.field
    }
}
