use std::sync::Arc;

use crate::agent::{activation_means, MtModel, StepOutput, TargetCode};
use crate::env::{Action, AgentState, EnvConfig, FloorPlan, NavEnv, StepResult, CELL_METERS};
use crate::error::{Error, Result};
use crate::eval::{EpisodeTrace, Outcome, StepRecord};
use crate::nn::{BoundParams, Mode, RngStream};
use crate::perception::{build_inputs, AppearanceTable, MemoryConfig, Memories};
use crate::tensor::{Tape, Tensor, Var};

use super::reward::{compute_reward, Reward, RewardConfig, RewardContext, StepFacts};

/// Everything an episode needs that stays fixed across episodes.
#[derive(Clone, Copy)]
pub struct EpisodeSpec<'a> {
    pub model: &'a MtModel,
    pub table: &'a AppearanceTable,
    pub env: &'a EnvConfig,
    pub memory: MemoryConfig,
    pub reward: &'a RewardConfig,
}

/// A running episode: environment, memories, recurrent state and the trace
/// built so far.
pub struct Episode {
    env: NavEnv,
    obs: StepResult,
    memories: Memories,
    target: TargetCode,
    h: Tensor,
    c: Tensor,
    ctx: RewardContext,
    use_rma: bool,
    trace: EpisodeTrace,
}

impl Episode {
    #[allow(clippy::too_many_arguments)]
    pub fn begin(
        spec: &EpisodeSpec<'_>,
        plan: Arc<FloorPlan>,
        target: TargetCode,
        mode: Mode,
        rng: &mut RngStream,
        allowed: Option<Arc<[bool]>>,
        episode_id: u64,
        use_rma: bool,
    ) -> Result<Episode> {
        let (env, obs) = NavEnv::reset(plan, target.class_id, spec.env, mode, rng, allowed)?;
        Ok(Self::from_env(spec, env, obs, target, episode_id, use_rma))
    }

    /// Builds an episode around an environment that is already reset.
    pub fn from_env(
        spec: &EpisodeSpec<'_>,
        env: NavEnv,
        obs: StepResult,
        target: TargetCode,
        episode_id: u64,
        use_rma: bool,
    ) -> Episode {
        let start = env.state();
        let mut memories = Memories::new(spec.memory);
        memories.update(&obs, &start, target.class_id);
        let (h, c) = spec.model.initial_state();
        let trace = EpisodeTrace {
            episode_id,
            plan_id: env.plan().id.clone(),
            target: target.class_id,
            start,
            start_detected: obs.target_detected,
            steps: Vec::new(),
            outcome: Outcome {
                success: false,
                path_length: 0.0,
                l_star: env.l_star(),
                first_visible_step: obs.target_detected.then_some(0),
                l_star_nav: if obs.target_detected { env.l_star() } else { None },
            },
        };
        Episode {
            ctx: RewardContext::new(start, obs.target_detected),
            env,
            obs,
            memories,
            target,
            h,
            c,
            use_rma,
            trace,
        }
    }

    pub fn is_over(&self) -> bool {
        self.env.is_over()
    }

    pub fn env(&self) -> &NavEnv {
        &self.env
    }

    pub fn observation(&self) -> &StepResult {
        &self.obs
    }

    pub fn memories(&self) -> &Memories {
        &self.memories
    }

    pub fn trace(&self) -> &EpisodeTrace {
        &self.trace
    }

    /// Recurrent state carried in from the previous tape, as constants.
    pub fn recurrent_vars(&self, tape: &mut Tape) -> (Var, Var) {
        (tape.constant(self.h.clone()), tape.constant(self.c.clone()))
    }

    /// Forward pass on the current observation starting from `(h, c)`.
    #[allow(clippy::too_many_arguments)]
    pub fn forward(
        &self,
        model: &MtModel,
        table: &AppearanceTable,
        tape: &mut Tape,
        p: &BoundParams,
        h: Var,
        c: Var,
        mode: Mode,
        rng: &mut RngStream,
    ) -> Result<StepOutput> {
        let inputs = build_inputs(&self.obs, self.target.class_id, &self.memories, table);
        let state = self.env.state();
        model.forward(tape, p, &inputs, &state, &self.target, h, c, mode, rng)
    }

    /// Executes `action`, scores it and records the step. `out` is the
    /// forward pass that chose the action; its recurrent state becomes the
    /// episode's.
    pub fn advance(&mut self, tape: &Tape, out: &StepOutput, action: Action, reward_cfg: &RewardConfig) -> Result<Reward> {
        if self.env.is_over() {
            return Err(Error::Contract("episode is already over".into()));
        }
        let geo_before = self.env.geodesic_m();
        let before = self.env.state();
        let result = self.env.step(action)?;
        let post = self.env.state();
        let facts = StepFacts {
            action,
            post,
            collided: result.collided,
            target_detected: result.target_detected,
            done_valid: result.done_valid,
            geo_before,
            geo_after: self.env.geodesic_m(),
        };
        let reward = compute_reward(&mut self.ctx, &facts, reward_cfg, self.use_rma);

        let o = &mut self.trace.outcome;
        if action == Action::MoveAhead && post != before {
            o.path_length += CELL_METERS;
        }
        if action == Action::Done && result.done_valid {
            o.success = true;
        }
        if o.first_visible_step.is_none() && result.target_detected {
            o.first_visible_step = Some(self.trace.steps.len() + 1);
            o.l_star_nav = self.env.geodesic_m();
        }
        self.trace.steps.push(StepRecord {
            pose: post,
            action,
            reward: reward.components,
            total: reward.total,
            target_detected: result.target_detected,
            collided: result.collided,
            activation_means: activation_means(tape, &out.thinking),
        });

        self.memories.update(&result, &post, self.target.class_id);
        self.h = tape.value(out.h).clone();
        self.c = tape.value(out.c).clone();
        self.obs = result;
        Ok(reward)
    }

    pub fn finish(self) -> EpisodeTrace {
        self.trace
    }

    pub fn start_state(&self) -> AgentState {
        self.trace.start
    }
}

/// Softmax probabilities of a `[1 × A]` logit row.
pub fn action_probs(tape: &Tape, logits: Var) -> Vec<f64> {
    let z = tape.value(logits).data();
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// Highest-logit action; ties go to the lowest index.
pub fn greedy_action(tape: &Tape, logits: Var) -> Action {
    let z = tape.value(logits).data();
    let mut best = 0;
    for (i, v) in z.iter().enumerate() {
        if *v > z[best] {
            best = i;
        }
    }
    Action::from_index(best).expect("logit row has one entry per action")
}

pub fn sample_action(tape: &Tape, logits: Var, rng: &mut RngStream) -> Action {
    let probs = action_probs(tape, logits);
    Action::from_index(rng.categorical(&probs)).expect("logit row has one entry per action")
}
