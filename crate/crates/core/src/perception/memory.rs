use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::env::{AgentState, StepResult};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct MemoryConfig {
    pub cap_n: usize,
    pub cap_e: usize,
    pub cap_o: usize,
}

impl Default for MemoryConfig {
    fn default() -> Self {
        MemoryConfig {
            cap_n: 40,
            cap_e: 200,
            cap_o: 50,
        }
    }
}

impl MemoryConfig {
    pub fn validate(&self) -> Result<()> {
        if self.cap_n == 0 || self.cap_e == 0 || self.cap_o == 0 {
            return Err(Error::Config("memory caps must be positive".into()));
        }
        Ok(())
    }
}

/// Target sighting: where it appeared in the image and where the agent stood.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TomgNode {
    pub bbox: [f64; 4],
    pub state: AgentState,
    pub confidence: f64,
}

/// Per-episode memories: target sightings, visited poses and blocked cells,
/// each a FIFO bounded by its cap.
#[derive(Clone, Debug, PartialEq)]
pub struct Memories {
    cfg: MemoryConfig,
    pub tomg: VecDeque<TomgNode>,
    pub history: VecDeque<AgentState>,
    pub obstacles: VecDeque<(i32, i32)>,
}

impl Memories {
    pub fn new(cfg: MemoryConfig) -> Self {
        Memories {
            cfg,
            tomg: VecDeque::new(),
            history: VecDeque::new(),
            obstacles: VecDeque::new(),
        }
    }

    pub fn config(&self) -> &MemoryConfig {
        &self.cfg
    }

    pub fn clear(&mut self) {
        self.tomg.clear();
        self.history.clear();
        self.obstacles.clear();
    }

    /// Records the step that produced `obs`, with the agent now at `state`.
    pub fn update(&mut self, obs: &StepResult, state: &AgentState, target: usize) {
        push_capped(&mut self.history, *state, self.cfg.cap_e);
        let best = obs
            .detections
            .iter()
            .filter(|d| d.class_id == target)
            .max_by(|a, b| a.confidence.total_cmp(&b.confidence));
        if let Some(d) = best {
            let node = TomgNode {
                bbox: d.bbox,
                state: *state,
                confidence: d.confidence,
            };
            push_capped(&mut self.tomg, node, self.cfg.cap_n);
        }
        if let Some(cell) = obs.blocked.filter(|_| obs.collided) {
            if !self.obstacles.contains(&cell) {
                push_capped(&mut self.obstacles, cell, self.cfg.cap_o);
            }
        }
    }
}

fn push_capped<T>(q: &mut VecDeque<T>, item: T, cap: usize) {
    if q.len() == cap {
        q.pop_front();
    }
    q.push_back(item);
}
