use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::RngStream;

/// Number of class pools the preset splits draw from; class `c` belongs to
/// pool `c % CLASS_POOLS`.
pub const CLASS_POOLS: usize = 4;

/// Seen / unseen split as written in a config file: a preset name
/// (`"18/4"`, `"14/8"`) or explicit lists.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SplitSpec {
    Preset(String),
    Custom { seen: Vec<usize>, unseen: Vec<usize> },
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec::Preset("18/4".into())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSplit {
    pub seen: Vec<usize>,
    pub unseen: Vec<usize>,
}

impl TaskSplit {
    pub fn new(seen: Vec<usize>, unseen: Vec<usize>, n_classes: usize) -> Result<Self> {
        let split = TaskSplit { seen, unseen };
        split.validate(n_classes)?;
        Ok(split)
    }

    pub fn validate(&self, n_classes: usize) -> Result<()> {
        let mut mark = vec![false; n_classes];
        for &c in self.seen.iter().chain(&self.unseen) {
            if c >= n_classes {
                return Err(Error::Validation(format!("split class {c} outside 0..{n_classes}")));
            }
            if mark[c] {
                return Err(Error::Validation(format!("class {c} listed twice in the seen/unseen split")));
            }
            mark[c] = true;
        }
        if self.seen.is_empty() || self.unseen.is_empty() {
            return Err(Error::Validation("seen and unseen class lists must both be nonempty".into()));
        }
        Ok(())
    }

    /// Resolves a spec. Presets draw `k` unseen classes from every pool,
    /// with `k = 1` for `18/4` and `k = 2` for `14/8`.
    pub fn from_spec(spec: &SplitSpec, n_classes: usize, seed: u64) -> Result<Self> {
        match spec {
            SplitSpec::Custom { seen, unseen } => TaskSplit::new(seen.clone(), unseen.clone(), n_classes),
            SplitSpec::Preset(name) => {
                let per_pool = match name.as_str() {
                    "18/4" => 1,
                    "14/8" => 2,
                    other => return Err(Error::Validation(format!("unknown split preset {other:?}"))),
                };
                let mut rng = RngStream::new(seed).derive(0x5911);
                let mut unseen = Vec::new();
                for pool in 0..CLASS_POOLS {
                    let mut members: Vec<usize> = (pool..n_classes).step_by(CLASS_POOLS).collect();
                    if members.len() < per_pool {
                        return Err(Error::Validation(format!(
                            "split {name} needs {per_pool} classes in pool {pool}, only {} of {n_classes} classes fall there",
                            members.len()
                        )));
                    }
                    for _ in 0..per_pool {
                        unseen.push(members.swap_remove(rng.below(members.len())));
                    }
                }
                unseen.sort_unstable();
                let seen = (0..n_classes).filter(|c| !unseen.contains(c)).collect();
                TaskSplit::new(seen, unseen, n_classes)
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    Train,
    Eval,
}

/// Which classes evaluation targets are drawn from.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalClasses {
    Seen,
    #[default]
    Unseen,
    All,
}

/// Target classes and the detector mask for one phase.
#[derive(Clone, Debug, PartialEq)]
pub struct SplitPlan {
    pub targets: Vec<usize>,
    /// `None` means every class is detectable.
    pub allowed: Option<Arc<[bool]>>,
}

/// Training sees only seen-class targets and detections; evaluation draws
/// from the requested classes with the full detector.
pub fn apply_split(split: &TaskSplit, phase: Phase, eval_on: EvalClasses, n_classes: usize) -> Result<SplitPlan> {
    split.validate(n_classes).map_err(|e| Error::Task(e.to_string()))?;
    Ok(match phase {
        Phase::Train => {
            let mut mask = vec![false; n_classes];
            for &c in &split.seen {
                mask[c] = true;
            }
            SplitPlan {
                targets: split.seen.clone(),
                allowed: Some(mask.into()),
            }
        }
        Phase::Eval => SplitPlan {
            targets: match eval_on {
                EvalClasses::Seen => split.seen.clone(),
                EvalClasses::Unseen => split.unseen.clone(),
                EvalClasses::All => (0..n_classes).collect(),
            },
            allowed: None,
        },
    })
}
