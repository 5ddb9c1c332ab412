//! Multiple-thinking actor-critic: five encoders, gated collaboration and a
//! recurrent policy.

mod model;
mod target;

pub use model::{activation_means, ModelConfig, MtModel, StepOutput, ThinkingOutputs, Thinkings, Variant, THINKING_NAMES};
pub use target::{make_target_code, ClassEmbeddings, TargetCode, TargetMode};
