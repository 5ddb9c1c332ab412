//! Per-step thinking inputs, episode memories and pose transforms.

mod inputs;
mod memory;
mod transforms;

pub use inputs::{
    build_inputs, et_features, nt_features, ot_features, AppearanceTable, ThinkingInputs, ET_FEATURES, NT_FEATURES,
    NT_RAW, OT_FEATURES,
};
pub use memory::{Memories, MemoryConfig, TomgNode};
pub use transforms::{egocentric_position, egocentric_row, egocentric_transform, polar, polarize, PoseRow};
