//! Learnable building blocks, parameter storage, optimizer and checkpoints.

mod adam;
mod blocks;
mod checkpoint;
mod params;
mod rng;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use blocks::{dropout, LayerNorm, Linear, LstmCell, Mode, PointwiseConv, TemporalConv, LAYER_NORM_EPS};
pub use checkpoint::Checkpoint;
pub use params::{BoundParams, Init, ParamId, ParamSet, Parameter};
pub use rng::RngStream;
