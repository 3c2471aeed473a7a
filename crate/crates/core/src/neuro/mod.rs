//! Encoder, projector, gradients and optimizer.

mod adam;
mod checkpoint;
mod model;
mod params;

pub use adam::{adam_step, AdamConfig};
pub use checkpoint::{read_checkpoint, write_checkpoint};
pub use model::{backward, encode, forward, project, EncoderTape, Forward, ForwardTape, ProjectorTape, BN_EPS};
pub use params::{count_params, Activation, ModelConfig, ModelParams, Param, ProjectorParams, PRELU_INIT};
