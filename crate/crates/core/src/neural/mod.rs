//! Dense feed-forward networks with hand-written backpropagation and Adam.

mod adam;
mod mlp;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use mlp::{
    Activation, Dense, GradientTape, Mlp, MlpCheckpoint, Params, CHECKPOINT_FORMAT,
    CHECKPOINT_VERSION,
};
