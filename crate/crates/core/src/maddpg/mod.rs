//! Multi-agent deep deterministic policy gradient.
//!
//! Each agent owns a deterministic actor over its own observation that emits
//! `[u | c | d]`, and a critic over every agent's observation and action.
//! Training is centralized, execution uses only the actor.

mod buffer;
mod learner;
mod trainer;

use serde::{Deserialize, Serialize};

pub use buffer::{Batch, ReplayBuffer, Transition};
pub use learner::{soft_update, ActionSpec, AgentLearner, NetworkShape};
pub use trainer::{episode_seed, train, EpisodeLog, TrainOutcome, Trainer, TrainerState};

use crate::envs::Scenario;
use crate::error::{Error, Result};
use crate::neural::AdamConfig;

/// Adam settings used by both networks unless overridden.
pub const TRAIN_OPTIMIZER: AdamConfig = AdamConfig {
    learning_rate: 1e-3,
    beta1: 0.9,
    beta2: 0.999,
    epsilon: 1e-8,
    max_grad_norm: Some(0.5),
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    /// Number of episode
    pub episodes: usize,
    /// Discount factor γ
    pub discount_factor: f64,
    /// Batch size
    pub batch_size: usize,
    /// Replay buffer
    pub replay_buffer: usize,
    /// Number of hidden layers (actor)
    pub hidden_layers_actor: usize,
    /// Number of hidden layers (critic)
    pub hidden_layers_critic: usize,
    /// Number of units per layer
    pub units_per_layer: usize,
    /// Soft-update rate τ of the target networks.
    pub tau: f64,
    pub actor_optimizer: AdamConfig,
    pub critic_optimizer: AdamConfig,
    pub noise_start: f64,
    pub noise_end: f64,
    /// Fraction of the episodes over which the noise decays linearly.
    pub noise_decay_fraction: f64,
    /// Control steps between update rounds.
    pub update_every: usize,
    /// Transitions collected before the first update.
    pub warmup_transitions: usize,
}

impl TrainConfig {
    pub fn rigid_transport() -> Self {
        Self {
            episodes: 200_000,
            discount_factor: 0.99,
            batch_size: 256,
            replay_buffer: 1_000_000,
            hidden_layers_actor: 4,
            hidden_layers_critic: 4,
            units_per_layer: 64,
            tau: 0.01,
            actor_optimizer: TRAIN_OPTIMIZER,
            critic_optimizer: TRAIN_OPTIMIZER,
            noise_start: 0.3,
            noise_end: 0.01,
            noise_decay_fraction: 0.5,
            update_every: 4,
            warmup_transitions: 1024,
        }
    }

    pub fn pushing_failure() -> Self {
        Self {
            batch_size: 4096,
            replay_buffer: 2_000_000,
            ..Self::rigid_transport()
        }
    }

    pub fn for_scenario(scenario: Scenario) -> Self {
        match scenario {
            Scenario::RigidTransport => Self::rigid_transport(),
            Scenario::PushingFailure => Self::pushing_failure(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.discount_factor > 0.0 && self.discount_factor <= 1.0) {
            return bad("discount factor must lie in (0, 1]");
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return bad("τ must lie in (0, 1]");
        }
        if self.batch_size == 0 || self.update_every == 0 || self.units_per_layer == 0 {
            return bad("batch size, update interval and layer width must be positive");
        }
        if self.replay_buffer < self.batch_size {
            return bad("replay buffer must hold at least one batch");
        }
        if !(self.noise_start >= 0.0 && self.noise_end >= 0.0) {
            return bad("noise scales must be non-negative");
        }
        if !(self.noise_decay_fraction > 0.0 && self.noise_decay_fraction <= 1.0) {
            return bad("noise decay fraction must lie in (0, 1]");
        }
        for opt in [&self.actor_optimizer, &self.critic_optimizer] {
            if !(opt.learning_rate > 0.0) {
                return bad("learning rate must be positive");
            }
        }
        Ok(())
    }
}
