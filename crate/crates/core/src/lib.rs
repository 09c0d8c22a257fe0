//! Event-triggered communication and control for multi-agent cooperative
//! transport.
//!
//! Agents learn, with MADDPG, a joint policy that outputs both a control
//! input and trigger signals deciding which agents and which data
//! categories to receive at the next control step. Communication is charged
//! in the reward, so the learned policy trades transport performance against
//! communication cost.

pub mod comm;
pub mod envs;
pub mod error;
pub mod maddpg;
pub mod neural;
pub mod physics2d;

pub use error::{Error, Result};
