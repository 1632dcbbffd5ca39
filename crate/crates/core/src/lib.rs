//! Simulator and learning harness for energy-constrained command-and-control
//! dissemination in a cellular-connected UAV swarm.
//!
//! A round is a GBS broadcast followed by a few D2D relay slots. The relay
//! slots form a constrained multi-agent MDP solved by per-UAV DQN learners
//! with graph-attention Q-networks and a PID-controlled Lagrange multiplier.

pub mod agent;
pub mod channel;
pub mod checkpoint;
pub mod config;
pub mod env;
pub mod error;
pub mod lagrange;
pub mod neural;
pub mod plot;
pub mod protocol;
pub mod report;
pub mod run;
pub mod scenario;
pub mod trainer;

pub use error::{Error, Result};
