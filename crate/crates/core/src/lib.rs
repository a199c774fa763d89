//! Adversarial observation attacks against value-based reinforcement
//! learning agents, and adversarial retraining for robustness to changes in
//! the environment's physical parameters.
//!
//! The crate is organized bottom-up:
//!
//! - [`nn`]: dense networks with manual backpropagation and Adam.
//! - [`rbf`]: Gaussian RBF Q-function trained by online TD.
//! - [`envs`]: cart-pole, mountain car (discrete and continuous) and pendulum.
//! - [`agents`]: DDQN, DDPG and RBF-Q agents behind the [`agents::AgentOracle`] view.
//! - [`attacks`]: naive, gradient, SGD and HFSGM observation attacks.
//! - [`robust`]: adversarial retraining.
//! - [`harness`]: evaluation, sweeps, CVaR, CSV output, checkpoints and config.

pub mod agents;
pub mod attacks;
pub mod envs;
pub mod error;
pub mod harness;
pub mod nn;
pub mod rbf;
pub mod rng;
pub mod robust;

pub use error::{Error, Result};
pub use rng::RngHandle;
