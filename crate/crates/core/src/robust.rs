//! Adversarial retraining: the agent keeps learning while it acts on
//! gradient-attacked observations and the environment evolves from the true state.

use serde::{Deserialize, Serialize};

use crate::agents::train::{run_interaction, LoopOptions};
use crate::agents::{Agent, TrainLog};
use crate::attacks::{attack_gradient, AttackConfig, AttackKind};
use crate::envs::{EnvKind, EnvParams};
use crate::error::{Error, Result};
use crate::rng::RngHandle;

/// Fork index of the attack stream relative to the training stream.
const ATTACK_STREAM: u64 = 0xA77A;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdvTrainConfig {
    pub attack: AttackConfig,
    pub retrain_steps: u64,
    /// Attack every `attack_period`-th step, starting with the first.
    pub attack_period: u64,
    /// Store the true observation in replay instead of the attacked one.
    pub store_true_state: bool,
}

impl AdvTrainConfig {
    pub fn new(epsilon: f64, retrain_steps: u64) -> Self {
        Self {
            attack: AttackConfig::new(AttackKind::Gradient, epsilon),
            retrain_steps,
            attack_period: 1,
            store_true_state: false,
        }
    }

    /// Default attack magnitude per environment.
    pub fn default_epsilon(env: EnvKind) -> f64 {
        match env {
            EnvKind::MountainCarContinuous => 0.05,
            _ => 0.03,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.attack.kind != AttackKind::Gradient {
            return Err(Error::Config(format!(
                "adversarial training uses the gradient attack, got {}",
                self.attack.kind
            )));
        }
        if self.attack_period == 0 {
            return Err(Error::Config("attack_period must be at least 1".into()));
        }
        self.attack.validate()
    }
}

/// Continues training `agent` for exactly `cfg.retrain_steps` environment steps
/// under attack. Training draws come from `rng`; attack draws come from a
/// stream forked off it, so a zero-magnitude attack reproduces plain training.
pub fn adv_train(agent: &mut Agent, params: &EnvParams, cfg: &AdvTrainConfig, rng: &mut RngHandle) -> Result<TrainLog> {
    adv_loop(agent, params, cfg, rng, false)
}

/// [`adv_train`] that also records every executed step.
pub fn adv_train_traced(
    agent: &mut Agent,
    params: &EnvParams,
    cfg: &AdvTrainConfig,
    rng: &mut RngHandle,
) -> Result<TrainLog> {
    adv_loop(agent, params, cfg, rng, true)
}

fn adv_loop(agent: &mut Agent, params: &EnvParams, cfg: &AdvTrainConfig, rng: &mut RngHandle, record_trace: bool) -> Result<TrainLog> {
    cfg.validate()?;
    let mut attack_rng = rng.fork(&[ATTACK_STREAM]);
    let options = LoopOptions {
        record_trace,
        store_acting_obs: !cfg.store_true_state,
    };
    run_interaction(agent, params, cfg.retrain_steps, rng, options, |agent, obs, step| {
        if step % cfg.attack_period != 0 {
            return Ok(obs.to_vec());
        }
        Ok(attack_gradient(agent.oracle(), obs, &cfg.attack, &mut attack_rng)?.s_adv)
    })
}
