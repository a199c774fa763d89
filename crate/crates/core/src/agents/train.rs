use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::agents::ddpg::{DdpgAgent, DdpgConfig};
use crate::agents::ddqn::{DdqnAgent, DdqnConfig};
use crate::agents::rbf_agent::{RbfAgent, RbfConfig};
use crate::agents::replay::Transition;
use crate::agents::{argmax, explore_discrete, AgentOracle, EpsilonSchedule};
use crate::envs::{Action, ActionSpace, EnvInstance, EnvKind, EnvParams};
use crate::error::{Error, Result};
use crate::rng::RngHandle;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentKind {
    Ddqn,
    Ddpg,
    Rbf,
}

impl AgentKind {
    pub fn name(self) -> &'static str {
        match self {
            AgentKind::Ddqn => "ddqn",
            AgentKind::Ddpg => "ddpg",
            AgentKind::Rbf => "rbf",
        }
    }

    /// Default training budget per environment.
    pub fn default_budget(self, env: EnvKind) -> u64 {
        match (self, env) {
            (AgentKind::Ddqn, EnvKind::Cartpole) => 50_000,
            (AgentKind::Ddqn, _) => 40_000,
            (AgentKind::Rbf, EnvKind::Cartpole) => 40_000,
            (AgentKind::Rbf, _) => 60_000,
            (AgentKind::Ddpg, EnvKind::Pendulum) => 30_000,
            (AgentKind::Ddpg, _) => 40_000,
        }
    }

    pub fn supports(self, env: EnvKind) -> bool {
        matches!(
            (self, env.action_space()),
            (AgentKind::Ddpg, ActionSpace::Continuous(_)) | (AgentKind::Ddqn | AgentKind::Rbf, ActionSpace::Discrete(_))
        )
    }
}

impl fmt::Display for AgentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AgentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ddqn" => Ok(AgentKind::Ddqn),
            "ddpg" => Ok(AgentKind::Ddpg),
            "rbf" => Ok(AgentKind::Rbf),
            other => Err(Error::Config(format!("unknown agent '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "agent", rename_all = "snake_case")]
pub enum AgentConfig {
    Ddqn(DdqnConfig),
    Ddpg(DdpgConfig),
    Rbf(RbfConfig),
}

impl AgentConfig {
    pub fn kind(&self) -> AgentKind {
        match self {
            AgentConfig::Ddqn(_) => AgentKind::Ddqn,
            AgentConfig::Ddpg(_) => AgentKind::Ddpg,
            AgentConfig::Rbf(_) => AgentKind::Rbf,
        }
    }

    /// Steps each exploratory action is repeated for on mountain car.
    pub const MOUNTAIN_CAR_HOLD: u64 = 16;

    /// Hyperparameters for `kind` on `env` with a training budget of `budget` steps.
    pub fn defaults(kind: AgentKind, env: EnvKind, budget: u64) -> Result<Self> {
        if !kind.supports(env) {
            return Err(Error::Config(format!("{kind} cannot drive {env}")));
        }
        let mut epsilon = EpsilonSchedule::for_budget(budget);
        // Per-step random actions almost never pump a mountain car out of the
        // valley, so its exploratory actions are held for a while.
        if env == EnvKind::MountainCar {
            epsilon.hold = Self::MOUNTAIN_CAR_HOLD;
        }
        Ok(match kind {
            AgentKind::Ddqn => {
                let hidden = match env {
                    EnvKind::Cartpole => vec![16, 16, 16],
                    _ => vec![100, 100],
                };
                AgentConfig::Ddqn(DdqnConfig { epsilon, ..DdqnConfig::new(hidden, budget) })
            }
            AgentKind::Rbf => {
                let (bins, lr) = match env {
                    EnvKind::Cartpole => (3, 0.001),
                    _ => (4, 0.01),
                };
                AgentConfig::Rbf(RbfConfig {
                    bins_per_dim: bins,
                    gamma: 0.99,
                    learning_rate: lr,
                    epsilon,
                })
            }
            AgentKind::Ddpg if env == EnvKind::MountainCarContinuous => AgentConfig::Ddpg(DdpgConfig {
                ou_theta: Some(0.15),
                noise_scale: 0.3,
                ..DdpgConfig::default()
            }),
            AgentKind::Ddpg => AgentConfig::Ddpg(DdpgConfig::default()),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Agent {
    Ddqn(DdqnAgent),
    Ddpg(DdpgAgent),
    Rbf(RbfAgent),
}

impl Agent {
    pub fn new(config: &AgentConfig, env: EnvKind, rng: &mut RngHandle) -> Result<Self> {
        if !config.kind().supports(env) {
            return Err(Error::Config(format!("{} cannot drive {env}", config.kind())));
        }
        let obs_dim = env.obs_dim();
        Ok(match (config, env.action_space()) {
            (AgentConfig::Ddqn(c), ActionSpace::Discrete(n)) => Agent::Ddqn(DdqnAgent::new(obs_dim, n, c.clone(), rng)?),
            (AgentConfig::Rbf(c), ActionSpace::Discrete(n)) => Agent::Rbf(RbfAgent::new(obs_dim, n, c.clone())?),
            (AgentConfig::Ddpg(c), ActionSpace::Continuous(d)) => Agent::Ddpg(DdpgAgent::new(obs_dim, d, c.clone(), rng)?),
            _ => unreachable!("compatibility checked above"),
        })
    }

    pub fn kind(&self) -> AgentKind {
        match self {
            Agent::Ddqn(_) => AgentKind::Ddqn,
            Agent::Ddpg(_) => AgentKind::Ddpg,
            Agent::Rbf(_) => AgentKind::Rbf,
        }
    }

    pub fn config(&self) -> AgentConfig {
        match self {
            Agent::Ddqn(a) => AgentConfig::Ddqn(a.config.clone()),
            Agent::Ddpg(a) => AgentConfig::Ddpg(a.config.clone()),
            Agent::Rbf(a) => AgentConfig::Rbf(a.config.clone()),
        }
    }

    pub fn oracle(&self) -> &dyn AgentOracle {
        match self {
            Agent::Ddqn(a) => &a.nets,
            Agent::Ddpg(a) => &a.nets,
            Agent::Rbf(a) => &a.net,
        }
    }

    /// Environment steps this agent has been trained on.
    pub fn steps(&self) -> u64 {
        match self {
            Agent::Ddqn(a) => a.steps,
            Agent::Ddpg(a) => a.steps,
            Agent::Rbf(a) => a.steps,
        }
    }

    fn warmup_steps(&self) -> u64 {
        match self {
            Agent::Ddqn(a) => a.config.warmup_steps,
            Agent::Ddpg(a) => a.config.warmup_steps,
            Agent::Rbf(_) => 0,
        }
    }

    /// The agent's action for `obs`, with its exploration rule when `explore`.
    pub fn act(&self, obs: &[f64], rng: &mut RngHandle, explore: bool) -> Result<Action> {
        match self {
            Agent::Ddqn(a) => a.act(obs, rng, explore).map(Action::Discrete),
            Agent::Ddpg(a) => a.act(obs, rng, explore).map(Action::Continuous),
            Agent::Rbf(a) => a.act(obs, rng, explore).map(Action::Discrete),
        }
    }

    /// Behavior action during training: uniform random until the warm-up
    /// budget is spent, then the exploring policy. Discrete agents repeat
    /// each random action for the schedule's `hold` steps.
    fn behavior_action(&mut self, obs: &[f64], rng: &mut RngHandle) -> Result<Action> {
        let warming = self.steps() < self.warmup_steps();
        match self {
            Agent::Ddqn(a) => {
                let eps = if warming { 1.0 } else { a.epsilon() };
                let (hold, n, nets) = (a.config.epsilon.hold, a.num_actions(), &a.nets);
                explore_discrete(&mut a.held, eps, hold, n, rng, || Ok(argmax(&nets.online.predict(obs)?)))
                    .map(Action::Discrete)
            }
            Agent::Rbf(a) => {
                let eps = if warming { 1.0 } else { a.epsilon() };
                let (hold, n, net) = (a.config.epsilon.hold, a.net.num_actions(), &a.net);
                explore_discrete(&mut a.held, eps, hold, n, rng, || Ok(argmax(&net.q_values(obs)?.values)))
                    .map(Action::Discrete)
            }
            Agent::Ddpg(a) => a.behavior_act(obs, rng, warming).map(Action::Continuous),
        }
    }

    /// Records one transition and performs whatever learning the agent does per step.
    fn observe(&mut self, t: Transition, rng: &mut RngHandle) -> Result<()> {
        match self {
            Agent::Ddqn(a) => {
                a.buffer.push(t);
                a.steps += 1;
                if a.steps >= a.config.warmup_steps && a.buffer.len() >= a.config.batch_size {
                    a.learn_step(rng)?;
                }
            }
            Agent::Ddpg(a) => {
                a.buffer.push(t);
                a.steps += 1;
                if a.steps >= a.config.warmup_steps && a.buffer.len() >= a.config.batch_size {
                    a.learn_step(rng)?;
                }
            }
            Agent::Rbf(a) => {
                a.learn(&t)?;
                a.steps += 1;
            }
        }
        Ok(())
    }
}

impl AgentOracle for Agent {
    fn obs_dim(&self) -> usize {
        self.oracle().obs_dim()
    }
    fn action_space(&self) -> ActionSpace {
        self.oracle().action_space()
    }
    fn policy_action(&self, s: &[f64]) -> Result<Action> {
        self.oracle().policy_action(s)
    }
    fn greedy_action(&self, s: &[f64]) -> Result<Action> {
        self.oracle().greedy_action(s)
    }
    fn action_value(&self, s: &[f64], a: &Action) -> Result<f64> {
        self.oracle().action_value(s, a)
    }
    fn best_value(&self, s: &[f64]) -> Result<f64> {
        self.oracle().best_value(s)
    }
    fn target_values(&self, s: &[f64]) -> Result<Option<Vec<f64>>> {
        self.oracle().target_values(s)
    }
    fn attack_loss(&self, anchor: &[f64], at: &[f64]) -> Result<f64> {
        self.oracle().attack_loss(anchor, at)
    }
    fn attack_gradient(&self, anchor: &[f64], at: &[f64]) -> Result<Vec<f64>> {
        self.oracle().attack_gradient(anchor, at)
    }
    fn best_action_gradient(&self, s: &[f64]) -> Result<Option<Vec<f64>>> {
        self.oracle().best_action_gradient(s)
    }
}

/// One executed training step, recorded when tracing is requested.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub true_obs: Vec<f64>,
    pub acting_obs: Vec<f64>,
    pub action: Action,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainLog {
    /// Undiscounted return of every episode completed during the run.
    pub episode_returns: Vec<f64>,
    pub steps: u64,
    pub trace: Vec<StepRecord>,
}

#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct LoopOptions {
    pub record_trace: bool,
    /// Store the observation the agent acted on instead of the true one.
    pub store_acting_obs: bool,
}

/// The shared interaction loop. `perturb(agent, obs, step)` returns the
/// observation the agent acts on; the environment always advances from its
/// true state.
pub(crate) fn run_interaction<F>(
    agent: &mut Agent,
    params: &EnvParams,
    steps: u64,
    rng: &mut RngHandle,
    options: LoopOptions,
    mut perturb: F,
) -> Result<TrainLog>
where
    F: FnMut(&Agent, &[f64], u64) -> Result<Vec<f64>>,
{
    let mut log = TrainLog::default();
    if steps == 0 {
        return Ok(log);
    }
    let mut env = EnvInstance::new(*params)?;
    if env.kind().obs_dim() != agent.obs_dim() {
        return Err(Error::shape(format!(
            "agent observes {} dimensions, {} provides {}",
            agent.obs_dim(),
            env.kind(),
            env.kind().obs_dim()
        )));
    }
    let mut obs = env.reset(rng);
    let mut episode_return = 0.0;
    for step in 0..steps {
        let acting = perturb(agent, &obs, step)?;
        let action = agent.behavior_action(&acting, rng)?;
        let out = env.step(&action)?;
        if options.record_trace {
            log.trace.push(StepRecord {
                true_obs: obs.clone(),
                acting_obs: acting.clone(),
                action: action.clone(),
            });
        }
        let stored = if options.store_acting_obs { acting } else { obs };
        agent.observe(
            Transition {
                state: stored,
                action,
                reward: out.reward,
                next_state: out.obs.clone(),
                done: out.done,
            },
            rng,
        )?;
        episode_return += out.reward;
        log.steps += 1;
        if out.done || out.truncated {
            log.episode_returns.push(episode_return);
            episode_return = 0.0;
            obs = env.reset(rng);
        } else {
            obs = out.obs;
        }
    }
    Ok(log)
}

/// Continues training `agent` for `steps` environment steps on unperturbed observations.
pub fn continue_training(agent: &mut Agent, params: &EnvParams, steps: u64, rng: &mut RngHandle) -> Result<TrainLog> {
    run_interaction(agent, params, steps, rng, LoopOptions::default(), |_, obs, _| Ok(obs.to_vec()))
}

/// Builds a fresh agent from `config` and trains it for `steps` steps.
/// Agent initialization and the interaction loop draw from `rng` in that order.
pub fn train_vanilla(
    config: &AgentConfig,
    params: &EnvParams,
    steps: u64,
    rng: &mut RngHandle,
) -> Result<(Agent, TrainLog)> {
    let mut agent = Agent::new(config, params.kind(), rng)?;
    let log = continue_training(&mut agent, params, steps, rng)?;
    Ok((agent, log))
}
