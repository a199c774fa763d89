//! Experiment configuration.
//!
//! A config file is UTF-8 text with one `section.key = value` entry per
//! line. `#` starts a comment, blank lines are ignored, and a key may
//! appear only once. Lists are comma separated. Unknown keys, and keys
//! that do not apply to the selected agent, are errors.
//!
//! ```text
//! env.kind = cartpole
//! env.pole_length = 0.6
//! agent.kind = ddqn
//! agent.steps = 50000
//! agent.hidden = 16,16,16
//! attack.kind = gradient
//! attack.epsilon = 0.05
//! eval.episodes = 100
//! eval.seeds = 0,1,2,3
//! sweep.epsilons = 0,0.02,0.05,0.1
//! sweep.axis.cart_mass = 0.5,1.0,1.5
//! ```

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use crate::agents::{AgentConfig, AgentKind, EpsilonSchedule, TargetSync};
use crate::attacks::{AttackConfig, AttackKind};
use crate::envs::{EnvKind, EnvParams};
use crate::error::{Error, Result};
use crate::harness::eval::EvalSpec;
use crate::harness::sweep::default_grid;
use crate::robust::AdvTrainConfig;

/// Raw `key -> value` entries in key order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RawConfig {
    entries: BTreeMap<String, String>,
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut raw = RawConfig::default();
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected 'section.key = value'", n + 1)))?;
            let key = key.trim();
            if !key.contains('.') || key.split('.').any(str::is_empty) {
                return Err(Error::Config(format!("line {}: key '{key}' must be 'section.key'", n + 1)));
            }
            if raw.entries.insert(key.to_string(), value.trim().to_string()).is_some() {
                return Err(Error::Config(format!("line {}: duplicate key '{key}'", n + 1)));
            }
        }
        Ok(raw)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// Applies a `key=value` override, replacing any file entry.
    pub fn set(&mut self, assignment: &str) -> Result<()> {
        let parsed = Self::parse(assignment)?;
        self.entries.extend(parsed.entries);
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }
}

fn parse_value<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse '{v}'")))
}

fn parse_list<T: FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
    v.split(',').map(|x| parse_value(key, x.trim())).collect()
}

/// Everything an experiment command needs, resolved from a [`RawConfig`].
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub env: EnvKind,
    pub params: EnvParams,
    pub agent: AgentConfig,
    pub train_steps: u64,
    pub attack: AttackConfig,
    pub adv: AdvTrainConfig,
    pub eval: EvalSpec,
    pub sweep_kinds: Vec<AttackKind>,
    pub sweep_epsilons: Vec<f64>,
    pub grid: Vec<(String, Vec<f64>)>,
}

const AGENT_KEYS: &[(&str, &[AgentKind])] = &[
    ("kind", &[AgentKind::Ddqn, AgentKind::Ddpg, AgentKind::Rbf]),
    ("steps", &[AgentKind::Ddqn, AgentKind::Ddpg, AgentKind::Rbf]),
    ("gamma", &[AgentKind::Ddqn, AgentKind::Ddpg, AgentKind::Rbf]),
    ("hidden", &[AgentKind::Ddqn, AgentKind::Ddpg]),
    ("learning_rate", &[AgentKind::Ddqn, AgentKind::Rbf]),
    ("batch_size", &[AgentKind::Ddqn, AgentKind::Ddpg]),
    ("buffer_capacity", &[AgentKind::Ddqn, AgentKind::Ddpg]),
    ("warmup_steps", &[AgentKind::Ddqn, AgentKind::Ddpg]),
    ("target_sync", &[AgentKind::Ddqn]),
    ("epsilon_start", &[AgentKind::Ddqn, AgentKind::Rbf]),
    ("epsilon_end", &[AgentKind::Ddqn, AgentKind::Rbf]),
    ("epsilon_anneal_steps", &[AgentKind::Ddqn, AgentKind::Rbf]),
    ("epsilon_hold", &[AgentKind::Ddqn, AgentKind::Rbf]),
    ("bins_per_dim", &[AgentKind::Rbf]),
    ("actor_learning_rate", &[AgentKind::Ddpg]),
    ("critic_learning_rate", &[AgentKind::Ddpg]),
    ("tau", &[AgentKind::Ddpg]),
    ("noise_scale", &[AgentKind::Ddpg]),
];

const FIXED_KEYS: &[&str] = &[
    "env.kind",
    "attack.kind",
    "attack.epsilon",
    "attack.n_samples",
    "attack.alpha",
    "attack.beta",
    "attack.sgd_step",
    "adv.epsilon",
    "adv.steps",
    "adv.period",
    "adv.store_true_state",
    "eval.episodes",
    "eval.seeds",
    "sweep.kinds",
    "sweep.epsilons",
    "sweep.points",
    "sweep.spread",
];

/// `soft:<tau>` or `hard:<period>`.
fn parse_target_sync(v: &str) -> Result<TargetSync> {
    match v.split_once(':') {
        Some(("soft", t)) => Ok(TargetSync::Soft {
            tau: parse_value("agent.target_sync", t)?,
        }),
        Some(("hard", p)) => Ok(TargetSync::Hard {
            period: parse_value("agent.target_sync", p)?,
        }),
        _ => Err(Error::Config(format!("agent.target_sync: expected soft:<tau> or hard:<period>, got '{v}'"))),
    }
}

impl ExperimentConfig {
    /// Defaults for an environment and agent.
    pub fn defaults(env: EnvKind, agent: AgentKind) -> Result<Self> {
        Self::resolve(&RawConfig::parse(&format!("env.kind = {env}\nagent.kind = {agent}"))?)
    }

    pub fn resolve(raw: &RawConfig) -> Result<Self> {
        let env: EnvKind = raw.get("env.kind").unwrap_or("cartpole").parse()?;
        let default_agent = match env.action_space() {
            crate::envs::ActionSpace::Discrete(_) => "ddqn",
            crate::envs::ActionSpace::Continuous(_) => "ddpg",
        };
        let kind: AgentKind = raw.get("agent.kind").unwrap_or(default_agent).parse()?;

        // reject unknown or inapplicable keys up front
        for key in raw.entries.keys() {
            let ok = if let Some(name) = key.strip_prefix("agent.") {
                match AGENT_KEYS.iter().find(|(k, _)| *k == name) {
                    Some((_, kinds)) if kinds.contains(&kind) => true,
                    Some(_) => return Err(Error::Config(format!("{key} does not apply to {kind}"))),
                    None => false,
                }
            } else if let Some(name) = key.strip_prefix("env.") {
                name == "kind" || env.default_params().field_names().contains(&name)
            } else if let Some(name) = key.strip_prefix("sweep.axis.") {
                env.default_params().field_names().contains(&name)
            } else {
                FIXED_KEYS.contains(&key.as_str())
            };
            if !ok {
                return Err(Error::Config(format!("unknown key '{key}' for {env}/{kind}")));
            }
        }

        let mut params = env.default_params();
        for name in env.default_params().field_names() {
            if let Some(v) = raw.get(&format!("env.{name}")) {
                params = params.with(name, parse_value(name, v)?)?;
            }
        }

        let train_steps = match raw.get("agent.steps") {
            Some(v) => parse_value("agent.steps", v)?,
            None => kind.default_budget(env),
        };
        let mut agent = AgentConfig::defaults(kind, env, train_steps)?;
        Self::apply_agent_keys(raw, &mut agent)?;

        let attack_kind: AttackKind = raw.get("attack.kind").unwrap_or("gradient").parse()?;
        let mut attack = AttackConfig::new(attack_kind, 0.05);
        if let Some(v) = raw.get("attack.epsilon") {
            attack.epsilon = parse_value("attack.epsilon", v)?;
        }
        if let Some(v) = raw.get("attack.n_samples") {
            attack.n_samples = parse_value("attack.n_samples", v)?;
        }
        if let Some(v) = raw.get("attack.alpha") {
            attack.alpha_b = parse_value("attack.alpha", v)?;
        }
        if let Some(v) = raw.get("attack.beta") {
            attack.beta_b = parse_value("attack.beta", v)?;
        }
        if let Some(v) = raw.get("attack.sgd_step") {
            attack.sgd_step = parse_value("attack.sgd_step", v)?;
        }
        attack.validate().map_err(|e| Error::Config(e.to_string()))?;

        let mut adv = AdvTrainConfig::new(AdvTrainConfig::default_epsilon(env), train_steps);
        adv.attack.n_samples = attack.n_samples;
        adv.attack.alpha_b = attack.alpha_b;
        adv.attack.beta_b = attack.beta_b;
        if let Some(v) = raw.get("adv.epsilon") {
            adv.attack.epsilon = parse_value("adv.epsilon", v)?;
        }
        if let Some(v) = raw.get("adv.steps") {
            adv.retrain_steps = parse_value("adv.steps", v)?;
        }
        if let Some(v) = raw.get("adv.period") {
            adv.attack_period = parse_value("adv.period", v)?;
        }
        if let Some(v) = raw.get("adv.store_true_state") {
            adv.store_true_state = parse_value("adv.store_true_state", v)?;
        }
        adv.validate().map_err(|e| Error::Config(e.to_string()))?;

        let mut eval = EvalSpec::default();
        if let Some(v) = raw.get("eval.episodes") {
            eval.episodes = parse_value("eval.episodes", v)?;
        }
        if let Some(v) = raw.get("eval.seeds") {
            eval.seeds = parse_list("eval.seeds", v)?;
        }
        eval.validate().map_err(|e| Error::Config(e.to_string()))?;

        let sweep_kinds = match raw.get("sweep.kinds") {
            Some(v) => parse_list("sweep.kinds", v)?,
            None => vec![AttackKind::Naive, AttackKind::Gradient],
        };
        let sweep_epsilons = match raw.get("sweep.epsilons") {
            Some(v) => parse_list("sweep.epsilons", v)?,
            None => vec![0.0, 0.02, 0.05, 0.1],
        };

        let points = match raw.get("sweep.points") {
            Some(v) => parse_value("sweep.points", v)?,
            None => 9,
        };
        let spread = match raw.get("sweep.spread") {
            Some(v) => parse_value("sweep.spread", v)?,
            None => 0.5,
        };
        let mut grid = default_grid(env, points, spread).map_err(|e| Error::Config(e.to_string()))?;
        for (name, values) in grid.iter_mut() {
            if let Some(v) = raw.get(&format!("sweep.axis.{name}")) {
                *values = parse_list(name, v)?;
            }
        }
        // extra axes beyond the defaults
        for (key, v) in &raw.entries {
            if let Some(name) = key.strip_prefix("sweep.axis.") {
                if !grid.iter().any(|(n, _)| n == name) {
                    grid.push((name.to_string(), parse_list(key, v)?));
                }
            }
        }

        Ok(Self {
            env,
            params,
            agent,
            train_steps,
            attack,
            adv,
            eval,
            sweep_kinds,
            sweep_epsilons,
            grid,
        })
    }

    fn apply_agent_keys(raw: &RawConfig, agent: &mut AgentConfig) -> Result<()> {
        let get = |k: &str| raw.get(&format!("agent.{k}"));
        let num = |k: &str| -> Result<Option<f64>> { get(k).map(|v| parse_value(k, v)).transpose() };
        let count = |k: &str| -> Result<Option<u64>> { get(k).map(|v| parse_value(k, v)).transpose() };
        let apply_epsilon = |e: &mut EpsilonSchedule| -> Result<()> {
            if let Some(v) = num("epsilon_start")? {
                e.start = v;
            }
            if let Some(v) = num("epsilon_end")? {
                e.end = v;
            }
            if let Some(v) = count("epsilon_anneal_steps")? {
                e.anneal_steps = v;
            }
            if let Some(v) = count("epsilon_hold")? {
                e.hold = v;
            }
            e.validate().map_err(|e| Error::Config(e.to_string()))
        };
        match agent {
            AgentConfig::Ddqn(c) => {
                if let Some(v) = get("hidden") {
                    c.hidden = parse_list("agent.hidden", v)?;
                }
                if let Some(v) = num("gamma")? {
                    c.gamma = v;
                }
                if let Some(v) = num("learning_rate")? {
                    c.learning_rate = v;
                }
                if let Some(v) = count("batch_size")? {
                    c.batch_size = v as usize;
                }
                if let Some(v) = count("buffer_capacity")? {
                    c.buffer_capacity = v as usize;
                }
                if let Some(v) = count("warmup_steps")? {
                    c.warmup_steps = v;
                }
                if let Some(v) = get("target_sync") {
                    c.target_sync = parse_target_sync(v)?;
                }
                apply_epsilon(&mut c.epsilon)?;
                c.validate().map_err(|e| Error::Config(e.to_string()))
            }
            AgentConfig::Ddpg(c) => {
                if let Some(v) = get("hidden") {
                    c.actor_hidden = parse_list("agent.hidden", v)?;
                    c.critic_hidden = c.actor_hidden.clone();
                }
                if let Some(v) = num("gamma")? {
                    c.gamma = v;
                }
                if let Some(v) = num("actor_learning_rate")? {
                    c.actor_learning_rate = v;
                }
                if let Some(v) = num("critic_learning_rate")? {
                    c.critic_learning_rate = v;
                }
                if let Some(v) = num("tau")? {
                    c.tau = v;
                }
                if let Some(v) = num("noise_scale")? {
                    c.noise_scale = v;
                }
                if let Some(v) = count("batch_size")? {
                    c.batch_size = v as usize;
                }
                if let Some(v) = count("buffer_capacity")? {
                    c.buffer_capacity = v as usize;
                }
                if let Some(v) = count("warmup_steps")? {
                    c.warmup_steps = v;
                }
                c.validate().map_err(|e| Error::Config(e.to_string()))
            }
            AgentConfig::Rbf(c) => {
                if let Some(v) = count("bins_per_dim")? {
                    c.bins_per_dim = v as usize;
                }
                if let Some(v) = num("gamma")? {
                    c.gamma = v;
                }
                if let Some(v) = num("learning_rate")? {
                    c.learning_rate = v;
                }
                apply_epsilon(&mut c.epsilon)
            }
        }
    }
}
