use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::agents::{ActorCritic, Agent, AgentConfig, DdpgAgent, DdqnAgent, QPair, RbfAgent};
use crate::envs::EnvKind;
use crate::error::{Error, Result};
use crate::harness::sweep::SweepResult;
use crate::nn::checkpoint::{load_net, save_net};
use crate::rbf::RbfNet;

const AGENT_FORMAT: &str = "robust-rl-agent";
const AGENT_VERSION: u32 = 1;
const SIDECAR: &str = "agent.json";

/// Writes one row per cell, header `<axes>,mean,std,n`, floats with 17
/// significant digits.
pub fn write_results_csv(result: &SweepResult, path: &Path) -> Result<()> {
    fs::write(path, results_csv(result)?).map_err(|e| Error::io(path, e))
}

pub fn results_csv(result: &SweepResult) -> Result<String> {
    if result.axes.is_empty() {
        return Err(Error::Argument("sweep result has no axes".into()));
    }
    let mut out = String::new();
    for axis in &result.axes {
        if axis.name.contains([',', '\n']) {
            return Err(Error::Argument(format!("axis name '{}' is not CSV-safe", axis.name)));
        }
        out.push_str(&axis.name);
        out.push(',');
    }
    out.push_str("mean,std,n\n");
    for cell in &result.cells {
        for (axis, &i) in result.axes.iter().zip(&cell.index) {
            let v = axis.values[i].to_string();
            if v.contains([',', '\n']) {
                return Err(Error::Argument(format!("axis value '{v}' is not CSV-safe")));
            }
            out.push_str(&v);
            out.push(',');
        }
        out.push_str(&format!("{:.16e},{:.16e},{}\n", cell.mean_return, cell.std_return, cell.n));
    }
    Ok(out)
}

/// Header and rows of a results CSV as text fields.
pub fn read_results_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    let header: Vec<String> = lines
        .next()
        .ok_or_else(|| Error::format("a CSV header", "an empty file"))?
        .split(',')
        .map(str::to_string)
        .collect();
    if header.len() < 4 || header[header.len() - 3..] != ["mean", "std", "n"] {
        return Err(Error::format("header ending in mean,std,n", header.join(",")));
    }
    let rows = lines
        .map(|l| {
            let row: Vec<String> = l.split(',').map(str::to_string).collect();
            if row.len() == header.len() {
                Ok(row)
            } else {
                Err(Error::format(format!("{} fields", header.len()), format!("{} fields", row.len())))
            }
        })
        .collect::<Result<_>>()?;
    Ok((header, rows))
}

#[derive(Debug, Serialize, Deserialize)]
struct Sidecar {
    format: String,
    version: u32,
    env: EnvKind,
    steps: u64,
    config: AgentConfig,
}

fn net_files(config: &AgentConfig) -> &'static [&'static str] {
    match config {
        AgentConfig::Ddqn(_) => &["online.net", "target.net"],
        AgentConfig::Ddpg(_) => &["actor.net", "critic.net", "target_actor.net", "target_critic.net"],
        AgentConfig::Rbf(_) => &["rbf.net"],
    }
}

/// Saves the agent's networks, configuration and step count into `dir`.
/// Optimizer moments and the replay buffer are not persisted.
pub fn save_agent(agent: &Agent, env: EnvKind, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let config = agent.config();
    let names = net_files(&config);
    match agent {
        Agent::Ddqn(a) => {
            save_net(&a.nets.online, &dir.join(names[0]))?;
            save_net(&a.nets.target, &dir.join(names[1]))?;
        }
        Agent::Ddpg(a) => {
            for (net, name) in [&a.nets.actor, &a.nets.critic, &a.nets.target_actor, &a.nets.target_critic]
                .into_iter()
                .zip(names)
            {
                save_net(net, &dir.join(name))?;
            }
        }
        Agent::Rbf(a) => a.net.save(&dir.join(names[0]))?,
    }
    let sidecar = Sidecar {
        format: AGENT_FORMAT.into(),
        version: AGENT_VERSION,
        env,
        steps: agent.steps(),
        config,
    };
    let path = dir.join(SIDECAR);
    let mut f = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
    serde_json::to_writer_pretty(&mut f, &sidecar).map_err(|e| Error::io(&path, e.into()))?;
    f.write_all(b"\n").map_err(|e| Error::io(&path, e))
}

/// Loads an agent saved by [`save_agent`] together with the environment it was trained on.
pub fn load_agent(dir: &Path) -> Result<(Agent, EnvKind)> {
    let path: PathBuf = dir.join(SIDECAR);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let sidecar: Sidecar =
        serde_json::from_str(&text).map_err(|e| Error::format("an agent sidecar", format!("{}: {e}", path.display())))?;
    if sidecar.format != AGENT_FORMAT || sidecar.version != AGENT_VERSION {
        return Err(Error::format(
            format!("{AGENT_FORMAT} v{AGENT_VERSION}"),
            format!("{} v{}", sidecar.format, sidecar.version),
        ));
    }
    let names = net_files(&sidecar.config);
    let mut agent = match sidecar.config {
        AgentConfig::Ddqn(c) => {
            let nets = QPair::new(load_net(&dir.join(names[0]))?, load_net(&dir.join(names[1]))?)?;
            Agent::Ddqn(DdqnAgent::from_nets(nets, c)?)
        }
        AgentConfig::Ddpg(c) => {
            let mut nets = ActorCritic::new(load_net(&dir.join(names[0]))?, load_net(&dir.join(names[1]))?)?;
            let target_actor = load_net(&dir.join(names[2]))?;
            let target_critic = load_net(&dir.join(names[3]))?;
            if target_actor.architecture() != nets.actor.architecture()
                || target_actor.input_dim() != nets.actor.input_dim()
                || target_critic.architecture() != nets.critic.architecture()
                || target_critic.input_dim() != nets.critic.input_dim()
            {
                return Err(Error::shape("target networks do not match their online counterparts"));
            }
            nets.target_actor = target_actor;
            nets.target_critic = target_critic;
            Agent::Ddpg(DdpgAgent::from_nets(nets, c)?)
        }
        AgentConfig::Rbf(c) => {
            let net = RbfNet::load(&dir.join(names[0]))?;
            if net.bins_per_dim() != c.bins_per_dim {
                return Err(Error::shape(format!(
                    "sidecar says {} bins per dimension, network has {}",
                    c.bins_per_dim,
                    net.bins_per_dim()
                )));
            }
            let mut a = RbfAgent::new(net.state_dim(), net.num_actions(), c)?;
            a.net = net;
            Agent::Rbf(a)
        }
    };
    match &mut agent {
        Agent::Ddqn(a) => a.steps = sidecar.steps,
        Agent::Ddpg(a) => a.steps = sidecar.steps,
        Agent::Rbf(a) => a.steps = sidecar.steps,
    }
    if agent.oracle().obs_dim() != sidecar.env.obs_dim() || agent.oracle().action_space() != sidecar.env.action_space() {
        return Err(Error::shape(format!("saved networks do not fit {}", sidecar.env)));
    }
    Ok((agent, sidecar.env))
}
