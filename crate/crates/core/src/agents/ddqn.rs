use serde::{Deserialize, Serialize};

use crate::agents::replay::{ReplayBuffer, Transition};
use crate::agents::{argmax, argmin, AgentOracle, EpsilonSchedule, HeldAction};
use crate::envs::{Action, ActionSpace};
use crate::error::{Error, Result};
use crate::nn::loss::cross_entropy_onehot;
use crate::nn::{adam_step_net, softmax, Activation, AdamState, DenseGrads, DenseNet};
use crate::rng::RngHandle;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum TargetSync {
    /// `target <- tau * online + (1 - tau) * target` after every update.
    Soft { tau: f64 },
    /// Copy online into target every `period` updates.
    Hard { period: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DdqnConfig {
    pub hidden: Vec<usize>,
    pub gamma: f64,
    pub learning_rate: f64,
    pub target_sync: TargetSync,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    pub warmup_steps: u64,
    pub epsilon: EpsilonSchedule,
}

impl DdqnConfig {
    pub fn new(hidden: Vec<usize>, budget: u64) -> Self {
        Self {
            hidden,
            gamma: 0.99,
            learning_rate: 1e-3,
            target_sync: TargetSync::Soft { tau: 1e-2 },
            batch_size: 64,
            buffer_capacity: 50_000,
            warmup_steps: 1_000,
            epsilon: EpsilonSchedule::for_budget(budget),
        }
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::Argument(format!("gamma must lie in [0, 1), got {}", self.gamma)));
        }
        if self.batch_size == 0 || self.buffer_capacity == 0 {
            return Err(Error::Argument("batch size and buffer capacity must be positive".into()));
        }
        self.epsilon.validate()?;
        match self.target_sync {
            TargetSync::Soft { tau } if !(0.0..=1.0).contains(&tau) => {
                Err(Error::Argument(format!("tau must lie in [0, 1], got {tau}")))
            }
            TargetSync::Hard { period: 0 } => Err(Error::Argument("hard sync period must be positive".into())),
            _ => Ok(()),
        }
    }
}

/// Online and target Q-networks. The online network acts; the target
/// network scores actions.
#[derive(Debug, Clone, PartialEq)]
pub struct QPair {
    pub online: DenseNet,
    pub target: DenseNet,
}

impl QPair {
    pub fn new(online: DenseNet, target: DenseNet) -> Result<Self> {
        if online.input_dim() != target.input_dim() || online.architecture() != target.architecture() {
            return Err(Error::shape("online and target networks must share an architecture"));
        }
        Ok(Self { online, target })
    }

    /// Uses one network for both roles.
    pub fn shared(net: DenseNet) -> Self {
        Self {
            online: net.clone(),
            target: net,
        }
    }

    pub fn num_actions(&self) -> usize {
        self.online.output_dim()
    }
}

impl AgentOracle for QPair {
    fn obs_dim(&self) -> usize {
        self.online.input_dim()
    }

    fn action_space(&self) -> ActionSpace {
        ActionSpace::Discrete(self.num_actions())
    }

    fn policy_action(&self, s: &[f64]) -> Result<Action> {
        Ok(Action::Discrete(argmax(&self.online.predict(s)?)))
    }

    fn action_value(&self, s: &[f64], a: &Action) -> Result<f64> {
        let idx = discrete_index(a, self.num_actions())?;
        Ok(self.target.predict(s)?[idx])
    }

    fn best_value(&self, s: &[f64]) -> Result<f64> {
        let q = self.target.predict(s)?;
        Ok(q[argmax(&q)])
    }

    fn target_values(&self, s: &[f64]) -> Result<Option<Vec<f64>>> {
        self.target.predict(s).map(Some)
    }

    fn attack_loss(&self, anchor: &[f64], at: &[f64]) -> Result<f64> {
        worst_action_ce(&self.target, anchor, at).map(|(loss, _)| loss)
    }

    fn attack_gradient(&self, anchor: &[f64], at: &[f64]) -> Result<Vec<f64>> {
        let (_, logit_grad) = worst_action_ce(&self.target, anchor, at)?;
        self.target.input_gradient(at, &logit_grad)
    }

    fn best_action_gradient(&self, s: &[f64]) -> Result<Option<Vec<f64>>> {
        let q = self.online.predict(s)?;
        let best = argmax(&q);
        let ce = cross_entropy_onehot(&softmax(&q)?, best)?;
        self.online.input_gradient(s, &ce.logit_grad).map(Some)
    }
}

/// Cross-entropy between softmax(Q(at)) and the one-hot of the worst
/// action at `anchor`, plus its gradient with respect to the logits.
fn worst_action_ce(net: &DenseNet, anchor: &[f64], at: &[f64]) -> Result<(f64, Vec<f64>)> {
    let worst = argmin(&net.predict(anchor)?);
    let pmf = softmax(&net.predict(at)?)?;
    let ce = cross_entropy_onehot(&pmf, worst)?;
    Ok((ce.loss, ce.logit_grad))
}

pub(crate) fn discrete_index(a: &Action, n: usize) -> Result<usize> {
    match a {
        Action::Discrete(i) if *i < n => Ok(*i),
        Action::Discrete(i) => Err(Error::Argument(format!("action {i} out of range for {n} actions"))),
        Action::Continuous(_) => Err(Error::Argument("continuous action given to a discrete agent".into())),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DdqnAgent {
    pub nets: QPair,
    pub config: DdqnConfig,
    pub optimizer: AdamState,
    pub buffer: ReplayBuffer,
    /// Environment steps taken so far; drives the epsilon schedule.
    pub steps: u64,
    pub updates: u64,
    pub(crate) held: Option<HeldAction>,
}

impl DdqnAgent {
    pub fn new(obs_dim: usize, num_actions: usize, config: DdqnConfig, rng: &mut RngHandle) -> Result<Self> {
        config.validate()?;
        let mut arch: Vec<(usize, Activation)> = config.hidden.iter().map(|&h| (h, Activation::Relu)).collect();
        arch.push((num_actions, Activation::Identity));
        let online = DenseNet::new(obs_dim, &arch, rng)?;
        let target = online.clone();
        Self::from_nets(QPair::new(online, target)?, config)
    }

    pub fn from_nets(nets: QPair, config: DdqnConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            optimizer: AdamState::for_net(&nets.online, config.learning_rate),
            buffer: ReplayBuffer::new(config.buffer_capacity),
            nets,
            config,
            steps: 0,
            updates: 0,
            held: None,
        })
    }

    pub fn num_actions(&self) -> usize {
        self.nets.num_actions()
    }

    pub fn epsilon(&self) -> f64 {
        self.config.epsilon.value(self.steps)
    }

    /// Epsilon-greedy when `explore`, otherwise argmax of the online network.
    pub fn act(&self, obs: &[f64], rng: &mut RngHandle, explore: bool) -> Result<usize> {
        let q = self.nets.online.predict(obs)?;
        if explore && rng.uniform() < self.epsilon() {
            return Ok(rng.index(q.len()));
        }
        Ok(argmax(&q))
    }

    /// Double-DQN regression target for one transition: the online network
    /// picks the next action, the target network scores it.
    pub fn td_target(&self, t: &Transition) -> Result<f64> {
        if t.done {
            return Ok(t.reward);
        }
        let next_online = self.nets.online.predict(&t.next_state)?;
        let next_target = self.nets.target.predict(&t.next_state)?;
        Ok(t.reward + self.config.gamma * next_target[argmax(&next_online)])
    }

    /// One Adam step on the mean squared TD error of a sampled batch,
    /// followed by the configured target sync. Returns the batch loss.
    pub fn learn_step(&mut self, rng: &mut RngHandle) -> Result<f64> {
        let batch_size = self.config.batch_size;
        if self.buffer.len() < batch_size {
            return Err(Error::Contract(format!(
                "replay buffer holds {} transitions, batch needs {batch_size}",
                self.buffer.len()
            )));
        }
        let batch = self.buffer.sample(batch_size, rng)?;
        let mut grads = DenseGrads::zeros_like(&self.nets.online);
        let mut loss = 0.0;
        let scale = 2.0 / batch_size as f64;
        for t in &batch {
            let y = self.td_target(t)?;
            let a = discrete_index(&t.action, self.num_actions())?;
            let pass = self.nets.online.forward(&t.state)?;
            let err = pass.output[a] - y;
            loss += err * err;
            let mut upstream = vec![0.0; pass.output.len()];
            upstream[a] = scale * err;
            self.nets.online.backward_accumulate(&pass.cache, &upstream, &mut grads)?;
        }
        loss /= batch_size as f64;
        if !loss.is_finite() || !grads.is_finite() {
            return Err(Error::Numeric(format!("non-finite DDQN loss {loss}")));
        }
        adam_step_net(&mut self.nets.online, &grads, &mut self.optimizer)?;
        self.updates += 1;
        match self.config.target_sync {
            TargetSync::Soft { tau } => self.nets.target.soft_update_from(&self.nets.online, tau)?,
            TargetSync::Hard { period } => {
                if self.updates % period == 0 {
                    self.nets.target = self.nets.online.clone();
                }
            }
        }
        Ok(loss)
    }
}
