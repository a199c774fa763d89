use serde::{Deserialize, Serialize};

use crate::agents::ddqn::discrete_index;
use crate::agents::replay::Transition;
use crate::agents::{argmax, argmin, AgentOracle, EpsilonSchedule, HeldAction};
use crate::envs::{Action, ActionSpace};
use crate::error::{Error, Result};
use crate::nn::loss::cross_entropy_onehot;
use crate::nn::softmax;
use crate::rbf::RbfNet;
use crate::rng::RngHandle;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RbfConfig {
    pub bins_per_dim: usize,
    pub gamma: f64,
    pub learning_rate: f64,
    pub epsilon: EpsilonSchedule,
}

/// Online TD learner over an [`RbfNet`]; no replay, no target copy.
#[derive(Debug, Clone, PartialEq)]
pub struct RbfAgent {
    pub net: RbfNet,
    pub config: RbfConfig,
    pub steps: u64,
    pub(crate) held: Option<HeldAction>,
}

impl RbfAgent {
    pub fn new(state_dim: usize, num_actions: usize, config: RbfConfig) -> Result<Self> {
        if !(0.0..1.0).contains(&config.gamma) {
            return Err(Error::Argument(format!("gamma must lie in [0, 1), got {}", config.gamma)));
        }
        config.epsilon.validate()?;
        Ok(Self {
            net: RbfNet::new(state_dim, num_actions, config.bins_per_dim)?,
            config,
            steps: 0,
            held: None,
        })
    }

    pub fn epsilon(&self) -> f64 {
        self.config.epsilon.value(self.steps)
    }

    pub fn act(&self, obs: &[f64], rng: &mut RngHandle, explore: bool) -> Result<usize> {
        let q = self.net.q_values(obs)?.values;
        if explore && rng.uniform() < self.epsilon() {
            return Ok(rng.index(q.len()));
        }
        Ok(argmax(&q))
    }

    pub fn learn(&mut self, t: &Transition) -> Result<f64> {
        let a = discrete_index(&t.action, self.net.num_actions())?;
        self.net.td_update(
            &t.state,
            a,
            t.reward,
            &t.next_state,
            t.done,
            self.config.gamma,
            self.config.learning_rate,
        )
    }
}

/// The single RBF network plays both the online and the target role.
impl AgentOracle for RbfNet {
    fn obs_dim(&self) -> usize {
        self.state_dim()
    }

    fn action_space(&self) -> ActionSpace {
        ActionSpace::Discrete(self.num_actions())
    }

    fn policy_action(&self, s: &[f64]) -> Result<Action> {
        Ok(Action::Discrete(argmax(&self.q_values(s)?.values)))
    }

    fn action_value(&self, s: &[f64], a: &Action) -> Result<f64> {
        let idx = discrete_index(a, self.num_actions())?;
        Ok(self.q_values(s)?.values[idx])
    }

    fn best_value(&self, s: &[f64]) -> Result<f64> {
        let q = self.q_values(s)?.values;
        Ok(q[argmax(&q)])
    }

    fn target_values(&self, s: &[f64]) -> Result<Option<Vec<f64>>> {
        Ok(Some(self.q_values(s)?.values))
    }

    fn attack_loss(&self, anchor: &[f64], at: &[f64]) -> Result<f64> {
        let worst = argmin(&self.q_values(anchor)?.values);
        let pmf = softmax(&self.q_values(at)?.values)?;
        Ok(cross_entropy_onehot(&pmf, worst)?.loss)
    }

    fn attack_gradient(&self, anchor: &[f64], at: &[f64]) -> Result<Vec<f64>> {
        let worst = argmin(&self.q_values(anchor)?.values);
        let pmf = softmax(&self.q_values(at)?.values)?;
        let ce = cross_entropy_onehot(&pmf, worst)?;
        self.input_gradient(at, &ce.logit_grad)
    }

    fn best_action_gradient(&self, s: &[f64]) -> Result<Option<Vec<f64>>> {
        let q = self.q_values(s)?.values;
        let ce = cross_entropy_onehot(&softmax(&q)?, argmax(&q))?;
        self.input_gradient(s, &ce.logit_grad).map(Some)
    }
}
