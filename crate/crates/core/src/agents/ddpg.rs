use serde::{Deserialize, Serialize};

use crate::agents::replay::ReplayBuffer;
use crate::agents::AgentOracle;
use crate::envs::{Action, ActionSpace};
use crate::error::{Error, Result};
use crate::nn::{adam_step_net, Activation, AdamState, DenseGrads, DenseNet};
use crate::rng::RngHandle;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DdpgConfig {
    pub actor_hidden: Vec<usize>,
    pub critic_hidden: Vec<usize>,
    pub gamma: f64,
    pub actor_learning_rate: f64,
    pub critic_learning_rate: f64,
    pub tau: f64,
    /// Standard deviation of the additive Gaussian exploration noise, in
    /// action units (actions live in `[-1, 1]`).
    pub noise_scale: f64,
    /// Mean-reversion rate of Ornstein-Uhlenbeck training noise. When set,
    /// training actions use the temporally correlated process
    /// `x <- x - theta * x + noise_scale * N(0, 1)` instead of independent draws.
    #[serde(default)]
    pub ou_theta: Option<f64>,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    pub warmup_steps: u64,
}

impl Default for DdpgConfig {
    fn default() -> Self {
        Self {
            actor_hidden: vec![64, 64],
            critic_hidden: vec![64, 64],
            gamma: 0.99,
            actor_learning_rate: 1e-4,
            critic_learning_rate: 1e-3,
            tau: 5e-3,
            noise_scale: 0.2,
            ou_theta: None,
            batch_size: 64,
            buffer_capacity: 50_000,
            warmup_steps: 1_000,
        }
    }
}

impl DdpgConfig {
    pub(crate) fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::Argument(format!("gamma must lie in [0, 1), got {}", self.gamma)));
        }
        if !(0.0..=1.0).contains(&self.tau) {
            return Err(Error::Argument(format!("tau must lie in [0, 1], got {}", self.tau)));
        }
        if self.batch_size == 0 || self.buffer_capacity == 0 || self.noise_scale < 0.0 {
            return Err(Error::Argument("invalid DDPG batch/buffer/noise settings".into()));
        }
        if let Some(theta) = self.ou_theta {
            if !(0.0..=1.0).contains(&theta) {
                return Err(Error::Argument(format!("ou_theta must lie in [0, 1], got {theta}")));
            }
        }
        Ok(())
    }
}

/// Actor, critic and their target copies. The actor ends in `tanh`, so
/// actions are in `[-1, 1]`; the critic reads `state ++ action`.
#[derive(Debug, Clone, PartialEq)]
pub struct ActorCritic {
    pub actor: DenseNet,
    pub critic: DenseNet,
    pub target_actor: DenseNet,
    pub target_critic: DenseNet,
}

impl ActorCritic {
    pub fn new(actor: DenseNet, critic: DenseNet) -> Result<Self> {
        if critic.input_dim() != actor.input_dim() + actor.output_dim() || critic.output_dim() != 1 {
            return Err(Error::shape(format!(
                "critic must map state ({}) ++ action ({}) to a scalar",
                actor.input_dim(),
                actor.output_dim()
            )));
        }
        Ok(Self {
            target_actor: actor.clone(),
            target_critic: critic.clone(),
            actor,
            critic,
        })
    }

    pub fn state_dim(&self) -> usize {
        self.actor.input_dim()
    }

    pub fn action_dim(&self) -> usize {
        self.actor.output_dim()
    }

    pub fn policy(&self, s: &[f64]) -> Result<Vec<f64>> {
        Ok(self.actor.predict(s)?.into_iter().map(|v| v.clamp(-1.0, 1.0)).collect())
    }

    fn joint(s: &[f64], a: &[f64]) -> Vec<f64> {
        let mut x = Vec::with_capacity(s.len() + a.len());
        x.extend_from_slice(s);
        x.extend_from_slice(a);
        x
    }

    pub fn critic_value(net: &DenseNet, s: &[f64], a: &[f64]) -> Result<f64> {
        Ok(net.predict(&Self::joint(s, a))?[0])
    }

    /// `dQ/d(s ++ a)` of `net` at `(s, a)`.
    pub fn critic_input_gradient(net: &DenseNet, s: &[f64], a: &[f64]) -> Result<Vec<f64>> {
        net.input_gradient(&Self::joint(s, a), &[1.0])
    }

    fn check_action(&self, a: &Action) -> Result<Vec<f64>> {
        match a.as_slice() {
            Some(v) if v.len() == self.action_dim() => Ok(v.to_vec()),
            _ => Err(Error::Argument(format!("expected a {}-D continuous action", self.action_dim()))),
        }
    }
}

impl AgentOracle for ActorCritic {
    fn obs_dim(&self) -> usize {
        self.state_dim()
    }

    fn action_space(&self) -> ActionSpace {
        ActionSpace::Continuous(self.action_dim())
    }

    fn policy_action(&self, s: &[f64]) -> Result<Action> {
        self.policy(s).map(Action::Continuous)
    }

    fn action_value(&self, s: &[f64], a: &Action) -> Result<f64> {
        let a = self.check_action(a)?;
        Self::critic_value(&self.target_critic, s, &a)
    }

    fn best_value(&self, s: &[f64]) -> Result<f64> {
        Self::critic_value(&self.target_critic, s, &self.policy(s)?)
    }

    /// `Q_target(s, U(s))`; the anchor plays no role for continuous actions.
    fn attack_loss(&self, _anchor: &[f64], at: &[f64]) -> Result<f64> {
        self.best_value(at)
    }

    /// Total derivative `dQ/ds + dQ/dU * dU/ds` of `Q_target(s, U(s))`.
    fn attack_gradient(&self, _anchor: &[f64], at: &[f64]) -> Result<Vec<f64>> {
        let a = self.actor.predict(at)?;
        let g = Self::critic_input_gradient(&self.target_critic, at, &a)?;
        let (g_state, g_action) = g.split_at(self.state_dim());
        let through_actor = self.actor.input_gradient(at, g_action)?;
        Ok(g_state.iter().zip(&through_actor).map(|(x, y)| x + y).collect())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DdpgAgent {
    pub nets: ActorCritic,
    pub config: DdpgConfig,
    pub actor_optimizer: AdamState,
    pub critic_optimizer: AdamState,
    pub buffer: ReplayBuffer,
    pub steps: u64,
    pub updates: u64,
    /// Current Ornstein-Uhlenbeck noise; empty until first used.
    pub(crate) ou_state: Vec<f64>,
}

impl DdpgAgent {
    pub fn new(state_dim: usize, action_dim: usize, config: DdpgConfig, rng: &mut RngHandle) -> Result<Self> {
        config.validate()?;
        let mut actor_arch: Vec<(usize, Activation)> =
            config.actor_hidden.iter().map(|&h| (h, Activation::Relu)).collect();
        actor_arch.push((action_dim, Activation::Tanh));
        let mut critic_arch: Vec<(usize, Activation)> =
            config.critic_hidden.iter().map(|&h| (h, Activation::Relu)).collect();
        critic_arch.push((1, Activation::Identity));
        let actor = DenseNet::new(state_dim, &actor_arch, rng)?;
        let critic = DenseNet::new(state_dim + action_dim, &critic_arch, rng)?;
        Self::from_nets(ActorCritic::new(actor, critic)?, config)
    }

    pub fn from_nets(nets: ActorCritic, config: DdpgConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            actor_optimizer: AdamState::for_net(&nets.actor, config.actor_learning_rate),
            critic_optimizer: AdamState::for_net(&nets.critic, config.critic_learning_rate),
            buffer: ReplayBuffer::new(config.buffer_capacity),
            nets,
            config,
            steps: 0,
            updates: 0,
            ou_state: Vec::new(),
        })
    }

    /// Training-time action. With Ornstein-Uhlenbeck noise configured the
    /// noise process advances one step; `warming` drops the actor term.
    pub(crate) fn behavior_act(&mut self, obs: &[f64], rng: &mut RngHandle, warming: bool) -> Result<Vec<f64>> {
        let Some(theta) = self.config.ou_theta else {
            if warming {
                return Ok((0..self.nets.action_dim()).map(|_| rng.uniform_range(-1.0, 1.0)).collect());
            }
            return self.act(obs, rng, true);
        };
        if self.ou_state.is_empty() {
            self.ou_state = vec![0.0; self.nets.action_dim()];
        }
        for x in self.ou_state.iter_mut() {
            *x += -theta * *x + self.config.noise_scale * rng.normal();
        }
        let base = if warming { vec![0.0; self.ou_state.len()] } else { self.nets.actor.predict(obs)? };
        Ok(base.iter().zip(&self.ou_state).map(|(a, x)| (a + x).clamp(-1.0, 1.0)).collect())
    }

    /// `U(obs)` plus Gaussian noise when exploring, clipped to `[-1, 1]`.
    pub fn act(&self, obs: &[f64], rng: &mut RngHandle, explore: bool) -> Result<Vec<f64>> {
        let mut a = self.nets.actor.predict(obs)?;
        if explore {
            for v in a.iter_mut() {
                *v += self.config.noise_scale * rng.normal();
            }
        }
        a.iter_mut().for_each(|v| *v = v.clamp(-1.0, 1.0));
        Ok(a)
    }

    /// Gradients of `-mean_b Q(s_b, U(s_b))` with respect to the actor
    /// parameters, where `dq_da(s, a)` supplies the critic's action gradient.
    pub fn actor_loss_grads<F>(&self, states: &[&[f64]], mut dq_da: F) -> Result<DenseGrads>
    where
        F: FnMut(&[f64], &[f64]) -> Result<Vec<f64>>,
    {
        if states.is_empty() {
            return Err(Error::Argument("empty actor batch".into()));
        }
        let mut grads = DenseGrads::zeros_like(&self.nets.actor);
        let scale = -1.0 / states.len() as f64;
        for s in states {
            let pass = self.nets.actor.forward(s)?;
            let g = dq_da(s, &pass.output)?;
            let upstream: Vec<f64> = g.iter().map(|v| v * scale).collect();
            self.nets.actor.backward_accumulate(&pass.cache, &upstream, &mut grads)?;
        }
        Ok(grads)
    }

    /// Critic action-gradient closure for [`actor_loss_grads`](Self::actor_loss_grads).
    pub fn critic_action_gradient(&self, s: &[f64], a: &[f64]) -> Result<Vec<f64>> {
        let g = ActorCritic::critic_input_gradient(&self.nets.critic, s, a)?;
        Ok(g[self.nets.state_dim()..].to_vec())
    }

    pub fn critic_target(&self, reward: f64, next_state: &[f64], done: bool) -> Result<f64> {
        if done {
            return Ok(reward);
        }
        let next_action = self.nets.target_actor.predict(next_state)?;
        Ok(reward + self.config.gamma * ActorCritic::critic_value(&self.nets.target_critic, next_state, &next_action)?)
    }

    /// Critic regression step, deterministic policy-gradient actor step,
    /// then soft target updates. Returns the critic loss.
    pub fn learn_step(&mut self, rng: &mut RngHandle) -> Result<f64> {
        let batch_size = self.config.batch_size;
        if self.buffer.len() < batch_size {
            return Err(Error::Contract(format!(
                "replay buffer holds {} transitions, batch needs {batch_size}",
                self.buffer.len()
            )));
        }
        let batch: Vec<_> = self.buffer.sample(batch_size, rng)?.into_iter().cloned().collect();

        let mut critic_grads = DenseGrads::zeros_like(&self.nets.critic);
        let mut loss = 0.0;
        let scale = 2.0 / batch_size as f64;
        for t in &batch {
            let y = self.critic_target(t.reward, &t.next_state, t.done)?;
            let a = self.nets.check_action(&t.action)?;
            let pass = self.nets.critic.forward(&ActorCritic::joint(&t.state, &a))?;
            let err = pass.output[0] - y;
            loss += err * err;
            self.nets
                .critic
                .backward_accumulate(&pass.cache, &[scale * err], &mut critic_grads)?;
        }
        loss /= batch_size as f64;
        if !loss.is_finite() || !critic_grads.is_finite() {
            return Err(Error::Numeric(format!("non-finite critic loss {loss}")));
        }
        adam_step_net(&mut self.nets.critic, &critic_grads, &mut self.critic_optimizer)?;

        let states: Vec<&[f64]> = batch.iter().map(|t| t.state.as_slice()).collect();
        let actor_grads = self.actor_loss_grads(&states, |s, a| self.critic_action_gradient(s, a))?;
        if !actor_grads.is_finite() {
            return Err(Error::Numeric("non-finite actor gradient".into()));
        }
        adam_step_net(&mut self.nets.actor, &actor_grads, &mut self.actor_optimizer)?;

        let tau = self.config.tau;
        self.nets.target_critic.soft_update_from(&self.nets.critic, tau)?;
        self.nets.target_actor.soft_update_from(&self.nets.actor, tau)?;
        self.updates += 1;
        Ok(loss)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::replay::Transition;

    fn small_agent(seed: u64) -> DdpgAgent {
        let cfg = DdpgConfig {
            actor_hidden: vec![6, 5],
            critic_hidden: vec![7],
            batch_size: 4,
            ..DdpgConfig::default()
        };
        DdpgAgent::new(3, 2, cfg, &mut RngHandle::new(seed)).unwrap()
    }

    fn fill(agent: &mut DdpgAgent, n: usize) {
        for i in 0..n {
            let x = i as f64 / n as f64;
            agent.buffer.push(Transition {
                state: vec![x, 1.0 - x, 0.5],
                action: Action::Continuous(vec![x - 0.5, 0.2]),
                reward: x,
                next_state: vec![1.0 - x, x, 0.25],
                done: i % 3 == 0,
            });
        }
    }

    #[test]
    fn zero_actor_gives_zero_action() {
        let actor = DenseNet::zeros(3, &[(4, Activation::Relu), (2, Activation::Tanh)]).unwrap();
        let critic = DenseNet::zeros(5, &[(4, Activation::Relu), (1, Activation::Identity)]).unwrap();
        let agent = DdpgAgent::from_nets(ActorCritic::new(actor, critic).unwrap(), DdpgConfig::default()).unwrap();
        assert_eq!(agent.act(&[0.1, 0.2, 0.3], &mut RngHandle::new(0), false).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn zero_noise_exploration_matches_greedy() {
        let mut agent = small_agent(1);
        agent.config.noise_scale = 0.0;
        let mut rng = RngHandle::new(3);
        let s = [0.3, 0.6, 0.9];
        assert_eq!(agent.act(&s, &mut rng, true).unwrap(), agent.act(&s, &mut rng, false).unwrap());
    }

    #[test]
    fn exploration_clips_to_bound() {
        let mut agent = small_agent(1);
        agent.config.noise_scale = 1e6;
        let mut rng = RngHandle::new(4);
        for _ in 0..20 {
            let a = agent.act(&[0.3, 0.6, 0.9], &mut rng, true).unwrap();
            assert!(a.iter().all(|v| v.abs() == 1.0), "{a:?}");
        }
    }

    #[test]
    fn terminal_critic_target_is_reward() {
        let agent = small_agent(2);
        assert_eq!(agent.critic_target(0.7, &[1.0, 2.0, 3.0], true).unwrap(), 0.7);
    }

    #[test]
    fn actor_gradient_matches_finite_differences() {
        let agent = small_agent(5);
        let s = [0.2, 0.7, 0.4];
        let grads = agent
            .actor_loss_grads(&[&s], |s, a| agent.critic_action_gradient(s, a))
            .unwrap();
        let objective = |actor: &DenseNet| {
            let a = actor.predict(&s).unwrap();
            ActorCritic::critic_value(&agent.nets.critic, &s, &a).unwrap()
        };
        let h = 1e-5;
        let analytic: Vec<f64> = grads.slices().flatten().map(|g| -g).collect();
        let mut idx = 0;
        let n_slices = agent.nets.actor.param_slices().count();
        for slice in 0..n_slices {
            let len = agent.nets.actor.param_slices().nth(slice).unwrap().len();
            for k in 0..len {
                let mut up = agent.nets.actor.clone();
                up.param_slices_mut().nth(slice).unwrap()[k] += h;
                let mut dn = agent.nets.actor.clone();
                dn.param_slices_mut().nth(slice).unwrap()[k] -= h;
                let fd = (objective(&up) - objective(&dn)) / (2.0 * h);
                let an = analytic[idx];
                let tol = (1e-5 * an.abs().max(fd.abs())).max(1e-7);
                assert!((fd - an).abs() <= tol, "param {idx}: fd {fd} vs {an}");
                idx += 1;
            }
        }
    }

    #[test]
    fn zero_tau_freezes_targets() {
        let mut agent = small_agent(6);
        agent.config.tau = 0.0;
        fill(&mut agent, 12);
        let ta = agent.nets.target_actor.clone();
        let tc = agent.nets.target_critic.clone();
        let mut rng = RngHandle::new(0);
        for _ in 0..5 {
            agent.learn_step(&mut rng).unwrap();
        }
        assert_ne!(agent.nets.actor, ta);
        assert_eq!(agent.nets.target_actor, ta);
        assert_eq!(agent.nets.target_critic, tc);
    }

    #[test]
    fn actor_step_moves_toward_quadratic_optimum() {
        let mut agent = small_agent(7);
        let target = [0.3, -0.4];
        let s = [0.5, 0.1, 0.9];
        let dist = |agent: &DdpgAgent| {
            let a = agent.nets.actor.predict(&s).unwrap();
            ((a[0] - target[0]).powi(2) + (a[1] - target[1]).powi(2)).sqrt()
        };
        let mut opt = AdamState::for_net(&agent.nets.actor, 1e-3);
        for _ in 0..5 {
            let before = dist(&agent);
            // Q(s, a) = -||a - a*||^2  =>  dQ/da = -2 (a - a*)
            let grads = agent
                .actor_loss_grads(&[&s], |_, a| Ok(vec![-2.0 * (a[0] - target[0]), -2.0 * (a[1] - target[1])]))
                .unwrap();
            adam_step_net(&mut agent.nets.actor, &grads, &mut opt).unwrap();
            assert!(dist(&agent) < before);
        }
    }

    #[test]
    fn attack_gradient_matches_finite_differences() {
        let agent = small_agent(9);
        let s = [0.4, 0.3, 0.8];
        let g = agent.nets.attack_gradient(&s, &s).unwrap();
        let h = 1e-6;
        for i in 0..3 {
            let mut up = s;
            let mut dn = s;
            up[i] += h;
            dn[i] -= h;
            let fd = (agent.nets.attack_loss(&s, &up).unwrap() - agent.nets.attack_loss(&s, &dn).unwrap()) / (2.0 * h);
            assert!((fd - g[i]).abs() < 1e-6, "{fd} vs {}", g[i]);
        }
    }

    #[test]
    fn underfull_buffer_is_contract_error() {
        let mut agent = small_agent(1);
        fill(&mut agent, 2);
        assert!(matches!(agent.learn_step(&mut RngHandle::new(0)), Err(Error::Contract(_))));
    }
}
