//! Value-based agents and the oracle view that attacks consume.

pub mod ddpg;
pub mod ddqn;
pub mod rbf_agent;
pub mod replay;
pub mod train;

use serde::{Deserialize, Serialize};

use crate::envs::{Action, ActionSpace};
use crate::error::{Error, Result};
use crate::rng::RngHandle;

pub use ddpg::{ActorCritic, DdpgAgent, DdpgConfig};
pub use ddqn::{DdqnAgent, DdqnConfig, QPair, TargetSync};
pub use rbf_agent::{RbfAgent, RbfConfig};
pub use replay::{ReplayBuffer, Transition};
pub use train::{continue_training, train_vanilla, Agent, AgentConfig, AgentKind, StepRecord, TrainLog};

/// What an attacker may query about a trained agent.
///
/// `policy_action` is the behavior the agent would execute for an
/// observation; `action_value` and `best_value` come from the target value
/// estimate. The attack losses are exposed through their input gradients.
pub trait AgentOracle: Sync {
    fn obs_dim(&self) -> usize;

    fn action_space(&self) -> ActionSpace;

    fn policy_action(&self, s: &[f64]) -> Result<Action>;

    fn greedy_action(&self, s: &[f64]) -> Result<Action> {
        self.policy_action(s)
    }

    fn action_value(&self, s: &[f64], a: &Action) -> Result<f64>;

    fn best_value(&self, s: &[f64]) -> Result<f64>;

    /// Target values of every discrete action at `s`; `None` for continuous agents.
    fn target_values(&self, _s: &[f64]) -> Result<Option<Vec<f64>>> {
        Ok(None)
    }

    /// Value of the attack loss at `at`, with any action targeting fixed by
    /// the true state `anchor`.
    fn attack_loss(&self, anchor: &[f64], at: &[f64]) -> Result<f64>;

    /// Gradient of [`attack_loss`](Self::attack_loss) with respect to `at`.
    fn attack_gradient(&self, anchor: &[f64], at: &[f64]) -> Result<Vec<f64>>;

    /// Gradient of the best-action cross-entropy `-log pi(a*|s)` on the
    /// acting network; `None` when the action space is continuous.
    fn best_action_gradient(&self, _s: &[f64]) -> Result<Option<Vec<f64>>> {
        Ok(None)
    }
}

/// Linear decay from `start` to `end` over `anneal_steps`, then constant.
///
/// During training each exploratory action is repeated for `hold` steps
/// before the next epsilon draw; `hold = 1` is plain epsilon-greedy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpsilonSchedule {
    pub start: f64,
    pub end: f64,
    pub anneal_steps: u64,
    #[serde(default = "one")]
    pub hold: u64,
}

fn one() -> u64 {
    1
}

impl EpsilonSchedule {
    /// Default schedule for a step budget: 1.0 -> 0.05 over the first 10%.
    pub fn for_budget(steps: u64) -> Self {
        Self {
            start: 1.0,
            end: 0.05,
            anneal_steps: steps / 10,
            hold: 1,
        }
    }

    pub(crate) fn validate(&self) -> Result<()> {
        let unit = 0.0..=1.0;
        if !unit.contains(&self.start) || !unit.contains(&self.end) || self.hold == 0 {
            return Err(Error::Argument(format!(
                "epsilon schedule needs start and end in [0, 1] and hold >= 1, got {self:?}"
            )));
        }
        Ok(())
    }

    pub fn value(&self, step: u64) -> f64 {
        if self.anneal_steps == 0 || step >= self.anneal_steps {
            return self.end;
        }
        let frac = step as f64 / self.anneal_steps as f64;
        self.start + (self.end - self.start) * frac
    }
}

/// A random exploratory action still being repeated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct HeldAction {
    pub action: usize,
    pub remaining: u64,
}

/// Training-time epsilon-greedy choice with held exploratory actions.
/// `greedy` is only evaluated when the agent exploits.
pub(crate) fn explore_discrete(
    held: &mut Option<HeldAction>,
    epsilon: f64,
    hold: u64,
    num_actions: usize,
    rng: &mut RngHandle,
    greedy: impl FnOnce() -> Result<usize>,
) -> Result<usize> {
    if let Some(h) = held.as_mut() {
        if h.remaining > 0 {
            h.remaining -= 1;
            return Ok(h.action);
        }
    }
    *held = None;
    if rng.uniform() < epsilon {
        let action = rng.index(num_actions);
        if hold > 1 {
            *held = Some(HeldAction { action, remaining: hold - 1 });
        }
        return Ok(action);
    }
    greedy()
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Index of the smallest entry; ties go to the lowest index.
pub fn argmin(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v < values[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn arg_extrema_tie_break_low() {
        assert_eq!(argmax(&[2.0, 2.0]), 0);
        assert_eq!(argmax(&[1.0, 3.0]), 1);
        assert_eq!(argmin(&[1.0, 0.5, 0.5]), 1);
    }

    #[test]
    fn held_exploration_repeats_each_random_action() {
        let mut rng = RngHandle::new(5);
        let mut held = None;
        let picks: Vec<usize> = (0..40)
            .map(|_| explore_discrete(&mut held, 1.0, 4, 3, &mut rng, || unreachable!()).unwrap())
            .collect();
        for run in picks.chunks(4) {
            assert!(run.iter().all(|&a| a == run[0]), "{picks:?}");
        }
        // ten independent draws over 3 actions are not all equal for this seed
        assert!(picks.chunks(4).any(|r| r[0] != picks[0]));
    }

    #[test]
    fn unit_hold_is_plain_epsilon_greedy() {
        let mut a = RngHandle::new(6);
        let mut b = RngHandle::new(6);
        let mut held = None;
        for _ in 0..200 {
            let got = explore_discrete(&mut held, 0.3, 1, 4, &mut a, || Ok(2)).unwrap();
            let expect = if b.uniform() < 0.3 { b.index(4) } else { 2 };
            assert_eq!(got, expect);
            assert!(held.is_none());
        }
    }

    #[test]
    fn greedy_resumes_after_hold_expires() {
        let mut rng = RngHandle::new(7);
        let mut held = None;
        let first = explore_discrete(&mut held, 1.0, 3, 5, &mut rng, || Ok(99)).unwrap();
        for _ in 0..2 {
            assert_eq!(explore_discrete(&mut held, 0.0, 3, 5, &mut rng, || Ok(99)).unwrap(), first);
        }
        assert_eq!(explore_discrete(&mut held, 0.0, 3, 5, &mut rng, || Ok(99)).unwrap(), 99);
    }

    #[test]
    fn schedule_validation() {
        assert!(EpsilonSchedule::for_budget(10).validate().is_ok());
        assert!(EpsilonSchedule { hold: 0, ..EpsilonSchedule::for_budget(10) }.validate().is_err());
        assert!(EpsilonSchedule { end: 1.5, ..EpsilonSchedule::for_budget(10) }.validate().is_err());
    }

    #[test]
    fn epsilon_schedule_shape() {
        let s = EpsilonSchedule::for_budget(1000);
        assert_eq!(s.value(0), 1.0);
        assert!((s.value(50) - 0.525).abs() < 1e-12);
        assert_eq!(s.value(100), 0.05);
        assert_eq!(s.value(10_000), 0.05);
    }
}
