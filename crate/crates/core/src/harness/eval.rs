use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::agents::AgentOracle;
use crate::attacks::{attack, AttackConfig};
use crate::envs::{EnvInstance, EnvParams};
use crate::error::{Error, Result};
use crate::rng::RngHandle;

/// Stream index for attack draws within one episode.
const ATTACK_STREAM: u64 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSpec {
    pub episodes: usize,
    pub seeds: Vec<u64>,
    pub attack: Option<AttackConfig>,
    /// Overrides the environment's episode cap.
    pub episode_cap: Option<usize>,
}

impl Default for EvalSpec {
    fn default() -> Self {
        Self {
            episodes: 100,
            seeds: vec![0, 1, 2, 3],
            attack: None,
            episode_cap: None,
        }
    }
}

impl EvalSpec {
    pub fn new(episodes: usize, seeds: Vec<u64>) -> Self {
        Self {
            episodes,
            seeds,
            ..Self::default()
        }
    }

    pub fn with_attack(&self, attack: Option<AttackConfig>) -> Self {
        Self {
            attack,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.episodes == 0 {
            return Err(Error::Argument("evaluation needs at least one episode".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Argument("evaluation needs at least one seed".into()));
        }
        if let Some(a) = &self.attack {
            a.validate()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalResult {
    pub mean: f64,
    /// Population standard deviation over all episodes.
    pub std: f64,
    /// Seed-major: all episodes of the first seed, then the next.
    pub per_episode_returns: Vec<f64>,
    pub per_seed_means: Vec<f64>,
}

pub(crate) fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Greedy return of one episode. Environment resets and attack draws use
/// streams derived only from `(seed, episode)`, so every parameter cell and
/// attack setting sees the same initial states.
pub fn run_episode(oracle: &dyn AgentOracle, params: &EnvParams, spec: &EvalSpec, seed: u64, episode: u64) -> Result<f64> {
    let mut env = EnvInstance::new(*params)?;
    if let Some(cap) = spec.episode_cap {
        env = env.with_episode_cap(cap);
    }
    let base = RngHandle::new(seed).fork(&[episode]);
    let mut reset_rng = base.clone();
    let mut attack_rng = base.fork(&[ATTACK_STREAM]);
    let mut obs = env.reset(&mut reset_rng);
    let mut total = 0.0;
    if env.episode_cap() == 0 {
        return Ok(total);
    }
    loop {
        let acting = match &spec.attack {
            Some(cfg) => attack(oracle, &obs, cfg, &mut attack_rng)?.s_adv,
            None => obs,
        };
        let out = env.step(&oracle.policy_action(&acting)?)?;
        total += out.reward;
        if out.done || out.truncated {
            return Ok(total);
        }
        obs = out.obs;
    }
}

/// Rolls out the oracle's greedy policy for every seed and episode.
pub fn evaluate(oracle: &dyn AgentOracle, params: &EnvParams, spec: &EvalSpec) -> Result<EvalResult> {
    spec.validate()?;
    params.validate()?;
    if oracle.obs_dim() != params.kind().obs_dim() || oracle.action_space() != params.kind().action_space() {
        return Err(Error::shape(format!(
            "agent ({} inputs, {:?}) does not fit {}",
            oracle.obs_dim(),
            oracle.action_space(),
            params.kind()
        )));
    }
    let jobs: Vec<(u64, u64)> = spec
        .seeds
        .iter()
        .flat_map(|&s| (0..spec.episodes as u64).map(move |e| (s, e)))
        .collect();
    let returns = jobs
        .par_iter()
        .map(|&(seed, ep)| run_episode(oracle, params, spec, seed, ep))
        .collect::<Result<Vec<f64>>>()?;
    let per_seed_means = returns.chunks(spec.episodes).map(|c| mean_std(c).0).collect();
    let (mean, std) = mean_std(&returns);
    Ok(EvalResult {
        mean,
        std,
        per_episode_returns: returns,
        per_seed_means,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::QPair;
    use crate::attacks::AttackKind;
    use crate::envs::EnvKind;
    use crate::nn::{Activation, DenseNet};

    fn random_cartpole_oracle() -> QPair {
        QPair::shared(DenseNet::new(4, &[(8, Activation::Relu), (2, Activation::Identity)], &mut RngHandle::new(3)).unwrap())
    }

    #[test]
    fn repeated_episode_is_deterministic() {
        let o = random_cartpole_oracle();
        let p = EnvKind::Cartpole.default_params();
        let spec = EvalSpec::new(3, vec![7]);
        let a = run_episode(&o, &p, &spec, 7, 1).unwrap();
        let b = run_episode(&o, &p, &spec, 7, 1).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn zero_cap_gives_zero_returns() {
        let o = random_cartpole_oracle();
        let mut spec = EvalSpec::new(5, vec![0, 1]);
        spec.episode_cap = Some(0);
        let r = evaluate(&o, &EnvKind::Cartpole.default_params(), &spec).unwrap();
        assert!(r.per_episode_returns.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn zero_epsilon_attack_matches_clean_evaluation() {
        let o = random_cartpole_oracle();
        let p = EnvKind::Cartpole.default_params();
        let spec = EvalSpec::new(6, vec![0, 1]);
        let clean = evaluate(&o, &p, &spec).unwrap();
        for kind in AttackKind::ALL {
            let attacked = evaluate(&o, &p, &spec.with_attack(Some(AttackConfig::new(kind, 0.0)))).unwrap();
            assert_eq!(clean, attacked);
        }
    }

    #[test]
    fn mismatched_agent_is_rejected_before_rollout() {
        let o = random_cartpole_oracle();
        let err = evaluate(&o, &EnvKind::MountainCar.default_params(), &EvalSpec::new(1, vec![0])).unwrap_err();
        assert!(matches!(err, Error::Shape(_)));
    }

    #[test]
    fn aggregates_are_consistent() {
        let o = random_cartpole_oracle();
        let r = evaluate(&o, &EnvKind::Cartpole.default_params(), &EvalSpec::new(4, vec![0, 1, 2])).unwrap();
        assert_eq!(r.per_episode_returns.len(), 12);
        let seed_avg = r.per_seed_means.iter().sum::<f64>() / 3.0;
        assert!((seed_avg - r.mean).abs() < 1e-9);
    }
}
