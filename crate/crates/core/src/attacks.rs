//! Observation-space attacks against an [`AgentOracle`].
//!
//! Every attack stays inside the l2 ball of radius `epsilon` around the
//! true observation. Attacked observations are handed to the oracle
//! unclipped, so a state near the edge of [0, 1] may leave the unit box.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::agents::AgentOracle;
use crate::envs::{Action, ActionSpace};
use crate::error::{Error, Result};
use crate::rng::{BetaSampler, RngHandle};

/// Gradients with a smaller l2 norm count as zero.
pub const ZERO_GRADIENT_NORM: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackKind {
    Naive,
    Gradient,
    Sgd,
    Hfsgm,
}

impl AttackKind {
    pub const ALL: [AttackKind; 4] = [AttackKind::Naive, AttackKind::Gradient, AttackKind::Sgd, AttackKind::Hfsgm];

    pub fn name(self) -> &'static str {
        match self {
            AttackKind::Naive => "naive",
            AttackKind::Gradient => "gradient",
            AttackKind::Sgd => "sgd",
            AttackKind::Hfsgm => "hfsgm",
        }
    }
}

impl fmt::Display for AttackKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AttackKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        AttackKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown attack kind '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttackConfig {
    pub epsilon: f64,
    pub n_samples: usize,
    pub alpha_b: f64,
    pub beta_b: f64,
    pub kind: AttackKind,
    pub sgd_step: f64,
}

impl AttackConfig {
    /// Uniform magnitudes (Beta(1, 1)) and 200 candidates.
    pub fn new(kind: AttackKind, epsilon: f64) -> Self {
        Self {
            epsilon,
            n_samples: 200,
            alpha_b: 1.0,
            beta_b: 1.0,
            kind,
            sgd_step: 0.01,
        }
    }

    pub fn with_samples(mut self, n: usize) -> Self {
        self.n_samples = n;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon.is_finite() && self.epsilon >= 0.0) {
            return Err(Error::Argument(format!("epsilon must be finite and >= 0, got {}", self.epsilon)));
        }
        if !(self.alpha_b > 0.0 && self.beta_b > 0.0 && self.alpha_b.is_finite() && self.beta_b.is_finite()) {
            return Err(Error::Argument(format!(
                "beta shapes must be positive, got ({}, {})",
                self.alpha_b, self.beta_b
            )));
        }
        if self.n_samples == 0 && matches!(self.kind, AttackKind::Naive | AttackKind::Gradient) {
            return Err(Error::Argument(format!("{} attack needs at least one sample", self.kind)));
        }
        if self.kind == AttackKind::Sgd && !(self.sgd_step.is_finite() && self.sgd_step > 0.0) {
            return Err(Error::Argument(format!("sgd step must be positive, got {}", self.sgd_step)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackOutcome {
    pub s_adv: Vec<f64>,
    pub fooled_action: Action,
    /// Target value of `fooled_action` at the true state.
    pub predicted_value: f64,
    /// Whether the returned state lowers the target value below `best_value(s)`.
    pub improved: bool,
    pub zero_gradient: bool,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Pulls `candidate` back onto the ball of radius `epsilon` around `center`.
pub fn project_to_ball(center: &[f64], candidate: &mut [f64], epsilon: f64) {
    let d: Vec<f64> = candidate.iter().zip(center).map(|(c, s)| c - s).collect();
    let n = norm(&d);
    if n > epsilon {
        let k = epsilon / n;
        for ((c, s), di) in candidate.iter_mut().zip(center).zip(&d) {
            *c = s + di * k;
        }
    }
}

fn check_dims(oracle: &dyn AgentOracle, s: &[f64]) -> Result<()> {
    if s.len() != oracle.obs_dim() {
        return Err(Error::shape(format!(
            "oracle observes {} dimensions, state has {}",
            oracle.obs_dim(),
            s.len()
        )));
    }
    Ok(())
}

/// Outcome that leaves the state untouched.
fn unchanged(oracle: &dyn AgentOracle, s: &[f64], zero_gradient: bool) -> Result<AttackOutcome> {
    let action = oracle.policy_action(s)?;
    Ok(AttackOutcome {
        predicted_value: oracle.action_value(s, &action)?,
        s_adv: s.to_vec(),
        fooled_action: action,
        improved: false,
        zero_gradient,
    })
}

/// Outcome for a single fixed adversarial state, no selection.
fn settle(oracle: &dyn AgentOracle, s: &[f64], s_adv: Vec<f64>, zero_gradient: bool) -> Result<AttackOutcome> {
    let action = oracle.policy_action(&s_adv)?;
    let value = oracle.action_value(s, &action)?;
    Ok(AttackOutcome {
        improved: value < oracle.best_value(s)?,
        s_adv,
        fooled_action: action,
        predicted_value: value,
        zero_gradient,
    })
}

/// Keeps the candidate whose induced action has the lowest target value at
/// `s`; falls back to `s` when nothing beats `best_value(s)`.
fn select_lowest<I>(oracle: &dyn AgentOracle, s: &[f64], candidates: I) -> Result<AttackOutcome>
where
    I: IntoIterator<Item = Vec<f64>>,
{
    let mut best: Option<(f64, Vec<f64>, Action)> = None;
    for c in candidates {
        let a = oracle.policy_action(&c)?;
        let v = oracle.action_value(s, &a)?;
        if best.as_ref().is_none_or(|(bv, _, _)| v < *bv) {
            best = Some((v, c, a));
        }
    }
    let reference = oracle.best_value(s)?;
    match best {
        Some((v, c, a)) if v < reference => Ok(AttackOutcome {
            s_adv: c,
            fooled_action: a,
            predicted_value: v,
            improved: true,
            zero_gradient: false,
        }),
        _ => unchanged(oracle, s, false),
    }
}

/// Best of `n_samples` random perturbations drawn per dimension from
/// `epsilon * (Beta(alpha, beta) - 0.5)` and rescaled into the l2 ball.
pub fn attack_naive(oracle: &dyn AgentOracle, s: &[f64], cfg: &AttackConfig, rng: &mut RngHandle) -> Result<AttackOutcome> {
    cfg.validate()?;
    check_dims(oracle, s)?;
    if cfg.epsilon == 0.0 {
        return unchanged(oracle, s, false);
    }
    let beta = BetaSampler::new(cfg.alpha_b, cfg.beta_b)?;
    let mut candidates = Vec::with_capacity(cfg.n_samples);
    for _ in 0..cfg.n_samples {
        let mut c: Vec<f64> = s.iter().map(|x| x + cfg.epsilon * (beta.sample(rng) - 0.5)).collect();
        project_to_ball(s, &mut c, cfg.epsilon);
        candidates.push(c);
    }
    select_lowest(oracle, s, candidates)
}

/// Unit descent direction of the oracle's attack loss at `s`, or `None`
/// when the gradient vanishes.
pub fn attack_direction(oracle: &dyn AgentOracle, s: &[f64]) -> Result<Option<Vec<f64>>> {
    check_dims(oracle, s)?;
    let g = oracle.attack_gradient(s, s)?;
    let n = norm(&g);
    if !n.is_finite() {
        return Err(Error::Numeric("attack gradient is not finite".into()));
    }
    if n < ZERO_GRADIENT_NORM {
        return Ok(None);
    }
    Ok(Some(g.into_iter().map(|x| x / n).collect()))
}

/// Candidates `s - epsilon * Beta(alpha, beta) * g` along the normalized
/// loss gradient `g`, selected like [`attack_naive`].
pub fn attack_gradient(oracle: &dyn AgentOracle, s: &[f64], cfg: &AttackConfig, rng: &mut RngHandle) -> Result<AttackOutcome> {
    cfg.validate()?;
    check_dims(oracle, s)?;
    if cfg.epsilon == 0.0 {
        return unchanged(oracle, s, false);
    }
    let Some(g) = attack_direction(oracle, s)? else {
        return unchanged(oracle, s, true);
    };
    let beta = BetaSampler::new(cfg.alpha_b, cfg.beta_b)?;
    let candidates: Vec<Vec<f64>> = (0..cfg.n_samples)
        .map(|_| {
            let m = cfg.epsilon * beta.sample(rng);
            s.iter().zip(&g).map(|(x, gi)| x - m * gi).collect()
        })
        .collect();
    select_lowest(oracle, s, candidates)
}

/// `n_samples` normalized descent steps of size `sgd_step`, projected back
/// into the ball after each; returns the last iterate.
pub fn attack_sgd(oracle: &dyn AgentOracle, s: &[f64], cfg: &AttackConfig) -> Result<AttackOutcome> {
    cfg.validate()?;
    check_dims(oracle, s)?;
    if cfg.epsilon == 0.0 || cfg.n_samples == 0 {
        return unchanged(oracle, s, false);
    }
    let mut x = s.to_vec();
    let mut stalled = false;
    for _ in 0..cfg.n_samples {
        let g = oracle.attack_gradient(s, &x)?;
        let n = norm(&g);
        if !n.is_finite() {
            return Err(Error::Numeric("attack gradient is not finite".into()));
        }
        if n < ZERO_GRADIENT_NORM {
            stalled = true;
            break;
        }
        for (xi, gi) in x.iter_mut().zip(&g) {
            *xi -= cfg.sgd_step * gi / n;
        }
        project_to_ball(s, &mut x, cfg.epsilon);
    }
    settle(oracle, s, x, stalled)
}

/// One sign step that raises the cross-entropy of the best action on the
/// acting network, scaled so the step has l2 norm `epsilon`.
pub fn attack_hfsgm(oracle: &dyn AgentOracle, s: &[f64], cfg: &AttackConfig) -> Result<AttackOutcome> {
    cfg.validate()?;
    check_dims(oracle, s)?;
    if let ActionSpace::Continuous(_) = oracle.action_space() {
        return Err(Error::Contract("hfsgm needs a discrete-action oracle".into()));
    }
    if cfg.epsilon == 0.0 {
        return unchanged(oracle, s, false);
    }
    let g = oracle
        .best_action_gradient(s)?
        .ok_or_else(|| Error::Contract("oracle exposes no best-action gradient".into()))?;
    if g.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numeric("hfsgm gradient is not finite".into()));
    }
    let signs: Vec<f64> = g
        .iter()
        .map(|&x| if x.abs() < ZERO_GRADIENT_NORM { 0.0 } else { x.signum() })
        .collect();
    let active = signs.iter().filter(|x| **x != 0.0).count();
    if active == 0 {
        return unchanged(oracle, s, true);
    }
    let step = cfg.epsilon / (active as f64).sqrt();
    let s_adv = s.iter().zip(&signs).map(|(x, sg)| x + step * sg).collect();
    settle(oracle, s, s_adv, false)
}

/// Dispatches on `cfg.kind`. Deterministic attacks do not touch `rng`.
pub fn attack(oracle: &dyn AgentOracle, s: &[f64], cfg: &AttackConfig, rng: &mut RngHandle) -> Result<AttackOutcome> {
    match cfg.kind {
        AttackKind::Naive => attack_naive(oracle, s, cfg, rng),
        AttackKind::Gradient => attack_gradient(oracle, s, cfg, rng),
        AttackKind::Sgd => attack_sgd(oracle, s, cfg),
        AttackKind::Hfsgm => attack_hfsgm(oracle, s, cfg),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::QPair;
    use crate::nn::{softmax, Activation, DenseLayer, DenseNet};
    use proptest::prelude::*;

    /// Linear Q oracle `Q(s) = W s + b` with shared online and target nets.
    fn linear(w: Vec<Vec<f64>>, b: Vec<f64>) -> QPair {
        let out = w.len();
        let inp = w[0].len();
        let flat = w.into_iter().flatten().collect();
        let layer = DenseLayer::new(inp, out, flat, b, Activation::Identity).unwrap();
        QPair::shared(DenseNet::from_layers(vec![layer]).unwrap())
    }

    /// `Q(s, .) = [s, 1 - s]`, crossing at 0.5.
    fn crossing_toy() -> QPair {
        linear(vec![vec![1.0], vec![-1.0]], vec![0.0, 1.0])
    }

    fn flip_rate(kind: AttackKind, n: usize, trials: u64) -> f64 {
        let oracle = crossing_toy();
        let cfg = AttackConfig::new(kind, 0.2).with_samples(n);
        let flips = (0..trials)
            .filter(|&t| {
                let out = attack(&oracle, &[0.45], &cfg, &mut RngHandle::new(t)).unwrap();
                out.fooled_action == Action::Discrete(0)
            })
            .count();
        flips as f64 / trials as f64
    }

    #[test]
    fn zero_epsilon_is_identity_for_every_kind() {
        let oracle = crossing_toy();
        for kind in AttackKind::ALL {
            let mut rng = RngHandle::new(1);
            let out = attack(&oracle, &[0.3], &AttackConfig::new(kind, 0.0), &mut rng).unwrap();
            assert_eq!(out.s_adv, vec![0.3]);
            assert!(!out.improved);
            // no randomness consumed
            assert_eq!(rng.next_u64(), RngHandle::new(1).next_u64());
        }
    }

    #[test]
    fn naive_flips_the_crossing_toy() {
        // at 0.45 the greedy action is 1; any candidate above 0.5 picks action 0,
        // whose value 0.45 is below the best 0.55
        assert!(flip_rate(AttackKind::Naive, 500, 200) > 0.99);
    }

    #[test]
    fn gradient_needs_far_fewer_samples_than_naive() {
        // each naive candidate flips with probability 1/4, each gradient candidate with 3/4
        let gb10 = flip_rate(AttackKind::Gradient, 10, 400);
        let ns100 = flip_rate(AttackKind::Naive, 100, 400);
        assert!(gb10 >= ns100 - 0.01, "gradient@10 {gb10} vs naive@100 {ns100}");
        let gb1 = flip_rate(AttackKind::Gradient, 1, 2000);
        let ns1 = flip_rate(AttackKind::Naive, 1, 2000);
        assert!((gb1 - 0.75).abs() < 0.05 && (ns1 - 0.25).abs() < 0.05, "{gb1} {ns1}");
    }

    #[test]
    fn gradient_direction_matches_closed_form() {
        // two actions, Q = W s + b; worst action w = argmin Q(s)
        let w = vec![vec![0.7, -1.3], vec![-0.4, 0.9]];
        let b = vec![0.1, -0.2];
        let oracle = linear(w.clone(), b.clone());
        let s = [0.3, 0.6];
        let q: Vec<f64> = (0..2).map(|k| w[k][0] * s[0] + w[k][1] * s[1] + b[k]).collect();
        let worst = if q[1] < q[0] { 1 } else { 0 };
        let p = softmax(&q).unwrap().probs().to_vec();
        let expected: Vec<f64> = (0..2)
            .map(|j| (0..2).map(|k| (p[k] - f64::from(u8::from(k == worst))) * w[k][j]).sum())
            .collect();
        let n = norm(&expected);
        let g = attack_direction(&oracle, &s).unwrap().unwrap();
        for (a, e) in g.iter().zip(&expected) {
            assert!((a - e / n).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_gradient_is_flagged() {
        let oracle = linear(vec![vec![0.0], vec![0.0]], vec![1.0, 0.0]);
        let out = attack_gradient(&oracle, &[0.5], &AttackConfig::new(AttackKind::Gradient, 0.1), &mut RngHandle::new(0))
            .unwrap();
        assert!(out.zero_gradient && !out.improved);
        assert_eq!(out.s_adv, vec![0.5]);
    }

    #[test]
    fn sgd_without_steps_is_identity() {
        let oracle = crossing_toy();
        let cfg = AttackConfig::new(AttackKind::Sgd, 0.1).with_samples(0);
        assert_eq!(attack_sgd(&oracle, &[0.4], &cfg).unwrap().s_adv, vec![0.4]);
    }

    #[test]
    fn sgd_lands_on_the_ball_boundary() {
        let oracle = linear(vec![vec![1.0, 0.5], vec![-1.0, 0.2], vec![0.3, -0.8]], vec![0.0, 0.4, 0.1]);
        let s = [0.5, 0.5];
        let mut cfg = AttackConfig::new(AttackKind::Sgd, 0.05).with_samples(50);
        cfg.sgd_step = 0.05;
        let out = attack_sgd(&oracle, &s, &cfg).unwrap();
        let d: Vec<f64> = out.s_adv.iter().zip(&s).map(|(a, b)| a - b).collect();
        assert!((norm(&d) - 0.05).abs() < 1e-12);
    }

    #[test]
    fn sgd_descends_a_convex_loss() {
        // one-action-free quadratic: the loss is -log pi_w which is convex in the logits
        let oracle = linear(vec![vec![2.0], vec![-2.0]], vec![0.0, 0.0]);
        let s = [0.1];
        let mut cfg = AttackConfig::new(AttackKind::Sgd, 1.0).with_samples(20);
        cfg.sgd_step = 0.01;
        let out = attack_sgd(&oracle, &s, &cfg).unwrap();
        let before = oracle.attack_loss(&s, &s).unwrap();
        let after = oracle.attack_loss(&s, &out.s_adv).unwrap();
        assert!(after < before);
    }

    #[test]
    fn hfsgm_and_gradient_target_different_actions() {
        // logits at s=0: (ln 0.5, ln 0.3, ln 0.2) so pi = (0.5, 0.3, 0.2); the worst is action 2
        let b = vec![0.5f64.ln(), 0.3f64.ln(), 0.2f64.ln()];
        // moving along +x raises action 1 steeply, along +y raises action 2 gently
        let w = vec![vec![0.0, 0.0], vec![3.0, 0.0], vec![0.0, 1.0]];
        let oracle = linear(w, b);
        let s = [0.0, 0.0];
        let probs = |x: &[f64]| softmax(&oracle.target.predict(x).unwrap()).unwrap().probs().to_vec();
        let eps = 0.05;

        let hf = attack_hfsgm(&oracle, &s, &AttackConfig::new(AttackKind::Hfsgm, eps)).unwrap();
        let p_hf = probs(&hf.s_adv);
        let g = attack_direction(&oracle, &s).unwrap().unwrap();
        let step: Vec<f64> = s.iter().zip(&g).map(|(x, gi)| x - eps * gi).collect();
        let p_gb = probs(&step);
        let p0 = probs(&s);

        // hfsgm pushes mass toward action 1, the gradient attack toward the worst action 2
        assert!(p_hf[1] - p0[1] > p_hf[2] - p0[2]);
        assert!(p_gb[2] > p0[2]);
        assert!(p_gb[2] - p0[2] > p_hf[2] - p0[2]);
    }

    #[test]
    fn hfsgm_matches_gradient_on_binary_toy() {
        let oracle = crossing_toy();
        let hf = attack_hfsgm(&oracle, &[0.45], &AttackConfig::new(AttackKind::Hfsgm, 0.2)).unwrap();
        assert_eq!(hf.fooled_action, Action::Discrete(0));
        assert!((hf.s_adv[0] - 0.65).abs() < 1e-12);
    }

    #[test]
    fn invalid_config_is_rejected() {
        let oracle = crossing_toy();
        let mut rng = RngHandle::new(0);
        assert!(attack(&oracle, &[0.5], &AttackConfig::new(AttackKind::Naive, -0.1), &mut rng).is_err());
        assert!(attack(&oracle, &[0.5], &AttackConfig::new(AttackKind::Naive, 0.1).with_samples(0), &mut rng).is_err());
        assert!(attack(&oracle, &[0.5, 0.5], &AttackConfig::new(AttackKind::Naive, 0.1), &mut rng).is_err());
    }

    #[test]
    fn naive_budget_is_monotone_in_expectation() {
        let oracle = linear(vec![vec![1.0, -0.5], vec![-0.7, 0.9], vec![0.2, 0.1]], vec![0.0, 0.1, 0.3]);
        let s = [0.4, 0.6];
        let mean_value = |n: usize| {
            let cfg = AttackConfig::new(AttackKind::Naive, 0.3).with_samples(n);
            (0..300)
                .map(|t| attack_naive(&oracle, &s, &cfg, &mut RngHandle::new(t)).unwrap().predicted_value)
                .sum::<f64>()
                / 300.0
        };
        let (a, b, c) = (mean_value(1), mean_value(5), mean_value(25));
        assert!(a >= b - 1e-12 && b >= c - 1e-12, "{a} {b} {c}");
    }

    proptest! {
        #[test]
        fn attacks_are_sound_and_contained(
            w in prop::collection::vec(-2.0f64..2.0, 6),
            b in prop::collection::vec(-1.0f64..1.0, 3),
            s in prop::collection::vec(0.0f64..1.0, 2),
            eps in 0.0f64..0.3,
            seed in any::<u64>(),
        ) {
            let oracle = linear(vec![w[0..2].to_vec(), w[2..4].to_vec(), w[4..6].to_vec()], b);
            for kind in AttackKind::ALL {
                let cfg = AttackConfig::new(kind, eps).with_samples(20);
                let out = attack(&oracle, &s, &cfg, &mut RngHandle::new(seed)).unwrap();
                let d: Vec<f64> = out.s_adv.iter().zip(&s).map(|(a, b)| a - b).collect();
                prop_assert!(norm(&d) <= eps + 1e-9);
                if out.improved {
                    prop_assert!(out.predicted_value <= oracle.best_value(&s).unwrap());
                }
            }
        }

        #[test]
        fn descent_raises_worst_action_probability(
            w in prop::collection::vec(-2.0f64..2.0, 6),
            b in prop::collection::vec(-1.0f64..1.0, 3),
            s in prop::collection::vec(0.0f64..1.0, 2),
        ) {
            let oracle = linear(vec![w[0..2].to_vec(), w[2..4].to_vec(), w[4..6].to_vec()], b);
            let q = oracle.target.predict(&s).unwrap();
            let worst = crate::agents::argmin(&q);
            if let Some(g) = attack_direction(&oracle, &s).unwrap() {
                let h = 1e-6;
                let moved: Vec<f64> = s.iter().zip(&g).map(|(x, gi)| x - h * gi).collect();
                let p0 = softmax(&q).unwrap().probs()[worst];
                let p1 = softmax(&oracle.target.predict(&moved).unwrap()).unwrap().probs()[worst];
                prop_assert!(p1 >= p0);
            }
        }
    }
}
