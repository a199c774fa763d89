//! Parameterizable classic-control environments with observations
//! normalized to the unit cube.

pub mod cartpole;
pub mod mountain_car;
pub mod pendulum;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RngHandle;

pub use cartpole::CartPoleParams;
pub use mountain_car::MountainCarParams;
pub use pendulum::PendulumParams;

pub const DEFAULT_EPISODE_CAP: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvKind {
    Cartpole,
    MountainCar,
    MountainCarContinuous,
    Pendulum,
}

impl EnvKind {
    pub const ALL: [EnvKind; 4] = [
        EnvKind::Cartpole,
        EnvKind::MountainCar,
        EnvKind::MountainCarContinuous,
        EnvKind::Pendulum,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EnvKind::Cartpole => "cartpole",
            EnvKind::MountainCar => "mountain_car",
            EnvKind::MountainCarContinuous => "mountain_car_continuous",
            EnvKind::Pendulum => "pendulum",
        }
    }

    pub fn obs_dim(self) -> usize {
        match self {
            EnvKind::Cartpole => 4,
            EnvKind::MountainCar | EnvKind::MountainCarContinuous => 2,
            EnvKind::Pendulum => 3,
        }
    }

    pub fn action_space(self) -> ActionSpace {
        match self {
            EnvKind::Cartpole => ActionSpace::Discrete(2),
            EnvKind::MountainCar => ActionSpace::Discrete(3),
            EnvKind::MountainCarContinuous | EnvKind::Pendulum => ActionSpace::Continuous(1),
        }
    }

    pub fn default_params(self) -> EnvParams {
        match self {
            EnvKind::Cartpole => EnvParams::Cartpole(CartPoleParams::default()),
            EnvKind::MountainCar => EnvParams::MountainCar(MountainCarParams::discrete_default()),
            EnvKind::MountainCarContinuous => {
                EnvParams::MountainCarContinuous(MountainCarParams::continuous_default())
            }
            EnvKind::Pendulum => EnvParams::Pendulum(PendulumParams::default()),
        }
    }

    pub fn episode_cap(self) -> usize {
        match self {
            EnvKind::Pendulum => pendulum::EPISODE_CAP,
            _ => DEFAULT_EPISODE_CAP,
        }
    }

    pub fn obs_bounds(self) -> (&'static [f64], &'static [f64]) {
        match self {
            EnvKind::Cartpole => (&cartpole::OBS_LOW, &cartpole::OBS_HIGH),
            EnvKind::MountainCar | EnvKind::MountainCarContinuous => {
                (&mountain_car::OBS_LOW, &mountain_car::OBS_HIGH)
            }
            EnvKind::Pendulum => (&pendulum::OBS_LOW, &pendulum::OBS_HIGH),
        }
    }

    /// The two parameters varied by default robustness grids.
    pub fn grid_axes(self) -> [&'static str; 2] {
        match self {
            EnvKind::Cartpole => ["cart_mass", "pole_length"],
            EnvKind::MountainCar | EnvKind::MountainCarContinuous => ["power", "gravity_scale"],
            EnvKind::Pendulum => ["mass", "length"],
        }
    }
}

impl fmt::Display for EnvKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EnvKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        EnvKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown environment '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActionSpace {
    Discrete(usize),
    /// Continuous actions of the given dimension, each in `[-1, 1]`.
    Continuous(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Action {
    Discrete(usize),
    Continuous(Vec<f64>),
}

impl Action {
    pub fn index(&self) -> Option<usize> {
        match self {
            Action::Discrete(i) => Some(*i),
            Action::Continuous(_) => None,
        }
    }

    pub fn as_slice(&self) -> Option<&[f64]> {
        match self {
            Action::Discrete(_) => None,
            Action::Continuous(v) => Some(v),
        }
    }
}

/// Physical parameters of one environment instance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EnvParams {
    Cartpole(CartPoleParams),
    MountainCar(MountainCarParams),
    MountainCarContinuous(MountainCarParams),
    Pendulum(PendulumParams),
}

impl EnvParams {
    pub fn kind(&self) -> EnvKind {
        match self {
            EnvParams::Cartpole(_) => EnvKind::Cartpole,
            EnvParams::MountainCar(_) => EnvKind::MountainCar,
            EnvParams::MountainCarContinuous(_) => EnvKind::MountainCarContinuous,
            EnvParams::Pendulum(_) => EnvKind::Pendulum,
        }
    }

    pub fn field_names(&self) -> &'static [&'static str] {
        match self {
            EnvParams::Cartpole(_) => &["cart_mass", "pole_mass", "pole_length", "gravity", "force_mag", "dt"],
            EnvParams::MountainCar(_) | EnvParams::MountainCarContinuous(_) => &["power", "gravity_scale"],
            EnvParams::Pendulum(_) => &["mass", "length", "max_torque", "dt"],
        }
    }

    fn slot(&mut self, name: &str) -> Option<&mut f64> {
        match self {
            EnvParams::Cartpole(p) => match name {
                "cart_mass" => Some(&mut p.cart_mass),
                "pole_mass" => Some(&mut p.pole_mass),
                "pole_length" => Some(&mut p.pole_length),
                "gravity" => Some(&mut p.gravity),
                "force_mag" => Some(&mut p.force_mag),
                "dt" => Some(&mut p.dt),
                _ => None,
            },
            EnvParams::MountainCar(p) | EnvParams::MountainCarContinuous(p) => match name {
                "power" => Some(&mut p.power),
                "gravity_scale" => Some(&mut p.gravity_scale),
                _ => None,
            },
            EnvParams::Pendulum(p) => match name {
                "mass" => Some(&mut p.mass),
                "length" => Some(&mut p.length),
                "max_torque" => Some(&mut p.max_torque),
                "dt" => Some(&mut p.dt),
                _ => None,
            },
        }
    }

    pub fn get(&self, name: &str) -> Result<f64> {
        let mut copy = *self;
        copy.slot(name)
            .map(|v| *v)
            .ok_or_else(|| Error::Config(format!("{} has no parameter '{name}'", self.kind())))
    }

    /// Returns a copy with parameter `name` set to `value`.
    pub fn with(&self, name: &str, value: f64) -> Result<Self> {
        let mut copy = *self;
        let kind = self.kind();
        let slot = copy
            .slot(name)
            .ok_or_else(|| Error::Config(format!("{kind} has no parameter '{name}'")))?;
        *slot = value;
        copy.validate()?;
        Ok(copy)
    }

    pub fn validate(&self) -> Result<()> {
        let mut copy = *self;
        for name in self.field_names() {
            let v = *copy.slot(name).unwrap();
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Argument(format!(
                    "{} parameter '{name}' must be positive, got {v}",
                    self.kind()
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub obs: Vec<f64>,
    pub reward: f64,
    /// Natural termination (failure or goal).
    pub done: bool,
    /// Episode cap reached without termination.
    pub truncated: bool,
}

pub fn normalize(kind: EnvKind, raw: &[f64]) -> Vec<f64> {
    let (low, high) = kind.obs_bounds();
    raw.iter()
        .zip(low.iter().zip(high))
        .map(|(&v, (&lo, &hi))| (v.clamp(lo, hi) - lo) / (hi - lo))
        .collect()
}

pub fn denormalize(kind: EnvKind, normalized: &[f64]) -> Vec<f64> {
    let (low, high) = kind.obs_bounds();
    normalized
        .iter()
        .zip(low.iter().zip(high))
        .map(|(&v, (&lo, &hi))| lo + v * (hi - lo))
        .collect()
}

/// A running environment. The physical state is kept in native units;
/// agents only ever see [`normalize`]d observations.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvInstance {
    params: EnvParams,
    state: Vec<f64>,
    step_count: usize,
    episode_cap: usize,
    finished: bool,
}

impl EnvInstance {
    pub fn new(params: EnvParams) -> Result<Self> {
        params.validate()?;
        let kind = params.kind();
        Ok(Self {
            params,
            state: match kind {
                EnvKind::Cartpole => vec![0.0; 4],
                _ => vec![0.0; 2],
            },
            step_count: 0,
            episode_cap: kind.episode_cap(),
            finished: true,
        })
    }

    pub fn with_episode_cap(mut self, cap: usize) -> Self {
        self.episode_cap = cap;
        self
    }

    pub fn kind(&self) -> EnvKind {
        self.params.kind()
    }

    pub fn params(&self) -> &EnvParams {
        &self.params
    }

    pub fn step_count(&self) -> usize {
        self.step_count
    }

    pub fn episode_cap(&self) -> usize {
        self.episode_cap
    }

    /// Physical state: cart-pole `[x, x_dot, theta, theta_dot]`, mountain car
    /// `[position, velocity]`, pendulum `[theta, theta_dot]`.
    pub fn raw_state(&self) -> &[f64] {
        &self.state
    }

    pub fn set_raw_state(&mut self, state: &[f64]) -> Result<()> {
        if state.len() != self.state.len() {
            return Err(Error::shape("raw state dimension mismatch"));
        }
        self.state.copy_from_slice(state);
        self.step_count = 0;
        self.finished = false;
        Ok(())
    }

    /// Un-normalized observation (pendulum reports `[cos, sin, theta_dot]`).
    pub fn raw_observation(&self) -> Vec<f64> {
        match self.kind() {
            EnvKind::Pendulum => pendulum::observe([self.state[0], self.state[1]]).to_vec(),
            _ => self.state.clone(),
        }
    }

    pub fn observation(&self) -> Vec<f64> {
        normalize(self.kind(), &self.raw_observation())
    }

    pub fn reset(&mut self, rng: &mut RngHandle) -> Vec<f64> {
        match self.kind() {
            EnvKind::Cartpole => {
                for v in self.state.iter_mut() {
                    *v = rng.uniform_range(-0.05, 0.05);
                }
            }
            EnvKind::MountainCar | EnvKind::MountainCarContinuous => {
                self.state[0] = rng.uniform_range(-0.6, -0.4);
                self.state[1] = 0.0;
            }
            EnvKind::Pendulum => {
                self.state[0] = rng.uniform_range(-std::f64::consts::PI, std::f64::consts::PI);
                self.state[1] = rng.uniform_range(-1.0, 1.0);
            }
        }
        self.step_count = 0;
        self.finished = false;
        self.observation()
    }

    pub fn step(&mut self, action: &Action) -> Result<StepOutcome> {
        if self.finished {
            return Err(Error::Contract("step called on a finished episode; reset first".into()));
        }
        let (reward, done) = match (&self.params, action) {
            (EnvParams::Cartpole(p), Action::Discrete(a)) => {
                if *a >= 2 {
                    return Err(Error::Argument(format!("cart-pole action {a} out of range")));
                }
                let next = cartpole::step(p, self.state_array4(), *a == 1);
                self.state.copy_from_slice(&next);
                (1.0, cartpole::failed(&next))
            }
            (EnvParams::MountainCar(p), Action::Discrete(a)) => {
                if *a >= 3 {
                    return Err(Error::Argument(format!("mountain-car action {a} out of range")));
                }
                let next = mountain_car::step(p, self.state_array2(), *a as f64 - 1.0);
                self.state.copy_from_slice(&next);
                (-1.0, next[0] >= mountain_car::DISCRETE_GOAL)
            }
            (EnvParams::MountainCarContinuous(p), Action::Continuous(a)) => {
                let force = first_clipped(a)?;
                let next = mountain_car::step(p, self.state_array2(), force);
                self.state.copy_from_slice(&next);
                let goal = next[0] >= mountain_car::CONTINUOUS_GOAL && next[1] >= 0.0;
                (if goal { mountain_car::GOAL_BONUS - 1.0 } else { -1.0 }, goal)
            }
            (EnvParams::Pendulum(p), Action::Continuous(a)) => {
                let u = first_clipped(a)? * p.max_torque;
                let state = self.state_array2();
                let reward = -pendulum::cost(state, u);
                let next = pendulum::step(p, state, u);
                self.state.copy_from_slice(&next);
                (reward, false)
            }
            (params, action) => {
                return Err(Error::Argument(format!(
                    "action {action:?} does not fit environment {}",
                    params.kind()
                )))
            }
        };
        self.step_count += 1;
        let truncated = !done && self.step_count >= self.episode_cap;
        self.finished = done || truncated;
        Ok(StepOutcome {
            obs: self.observation(),
            reward,
            done,
            truncated,
        })
    }

    fn state_array4(&self) -> [f64; 4] {
        [self.state[0], self.state[1], self.state[2], self.state[3]]
    }

    fn state_array2(&self) -> [f64; 2] {
        [self.state[0], self.state[1]]
    }
}

fn first_clipped(a: &[f64]) -> Result<f64> {
    match a {
        [v] if v.is_finite() => Ok(v.clamp(-1.0, 1.0)),
        [_] => Err(Error::Numeric("non-finite continuous action".into())),
        _ => Err(Error::shape(format!("expected a 1-D action, got {}", a.len()))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn cartpole_reset_range_and_determinism() {
        let mut env = EnvInstance::new(EnvKind::Cartpole.default_params()).unwrap();
        for seed in 0..50 {
            env.reset(&mut RngHandle::new(seed));
            assert!(env.raw_state().iter().all(|v| (-0.05..=0.05).contains(v)));
        }
        let a = env.reset(&mut RngHandle::new(3));
        let b = env.reset(&mut RngHandle::new(3));
        assert_eq!(a, b);
    }

    #[test]
    fn mountain_car_reset_range() {
        let mut env = EnvInstance::new(EnvKind::MountainCar.default_params()).unwrap();
        for seed in 0..50 {
            env.reset(&mut RngHandle::new(seed));
            let s = env.raw_state();
            assert!((-0.6..=-0.4).contains(&s[0]));
            assert_eq!(s[1], 0.0);
        }
    }

    #[test]
    fn cartpole_step_matches_scripted_euler() {
        let p = CartPoleParams {
            cart_mass: 1.3,
            pole_length: 0.4,
            ..CartPoleParams::default()
        };
        let mut env = EnvInstance::new(EnvParams::Cartpole(p)).unwrap();
        env.set_raw_state(&[0.0; 4]).unwrap();
        env.step(&Action::Discrete(1)).unwrap();
        // At the zero state: sin=0, cos=1, temp = F/M,
        // theta_acc = -temp / (l (4/3 - m_p / M)), x_acc = temp - m_p l theta_acc / M.
        let total = 1.3 + 0.1;
        let temp = 10.0 / total;
        let theta_acc = -temp / (0.4 * (4.0 / 3.0 - 0.1 / total));
        let x_acc = temp - 0.1 * 0.4 * theta_acc / total;
        let expect = [0.0, 0.02 * x_acc, 0.0, 0.02 * theta_acc];
        for (g, e) in env.raw_state().iter().zip(&expect) {
            assert!((g - e).abs() < 1e-12, "{g} vs {e}");
        }
    }

    #[test]
    fn mountain_car_valley_bottom_zero_push() {
        let mut env = EnvInstance::new(EnvKind::MountainCar.default_params()).unwrap();
        let bottom = -std::f64::consts::PI / 6.0;
        env.set_raw_state(&[bottom, 0.0]).unwrap();
        env.step(&Action::Discrete(1)).unwrap();
        let gravity_term = -0.0025 * (3.0 * bottom).cos();
        assert!((env.raw_state()[1] - gravity_term).abs() < 1e-15);
        assert!(gravity_term.abs() < 1e-15);
    }

    #[test]
    fn cartpole_cap_truncates_at_500() {
        let mut env = EnvInstance::new(EnvKind::Cartpole.default_params()).unwrap();
        let mut total = 0.0;
        let mut last = None;
        for _ in 0..500 {
            // Pin the pole upright so only the cap can end the episode.
            let steps = env.step_count();
            env.set_raw_state(&[0.0; 4]).unwrap();
            env.step_count = steps;
            let out = env.step(&Action::Discrete(0)).unwrap();
            total += out.reward;
            last = Some(out);
        }
        let last = last.unwrap();
        assert!(last.truncated && !last.done);
        assert_eq!(total, 500.0);
        assert!(matches!(env.step(&Action::Discrete(0)), Err(Error::Contract(_))));
    }

    #[test]
    fn episode_return_equals_steps_survived() {
        let mut env = EnvInstance::new(EnvKind::Cartpole.default_params()).unwrap();
        env.reset(&mut RngHandle::new(1));
        let mut total = 0.0;
        loop {
            let out = env.step(&Action::Discrete(1)).unwrap();
            total += out.reward;
            if out.done || out.truncated {
                break;
            }
        }
        assert_eq!(total, env.step_count() as f64);
    }

    #[test]
    fn normalization_endpoints_and_clipping() {
        let (lo, hi) = EnvKind::Cartpole.obs_bounds();
        assert_eq!(normalize(EnvKind::Cartpole, lo), vec![0.0; 4]);
        assert_eq!(normalize(EnvKind::Cartpole, hi), vec![1.0; 4]);
        let n = normalize(EnvKind::MountainCar, &[5.0, -1.0]);
        assert_eq!(n, vec![1.0, 0.0]);
    }

    #[test]
    fn wrong_action_kind_is_rejected() {
        let mut env = EnvInstance::new(EnvKind::Pendulum.default_params()).unwrap();
        env.reset(&mut RngHandle::new(0));
        assert!(env.step(&Action::Discrete(0)).is_err());
        let out = env.step(&Action::Continuous(vec![5.0])).unwrap();
        assert!(out.obs.iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn param_accessors() {
        let p = EnvKind::Cartpole.default_params();
        let q = p.with("cart_mass", 2.0).unwrap();
        assert_eq!(q.get("cart_mass").unwrap(), 2.0);
        assert!(p.with("power", 1.0).is_err());
        assert!(p.with("cart_mass", -1.0).is_err());
        assert_eq!("pendulum".parse::<EnvKind>().unwrap(), EnvKind::Pendulum);
    }

    fn bang_bang_return(power: f64) -> f64 {
        let params = EnvParams::MountainCar(MountainCarParams {
            power,
            gravity_scale: 1.0,
        });
        let mut env = EnvInstance::new(params).unwrap();
        env.set_raw_state(&[-0.5, 0.0]).unwrap();
        let mut total = 0.0;
        loop {
            let a = if env.raw_state()[1] >= 0.0 { 2 } else { 0 };
            let out = env.step(&Action::Discrete(a)).unwrap();
            total += out.reward;
            if out.done || out.truncated {
                return total;
            }
        }
    }

    #[test]
    fn more_power_never_hurts_bang_bang() {
        let grid: Vec<f64> = (0..9).map(|i| 0.0005 + i as f64 * 0.000125).collect();
        let returns: Vec<f64> = grid.iter().map(|&p| bang_bang_return(p)).collect();
        // the number of swings is discrete, so neighbours may dip slightly
        for w in returns.windows(2) {
            assert!(w[1] >= w[0] - 20.0, "{returns:?}");
        }
        assert!(returns[8] > returns[0] + 50.0, "{returns:?}");
    }

    proptest! {
        #[test]
        fn round_trip_in_bounds(u in prop::collection::vec(0.0f64..1.0, 4)) {
            let (lo, hi) = EnvKind::Cartpole.obs_bounds();
            let raw: Vec<f64> = u.iter().enumerate().map(|(i, t)| lo[i] + t * (hi[i] - lo[i])).collect();
            let back = denormalize(EnvKind::Cartpole, &normalize(EnvKind::Cartpole, &raw));
            for (a, b) in raw.iter().zip(&back) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }

        #[test]
        fn identical_inputs_identical_trajectories(
            seed in any::<u64>(),
            actions in prop::collection::vec(0usize..3, 1..200),
            kind_ix in 0usize..4,
        ) {
            let kind = EnvKind::ALL[kind_ix];
            let run = || {
                let mut env = EnvInstance::new(kind.default_params()).unwrap();
                let mut trace = vec![env.reset(&mut RngHandle::new(seed))];
                for &a in &actions {
                    let action = match kind.action_space() {
                        ActionSpace::Discrete(n) => Action::Discrete(a % n),
                        ActionSpace::Continuous(_) => Action::Continuous(vec![a as f64 - 1.0]),
                    };
                    let out = env.step(&action).unwrap();
                    let stop = out.done || out.truncated;
                    trace.push(out.obs);
                    if stop { break; }
                }
                trace
            };
            let a = run();
            let b = run();
            prop_assert_eq!(
                a.iter().flatten().map(|v| v.to_bits()).collect::<Vec<_>>(),
                b.iter().flatten().map(|v| v.to_bits()).collect::<Vec<_>>()
            );
            prop_assert!(a.iter().flatten().all(|v| (0.0..=1.0).contains(v)));
        }
    }
}
