use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PendulumParams {
    pub mass: f64,
    pub length: f64,
    pub max_torque: f64,
    pub dt: f64,
}

impl Default for PendulumParams {
    fn default() -> Self {
        Self {
            mass: 1.0,
            length: 1.0,
            max_torque: 2.0,
            dt: 0.05,
        }
    }
}

pub const GRAVITY: f64 = 10.0;
pub const MAX_SPEED: f64 = 8.0;
pub const EPISODE_CAP: usize = 200;

pub const OBS_LOW: [f64; 3] = [-1.0, -1.0, -MAX_SPEED];
pub const OBS_HIGH: [f64; 3] = [1.0, 1.0, MAX_SPEED];

pub fn angle_normalize(theta: f64) -> f64 {
    use std::f64::consts::PI;
    (theta + PI).rem_euclid(2.0 * PI) - PI
}

/// Quadratic swing-up cost for state `[theta, theta_dot]` and torque `u`.
pub fn cost(state: [f64; 2], u: f64) -> f64 {
    let th = angle_normalize(state[0]);
    th * th + 0.1 * state[1] * state[1] + 0.001 * u * u
}

/// Semi-implicit Euler step; `u` is a torque already clipped to the bound.
pub fn step(p: &PendulumParams, state: [f64; 2], u: f64) -> [f64; 2] {
    let [th, thdot] = state;
    let newthdot = (thdot
        + (3.0 * GRAVITY / (2.0 * p.length) * th.sin() + 3.0 / (p.mass * p.length * p.length) * u) * p.dt)
        .clamp(-MAX_SPEED, MAX_SPEED);
    [th + newthdot * p.dt, newthdot]
}

pub fn observe(state: [f64; 2]) -> [f64; 3] {
    [state[0].cos(), state[0].sin(), state[1]]
}
