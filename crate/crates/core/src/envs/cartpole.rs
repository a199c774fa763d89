use serde::{Deserialize, Serialize};

/// Classic cart-pole constants. `pole_length` is the half-length of the
/// pole, as in the standard formulation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CartPoleParams {
    pub cart_mass: f64,
    pub pole_mass: f64,
    pub pole_length: f64,
    pub gravity: f64,
    pub force_mag: f64,
    pub dt: f64,
}

impl Default for CartPoleParams {
    fn default() -> Self {
        Self {
            cart_mass: 1.0,
            pole_mass: 0.1,
            pole_length: 0.5,
            gravity: 9.8,
            force_mag: 10.0,
            dt: 0.02,
        }
    }
}

pub const X_LIMIT: f64 = 2.4;
pub const THETA_LIMIT: f64 = 12.0 * 2.0 * std::f64::consts::PI / 360.0;
pub const VELOCITY_BOUND: f64 = 1.0;
pub const ANGULAR_VELOCITY_BOUND: f64 = 1.0;

pub const OBS_LOW: [f64; 4] = [-X_LIMIT, -VELOCITY_BOUND, -THETA_LIMIT, -ANGULAR_VELOCITY_BOUND];
pub const OBS_HIGH: [f64; 4] = [X_LIMIT, VELOCITY_BOUND, THETA_LIMIT, ANGULAR_VELOCITY_BOUND];

/// One explicit Euler step of state `[x, x_dot, theta, theta_dot]`.
/// `push_right` selects `+force_mag`, otherwise `-force_mag`.
pub fn step(p: &CartPoleParams, state: [f64; 4], push_right: bool) -> [f64; 4] {
    let [x, x_dot, theta, theta_dot] = state;
    let force = if push_right { p.force_mag } else { -p.force_mag };
    let (sin, cos) = theta.sin_cos();
    let total_mass = p.cart_mass + p.pole_mass;
    let polemass_length = p.pole_mass * p.pole_length;
    let temp = (force + polemass_length * theta_dot * theta_dot * sin) / total_mass;
    let theta_acc = (p.gravity * sin - cos * temp)
        / (p.pole_length * (4.0 / 3.0 - p.pole_mass * cos * cos / total_mass));
    let x_acc = temp - polemass_length * theta_acc * cos / total_mass;
    [
        x + p.dt * x_dot,
        x_dot + p.dt * x_acc,
        theta + p.dt * theta_dot,
        theta_dot + p.dt * theta_acc,
    ]
}

pub fn failed(state: &[f64; 4]) -> bool {
    state[0].abs() > X_LIMIT || state[2].abs() > THETA_LIMIT
}
