use serde::{Deserialize, Serialize};

/// Mountain-car constants. The effective gravity is
/// `BASE_GRAVITY * gravity_scale`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MountainCarParams {
    pub power: f64,
    pub gravity_scale: f64,
}

impl MountainCarParams {
    pub fn discrete_default() -> Self {
        Self {
            power: 0.001,
            gravity_scale: 1.0,
        }
    }

    pub fn continuous_default() -> Self {
        Self {
            power: 0.0015,
            gravity_scale: 1.0,
        }
    }
}

pub const BASE_GRAVITY: f64 = 0.0025;
pub const MIN_POSITION: f64 = -1.2;
pub const MAX_POSITION: f64 = 0.6;
pub const MAX_SPEED: f64 = 0.07;
pub const DISCRETE_GOAL: f64 = 0.5;
pub const CONTINUOUS_GOAL: f64 = 0.45;
pub const GOAL_BONUS: f64 = 100.0;

pub const OBS_LOW: [f64; 2] = [MIN_POSITION, -MAX_SPEED];
pub const OBS_HIGH: [f64; 2] = [MAX_POSITION, MAX_SPEED];

/// One step of the standard discrete map with a force in `[-1, 1]`
/// (already scaled to the action convention) multiplied by `power`.
pub fn step(p: &MountainCarParams, state: [f64; 2], force: f64) -> [f64; 2] {
    let [position, velocity] = state;
    let mut velocity =
        velocity + force * p.power - BASE_GRAVITY * p.gravity_scale * (3.0 * position).cos();
    velocity = velocity.clamp(-MAX_SPEED, MAX_SPEED);
    let mut position = (position + velocity).clamp(MIN_POSITION, MAX_POSITION);
    if position == MIN_POSITION && velocity < 0.0 {
        velocity = 0.0;
    }
    position = position.clamp(MIN_POSITION, MAX_POSITION);
    [position, velocity]
}
