//! Torque-limited pendulum with `(cos θ, sin θ, ω)` observations.
//!
//! θ = 0 is upright. Update rule, with g = 10, m = 1, l = 1:
//! `ω' = clip(ω + (3g/(2l)·sin θ + 3/(m l²)·u)·dt, ±8)`, `θ' = θ + ω'·dt`.

use super::{wrap_angle, EnvSpec};
use crate::dynamics::{ControlBox, DynamicsModel};

pub const NAME: &str = "pendulum";
pub const CONTROL_WEIGHT: f64 = 0.001;
pub const HORIZON: usize = 100;

#[derive(Debug, Clone)]
pub struct Pendulum {
    pub gravity: f64,
    pub mass: f64,
    pub length: f64,
    pub dt: f64,
    pub max_speed: f64,
    bounds: ControlBox,
}

impl Default for Pendulum {
    fn default() -> Self {
        Self {
            gravity: 10.0,
            mass: 1.0,
            length: 1.0,
            dt: 0.05,
            max_speed: 8.0,
            bounds: ControlBox::symmetric(2.0, 1),
        }
    }
}

impl DynamicsModel for Pendulum {
    fn name(&self) -> &str {
        NAME
    }
    fn state_dim(&self) -> usize {
        3
    }
    fn control_dim(&self) -> usize {
        1
    }
    fn dt(&self) -> f64 {
        self.dt
    }
    fn control_box(&self) -> &ControlBox {
        &self.bounds
    }

    fn step_into(&self, x: &[f64], v: &[f64], out: &mut [f64]) {
        let theta = x[1].atan2(x[0]);
        let omega = x[2];
        let (g, m, l, dt) = (self.gravity, self.mass, self.length, self.dt);
        let accel = 3.0 * g / (2.0 * l) * theta.sin() + 3.0 / (m * l * l) * v[0];
        let omega_next = (omega + accel * dt).clamp(-self.max_speed, self.max_speed);
        let theta_next = theta + omega_next * dt;
        let (s, c) = theta_next.sin_cos();
        out[0] = c;
        out[1] = s;
        out[2] = omega_next;
    }
}

pub fn spec(model: &Pendulum) -> EnvSpec {
    EnvSpec {
        name: NAME.into(),
        state_dim: 3,
        control_dim: 1,
        dt: model.dt,
        horizon: HORIZON,
        control_box: model.bounds.clone(),
        init_lo: vec![-std::f64::consts::PI, -1.0],
        init_hi: vec![std::f64::consts::PI, 1.0],
    }
}

/// `(θ, ω) -> (cos θ, sin θ, ω)`
pub fn encode(phys: &[f64]) -> Vec<f64> {
    let (s, c) = phys[0].sin_cos();
    vec![c, s, phys[1]]
}

pub fn ground_truth_state_cost(x: &[f64]) -> f64 {
    let theta = wrap_angle(x[1].atan2(x[0]));
    theta * theta + 0.1 * x[2] * x[2]
}
