//! Cart-pole swing-up. State `(x, cos θ, sin θ, ẋ, θ̇)` with θ = 0 upright.
//!
//! Pole is a uniform rod of half-length `l` (inertia `m l²/3` about its
//! centre); no friction, no track limits.

use super::{wrap_angle, EnvSpec};
use crate::dynamics::{ControlBox, DynamicsModel};

pub const NAME: &str = "cartpole-swingup";
pub const HORIZON: usize = 100;
pub const CONTROL_WEIGHT: f64 = 1e-3;

#[derive(Debug, Clone)]
pub struct CartPole {
    pub gravity: f64,
    pub cart_mass: f64,
    pub pole_mass: f64,
    pub half_length: f64,
    pub dt: f64,
    bounds: ControlBox,
}

impl Default for CartPole {
    fn default() -> Self {
        Self {
            gravity: 9.8,
            cart_mass: 1.0,
            pole_mass: 0.1,
            half_length: 0.5,
            dt: 0.05,
            bounds: ControlBox::symmetric(10.0, 1),
        }
    }
}

impl CartPole {
    /// `(ẍ, θ̈)` at the given configuration.
    pub fn accelerations(&self, theta: f64, theta_dot: f64, force: f64) -> (f64, f64) {
        let (s, c) = theta.sin_cos();
        let total = self.cart_mass + self.pole_mass;
        let pml = self.pole_mass * self.half_length;
        let temp = (force + pml * theta_dot * theta_dot * s) / total;
        let theta_acc =
            (self.gravity * s - c * temp) / (self.half_length * (4.0 / 3.0 - self.pole_mass * c * c / total));
        let x_acc = temp - pml * theta_acc * c / total;
        (x_acc, theta_acc)
    }

    /// Total mechanical energy at physical coordinates `(x, θ, ẋ, θ̇)`.
    pub fn energy(&self, x_dot: f64, theta: f64, theta_dot: f64) -> f64 {
        let (s, c) = theta.sin_cos();
        let l = self.half_length;
        let m = self.pole_mass;
        let com_vx = x_dot + l * theta_dot * c;
        let com_vy = -l * theta_dot * s;
        0.5 * self.cart_mass * x_dot * x_dot
            + 0.5 * m * (com_vx * com_vx + com_vy * com_vy)
            + 0.5 * (m * l * l / 3.0) * theta_dot * theta_dot
            + m * self.gravity * l * c
    }
}

impl DynamicsModel for CartPole {
    fn name(&self) -> &str {
        NAME
    }
    fn state_dim(&self) -> usize {
        5
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
        let theta = x[2].atan2(x[1]);
        let (x_acc, theta_acc) = self.accelerations(theta, x[4], v[0]);
        let x_dot = x[3] + self.dt * x_acc;
        let theta_dot = x[4] + self.dt * theta_acc;
        let theta_next = theta + self.dt * theta_dot;
        let (s, c) = theta_next.sin_cos();
        out[0] = x[0] + self.dt * x_dot;
        out[1] = c;
        out[2] = s;
        out[3] = x_dot;
        out[4] = theta_dot;
    }
}

pub fn spec(model: &CartPole) -> EnvSpec {
    let pi = std::f64::consts::PI;
    EnvSpec {
        name: NAME.into(),
        state_dim: 5,
        control_dim: 1,
        dt: model.dt,
        horizon: HORIZON,
        control_box: model.bounds.clone(),
        init_lo: vec![-0.2, pi - 0.2, -0.1, -0.1],
        init_hi: vec![0.2, pi + 0.2, 0.1, 0.1],
    }
}

/// `(x, θ, ẋ, θ̇) -> (x, cos θ, sin θ, ẋ, θ̇)`
pub fn encode(phys: &[f64]) -> Vec<f64> {
    let (s, c) = phys[1].sin_cos();
    vec![phys[0], c, s, phys[2], phys[3]]
}

pub fn ground_truth_state_cost(x: &[f64]) -> f64 {
    let theta = wrap_angle(x[2].atan2(x[1]));
    theta * theta + 0.1 * x[0] * x[0] + 0.01 * (x[3] * x[3] + x[4] * x[4])
}
