//! Unit-mass point on a line: `v' = v + u·dt`, `p' = p + v'·dt`.
//!
//! Linear, so the quadratic goal cost has an exact finite-horizon LQR
//! optimum (see [`crate::lqr`]); the 2-D state also makes state-marginal
//! histograms cheap to estimate.

use super::EnvSpec;
use crate::dynamics::{ControlBox, DynamicsModel};

pub const NAME: &str = "double-integrator";
pub const HORIZON: usize = 100;
pub const DT: f64 = 0.05;
/// Ground-truth state weights `diag(Q)`.
pub const STATE_WEIGHTS: [f64; 2] = [1.0, 0.1];
pub const CONTROL_WEIGHT: f64 = 0.1;
pub const CONTROL_LIMIT: f64 = 5.0;

#[derive(Debug, Clone)]
pub struct DoubleIntegrator {
    pub dt: f64,
    bounds: ControlBox,
}

impl Default for DoubleIntegrator {
    fn default() -> Self {
        Self {
            dt: DT,
            bounds: ControlBox::symmetric(CONTROL_LIMIT, 1),
        }
    }
}

impl DoubleIntegrator {
    /// `(A, B)` of `x' = A x + B u`, row-major.
    pub fn linear_form(&self) -> ([f64; 4], [f64; 2]) {
        let dt = self.dt;
        ([1.0, dt, 0.0, 1.0], [dt * dt, dt])
    }
}

impl DynamicsModel for DoubleIntegrator {
    fn name(&self) -> &str {
        NAME
    }
    fn state_dim(&self) -> usize {
        2
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
        let vel = x[1] + v[0] * self.dt;
        out[0] = x[0] + vel * self.dt;
        out[1] = vel;
    }
}

pub fn spec(model: &DoubleIntegrator) -> EnvSpec {
    EnvSpec {
        name: NAME.into(),
        state_dim: 2,
        control_dim: 1,
        dt: model.dt,
        horizon: HORIZON,
        control_box: model.bounds.clone(),
        init_lo: vec![-1.0, -0.5],
        init_hi: vec![1.0, 0.5],
    }
}

pub fn ground_truth_state_cost(x: &[f64]) -> f64 {
    STATE_WEIGHTS[0] * x[0] * x[0] + STATE_WEIGHTS[1] * x[1] * x[1]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{step, ControlVec, StateVec};
    use crate::envs::make_double_integrator;

    #[test]
    fn origin_is_fixed_and_free() {
        let env = make_double_integrator();
        let y = step(env.model.as_ref(), &StateVec(vec![0.0, 0.0]), &ControlVec(vec![0.0])).unwrap();
        assert_eq!(y.0, vec![0.0, 0.0]);
        assert_eq!(env.cost.step_cost(&y.0, &[0.0]), 0.0);
    }

    #[test]
    fn linear_form_matches_step() {
        let m = DoubleIntegrator::default();
        let (a, b) = m.linear_form();
        let x = [0.3, -0.7];
        let u = 1.3;
        let mut out = [0.0; 2];
        m.step_into(&x, &[u], &mut out);
        let lin = [
            a[0] * x[0] + a[1] * x[1] + b[0] * u,
            a[2] * x[0] + a[3] * x[1] + b[1] * u,
        ];
        assert!((out[0] - lin[0]).abs() < 1e-15 && (out[1] - lin[1]).abs() < 1e-15);
    }

    #[test]
    fn configuration_constants() {
        let env = make_double_integrator();
        assert_eq!(env.spec.horizon, 100);
        assert_eq!(env.spec.dt, 0.05);
    }
}
