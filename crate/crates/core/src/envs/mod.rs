//! Benchmark systems with ground-truth costs.
//!
//! Every environment is integrated with semi-implicit Euler at a fixed `dt`
//! and runs for a fixed task horizon `T`.

pub mod cartpole;
pub mod double_integrator;
pub mod pendulum;

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::cost::StateCost;
use crate::dynamics::{ControlBox, DynamicsModel, StateVec, StreamRng};
use crate::error::{Error, Result};

pub const INTEGRATOR: &str = "semi-implicit-euler";

/// Static description of a task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvSpec {
    pub name: String,
    pub state_dim: usize,
    pub control_dim: usize,
    pub dt: f64,
    pub horizon: usize,
    pub control_box: ControlBox,
    /// Uniform initial distribution over physical coordinates
    /// (angles unencoded); see [`Environment::sample_initial`].
    pub init_lo: Vec<f64>,
    pub init_hi: Vec<f64>,
}

impl EnvSpec {
    pub fn validate(&self) -> Result<()> {
        if self.horizon < 1 {
            return Err(Error::usage("task horizon T must be >= 1"));
        }
        if self.control_box.dim() != self.control_dim {
            return Err(Error::usage("control box dimension differs from m"));
        }
        if self.init_lo.len() != self.init_hi.len() || self.init_lo.iter().zip(&self.init_hi).any(|(l, h)| l > h) {
            return Err(Error::usage("initial distribution bounds are malformed"));
        }
        Ok(())
    }
}

/// Ground-truth per-step cost `g(x) + r·|v|²`; returns are its negation.
#[derive(Clone)]
pub struct GroundTruthCost {
    state_cost: fn(&[f64]) -> f64,
    pub control_weight: f64,
    dim: usize,
}

impl GroundTruthCost {
    pub fn new(state_cost: fn(&[f64]) -> f64, control_weight: f64, dim: usize) -> Self {
        Self {
            state_cost,
            control_weight,
            dim,
        }
    }

    pub fn state(&self, x: &[f64]) -> f64 {
        (self.state_cost)(x)
    }

    pub fn control(&self, v: &[f64]) -> f64 {
        self.control_weight * v.iter().map(|a| a * a).sum::<f64>()
    }

    pub fn step_cost(&self, x: &[f64], v: &[f64]) -> f64 {
        self.state(x) + self.control(v)
    }
}

impl std::fmt::Debug for GroundTruthCost {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GroundTruthCost")
            .field("control_weight", &self.control_weight)
            .finish_non_exhaustive()
    }
}

impl StateCost for GroundTruthCost {
    fn input_dim(&self) -> usize {
        self.dim
    }

    fn state_cost(&self, x: &[f64]) -> f64 {
        self.state(x)
    }
}

/// A model, its task description and its ground-truth cost.
#[derive(Clone)]
pub struct Environment {
    pub model: Arc<dyn DynamicsModel>,
    pub spec: EnvSpec,
    pub cost: GroundTruthCost,
    encode: fn(&[f64]) -> Vec<f64>,
}

impl std::fmt::Debug for Environment {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Environment")
            .field("spec", &self.spec)
            .field("cost", &self.cost)
            .finish_non_exhaustive()
    }
}

impl Environment {
    pub fn name(&self) -> &str {
        &self.spec.name
    }

    /// Draw `x0 ~ μ` and encode it as an observation state.
    pub fn sample_initial(&self, rng: &mut StreamRng) -> StateVec {
        let phys: Vec<f64> = self
            .spec
            .init_lo
            .iter()
            .zip(&self.spec.init_hi)
            .map(|(lo, hi)| if lo == hi { *lo } else { rng.gen_range(*lo..*hi) })
            .collect();
        StateVec((self.encode)(&phys))
    }

    /// Encode physical coordinates (e.g. raw angles) as a state.
    pub fn encode(&self, physical: &[f64]) -> StateVec {
        StateVec((self.encode)(physical))
    }

    /// Same task with a different horizon `T`.
    pub fn with_horizon(mut self, horizon: usize) -> Self {
        self.spec.horizon = horizon;
        self
    }
}

pub const ENV_NAMES: [&str; 3] = [pendulum::NAME, double_integrator::NAME, cartpole::NAME];

pub fn make_env(name: &str) -> Result<Environment> {
    match name {
        pendulum::NAME => Ok(make_pendulum()),
        double_integrator::NAME => Ok(make_double_integrator()),
        cartpole::NAME => Ok(make_cartpole_swingup()),
        other => Err(Error::usage(format!(
            "unknown environment `{other}` (expected one of {})",
            ENV_NAMES.join(", ")
        ))),
    }
}

pub fn make_pendulum() -> Environment {
    let model = pendulum::Pendulum::default();
    Environment {
        spec: pendulum::spec(&model),
        model: Arc::new(model),
        cost: GroundTruthCost::new(pendulum::ground_truth_state_cost, pendulum::CONTROL_WEIGHT, 3),
        encode: pendulum::encode,
    }
}

pub fn make_double_integrator() -> Environment {
    let model = double_integrator::DoubleIntegrator::default();
    Environment {
        spec: double_integrator::spec(&model),
        model: Arc::new(model),
        cost: GroundTruthCost::new(
            double_integrator::ground_truth_state_cost,
            double_integrator::CONTROL_WEIGHT,
            2,
        ),
        encode: |x| x.to_vec(),
    }
}

pub fn make_cartpole_swingup() -> Environment {
    let model = cartpole::CartPole::default();
    Environment {
        spec: cartpole::spec(&model),
        model: Arc::new(model),
        cost: GroundTruthCost::new(cartpole::ground_truth_state_cost, cartpole::CONTROL_WEIGHT, 5),
        encode: cartpole::encode,
    }
}

/// Wrap an angle into `(-π, π]`.
pub(crate) fn wrap_angle(a: f64) -> f64 {
    let two_pi = std::f64::consts::TAU;
    let mut r = (a + std::f64::consts::PI).rem_euclid(two_pi) - std::f64::consts::PI;
    if r <= -std::f64::consts::PI {
        r += two_pi;
    }
    r
}
