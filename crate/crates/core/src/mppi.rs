//! Sampling-based receding-horizon control (MPPI) under an arbitrary state
//! cost.
//!
//! One control step: sample M proposals around the nominal sequence, roll
//! them out, weight them by `exp(-(S - S_min)/λ - Σ_k u_kᵀ Σ⁻¹ v_k)`,
//! average into a new nominal, smooth, execute the first control and shift.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cost::{compensated_sum, state_cost_s, StateCost};
use crate::dynamics::{
    rollout, sample_control_sequence, ControlBox, ControlSequence, ControlVec, DynamicsModel, NoiseFactor, NoiseSpec,
    StateVec, StreamRng, Trajectory,
};
use crate::envs::Environment;
use crate::error::{Error, Result};
use crate::rng::{tag, RngStream};
use crate::smoothing::Smoothing;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllerConfig {
    /// Receding horizon K.
    pub horizon: usize,
    /// Proposal count M.
    pub samples: usize,
    /// Temperature λ.
    pub lambda: f64,
    /// Learner-side noise covariance (normally `β·I`).
    pub noise: NoiseSpec,
    /// Probability that a proposal is drawn uniformly over the control box.
    pub explore_prob: f64,
    pub smoothing: Smoothing,
    /// Sub-rollouts per proposal under stochastic dynamics (M^s).
    pub noise_samples: usize,
}

impl ControllerConfig {
    /// Pendulum row of the hyperparameter table: K = 20, β = 0.8, λ = 0.1.
    pub fn pendulum() -> Self {
        Self {
            horizon: 20,
            samples: 64,
            lambda: 0.1,
            noise: NoiseSpec::BetaIdentity { beta: 0.8 },
            explore_prob: 0.5,
            smoothing: Smoothing::default(),
            noise_samples: 1,
        }
    }

    /// Control prior `λ/(2β)` equals the ground-truth control weight 0.1.
    pub fn double_integrator() -> Self {
        Self {
            horizon: 30,
            samples: 64,
            lambda: 0.2,
            noise: NoiseSpec::BetaIdentity { beta: 1.0 },
            explore_prob: 0.0,
            smoothing: Smoothing::default(),
            noise_samples: 1,
        }
    }

    pub fn cartpole() -> Self {
        Self {
            horizon: 20,
            samples: 256,
            lambda: 0.1,
            noise: NoiseSpec::BetaIdentity { beta: 9.0 },
            explore_prob: 0.5,
            smoothing: Smoothing::default(),
            noise_samples: 1,
        }
    }

    pub fn for_env(name: &str) -> Result<Self> {
        use crate::envs::{cartpole, double_integrator, pendulum};
        match name {
            pendulum::NAME => Ok(Self::pendulum()),
            double_integrator::NAME => Ok(Self::double_integrator()),
            cartpole::NAME => Ok(Self::cartpole()),
            other => Err(Error::usage(format!("no controller defaults for `{other}`"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon < 1 {
            return Err(Error::usage("horizon K must be >= 1"));
        }
        if self.samples < 2 {
            return Err(Error::usage("need at least two proposals (M >= 2)"));
        }
        if !(self.lambda > 0.0) || !self.lambda.is_finite() {
            return Err(Error::usage(format!("lambda must be positive, got {}", self.lambda)));
        }
        if !(0.0..=1.0).contains(&self.explore_prob) {
            return Err(Error::usage("explore_prob must lie in [0, 1]"));
        }
        if self.noise_samples < 1 {
            return Err(Error::usage("noise_samples must be >= 1"));
        }
        if let NoiseSpec::BetaIdentity { beta } = self.noise {
            NoiseSpec::beta(beta)?;
        }
        self.smoothing.validate(self.horizon)
    }

    /// Smoothing actually applied: disabled when the window exceeds K.
    pub fn effective_smoothing(&self) -> Smoothing {
        match self.smoothing {
            Smoothing::SavitzkyGolay { window, .. } if window > self.horizon => Smoothing::None,
            s => s,
        }
    }

    /// Environment steps consumed by one control step.
    pub fn steps_per_control(&self, stochastic: bool) -> u64 {
        let per = if stochastic { self.noise_samples } else { 1 };
        (self.samples * self.horizon * per) as u64
    }
}

/// Proposals of one control step, their rollouts, costs and weights.
#[derive(Debug, Clone)]
pub struct RolloutBatch {
    pub sequences: Vec<ControlSequence>,
    /// `trajectories[j]` holds the M^s rollouts of proposal j (one when
    /// the dynamics are deterministic).
    pub trajectories: Vec<Vec<Trajectory>>,
    /// `S(V_j)`, or its sample mean `S̃(V_j)` under stochastic dynamics.
    pub state_costs: Vec<f64>,
    /// `Σ_k u_kᵀ Σ_eff⁻¹ v_k^(j)`.
    pub control_terms: Vec<f64>,
    /// Normalised importance weights; empty until [`compute_weights`].
    pub weights: Vec<f64>,
    pub s_min: f64,
    pub env_steps: u64,
}

impl RolloutBatch {
    pub fn len(&self) -> usize {
        self.sequences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequences.is_empty()
    }

    /// Shannon entropy of the weights, in nats.
    pub fn weight_entropy(&self) -> f64 {
        -self
            .weights
            .iter()
            .filter(|w| **w > 0.0)
            .map(|w| w * w.ln())
            .sum::<f64>()
    }
}

struct Proposal {
    seq: ControlSequence,
    trajs: Vec<Trajectory>,
    cost: f64,
    control_term: f64,
}

/// Sample and roll out M proposals from `x_t`.
///
/// Proposal `j` draws its controls from `stream.child(&[ROLLOUT, j])` and
/// sub-rollout `h` its process noise from `stream.child(&[PROCESS_NOISE, j, h])`,
/// so the batch is independent of evaluation order.
pub fn evaluate_rollouts<C: StateCost + ?Sized>(
    model: &dyn DynamicsModel,
    x_t: &[f64],
    nominal: &ControlSequence,
    cost: &C,
    cfg: &ControllerConfig,
    stream: RngStream,
) -> Result<RolloutBatch> {
    if nominal.horizon() != cfg.horizon {
        return Err(Error::usage(format!(
            "nominal sequence has length {}, horizon is {}",
            nominal.horizon(),
            cfg.horizon
        )));
    }
    let m = model.control_dim();
    let factor = cfg.noise.factor(m)?;
    let bounds = model.control_box();
    let stochastic = model.is_stochastic();
    let ms = if stochastic { cfg.noise_samples } else { 1 };

    let proposals: Vec<Proposal> = (0..cfg.samples)
        .into_par_iter()
        .map(|j| {
            let mut rng = stream.child(&[tag::ROLLOUT, j as u64]).rng();
            let seq = sample_control_sequence(nominal, &factor, cfg.explore_prob, bounds, &mut rng)?;
            let mut trajs = Vec::with_capacity(ms);
            let mut costs = Vec::with_capacity(ms);
            for h in 0..ms {
                let tau = if stochastic {
                    let mut noise_rng = stream.child(&[tag::PROCESS_NOISE, j as u64, h as u64]).rng();
                    rollout(model, x_t, &seq, Some(&mut noise_rng))
                } else {
                    rollout(model, x_t, &seq, None)
                }
                .map_err(|e| Error::numeric(j, format!("rollout {j}: {e}")))?;
                costs.push(state_cost_s(cost, &tau).map_err(|e| Error::numeric(j, format!("rollout {j}: {e}")))?);
                trajs.push(tau);
            }
            let cost_value = if ms == 1 {
                costs[0]
            } else {
                compensated_sum(costs) / ms as f64
            };
            let mut terms = Vec::with_capacity(cfg.horizon);
            for (u, v) in nominal.iter().zip(seq.iter()) {
                terms.push(factor.inv_quad(u, v)?);
            }
            Ok(Proposal {
                seq,
                trajs,
                cost: cost_value,
                control_term: compensated_sum(terms),
            })
        })
        .collect::<Result<_>>()?;

    let mut batch = RolloutBatch {
        sequences: Vec::with_capacity(cfg.samples),
        trajectories: Vec::with_capacity(cfg.samples),
        state_costs: Vec::with_capacity(cfg.samples),
        control_terms: Vec::with_capacity(cfg.samples),
        weights: Vec::new(),
        s_min: f64::NAN,
        env_steps: cfg.steps_per_control(stochastic),
    };
    for p in proposals {
        batch.sequences.push(p.seq);
        batch.trajectories.push(p.trajs);
        batch.state_costs.push(p.cost);
        batch.control_terms.push(p.control_term);
    }
    Ok(batch)
}

/// Normalised importance weights
/// `w_j ∝ exp(-(1/λ)·(S_j - S_min + λ·c_j))`, with `S_min = min_j S_j`.
///
/// The exponent is additionally shifted by its own minimum before
/// exponentiating; this changes nothing after normalisation but keeps the
/// largest unnormalised weight at exactly 1.
pub fn compute_weights(batch: &mut RolloutBatch, lambda: f64) -> Result<()> {
    if batch.state_costs.is_empty() || batch.state_costs.len() != batch.control_terms.len() {
        return Err(Error::usage("rollout batch has no costs to weight"));
    }
    if !(lambda > 0.0) {
        return Err(Error::usage("lambda must be positive"));
    }
    let s_min = batch.state_costs.iter().copied().fold(f64::INFINITY, f64::min);
    let exponents: Vec<f64> = batch
        .state_costs
        .iter()
        .zip(&batch.control_terms)
        .map(|(s, c)| (s - s_min) / lambda + c)
        .collect();
    if let Some(j) = exponents.iter().position(|a| !a.is_finite()) {
        return Err(Error::numeric(j, "non-finite weight exponent"));
    }
    let a_min = exponents.iter().copied().fold(f64::INFINITY, f64::min);
    let raw: Vec<f64> = exponents.iter().map(|a| (-(a - a_min)).exp()).collect();
    let total = compensated_sum(raw.iter().copied());
    if !(total > 0.0) {
        return Err(Error::numeric(0, "all importance weights underflowed"));
    }
    batch.weights = raw.into_iter().map(|r| r / total).collect();
    let check = compensated_sum(batch.weights.iter().copied());
    if (check - 1.0).abs() > 1e-12 {
        return Err(Error::numeric(0, format!("weights sum to {check}, not 1")));
    }
    batch.s_min = s_min;
    Ok(())
}

/// `U = Σ_j w_j V_j`, then smoothing along time and clamping.
pub fn update_nominal(batch: &RolloutBatch, cfg: &ControllerConfig, bounds: &ControlBox) -> Result<ControlSequence> {
    if batch.weights.len() != batch.sequences.len() || batch.is_empty() {
        return Err(Error::usage("weights have not been computed for this batch"));
    }
    let first = &batch.sequences[0];
    let mut out = ControlSequence::zeros(first.horizon(), first.dim());
    let len = out.as_flat().len();
    {
        let acc = out.as_flat_mut();
        for i in 0..len {
            acc[i] = compensated_sum(
                batch
                    .sequences
                    .iter()
                    .zip(&batch.weights)
                    .map(|(v, w)| w * v.as_flat()[i]),
            );
        }
    }
    cfg.effective_smoothing().apply(&mut out);
    for k in 0..out.horizon() {
        bounds.clamp_in_place(out.get_mut(k));
    }
    Ok(out)
}

/// Pop the first control and append a zero control at the end.
pub fn receding_step(nominal: &ControlSequence) -> (ControlVec, ControlSequence) {
    let m = nominal.dim();
    let first = ControlVec(nominal.get(0).to_vec());
    let mut data = nominal.as_flat()[m..].to_vec();
    data.extend(std::iter::repeat_n(0.0, m));
    (first, ControlSequence::from_flat(m, data).expect("dimension preserved"))
}

/// Result of executing one control on the real system.
#[derive(Debug, Clone, PartialEq)]
pub struct Executed {
    pub next: StateVec,
    /// The noisy, clamped control that was actually applied.
    pub applied: ControlVec,
}

/// Apply `v ~ N(u, Σ_true)` (clamped) to the system.
pub fn execute_control(
    model: &dyn DynamicsModel,
    x_t: &StateVec,
    u: &ControlVec,
    true_noise: &NoiseFactor,
    rng: &mut StreamRng,
) -> Result<Executed> {
    let mut v = vec![0.0; u.dim()];
    true_noise.sample_into(&u.0, rng, &mut v);
    model.control_box().clamp_in_place(&mut v);
    let applied = ControlVec(v);
    let next = if model.is_stochastic() {
        crate::dynamics::step_stochastic(model, x_t, &applied, rng)?
    } else {
        crate::dynamics::step(model, x_t, &applied)?
    };
    Ok(Executed { next, applied })
}

/// One full MPPI control step at `x_t`: returns the weighted batch and the
/// updated (smoothed, clamped) nominal sequence.
pub fn plan<C: StateCost + ?Sized>(
    model: &dyn DynamicsModel,
    x_t: &[f64],
    nominal: &ControlSequence,
    cost: &C,
    cfg: &ControllerConfig,
    stream: RngStream,
) -> Result<(RolloutBatch, ControlSequence)> {
    let mut batch = evaluate_rollouts(model, x_t, nominal, cost, cfg, stream)?;
    compute_weights(&mut batch, cfg.lambda)?;
    let updated = update_nominal(&batch, cfg, model.control_box())?;
    Ok((batch, updated))
}

/// Outcome of one closed-loop episode.
#[derive(Debug, Clone)]
pub struct EpisodeOutcome {
    /// Ground-truth return, `-Σ_t (g(x_t) + r·|v_t|²)`.
    pub ground_truth_return: f64,
    /// Visited states `x_0 … x_{T-1}`.
    pub states: Trajectory,
    pub env_steps: u64,
}

/// Run MPPI under `cost` for one episode of the environment's horizon,
/// executing with control noise `exec_noise` (a variance level times I).
///
/// `stream` identifies the episode; the initial state comes from
/// `stream.child(&[INIT_STATE])` unless `x0` is given.
pub fn run_episode<C: StateCost + ?Sized>(
    env: &Environment,
    cost: &C,
    cfg: &ControllerConfig,
    exec_noise: f64,
    stream: RngStream,
    x0: Option<StateVec>,
) -> Result<EpisodeOutcome> {
    cfg.validate()?;
    let model = env.model.as_ref();
    let m = model.control_dim();
    let true_noise = NoiseSpec::isotropic(exec_noise, m)?.factor(m)?;
    let mut x = match x0 {
        Some(x) => x,
        None => env.sample_initial(&mut stream.child(&[tag::INIT_STATE]).rng()),
    };
    let mut exec_rng = stream.child(&[tag::EXECUTION]).rng();
    let mut nominal = ControlSequence::zeros(cfg.horizon, m);
    let horizon = env.spec.horizon;
    let mut states = Trajectory::with_capacity(model.state_dim(), horizon);
    let mut costs = Vec::with_capacity(horizon);
    let mut env_steps = 0u64;
    for t in 0..horizon {
        let (batch, updated) = plan(
            model,
            &x.0,
            &nominal,
            cost,
            cfg,
            stream.child(&[tag::ROLLOUT, t as u64]),
        )?;
        env_steps += batch.env_steps + 1;
        let (u, shifted) = receding_step(&updated);
        let exec = execute_control(model, &x, &u, &true_noise, &mut exec_rng)?;
        costs.push(env.cost.step_cost(&x.0, &exec.applied.0));
        states.push(&x.0);
        x = exec.next;
        nominal = shifted;
    }
    Ok(EpisodeOutcome {
        ground_truth_return: -compensated_sum(costs),
        states,
        env_steps,
    })
}
