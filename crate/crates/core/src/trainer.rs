//! The receding-horizon IRL loop: at every control step, compare demo
//! windows against the controller's weighted rollouts, take one gradient
//! step on the cost, then act.

use std::path::{Path, PathBuf};

use rand::seq::index::sample as sample_indices;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::cost::{accumulate_state_cost_grad, compensated_sum, state_cost_s, CostParams, LayerShape};
use crate::demos::{write_file, DemoSet};
use crate::dynamics::{ControlSequence, NoiseSpec, StreamRng, Trajectory};
use crate::envs::Environment;
use crate::error::{Error, Result};
use crate::eval::evaluate_policy;
use crate::mppi::{
    compute_weights, evaluate_rollouts, execute_control, receding_step, update_nominal, ControllerConfig, RolloutBatch,
};
use crate::optim::{Optimizer, OptimizerKind};
use crate::rng::{tag, RngStream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GradWeighting {
    /// `(1/M) Σ_j w_j ∂S_j` with normalised `w`.
    AsPrinted,
    /// `Σ_j w_j ∂S_j`.
    #[default]
    SelfNormalized,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub env: String,
    pub seed: u64,
    pub lr: f64,
    pub weight_decay: f64,
    /// Demo windows per gradient step (N).
    pub batch_size: usize,
    pub episodes: usize,
    pub hidden: Vec<usize>,
    pub optimizer: OptimizerKind,
    pub grad_weighting: GradWeighting,
    pub controller: ControllerConfig,
    /// Control-noise variance level of the training environment.
    pub env_noise: f64,
    /// Evaluate every this many episodes; 0 disables.
    pub eval_every: usize,
    pub eval_episodes: usize,
}

impl TrainConfig {
    /// Pendulum defaults: batch 50, lr 1e-4, decay 8e-5, MLP (32, 32).
    pub fn pendulum() -> Self {
        Self {
            env: crate::envs::pendulum::NAME.into(),
            seed: 0,
            lr: 1e-4,
            weight_decay: 8e-5,
            batch_size: 50,
            episodes: 15,
            hidden: vec![32, 32],
            optimizer: OptimizerKind::Adam,
            grad_weighting: GradWeighting::SelfNormalized,
            controller: ControllerConfig::pendulum(),
            env_noise: 0.0,
            eval_every: 0,
            eval_episodes: 10,
        }
    }

    pub fn for_env(name: &str) -> Result<Self> {
        let mut cfg = Self::pendulum();
        cfg.env = name.to_string();
        cfg.controller = ControllerConfig::for_env(name)?;
        if name != crate::envs::pendulum::NAME {
            cfg.hidden = vec![64, 64];
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return Err(Error::usage(format!("learning rate must be positive, got {}", self.lr)));
        }
        if !(self.weight_decay >= 0.0) || !self.weight_decay.is_finite() {
            return Err(Error::usage("weight decay must be >= 0"));
        }
        if self.batch_size < 1 {
            return Err(Error::usage("batch size must be at least 1"));
        }
        if self.hidden.contains(&0) {
            return Err(Error::usage("hidden layer widths must be positive"));
        }
        if !(self.env_noise >= 0.0) || !self.env_noise.is_finite() {
            return Err(Error::usage("environment noise level must be >= 0"));
        }
        if self.eval_every > 0 && self.eval_episodes == 0 {
            return Err(Error::usage("periodic evaluation needs at least one episode"));
        }
        self.controller.validate()
    }
}

/// Demo sub-trajectories starting at time index `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct DemoWindowBatch {
    pub t: usize,
    pub windows: Vec<Trajectory>,
}

impl DemoWindowBatch {
    /// Length in states shared by every window.
    pub fn window_len(&self) -> usize {
        self.windows.first().map_or(0, Trajectory::len)
    }
}

/// Draw `batch_size` windows of up to `K + 1` states starting at `t`.
///
/// Demos are drawn without replacement when there are enough of them,
/// otherwise with replacement. Windows near the end are truncated.
pub fn extract_windows(
    demos: &DemoSet,
    t: usize,
    horizon: usize,
    batch_size: usize,
    rng: &mut StreamRng,
) -> Result<DemoWindowBatch> {
    if demos.is_empty() {
        return Err(Error::usage("no demonstrations to draw windows from"));
    }
    if batch_size < 1 {
        return Err(Error::usage("batch size must be at least 1"));
    }
    let big_t = demos.horizon();
    if t >= big_t {
        return Err(Error::usage(format!(
            "window start {t} is past the demo length {big_t}"
        )));
    }
    let len = (horizon + 1).min(big_t - t);
    let n = demos.len();
    let picks: Vec<usize> = if n >= batch_size {
        sample_indices(rng, n, batch_size).into_vec()
    } else {
        (0..batch_size).map(|_| rng.gen_range(0..n)).collect()
    };
    let windows = picks
        .into_iter()
        .map(|i| {
            let tau = &demos.trajectories[i];
            let dim = tau.dim();
            Trajectory::from_flat(dim, tau.as_flat()[t * dim..(t + len) * dim].to_vec())
        })
        .collect::<Result<_>>()?;
    Ok(DemoWindowBatch { t, windows })
}

/// Sampled loss gradient
///
/// ```text
/// (1/N) Σ_i (1/λ) ∂S(window_i) − c Σ_j (1/λ) w_j ∂S̃(V_j)
/// ```
///
/// with `c = 1/M` (as printed) or `c = 1` (self-normalised). Rollouts are
/// cut to the window length so both terms cover the same stretch of time;
/// `∂S̃` averages over a proposal's sub-rollouts.
pub fn estimate_gradient(
    params: &CostParams,
    windows: &DemoWindowBatch,
    batch: &RolloutBatch,
    lambda: f64,
    weighting: GradWeighting,
) -> Result<Vec<f64>> {
    if windows.windows.is_empty() {
        return Err(Error::usage("empty window batch"));
    }
    if batch.weights.len() != batch.trajectories.len() || batch.is_empty() {
        return Err(Error::usage("rollout weights have not been computed"));
    }
    if !(lambda > 0.0) {
        return Err(Error::usage("lambda must be positive"));
    }
    let len = windows.window_len();
    let mut grad = vec![0.0; params.len()];
    let n = windows.windows.len() as f64;
    for w in &windows.windows {
        accumulate_state_cost_grad(params, w, 1.0 / (n * lambda), &mut grad)?;
    }
    let m = batch.len() as f64;
    let c = match weighting {
        GradWeighting::AsPrinted => 1.0 / m,
        GradWeighting::SelfNormalized => 1.0,
    };
    for (trajs, &w) in batch.trajectories.iter().zip(&batch.weights) {
        if w == 0.0 || trajs.is_empty() {
            continue;
        }
        let scale = -c * w / (lambda * trajs.len() as f64);
        for tau in trajs {
            let cut = len.min(tau.len());
            accumulate_state_cost_grad(params, &tau.prefix(cut), scale, &mut grad)?;
        }
    }
    if let Some(i) = grad.iter().position(|g| !g.is_finite()) {
        return Err(Error::numeric(i, "non-finite gradient component"));
    }
    Ok(grad)
}

/// `(1/λ)(mean_i S(window_i) − c Σ_j w_j S̃(V_j))` over the same cut as the gradient.
pub fn loss_surrogate(
    params: &CostParams,
    windows: &DemoWindowBatch,
    batch: &RolloutBatch,
    lambda: f64,
    weighting: GradWeighting,
) -> Result<f64> {
    let len = windows.window_len();
    let expert = windows
        .windows
        .iter()
        .map(|w| state_cost_s(params, w))
        .collect::<Result<Vec<_>>>()?;
    let expert = compensated_sum(expert) / windows.windows.len() as f64;
    let c = match weighting {
        GradWeighting::AsPrinted => 1.0 / batch.len() as f64,
        GradWeighting::SelfNormalized => 1.0,
    };
    let mut terms = Vec::with_capacity(batch.len());
    for (trajs, &w) in batch.trajectories.iter().zip(&batch.weights) {
        let mut s = Vec::with_capacity(trajs.len());
        for tau in trajs {
            s.push(state_cost_s(params, &tau.prefix(len.min(tau.len())))?);
        }
        terms.push(w * compensated_sum(s) / trajs.len().max(1) as f64);
    }
    Ok((expert - c * compensated_sum(terms)) / lambda)
}

/// One optimiser step on the cost parameters.
pub fn apply_update(params: &mut CostParams, grad: &[f64], opt: &mut Optimizer) -> Result<()> {
    opt.step(params.as_flat_mut(), grad)
}

/// One row of the training log, written at every (episode, t).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub episode: usize,
    pub t: usize,
    /// Cumulative environment steps consumed by training.
    pub env_steps: u64,
    pub grad_norm: f64,
    pub s_min: f64,
    pub weight_entropy: f64,
    pub loss: f64,
    /// Mean ground-truth return of the periodic evaluation, on the last
    /// row of an evaluated episode.
    pub eval_return: Option<f64>,
    pub eval_ratio: Option<f64>,
}

pub const METRICS_HEADER: &str = "episode,t,env_steps,grad_norm,s_min,weight_entropy,loss,eval_return,eval_ratio";

impl MetricRow {
    pub fn csv_line(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.episode,
            self.t,
            self.env_steps,
            self.grad_norm,
            self.s_min,
            self.weight_entropy,
            self.loss,
            opt(self.eval_return),
            opt(self.eval_ratio)
        )
    }
}

pub fn metrics_csv(rows: &[MetricRow]) -> String {
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r.csv_line());
        out.push('\n');
    }
    out
}

pub fn metrics_jsonl(rows: &[MetricRow]) -> Result<String> {
    let mut out = String::new();
    for r in rows {
        out.push_str(&serde_json::to_string(r).map_err(|e| Error::format(e.to_string()))?);
        out.push('\n');
    }
    Ok(out)
}

pub const CHECKPOINT_FORMAT: &str = "rhirl-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Everything needed to resume training at an episode boundary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub env: String,
    pub layer_shapes: Vec<LayerShape>,
    pub params: Vec<f64>,
    /// Episodes completed.
    pub episode: usize,
    /// Gradient steps taken.
    pub training_step: u64,
    pub env_steps: u64,
    pub seed: u64,
    pub optimizer: Optimizer,
    pub config: TrainConfig,
}

impl Checkpoint {
    pub fn params(&self) -> Result<CostParams> {
        CostParams::from_flat(self.layer_shapes.clone(), self.params.clone())
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string(self).map_err(|e| Error::format(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ckpt: Checkpoint =
            serde_json::from_str(text).map_err(|e| Error::format(format!("corrupt checkpoint: {e}")))?;
        if ckpt.format != CHECKPOINT_FORMAT {
            return Err(Error::format(format!("not a checkpoint (format `{}`)", ckpt.format)));
        }
        if ckpt.version != CHECKPOINT_VERSION {
            return Err(Error::format(format!(
                "unsupported checkpoint version {}",
                ckpt.version
            )));
        }
        ckpt.params()?;
        Ok(ckpt)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_file(path, self.to_json()?.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    /// Reject checkpoints from another environment or network shape.
    pub fn validate_for(&self, env: &str, input_dim: usize, hidden: &[usize]) -> Result<()> {
        if self.env != env {
            return Err(Error::EnvMismatch {
                expected: env.to_string(),
                found: self.env.clone(),
            });
        }
        let shapes = CostParams::shapes_for(input_dim, hidden);
        if shapes != self.layer_shapes {
            return Err(Error::format(format!(
                "checkpoint layers {:?} do not match the configured network {:?}",
                self.layer_shapes, shapes
            )));
        }
        Ok(())
    }
}

/// Training state between episodes.
#[derive(Debug, Clone)]
pub struct TrainState {
    pub params: CostParams,
    pub optimizer: Optimizer,
    pub episode: usize,
    pub training_step: u64,
    pub env_steps: u64,
}

impl TrainState {
    pub fn fresh(cfg: &TrainConfig, input_dim: usize) -> Result<Self> {
        let params = CostParams::init_uniform(input_dim, &cfg.hidden, RngStream::derive(cfg.seed, &[tag::PARAM_INIT]));
        let optimizer = Optimizer::new(cfg.optimizer, cfg.lr, cfg.weight_decay, params.len())?;
        Ok(Self {
            params,
            optimizer,
            episode: 0,
            training_step: 0,
            env_steps: 0,
        })
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        Ok(Self {
            params: ckpt.params()?,
            optimizer: ckpt.optimizer.clone(),
            episode: ckpt.episode,
            training_step: ckpt.training_step,
            env_steps: ckpt.env_steps,
        })
    }

    pub fn checkpoint(&self, cfg: &TrainConfig) -> Checkpoint {
        Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            env: cfg.env.clone(),
            layer_shapes: self.params.shapes().to_vec(),
            params: self.params.as_flat().to_vec(),
            episode: self.episode,
            training_step: self.training_step,
            env_steps: self.env_steps,
            seed: cfg.seed,
            optimizer: self.optimizer.clone(),
            config: cfg.clone(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub state: TrainState,
    pub log: Vec<MetricRow>,
}

/// Optional side outputs of a training run.
#[derive(Debug, Clone, Default)]
pub struct TrainIo {
    /// Rewritten after every episode and before aborting on an error.
    pub checkpoint: Option<PathBuf>,
    /// Continue from this state instead of a fresh initialisation.
    pub resume: Option<TrainState>,
    /// Called with each finished episode's rows (progress reporting).
    pub on_episode: Option<fn(&[MetricRow])>,
}

/// Run `cfg.episodes` training episodes (counting those already in a
/// resumed state).
///
/// Episode `e` draws everything from `RngStream::derive(seed, [TRAIN, e])`,
/// so a run resumed at an episode boundary matches an uninterrupted one.
pub fn train(cfg: &TrainConfig, env: &Environment, demos: &DemoSet, io: TrainIo) -> Result<TrainOutcome> {
    cfg.validate()?;
    if cfg.env != env.name() {
        return Err(Error::EnvMismatch {
            expected: env.name().to_string(),
            found: cfg.env.clone(),
        });
    }
    demos.validate_for(&env.spec)?;
    let n = env.spec.state_dim;
    let mut state = match io.resume {
        Some(s) => s,
        None => TrainState::fresh(cfg, n)?,
    };
    if state.params.shapes() != CostParams::shapes_for(n, &cfg.hidden).as_slice() {
        return Err(Error::format("resumed parameters do not match the configured network"));
    }
    let mut log = Vec::new();
    while state.episode < cfg.episodes {
        let boundary = state.clone();
        match run_training_episode(cfg, env, demos, &mut state) {
            Ok(rows) => {
                state.episode += 1;
                let mut rows = rows;
                if cfg.eval_every > 0 && state.episode % cfg.eval_every == 0 {
                    let report = evaluate_policy(
                        &state.params,
                        env,
                        cfg.env_noise,
                        cfg.eval_episodes,
                        &cfg.controller,
                        demos.header.seed,
                        demos.header.expert_mean_return,
                    )?;
                    if let Some(last) = rows.last_mut() {
                        last.eval_return = Some(report.mean_return);
                        last.eval_ratio = Some(report.ratio);
                    }
                }
                if let Some(path) = &io.checkpoint {
                    state.checkpoint(cfg).save(path)?;
                }
                if let Some(f) = io.on_episode {
                    f(&rows);
                }
                log.extend(rows);
            }
            Err((t, e)) => {
                if let Some(path) = &io.checkpoint {
                    boundary.checkpoint(cfg).save(path)?;
                }
                return Err(Error::Training {
                    episode: boundary.episode,
                    t,
                    source: Box::new(e),
                });
            }
        }
    }
    if let Some(path) = &io.checkpoint {
        state.checkpoint(cfg).save(path)?;
    }
    Ok(TrainOutcome { state, log })
}

fn run_training_episode(
    cfg: &TrainConfig,
    env: &Environment,
    demos: &DemoSet,
    state: &mut TrainState,
) -> std::result::Result<Vec<MetricRow>, (usize, Error)> {
    let model = env.model.as_ref();
    let m = model.control_dim();
    let ctrl = &cfg.controller;
    let stream = RngStream::derive(cfg.seed, &[tag::TRAIN, state.episode as u64]);
    let true_noise = NoiseSpec::isotropic(cfg.env_noise, m)
        .and_then(|s| s.factor(m))
        .map_err(|e| (0, e))?;
    let mut x = env.sample_initial(&mut stream.child(&[tag::INIT_STATE]).rng());
    let mut exec_rng = stream.child(&[tag::EXECUTION]).rng();
    let mut nominal = ControlSequence::zeros(ctrl.horizon, m);
    let horizon = env.spec.horizon;
    let mut rows = Vec::with_capacity(horizon);
    for t in 0..horizon {
        let mut step = || -> Result<MetricRow> {
            let mut batch = evaluate_rollouts(
                model,
                &x.0,
                &nominal,
                &state.params,
                ctrl,
                stream.child(&[tag::ROLLOUT, t as u64]),
            )?;
            compute_weights(&mut batch, ctrl.lambda)?;
            let windows = extract_windows(
                demos,
                t,
                ctrl.horizon,
                cfg.batch_size,
                &mut stream.child(&[tag::WINDOWS, t as u64]).rng(),
            )?;
            let grad = estimate_gradient(&state.params, &windows, &batch, ctrl.lambda, cfg.grad_weighting)?;
            let loss = loss_surrogate(&state.params, &windows, &batch, ctrl.lambda, cfg.grad_weighting)?;
            apply_update(&mut state.params, &grad, &mut state.optimizer)?;
            state.training_step += 1;
            let updated = update_nominal(&batch, ctrl, model.control_box())?;
            let (u, shifted) = receding_step(&updated);
            let exec = execute_control(model, &x, &u, &true_noise, &mut exec_rng)?;
            state.env_steps += batch.env_steps + 1;
            x = exec.next;
            nominal = shifted;
            Ok(MetricRow {
                episode: state.episode,
                t,
                env_steps: state.env_steps,
                grad_norm: grad.iter().map(|g| g * g).sum::<f64>().sqrt(),
                s_min: batch.s_min,
                weight_entropy: batch.weight_entropy(),
                loss,
                eval_return: None,
                eval_ratio: None,
            })
        };
        rows.push(step().map_err(|e| (t, e))?);
    }
    Ok(rows)
}

/// Expected training cost in environment steps for deterministic dynamics.
pub fn expected_env_steps(episodes: usize, horizon: usize, ctrl: &ControllerConfig) -> u64 {
    episodes as u64 * horizon as u64 * (ctrl.samples as u64 * ctrl.horizon as u64 + 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::demos::generate_demos;
    use crate::envs::make_double_integrator;

    fn tiny_demos(count: usize, horizon: usize) -> (Environment, DemoSet) {
        let env = make_double_integrator().with_horizon(horizon);
        let mut cfg = ControllerConfig::double_integrator();
        cfg.samples = 8;
        cfg.horizon = 4;
        let set = generate_demos(&env, 0.0, count, &cfg, 3, f64::NEG_INFINITY).unwrap();
        (env, set)
    }

    #[test]
    fn one_demo_first_window() {
        let (_, set) = tiny_demos(1, 10);
        let mut rng = RngStream::new(0, 0).rng();
        let b = extract_windows(&set, 0, 3, 1, &mut rng).unwrap();
        assert_eq!(b.windows.len(), 1);
        assert_eq!(b.windows[0].as_flat(), &set.trajectories[0].as_flat()[..8]);
    }

    #[test]
    fn windows_truncate_near_the_end() {
        let (_, set) = tiny_demos(2, 10);
        let mut rng = RngStream::new(0, 0).rng();
        let b = extract_windows(&set, 8, 20, 5, &mut rng).unwrap();
        assert_eq!(b.windows.len(), 5);
        assert!(b.windows.iter().all(|w| w.len() == 2));
        assert!(extract_windows(&set, 10, 3, 1, &mut rng).is_err());
    }

    #[test]
    fn no_replacement_when_enough_demos() {
        let (_, set) = tiny_demos(4, 6);
        let mut rng = RngStream::new(1, 0).rng();
        let b = extract_windows(&set, 0, 2, 4, &mut rng).unwrap();
        let mut firsts: Vec<Vec<f64>> = b.windows.iter().map(|w| w.state(0).to_vec()).collect();
        firsts.sort_by(|a, b| a.partial_cmp(b).unwrap());
        firsts.dedup();
        assert_eq!(firsts.len(), 4);
    }

    #[test]
    fn zero_episodes_returns_initial_params() {
        let (env, set) = tiny_demos(2, 8);
        let mut cfg = TrainConfig::for_env(&env.spec.name).unwrap();
        cfg.episodes = 0;
        let out = train(&cfg, &env, &set, TrainIo::default()).unwrap();
        assert!(out.log.is_empty());
        let fresh = TrainState::fresh(&cfg, 2).unwrap();
        assert_eq!(out.state.params, fresh.params);
    }

    #[test]
    fn env_step_accounting_is_exact() {
        let (env, set) = tiny_demos(2, 8);
        let mut cfg = TrainConfig::for_env(&env.spec.name).unwrap();
        cfg.episodes = 2;
        cfg.hidden = vec![8];
        cfg.controller.samples = 6;
        cfg.controller.horizon = 5;
        cfg.batch_size = 3;
        let out = train(&cfg, &env, &set, TrainIo::default()).unwrap();
        assert_eq!(out.log.len(), 16);
        assert_eq!(out.state.env_steps, expected_env_steps(2, 8, &cfg.controller));
        assert_eq!(out.log.last().unwrap().env_steps, out.state.env_steps);
        assert_eq!(out.state.training_step, 16);
    }

    #[test]
    fn demos_from_other_env_are_rejected() {
        let (env, set) = tiny_demos(1, 8);
        let mut cfg = TrainConfig::for_env(crate::envs::pendulum::NAME).unwrap();
        cfg.episodes = 1;
        let pend = crate::envs::make_pendulum();
        assert!(matches!(
            train(&cfg, &pend, &set, TrainIo::default()),
            Err(Error::EnvMismatch { .. })
        ));
        let _ = env;
    }

    #[test]
    fn checkpoint_round_trip_and_guards() {
        let (env, set) = tiny_demos(2, 6);
        let mut cfg = TrainConfig::for_env(&env.spec.name).unwrap();
        cfg.episodes = 1;
        cfg.hidden = vec![4];
        cfg.controller.samples = 4;
        let out = train(&cfg, &env, &set, TrainIo::default()).unwrap();
        let ckpt = out.state.checkpoint(&cfg);
        let text = ckpt.to_json().unwrap();
        let back = Checkpoint::from_json(&text).unwrap();
        assert_eq!(back, ckpt);
        assert!(back.validate_for(&env.spec.name, 2, &[4]).is_ok());
        assert!(matches!(
            back.validate_for("pendulum", 2, &[4]),
            Err(Error::EnvMismatch { .. })
        ));
        assert!(matches!(
            back.validate_for(&env.spec.name, 2, &[5]),
            Err(Error::Format(_))
        ));
        assert!(matches!(
            Checkpoint::from_json(&text[..text.len() / 2]),
            Err(Error::Format(_))
        ));
    }
}
