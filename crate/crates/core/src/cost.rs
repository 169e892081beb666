//! Learnable state cost `g(x; θ)` and the trajectory costs built on it.
//!
//! `g` is a fully connected network with rectifier hidden layers and a
//! scalar linear output. Forward and parameter-gradient passes are written
//! out by hand; everything runs in `f64`.

use std::cell::RefCell;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::{rollout, ControlSequence, DynamicsModel, NoiseSpec, Trajectory};
use crate::error::{Error, Result};
use crate::rng::RngStream;

/// Anything that scores a single state.
pub trait StateCost: Send + Sync {
    fn input_dim(&self) -> usize;

    /// Unchecked evaluation; callers check finiteness of aggregates.
    fn state_cost(&self, x: &[f64]) -> f64;
}

/// Neumaier-compensated sum.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Shape of one dense layer, `out x in`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerShape {
    pub rows: usize,
    pub cols: usize,
}

impl LayerShape {
    fn len(&self) -> usize {
        self.rows * self.cols + self.rows
    }
}

/// Parameters θ of the cost network, flattened layer by layer as
/// `W (row-major), b`.
#[derive(Debug, Clone, PartialEq)]
pub struct CostParams {
    shapes: Vec<LayerShape>,
    flat: Vec<f64>,
}

/// Value and parameter gradient of `g` at one state.
#[derive(Debug, Clone, PartialEq)]
pub struct CostEval {
    pub value: f64,
    pub grad: Vec<f64>,
}

thread_local! {
    static SCRATCH: RefCell<Vec<f64>> = const { RefCell::new(Vec::new()) };
}

impl CostParams {
    /// Layer shapes for `input -> hidden[0] -> ... -> 1`.
    pub fn shapes_for(input_dim: usize, hidden: &[usize]) -> Vec<LayerShape> {
        let mut dims = vec![input_dim];
        dims.extend_from_slice(hidden);
        dims.push(1);
        dims.windows(2).map(|w| LayerShape { rows: w[1], cols: w[0] }).collect()
    }

    pub fn zeros(input_dim: usize, hidden: &[usize]) -> Self {
        let shapes = Self::shapes_for(input_dim, hidden);
        let len = shapes.iter().map(LayerShape::len).sum();
        Self {
            shapes,
            flat: vec![0.0; len],
        }
    }

    /// Fan-in scaled uniform initialisation, `U(-1/√fan_in, 1/√fan_in)`
    /// for weights and biases alike.
    pub fn init_uniform(input_dim: usize, hidden: &[usize], stream: RngStream) -> Self {
        let mut params = Self::zeros(input_dim, hidden);
        let mut rng = stream.rng();
        let mut offset = 0;
        for shape in params.shapes.clone() {
            let bound = 1.0 / (shape.cols as f64).sqrt();
            for p in &mut params.flat[offset..offset + shape.len()] {
                *p = rng.gen_range(-bound..bound);
            }
            offset += shape.len();
        }
        params
    }

    pub fn from_flat(shapes: Vec<LayerShape>, flat: Vec<f64>) -> Result<Self> {
        if shapes.is_empty() {
            return Err(Error::format("cost network needs at least one layer"));
        }
        if shapes.last().map(|s| s.rows) != Some(1) {
            return Err(Error::format("cost network must have a scalar output"));
        }
        if shapes.windows(2).any(|w| w[0].rows != w[1].cols) {
            return Err(Error::format("consecutive layer shapes do not chain"));
        }
        let expected: usize = shapes.iter().map(LayerShape::len).sum();
        if flat.len() != expected {
            return Err(Error::format(format!(
                "flattened parameter length {} does not match layer shapes ({expected})",
                flat.len()
            )));
        }
        if flat.iter().any(|v| !v.is_finite()) {
            return Err(Error::format("parameters contain non-finite values"));
        }
        Ok(Self { shapes, flat })
    }

    pub fn shapes(&self) -> &[LayerShape] {
        &self.shapes
    }

    pub fn hidden_sizes(&self) -> Vec<usize> {
        self.shapes[..self.shapes.len() - 1].iter().map(|s| s.rows).collect()
    }

    pub fn len(&self) -> usize {
        self.flat.len()
    }

    pub fn is_empty(&self) -> bool {
        self.flat.is_empty()
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.flat
    }

    pub fn as_flat_mut(&mut self) -> &mut [f64] {
        &mut self.flat
    }

    fn max_width(&self) -> usize {
        self.shapes.iter().map(|s| s.rows.max(s.cols)).max().unwrap_or(1)
    }

    /// Forward pass keeping pre-activations of every hidden layer in
    /// `scratch` (laid out consecutively).
    fn forward_into(&self, x: &[f64], scratch: &mut Vec<f64>) -> f64 {
        let hidden_total: usize = self.shapes[..self.shapes.len() - 1].iter().map(|s| s.rows).sum();
        scratch.clear();
        scratch.resize(hidden_total, 0.0);
        let mut offset = 0;
        let mut act_start = 0;
        let n_layers = self.shapes.len();
        let mut output = 0.0;
        for (l, shape) in self.shapes.iter().enumerate() {
            let w = &self.flat[offset..offset + shape.rows * shape.cols];
            let b = &self.flat[offset + shape.rows * shape.cols..offset + shape.len()];
            offset += shape.len();
            let (prev, rest) = scratch.split_at_mut(act_start);
            let input: &[f64] = if l == 0 { x } else { &prev[act_start - shape.cols..] };
            if l + 1 == n_layers {
                let mut acc = b[0];
                if l == 0 {
                    for (wi, xi) in w.iter().zip(input) {
                        acc += wi * xi;
                    }
                } else {
                    for (wi, zi) in w.iter().zip(input) {
                        acc += wi * zi.max(0.0);
                    }
                }
                output = acc;
            } else {
                let out = &mut rest[..shape.rows];
                for r in 0..shape.rows {
                    let row = &w[r * shape.cols..(r + 1) * shape.cols];
                    let mut acc = b[r];
                    if l == 0 {
                        for (wi, xi) in row.iter().zip(input) {
                            acc += wi * xi;
                        }
                    } else {
                        for (wi, zi) in row.iter().zip(input) {
                            acc += wi * zi.max(0.0);
                        }
                    }
                    out[r] = acc;
                }
                act_start += shape.rows;
            }
        }
        output
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.shapes[0].cols {
            return Err(Error::usage(format!(
                "cost network expects {} inputs, got {}",
                self.shapes[0].cols,
                x.len()
            )));
        }
        Ok(())
    }

    /// `g(x; θ)`.
    pub fn g(&self, x: &[f64]) -> Result<f64> {
        self.check_input(x)?;
        let v = self.state_cost(x);
        if !v.is_finite() {
            return Err(Error::numeric(0, "cost network produced a non-finite value"));
        }
        Ok(v)
    }

    /// `g(x; θ)` and `∂g/∂θ`.
    pub fn g_backward(&self, x: &[f64]) -> Result<CostEval> {
        self.check_input(x)?;
        let mut grad = vec![0.0; self.flat.len()];
        let value = self.accumulate_grad(x, 1.0, &mut grad);
        if !value.is_finite() {
            return Err(Error::numeric(0, "cost network produced a non-finite value"));
        }
        Ok(CostEval { value, grad })
    }

    /// Adds `scale · ∂g(x)/∂θ` into `grad` and returns `g(x)`. Unchecked.
    pub fn accumulate_grad(&self, x: &[f64], scale: f64, grad: &mut [f64]) -> f64 {
        SCRATCH.with(|cell| {
            let mut scratch = cell.borrow_mut();
            let value = self.forward_into(x, &mut scratch);
            self.backward_from(x, &scratch, scale, grad);
            value
        })
    }

    fn backward_from(&self, x: &[f64], pre: &[f64], scale: f64, grad: &mut [f64]) {
        let n_layers = self.shapes.len();
        let mut offsets = Vec::with_capacity(n_layers);
        let mut act_offsets = Vec::with_capacity(n_layers);
        let (mut o, mut a) = (0, 0);
        for shape in &self.shapes {
            offsets.push(o);
            act_offsets.push(a);
            o += shape.len();
            if act_offsets.len() < n_layers {
                a += shape.rows;
            }
        }
        let width = self.max_width();
        // delta holds ∂g/∂(pre-activation) of the current layer's outputs.
        let mut delta = vec![0.0; width];
        let mut next_delta = vec![0.0; width];
        delta[0] = scale;
        for l in (0..n_layers).rev() {
            let shape = self.shapes[l];
            let w_off = offsets[l];
            let b_off = w_off + shape.rows * shape.cols;
            let input_pre = if l == 0 {
                None
            } else {
                let start = act_offsets[l] - shape.cols;
                Some(&pre[start..act_offsets[l]])
            };
            for r in 0..shape.rows {
                let d = delta[r];
                grad[b_off + r] += d;
                if d == 0.0 {
                    continue;
                }
                let gw = &mut grad[w_off + r * shape.cols..w_off + (r + 1) * shape.cols];
                match input_pre {
                    None => {
                        for (g, xi) in gw.iter_mut().zip(x) {
                            *g += d * xi;
                        }
                    }
                    Some(z) => {
                        for (g, zi) in gw.iter_mut().zip(z) {
                            *g += d * zi.max(0.0);
                        }
                    }
                }
            }
            if let Some(z) = input_pre {
                let w = &self.flat[w_off..b_off];
                for c in 0..shape.cols {
                    next_delta[c] = 0.0;
                }
                for r in 0..shape.rows {
                    let d = delta[r];
                    if d == 0.0 {
                        continue;
                    }
                    let row = &w[r * shape.cols..(r + 1) * shape.cols];
                    for (nd, wi) in next_delta[..shape.cols].iter_mut().zip(row) {
                        *nd += d * wi;
                    }
                }
                for (c, zc) in z.iter().enumerate() {
                    if *zc <= 0.0 {
                        next_delta[c] = 0.0;
                    }
                }
                std::mem::swap(&mut delta, &mut next_delta);
            }
        }
    }
}

impl StateCost for CostParams {
    fn input_dim(&self) -> usize {
        self.shapes[0].cols
    }

    fn state_cost(&self, x: &[f64]) -> f64 {
        SCRATCH.with(|cell| self.forward_into(x, &mut cell.borrow_mut()))
    }
}

fn check_traj<C: StateCost + ?Sized>(cost: &C, tau: &Trajectory) -> Result<()> {
    if tau.is_empty() {
        return Err(Error::usage("empty trajectory"));
    }
    if tau.dim() != cost.input_dim() {
        return Err(Error::usage(format!(
            "trajectory states have dimension {}, cost expects {}",
            tau.dim(),
            cost.input_dim()
        )));
    }
    Ok(())
}

/// `S(τ) = Σ_k g(x_k)` over every state of the trajectory.
pub fn state_cost_s<C: StateCost + ?Sized>(cost: &C, tau: &Trajectory) -> Result<f64> {
    check_traj(cost, tau)?;
    let s = compensated_sum(tau.states().map(|x| cost.state_cost(x)));
    if !s.is_finite() {
        let idx = tau.states().position(|x| !cost.state_cost(x).is_finite()).unwrap_or(0);
        return Err(Error::numeric(idx, "state cost is not finite"));
    }
    Ok(s)
}

/// `S` for a rollout of a `horizon`-step control sequence: the trajectory
/// must hold exactly `horizon + 1` states.
pub fn state_cost_for_horizon<C: StateCost + ?Sized>(cost: &C, tau: &Trajectory, horizon: usize) -> Result<f64> {
    if tau.len() != horizon + 1 {
        return Err(Error::usage(format!(
            "trajectory has {} states, horizon {horizon} needs {}",
            tau.len(),
            horizon + 1
        )));
    }
    state_cost_s(cost, tau)
}

/// Adds `scale · ∂S(τ)/∂θ` into `grad`; returns `S(τ)`.
pub fn accumulate_state_cost_grad(params: &CostParams, tau: &Trajectory, scale: f64, grad: &mut [f64]) -> Result<f64> {
    check_traj(params, tau)?;
    let s = compensated_sum(tau.states().map(|x| params.accumulate_grad(x, scale, grad)));
    if !s.is_finite() {
        return Err(Error::numeric(0, "state cost is not finite"));
    }
    Ok(s)
}

/// `J = S(τ) + (λ/2) Σ_k u_kᵀ Σ_eff⁻¹ u_k`.
pub fn total_cost_j<C: StateCost + ?Sized>(
    cost: &C,
    tau: &Trajectory,
    nominal: &ControlSequence,
    noise: &NoiseSpec,
    lambda: f64,
) -> Result<f64> {
    if !(lambda >= 0.0) {
        return Err(Error::usage(format!("lambda must be >= 0, got {lambda}")));
    }
    let factor = noise.factor(nominal.dim())?;
    let s = state_cost_s(cost, tau)?;
    let mut control = Vec::with_capacity(nominal.horizon());
    for u in nominal.iter() {
        control.push(factor.inv_quad(u, u)?);
    }
    Ok(s + 0.5 * lambda * compensated_sum(control))
}

/// `S̃(V, x0) ≈ (1/ms) Σ_h S(τ_h)` over `ms` stochastic rollouts.
///
/// Sub-rollout `h` draws its process noise from `stream.child(&[h])`.
/// Deterministic models are rolled out once and return that `S` exactly.
pub fn expected_state_cost<C: StateCost + ?Sized>(
    cost: &C,
    model: &dyn DynamicsModel,
    x0: &[f64],
    controls: &ControlSequence,
    ms: usize,
    stream: RngStream,
) -> Result<f64> {
    if ms < 1 {
        return Err(Error::usage("need at least one sample per control sequence"));
    }
    if !model.is_stochastic() {
        let tau = rollout(model, x0, controls, None)?;
        return state_cost_s(cost, &tau);
    }
    let mut costs = Vec::with_capacity(ms);
    for h in 0..ms {
        let mut rng = stream.child(&[h as u64]).rng();
        let tau = rollout(model, x0, controls, Some(&mut rng))?;
        costs.push(state_cost_s(cost, &tau)?);
    }
    Ok(compensated_sum(costs) / ms as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::StateVec;

    /// Plain triple-loop evaluator, independent of the workspace layout.
    fn naive_forward(params: &CostParams, x: &[f64]) -> f64 {
        let mut act = x.to_vec();
        let mut offset = 0;
        let n = params.shapes().len();
        for (l, s) in params.shapes().iter().enumerate() {
            let flat = params.as_flat();
            let mut out = vec![0.0; s.rows];
            for r in 0..s.rows {
                let mut acc = 0.0;
                for c in 0..s.cols {
                    acc += flat[offset + r * s.cols + c] * act[c];
                }
                acc += flat[offset + s.rows * s.cols + r];
                out[r] = if l + 1 < n { acc.max(0.0) } else { acc };
            }
            offset += s.rows * s.cols + s.rows;
            act = out;
        }
        act[0]
    }

    fn random_params(seed: u64) -> CostParams {
        CostParams::init_uniform(3, &[32, 32], RngStream::new(seed, 0))
    }

    fn random_x(seed: u64, n: usize) -> Vec<f64> {
        let mut rng = RngStream::new(seed, 99).rng();
        (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect()
    }

    #[test]
    fn zero_network_is_zero() {
        let p = CostParams::zeros(3, &[32, 32]);
        assert_eq!(p.g(&[1.0, -2.0, 3.0]).unwrap(), 0.0);
    }

    #[test]
    fn linear_layer_by_hand() {
        let shapes = CostParams::shapes_for(3, &[]);
        let p = CostParams::from_flat(shapes, vec![0.5, -1.0, 2.0, 0.25]).unwrap();
        let v = p.g(&[2.0, 1.0, -0.5]).unwrap();
        assert_eq!(v, 0.5 * 2.0 - 1.0 * 1.0 + 2.0 * -0.5 + 0.25);
        let e = p.g_backward(&[2.0, 1.0, -0.5]).unwrap();
        assert_eq!(e.grad, vec![2.0, 1.0, -0.5, 1.0]);
    }

    #[test]
    fn forward_matches_naive_evaluator() {
        for seed in 0..20 {
            let p = random_params(seed);
            let x = random_x(seed, 3);
            let a = p.g(&x).unwrap();
            let b = naive_forward(&p, &x);
            assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()), "{a} vs {b}");
        }
    }

    #[test]
    fn zero_network_gradient() {
        let p = CostParams::zeros(3, &[4, 4]);
        let e = p.g_backward(&[1.0, 2.0, 3.0]).unwrap();
        let last = e.grad.len() - 1;
        assert_eq!(e.grad[last], 1.0);
        assert!(e.grad[..last].iter().all(|g| *g == 0.0));
    }

    #[test]
    fn backward_value_equals_forward_value() {
        for seed in 0..10 {
            let p = random_params(seed);
            let x = random_x(seed + 100, 3);
            assert_eq!(p.g_backward(&x).unwrap().value, p.g(&x).unwrap());
        }
    }

    #[test]
    fn finite_difference_gradient() {
        let h = 1e-5;
        for seed in 0..5 {
            let p = random_params(seed);
            let x = random_x(seed + 7, 3);
            let e = p.g_backward(&x).unwrap();
            let mut rng = RngStream::new(seed, 5).rng();
            for _ in 0..50 {
                let i = rng.gen_range(0..p.len());
                let mut plus = p.clone();
                plus.as_flat_mut()[i] += h;
                let mut minus = p.clone();
                minus.as_flat_mut()[i] -= h;
                let fd = (naive_forward(&plus, &x) - naive_forward(&minus, &x)) / (2.0 * h);
                let denom = fd.abs().max(e.grad[i].abs()).max(1e-8);
                assert!(
                    (fd - e.grad[i]).abs() / denom < 1e-5,
                    "coord {i}: {fd} vs {}",
                    e.grad[i]
                );
            }
        }
    }

    #[test]
    fn wrong_input_dimension() {
        let p = random_params(0);
        assert!(matches!(p.g(&[1.0]), Err(Error::Usage(_))));
        assert!(matches!(p.g_backward(&[1.0, 2.0, 3.0, 4.0]), Err(Error::Usage(_))));
    }

    #[test]
    fn from_flat_rejects_bad_shapes() {
        let shapes = CostParams::shapes_for(2, &[3]);
        assert!(CostParams::from_flat(shapes.clone(), vec![0.0; 5]).is_err());
        let ok_len: usize = 3 * 2 + 3 + 3 + 1;
        assert!(CostParams::from_flat(shapes, vec![0.0; ok_len]).is_ok());
    }

    #[test]
    fn state_cost_sums_three_states() {
        let shapes = CostParams::shapes_for(2, &[]);
        let p = CostParams::from_flat(shapes, vec![1.0, 2.0, 0.5]).unwrap();
        let tau = Trajectory::from_states(&[
            StateVec(vec![1.0, 0.0]),
            StateVec(vec![0.0, 1.0]),
            StateVec(vec![-1.0, 1.0]),
        ])
        .unwrap();
        let expected = (1.0 + 0.5) + (2.0 + 0.5) + (1.0 + 0.5);
        assert_eq!(state_cost_s(&p, &tau).unwrap(), expected);
        assert_eq!(state_cost_for_horizon(&p, &tau, 2).unwrap(), expected);
        assert!(state_cost_for_horizon(&p, &tau, 3).is_err());
    }

    #[test]
    fn zero_network_state_cost() {
        let p = CostParams::zeros(2, &[8, 8]);
        let tau = Trajectory::from_flat(2, vec![0.3; 2 * 11]).unwrap();
        assert_eq!(state_cost_s(&p, &tau).unwrap(), 0.0);
    }

    #[test]
    fn control_term_of_total_cost() {
        let p = CostParams::zeros(1, &[]);
        let tau = Trajectory::from_flat(1, vec![0.0, 0.0]).unwrap();
        let u = ControlSequence::from_rows(&[vec![3.0]]).unwrap();
        let noise = NoiseSpec::beta(1.0).unwrap();
        assert_eq!(total_cost_j(&p, &tau, &u, &noise, 2.0).unwrap(), 9.0);
        let zero_u = ControlSequence::zeros(1, 1);
        assert_eq!(total_cost_j(&p, &tau, &zero_u, &noise, 2.0).unwrap(), 0.0);
        let singular = NoiseSpec::isotropic(0.0, 1).unwrap();
        assert!(matches!(
            total_cost_j(&p, &tau, &u, &singular, 2.0),
            Err(Error::Usage(_))
        ));
        assert!(total_cost_j(&p, &tau, &u, &noise, -1.0).is_err());
    }

    #[test]
    fn compensated_sum_beats_naive() {
        let values: Vec<f64> = std::iter::once(1e16).chain(std::iter::repeat_n(1.0, 1000)).collect();
        assert_eq!(compensated_sum(values), 1e16 + 1000.0);
    }
}
