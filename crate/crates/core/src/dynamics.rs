//! States, controls, control noise and the black-box dynamics contract.

use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Random source handed to sampling routines; always obtained from
/// [`crate::rng::RngStream::rng`].
pub type StreamRng = ChaCha8Rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateVec(pub Vec<f64>);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlVec(pub Vec<f64>);

impl StateVec {
    pub fn dim(&self) -> usize {
        self.0.len()
    }
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

impl ControlVec {
    pub fn dim(&self) -> usize {
        self.0.len()
    }
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Length-K sequence of m-dimensional controls, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlSequence {
    dim: usize,
    data: Vec<f64>,
}

impl ControlSequence {
    pub fn zeros(horizon: usize, dim: usize) -> Self {
        Self {
            dim,
            data: vec![0.0; horizon * dim],
        }
    }

    pub fn from_flat(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 || !data.len().is_multiple_of(dim) {
            return Err(Error::usage(format!(
                "control data of length {} is not a multiple of dimension {dim}",
                data.len()
            )));
        }
        Ok(Self { dim, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map(Vec::len).unwrap_or(0);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::usage("ragged control rows"));
        }
        Self::from_flat(dim, rows.concat())
    }

    pub fn horizon(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, k: usize) -> &[f64] {
        &self.data[k * self.dim..(k + 1) * self.dim]
    }

    pub fn get_mut(&mut self, k: usize) -> &mut [f64] {
        &mut self.data[k * self.dim..(k + 1) * self.dim]
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }

    pub fn as_flat_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Sequence of states produced by rolling controls through dynamics.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    dim: usize,
    data: Vec<f64>,
}

impl Trajectory {
    pub fn with_capacity(dim: usize, len: usize) -> Self {
        Self {
            dim,
            data: Vec::with_capacity(dim * len),
        }
    }

    pub fn from_flat(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 || !data.len().is_multiple_of(dim) {
            return Err(Error::usage("trajectory data is not a multiple of the state dimension"));
        }
        Ok(Self { dim, data })
    }

    pub fn from_states(states: &[StateVec]) -> Result<Self> {
        let dim = states.first().map(StateVec::dim).unwrap_or(0);
        if states.iter().any(|s| s.dim() != dim) {
            return Err(Error::usage("states of mixed dimension"));
        }
        let data = states.iter().flat_map(|s| s.0.iter().copied()).collect();
        Self::from_flat(dim, data)
    }

    pub fn push(&mut self, x: &[f64]) {
        debug_assert_eq!(x.len(), self.dim);
        self.data.extend_from_slice(x);
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn state(&self, k: usize) -> &[f64] {
        &self.data[k * self.dim..(k + 1) * self.dim]
    }

    pub fn last(&self) -> &[f64] {
        self.state(self.len() - 1)
    }

    pub fn states(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }

    /// First `len` states (or all of them when shorter).
    pub fn prefix(&self, len: usize) -> Trajectory {
        let len = len.min(self.len());
        Trajectory {
            dim: self.dim,
            data: self.data[..len * self.dim].to_vec(),
        }
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }
}

/// Per-dimension admissible control interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl ControlBox {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() || lo.is_empty() {
            return Err(Error::usage("control box bounds must have equal, non-zero length"));
        }
        if lo.iter().zip(&hi).any(|(l, h)| !(l < h)) {
            return Err(Error::usage("control box requires lo < hi in every dimension"));
        }
        Ok(Self { lo, hi })
    }

    pub fn symmetric(limit: f64, dim: usize) -> Self {
        Self {
            lo: vec![-limit; dim],
            hi: vec![limit; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn clamp_in_place(&self, v: &mut [f64]) {
        for ((x, lo), hi) in v.iter_mut().zip(&self.lo).zip(&self.hi) {
            *x = x.clamp(*lo, *hi);
        }
    }

    pub fn contains(&self, v: &[f64]) -> bool {
        v.iter()
            .zip(&self.lo)
            .zip(&self.hi)
            .all(|((x, lo), hi)| *x >= *lo && *x <= *hi)
    }

    pub fn center(&self) -> Vec<f64> {
        self.lo.iter().zip(&self.hi).map(|(l, h)| 0.5 * (l + h)).collect()
    }
}

/// Gaussian control noise: either a known covariance or the learner's
/// `beta * I` stand-in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum NoiseSpec {
    TrueSigma { dim: usize, sigma: Vec<f64> },
    BetaIdentity { beta: f64 },
}

impl NoiseSpec {
    pub fn beta(beta: f64) -> Result<Self> {
        if !(beta > 0.0) || !beta.is_finite() {
            return Err(Error::usage(format!("beta must be positive, got {beta}")));
        }
        Ok(NoiseSpec::BetaIdentity { beta })
    }

    /// `level * I`; the noise levels 0, 0.2 and 0.5 are variances.
    pub fn isotropic(level: f64, dim: usize) -> Result<Self> {
        if !(level >= 0.0) || !level.is_finite() {
            return Err(Error::usage(format!("noise level must be >= 0, got {level}")));
        }
        let mut sigma = vec![0.0; dim * dim];
        for i in 0..dim {
            sigma[i * dim + i] = level;
        }
        Ok(NoiseSpec::TrueSigma { dim, sigma })
    }

    pub fn true_sigma(dim: usize, sigma: Vec<f64>) -> Result<Self> {
        if sigma.len() != dim * dim {
            return Err(Error::usage("sigma must be dim x dim"));
        }
        for i in 0..dim {
            for j in 0..dim {
                let (a, b) = (sigma[i * dim + j], sigma[j * dim + i]);
                if !a.is_finite() || (a - b).abs() > 1e-12 * (1.0 + a.abs()) {
                    return Err(Error::usage("sigma must be finite and symmetric"));
                }
            }
        }
        cholesky_psd(&sigma, dim)?;
        Ok(NoiseSpec::TrueSigma { dim, sigma })
    }

    /// Σ_eff as a dense `dim x dim` matrix.
    pub fn matrix(&self, dim: usize) -> Vec<f64> {
        match self {
            NoiseSpec::TrueSigma { sigma, .. } => sigma.clone(),
            NoiseSpec::BetaIdentity { beta } => {
                let mut m = vec![0.0; dim * dim];
                for i in 0..dim {
                    m[i * dim + i] = *beta;
                }
                m
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            NoiseSpec::TrueSigma { sigma, .. } => sigma.iter().all(|v| *v == 0.0),
            NoiseSpec::BetaIdentity { .. } => false,
        }
    }

    /// Precomputed sampler / quadratic-form helper for dimension `dim`.
    pub fn factor(&self, dim: usize) -> Result<NoiseFactor> {
        if let NoiseSpec::TrueSigma { dim: d, .. } = self {
            if *d != dim {
                return Err(Error::usage(format!(
                    "noise covariance is {d}x{d}, control dimension is {dim}"
                )));
            }
        }
        let sigma = self.matrix(dim);
        let chol = cholesky_psd(&sigma, dim)?;
        let inverse = invert_spd(&sigma, dim);
        Ok(NoiseFactor { dim, chol, inverse })
    }
}

/// Cholesky factor (for sampling) and inverse (for control terms) of Σ_eff.
#[derive(Debug, Clone)]
pub struct NoiseFactor {
    dim: usize,
    chol: Vec<f64>,
    inverse: Option<Vec<f64>>,
}

impl NoiseFactor {
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Draw `mean + L z` with z standard normal, written into `out`.
    pub fn sample_into(&self, mean: &[f64], rng: &mut StreamRng, out: &mut [f64]) {
        let d = self.dim;
        let mut z = [0.0f64; 8];
        let mut zv;
        let z: &mut [f64] = if d <= 8 {
            &mut z[..d]
        } else {
            zv = vec![0.0; d];
            &mut zv
        };
        for zi in z.iter_mut() {
            *zi = rng.sample(StandardNormal);
        }
        for i in 0..d {
            let mut acc = mean[i];
            for j in 0..=i {
                acc += self.chol[i * d + j] * z[j];
            }
            out[i] = acc;
        }
    }

    /// `aᵀ Σ⁻¹ b`; fails when Σ is singular.
    pub fn inv_quad(&self, a: &[f64], b: &[f64]) -> Result<f64> {
        let inv = self
            .inverse
            .as_ref()
            .ok_or_else(|| Error::usage("noise covariance is singular; control cost undefined"))?;
        let d = self.dim;
        let mut acc = 0.0;
        for i in 0..d {
            let mut row = 0.0;
            for j in 0..d {
                row += inv[i * d + j] * b[j];
            }
            acc += a[i] * row;
        }
        Ok(acc)
    }

    pub fn is_invertible(&self) -> bool {
        self.inverse.is_some()
    }
}

/// Lower-triangular factor of a PSD matrix; zero pivots yield zero columns.
fn cholesky_psd(a: &[f64], n: usize) -> Result<Vec<f64>> {
    let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
    let tol = 1e-12 * scale;
    let mut l = vec![0.0; n * n];
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            d -= l[j * n + k] * l[j * n + k];
        }
        if d < -tol {
            return Err(Error::usage("noise covariance is not positive semi-definite"));
        }
        let piv = if d > tol { d.sqrt() } else { 0.0 };
        l[j * n + j] = piv;
        for i in j + 1..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            l[i * n + j] = if piv > 0.0 { s / piv } else { 0.0 };
            if piv == 0.0 && s.abs() > tol {
                return Err(Error::usage("noise covariance is not positive semi-definite"));
            }
        }
    }
    Ok(l)
}

/// Gauss-Jordan inverse; `None` when the matrix is numerically singular.
fn invert_spd(a: &[f64], n: usize) -> Option<Vec<f64>> {
    let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        return None;
    }
    let mut m = a.to_vec();
    let mut inv = vec![0.0; n * n];
    for i in 0..n {
        inv[i * n + i] = 1.0;
    }
    for c in 0..n {
        let p = (c..n).max_by(|&i, &j| m[i * n + c].abs().total_cmp(&m[j * n + c].abs()))?;
        if m[p * n + c].abs() <= 1e-14 * scale {
            return None;
        }
        if p != c {
            for k in 0..n {
                m.swap(p * n + k, c * n + k);
                inv.swap(p * n + k, c * n + k);
            }
        }
        let d = m[c * n + c];
        for k in 0..n {
            m[c * n + k] /= d;
            inv[c * n + k] /= d;
        }
        for r in 0..n {
            if r != c {
                let f = m[r * n + c];
                if f != 0.0 {
                    for k in 0..n {
                        m[r * n + k] -= f * m[c * n + k];
                        inv[r * n + k] -= f * inv[c * n + k];
                    }
                }
            }
        }
    }
    Some(inv)
}

/// Black-box, resettable system `x' = f(x, v)` (or `f(x, v, ω)`).
///
/// Implementations hold no mutable state, so one instance can be shared by
/// every rollout worker.
pub trait DynamicsModel: Send + Sync {
    fn name(&self) -> &str;
    fn state_dim(&self) -> usize;
    fn control_dim(&self) -> usize;
    fn dt(&self) -> f64;
    fn control_box(&self) -> &ControlBox;

    /// Unchecked deterministic step. `v` must already lie in the control box.
    fn step_into(&self, x: &[f64], v: &[f64], out: &mut [f64]);

    fn is_stochastic(&self) -> bool {
        false
    }

    /// Unchecked stochastic step; defaults to the deterministic one.
    fn step_noisy_into(&self, x: &[f64], v: &[f64], _rng: &mut StreamRng, out: &mut [f64]) {
        self.step_into(x, v, out)
    }
}

fn check_dims(model: &dyn DynamicsModel, x: &[f64], v: &[f64]) -> Result<()> {
    if x.len() != model.state_dim() {
        return Err(Error::usage(format!(
            "{}: state has dimension {}, expected {}",
            model.name(),
            x.len(),
            model.state_dim()
        )));
    }
    if v.len() != model.control_dim() {
        return Err(Error::usage(format!(
            "{}: control has dimension {}, expected {}",
            model.name(),
            v.len(),
            model.control_dim()
        )));
    }
    Ok(())
}

pub fn step(model: &dyn DynamicsModel, x: &StateVec, v: &ControlVec) -> Result<StateVec> {
    check_dims(model, &x.0, &v.0)?;
    let mut out = vec![0.0; model.state_dim()];
    model.step_into(&x.0, &v.0, &mut out);
    if out.iter().any(|z| !z.is_finite()) {
        return Err(Error::numeric(
            0,
            format!("{} produced a non-finite state", model.name()),
        ));
    }
    Ok(StateVec(out))
}

pub fn step_stochastic(
    model: &dyn DynamicsModel,
    x: &StateVec,
    v: &ControlVec,
    rng: &mut StreamRng,
) -> Result<StateVec> {
    if !model.is_stochastic() {
        return Err(Error::usage(format!("{} is deterministic", model.name())));
    }
    check_dims(model, &x.0, &v.0)?;
    let mut out = vec![0.0; model.state_dim()];
    model.step_noisy_into(&x.0, &v.0, rng, &mut out);
    if out.iter().any(|z| !z.is_finite()) {
        return Err(Error::numeric(
            0,
            format!("{} produced a non-finite state", model.name()),
        ));
    }
    Ok(StateVec(out))
}

/// Roll `controls` out from `x0`, returning all K+1 states.
///
/// With `noise_rng` set, stochastic models draw process noise from it;
/// deterministic models ignore it. A non-finite state aborts with the index
/// of the offending state.
pub fn rollout(
    model: &dyn DynamicsModel,
    x0: &[f64],
    controls: &ControlSequence,
    mut noise_rng: Option<&mut StreamRng>,
) -> Result<Trajectory> {
    let n = model.state_dim();
    if x0.len() != n || controls.dim() != model.control_dim() {
        return Err(Error::usage(format!(
            "{}: rollout dimension mismatch (state {}, control {})",
            model.name(),
            x0.len(),
            controls.dim()
        )));
    }
    let k_len = controls.horizon();
    let mut traj = Trajectory::with_capacity(n, k_len + 1);
    traj.push(x0);
    let mut cur = x0.to_vec();
    let mut next = vec![0.0; n];
    for (k, v) in controls.iter().enumerate() {
        match noise_rng.as_deref_mut() {
            Some(rng) if model.is_stochastic() => model.step_noisy_into(&cur, v, rng, &mut next),
            _ => model.step_into(&cur, v, &mut next),
        }
        if next.iter().any(|z| !z.is_finite()) {
            return Err(Error::numeric(
                k + 1,
                format!("{} diverged during rollout", model.name()),
            ));
        }
        traj.push(&next);
        std::mem::swap(&mut cur, &mut next);
    }
    Ok(traj)
}

/// Draw one proposal sequence around `nominal`.
///
/// With probability `explore_prob` the whole sequence is uniform over the
/// control box; otherwise each entry is `N(u_k, Σ_eff)`. Always clamped.
pub fn sample_control_sequence(
    nominal: &ControlSequence,
    noise: &NoiseFactor,
    explore_prob: f64,
    bounds: &ControlBox,
    rng: &mut StreamRng,
) -> Result<ControlSequence> {
    if !(0.0..=1.0).contains(&explore_prob) {
        return Err(Error::usage(format!(
            "explore_prob must lie in [0, 1], got {explore_prob}"
        )));
    }
    let m = nominal.dim();
    if noise.dim() != m || bounds.dim() != m {
        return Err(Error::usage(
            "noise / control box dimension differs from the nominal sequence",
        ));
    }
    let explore = explore_prob > 0.0 && rng.gen::<f64>() < explore_prob;
    let mut out = ControlSequence::zeros(nominal.horizon(), m);
    for k in 0..nominal.horizon() {
        let row = out.get_mut(k);
        if explore {
            for (i, r) in row.iter_mut().enumerate() {
                *r = rng.gen_range(bounds.lo[i]..=bounds.hi[i]);
            }
        } else {
            noise.sample_into(nominal.get(k), rng, row);
        }
        bounds.clamp_in_place(row);
    }
    Ok(out)
}

/// Adds independent Gaussian process noise `ω ~ N(0, diag(scale²))` to the
/// successor state of a deterministic model.
pub struct ProcessNoise {
    inner: Arc<dyn DynamicsModel>,
    scale: Vec<f64>,
    name: String,
}

impl ProcessNoise {
    pub fn new(inner: Arc<dyn DynamicsModel>, scale: Vec<f64>) -> Result<Self> {
        if scale.len() != inner.state_dim() || scale.iter().any(|s| !(*s >= 0.0)) {
            return Err(Error::usage("process noise scale must be non-negative, one per state"));
        }
        let name = format!("{}+noise", inner.name());
        Ok(Self { inner, scale, name })
    }

    pub fn scale(&self) -> &[f64] {
        &self.scale
    }
}

impl DynamicsModel for ProcessNoise {
    fn name(&self) -> &str {
        &self.name
    }
    fn state_dim(&self) -> usize {
        self.inner.state_dim()
    }
    fn control_dim(&self) -> usize {
        self.inner.control_dim()
    }
    fn dt(&self) -> f64 {
        self.inner.dt()
    }
    fn control_box(&self) -> &ControlBox {
        self.inner.control_box()
    }
    fn step_into(&self, x: &[f64], v: &[f64], out: &mut [f64]) {
        self.inner.step_into(x, v, out)
    }
    fn is_stochastic(&self) -> bool {
        true
    }
    fn step_noisy_into(&self, x: &[f64], v: &[f64], rng: &mut StreamRng, out: &mut [f64]) {
        self.inner.step_into(x, v, out);
        for (o, s) in out.iter_mut().zip(&self.scale) {
            let w: f64 = rng.sample(StandardNormal);
            *o += s * w;
        }
    }
}
