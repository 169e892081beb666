//! Finite-horizon discrete LQR for single-input linear systems.
//!
//! Minimises `Σ_{t=0}^{T-1} xₜᵀ Q xₜ + r uₜ²` subject to `xₜ₊₁ = A xₜ + B uₜ`,
//! with no terminal cost.

use crate::envs::double_integrator::{DoubleIntegrator, CONTROL_WEIGHT, STATE_WEIGHTS};

#[derive(Debug, Clone)]
pub struct Lqr {
    n: usize,
    /// Feedback gains `uₜ = -Kₜ xₜ`, one row per step.
    gains: Vec<Vec<f64>>,
    /// Cost-to-go matrices `Pₜ`, `t = 0..=T`.
    cost_to_go: Vec<Vec<f64>>,
}

fn matvec(m: &[f64], v: &[f64], n: usize) -> Vec<f64> {
    (0..n).map(|i| (0..n).map(|j| m[i * n + j] * v[j]).sum()).collect()
}

impl Lqr {
    /// Backward Riccati recursion. `a` is `n x n` row-major, `q` likewise.
    pub fn solve(a: &[f64], b: &[f64], q: &[f64], r: f64, horizon: usize) -> Self {
        let n = b.len();
        assert_eq!(a.len(), n * n);
        assert_eq!(q.len(), n * n);
        let mut p = vec![0.0; n * n];
        let mut cost_to_go = vec![p.clone()];
        let mut gains = Vec::with_capacity(horizon);
        for _ in 0..horizon {
            // pb = P B, s = r + Bᵀ P B, K = Bᵀ P A / s
            let pb = matvec(&p, b, n);
            let s = r + b.iter().zip(&pb).map(|(x, y)| x * y).sum::<f64>();
            let gain: Vec<f64> = (0..n)
                .map(|j| (0..n).map(|i| pb[i] * a[i * n + j]).sum::<f64>() / s)
                .collect();
            // P' = Q + Aᵀ P (A - B K)
            let mut closed = a.to_vec();
            for i in 0..n {
                for j in 0..n {
                    closed[i * n + j] -= b[i] * gain[j];
                }
            }
            let mut next = q.to_vec();
            for i in 0..n {
                for j in 0..n {
                    let mut acc = 0.0;
                    for k in 0..n {
                        for l in 0..n {
                            acc += a[k * n + i] * p[k * n + l] * closed[l * n + j];
                        }
                    }
                    next[i * n + j] += acc;
                }
            }
            // symmetrise against round-off
            for i in 0..n {
                for j in i + 1..n {
                    let avg = 0.5 * (next[i * n + j] + next[j * n + i]);
                    next[i * n + j] = avg;
                    next[j * n + i] = avg;
                }
            }
            p = next;
            gains.push(gain);
            cost_to_go.push(p.clone());
        }
        gains.reverse();
        cost_to_go.reverse();
        Self { n, gains, cost_to_go }
    }

    /// LQR problem matching the double integrator's ground-truth cost.
    pub fn double_integrator(model: &DoubleIntegrator, horizon: usize) -> Self {
        let (a, b) = model.linear_form();
        let q = [STATE_WEIGHTS[0], 0.0, 0.0, STATE_WEIGHTS[1]];
        Self::solve(&a, &b, &q, CONTROL_WEIGHT, horizon)
    }

    pub fn horizon(&self) -> usize {
        self.gains.len()
    }

    /// Optimal total cost from `x0`: `x0ᵀ P₀ x0`.
    pub fn optimal_cost(&self, x0: &[f64]) -> f64 {
        let px = matvec(&self.cost_to_go[0], x0, self.n);
        x0.iter().zip(&px).map(|(a, b)| a * b).sum()
    }

    pub fn control(&self, t: usize, x: &[f64]) -> f64 {
        -self.gains[t].iter().zip(x).map(|(k, xi)| k * xi).sum::<f64>()
    }
}
