//! First-order optimisers for the cost parameters.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OptimizerKind {
    /// Adam with decoupled weight decay.
    Adam,
    /// Plain gradient descent with decoupled weight decay.
    Sgd,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamHyper {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Optimiser state carried across steps (and checkpoints).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Optimizer {
    pub kind: OptimizerKind,
    pub lr: f64,
    pub weight_decay: f64,
    pub hyper: AdamHyper,
    pub step: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, lr: f64, weight_decay: f64, len: usize) -> Result<Self> {
        if !(lr > 0.0) || !lr.is_finite() {
            return Err(Error::usage(format!("learning rate must be positive, got {lr}")));
        }
        if !(weight_decay >= 0.0) || !weight_decay.is_finite() {
            return Err(Error::usage(format!("weight decay must be >= 0, got {weight_decay}")));
        }
        let moments = match kind {
            OptimizerKind::Adam => len,
            OptimizerKind::Sgd => 0,
        };
        Ok(Self {
            kind,
            lr,
            weight_decay,
            hyper: AdamHyper::default(),
            step: 0,
            m: vec![0.0; moments],
            v: vec![0.0; moments],
        })
    }

    /// One in-place update of `params` along `-grad`.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) -> Result<()> {
        if params.len() != grad.len() {
            return Err(Error::usage(format!(
                "gradient has {} entries, parameters {}",
                grad.len(),
                params.len()
            )));
        }
        if let Some(i) = grad.iter().position(|g| !g.is_finite()) {
            return Err(Error::numeric(i, "non-finite gradient component"));
        }
        self.step += 1;
        let decay = 1.0 - self.lr * self.weight_decay;
        match self.kind {
            OptimizerKind::Sgd => {
                for (p, g) in params.iter_mut().zip(grad) {
                    *p = *p * decay - self.lr * g;
                }
            }
            OptimizerKind::Adam => {
                if self.m.len() != params.len() {
                    return Err(Error::usage("optimiser state does not match parameter count"));
                }
                let AdamHyper { beta1, beta2, eps } = self.hyper;
                let bc1 = 1.0 - beta1.powi(self.step.min(i32::MAX as u64) as i32);
                let bc2 = 1.0 - beta2.powi(self.step.min(i32::MAX as u64) as i32);
                for i in 0..params.len() {
                    let g = grad[i];
                    self.m[i] = beta1 * self.m[i] + (1.0 - beta1) * g;
                    self.v[i] = beta2 * self.v[i] + (1.0 - beta2) * g * g;
                    let m_hat = self.m[i] / bc1;
                    let v_hat = self.v[i] / bc2;
                    params[i] = params[i] * decay - self.lr * m_hat / (v_hat.sqrt() + eps);
                }
            }
        }
        if let Some(i) = params.iter().position(|p| !p.is_finite()) {
            return Err(Error::numeric(i, "parameter became non-finite"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_no_decay_is_identity() {
        for kind in [OptimizerKind::Adam, OptimizerKind::Sgd] {
            let mut opt = Optimizer::new(kind, 1e-2, 0.0, 3).unwrap();
            let mut p = vec![0.5, -1.25, 3.0];
            let orig = p.clone();
            for _ in 0..10 {
                opt.step(&mut p, &[0.0; 3]).unwrap();
            }
            assert_eq!(p, orig);
        }
    }

    #[test]
    fn decay_only_shrinks_geometrically() {
        let (lr, wd) = (1e-3, 0.5);
        for kind in [OptimizerKind::Adam, OptimizerKind::Sgd] {
            let mut opt = Optimizer::new(kind, lr, wd, 2).unwrap();
            let mut p = vec![2.0, -4.0];
            for _ in 0..5 {
                opt.step(&mut p, &[0.0; 2]).unwrap();
            }
            let f = (1.0 - lr * wd).powi(5);
            assert!((p[0] - 2.0 * f).abs() < 1e-15);
            assert!((p[1] + 4.0 * f).abs() < 1e-15);
        }
    }

    #[test]
    fn scalar_quadratic_converges() {
        // f(p) = (p - 3)², minimum at 3.
        let mut opt = Optimizer::new(OptimizerKind::Adam, 1e-2, 0.0, 1).unwrap();
        let mut p = vec![-2.0];
        for _ in 0..10_000 {
            let g = 2.0 * (p[0] - 3.0);
            opt.step(&mut p, &[g]).unwrap();
        }
        assert!((p[0] - 3.0).abs() < 1e-3, "{}", p[0]);

        let mut sgd = Optimizer::new(OptimizerKind::Sgd, 1e-2, 0.0, 1).unwrap();
        let mut q = vec![-2.0];
        for _ in 0..10_000 {
            let g = 2.0 * (q[0] - 3.0);
            sgd.step(&mut q, &[g]).unwrap();
        }
        assert!((q[0] - 3.0).abs() < 1e-3);
    }

    #[test]
    fn first_adam_step_has_size_lr() {
        let mut opt = Optimizer::new(OptimizerKind::Adam, 0.1, 0.0, 2).unwrap();
        let mut p = vec![0.0, 0.0];
        opt.step(&mut p, &[5.0, -1e-3]).unwrap();
        assert!((p[0] + 0.1).abs() < 1e-8);
        assert!((p[1] - 0.1).abs() < 1e-4);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(Optimizer::new(OptimizerKind::Adam, 0.0, 0.0, 1).is_err());
        assert!(Optimizer::new(OptimizerKind::Adam, 1e-3, -1.0, 1).is_err());
        let mut opt = Optimizer::new(OptimizerKind::Adam, 1e-3, 0.0, 2).unwrap();
        let mut p = vec![0.0; 2];
        assert!(opt.step(&mut p, &[1.0]).is_err());
        match opt.step(&mut p, &[0.0, f64::NAN]) {
            Err(Error::Numeric { index, .. }) => assert_eq!(index, 1),
            other => panic!("{other:?}"),
        }
    }
}
