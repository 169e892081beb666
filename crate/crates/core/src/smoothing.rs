//! Savitzky–Golay smoothing along the time axis of a control sequence.
//!
//! Each output sample is the value at that position of the least-squares
//! polynomial (degree `order`) fitted over a `window`-sample neighbourhood.
//! Near the ends the first/last full window is reused, so polynomials of
//! degree `<= order` pass through unchanged everywhere.

use serde::{Deserialize, Serialize};

use crate::dynamics::ControlSequence;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Smoothing {
    None,
    SavitzkyGolay { window: usize, order: usize },
}

impl Default for Smoothing {
    fn default() -> Self {
        Smoothing::SavitzkyGolay { window: 5, order: 2 }
    }
}

impl Smoothing {
    pub fn validate(&self, horizon: usize) -> Result<()> {
        if let Smoothing::SavitzkyGolay { window, order } = *self {
            if window % 2 == 0 || window < 3 {
                return Err(Error::usage(format!(
                    "smoothing window must be odd and >= 3, got {window}"
                )));
            }
            if order >= window {
                return Err(Error::usage(format!(
                    "smoothing order {order} must be below the window {window}"
                )));
            }
            let _ = horizon;
        }
        Ok(())
    }

    /// Smooth in place. A no-op when the sequence is shorter than the window.
    pub fn apply(&self, seq: &mut ControlSequence) {
        if let Smoothing::SavitzkyGolay { window, order } = *self {
            if seq.horizon() < window {
                return;
            }
            let filter = SavitzkyGolay::new(window, order);
            let m = seq.dim();
            let k_len = seq.horizon();
            let mut column = vec![0.0; k_len];
            for d in 0..m {
                for (k, c) in column.iter_mut().enumerate() {
                    *c = seq.get(k)[d];
                }
                let smoothed = filter.filter(&column);
                for (k, v) in smoothed.into_iter().enumerate() {
                    seq.get_mut(k)[d] = v;
                }
            }
        }
    }
}

/// Precomputed projection (hat) matrix of the local polynomial fit.
#[derive(Debug, Clone)]
pub struct SavitzkyGolay {
    window: usize,
    /// `hat[i][j]`: weight of window sample `j` in the fitted value at `i`.
    hat: Vec<Vec<f64>>,
}

impl SavitzkyGolay {
    pub fn new(window: usize, order: usize) -> Self {
        assert!(window % 2 == 1 && order < window);
        let half = (window / 2) as f64;
        let cols = order + 1;
        // Vandermonde on centred, scaled positions for conditioning.
        let x: Vec<Vec<f64>> = (0..window)
            .map(|i| {
                let t = (i as f64 - half) / half.max(1.0);
                (0..cols).map(|p| t.powi(p as i32)).collect()
            })
            .collect();
        let mut xtx = vec![vec![0.0; cols]; cols];
        for row in &x {
            for a in 0..cols {
                for b in 0..cols {
                    xtx[a][b] += row[a] * row[b];
                }
            }
        }
        let inv = invert(&xtx);
        let hat = (0..window)
            .map(|i| {
                (0..window)
                    .map(|j| {
                        let mut acc = 0.0;
                        for a in 0..cols {
                            for b in 0..cols {
                                acc += x[i][a] * inv[a][b] * x[j][b];
                            }
                        }
                        acc
                    })
                    .collect()
            })
            .collect();
        Self { window, hat }
    }

    pub fn filter(&self, signal: &[f64]) -> Vec<f64> {
        let n = signal.len();
        let w = self.window;
        if n < w {
            return signal.to_vec();
        }
        let half = w / 2;
        (0..n)
            .map(|i| {
                let (start, row) = if i < half {
                    (0, i)
                } else if i + half >= n {
                    (n - w, i + w - n)
                } else {
                    (i - half, half)
                };
                self.hat[row]
                    .iter()
                    .zip(&signal[start..start + w])
                    .map(|(h, s)| h * s)
                    .sum()
            })
            .collect()
    }
}

fn invert(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let mut m: Vec<Vec<f64>> = a.to_vec();
    let mut inv: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    for c in 0..n {
        let p = (c..n).max_by(|&i, &j| m[i][c].abs().total_cmp(&m[j][c].abs())).unwrap();
        m.swap(p, c);
        inv.swap(p, c);
        let d = m[c][c];
        for k in 0..n {
            m[c][k] /= d;
            inv[c][k] /= d;
        }
        for r in 0..n {
            if r != c {
                let f = m[r][c];
                for k in 0..n {
                    m[r][k] -= f * m[c][k];
                    inv[r][k] -= f * inv[c][k];
                }
            }
        }
    }
    inv
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn window5_order2_interior_coefficients() {
        // Classic 5-point quadratic smoothing weights: (-3, 12, 17, 12, -3)/35.
        let f = SavitzkyGolay::new(5, 2);
        let expected = [-3.0, 12.0, 17.0, 12.0, -3.0].map(|v| v / 35.0);
        for (h, e) in f.hat[2].iter().zip(expected) {
            assert!((h - e).abs() < 1e-14);
        }
    }

    #[test]
    fn quadratic_in_time_is_reproduced() {
        let k = 20;
        let rows: Vec<Vec<f64>> = (0..k)
            .map(|t| {
                let t = t as f64;
                vec![0.3 - 0.2 * t + 0.05 * t * t, -1.0 + 0.1 * t]
            })
            .collect();
        let mut seq = ControlSequence::from_rows(&rows).unwrap();
        let orig = seq.clone();
        Smoothing::SavitzkyGolay { window: 5, order: 2 }.apply(&mut seq);
        for (a, b) in seq.as_flat().iter().zip(orig.as_flat()) {
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
    }

    #[test]
    fn short_sequences_are_untouched() {
        let mut seq = ControlSequence::from_rows(&[vec![1.0], vec![-1.0], vec![1.0], vec![-1.0]]).unwrap();
        let orig = seq.clone();
        Smoothing::default().apply(&mut seq);
        assert_eq!(seq, orig);
    }

    #[test]
    fn validation() {
        assert!(Smoothing::SavitzkyGolay { window: 4, order: 2 }.validate(20).is_err());
        assert!(Smoothing::SavitzkyGolay { window: 5, order: 5 }.validate(20).is_err());
        assert!(Smoothing::default().validate(20).is_ok());
        assert!(Smoothing::None.validate(1).is_ok());
    }

    proptest! {
        #[test]
        fn polynomials_up_to_order_pass_through(
            c0 in -3.0f64..3.0, c1 in -1.0f64..1.0, c2 in -0.1f64..0.1, c3 in -0.01f64..0.01,
            len in 7usize..40,
        ) {
            let f = SavitzkyGolay::new(7, 3);
            let sig: Vec<f64> = (0..len).map(|t| {
                let t = t as f64;
                c0 + c1 * t + c2 * t * t + c3 * t * t * t
            }).collect();
            let out = f.filter(&sig);
            for (a, b) in out.iter().zip(&sig) {
                prop_assert!((a - b).abs() < 1e-8 * (1.0 + b.abs()));
            }
        }

        #[test]
        fn constant_signal_is_fixed(c in -5.0f64..5.0, len in 5usize..30) {
            let f = SavitzkyGolay::new(5, 2);
            let sig = vec![c; len];
            for v in f.filter(&sig) {
                prop_assert!((v - c).abs() < 1e-12);
            }
        }
    }
}
