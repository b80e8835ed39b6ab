//! Parameter initialization and the Adam optimizer.

use alloc::vec::Vec;

use rand_core::RngCore;
use serde::{Deserialize, Serialize};

use crate::dense::DenseMatrix;
use crate::error::{Error, Result};
use crate::math;
use crate::rng::uniform01;

/// Glorot bound `sqrt(6 / (rows + cols))`.
pub fn glorot_bound(rows: usize, cols: usize) -> f64 {
    math::sqrt(6.0 / (rows + cols) as f64)
}

/// Uniform samples in `±glorot_bound(rows, cols)`, drawn in row-major order.
pub fn glorot_init(rows: usize, cols: usize, rng: &mut impl RngCore) -> DenseMatrix {
    let bound = glorot_bound(rows, cols);
    DenseMatrix::from_fn(rows, cols, |_, _| bound * (2.0 * uniform01(rng) - 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// L2 coefficient; the gradient gains `2·weight_decay·θ`.
    pub weight_decay: f64,
}

impl AdamConfig {
    pub fn new(lr: f64, weight_decay: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Adam {
    config: AdamConfig,
    first: Vec<DenseMatrix>,
    second: Vec<DenseMatrix>,
    step: u64,
}

impl Adam {
    /// Moment buffers shaped like `params`.
    pub fn new(config: AdamConfig, params: &[DenseMatrix]) -> Self {
        let zeros = || {
            params
                .iter()
                .map(|p| DenseMatrix::zeros(p.rows(), p.cols()))
                .collect()
        };
        Self {
            config,
            first: zeros(),
            second: zeros(),
            step: 0,
        }
    }

    pub fn config(&self) -> &AdamConfig {
        &self.config
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// One bias-corrected update. `decay[k]` says whether parameter `k`
    /// receives the L2 term.
    pub fn step(
        &mut self,
        params: &mut [DenseMatrix],
        grads: &[DenseMatrix],
        decay: &[bool],
    ) -> Result<()> {
        if params.len() != self.first.len() || grads.len() != params.len() || decay.len() != params.len() {
            return Err(Error::DimensionMismatch {
                op: "adam_step",
                expected: (self.first.len(), 1),
                got: (params.len(), grads.len()),
            });
        }
        for (k, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.shape() != self.first[k].shape() || g.shape() != p.shape() {
                return Err(Error::DimensionMismatch {
                    op: "adam_step",
                    expected: self.first[k].shape(),
                    got: if g.shape() != p.shape() { g.shape() } else { p.shape() },
                });
            }
        }
        self.step += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
            weight_decay,
        } = self.config;
        let c1 = 1.0 - libm::pow(beta1, self.step as f64);
        let c2 = 1.0 - libm::pow(beta2, self.step as f64);
        for k in 0..params.len() {
            let l2 = if decay[k] { 2.0 * weight_decay } else { 0.0 };
            let p = params[k].as_mut_slice();
            let g = grads[k].as_slice();
            let m = self.first[k].as_mut_slice();
            let v = self.second[k].as_mut_slice();
            for j in 0..p.len() {
                let gj = g[j] + l2 * p[j];
                m[j] = beta1 * m[j] + (1.0 - beta1) * gj;
                v[j] = beta2 * v[j] + (1.0 - beta2) * gj * gj;
                let m_hat = m[j] / c1;
                let v_hat = v[j] / c2;
                p[j] -= lr * m_hat / (math::sqrt(v_hat) + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    #[test]
    fn glorot_bound_8x8() {
        assert!((glorot_bound(8, 8) - 0.612_372_435_695_794_5).abs() < 1e-15);
        let w = glorot_init(8, 8, &mut seeded(1));
        assert!(w.as_slice().iter().all(|v| v.abs() <= glorot_bound(8, 8)));
        assert_eq!(w, glorot_init(8, 8, &mut seeded(1)));
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut params = vec![DenseMatrix::from_rows(&[&[1.0, -2.0, 0.5]])];
        let grads = vec![DenseMatrix::from_rows(&[&[0.3, -7.0, 1e-3]])];
        let mut adam = Adam::new(AdamConfig::new(0.005, 0.0), &params);
        let before = params[0].clone();
        adam.step(&mut params, &grads, &[true]).unwrap();
        for j in 0..3 {
            let delta = before.as_slice()[j] - params[0].as_slice()[j];
            let want = 0.005 * grads[0].as_slice()[j].signum();
            assert!((delta - want).abs() < 1e-7, "{delta} vs {want}");
        }
    }

    #[test]
    fn zero_gradient_no_decay_leaves_params() {
        let mut params = vec![DenseMatrix::filled(2, 2, 0.7)];
        let grads = vec![DenseMatrix::zeros(2, 2)];
        let mut adam = Adam::new(AdamConfig::new(0.01, 0.0), &params);
        for _ in 0..5 {
            adam.step(&mut params, &grads, &[true]).unwrap();
        }
        assert_eq!(params[0], DenseMatrix::filled(2, 2, 0.7));
    }

    #[test]
    fn decay_flag_controls_l2() {
        let mut params = vec![DenseMatrix::filled(1, 1, 1.0), DenseMatrix::filled(1, 1, 1.0)];
        let grads = vec![DenseMatrix::zeros(1, 1), DenseMatrix::zeros(1, 1)];
        let mut adam = Adam::new(AdamConfig::new(0.01, 1e-3), &params);
        adam.step(&mut params, &grads, &[true, false]).unwrap();
        assert!(params[0].get(0, 0) < 1.0);
        assert_eq!(params[1].get(0, 0), 1.0);
    }

    #[test]
    fn shape_mismatch() {
        let mut params = vec![DenseMatrix::zeros(2, 2)];
        let mut adam = Adam::new(AdamConfig::new(0.01, 0.0), &params);
        let err = adam.step(&mut params, &[DenseMatrix::zeros(2, 3)], &[true]);
        assert!(matches!(err, Err(Error::DimensionMismatch { .. })));
    }
}
