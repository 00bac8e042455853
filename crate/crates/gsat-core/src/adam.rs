//! Adam optimizer with bias correction. Weight decay enters as a plain L2
//! gradient term added by the caller before the update.

use crate::error::{CoreError, Result};
use crate::matrix::DenseMatrix;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamHyper {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        AdamHyper {
            lr: 0.005,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Per-parameter optimizer state: first/second moment estimates plus a
/// strictly increasing step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    m: DenseMatrix,
    v: DenseMatrix,
    step: u64,
    pub hyper: AdamHyper,
}

impl AdamState {
    pub fn new(rows: usize, cols: usize, hyper: AdamHyper) -> Self {
        AdamState {
            m: DenseMatrix::zeros(rows, cols),
            v: DenseMatrix::zeros(rows, cols),
            step: 0,
            hyper,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One Adam update of `param` in place.
    pub fn update(&mut self, param: &mut DenseMatrix, grad: &DenseMatrix) -> Result<()> {
        if param.shape() != self.m.shape() || grad.shape() != self.m.shape() {
            return Err(CoreError::ShapeMismatch {
                op: "adam_step",
                left: param.shape(),
                right: grad.shape(),
            });
        }
        self.step += 1;
        let AdamHyper {
            lr,
            beta1,
            beta2,
            epsilon,
        } = self.hyper;
        let bc1 = 1.0 - libm::pow(beta1, self.step as f64);
        let bc2 = 1.0 - libm::pow(beta2, self.step as f64);
        let (m, v) = (self.m.data_mut(), self.v.data_mut());
        for ((p, &g), (mi, vi)) in param
            .data_mut()
            .iter_mut()
            .zip(grad.data())
            .zip(m.iter_mut().zip(v.iter_mut()))
        {
            *mi = beta1 * *mi + (1.0 - beta1) * g;
            *vi = beta2 * *vi + (1.0 - beta2) * g * g;
            let m_hat = *mi / bc1;
            let v_hat = *vi / bc2;
            *p -= lr * m_hat / (libm::sqrt(v_hat) + epsilon);
        }
        Ok(())
    }
}
