//! Adam parameter updates with bias correction.

use super::ops::NnError;
use super::tensor::Tensor;

/// Optimizer hyperparameters shared across all tensors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamHyper {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        Self { lr: 1e-4, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

impl AdamHyper {
    pub fn with_lr(lr: f64) -> Self {
        Self { lr, ..Self::default() }
    }
}

/// Per-tensor optimizer state: first and second moment estimates plus the
/// step counter that drives bias correction.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    m: Tensor,
    v: Tensor,
    t: u64,
}

impl AdamState {
    pub fn new(shape: &[usize]) -> Self {
        Self { m: Tensor::zeros(shape), v: Tensor::zeros(shape), t: 0 }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// One Adam update:
    ///   m ← β₁m + (1−β₁)g,  v ← β₂v + (1−β₂)g²,
    ///   θ ← θ − lr · (m / (1−β₁ᵗ)) / (√(v / (1−β₂ᵗ)) + ε).
    /// The step counter increments on every call, including zero-gradient
    /// ones.
    pub fn step(
        &mut self,
        params: &mut Tensor,
        grads: &Tensor,
        hp: &AdamHyper,
    ) -> Result<(), NnError> {
        if params.shape() != self.m.shape() || grads.shape() != self.m.shape() {
            return Err(NnError::ShapeMismatch(format!(
                "adam state {:?} got params {:?} and grads {:?}",
                self.m.shape(),
                params.shape(),
                grads.shape()
            )));
        }
        self.t += 1;
        let bc1 = 1.0 - hp.beta1.powi(self.t as i32);
        let bc2 = 1.0 - hp.beta2.powi(self.t as i32);
        let (m, v, p, g) =
            (self.m.data_mut(), self.v.data_mut(), params.data_mut(), grads.data());
        for i in 0..p.len() {
            m[i] = hp.beta1 * m[i] + (1.0 - hp.beta1) * g[i];
            v[i] = hp.beta2 * v[i] + (1.0 - hp.beta2) * g[i] * g[i];
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            p[i] -= hp.lr * m_hat / (v_hat.sqrt() + hp.epsilon);
        }
        Ok(())
    }
}
