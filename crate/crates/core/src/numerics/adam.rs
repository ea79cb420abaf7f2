use serde::{Deserialize, Serialize};

use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Adam optimiser state with bias-corrected moment estimates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub step_count: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(param_count: usize, lr: f64) -> Self {
        Self {
            step_count: 0,
            m: vec![0.0; param_count],
            v: vec![0.0; param_count],
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    /// Sized for `params`.
    pub fn for_params(params: &[Tensor], lr: f64) -> Self {
        Self::new(params.iter().map(Tensor::len).sum(), lr)
    }

    /// One update over `params` (laid out back to back in `m`/`v`), then
    /// zeroes every gradient.
    pub fn step(&mut self, params: &mut [Tensor]) -> Result<()> {
        let total: usize = params.iter().map(Tensor::len).sum();
        if total != self.m.len() {
            return Err(Error::State(format!(
                "optimizer sized for {} parameters, got {total}",
                self.m.len()
            )));
        }
        if let Some(i) = params.iter().position(|p| p.grad().is_none()) {
            return Err(Error::State(format!("parameter {i} has no gradient")));
        }
        self.step_count += 1;
        let t = self.step_count as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        let mut offset = 0;
        for p in params.iter_mut() {
            let grad = p.grad().expect("checked above").to_vec();
            let n = grad.len();
            let m = &mut self.m[offset..offset + n];
            let v = &mut self.v[offset..offset + n];
            for (i, w) in p.data_mut().iter_mut().enumerate() {
                let g = grad[i];
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g;
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g * g;
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                let denom = v_hat.sqrt() + self.eps;
                if denom > 0.0 {
                    *w -= self.lr * m_hat / denom;
                }
            }
            p.zero_grad();
            offset += n;
        }
        Ok(())
    }
}

/// Free-function form of [`AdamState::step`].
pub fn adam_step(params: &mut [Tensor], state: &mut AdamState) -> Result<()> {
    state.step(params)
}
