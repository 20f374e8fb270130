//! First-order preconditioning and quasi-Newton refinement on flat parameter
//! vectors.

mod lbfgs;
mod wolfe;

use thiserror::Error;

pub use lbfgs::{lbfgs_direction, lbfgs_step, lbfgs_update, LbfgsState, LbfgsStep};
pub use wolfe::{wolfe_line_search, LineSearchFailure, LineSearchResult, WolfeParams};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OptimError {
    #[error("gradient entry {index} is not finite ({value})")]
    NonFiniteGradient { index: usize, value: f64 },
    #[error("length mismatch: {what} has {got} entries, expected {expected}")]
    Length { what: &'static str, expected: usize, got: usize },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub t: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub config: AdamConfig,
}

impl AdamState {
    pub fn new(n_params: usize, config: AdamConfig) -> Self {
        Self { t: 0, m: vec![0.0; n_params], v: vec![0.0; n_params], config }
    }

    /// Bias-corrected Adam update of `params` in place.
    pub fn step(&mut self, grad: &[f64], params: &mut [f64]) -> Result<(), OptimError> {
        let n = self.m.len();
        for (what, got) in [("gradient", grad.len()), ("params", params.len())] {
            if got != n {
                return Err(OptimError::Length { what, expected: n, got });
            }
        }
        if let Some(index) = grad.iter().position(|g| !g.is_finite()) {
            return Err(OptimError::NonFiniteGradient { index, value: grad[index] });
        }
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        self.t += 1;
        let c1 = 1.0 - beta1.powi(self.t as i32);
        let c2 = 1.0 - beta2.powi(self.t as i32);
        for i in 0..n {
            let g = grad[i];
            self.m[i] = beta1 * self.m[i] + (1.0 - beta1) * g;
            self.v[i] = beta2 * self.v[i] + (1.0 - beta2) * g * g;
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
        Ok(())
    }
}

pub fn adam_step(state: &mut AdamState, grad: &[f64], params: &mut [f64]) -> Result<(), OptimError> {
    state.step(grad, params)
}
