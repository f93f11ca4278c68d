use super::tensor::Tensor;
use crate::error::{ensure, Result};

/// Adam with bias correction. Moment buffers are allocated on the first
/// step, zero-initialised, and stay aligned with the parameter list.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub step_count: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    first_moment: Vec<Vec<f64>>,
    second_moment: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(lr: f64) -> Self {
        Self::with_betas(lr, 0.9, 0.999, 1e-8)
    }

    pub fn with_betas(lr: f64, beta1: f64, beta2: f64, epsilon: f64) -> Self {
        Self {
            step_count: 0,
            lr,
            beta1,
            beta2,
            epsilon,
            first_moment: Vec::new(),
            second_moment: Vec::new(),
        }
    }

    pub fn first_moment(&self) -> &[Vec<f64>] {
        &self.first_moment
    }

    pub fn second_moment(&self) -> &[Vec<f64>] {
        &self.second_moment
    }

    /// Applies one update to every parameter from its gradient buffer.
    /// Parameters without a gradient are treated as having zero gradient.
    pub fn step(&mut self, params: &mut [Tensor]) -> Result<()> {
        ensure!(self.lr > 0.0, Config, "learning rate must be positive");
        if self.step_count == 0 && self.first_moment.is_empty() {
            self.first_moment = params.iter().map(|p| vec![0.0; p.len()]).collect();
            self.second_moment = self.first_moment.clone();
        }
        ensure!(
            self.first_moment.len() == params.len(),
            Dimension,
            "optimizer tracks {} parameters, got {}",
            self.first_moment.len(),
            params.len()
        );
        for (i, p) in params.iter().enumerate() {
            ensure!(
                self.first_moment[i].len() == p.len(),
                Dimension,
                "parameter {i} has {} values, optimizer buffer has {}",
                p.len(),
                self.first_moment[i].len()
            );
        }
        self.step_count += 1;
        let t = self.step_count as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for (i, p) in params.iter_mut().enumerate() {
            let Some(grad) = p.grad().map(<[f64]>::to_vec) else {
                continue;
            };
            let m = &mut self.first_moment[i];
            let v = &mut self.second_moment[i];
            for (j, value) in p.data_mut().iter_mut().enumerate() {
                let g = grad[j];
                m[j] = self.beta1 * m[j] + (1.0 - self.beta1) * g;
                v[j] = self.beta2 * v[j] + (1.0 - self.beta2) * g * g;
                let m_hat = m[j] / bc1;
                let v_hat = v[j] / bc2;
                *value -= self.lr * m_hat / (v_hat.sqrt() + self.epsilon);
            }
        }
        Ok(())
    }
}
