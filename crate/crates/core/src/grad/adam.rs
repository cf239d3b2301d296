use super::tensor::ParamTensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Coupled L2 term added to the gradient before the moment updates.
    pub weight_decay: f64,
}

impl AdamConfig {
    pub fn new(learning_rate: f64, weight_decay: f64) -> Self {
        AdamConfig {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weight_decay,
        }
    }
}

/// Adam with bias correction.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam<S> {
    pub config: AdamConfig,
    step: u64,
    first: Vec<Vec<S>>,
    second: Vec<Vec<S>>,
}

impl<S: Scalar> Adam<S> {
    pub fn new(config: AdamConfig) -> Self {
        Adam {
            config,
            step: 0,
            first: Vec::new(),
            second: Vec::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// One update over `params` using their accumulated gradients. The
    /// parameter list must keep the same order and shapes across calls.
    pub fn step(&mut self, mut params: Vec<&mut ParamTensor<S>>) -> Result<()> {
        if let Some(p) = params.iter().find(|p| p.grad.iter().any(|g| !g.is_finite())) {
            return Err(Error::Training(format!(
                "non-finite gradient in parameter of shape {:?}",
                p.shape
            )));
        }
        if self.first.is_empty() {
            self.first = params.iter().map(|p| vec![S::zero(); p.len()]).collect();
            self.second = self.first.clone();
        }
        if self.first.len() != params.len() || self.first.iter().zip(&params).any(|(m, p)| m.len() != p.len()) {
            return Err(Error::Contract("optimizer state does not match parameter shapes".into()));
        }
        self.step += 1;
        let c = &self.config;
        let (b1, b2) = (S::of(c.beta1), S::of(c.beta2));
        let lr = S::of(c.learning_rate);
        let eps = S::of(c.epsilon);
        let wd = S::of(c.weight_decay);
        let bc1 = S::of(1.0 - c.beta1.powf(self.step as f64));
        let bc2 = S::of(1.0 - c.beta2.powf(self.step as f64));
        for ((p, m), v) in params.iter_mut().zip(&mut self.first).zip(&mut self.second) {
            for k in 0..p.values.len() {
                let g = p.grad[k] + wd * p.values[k];
                m[k] = b1 * m[k] + (S::one() - b1) * g;
                v[k] = b2 * v[k] + (S::one() - b2) * g * g;
                let m_hat = m[k] / bc1;
                let v_hat = v[k] / bc2;
                p.values[k] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}
