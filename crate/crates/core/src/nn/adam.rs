use super::tensor::Param;
use crate::error::{Error, Result};

/// Bias-corrected Adam moments for an ordered list of parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl Default for AdamState {
    fn default() -> Self {
        AdamState::new(0.9, 0.999, 1e-8)
    }
}

impl AdamState {
    pub fn new(beta1: f64, beta2: f64, eps: f64) -> Self {
        AdamState { beta1, beta2, eps, step: 0, first: Vec::new(), second: Vec::new() }
    }

    /// One update of every parameter from its accumulated gradient.
    pub fn step(&mut self, params: &mut [&mut Param], lr: f64) -> Result<()> {
        if !(lr > 0.0) {
            return Err(Error::Config(format!("learning rate {lr}")));
        }
        for p in params.iter() {
            if let Some(i) = p.grad.iter().position(|g| !g.is_finite()) {
                return Err(Error::NonFinite(format!("gradient of {}[{i}]", p.name)));
            }
        }
        if self.first.is_empty() {
            self.first = params.iter().map(|p| vec![0.0; p.len()]).collect();
            self.second = self.first.clone();
        }
        if self.first.len() != params.len() || self.first.iter().zip(params.iter()).any(|(m, p)| m.len() != p.len()) {
            return Err(Error::Shape("parameter set changed between Adam steps".into()));
        }
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        for ((p, m), v) in params.iter_mut().zip(&mut self.first).zip(&mut self.second) {
            for k in 0..p.value.len() {
                let g = p.grad[k];
                m[k] = self.beta1 * m[k] + (1.0 - self.beta1) * g;
                v[k] = self.beta2 * v[k] + (1.0 - self.beta2) * g * g;
                let mh = m[k] / bc1;
                let vh = v[k] / bc2;
                p.value[k] -= lr * mh / (vh.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}
