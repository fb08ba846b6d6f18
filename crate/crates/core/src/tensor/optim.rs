//! Parameters and the optimizer.

use std::collections::BTreeMap;

use super::Tensor;
use crate::error::{Error, Result};

/// A named leaf tensor tracked by an optimizer. Frozen parameters keep
/// their bytes across any number of optimizer steps.
#[derive(Clone)]
pub struct Parameter {
    pub tensor: Tensor,
    pub name: String,
    pub frozen: bool,
}

impl Parameter {
    pub fn new(name: impl Into<String>, tensor: Tensor) -> Self {
        tensor.set_requires_grad(true);
        Parameter { tensor, name: name.into(), frozen: false }
    }
}

#[derive(Clone, Copy, Debug)]
pub enum UpdateRule {
    /// Adam with decoupled weight decay.
    Adam { beta1: f64, beta2: f64, eps: f64 },
    /// Plain gradient descent; mirrors the literal update rule in tests.
    Sgd,
}

pub struct Optimizer {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub rule: UpdateRule,
    step: u64,
    // first/second moments, keyed by parameter name; non-frozen only
    moments: BTreeMap<String, (Vec<f64>, Vec<f64>)>,
}

impl Optimizer {
    pub fn adam(learning_rate: f64, weight_decay: f64) -> Self {
        Optimizer {
            learning_rate,
            weight_decay,
            rule: UpdateRule::Adam { beta1: 0.9, beta2: 0.999, eps: 1e-8 },
            step: 0,
            moments: BTreeMap::new(),
        }
    }

    pub fn sgd(learning_rate: f64) -> Self {
        Optimizer {
            learning_rate,
            weight_decay: 0.0,
            rule: UpdateRule::Sgd,
            step: 0,
            moments: BTreeMap::new(),
        }
    }

    /// Apply one update. Frozen parameters are left bitwise untouched;
    /// gradients of every listed parameter are cleared afterward.
    pub fn step(&mut self, params: &[Parameter]) -> Result<()> {
        self.step += 1;
        for p in params {
            if p.frozen {
                continue;
            }
            let grad = p.tensor.grad().ok_or_else(|| {
                Error::Usage(format!("parameter '{}' has no gradient", p.name))
            })?;
            let mut data = p.tensor.data();
            match self.rule {
                UpdateRule::Sgd => {
                    for (w, g) in data.iter_mut().zip(&grad) {
                        *w -= self.learning_rate * (g + self.weight_decay * *w);
                    }
                }
                UpdateRule::Adam { beta1, beta2, eps } => {
                    let (m, v) = self
                        .moments
                        .entry(p.name.clone())
                        .or_insert_with(|| (vec![0.0; data.len()], vec![0.0; data.len()]));
                    let bc1 = 1.0 - beta1.powi(self.step as i32);
                    let bc2 = 1.0 - beta2.powi(self.step as i32);
                    for i in 0..data.len() {
                        m[i] = beta1 * m[i] + (1.0 - beta1) * grad[i];
                        v[i] = beta2 * v[i] + (1.0 - beta2) * grad[i] * grad[i];
                        let m_hat = m[i] / bc1;
                        let v_hat = v[i] / bc2;
                        data[i] -= self.learning_rate * self.weight_decay * data[i];
                        data[i] -= self.learning_rate * m_hat / (v_hat.sqrt() + eps);
                    }
                }
            }
            p.tensor.set_data(data);
        }
        for p in params {
            p.tensor.zero_grad();
        }
        Ok(())
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn has_moments_for(&self, name: &str) -> bool {
        self.moments.contains_key(name)
    }
}
