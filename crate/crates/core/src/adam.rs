//! Adam without weight decay.

use crate::error::{Error, Result};
use crate::net::ParamTensor;
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(Error::Config(format!("learning_rate must be finite and >= 0, got {}", self.learning_rate)));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::Config(format!("{name} must lie in [0, 1), got {b}")));
            }
        }
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return Err(Error::Config(format!("epsilon must be finite and > 0, got {}", self.epsilon)));
        }
        Ok(())
    }
}

/// First and second moment estimates, one buffer per parameter tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T> {
    pub config: AdamConfig,
    pub timestep: u64,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(config: AdamConfig, params: &[ParamTensor<T>]) -> Result<Self> {
        config.validate()?;
        Ok(AdamState {
            config,
            timestep: 0,
            m: params.iter().map(|p| vec![T::zero(); p.data.len()]).collect(),
            v: params.iter().map(|p| vec![T::zero(); p.data.len()]).collect(),
        })
    }

    pub fn first_moment(&self, tensor: usize) -> &[T] {
        &self.m[tensor]
    }

    pub fn second_moment(&self, tensor: usize) -> &[T] {
        &self.v[tensor]
    }

    /// One update. Tensors with a `None` gradient are left untouched. Nothing
    /// is modified if any gradient or second-moment term is non-finite.
    pub fn step(&mut self, params: &mut [ParamTensor<T>], grads: &[Option<Vec<T>>]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::InvalidInput(format!(
                "optimizer tracks {} tensors, got {} parameters and {} gradients",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            let Some(g) = g else { continue };
            if g.len() != p.data.len() || self.m[i].len() != p.data.len() {
                return Err(Error::InvalidInput(format!(
                    "tensor {}: {} gradient values for {} parameters",
                    p.name,
                    g.len(),
                    p.data.len()
                )));
            }
            if g.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteGradient {
                    layer: p.name.clone(),
                    statistic: "gradient",
                });
            }
            if g.iter().any(|&v| !(v * v).is_finite()) {
                return Err(Error::NonFiniteGradient {
                    layer: p.name.clone(),
                    statistic: "second_moment",
                });
            }
        }

        self.timestep += 1;
        let c = &self.config;
        let t = self.timestep as i32;
        let lr = T::from_f64_lossy(c.learning_rate);
        let (b1, b2) = (T::from_f64_lossy(c.beta1), T::from_f64_lossy(c.beta2));
        let (one_b1, one_b2) = (T::from_f64_lossy(1.0 - c.beta1), T::from_f64_lossy(1.0 - c.beta2));
        let corr1 = T::from_f64_lossy(1.0 - c.beta1.powi(t));
        let corr2 = T::from_f64_lossy(1.0 - c.beta2.powi(t));
        let eps = T::from_f64_lossy(c.epsilon);
        for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let Some(g) = g else { continue };
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for j in 0..g.len() {
                m[j] = b1 * m[j] + one_b1 * g[j];
                v[j] = b2 * v[j] + one_b2 * g[j] * g[j];
                let m_hat = m[j] / corr1;
                let v_hat = v[j] / corr2;
                p.data[j] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}
