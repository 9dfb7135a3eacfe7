use ndarray::{ArrayD, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{check_shape, NnError, Result};
use crate::params::Parameters;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { learning_rate: 1e-3, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

/// Adam moments for one parameter set, one `m`/`v` pair per tensor in
/// [`Parameters::tensors`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam<T> {
    pub config: AdamConfig,
    pub m: Vec<ArrayD<T>>,
    pub v: Vec<ArrayD<T>>,
    pub t: u64,
}

impl<T: Scalar> Adam<T> {
    pub fn new<P: Parameters<T>>(config: AdamConfig, params: &P) -> Self {
        let zeros: Vec<ArrayD<T>> = params.tensors().iter().map(|(_, t)| ArrayD::zeros(t.raw_dim())).collect();
        Self { config, m: zeros.clone(), v: zeros, t: 0 }
    }

    pub fn step<P: Parameters<T>>(&mut self, params: &mut P, grads: &P) -> Result<()> {
        let grads = grads.tensors();
        let mut params = params.tensors_mut();
        if grads.len() != params.len() || params.len() != self.m.len() {
            return Err(NnError::ShapeMismatch {
                context: "adam tensor count".into(),
                expected: vec![self.m.len()],
                actual: vec![params.len(), grads.len()],
            });
        }
        for (((name, p), (_, g)), m) in params.iter().zip(&grads).zip(&self.m) {
            check_shape(&format!("adam gradient {name}"), p.shape(), g.shape())?;
            check_shape(&format!("adam moment {name}"), p.shape(), m.shape())?;
        }

        self.t += 1;
        let c = &self.config;
        let (b1, b2) = (T::of(c.beta1), T::of(c.beta2));
        let (one_b1, one_b2) = (T::of(1.0 - c.beta1), T::of(1.0 - c.beta2));
        let t = self.t as i32;
        let corr1 = T::of(1.0 - c.beta1.powi(t));
        let corr2 = T::of(1.0 - c.beta2.powi(t));
        let (lr, eps) = (T::of(c.learning_rate), T::of(c.epsilon));
        for (((_, p), (_, g)), (m, v)) in params.iter_mut().zip(&grads).zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            Zip::from(p).and(g).and(m).and(v).for_each(|p, &g, m, v| {
                *m = b1 * *m + one_b1 * g;
                *v = b2 * *v + one_b2 * g * g;
                let m_hat = *m / corr1;
                let v_hat = *v / corr2;
                *p = *p - lr * m_hat / (v_hat.sqrt() + eps);
            });
        }
        Ok(())
    }
}
