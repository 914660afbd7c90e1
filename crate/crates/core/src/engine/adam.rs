use super::Scalar;
use crate::error::{shape, Result};

/// ADAM optimizer state for one parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl AdamState {
    pub fn new(len: usize, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: vec![0.0; len],
            v: vec![0.0; len],
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn len(&self) -> usize {
        self.m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }

    pub fn step<T: Scalar>(&mut self, weights: &mut [T], grads: &[T]) -> Result<()> {
        if weights.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(shape(format!(
                "adam state of {} entries given {} weights and {} gradients",
                self.m.len(),
                weights.len(),
                grads.len()
            )));
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for i in 0..weights.len() {
            let g = grads[i].as_f64();
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let mhat = self.m[i] / c1;
            let vhat = self.v[i] / c2;
            let w = weights[i].as_f64() - self.lr * mhat / (vhat.sqrt() + self.eps);
            weights[i] = T::from_f64(w);
        }
        Ok(())
    }
}
