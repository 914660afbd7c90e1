use super::{Scalar, Tensor};
use crate::error::{shape, Result};

pub fn relu<T: Scalar>(input: &Tensor<T>) -> Tensor<T> {
    input.map(|v| v.max(T::zero()))
}

pub fn relu_inplace<T: Scalar>(t: &mut Tensor<T>) {
    for v in t.data_mut() {
        *v = v.max(T::zero());
    }
}

/// Gradient of [`relu`]; passes `grad` where the forward input was positive.
pub fn relu_backward<T: Scalar>(input: &Tensor<T>, grad: &Tensor<T>) -> Result<Tensor<T>> {
    input.same_dims(grad)?;
    let data = input
        .data()
        .iter()
        .zip(grad.data())
        .map(|(&x, &g)| if x > T::zero() { g } else { T::zero() })
        .collect();
    Tensor::from_vec(input.channels(), input.height(), input.width(), data)
}

pub const BN_EPS: f64 = 1e-5;

/// Per-channel batch normalization. Statistics are taken over every spatial
/// element of a channel, so a batch of `N` feature vectors can be laid out as
/// a `(C, 1, N)` tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm<T = f32> {
    pub gamma: Vec<T>,
    pub beta: Vec<T>,
    pub running_mean: Vec<T>,
    pub running_var: Vec<T>,
    pub momentum: f64,
    pub eps: f64,
}

#[derive(Debug, Clone)]
pub struct BatchNormCache<T> {
    xhat: Tensor<T>,
    inv_std: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct BatchNormGrads<T> {
    pub input: Tensor<T>,
    pub gamma: Vec<T>,
    pub beta: Vec<T>,
}

impl<T: Scalar> BatchNorm<T> {
    pub fn identity(channels: usize) -> Self {
        Self {
            gamma: vec![T::one(); channels],
            beta: vec![T::zero(); channels],
            running_mean: vec![T::zero(); channels],
            running_var: vec![T::one(); channels],
            momentum: 0.1,
            eps: BN_EPS,
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    fn check(&self, input: &Tensor<T>) -> Result<()> {
        if input.channels() != self.channels() {
            return Err(shape(format!(
                "batch norm over {} channels given {}",
                self.channels(),
                input.channels()
            )));
        }
        Ok(())
    }

    /// Inference-mode affine map `y = a * x + b` per channel.
    pub fn scale_shift(&self) -> (Vec<f64>, Vec<f64>) {
        (0..self.channels())
            .map(|c| {
                let a = self.gamma[c].as_f64() / (self.running_var[c].as_f64() + self.eps).sqrt();
                (a, self.beta[c].as_f64() - a * self.running_mean[c].as_f64())
            })
            .unzip()
    }

    pub fn forward_infer(&self, input: &Tensor<T>) -> Result<Tensor<T>> {
        self.check(input)?;
        let (a, b) = self.scale_shift();
        let mut out = input.clone();
        for c in 0..self.channels() {
            let (ac, bc) = (T::from_f64(a[c]), T::from_f64(b[c]));
            for v in out.channel_mut(c) {
                *v = ac * *v + bc;
            }
        }
        Ok(out)
    }

    /// Normalizes with batch statistics and updates the running estimates.
    pub fn forward_train(&mut self, input: &Tensor<T>) -> Result<(Tensor<T>, BatchNormCache<T>)> {
        self.check(input)?;
        let n = input.height() * input.width();
        if n == 0 {
            return Err(shape("batch norm over an empty batch"));
        }
        let mut xhat = input.clone();
        let mut out = input.clone();
        let mut inv_std = Vec::with_capacity(self.channels());
        for c in 0..self.channels() {
            let xs = input.channel(c);
            let mean = xs.iter().map(|v| v.as_f64()).sum::<f64>() / n as f64;
            let var = xs.iter().map(|v| (v.as_f64() - mean).powi(2)).sum::<f64>() / n as f64;
            let is = 1.0 / (var + self.eps).sqrt();
            inv_std.push(is);
            let (g, b) = (self.gamma[c].as_f64(), self.beta[c].as_f64());
            for ((h, o), &x) in xhat.channel_mut(c).iter_mut().zip(out.channel_mut(c).iter_mut()).zip(xs) {
                let nx = (x.as_f64() - mean) * is;
                *h = T::from_f64(nx);
                *o = T::from_f64(g * nx + b);
            }
            let m = self.momentum;
            let unbiased = if n > 1 { var * n as f64 / (n - 1) as f64 } else { var };
            self.running_mean[c] = T::from_f64((1.0 - m) * self.running_mean[c].as_f64() + m * mean);
            self.running_var[c] = T::from_f64((1.0 - m) * self.running_var[c].as_f64() + m * unbiased);
        }
        Ok((out, BatchNormCache { xhat, inv_std }))
    }

    pub fn backward(&self, cache: &BatchNormCache<T>, grad: &Tensor<T>) -> Result<BatchNormGrads<T>> {
        cache.xhat.same_dims(grad)?;
        let n = (grad.height() * grad.width()) as f64;
        let mut gin = grad.clone();
        let mut gg = vec![T::zero(); self.channels()];
        let mut gb = vec![T::zero(); self.channels()];
        for c in 0..self.channels() {
            let g = grad.channel(c);
            let xh = cache.xhat.channel(c);
            let sum_g: f64 = g.iter().map(|v| v.as_f64()).sum();
            let sum_gx: f64 = g.iter().zip(xh).map(|(a, b)| a.as_f64() * b.as_f64()).sum();
            gg[c] = T::from_f64(sum_gx);
            gb[c] = T::from_f64(sum_g);
            let k = self.gamma[c].as_f64() * cache.inv_std[c] / n;
            for ((o, &gv), &x) in gin.channel_mut(c).iter_mut().zip(g).zip(xh) {
                *o = T::from_f64(k * (n * gv.as_f64() - sum_g - x.as_f64() * sum_gx));
            }
        }
        Ok(BatchNormGrads {
            input: gin,
            gamma: gg,
            beta: gb,
        })
    }
}
