use super::{Scalar, Tensor};
use crate::error::{shape, Result};

/// Spatial boundary handling of planar layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Padding {
    /// Zero padding of `dilation * (k - 1) / 2`; stride-1 layers preserve size.
    Same,
    /// No padding; only windows fully inside the input are evaluated.
    Valid,
}

/// Planar 2-D cross-correlation with stride and dilation.
///
/// Weights are `(C_out, C_in, k_h, k_w)` row-major. Kernel dims must be odd
/// so that same padding is symmetric.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d<T = f32> {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub stride: usize,
    pub dilation: usize,
    pub padding: Padding,
    pub weights: Vec<T>,
    pub bias: Vec<T>,
}

#[derive(Debug, Clone)]
pub struct Conv2dGrads<T> {
    pub input: Tensor<T>,
    pub weights: Vec<T>,
    pub bias: Vec<T>,
}

/// `out[lo..hi] += w * inp[lo + off..hi + off]`, restricted to indices valid in both.
#[inline]
fn axpy_offset<T: Scalar>(out: &mut [T], inp: &[T], w: T, off: isize) {
    let lo = (-off).max(0) as usize;
    let hi = (inp.len() as isize - off).min(out.len() as isize);
    if hi <= lo as isize {
        return;
    }
    let hi = hi as usize;
    let src = &inp[(lo as isize + off) as usize..(hi as isize + off) as usize];
    for (o, &i) in out[lo..hi].iter_mut().zip(src) {
        *o += w * i;
    }
}

#[inline]
fn dot_offset<T: Scalar>(a: &[T], inp: &[T], off: isize) -> T {
    let lo = (-off).max(0) as usize;
    let hi = (inp.len() as isize - off).min(a.len() as isize);
    if hi <= lo as isize {
        return T::zero();
    }
    let hi = hi as usize;
    let src = &inp[(lo as isize + off) as usize..(hi as isize + off) as usize];
    a[lo..hi].iter().zip(src).map(|(&x, &y)| x * y).sum()
}

impl<T: Scalar> Conv2d<T> {
    pub fn new(
        in_channels: usize,
        out_channels: usize,
        kernel_h: usize,
        kernel_w: usize,
        weights: Vec<T>,
        bias: Vec<T>,
    ) -> Result<Self> {
        let c = Self {
            in_channels,
            out_channels,
            kernel_h,
            kernel_w,
            stride: 1,
            dilation: 1,
            padding: Padding::Same,
            weights,
            bias,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn with_stride(mut self, stride: usize) -> Self {
        self.stride = stride;
        self
    }

    pub fn with_dilation(mut self, dilation: usize) -> Self {
        self.dilation = dilation;
        self
    }

    pub fn with_padding(mut self, padding: Padding) -> Self {
        self.padding = padding;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.kernel_h % 2 == 0 || self.kernel_w % 2 == 0 {
            return Err(shape("convolution kernels must have odd dims"));
        }
        if self.stride == 0 || self.dilation == 0 {
            return Err(shape("stride and dilation must be at least 1"));
        }
        let n = self.out_channels * self.in_channels * self.kernel_h * self.kernel_w;
        if self.weights.len() != n || self.bias.len() != self.out_channels {
            return Err(shape(format!(
                "conv weights {} (want {n}), bias {} (want {})",
                self.weights.len(),
                self.bias.len(),
                self.out_channels
            )));
        }
        Ok(())
    }

    #[inline]
    fn widx(&self, o: usize, c: usize, i: usize, j: usize) -> usize {
        ((o * self.in_channels + c) * self.kernel_h + i) * self.kernel_w + j
    }

    fn pads(&self) -> (usize, usize) {
        match self.padding {
            Padding::Same => (
                self.dilation * (self.kernel_h - 1) / 2,
                self.dilation * (self.kernel_w - 1) / 2,
            ),
            Padding::Valid => (0, 0),
        }
    }

    pub fn output_dims(&self, h: usize, w: usize) -> (usize, usize) {
        let (ph, pw) = self.pads();
        let eh = self.dilation * (self.kernel_h - 1);
        let ew = self.dilation * (self.kernel_w - 1);
        let oh = (h + 2 * ph).saturating_sub(eh);
        let ow = (w + 2 * pw).saturating_sub(ew);
        let f = |n: usize| if n == 0 { 0 } else { (n - 1) / self.stride + 1 };
        (f(oh), f(ow))
    }

    fn check_input(&self, input: &Tensor<T>) -> Result<()> {
        if input.channels() != self.in_channels {
            return Err(shape(format!(
                "conv expects {} input channels, got {}",
                self.in_channels,
                input.channels()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, input: &Tensor<T>) -> Result<Tensor<T>> {
        self.check_input(input)?;
        let (h, w) = (input.height(), input.width());
        let (oh, ow) = self.output_dims(h, w);
        let (ph, pw) = self.pads();
        let (s, d) = (self.stride, self.dilation);
        let mut out = Tensor::zeros(self.out_channels, oh, ow);
        for o in 0..self.out_channels {
            out.channel_mut(o).fill(self.bias[o]);
            for c in 0..self.in_channels {
                for i in 0..self.kernel_h {
                    for j in 0..self.kernel_w {
                        let wv = self.weights[self.widx(o, c, i, j)];
                        if wv == T::zero() {
                            continue;
                        }
                        for oy in 0..oh {
                            let iy = (oy * s + d * i) as isize - ph as isize;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            let irow = input.row(c, iy as usize);
                            let orow = out.row_mut(o, oy);
                            let off = (d * j) as isize - pw as isize;
                            if s == 1 {
                                axpy_offset(orow, irow, wv, off);
                            } else {
                                for (ox, ov) in orow.iter_mut().enumerate() {
                                    let ix = (ox * s) as isize + off;
                                    if ix >= 0 && ix < w as isize {
                                        *ov += wv * irow[ix as usize];
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        out.debug_check_finite();
        Ok(out)
    }

    pub fn backward(&self, input: &Tensor<T>, grad_out: &Tensor<T>) -> Result<Conv2dGrads<T>> {
        self.check_input(input)?;
        let (h, w) = (input.height(), input.width());
        let (oh, ow) = self.output_dims(h, w);
        if grad_out.dims() != (self.out_channels, oh, ow) {
            return Err(shape("conv output gradient has the wrong dims"));
        }
        let (ph, pw) = self.pads();
        let (s, d) = (self.stride, self.dilation);
        let mut gin = Tensor::zeros(self.in_channels, h, w);
        let mut gw = vec![T::zero(); self.weights.len()];
        let mut gb = vec![T::zero(); self.out_channels];
        for o in 0..self.out_channels {
            gb[o] = grad_out.channel(o).iter().copied().sum();
            for c in 0..self.in_channels {
                for i in 0..self.kernel_h {
                    for j in 0..self.kernel_w {
                        let k = self.widx(o, c, i, j);
                        let wv = self.weights[k];
                        let mut acc = T::zero();
                        for oy in 0..oh {
                            let iy = (oy * s + d * i) as isize - ph as isize;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            let iy = iy as usize;
                            let g = grad_out.row(o, oy);
                            let off = (d * j) as isize - pw as isize;
                            if s == 1 {
                                acc += dot_offset(g, input.row(c, iy), off);
                                // grad_in[ox + off] += w * g[ox]
                                axpy_offset(gin.row_mut(c, iy), g, wv, -off);
                            } else {
                                for (ox, &gv) in g.iter().enumerate() {
                                    let ix = (ox * s) as isize + off;
                                    if ix >= 0 && ix < w as isize {
                                        acc += gv * input.get(c, iy, ix as usize);
                                        let cur = gin.get(c, iy, ix as usize);
                                        gin.set(c, iy, ix as usize, cur + wv * gv);
                                    }
                                }
                            }
                        }
                        gw[k] = acc;
                    }
                }
            }
        }
        Ok(Conv2dGrads {
            input: gin,
            weights: gw,
            bias: gb,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::gradcheck::{assert_grad_close, random_tensor, random_vec};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_kernel() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random_tensor::<f32>(&mut rng, 2, 6, 7);
        let mut w = vec![0.0f32; 2 * 2 * 9];
        w[4] = 1.0; // o0 <- c0 center
        w[27 + 4] = 1.0; // o1 <- c1 center
        let conv = Conv2d::new(2, 2, 3, 3, w, vec![0.0; 2]).unwrap();
        assert_eq!(conv.forward(&x).unwrap(), x);
    }

    #[test]
    fn ones_kernel_on_constant() {
        let x = Tensor::filled(1, 5, 5, 2.0f32);
        let conv = Conv2d::new(1, 1, 3, 3, vec![1.0; 9], vec![0.0]).unwrap();
        let y = conv.forward(&x).unwrap();
        assert_eq!(y.get(0, 2, 2), 18.0);
        assert_eq!(y.get(0, 0, 0), 8.0);
    }

    #[test]
    fn strided_and_valid_dims() {
        let conv = Conv2d::new(1, 1, 3, 3, vec![0.0f32; 9], vec![0.0]).unwrap();
        assert_eq!(conv.clone().with_stride(2).output_dims(224, 224), (112, 112));
        assert_eq!(conv.clone().with_padding(Padding::Valid).output_dims(10, 8), (8, 6));
        assert_eq!(
            conv.with_dilation(2).with_padding(Padding::Valid).output_dims(10, 8),
            (6, 4)
        );
        assert!(Conv2d::new(1, 1, 2, 3, vec![0.0f32; 6], vec![0.0]).is_err());
        assert!(Conv2d::new(1, 1, 3, 3, vec![0.0f32; 8], vec![0.0]).is_err());
    }

    #[test]
    fn channel_mismatch() {
        let conv = Conv2d::new(2, 1, 3, 3, vec![0.0f32; 18], vec![0.0]).unwrap();
        assert!(conv.forward(&Tensor::zeros(3, 4, 4)).is_err());
    }

    fn check_grads(stride: usize, dilation: usize, padding: Padding) {
        let mut rng = ChaCha8Rng::seed_from_u64(7 + stride as u64 * 3 + dilation as u64);
        let conv = Conv2d::new(
            2,
            3,
            3,
            5,
            random_vec::<f64>(&mut rng, 3 * 2 * 15),
            random_vec(&mut rng, 3),
        )
        .unwrap()
        .with_stride(stride)
        .with_dilation(dilation)
        .with_padding(padding);
        let x = random_tensor::<f64>(&mut rng, 2, 8, 8 + 2 * dilation);
        let y = conv.forward(&x).unwrap();
        let g = random_tensor::<f64>(&mut rng, y.channels(), y.height(), y.width());
        let grads = conv.backward(&x, &g).unwrap();
        let loss = |c: &Conv2d<f64>, x: &Tensor<f64>| -> f64 {
            let y = c.forward(x).unwrap();
            y.data().iter().zip(g.data()).map(|(a, b)| a * b).sum()
        };
        let eps = 1e-6;
        let fd_in: Vec<f64> = (0..x.len())
            .map(|i| {
                let mut xp = x.clone();
                xp.data_mut()[i] += eps;
                let mut xm = x.clone();
                xm.data_mut()[i] -= eps;
                (loss(&conv, &xp) - loss(&conv, &xm)) / (2.0 * eps)
            })
            .collect();
        assert_grad_close(grads.input.data(), &fd_in, 1e-3);
        let fd_w: Vec<f64> = (0..conv.weights.len())
            .map(|i| {
                let mut cp = conv.clone();
                cp.weights[i] += eps;
                let mut cm = conv.clone();
                cm.weights[i] -= eps;
                (loss(&cp, &x) - loss(&cm, &x)) / (2.0 * eps)
            })
            .collect();
        assert_grad_close(&grads.weights, &fd_w, 1e-3);
        let fd_b: Vec<f64> = (0..3)
            .map(|i| {
                let mut cp = conv.clone();
                cp.bias[i] += eps;
                let mut cm = conv.clone();
                cm.bias[i] -= eps;
                (loss(&cp, &x) - loss(&cm, &x)) / (2.0 * eps)
            })
            .collect();
        assert_grad_close(&grads.bias, &fd_b, 1e-3);
    }

    #[test]
    fn gradient_check_same() {
        check_grads(1, 1, Padding::Same);
    }

    #[test]
    fn gradient_check_dilated_valid() {
        check_grads(1, 2, Padding::Valid);
    }

    #[test]
    fn gradient_check_strided() {
        check_grads(2, 1, Padding::Same);
    }
}
