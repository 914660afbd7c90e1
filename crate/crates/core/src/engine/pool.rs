use super::{Padding, Scalar, Tensor};
use crate::error::{shape, Result};

/// Max pooling over `kernel x kernel` windows whose taps are `dilation`
/// apart. Windows are anchored at their top-left tap, `(y * stride, x * stride)`.
///
/// With [`Padding::Valid`] only windows fully inside the input are evaluated,
/// which gives the usual floor-division output size for strided pooling.
/// With [`Padding::Same`] there are `ceil(H / stride)` outputs; taps past the
/// right or bottom edge are dropped, or, when `wrap` is set, read columns
/// circularly and clamp rows to the last one.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MaxPool {
    pub kernel: usize,
    pub stride: usize,
    pub dilation: usize,
    pub padding: Padding,
    pub wrap: bool,
}

/// Flat per-channel input index of the winning tap for every output element.
#[derive(Debug, Clone, PartialEq)]
pub struct PoolIndices {
    input_dims: (usize, usize, usize),
    argmax: Vec<usize>,
}

impl MaxPool {
    pub fn new(kernel: usize, stride: usize) -> Self {
        Self {
            kernel,
            stride,
            dilation: 1,
            padding: Padding::Valid,
            wrap: false,
        }
    }

    /// Stride-1 pool for full-resolution feature maps.
    pub fn dense(kernel: usize, dilation: usize, wrap: bool) -> Self {
        Self {
            kernel,
            stride: 1,
            dilation,
            padding: Padding::Same,
            wrap,
        }
    }

    pub fn output_dims(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        if self.kernel == 0 || self.stride == 0 || self.dilation == 0 {
            return Err(shape("pool kernel, stride and dilation must be positive"));
        }
        match self.padding {
            Padding::Same => Ok((h.div_ceil(self.stride), w.div_ceil(self.stride))),
            Padding::Valid => {
                let span = self.dilation * (self.kernel - 1) + 1;
                if h < span || w < span {
                    return Err(shape(format!("{h}x{w} input is smaller than a {span}-wide pool window")));
                }
                Ok(((h - span) / self.stride + 1, (w - span) / self.stride + 1))
            }
        }
    }

    #[inline]
    fn tap_row(&self, y: usize, i: usize, h: usize) -> Option<usize> {
        let r = y * self.stride + i * self.dilation;
        if r < h {
            Some(r)
        } else if self.wrap {
            Some(h - 1)
        } else {
            None
        }
    }

    #[inline]
    fn tap_col(&self, x: usize, j: usize, w: usize) -> Option<usize> {
        let c = x * self.stride + j * self.dilation;
        if c < w {
            Some(c)
        } else if self.wrap {
            Some(c % w)
        } else {
            None
        }
    }

    pub fn forward<T: Scalar>(&self, input: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(self.forward_with_indices(input)?.0)
    }

    pub fn forward_with_indices<T: Scalar>(&self, input: &Tensor<T>) -> Result<(Tensor<T>, PoolIndices)> {
        let (c, h, w) = input.dims();
        let (oh, ow) = self.output_dims(h, w)?;
        let mut out = Tensor::zeros(c, oh, ow);
        let mut argmax = Vec::with_capacity(c * oh * ow);
        for ch in 0..c {
            let plane = input.channel(ch);
            for y in 0..oh {
                for x in 0..ow {
                    let mut best = T::neg_infinity();
                    let mut at = usize::MAX;
                    for i in 0..self.kernel {
                        let Some(r) = self.tap_row(y, i, h) else { continue };
                        for j in 0..self.kernel {
                            let Some(col) = self.tap_col(x, j, w) else { continue };
                            let v = plane[r * w + col];
                            if v > best || at == usize::MAX {
                                best = v;
                                at = r * w + col;
                            }
                        }
                    }
                    out.set(ch, y, x, best);
                    argmax.push(at);
                }
            }
        }
        Ok((
            out,
            PoolIndices {
                input_dims: (c, h, w),
                argmax,
            },
        ))
    }

    pub fn backward<T: Scalar>(&self, indices: &PoolIndices, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let (c, h, w) = indices.input_dims;
        if grad_out.len() != indices.argmax.len() || grad_out.channels() != c {
            return Err(shape("pool gradient does not match the forward pass"));
        }
        let per = grad_out.height() * grad_out.width();
        let mut gin = Tensor::zeros(c, h, w);
        for ch in 0..c {
            let g = grad_out.channel(ch);
            let idx = &indices.argmax[ch * per..(ch + 1) * per];
            let plane = gin.channel_mut(ch);
            for (&at, &gv) in idx.iter().zip(g) {
                plane[at] += gv;
            }
        }
        Ok(gin)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::gradcheck::{assert_grad_close, numeric_gradient, probe, random_tensor};
    use crate::engine::Conv2d;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn unit_kernel_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = random_tensor::<f32>(&mut rng, 2, 5, 7);
        assert_eq!(MaxPool::new(1, 1).forward(&x).unwrap(), x);
    }

    #[test]
    fn ramp_picks_window_corner() {
        let x = Tensor::from_vec(1, 4, 4, (0..16).map(|v| v as f32).collect()).unwrap();
        let y = MaxPool::new(2, 2).forward(&x).unwrap();
        assert_eq!(y.data(), &[5.0, 7.0, 13.0, 15.0]);
    }

    #[test]
    fn floor_output_size() {
        let p = MaxPool::new(2, 2);
        assert_eq!(p.output_dims(224, 224).unwrap(), (112, 112));
        assert_eq!(p.output_dims(7, 5).unwrap(), (3, 2));
        assert_eq!(MaxPool::dense(2, 4, true).output_dims(7, 5).unwrap(), (7, 5));
    }

    #[test]
    fn dense_wrapping_pool_reads_across_the_seam() {
        let x = Tensor::from_vec(1, 2, 4, vec![9.0f32, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
        let y = MaxPool::dense(2, 1, true).forward(&x).unwrap();
        assert_eq!(y.get(0, 0, 3), 9.0);
        // bottom row clamps onto itself
        assert_eq!(y.get(0, 1, 0), 0.0);
    }

    #[test]
    fn a_trous_equivalence() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let x = random_tensor::<f64>(&mut rng, 1, 16, 16);
        let w = crate::engine::gradcheck::random_vec::<f64>(&mut rng, 9);
        let conv = Conv2d::new(1, 1, 3, 3, w, vec![0.25]).unwrap();
        let strided = conv.forward(&MaxPool::new(2, 2).forward(&x).unwrap()).unwrap();
        let dense_pool = MaxPool {
            kernel: 2,
            stride: 1,
            dilation: 1,
            padding: Padding::Same,
            wrap: false,
        };
        let dense = conv
            .clone()
            .with_dilation(2)
            .forward(&dense_pool.forward(&x).unwrap())
            .unwrap();
        for y in 0..8 {
            for xx in 0..8 {
                let a = strided.get(0, y, xx);
                let b = dense.get(0, 2 * y, 2 * xx);
                assert!((a - b).abs() <= 1e-6, "({y},{xx}): {a} vs {b}");
            }
        }
    }

    #[test]
    fn gradient_check() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for pool in [MaxPool::new(2, 2), MaxPool::dense(2, 2, true), MaxPool::dense(3, 1, false)] {
            let x = random_tensor::<f64>(&mut rng, 2, 6, 8);
            let (y, idx) = pool.forward_with_indices(&x).unwrap();
            let g = random_tensor::<f64>(&mut rng, y.channels(), y.height(), y.width());
            let gin = pool.backward(&idx, &g).unwrap();
            let fd = numeric_gradient(x.data(), 1e-6, |v| {
                let xt = Tensor::from_vec(2, 6, 8, v.to_vec()).unwrap();
                probe(&pool.forward(&xt).unwrap(), &g)
            });
            assert_grad_close(gin.data(), &fd, 1e-3);
        }
    }
}
