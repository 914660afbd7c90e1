use rayon::prelude::*;

use super::{Scalar, Tensor};
use crate::error::{shape, Result};

/// Kernel and bias for one output row: weights `(C_out, C_in, k_h, k_w)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RowKernel<T = f32> {
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub weights: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Scalar> RowKernel<T> {
    pub fn zeros(cout: usize, cin: usize, kernel_h: usize, kernel_w: usize) -> Self {
        Self {
            kernel_h,
            kernel_w,
            weights: vec![T::zero(); cout * cin * kernel_h * kernel_w],
            bias: vec![T::zero(); cout],
        }
    }

    #[inline]
    pub fn index(&self, cin: usize, o: usize, c: usize, i: usize, j: usize) -> usize {
        ((o * cin + c) * self.kernel_h + i) * self.kernel_w + j
    }
}

/// Convolution whose weights are shared along each row but untied across
/// rows. Output row `y` is kernel `rows[y]` centered on input row `y`,
/// evaluated at every column. Columns wrap around (the azimuth is periodic)
/// and rows read past the top or bottom clamp to the polar rows.
#[derive(Debug, Clone, PartialEq)]
pub struct RowUntiedConv<T = f32> {
    pub in_channels: usize,
    pub out_channels: usize,
    pub dilation: usize,
    /// Horizontal wraparound; when off, columns outside the image read zero.
    pub wrap: bool,
    pub rows: Vec<RowKernel<T>>,
}

#[derive(Debug, Clone)]
pub struct RowConvGrads<T> {
    pub input: Tensor<T>,
    pub rows: Vec<RowKernel<T>>,
}

/// `out[x] += w * inp[x + off]` with either circular or zero boundary.
#[inline]
fn axpy_shift<T: Scalar>(out: &mut [T], inp: &[T], w: T, off: isize, wrap: bool) {
    let n = inp.len();
    if wrap {
        let s = off.rem_euclid(n as isize) as usize;
        let (head, tail) = out.split_at_mut(n - s);
        for (o, &i) in head.iter_mut().zip(&inp[s..]) {
            *o += w * i;
        }
        for (o, &i) in tail.iter_mut().zip(&inp[..s]) {
            *o += w * i;
        }
    } else {
        let lo = (-off).max(0) as usize;
        let hi = (n as isize - off).min(n as isize);
        if hi > lo as isize {
            let hi = hi as usize;
            let src = &inp[(lo as isize + off) as usize..(hi as isize + off) as usize];
            for (o, &i) in out[lo..hi].iter_mut().zip(src) {
                *o += w * i;
            }
        }
    }
}

/// `sum_x a[x] * inp[x + off]` with the same boundary rule.
#[inline]
fn dot_shift<T: Scalar>(a: &[T], inp: &[T], off: isize, wrap: bool) -> T {
    let n = inp.len();
    if wrap {
        let s = off.rem_euclid(n as isize) as usize;
        let h: T = a[..n - s].iter().zip(&inp[s..]).map(|(&x, &y)| x * y).sum();
        let t: T = a[n - s..].iter().zip(&inp[..s]).map(|(&x, &y)| x * y).sum();
        h + t
    } else {
        let lo = (-off).max(0) as usize;
        let hi = (n as isize - off).min(n as isize);
        if hi <= lo as isize {
            return T::zero();
        }
        let hi = hi as usize;
        let src = &inp[(lo as isize + off) as usize..(hi as isize + off) as usize];
        a[lo..hi].iter().zip(src).map(|(&x, &y)| x * y).sum()
    }
}

impl<T: Scalar> RowUntiedConv<T> {
    pub fn new(in_channels: usize, out_channels: usize, dilation: usize, rows: Vec<RowKernel<T>>) -> Result<Self> {
        let layer = Self {
            in_channels,
            out_channels,
            dilation,
            wrap: true,
            rows,
        };
        layer.validate()?;
        Ok(layer)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dilation == 0 {
            return Err(shape("dilation must be at least 1"));
        }
        for (y, r) in self.rows.iter().enumerate() {
            if r.kernel_h % 2 == 0 || r.kernel_w % 2 == 0 {
                return Err(shape(format!("row {y}: kernel dims must be odd")));
            }
            let n = self.out_channels * self.in_channels * r.kernel_h * r.kernel_w;
            if r.weights.len() != n || r.bias.len() != self.out_channels {
                return Err(shape(format!("row {y}: weight count does not match its shape")));
            }
        }
        Ok(())
    }

    pub fn height(&self) -> usize {
        self.rows.len()
    }

    pub fn parameter_count(&self) -> usize {
        self.rows
            .iter()
            .map(|r| r.weights.len() + r.bias.len())
            .sum()
    }

    #[inline]
    fn source_row(&self, y: usize, i: usize, kh: usize, h: usize) -> usize {
        let r = y as isize + (self.dilation * i) as isize - (self.dilation * (kh - 1) / 2) as isize;
        r.clamp(0, h as isize - 1) as usize
    }

    #[inline]
    fn column_offset(&self, j: usize, kw: usize) -> isize {
        (self.dilation * j) as isize - (self.dilation * (kw - 1) / 2) as isize
    }

    fn check_input(&self, input: &Tensor<T>) -> Result<()> {
        if input.channels() != self.in_channels || input.height() != self.rows.len() {
            return Err(shape(format!(
                "row-untied conv expects {} channels x {} rows, got {}x{}",
                self.in_channels,
                self.rows.len(),
                input.channels(),
                input.height()
            )));
        }
        Ok(())
    }

    fn forward_row(&self, input: &Tensor<T>, y: usize) -> Vec<T> {
        let w = input.width();
        let h = input.height();
        let k = &self.rows[y];
        let mut out = vec![T::zero(); self.out_channels * w];
        for o in 0..self.out_channels {
            let orow = &mut out[o * w..(o + 1) * w];
            orow.fill(k.bias[o]);
            for c in 0..self.in_channels {
                for i in 0..k.kernel_h {
                    let irow = input.row(c, self.source_row(y, i, k.kernel_h, h));
                    for j in 0..k.kernel_w {
                        let wv = k.weights[k.index(self.in_channels, o, c, i, j)];
                        axpy_shift(orow, irow, wv, self.column_offset(j, k.kernel_w), self.wrap);
                    }
                }
            }
        }
        out
    }

    pub fn forward(&self, input: &Tensor<T>) -> Result<Tensor<T>> {
        self.check_input(input)?;
        let (h, w) = (input.height(), input.width());
        let rows: Vec<Vec<T>> = (0..h)
            .into_par_iter()
            .map(|y| self.forward_row(input, y))
            .collect();
        let mut out = Tensor::zeros(self.out_channels, h, w);
        for (y, r) in rows.iter().enumerate() {
            for o in 0..self.out_channels {
                out.row_mut(o, y).copy_from_slice(&r[o * w..(o + 1) * w]);
            }
        }
        out.debug_check_finite();
        Ok(out)
    }

    /// Output channels at a single position.
    pub fn eval_at(&self, input: &Tensor<T>, x: usize, y: usize) -> Result<Vec<T>> {
        self.check_input(input)?;
        let (h, w) = (input.height(), input.width());
        let k = &self.rows[y];
        let mut out = k.bias.clone();
        for c in 0..self.in_channels {
            for i in 0..k.kernel_h {
                let irow = input.row(c, self.source_row(y, i, k.kernel_h, h));
                for j in 0..k.kernel_w {
                    let ix = x as isize + self.column_offset(j, k.kernel_w);
                    let v = if self.wrap {
                        irow[ix.rem_euclid(w as isize) as usize]
                    } else if ix < 0 || ix >= w as isize {
                        continue;
                    } else {
                        irow[ix as usize]
                    };
                    for (o, acc) in out.iter_mut().enumerate() {
                        *acc += k.weights[k.index(self.in_channels, o, c, i, j)] * v;
                    }
                }
            }
        }
        Ok(out)
    }

    pub fn backward(&self, input: &Tensor<T>, grad_out: &Tensor<T>) -> Result<RowConvGrads<T>> {
        self.check_input(input)?;
        let (h, w) = (input.height(), input.width());
        if grad_out.dims() != (self.out_channels, h, w) {
            return Err(shape("row conv output gradient has the wrong dims"));
        }
        let mut gin = Tensor::zeros(self.in_channels, h, w);
        let mut grows: Vec<RowKernel<T>> = self
            .rows
            .iter()
            .map(|k| RowKernel::zeros(self.out_channels, self.in_channels, k.kernel_h, k.kernel_w))
            .collect();
        for y in 0..h {
            let k = &self.rows[y];
            let gk = &mut grows[y];
            for o in 0..self.out_channels {
                let g = grad_out.row(o, y);
                gk.bias[o] = g.iter().copied().sum();
                for c in 0..self.in_channels {
                    for i in 0..k.kernel_h {
                        let sy = self.source_row(y, i, k.kernel_h, h);
                        for j in 0..k.kernel_w {
                            let idx = k.index(self.in_channels, o, c, i, j);
                            let off = self.column_offset(j, k.kernel_w);
                            gk.weights[idx] = gk.weights[idx] + dot_shift(g, input.row(c, sy), off, self.wrap);
                            axpy_shift(gin.row_mut(c, sy), g, k.weights[idx], -off, self.wrap);
                        }
                    }
                }
            }
        }
        Ok(RowConvGrads {
            input: gin,
            rows: grows,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::gradcheck::{assert_grad_close, numeric_gradient, probe, random_tensor, random_vec};
    use crate::engine::Conv2d;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_layer(rng: &mut ChaCha8Rng, cin: usize, cout: usize, shapes: &[(usize, usize)], dilation: usize) -> RowUntiedConv<f64> {
        let rows = shapes
            .iter()
            .map(|&(kh, kw)| RowKernel {
                kernel_h: kh,
                kernel_w: kw,
                weights: random_vec(rng, cout * cin * kh * kw),
                bias: random_vec(rng, cout),
            })
            .collect();
        RowUntiedConv::new(cin, cout, dilation, rows).unwrap()
    }

    #[test]
    fn tied_rows_match_conv2d_in_the_interior() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let w = random_vec::<f64>(&mut rng, 2 * 3 * 9);
        let b = random_vec::<f64>(&mut rng, 2);
        let conv = Conv2d::new(3, 2, 3, 3, w.clone(), b.clone()).unwrap();
        let rows = vec![
            RowKernel {
                kernel_h: 3,
                kernel_w: 3,
                weights: w,
                bias: b
            };
            8
        ];
        let mut layer = RowUntiedConv::new(3, 2, 1, rows).unwrap();
        layer.wrap = false;
        let x = random_tensor::<f64>(&mut rng, 3, 8, 12);
        let a = conv.forward(&x).unwrap();
        let r = layer.forward(&x).unwrap();
        for o in 0..2 {
            for y in 1..7 {
                for xx in 0..12 {
                    assert!((a.get(o, y, xx) - r.get(o, y, xx)).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn circular_shift_equivariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let shapes = [(3, 3), (5, 7), (3, 5), (5, 3), (3, 3), (5, 5)];
        let layer = random_layer(&mut rng, 2, 3, &shapes, 2);
        let x = random_tensor::<f64>(&mut rng, 2, 6, 16);
        let y = layer.forward(&x).unwrap();
        for shift in [1, 5, 15] {
            let ys = layer.forward(&x.roll_columns(shift)).unwrap();
            assert_eq!(ys, y.roll_columns(shift));
        }
    }

    #[test]
    fn eval_at_matches_forward() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let layer = random_layer(&mut rng, 2, 3, &[(3, 5), (5, 3), (3, 3), (5, 7)], 1);
        let x = random_tensor::<f64>(&mut rng, 2, 4, 10);
        let y = layer.forward(&x).unwrap();
        for (xx, yy) in [(0, 0), (9, 3), (4, 1)] {
            let v = layer.eval_at(&x, xx, yy).unwrap();
            for o in 0..3 {
                assert!((v[o] - y.get(o, yy, xx)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn plan_mismatch_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let layer = random_layer(&mut rng, 2, 3, &[(3, 3); 4], 1);
        assert!(layer.forward(&Tensor::zeros(2, 5, 10)).is_err());
        assert!(layer.forward(&Tensor::zeros(1, 4, 10)).is_err());
        let bad = RowKernel::<f64> {
            kernel_h: 3,
            kernel_w: 3,
            weights: vec![0.0; 5],
            bias: vec![0.0; 3],
        };
        assert!(RowUntiedConv::new(2, 3, 1, vec![bad]).is_err());
    }

    #[test]
    fn gradient_check_mixed_rows() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let shapes = [(3, 3), (5, 3), (3, 5), (5, 5), (3, 7)];
        for dilation in [1, 2] {
            let layer = random_layer(&mut rng, 2, 2, &shapes, dilation);
            let x = random_tensor::<f64>(&mut rng, 2, 5, 9);
            let g = random_tensor::<f64>(&mut rng, 2, 5, 9);
            let grads = layer.backward(&x, &g).unwrap();
            let fd = numeric_gradient(x.data(), 1e-6, |v| {
                let xt = Tensor::from_vec(2, 5, 9, v.to_vec()).unwrap();
                probe(&layer.forward(&xt).unwrap(), &g)
            });
            assert_grad_close(grads.input.data(), &fd, 1e-3);
            for y in [0, 3, 4] {
                let fd = numeric_gradient(&layer.rows[y].weights, 1e-6, |v| {
                    let mut l = layer.clone();
                    l.rows[y].weights = v.to_vec();
                    probe(&l.forward(&x).unwrap(), &g)
                });
                assert_grad_close(&grads.rows[y].weights, &fd, 1e-3);
                let fd = numeric_gradient(&layer.rows[y].bias, 1e-6, |v| {
                    let mut l = layer.clone();
                    l.rows[y].bias = v.to_vec();
                    probe(&l.forward(&x).unwrap(), &g)
                });
                assert_grad_close(&grads.rows[y].bias, &fd, 1e-3);
            }
        }
    }
}
