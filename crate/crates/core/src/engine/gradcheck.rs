//! Central finite-difference helpers for checking hand-written backward passes.

use rand::Rng;

use super::{Scalar, Tensor};

/// Largest elementwise relative error, with magnitudes below `1e-4` treated
/// as `1e-4` so that near-zero entries compare absolutely.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(1e-4))
        .fold(0.0, f64::max)
}

/// Central differences of a scalar function with respect to every entry of `x`.
pub fn numeric_gradient(x: &[f64], eps: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut buf = x.to_vec();
    (0..x.len())
        .map(|i| {
            buf[i] = x[i] + eps;
            let up = f(&buf);
            buf[i] = x[i] - eps;
            let down = f(&buf);
            buf[i] = x[i];
            (up - down) / (2.0 * eps)
        })
        .collect()
}

pub fn random_vec<T: Scalar>(rng: &mut impl Rng, n: usize) -> Vec<T> {
    (0..n).map(|_| T::from_f64(rng.gen_range(-1.0..1.0))).collect()
}

pub fn random_tensor<T: Scalar>(rng: &mut impl Rng, c: usize, h: usize, w: usize) -> Tensor<T> {
    Tensor::from_vec(c, h, w, random_vec(rng, c * h * w)).expect("dims match")
}

/// `sum(a * b)`: the scalar probe whose gradient with respect to `a` is `b`.
pub fn probe<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> f64 {
    a.data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| x.as_f64() * y.as_f64())
        .sum()
}

#[cfg(test)]
pub(crate) fn assert_grad_close(analytic: &[f64], numeric: &[f64], tol: f64) {
    let e = max_relative_error(analytic, numeric);
    assert!(e < tol, "relative gradient error {e}");
}
