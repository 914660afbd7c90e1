use super::{Scalar, Tensor};
use crate::error::{shape, Result};

/// Mean squared error and its gradient `2 (pred - target) / N`.
pub fn l2_loss<T: Scalar>(pred: &Tensor<T>, target: &Tensor<T>) -> Result<(f64, Tensor<T>)> {
    pred.same_dims(target)?;
    let (loss, grad) = l2_loss_slice(pred.data(), target.data())?;
    Ok((
        loss,
        Tensor::from_vec(pred.channels(), pred.height(), pred.width(), grad)?,
    ))
}

pub fn l2_loss_slice<T: Scalar>(pred: &[T], target: &[T]) -> Result<(f64, Vec<T>)> {
    if pred.len() != target.len() || pred.is_empty() {
        return Err(shape(format!(
            "loss over {} predictions and {} targets",
            pred.len(),
            target.len()
        )));
    }
    let n = pred.len() as f64;
    let mut loss = 0.0;
    let grad = pred
        .iter()
        .zip(target)
        .map(|(&p, &t)| {
            let d = p.as_f64() - t.as_f64();
            loss += d * d;
            T::from_f64(2.0 * d / n)
        })
        .collect();
    Ok((loss / n, grad))
}
