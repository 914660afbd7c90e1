use crate::error::{shape, Result};

/// Per-channel mean of a set of target vectors.
pub fn mean_predictor(targets: &[Vec<f32>]) -> Result<Vec<f64>> {
    let first = targets.first().ok_or_else(|| shape("mean predictor of an empty target set"))?;
    let mut m = vec![0.0; first.len()];
    for t in targets {
        if t.len() != m.len() {
            return Err(shape("target vectors differ in length"));
        }
        for (a, v) in m.iter_mut().zip(t) {
            *a += *v as f64;
        }
    }
    for a in &mut m {
        *a /= targets.len() as f64;
    }
    Ok(m)
}

/// Root-mean-square error over all positions and channels.
pub fn rmse(pred: &[Vec<f32>], targets: &[Vec<f32>]) -> Result<f64> {
    if pred.len() != targets.len() || pred.is_empty() {
        return Err(shape(format!("{} predictions for {} targets", pred.len(), targets.len())));
    }
    let mut s = 0.0;
    let mut n = 0usize;
    for (p, t) in pred.iter().zip(targets) {
        if p.len() != t.len() {
            return Err(shape("prediction and target lengths differ"));
        }
        for (a, b) in p.iter().zip(t) {
            let d = (*a as f64) - (*b as f64);
            s += d * d;
        }
        n += t.len();
    }
    Ok((s / n.max(1) as f64).sqrt())
}

/// RMSE of the constant mean predictor on `targets`.
pub fn mean_predictor_rmse(targets: &[Vec<f32>]) -> Result<f64> {
    let m = mean_predictor(targets)?;
    let mut s = 0.0;
    for t in targets {
        for (v, mu) in t.iter().zip(&m) {
            s += (*v as f64 - mu).powi(2);
        }
    }
    Ok((s / (targets.len() * m.len()).max(1) as f64).sqrt())
}

/// `rmse(pred, targets) / normalizer`, undefined when the normalizer is zero.
pub fn normalized_rmse(pred: &[Vec<f32>], targets: &[Vec<f32>], normalizer: f64) -> Result<Option<f64>> {
    let e = rmse(pred, targets)?;
    Ok((normalizer > 0.0).then(|| e / normalizer))
}
