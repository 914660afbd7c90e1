use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{OracleMaps, SphConvNetwork, TrainConfig};
use crate::engine::{relu, relu_backward, AdamState, PoolIndices, RowKernel, Tensor};
use crate::error::{shape, Error, Result};

/// Losses seen while fine-tuning, one entry per step.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FinetuneReport {
    pub stages: Vec<(String, Vec<f64>)>,
}

fn flatten(rows: &[&RowKernel<f32>], out: &mut Vec<f32>) {
    out.clear();
    for k in rows {
        out.extend_from_slice(&k.weights);
        out.extend_from_slice(&k.bias);
    }
}

fn unflatten(rows: &mut [&mut RowKernel<f32>], v: &[f32]) {
    let mut at = 0;
    for k in rows {
        let n = k.weights.len();
        k.weights.copy_from_slice(&v[at..at + n]);
        at += n;
        let m = k.bias.len();
        k.bias.copy_from_slice(&v[at..at + m]);
        at += m;
    }
}

/// Divergence guard: a smoothed loss above this multiple of the first
/// step's loss aborts the run.
const DIVERGENCE: f64 = 10.0;

/// Joint training of layers `1..=t` against layer `t`'s targets alone, for
/// each configured stage in turn. The analytic first layer stays fixed.
///
/// `images` are the normalized training images and `maps` their targets;
/// each step uses one image and the lattice positions of every row.
pub fn finetune(
    net: &SphConvNetwork,
    images: &[Tensor<f32>],
    maps: &[OracleMaps],
    cfg: &TrainConfig,
) -> Result<(SphConvNetwork, FinetuneReport)> {
    cfg.validate()?;
    net.validate()?;
    if images.is_empty() || images.len() != maps.len() {
        return Err(Error::MissingGroundTruth(format!("{} images for {} target sets", images.len(), maps.len())));
    }
    let mut net = net.clone();
    let mut report = FinetuneReport::default();
    let h = net.height();
    let w = 2 * h;
    let positions = cfg.lattice.positions(w, h);
    // the first layer is frozen, so its outputs are fixed per image
    let first: Vec<Tensor<f32>> = images.iter().map(|x| net.layers[0].forward(x)).collect::<Result<_>>()?;
    for (si, stage) in cfg.finetune.iter().enumerate() {
        let t = net
            .names
            .iter()
            .position(|n| *n == stage.layer)
            .ok_or_else(|| Error::MissingConfig(format!("fine-tuning target {} is not a layer", stage.layer)))?;
        if t == 0 {
            return Err(Error::MissingConfig("the first layer is analytic and cannot be a fine-tuning target".into()));
        }
        if maps.iter().any(|m| m.layers.len() <= t) {
            return Err(Error::MissingGroundTruth(format!("no targets for {}", stage.layer)));
        }
        let mut params = Vec::new();
        flatten(&net.layers[1..=t].iter().flat_map(|l| l.rows.iter()).collect::<Vec<_>>(), &mut params);
        let mut adam = AdamState::new(params.len(), stage.schedule.lr);
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ (si as u64 + 1).wrapping_mul(0x2545_f491_4f6c_dd1d));
        let mut order: Vec<usize> = Vec::new();
        let mut losses = Vec::with_capacity(stage.schedule.iterations);
        let mut smooth = 0.0;
        for it in 0..stage.schedule.iterations {
            if order.is_empty() {
                order = (0..images.len()).collect();
                order.shuffle(&mut rng);
            }
            let n = order.pop().expect("refilled above");
            // forward, keeping what the backward pass needs
            let mut pre = vec![first[n].clone()];
            let mut inputs: Vec<Tensor<f32>> = vec![images[n].clone()];
            let mut pooled: Vec<Option<PoolIndices>> = vec![None];
            for i in 1..=t {
                let x = relu(&pre[i - 1]);
                let (x, idx) = match &net.pools[i] {
                    Some(p) => {
                        let (y, idx) = p.forward_with_indices(&x)?;
                        (y, Some(idx))
                    }
                    None => (x, None),
                };
                pre.push(net.layers[i].forward(&x)?);
                inputs.push(x);
                pooled.push(idx);
            }
            let out = &pre[t];
            let target = &maps[n].layers[t];
            if target.dims() != out.dims() {
                return Err(shape(format!("{} targets do not match the network output", stage.layer)));
            }
            let c = out.channels();
            let denom = (positions.len() * c) as f64;
            let mut loss = 0.0;
            let mut g = Tensor::zeros(c, h, w);
            for &(x, y) in &positions {
                for o in 0..c {
                    let r = (out.get(o, y, x) - target.get(o, y, x)) as f64;
                    loss += r * r;
                    g.set(o, y, x, (2.0 * r / denom) as f32);
                }
            }
            loss /= denom;
            smooth = if it == 0 { loss } else { 0.9 * smooth + 0.1 * loss };
            if !loss.is_finite() || smooth > DIVERGENCE * losses.first().copied().unwrap_or(loss) {
                return Err(Error::Diverged(format!(
                    "{} step {it}: loss {loss:.4e} against {:.4e} at the start",
                    stage.layer,
                    losses.first().copied().unwrap_or(loss)
                )));
            }
            losses.push(loss);
            // backward through layers t..=1
            let mut grads: Vec<Vec<RowKernel<f32>>> = Vec::with_capacity(t);
            for i in (1..=t).rev() {
                let gr = net.layers[i].backward(&inputs[i], &g)?;
                grads.push(gr.rows);
                if i > 1 {
                    let mut gi = gr.input;
                    if let (Some(p), Some(idx)) = (&net.pools[i], &pooled[i]) {
                        gi = p.backward(idx, &gi)?;
                    }
                    g = relu_backward(&pre[i - 1], &gi)?;
                }
            }
            grads.reverse();
            let mut gv = Vec::with_capacity(params.len());
            flatten(&grads.iter().flat_map(|l| l.iter()).collect::<Vec<_>>(), &mut gv);
            adam.lr = stage.schedule.lr_at(it);
            adam.step(&mut params, &gv)?;
            unflatten(
                &mut net.layers[1..=t].iter_mut().flat_map(|l| l.rows.iter_mut()).collect::<Vec<_>>(),
                &params,
            );
        }
        report.stages.push((stage.layer.clone(), losses));
    }
    Ok((net, report))
}
