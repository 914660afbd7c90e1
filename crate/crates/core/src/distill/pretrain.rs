use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{analytic_first_layer, OracleMaps, Schedule, SphConvNetwork, TargetCamera, TrainConfig};
use crate::engine::{relu, AdamState, MaxPool, RowKernel, RowUntiedConv, Tensor};
use crate::error::{Error, Result};
use crate::netspec::{LayerSpec, NetworkSpec};
use crate::planner::KernelPlan;

/// Inputs and targets for kernel-wise pretraining, per layer and image.
///
/// The input of layer `l` is the exact layer `l - 1` map after its ReLU
/// and, where the plan keeps a pool in between, after that pool. Training a
/// kernel against it decouples every (layer, row) from all others.
#[derive(Debug, Clone)]
pub struct PretrainData {
    inputs: Vec<Vec<Tensor<f32>>>,
    targets: Vec<Vec<Tensor<f32>>>,
}

impl PretrainData {
    pub fn new(plan: &KernelPlan, maps: &[OracleMaps]) -> Result<Self> {
        let n = plan.conv_layers().len();
        let h = plan.height();
        if maps.is_empty() {
            return Err(Error::MissingGroundTruth("no training images".into()));
        }
        let have = maps.iter().map(|m| m.layers.len()).min().unwrap_or(0);
        if have < n {
            return Err(Error::MissingGroundTruth(format!("targets for {have} of {n} layers")));
        }
        if maps.iter().any(|m| m.layers.iter().any(|t| t.height() != h || t.width() != 2 * h)) {
            return Err(Error::MissingGroundTruth(format!("target maps are not {}x{h}", 2 * h)));
        }
        let mut inputs = vec![Vec::new()];
        for l in 1..n {
            let pool = plan.pool_before(l).map(|(k, d)| MaxPool::dense(k, d, true));
            let layer = maps
                .par_iter()
                .map(|m| {
                    let x = relu(&m.layers[l - 1]);
                    match &pool {
                        Some(p) => p.forward(&x),
                        None => Ok(x),
                    }
                })
                .collect::<Result<_>>()?;
            inputs.push(layer);
        }
        let targets = (0..n).map(|l| maps.iter().map(|m| m.layers[l].clone()).collect()).collect();
        Ok(Self { inputs, targets })
    }

    pub fn images(&self) -> usize {
        self.targets.first().map_or(0, |t| t.len())
    }

    /// Design matrix (with a trailing bias column) and targets of row `y` of
    /// layer `l` at the given columns of every image.
    fn design(&self, l: usize, y: usize, columns: &[usize], conv: &RowUntiedConv<f32>, shape: (usize, usize)) -> Result<(Array2<f32>, Array2<f32>)> {
        let inputs = self
            .inputs
            .get(l)
            .filter(|v| !v.is_empty())
            .ok_or_else(|| Error::MissingGroundTruth(format!("no inputs for layer {l}")))?;
        let (kh, kw) = shape;
        let cin = conv.in_channels;
        let cout = conv.out_channels;
        let d = conv.dilation as isize;
        let p = cin * kh * kw + 1;
        let n = inputs.len() * columns.len();
        let mut x = Array2::<f32>::zeros((n, p));
        let mut t = Array2::<f32>::zeros((n, cout));
        let mut r = 0;
        for (img, target) in inputs.iter().zip(&self.targets[l]) {
            if img.channels() != cin || target.channels() != cout {
                return Err(Error::MissingGroundTruth(format!("layer {l} maps have the wrong channel count")));
            }
            let (h, w) = (img.height() as isize, img.width() as isize);
            for &cx in columns {
                let mut row = x.row_mut(r);
                let mut f = 0;
                for c in 0..cin {
                    for i in 0..kh {
                        let sy = (y as isize + d * i as isize - d * (kh as isize - 1) / 2).clamp(0, h - 1) as usize;
                        let src = img.row(c, sy);
                        for j in 0..kw {
                            let sx = (cx as isize + d * j as isize - d * (kw as isize - 1) / 2).rem_euclid(w);
                            row[f] = src[sx as usize];
                            f += 1;
                        }
                    }
                }
                row[f] = 1.0;
                for o in 0..cout {
                    t[[r, o]] = target.get(o, y, cx);
                }
                r += 1;
            }
        }
        Ok((x, t))
    }
}

/// Held-out loss trajectory of one (layer, row) kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelReport {
    pub layer: usize,
    pub row: usize,
    pub samples: usize,
    /// `(iteration, held-out loss)`, starting at iteration 0.
    pub checkpoints: Vec<(usize, f64)>,
    /// Loss over the training samples before and after.
    pub initial_loss: f64,
    pub final_loss: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PretrainReport {
    pub kernels: Vec<KernelReport>,
    /// `(layer, row, reason)` for kernels left at their warm start.
    pub skipped: Vec<(usize, usize, String)>,
}

fn kernel_seed(seed: u64, l: usize, y: usize) -> u64 {
    seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ ((l as u64) << 32 | y as u64)
}

fn mse(x: &Array2<f32>, theta: &Array2<f32>, t: &Array2<f32>) -> f64 {
    if x.nrows() == 0 {
        return 0.0;
    }
    let r = x.dot(theta) - t;
    r.iter().map(|v| (*v as f64) * (*v as f64)).sum::<f64>() / r.len() as f64
}

/// Trains the kernel of row `row` of layer `layer` (at least 1) by ADAM on
/// the mean squared error against the layer's pre-activation targets,
/// starting from `init`.
pub fn pretrain_kernel(
    layer: usize,
    row: usize,
    data: &PretrainData,
    conv: &RowUntiedConv<f32>,
    init: &RowKernel<f32>,
    schedule: &Schedule,
    cfg: &TrainConfig,
) -> Result<(RowKernel<f32>, KernelReport)> {
    if layer == 0 {
        return Err(Error::InvalidPlan("the first layer is analytic".into()));
    }
    let width = data.targets[layer].first().map_or(0, |t| t.width());
    let rows = cfg.lattice.rows(conv.height());
    if !rows.contains(&row) {
        return Err(Error::MissingGroundTruth(format!("row {row} is not on the supervision lattice")));
    }
    let columns = cfg.lattice.columns(width);
    let (kh, kw) = (init.kernel_h, init.kernel_w);
    let (x, t) = data.design(layer, row, &columns, conv, (kh, kw))?;
    let (n, p) = x.dim();
    let cout = conv.out_channels;
    let mut rng = ChaCha8Rng::seed_from_u64(kernel_seed(cfg.seed, layer, row));
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let held = if cfg.holdout > 0.0 && n > 1 {
        ((n as f64 * cfg.holdout).round() as usize).clamp(1, n - 1)
    } else {
        0
    };
    let (ho, tr) = order.split_at(held);
    let (xh, th) = (x.select(Axis(0), ho), t.select(Axis(0), ho));
    let (xt, tt) = (x.select(Axis(0), tr), t.select(Axis(0), tr));

    // parameters as a (p, cout) matrix: weights of output o in column o
    let per = p - 1;
    let mut theta = Array2::<f32>::zeros((p, cout));
    for o in 0..cout {
        for f in 0..per {
            theta[[f, o]] = init.weights[o * per + f];
        }
        theta[[per, o]] = init.bias[o];
    }
    let initial_loss = mse(&xt, &theta, &tt);
    let mut checkpoints = vec![(0, mse(&xh, &theta, &th))];
    let mut adam = AdamState::new(p * cout, schedule.lr);
    let b = cfg.batch_size.min(tr.len()).max(1);
    let mut idx = vec![0usize; b];
    for it in 0..schedule.iterations {
        for v in idx.iter_mut() {
            *v = rng.gen_range(0..tt.nrows());
        }
        let xb = xt.select(Axis(0), &idx);
        let tb = tt.select(Axis(0), &idx);
        let r = xb.dot(&theta) - tb;
        let g = xb.t().dot(&r) * (2.0 / (b * cout) as f32);
        adam.lr = schedule.lr_at(it);
        adam.step(
            theta.as_slice_mut().expect("standard layout"),
            g.as_slice().expect("standard layout"),
        )?;
        if (it + 1) % cfg.checkpoint_interval == 0 || it + 1 == schedule.iterations {
            checkpoints.push((it + 1, mse(&xh, &theta, &th)));
        }
    }
    let final_loss = mse(&xt, &theta, &tt);
    if !final_loss.is_finite() {
        return Err(Error::Diverged(format!("layer {layer} row {row}")));
    }
    let mut k = RowKernel::zeros(cout, conv.in_channels, kh, kw);
    for o in 0..cout {
        for f in 0..per {
            k.weights[o * per + f] = theta[[f, o]];
        }
        k.bias[o] = theta[[per, o]];
    }
    Ok((
        k,
        KernelReport {
            layer,
            row,
            samples: n,
            checkpoints,
            initial_loss,
            final_loss,
        },
    ))
}

/// The target kernel (batch norm folded) cropped or zero-padded to `kh x kw`
/// around its center.
fn warm_start(spec: &NetworkSpec, l: usize, kh: usize, kw: usize) -> Result<RowKernel<f32>> {
    let c = spec.folded_conv(l)?;
    let (cin, cout) = (c.in_channels, c.out_channels);
    let mut k = RowKernel::zeros(cout, cin, kh, kw);
    let oi = kh as isize / 2 - c.kernel_h as isize / 2;
    let oj = kw as isize / 2 - c.kernel_w as isize / 2;
    for o in 0..cout {
        for ch in 0..cin {
            for i in 0..c.kernel_h {
                for j in 0..c.kernel_w {
                    let (ti, tj) = (i as isize + oi, j as isize + oj);
                    if ti >= 0 && tj >= 0 && (ti as usize) < kh && (tj as usize) < kw {
                        let idx = k.index(cin, o, ch, ti as usize, tj as usize);
                        k.weights[idx] = c.weights[((o * cin + ch) * c.kernel_h + i) * c.kernel_w + j] as f32;
                    }
                }
            }
        }
        k.bias[o] = c.bias[o] as f32;
    }
    Ok(k)
}

fn has_batch_norm(spec: &NetworkSpec, l: usize) -> bool {
    let li = spec.conv_layers()[l];
    matches!(spec.layers.get(li + 1), Some(LayerSpec::BatchNorm(_)))
}

/// Analytic first layer plus every other (layer, row) kernel pretrained
/// independently, in parallel.
pub fn pretrain_all(
    plan: &KernelPlan,
    spec: &NetworkSpec,
    camera: &TargetCamera,
    data: &PretrainData,
    cfg: &TrainConfig,
) -> Result<(SphConvNetwork, PretrainReport)> {
    cfg.validate()?;
    let mut net = SphConvNetwork::from_plan(plan)?;
    if net.layers.len() != spec.conv_layers().len() {
        return Err(Error::InvalidPlan("plan and network disagree on the number of convs".into()));
    }
    let h = net.height();
    net.layers[0] = analytic_first_layer(spec, camera, h, None)?;
    let tasks: Vec<(usize, usize)> = (1..net.layers.len()).flat_map(|l| (0..h).map(move |y| (l, y))).collect();
    let inits: Vec<RowKernel<f32>> = tasks
        .iter()
        .map(|&(l, y)| {
            let s = &net.layers[l].rows[y];
            warm_start(spec, l, s.kernel_h, s.kernel_w)
        })
        .collect::<Result<_>>()?;
    let results: Vec<Result<(RowKernel<f32>, KernelReport)>> = tasks
        .par_iter()
        .zip(&inits)
        .map(|(&(l, y), init)| {
            let sched = if has_batch_norm(spec, l) { &cfg.pretrain_bn } else { &cfg.pretrain_plain };
            pretrain_kernel(l, y, data, &net.layers[l], init, sched, cfg)
        })
        .collect();
    let mut report = PretrainReport::default();
    for ((&(l, y), init), r) in tasks.iter().zip(inits).zip(results) {
        match r {
            Ok((k, rep)) => {
                net.layers[l].rows[y] = k;
                report.kernels.push(rep);
            }
            Err(e @ Error::MissingGroundTruth(_)) => {
                log::warn!("layer {l} row {y} skipped: {e}");
                net.layers[l].rows[y] = init;
                report.skipped.push((l, y, e.to_string()));
            }
            Err(e) => return Err(e),
        }
    }
    Ok((net, report))
}
