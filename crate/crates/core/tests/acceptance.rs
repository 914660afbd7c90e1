//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails. Pass criterion numbers as arguments to run a
//! subset, e.g. `cargo test --test acceptance -- 1 7`.

use std::process::ExitCode;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sphconv_core::baselines::{evaluate, run_method, BaselineKind, EvalReport, MethodConfig};
use sphconv_core::distill::synth::synth_image;
use sphconv_core::distill::{
    analytic_first_layer, exact_maps, finetune, normalize_input, pretrain_all, FinetuneStage, Lattice, OracleMaps,
    PretrainData, Schedule, SphConvNetwork, TargetCamera, TrainConfig,
};
use sphconv_core::engine::gradcheck::{max_relative_error, numeric_gradient, probe, random_tensor, random_vec};
use sphconv_core::engine::{
    l2_loss, relu, relu_backward, BatchNorm, Conv2d, MaxPool, Padding, RowKernel, RowUntiedConv, Tensor,
};
use sphconv_core::geometry::{
    backproject_footprint, camera_sampling_map, equirect_to_sphere, sphere_to_equirect, EquirectImage,
    SphericalCoord, TangentCamera,
};
use sphconv_core::netspec::{
    mac_count_method, ConvSpec, CostConfig, ForwardOptions, LayerSpec, MethodCost, NetworkSpec,
};
use sphconv_core::planner::{plan_extents, plan_kernels, KernelPlan, PlanConfig};

type Outcome = Result<(bool, String), String>;

const THETAS: [f64; 5] = [18.0, 36.0, 54.0, 72.0, 90.0];

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn noise_image(rng: &mut ChaCha8Rng, h: usize) -> EquirectImage {
    let data = (0..3 * h * 2 * h).map(|_| rng.gen_range(-1.0f32..1.0)).collect();
    EquirectImage::new(3, h, data).expect("dims match")
}

fn single_conv(seed: u64, cout: usize) -> NetworkSpec {
    let mut spec = NetworkSpec {
        name: format!("rand{seed}"),
        input_channels: 3,
        channel_means: vec![0.0; 3],
        layers: vec![LayerSpec::Conv(ConvSpec::new("conv1", 3, 3, cout))],
    };
    spec.randomize_weights(seed);
    spec
}

fn analytic_exactness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let h = 128;
    let images: Vec<EquirectImage> = (0..10).map(|_| noise_image(&mut rng, h)).collect();
    let mut worst: f64 = 0.0;
    for k in 0..10u64 {
        let spec = single_conv(100 + k, 4 + (k as usize % 3) * 2);
        let camera = TargetCamera {
            fov: rng.gen_range(30.0..90.0),
            width: rng.gen_range(32..160),
        };
        let layer = analytic_first_layer(&spec, &camera, h, None).map_err(err)?;
        for img in &images {
            let want = &exact_maps(img, &spec, &camera, 1).map_err(err)?.layers[0];
            let got = layer.forward(img.tensor()).map_err(err)?;
            let se: f64 = got
                .data()
                .iter()
                .zip(want.data())
                .map(|(a, b)| (*a as f64 - *b as f64).powi(2))
                .sum();
            worst = worst.max((se / want.len() as f64).sqrt());
        }
    }
    Ok((worst < 1e-4, format!("worst RMSE {worst:.3e} over 100 layer/image pairs (< 1e-4)")))
}

fn vgg_plan() -> Result<(NetworkSpec, KernelPlan), String> {
    let spec = NetworkSpec::vgg16();
    let cfg = PlanConfig {
        height: 320,
        max_kernel: (7, 7),
        fov: 65.5,
        tangent_width: 640,
    };
    let plan = plan_kernels(&spec, &cfg).map_err(err)?;
    Ok((spec, plan))
}

/// Share of the target footprint inside the planned receptive field,
/// counted directly from the footprint pixels.
fn count_coverage(plan: &KernelPlan, conv: usize, y: usize) -> Result<f64, String> {
    let c = &plan.config;
    let l = &plan.conv_layers()[conv];
    let pitch = 2.0 * (c.fov.to_radians() / 2.0).tan() / c.tangent_width as f64;
    let center = SphericalCoord::new(180.0 * y as f64 / c.height as f64, 0.0).map_err(err)?;
    let cam = TangentCamera::with_pitch(center, pitch, l.receptive_field).map_err(err)?;
    let w = 2 * c.height;
    let fp = backproject_footprint(&cam, w, c.height).map_err(err)?;
    let e = plan_extents(plan, conv).map_err(err)?[y];
    let inside = fp
        .pixels()
        .iter()
        .filter(|&&(px, py)| {
            let py = py as i64;
            let dx = px as i64;
            let in_cols = e.chi - e.clo + 1 >= w as i64
                || (e.clo..=e.chi).any(|o| o.rem_euclid(w as i64) == dx);
            py >= e.lo && py <= e.hi && in_cols
        })
        .count();
    Ok(inside as f64 / fp.len() as f64)
}

fn plan_validity(plan: &KernelPlan) -> Outcome {
    let removed = plan.removed_pools();
    let retained = plan.retained_pools();
    let h = plan.height();
    let mut low = Vec::new();
    let mut clamped = 0;
    let mut checked = 0;
    for (i, l) in plan.conv_layers().iter().enumerate() {
        for y in 0..h {
            if l.clamped[y] {
                clamped += 1;
                continue;
            }
            if l.coverage[y] < 0.95 {
                low.push(format!("{} row {y}: {:.3}", l.name, l.coverage[y]));
            }
            // recount a sample of rows from the raw footprint
            if y % 16 == 5 {
                checked += 1;
                let c = count_coverage(plan, i, y)?;
                if c < 0.95 || (c - l.coverage[y]).abs() > 1e-12 {
                    low.push(format!("{} row {y}: recount {c:.3} vs {:.3}", l.name, l.coverage[y]));
                }
            }
        }
    }
    let sym = plan.is_mirror_symmetric();
    let ok = removed == 3 && retained == 1 && low.is_empty() && sym;
    let mut d = format!(
        "{removed} pools removed, {retained} retained, mirror symmetric {sym}, {clamped} clamped rows, \
         {checked} rows recounted"
    );
    if !low.is_empty() {
        d.push_str(&format!(", below 95%: {}", low.join("; ")));
    }
    Ok((ok, d))
}

fn cost_ratio(spec: &NetworkSpec, plan: &KernelPlan) -> Outcome {
    let h = plan.height();
    let cfg = CostConfig {
        height: Some(h),
        positions: Some(40 * h as u64),
        patch: Some(plan.config.tangent_width),
        plan: Some(plan),
        ..Default::default()
    };
    let exact = mac_count_method(MethodCost::Exact, spec, &cfg).map_err(err)?.total as f64;
    let sph = mac_count_method(MethodCost::SphConv, spec, &cfg).map_err(err)?.total as f64;
    let ratio = exact / sph;
    Ok((
        ratio >= 100.0,
        format!("exact {exact:.3e} MACs, sphconv {sph:.3e} MACs, ratio {ratio:.1} (published figure about 400)"),
    ))
}

struct Desk {
    spec: NetworkSpec,
    camera: TargetCamera,
    train: Vec<EquirectImage>,
    train_maps: Vec<OracleMaps>,
    test: Vec<EquirectImage>,
    test_maps: Vec<OracleMaps>,
    pretrained: SphConvNetwork,
    cfg: TrainConfig,
}

impl Desk {
    fn build() -> Result<Self, String> {
        let spec = NetworkSpec::toy(2024);
        let pc = PlanConfig {
            height: 128,
            max_kernel: (7, 7),
            fov: 45.0,
            tangent_width: 64,
        };
        let plan = plan_kernels(&spec, &pc).map_err(err)?;
        let camera = TargetCamera::from(&pc);
        let image = |i: u64| normalize_input(&synth_image(3, 128, i), &spec).map_err(err);
        let train: Vec<EquirectImage> = (0..32).map(|i| image(1000 + i)).collect::<Result<_, _>>()?;
        let test: Vec<EquirectImage> = (0..8).map(|i| image(5000 + i)).collect::<Result<_, _>>()?;
        let maps = |v: &[EquirectImage]| -> Result<Vec<OracleMaps>, String> {
            v.iter().map(|x| exact_maps(x, &spec, &camera, 3).map_err(err)).collect()
        };
        let train_maps = maps(&train)?;
        let test_maps = maps(&test)?;
        let cfg = TrainConfig {
            batch_size: 256,
            pretrain_plain: Schedule::new(0.01, 0.1, 1000, 2000),
            pretrain_bn: Schedule::new(0.01, 0.1, 1000, 2000),
            finetune: vec![FinetuneStage {
                layer: "conv3".into(),
                schedule: Schedule::new(1e-4, 0.1, 250, 500),
            }],
            lattice: Lattice::default(),
            checkpoint_interval: 500,
            holdout: 0.1,
            seed: 7,
        };
        let data = PretrainData::new(&plan, &train_maps).map_err(err)?;
        let (pretrained, _) = pretrain_all(&plan, &spec, &camera, &data, &cfg).map_err(err)?;
        Ok(Self {
            spec,
            camera,
            train,
            train_maps,
            test,
            test_maps,
            pretrained,
            cfg,
        })
    }

    fn methods<'a>(&'a self, finetuned: Option<&'a SphConvNetwork>) -> MethodConfig<'a> {
        MethodConfig {
            spec: &self.spec,
            camera: self.camera,
            n_layers: 3,
            spacing: Some(1),
            face: None,
            pretrained: Some(&self.pretrained),
            finetuned,
        }
    }
}

fn top(r: &EvalReport, m: BaselineKind, theta: f64) -> Result<f64, String> {
    r.get(m, "conv3", theta).ok_or_else(|| format!("no {m} error at {theta}"))
}

fn distillation_ordering(d: &Desk) -> Outcome {
    let cols = d.cfg.lattice.columns(256);
    let kinds = [BaselineKind::Direct, BaselineKind::SphConvPre, BaselineKind::OptSphConv];
    let r = evaluate(&kinds, &d.test, &d.test_maps, &d.methods(None), &THETAS, &cols).map_err(err)?;
    let mut ok = true;
    let mut cells = Vec::new();
    for t in THETAS {
        let (dir, pre, opt) = (
            top(&r, BaselineKind::Direct, t)?,
            top(&r, BaselineKind::SphConvPre, t)?,
            top(&r, BaselineKind::OptSphConv, t)?,
        );
        ok &= opt <= pre && pre < dir && pre < 1.0;
        cells.push(format!("{t}: opt {opt:.3} pre {pre:.3} direct {dir:.3}"));
    }
    Ok((ok, cells.join(", ")))
}

fn finetune_non_regression(d: &Desk) -> Outcome {
    let tensors: Vec<Tensor<f32>> = d.train.iter().map(|i| i.tensor().clone()).collect();
    let (tuned, _) = finetune(&d.pretrained, &tensors, &d.train_maps, &d.cfg).map_err(err)?;
    let cols = d.cfg.lattice.columns(256);
    let kinds = [BaselineKind::SphConvPre, BaselineKind::SphConv];
    let mut means = Vec::new();
    for (imgs, maps) in [(&d.train, &d.train_maps), (&d.test, &d.test_maps)] {
        let r = evaluate(&kinds, imgs, maps, &d.methods(Some(&tuned)), &THETAS, &cols).map_err(err)?;
        let pre = r.mean(BaselineKind::SphConvPre, "conv3").ok_or("no pretrained error")?;
        let post = r.mean(BaselineKind::SphConv, "conv3").ok_or("no fine-tuned error")?;
        means.push((pre, post));
    }
    let (pre, post) = means[0];
    Ok((
        post <= 1.01 * pre,
        format!(
            "mean conv3 error on training images {pre:.4} -> {post:.4}, on held-out images {:.4} -> {:.4}",
            means[1].0, means[1].1
        ),
    ))
}

fn baseline_sanity(d: &Desk) -> Outcome {
    let cfg = d.methods(None);
    let pos = d.cfg.lattice.positions(256, 128);
    // interp computes its lattice values by the per-position oracle here,
    // exact reads the dense maps
    let mut worst: f64 = 0.0;
    for (img, maps) in d.test.iter().zip(&d.test_maps).take(2) {
        let a = run_method(BaselineKind::Interp, img, &cfg, None, &pos).map_err(err)?;
        let b = run_method(BaselineKind::Exact, img, &cfg, Some(maps), &pos).map_err(err)?;
        for (x, y) in a.iter().flatten().flatten().zip(b.iter().flatten().flatten()) {
            worst = worst.max((x - y).abs() as f64);
        }
    }
    let cols = d.cfg.lattice.columns(256);
    let r = evaluate(&[BaselineKind::Exact], &d.test, &d.test_maps, &cfg, &THETAS, &cols).map_err(err)?;
    let exact_zero = r.rows.iter().all(|row| row.normalized_rmse == Some(0.0));
    let mut errs = Vec::new();
    for s in [16, 8, 4, 2, 1] {
        let c = MethodConfig { spacing: Some(s), ..cfg };
        let r = evaluate(&[BaselineKind::Interp], &d.test, &d.test_maps, &c, &THETAS, &cols).map_err(err)?;
        errs.push((s, r.mean(BaselineKind::Interp, "conv3").ok_or("no interp error")?));
    }
    let monotone = errs.windows(2).all(|w| w[1].1 <= 1.05 * w[0].1);
    let trend: Vec<String> = errs.iter().map(|(s, e)| format!("S={s}: {e:.4}")).collect();
    Ok((
        worst < 1e-5 && exact_zero && monotone,
        format!(
            "interp S=1 vs exact max diff {worst:.2e}, exact error zero {exact_zero}, interp {}",
            trend.join(" ")
        ),
    ))
}

fn record(worst: &mut f64, what: &str, analytic: &[f64], numeric: &[f64], failed: &mut Vec<String>) {
    let e = max_relative_error(analytic, numeric);
    if e >= 1e-3 {
        failed.push(format!("{what} {e:.2e}"));
    }
    *worst = worst.max(e);
}

fn engine_verification() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    let mut failed = Vec::new();
    let eps = 1e-6;

    // planar conv: every padding, a stride and a dilation
    for (stride, dilation, padding) in [(1, 1, Padding::Same), (2, 1, Padding::Same), (1, 2, Padding::Valid)] {
        let conv = Conv2d::new(2, 3, 3, 3, random_vec::<f64>(&mut rng, 54), random_vec(&mut rng, 3))
            .map_err(err)?
            .with_stride(stride)
            .with_dilation(dilation)
            .with_padding(padding);
        let x = random_tensor::<f64>(&mut rng, 2, 9, 10);
        let y = conv.forward(&x).map_err(err)?;
        let g = random_tensor::<f64>(&mut rng, y.channels(), y.height(), y.width());
        let gr = conv.backward(&x, &g).map_err(err)?;
        let fd = numeric_gradient(x.data(), eps, |v| {
            probe(&conv.forward(&Tensor::from_vec(2, 9, 10, v.to_vec()).unwrap()).unwrap(), &g)
        });
        record(&mut worst, "conv input", gr.input.data(), &fd, &mut failed);
        let fd = numeric_gradient(&conv.weights, eps, |v| {
            let mut c = conv.clone();
            c.weights = v.to_vec();
            probe(&c.forward(&x).unwrap(), &g)
        });
        record(&mut worst, "conv weights", &gr.weights, &fd, &mut failed);
        let fd = numeric_gradient(&conv.bias, eps, |v| {
            let mut c = conv.clone();
            c.bias = v.to_vec();
            probe(&c.forward(&x).unwrap(), &g)
        });
        record(&mut worst, "conv bias", &gr.bias, &fd, &mut failed);
    }

    // row-untied conv with mixed shapes
    let shapes = [(3, 3), (5, 3), (3, 7), (5, 5), (3, 5), (7, 3)];
    let rows: Vec<RowKernel<f64>> = shapes
        .iter()
        .map(|&(kh, kw)| RowKernel {
            kernel_h: kh,
            kernel_w: kw,
            weights: random_vec(&mut rng, 2 * 2 * kh * kw),
            bias: random_vec(&mut rng, 2),
        })
        .collect();
    let rc = RowUntiedConv::new(2, 2, 2, rows).map_err(err)?;
    let x = random_tensor::<f64>(&mut rng, 2, 6, 11);
    let g = random_tensor::<f64>(&mut rng, 2, 6, 11);
    let gr = rc.backward(&x, &g).map_err(err)?;
    let fd = numeric_gradient(x.data(), eps, |v| {
        probe(&rc.forward(&Tensor::from_vec(2, 6, 11, v.to_vec()).unwrap()).unwrap(), &g)
    });
    record(&mut worst, "rowconv input", gr.input.data(), &fd, &mut failed);
    for y in 0..shapes.len() {
        let fd = numeric_gradient(&rc.rows[y].weights, eps, |v| {
            let mut l = rc.clone();
            l.rows[y].weights = v.to_vec();
            probe(&l.forward(&x).unwrap(), &g)
        });
        record(&mut worst, "rowconv weights", &gr.rows[y].weights, &fd, &mut failed);
        let fd = numeric_gradient(&rc.rows[y].bias, eps, |v| {
            let mut l = rc.clone();
            l.rows[y].bias = v.to_vec();
            probe(&l.forward(&x).unwrap(), &g)
        });
        record(&mut worst, "rowconv bias", &gr.rows[y].bias, &fd, &mut failed);
    }

    // pools, relu, batch norm and the L2 loss
    for pool in [MaxPool::new(2, 2), MaxPool::dense(2, 2, true), MaxPool::dense(3, 1, false)] {
        let x = random_tensor::<f64>(&mut rng, 2, 6, 8);
        let (y, idx) = pool.forward_with_indices(&x).map_err(err)?;
        let g = random_tensor::<f64>(&mut rng, y.channels(), y.height(), y.width());
        let gin = pool.backward(&idx, &g).map_err(err)?;
        let fd = numeric_gradient(x.data(), eps, |v| {
            probe(&pool.forward(&Tensor::from_vec(2, 6, 8, v.to_vec()).unwrap()).unwrap(), &g)
        });
        record(&mut worst, "maxpool", gin.data(), &fd, &mut failed);
    }
    let x = random_tensor::<f64>(&mut rng, 2, 5, 5);
    let g = random_tensor::<f64>(&mut rng, 2, 5, 5);
    let fd = numeric_gradient(x.data(), 1e-7, |v| probe(&relu(&Tensor::from_vec(2, 5, 5, v.to_vec()).unwrap()), &g));
    record(&mut worst, "relu", relu_backward(&x, &g).map_err(err)?.data(), &fd, &mut failed);
    let mut bn = BatchNorm::<f64>::identity(3);
    bn.gamma = random_vec(&mut rng, 3);
    bn.beta = random_vec(&mut rng, 3);
    let x = random_tensor::<f64>(&mut rng, 3, 3, 4);
    let g = random_tensor::<f64>(&mut rng, 3, 3, 4);
    let (_, cache) = bn.clone().forward_train(&x).map_err(err)?;
    let gr = bn.backward(&cache, &g).map_err(err)?;
    let fd = numeric_gradient(x.data(), eps, |v| {
        probe(&bn.clone().forward_train(&Tensor::from_vec(3, 3, 4, v.to_vec()).unwrap()).unwrap().0, &g)
    });
    record(&mut worst, "batchnorm input", gr.input.data(), &fd, &mut failed);
    let fd = numeric_gradient(&bn.gamma, eps, |v| {
        let mut b = bn.clone();
        b.gamma = v.to_vec();
        probe(&b.forward_train(&x).unwrap().0, &g)
    });
    record(&mut worst, "batchnorm gamma", &gr.gamma, &fd, &mut failed);
    let fd = numeric_gradient(&bn.beta, eps, |v| {
        let mut b = bn.clone();
        b.beta = v.to_vec();
        probe(&b.forward_train(&x).unwrap().0, &g)
    });
    record(&mut worst, "batchnorm beta", &gr.beta, &fd, &mut failed);
    let a = random_tensor::<f64>(&mut rng, 2, 3, 4);
    let b = random_tensor::<f64>(&mut rng, 2, 3, 4);
    let (_, gl) = l2_loss(&a, &b).map_err(err)?;
    let fd = numeric_gradient(a.data(), eps, |v| {
        l2_loss(&Tensor::from_vec(2, 3, 4, v.to_vec()).unwrap(), &b).unwrap().0
    });
    record(&mut worst, "l2 loss", gl.data(), &fd, &mut failed);

    // a-trous: dense outputs at stride-aligned positions equal the strided ones
    let spec = NetworkSpec::toy(5);
    let mut atrous: f64 = 0.0;
    for _ in 0..5 {
        let x = random_tensor::<f64>(&mut rng, 3, 32, 40);
        let s = spec.conv_outputs(&x, 3, ForwardOptions::planar()).map_err(err)?;
        let d = spec.conv_outputs(&x, 3, ForwardOptions::a_trous(Padding::Same)).map_err(err)?;
        for (a, b) in s.iter().zip(&d) {
            let f = b.height() / a.height();
            for c in 0..a.channels() {
                for y in 0..a.height() {
                    for xx in 0..a.width() {
                        atrous = atrous.max((a.get(c, y, xx) - b.get(c, f * y, f * xx)).abs());
                    }
                }
            }
        }
    }

    // circular shift equivariance, bit for bit
    let mut shift_ok = true;
    for shift in [1, 4, 10] {
        let x = random_tensor::<f64>(&mut rng, 2, 6, 11);
        shift_ok &= rc.forward(&x.roll_columns(shift)).map_err(err)? == rc.forward(&x).map_err(err)?.roll_columns(shift);
    }
    let ok = failed.is_empty() && atrous <= 1e-6 && shift_ok;
    let mut d = format!(
        "worst gradient relative error {worst:.2e}, a-trous max diff {atrous:.2e}, shift equivariant {shift_ok}"
    );
    if !failed.is_empty() {
        d.push_str(&format!(", failing: {}", failed.join("; ")));
    }
    Ok((ok, d))
}

fn geometry_verification() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (w, h) = (640, 320);
    let mut round: f64 = 0.0;
    for _ in 0..100_000 {
        let (x, y) = (rng.gen_range(0.0..w as f64), rng.gen_range(0.0..h as f64));
        let c = equirect_to_sphere(x, y, w, h).map_err(err)?;
        let (bx, by) = sphere_to_equirect(&c, w, h);
        let dx = (bx - x).abs();
        round = round.max(dx.min(w as f64 - dx)).max((by - y).abs());
    }
    let mut sums: f64 = 0.0;
    for _ in 0..20 {
        let center = SphericalCoord::new(rng.gen_range(0.0..180.0), rng.gen_range(0.0..360.0)).map_err(err)?;
        let cam = TangentCamera::new(center, rng.gen_range(20.0..120.0), rng.gen_range(8..64)).map_err(err)?;
        let map = camera_sampling_map(&cam, w, h).map_err(err)?;
        for i in 0..map.len() {
            let s: f64 = map.pixel_taps(i).iter().map(|t| t.weight as f64).sum();
            sums = sums.max((s - 1.0).abs());
        }
    }
    let mut mirror = true;
    for y in [0usize, 1, 2, 7, 40, 100, 159] {
        let theta = 180.0 * y as f64 / h as f64;
        let fp = |t: f64| -> Result<_, String> {
            let cam = TangentCamera::new(SphericalCoord::new(t, 0.0).map_err(err)?, 30.0, 24).map_err(err)?;
            backproject_footprint(&cam, w, h).map_err(err)
        };
        mirror &= fp(theta)?.mirrored() == fp(180.0 - theta)?;
    }
    Ok((
        round < 1e-9 && sums <= 1e-6 && mirror,
        format!("round trip max error {round:.2e} px, tap sums off by {sums:.2e}, footprints mirror {mirror}"),
    ))
}

fn main() -> ExitCode {
    let only: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let want = |n: usize| only.is_empty() || only.contains(&n);
    let mut failures = 0;
    let mut report = |n: usize, title: &str, t: Instant, o: Outcome| {
        let (pass, detail) = o.unwrap_or_else(|e| (false, format!("error: {e}")));
        if !pass {
            failures += 1;
        }
        println!(
            "{} criterion {n}: {title}: {detail} [{:.1} s]",
            if pass { "PASS" } else { "FAIL" },
            t.elapsed().as_secs_f64()
        );
    };

    if want(1) {
        let t = Instant::now();
        report(1, "analytic first layer", t, analytic_exactness());
    }
    if want(2) || want(3) {
        let t = Instant::now();
        match vgg_plan() {
            Ok((spec, plan)) => {
                if want(2) {
                    report(2, "VGG-16 plan", t, plan_validity(&plan));
                }
                if want(3) {
                    report(3, "cost ratio", Instant::now(), cost_ratio(&spec, &plan));
                }
            }
            Err(e) => {
                for n in [2, 3].into_iter().filter(|n| want(*n)) {
                    report(n, "VGG-16 plan", t, Err(e.clone()));
                }
            }
        }
    }
    if want(4) || want(5) || want(6) {
        let t = Instant::now();
        match Desk::build() {
            Ok(d) => {
                println!("desk setup (plan, targets, pretraining) took {:.1} s", t.elapsed().as_secs_f64());
                if want(4) {
                    let t = Instant::now();
                    report(4, "distillation ordering", t, distillation_ordering(&d));
                }
                if want(5) {
                    let t = Instant::now();
                    report(5, "fine-tuning non-regression", t, finetune_non_regression(&d));
                }
                if want(6) {
                    let t = Instant::now();
                    report(6, "baseline sanity", t, baseline_sanity(&d));
                }
            }
            Err(e) => {
                for n in [4, 5, 6].into_iter().filter(|n| want(*n)) {
                    report(n, "desk pipeline", t, Err(e.clone()));
                }
            }
        }
    }
    if want(7) {
        let t = Instant::now();
        report(7, "engine verification", t, engine_verification());
    }
    if want(8) {
        let t = Instant::now();
        report(8, "geometry verification", t, geometry_verification());
    }
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
