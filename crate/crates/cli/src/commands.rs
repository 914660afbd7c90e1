use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use log::{info, warn};

use sphconv_core::baselines::{evaluate, BaselineKind, MethodConfig};
use sphconv_core::distill::synth::synth_image;
use sphconv_core::distill::{finetune, normalize_input, pretrain_all, Lattice, OracleSet, PretrainData, SphConvNetwork};
use sphconv_core::geometry::EquirectImage;
use sphconv_core::netspec::{interp_spacing, mac_count_method, CostConfig, MethodCost, NetworkSpec};
use sphconv_core::planner::{plan_kernels, KernelPlan};

use crate::config::ExperimentConfig;
use crate::io::{file_name, is_test, list_images, load_equirect, load_rgb, save_png, sha256_file, Outputs};
use crate::prep::{parse_boxes, prep_pascal};
use crate::viz::export_kernel_images;

/// A loaded config plus the command-line overrides.
pub struct Ctx {
    pub cfg: ExperimentConfig,
    pub config_path: PathBuf,
    pub out: PathBuf,
    pub seed: u64,
}

impl Ctx {
    pub fn new(config: &Path, out: &Path, seed: Option<u64>) -> Result<Self> {
        let mut cfg = ExperimentConfig::load(config)?;
        if let Some(s) = seed {
            cfg.seed = s;
        }
        Ok(Self {
            seed: cfg.seed,
            cfg,
            config_path: config.to_path_buf(),
            out: out.to_path_buf(),
        })
    }

    fn outputs(&self, command: &str) -> Result<Outputs> {
        let mut o = Outputs::new(&self.out, command)?;
        o.input(&self.config_path);
        Ok(o)
    }

    /// A configured path, or the default artifact under `--out`; it must exist.
    fn artifact(&self, set: &Option<PathBuf>, default: &str, hint: &str) -> Result<PathBuf> {
        let p = set.clone().unwrap_or_else(|| self.out.join(default));
        if !p.exists() {
            bail!("{} not found; {hint}", p.display());
        }
        Ok(p)
    }

    fn network(&self, o: &mut Outputs) -> Result<NetworkSpec> {
        let p = self.cfg.paths.network.as_ref().context("paths.network is not set")?;
        if !p.exists() {
            bail!("network manifest {} not found", p.display());
        }
        o.input(p);
        NetworkSpec::load(p).with_context(|| format!("loading network {}", p.display()))
    }

    fn weighted_network(&self, o: &mut Outputs) -> Result<NetworkSpec> {
        let spec = self.network(o)?;
        if !spec.has_weights() {
            bail!("network {} has no weights; the manifest must name a weight blob", spec.name);
        }
        Ok(spec)
    }

    fn plan(&self, o: &mut Outputs) -> Result<KernelPlan> {
        let p = self.artifact(&self.cfg.paths.plan, "plan.toml", "run `sphconv plan` first")?;
        o.input(&p);
        let plan = KernelPlan::load(&p)?;
        if plan.config != self.cfg.geometry.plan_config() {
            bail!("plan {} was made for a different geometry; rerun `sphconv plan`", p.display());
        }
        Ok(plan)
    }

    fn oracle(&self, o: &mut Outputs, test: bool) -> Result<OracleSet> {
        let (set, name) = if test {
            (&self.cfg.paths.test_oracle, "oracle/test.toml")
        } else {
            (&self.cfg.paths.train_oracle, "oracle/train.toml")
        };
        let p = self.artifact(set, name, "run `sphconv oracle` first")?;
        o.input(&p);
        let s = OracleSet::load(&p)?;
        if s.camera != self.cfg.geometry.camera() || s.height() != self.cfg.geometry.height {
            bail!("targets in {} were made for a different geometry; rerun `sphconv oracle`", p.display());
        }
        Ok(s)
    }

    fn sphconv(&self, o: &mut Outputs, set: &Option<PathBuf>, name: &str, hint: &str) -> Result<SphConvNetwork> {
        let p = self.artifact(set, name, hint)?;
        o.input(&p);
        Ok(SphConvNetwork::load(&p)?)
    }

    /// Normalized frames from the images directory, by file name.
    fn frames(&self, o: &mut Outputs, names: &[String], spec: &NetworkSpec) -> Result<Vec<EquirectImage>> {
        let dir = self.cfg.paths.images.as_ref().context("paths.images is not set")?;
        names
            .iter()
            .map(|n| {
                let p = dir.join(n);
                o.input(&p);
                let img = load_equirect(&p)?;
                if img.height() != self.cfg.geometry.height {
                    bail!("{} is {} rows high, the geometry says {}", p.display(), img.height(), self.cfg.geometry.height);
                }
                Ok(normalize_input(&img, spec)?)
            })
            .collect()
    }
}

fn plan_summary(plan: &KernelPlan) -> String {
    let mut s = String::new();
    let c = &plan.config;
    let _ = writeln!(
        s,
        "equirect {}x{}, target camera {} px over {} deg, kernel bound {}x{}",
        2 * c.height,
        c.height,
        c.tangent_width,
        c.fov,
        c.max_kernel.0,
        c.max_kernel.1
    );
    let _ = writeln!(s, "pools: {} removed, {} retained", plan.removed_pools(), plan.retained_pools());
    for p in &plan.pools {
        let _ = writeln!(
            s,
            "  layer {}: {} (target pixel {:.4} deg, equirect pixel {:.4} deg)",
            p.layer,
            if p.retained { "kept" } else { "removed" },
            p.target_pixel_size,
            p.equirect_pixel_size
        );
    }
    let _ = writeln!(s, "mirror symmetric: {}", plan.is_mirror_symmetric());
    let h = plan.height();
    for l in plan.conv_layers() {
        let clamped = l.clamped.iter().filter(|c| **c).count();
        let min_cov = (0..h)
            .filter(|&y| !l.clamped[y])
            .map(|y| l.coverage[y])
            .fold(f64::INFINITY, f64::min);
        let rows: Vec<String> = [0, h / 8, h / 4, 3 * h / 8, h / 2]
            .iter()
            .map(|&y| format!("{}x{}", l.shapes[y].kh, l.shapes[y].kw))
            .collect();
        let _ = writeln!(
            s,
            "{:<10} dilation {} rf {:>4}  rows 0,H/8,H/4,3H/8,H/2: {}  clamped {clamped}  min coverage {}",
            l.name,
            l.dilation,
            l.receptive_field,
            rows.join(" "),
            if min_cov.is_finite() { format!("{min_cov:.3}") } else { "-".into() }
        );
    }
    s
}

pub fn cmd_plan(ctx: &Ctx) -> Result<()> {
    let mut o = ctx.outputs("plan")?;
    let spec = ctx.network(&mut o)?;
    let plan = plan_kernels(&spec, &ctx.cfg.geometry.plan_config())?;
    let p = o.file("plan.toml")?;
    plan.save(&p)?;
    let summary = plan_summary(&plan);
    o.write("plan.txt", &summary)?;
    print!("{summary}");
    o.finish(ctx.seed)
}

pub fn cmd_oracle(ctx: &Ctx) -> Result<()> {
    let mut o = ctx.outputs("oracle")?;
    let spec = ctx.weighted_network(&mut o)?;
    let dir = ctx.cfg.paths.images.as_ref().context("paths.images is not set")?;
    let files = list_images(dir)?;
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for f in &files {
        o.input(f);
        let name = file_name(f);
        let img = load_equirect(f)?;
        if img.height() != ctx.cfg.geometry.height {
            bail!("{} is {} rows high, the geometry says {}", f.display(), img.height(), ctx.cfg.geometry.height);
        }
        let img = normalize_input(&img, &spec)?;
        if is_test(&name, ctx.cfg.eval.test_fraction) {
            test.push((name, img));
        } else {
            train.push((name, img));
        }
    }
    if train.is_empty() {
        bail!("every frame fell into the test split; lower eval.test_fraction");
    }
    let camera = ctx.cfg.geometry.camera();
    let n = spec.conv_layers().len();
    for (set, name) in [(&train, "oracle/train.toml"), (&test, "oracle/test.toml")] {
        if set.is_empty() {
            warn!("no frames for {name}");
            continue;
        }
        info!("exact targets for {} frames ({name})", set.len());
        let s = OracleSet::build(set, &spec, &camera, n)?;
        let p = o.file(name)?;
        o.sidecar(&p, "bin");
        s.save(&p)?;
    }
    let split: String = train
        .iter()
        .map(|(n, _)| format!("train,{n}\n"))
        .chain(test.iter().map(|(n, _)| format!("test,{n}\n")))
        .collect();
    o.write("oracle/split.csv", format!("set,file\n{split}"))?;
    println!("{} training and {} test frames, {n} layers", train.len(), test.len());
    o.finish(ctx.seed)
}

pub fn cmd_pretrain(ctx: &Ctx) -> Result<()> {
    let mut o = ctx.outputs("pretrain")?;
    let spec = ctx.weighted_network(&mut o)?;
    let plan = ctx.plan(&mut o)?;
    let set = ctx.oracle(&mut o, false)?;
    let cfg = ctx.cfg.train_config();
    let data = PretrainData::new(&plan, &set.maps)?;
    let (net, report) = pretrain_all(&plan, &spec, &set.camera, &data, &cfg)?;
    let p = o.file("pretrained.toml")?;
    o.sidecar(&p, "sphc");
    net.save(&p)?;
    let mut csv = String::from("layer,row,samples,initial_loss,final_loss,heldout_loss\n");
    for k in &report.kernels {
        let held = k.checkpoints.last().map_or(f64::NAN, |c| c.1);
        let _ = writeln!(
            csv,
            "{},{},{},{:.6e},{:.6e},{:.6e}",
            net.names[k.layer], k.row, k.samples, k.initial_loss, k.final_loss, held
        );
    }
    o.write("pretrain.csv", csv)?;
    for (l, y, why) in &report.skipped {
        warn!("{} row {y} kept its warm start: {why}", net.names[*l]);
    }
    println!(
        "pretrained {} kernels ({} skipped), {} parameters",
        report.kernels.len(),
        report.skipped.len(),
        net.parameter_count()
    );
    o.finish(ctx.seed)
}

pub fn cmd_finetune(ctx: &Ctx) -> Result<()> {
    let mut o = ctx.outputs("finetune")?;
    let spec = ctx.weighted_network(&mut o)?;
    let set = ctx.oracle(&mut o, false)?;
    let net = ctx.sphconv(&mut o, &ctx.cfg.paths.pretrained, "pretrained.toml", "run `sphconv pretrain` first")?;
    let images: Vec<_> = ctx
        .frames(&mut o, &set.images, &spec)?
        .into_iter()
        .map(EquirectImage::into_tensor)
        .collect();
    let (tuned, report) = finetune(&net, &images, &set.maps, &ctx.cfg.train_config())?;
    let p = o.file("finetuned.toml")?;
    o.sidecar(&p, "sphc");
    tuned.save(&p)?;
    let mut csv = String::from("stage,step,loss\n");
    for (layer, losses) in &report.stages {
        for (i, l) in losses.iter().enumerate() {
            let _ = writeln!(csv, "{layer},{i},{l:.6e}");
        }
        if let (Some(a), Some(b)) = (losses.first(), losses.last()) {
            println!("{layer}: loss {a:.4e} -> {b:.4e} over {} steps", losses.len());
        }
    }
    o.write("finetune.csv", csv)?;
    o.finish(ctx.seed)
}

fn cost_config<'a>(ctx: &Ctx, plan: Option<&'a KernelPlan>, face: usize, spacing: Option<usize>) -> CostConfig<'a> {
    let h = ctx.cfg.geometry.height;
    CostConfig {
        height: Some(h),
        positions: Some((ctx.cfg.eval.per_row * h) as u64),
        patch: Some(ctx.cfg.geometry.tangent_width),
        spacing,
        face: Some(face),
        plan,
    }
}

fn default_face(ctx: &Ctx) -> usize {
    ctx.cfg
        .eval
        .face
        .unwrap_or_else(|| ((2.0 / ctx.cfg.geometry.camera().pitch()).round() as usize).max(1))
}

/// Interp spacing: configured, or the smallest matching SphConv's cost.
fn spacing(ctx: &Ctx, spec: &NetworkSpec, plan: Option<&KernelPlan>, face: usize) -> Result<Option<usize>> {
    if let Some(s) = ctx.cfg.eval.spacing {
        return Ok(Some(s));
    }
    let Some(plan) = plan else { return Ok(None) };
    let cc = cost_config(ctx, Some(plan), face, None);
    let target = mac_count_method(MethodCost::SphConv, spec, &cc)?.total;
    Ok(Some(interp_spacing(spec, &cc, target)?))
}

fn method_cost(kind: BaselineKind) -> MethodCost {
    match kind {
        BaselineKind::Exact => MethodCost::Exact,
        BaselineKind::Direct => MethodCost::Direct,
        BaselineKind::Interp => MethodCost::Interp,
        BaselineKind::Perspective => MethodCost::Perspective,
        BaselineKind::SphConvPre | BaselineKind::SphConv | BaselineKind::OptSphConv => MethodCost::SphConv,
    }
}

pub fn cmd_eval(ctx: &Ctx) -> Result<()> {
    let mut o = ctx.outputs("eval")?;
    let spec = ctx.weighted_network(&mut o)?;
    let set = ctx.oracle(&mut o, true)?;
    let methods = &ctx.cfg.eval.methods;
    if methods.is_empty() {
        bail!("eval.methods is empty");
    }
    let wants = |ks: &[BaselineKind]| methods.iter().any(|m| ks.contains(m));
    let pretrained = if wants(&[BaselineKind::SphConvPre, BaselineKind::OptSphConv]) {
        Some(ctx.sphconv(&mut o, &ctx.cfg.paths.pretrained, "pretrained.toml", "run `sphconv pretrain` first")?)
    } else {
        None
    };
    let finetuned = if wants(&[BaselineKind::SphConv]) {
        Some(ctx.sphconv(&mut o, &ctx.cfg.paths.finetuned, "finetuned.toml", "run `sphconv finetune` first")?)
    } else {
        None
    };
    let plan_path = ctx.cfg.paths.plan.clone().unwrap_or_else(|| ctx.out.join("plan.toml"));
    let plan = if plan_path.exists() { Some(ctx.plan(&mut o)?) } else { None };
    let face = default_face(ctx);
    let spacing = spacing(ctx, &spec, plan.as_ref(), face)?;
    if methods.contains(&BaselineKind::Interp) && spacing.is_none() {
        bail!("interp needs eval.spacing or a plan to derive it from; run `sphconv plan` first");
    }
    let n_layers = ctx.cfg.eval.layers.unwrap_or(set.layer_names.len()).min(set.layer_names.len());
    let images = ctx.frames(&mut o, &set.images, &spec)?;
    let mc = MethodConfig {
        spec: &spec,
        camera: set.camera,
        n_layers,
        spacing,
        face: Some(face),
        pretrained: pretrained.as_ref(),
        finetuned: finetuned.as_ref(),
    };
    let columns = Lattice {
        per_row: ctx.cfg.eval.per_row,
        row_stride: 1,
    }
    .columns(2 * ctx.cfg.geometry.height);
    let mut report = evaluate(methods, &images, &set.maps, &mc, &ctx.cfg.eval.thetas, &columns)?;
    report.seed = ctx.seed;
    report.config_hash = sha256_file(&ctx.config_path)?;
    let cc = cost_config(ctx, plan.as_ref(), face, spacing);
    for &m in methods {
        match mac_count_method(method_cost(m), &spec, &cc) {
            Ok(c) => report.set_macs(m, c.total),
            Err(e) => info!("no cost for {m}: {e}"),
        }
    }
    let top = &set.layer_names[n_layers - 1];
    o.write("eval.csv", report.to_csv())?;
    o.write("eval.txt", report.summary())?;
    o.write(&format!("errors_{top}.dat"), report.gnuplot_errors(top, methods))?;
    o.write(&format!("cost_{top}.dat"), report.gnuplot_cost(top))?;
    print!("{}", report.summary());
    o.finish(ctx.seed)
}

pub fn cmd_cost(ctx: &Ctx) -> Result<()> {
    let mut o = ctx.outputs("cost")?;
    let spec = ctx.network(&mut o)?;
    let plan = ctx.plan(&mut o)?;
    let face = default_face(ctx);
    let s = spacing(ctx, &spec, Some(&plan), face)?;
    let cc = cost_config(ctx, Some(&plan), face, s);
    let mut csv = String::from("method,layer,macs\n");
    let mut txt = String::new();
    let mut totals = Vec::new();
    for m in [MethodCost::Exact, MethodCost::Direct, MethodCost::Interp, MethodCost::Perspective, MethodCost::SphConv] {
        let r = mac_count_method(m, &spec, &cc)?;
        for (layer, macs) in &r.per_layer {
            let _ = writeln!(csv, "{},{layer},{macs}", r.method);
        }
        let _ = writeln!(csv, "{},total,{}", r.method, r.total);
        let _ = write!(txt, "{r}");
        totals.push(r.total);
    }
    let _ = writeln!(
        txt,
        "interp spacing {}, cube face {face}, {} exact positions\nexact / sphconv = {:.1}",
        s.unwrap_or(0),
        cc.positions.unwrap_or(0),
        totals[0] as f64 / totals[4] as f64
    );
    o.write("cost.csv", csv)?;
    o.write("cost.txt", &txt)?;
    print!("{txt}");
    o.finish(ctx.seed)
}

pub fn cmd_prep_pascal(ctx: &Ctx) -> Result<()> {
    let mut o = ctx.outputs("prep-pascal")?;
    let dir = ctx.cfg.paths.pascal.as_ref().context("paths.pascal is not set")?;
    let boxes_path = ctx.cfg.paths.boxes.as_ref().context("paths.boxes is not set")?;
    o.input(boxes_path);
    let boxes = parse_boxes(&std::fs::read_to_string(boxes_path).with_context(|| format!("reading {}", boxes_path.display()))?)?;
    if boxes.is_empty() {
        bail!("{} lists no boxes", boxes_path.display());
    }
    let p = &ctx.cfg.prep;
    let camera = ctx.cfg.geometry.camera();
    let mut n = 0;
    for (file, b) in &boxes {
        let src = dir.join(file);
        o.input(&src);
        let img = load_rgb(&src)?;
        let stem = Path::new(file).file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        for &s in &p.scales {
            let px = s * p.base_scale;
            for &t in &p.thetas {
                let e = prep_pascal(&img, *b, px, t, &camera, ctx.cfg.geometry.height)
                    .with_context(|| format!("{file} at scale {px} and theta {t}"))?;
                let out = o.file(&format!("pascal/{stem}_s{}_t{}.png", px.round(), t.round()))?;
                save_png(&out, e.tensor())?;
                n += 1;
            }
        }
    }
    println!("{n} equirect images from {} boxes", boxes.len());
    o.finish(ctx.seed)
}

pub fn cmd_viz_kernels(ctx: &Ctx) -> Result<()> {
    let mut o = ctx.outputs("viz-kernels")?;
    let spec = ctx.weighted_network(&mut o)?;
    let v = &ctx.cfg.viz;
    let net = ctx.sphconv(&mut o, &v.network, "pretrained.toml", "run `sphconv pretrain` first or set viz.network")?;
    let layer = v.layer.clone().unwrap_or_else(|| net.names[0].clone());
    let pics = export_kernel_images(&net, &spec, &layer, &v.thetas, v.zoom, (v.out_channel, v.in_channel))?;
    save_png(&o.file(&format!("kernels/{layer}_target.png"))?, &pics.target)?;
    for (theta, y, pic, pair) in &pics.rows {
        let t = theta.round();
        save_png(&o.file(&format!("kernels/{layer}_theta{t}.png"))?, pic)?;
        save_png(&o.file(&format!("kernels/{layer}_theta{t}_pair.png"))?, pair)?;
        println!("{layer} theta {theta}: row {y}, {}x{} px", pic.width(), pic.height());
    }
    o.finish(ctx.seed)
}

/// Synthetic equirect frames for trying the pipeline without data.
pub fn cmd_synth_images(out: &Path, count: usize, height: usize, seed: u64) -> Result<()> {
    if height < 4 || count == 0 {
        bail!("need at least one frame of height 4 or more");
    }
    let mut o = Outputs::new(out, "synth-images")?;
    for i in 0..count {
        let img = synth_image(3, height, seed.wrapping_add(i as u64));
        save_png(&o.file(&format!("frame_{i:04}.png"))?, img.tensor())?;
    }
    println!("{count} frames of {}x{height} in {}", 2 * height, out.display());
    o.finish(seed)
}

/// A target network manifest with random weights.
pub fn cmd_random_net(out: &Path, kind: &str, seed: u64) -> Result<()> {
    let mut spec = match kind {
        "toy" => NetworkSpec::toy(seed),
        "vgg16" => NetworkSpec::vgg16(),
        _ => bail!("unknown network kind {kind}; expected toy or vgg16"),
    };
    spec.randomize_weights(seed);
    let mut o = Outputs::new(out, "random-net")?;
    let p = o.file("network.toml")?;
    o.sidecar(&p, "sphc");
    spec.save(&p)?;
    println!("{} with {} convs in {}", spec.name, spec.conv_layers().len(), p.display());
    o.finish(seed)
}
