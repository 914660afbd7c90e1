use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use sphconv_core::baselines::BaselineKind;
use sphconv_core::distill::{TargetCamera, TrainConfig};
use sphconv_core::planner::PlanConfig;

/// Input files. Relative paths resolve against the config file's directory.
/// Unset artifact paths default to the matching file under `--out`.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    /// Directory of equirectangular frames (PNG or PPM, width twice height).
    pub images: Option<PathBuf>,
    /// Target network manifest.
    pub network: Option<PathBuf>,
    pub plan: Option<PathBuf>,
    pub train_oracle: Option<PathBuf>,
    pub test_oracle: Option<PathBuf>,
    pub pretrained: Option<PathBuf>,
    pub finetuned: Option<PathBuf>,
    /// Directory of perspective object images for `prep-pascal`.
    pub pascal: Option<PathBuf>,
    /// CSV of `file,x0,y0,x1,y1` boxes (pixel ranges, end exclusive).
    pub boxes: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Geometry {
    /// Equirect height; the width is twice this.
    pub height: usize,
    /// Target camera field of view in degrees.
    pub fov: f64,
    /// Target camera width in pixels.
    pub tangent_width: usize,
    #[serde(default = "default_bound")]
    pub max_kernel: (usize, usize),
}

fn default_bound() -> (usize, usize) {
    (7, 7)
}

impl Geometry {
    pub fn plan_config(&self) -> PlanConfig {
        PlanConfig {
            height: self.height,
            max_kernel: self.max_kernel,
            fov: self.fov,
            tangent_width: self.tangent_width,
        }
    }

    pub fn camera(&self) -> TargetCamera {
        TargetCamera::from(&self.plan_config())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSettings {
    pub thetas: Vec<f64>,
    pub per_row: usize,
    pub methods: Vec<BaselineKind>,
    /// Supervised layers to report; all by default.
    pub layers: Option<usize>,
    /// Interp lattice spacing; by default the smallest one costing about as
    /// much as SphConv.
    pub spacing: Option<usize>,
    /// Cube face side; by default matching the target pitch.
    pub face: Option<usize>,
    /// Share of frames held out for evaluation, chosen by filename hash.
    pub test_fraction: f64,
}

impl Default for EvalSettings {
    fn default() -> Self {
        Self {
            thetas: vec![18.0, 36.0, 54.0, 72.0, 90.0],
            per_row: 40,
            methods: BaselineKind::ALL.to_vec(),
            layers: None,
            spacing: None,
            face: None,
            test_fraction: 0.2,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PrepSettings {
    /// `R`: the target network's input size in pixels.
    pub base_scale: f64,
    /// Multiples of `R` the box's short side is resized to.
    pub scales: Vec<f64>,
    /// Polar angles of the object centers, in degrees.
    pub thetas: Vec<f64>,
}

impl Default for PrepSettings {
    fn default() -> Self {
        Self {
            base_scale: 224.0,
            scales: vec![0.5, 1.0, 1.5],
            thetas: vec![36.0, 72.0, 108.0, 144.0, 180.0],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VizSettings {
    /// Network to draw; the pretrained one by default.
    pub network: Option<PathBuf>,
    /// Layer name; the first layer by default.
    pub layer: Option<String>,
    pub thetas: Vec<f64>,
    /// Output pixels per kernel tap.
    pub zoom: usize,
    pub out_channel: usize,
    pub in_channel: usize,
}

impl Default for VizSettings {
    fn default() -> Self {
        Self {
            network: None,
            layer: None,
            thetas: vec![9.0, 18.0, 36.0, 72.0],
            zoom: 16,
            out_channel: 0,
            in_channel: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub paths: Paths,
    pub geometry: Geometry,
    /// Training schedules; the VGG-16 ones when absent.
    pub train: Option<TrainConfig>,
    #[serde(default)]
    pub eval: EvalSettings,
    #[serde(default)]
    pub prep: PrepSettings,
    #[serde(default)]
    pub viz: VizSettings,
}

fn resolve(base: &Path, p: &mut Option<PathBuf>) {
    if let Some(q) = p {
        if q.is_relative() {
            *q = base.join(&*q);
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg: Self = toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let p = &mut cfg.paths;
        for f in [
            &mut p.images,
            &mut p.network,
            &mut p.plan,
            &mut p.train_oracle,
            &mut p.test_oracle,
            &mut p.pretrained,
            &mut p.finetuned,
            &mut p.pascal,
            &mut p.boxes,
        ] {
            resolve(base, f);
        }
        resolve(base, &mut cfg.viz.network);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let g = &self.geometry;
        if g.height < 4 || g.tangent_width == 0 || !(g.fov > 0.0 && g.fov < 180.0) {
            bail!("geometry: height must be at least 4, fov in (0, 180) and tangent_width positive");
        }
        if !(0.0..1.0).contains(&self.eval.test_fraction) {
            bail!("eval.test_fraction must be in [0, 1)");
        }
        if self.eval.per_row == 0 || self.eval.thetas.iter().any(|t| !(0.0..=180.0).contains(t)) {
            bail!("eval: per_row must be positive and thetas within [0, 180]");
        }
        if let Some(t) = &self.train {
            t.validate()?;
        }
        Ok(())
    }

    pub fn train_config(&self) -> TrainConfig {
        let mut t = self.train.clone().unwrap_or_default();
        t.seed = self.seed;
        t
    }
}
