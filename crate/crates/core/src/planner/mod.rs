//! Architecture search for the row-untied network: which target pools to
//! drop, and the kernel shape of every (layer, row).

mod extent;

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::geometry::{backproject_footprint, row_theta, Footprint, SphericalCoord, TangentCamera};
use crate::netspec::{receptive_field, LayerSpec, NetworkSpec};
use crate::error::{Error, Result};

pub use crate::geometry::coverage;
pub use extent::{plan_extents, sphconv_rf_extent, Extent};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "[usize; 2]", into = "[usize; 2]")]
pub struct KernelShape {
    pub kh: usize,
    pub kw: usize,
}

impl From<[usize; 2]> for KernelShape {
    fn from(v: [usize; 2]) -> Self {
        Self { kh: v[0], kw: v[1] }
    }
}

impl From<KernelShape> for [usize; 2] {
    fn from(s: KernelShape) -> Self {
        [s.kh, s.kw]
    }
}

impl KernelShape {
    pub fn new(kh: usize, kw: usize) -> Self {
        Self { kh, kw }
    }
}

/// Per-row kernels of one row-untied conv layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerPlan {
    pub name: String,
    pub conv_index: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    pub dilation: usize,
    /// Receptive field of the matching target layer, in target input pixels.
    pub receptive_field: usize,
    pub shapes: Vec<KernelShape>,
    /// Fraction of the target footprint inside the planned receptive field.
    pub coverage: Vec<f64>,
    /// Rows whose requirements were still unmet at the kernel bound.
    pub clamped: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum PlanStage {
    Conv(LayerPlan),
    /// Stride-1 max pool standing in for a retained target pool.
    Pool { kernel: usize, dilation: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoolDecision {
    /// Index of the pool in the target layer list.
    pub layer: usize,
    pub retained: bool,
    /// Target pixel size (degrees) entering the pool.
    pub target_pixel_size: f64,
    /// Equirect pixel size (degrees) entering the pool.
    pub equirect_pixel_size: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanConfig {
    /// Equirect height `H_e`.
    pub height: usize,
    /// Kernel bound `U_k` as `(max_h, max_w)`.
    pub max_kernel: (usize, usize),
    /// Target camera field of view in degrees.
    pub fov: f64,
    /// Target camera width in pixels.
    pub tangent_width: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelPlan {
    pub config: PlanConfig,
    pub pools: Vec<PoolDecision>,
    pub stages: Vec<PlanStage>,
}

const MIN_COVERAGE: f64 = 0.95;

/// Walks the target pools. A pool is dropped when the equirect pixel is at
/// least as large as the target pixel at that depth; the target pixel size
/// grows by every pool's stride, the equirect one only at retained pools.
pub fn pooling_adjustment(spec: &NetworkSpec, delta_theta_e: f64, delta_theta_p: f64) -> Result<Vec<PoolDecision>> {
    if !(delta_theta_e > 0.0 && delta_theta_p > 0.0) {
        return Err(Error::Domain("pixel sizes must be positive".into()));
    }
    let (mut de, mut dp) = (delta_theta_e, delta_theta_p);
    let mut out = Vec::new();
    for (i, layer) in spec.layers.iter().enumerate() {
        match layer {
            LayerSpec::MaxPool { stride, .. } => {
                let retained = de < dp;
                out.push(PoolDecision {
                    layer: i,
                    retained,
                    target_pixel_size: dp,
                    equirect_pixel_size: de,
                });
                dp *= *stride as f64;
                if retained {
                    de *= *stride as f64;
                }
            }
            LayerSpec::Conv(c) => dp *= c.stride as f64,
            _ => {}
        }
    }
    Ok(out)
}

impl KernelPlan {
    pub fn height(&self) -> usize {
        self.config.height
    }

    pub fn width(&self) -> usize {
        2 * self.config.height
    }

    pub fn conv_layers(&self) -> Vec<&LayerPlan> {
        self.stages
            .iter()
            .filter_map(|s| match s {
                PlanStage::Conv(l) => Some(l),
                _ => None,
            })
            .collect()
    }

    pub fn layer(&self, conv_index: usize) -> Result<&LayerPlan> {
        self.conv_layers()
            .get(conv_index)
            .copied()
            .ok_or_else(|| Error::InvalidPlan(format!("no planned conv layer {conv_index}")))
    }

    /// Whether a retained pool sits between conv `l - 1` and conv `l`.
    pub fn pool_before(&self, conv_index: usize) -> Option<(usize, usize)> {
        let mut seen = 0;
        let mut pending = None;
        for s in &self.stages {
            match s {
                PlanStage::Conv(_) => {
                    if seen == conv_index {
                        return pending;
                    }
                    seen += 1;
                    pending = None;
                }
                PlanStage::Pool { kernel, dilation } => pending = Some((*kernel, *dilation)),
            }
        }
        None
    }

    pub fn removed_pools(&self) -> usize {
        self.pools.iter().filter(|p| !p.retained).count()
    }

    pub fn retained_pools(&self) -> usize {
        self.pools.iter().filter(|p| p.retained).count()
    }

    pub fn validate(&self) -> Result<()> {
        let h = self.height();
        let (uh, uw) = self.config.max_kernel;
        for l in self.conv_layers() {
            if l.shapes.len() != h || l.coverage.len() != h || l.clamped.len() != h {
                return Err(Error::InvalidPlan(format!("{}: expected {h} rows", l.name)));
            }
            for (y, s) in l.shapes.iter().enumerate() {
                if s.kh % 2 == 0 || s.kw % 2 == 0 || s.kh < 3 || s.kw < 3 || s.kh > uh || s.kw > uw {
                    return Err(Error::InvalidPlan(format!("{} row {y}: bad kernel {}x{}", l.name, s.kh, s.kw)));
                }
            }
            if l.dilation == 0 {
                return Err(Error::InvalidPlan(format!("{}: zero dilation", l.name)));
            }
        }
        Ok(())
    }

    /// Whether row `y` and row `H - 1 - y` carry equal shapes in every layer.
    pub fn is_mirror_symmetric(&self) -> bool {
        let h = self.height();
        self.conv_layers()
            .iter()
            .all(|l| (0..h).all(|y| l.shapes[y] == l.shapes[h - 1 - y]))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, toml::to_string(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let plan: Self = toml::from_str(&std::fs::read_to_string(path)?)?;
        plan.validate()?;
        Ok(plan)
    }
}

/// Target footprint of a `r x r` grid at the target input pitch, centered at
/// row `y` on the `phi = 0` meridian.
fn target_footprint(cfg: &PlanConfig, r: usize, y: usize) -> Result<Footprint> {
    let pitch = 2.0 * (cfg.fov.to_radians() / 2.0).tan() / cfg.tangent_width as f64;
    let center = SphericalCoord::new(row_theta(y, cfg.height), 0.0)?;
    let cam = TangentCamera::with_pitch(center, pitch, r)?;
    backproject_footprint(&cam, 2 * cfg.height, cfg.height)
}

struct RowSearch<'a> {
    /// Extents of the map this layer reads.
    below: &'a [Extent],
    cfg: &'a PlanConfig,
    dilation: usize,
}

impl RowSearch<'_> {
    fn extent(&self, y: usize, s: KernelShape) -> Extent {
        extent::conv_row(self.below, self.cfg.height, y, s, self.dilation)
    }

    fn coverage(&self, fp: &Footprint, e: &Extent) -> f64 {
        coverage(fp, (e.lo, e.hi), (e.clo, e.chi)).expect("footprints are never empty")
    }

    fn search(&self, y: usize, fp: &Footprint) -> KernelShape {
        let (uh, uw) = self.cfg.max_kernel;
        let mut s = KernelShape::new(3, 3);
        while s.kh < uh && self.extent(y, s).rows() < fp.bbox_height() {
            s.kh += 2;
        }
        if fp.bbox_width() > self.cfg.height {
            s.kw = uw;
        } else {
            while s.kw < uw && self.extent(y, s).cols() < fp.bbox_width() {
                s.kw += 2;
            }
        }
        let (flo, fhi) = fp.row_range();
        loop {
            let e = self.extent(y, s);
            if self.coverage(fp, &e) >= MIN_COVERAGE {
                break;
            }
            let rows_missing = (flo as i64) < e.lo || (fhi as i64) > e.hi;
            if rows_missing && s.kh < uh {
                s.kh += 2;
            } else if s.kw < uw {
                s.kw += 2;
            } else if s.kh < uh {
                s.kh += 2;
            } else {
                break;
            }
        }
        s
    }

    fn meets(&self, y: usize, s: KernelShape, fp: &Footprint) -> (f64, bool) {
        let e = self.extent(y, s);
        let cov = self.coverage(fp, &e);
        let wide = fp.bbox_width() > self.cfg.height;
        let ok = e.rows() >= fp.bbox_height() && (wide || e.cols() >= fp.bbox_width()) && cov >= MIN_COVERAGE;
        (cov, !ok)
    }
}

/// Plans every conv layer bottom-up. Rows are planned in mirror pairs
/// `(y, H - 1 - y)`, each pair taking the larger of the two searched shapes.
pub fn plan_kernels(spec: &NetworkSpec, cfg: &PlanConfig) -> Result<KernelPlan> {
    spec.validate()?;
    let h = cfg.height;
    if h < 4 {
        return Err(Error::Domain(format!("equirect height {h} is below 4")));
    }
    let (uh, uw) = cfg.max_kernel;
    if uh < 3 || uw < 3 || uh % 2 == 0 || uw % 2 == 0 {
        return Err(Error::Domain(format!("kernel bound {uh}x{uw} must be odd and at least 3")));
    }
    if !(cfg.fov > 0.0 && cfg.fov < 180.0) || cfg.tangent_width == 0 {
        return Err(Error::Domain("invalid target camera".into()));
    }
    let pools = pooling_adjustment(spec, 180.0 / h as f64, cfg.fov / cfg.tangent_width as f64)?;
    let mut stages: Vec<PlanStage> = Vec::new();
    let mut below = extent::identity(h);
    let mut dilation = 1;
    let mut conv_index = 0;
    for (li, layer) in spec.layers.iter().enumerate() {
        match layer {
            LayerSpec::MaxPool { kernel, stride } => {
                let retained = pools.iter().any(|p| p.layer == li && p.retained);
                if retained {
                    stages.push(PlanStage::Pool {
                        kernel: *kernel,
                        dilation,
                    });
                    below = extent::pool_extents(&below, h, *kernel, dilation);
                    dilation *= stride;
                }
            }
            LayerSpec::Conv(c) => {
                let r = receptive_field(spec, li)?.size;
                let search = RowSearch {
                    below: &below,
                    cfg,
                    dilation: dilation * c.dilation,
                };
                let searched: Vec<(KernelShape, Footprint, Footprint)> = (0..h.div_ceil(2))
                    .into_par_iter()
                    .map(|y| -> Result<_> {
                        let m = h - 1 - y;
                        let fa = target_footprint(cfg, r, y)?;
                        let fb = target_footprint(cfg, r, m)?;
                        let (sa, sb) = (search.search(y, &fa), search.search(m, &fb));
                        Ok((KernelShape::new(sa.kh.max(sb.kh), sa.kw.max(sb.kw)), fa, fb))
                    })
                    .collect::<Result<_>>()?;
                // widths never grow from the poles toward the equator
                let mut top: Vec<KernelShape> = searched.iter().map(|t| t.0).collect();
                for y in (0..top.len().saturating_sub(1)).rev() {
                    top[y].kw = top[y].kw.max(top[y + 1].kw);
                }
                let mut shapes = vec![KernelShape::new(3, 3); h];
                let mut cov = vec![0.0; h];
                let mut clamped = vec![false; h];
                for (y, (s, (_, fa, fb))) in top.iter().zip(&searched).enumerate() {
                    let m = h - 1 - y;
                    shapes[y] = *s;
                    shapes[m] = *s;
                    (cov[y], clamped[y]) = search.meets(y, *s, fa);
                    (cov[m], clamped[m]) = search.meets(m, *s, fb);
                }
                let lp = LayerPlan {
                    name: c.name.clone(),
                    conv_index,
                    in_channels: c.in_channels,
                    out_channels: c.out_channels,
                    dilation: dilation * c.dilation,
                    receptive_field: r,
                    shapes,
                    coverage: cov,
                    clamped,
                };
                below = extent::conv_extents(&below, h, &lp.shapes, lp.dilation);
                stages.push(PlanStage::Conv(lp));
                dilation *= c.stride;
                conv_index += 1;
            }
            _ => {}
        }
    }
    let plan = KernelPlan {
        config: cfg.clone(),
        pools,
        stages,
    };
    plan.validate()?;
    Ok(plan)
}
