use std::fmt;

use serde::{Deserialize, Serialize};

use super::{LayerSpec, NetworkSpec};
use crate::error::{Error, Result};
use crate::planner::KernelPlan;

/// Multiply-accumulate counts of the conv layers of one method.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostReport {
    pub method: String,
    pub per_layer: Vec<(String, u64)>,
    pub total: u64,
}

impl CostReport {
    fn new(method: impl Into<String>, per_layer: Vec<(String, u64)>) -> Self {
        let total = per_layer.iter().map(|(_, m)| m).sum();
        Self {
            method: method.into(),
            per_layer,
            total,
        }
    }

    /// Same report with every entry multiplied by `n`.
    fn times(mut self, method: impl Into<String>, n: u64) -> Self {
        for (_, m) in &mut self.per_layer {
            *m *= n;
        }
        self.total *= n;
        self.method = method.into();
        self
    }
}

impl fmt::Display for CostReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{}: {:.4e} MACs", self.method, self.total as f64)?;
        for (name, m) in &self.per_layer {
            writeln!(f, "  {name:<12} {m}")?;
        }
        Ok(())
    }
}

fn conv_macs(kh: usize, kw: usize, cin: usize, cout: usize, h: usize, w: usize) -> u64 {
    (kh * kw * cin * cout) as u64 * (h * w) as u64
}

/// Strided forward pass with same-padded convs and floor pooling.
pub fn mac_count_planar(spec: &NetworkSpec, input_h: usize, input_w: usize) -> Result<CostReport> {
    spec.validate()?;
    let (mut h, mut w) = (input_h, input_w);
    let mut per = Vec::new();
    for layer in &spec.layers {
        match layer {
            LayerSpec::Conv(c) => {
                h = h.div_ceil(c.stride);
                w = w.div_ceil(c.stride);
                per.push((c.name.clone(), conv_macs(c.kernel_h, c.kernel_w, c.in_channels, c.out_channels, h, w)));
            }
            LayerSpec::MaxPool { kernel, stride } => {
                if h < *kernel || w < *kernel {
                    return Err(Error::InvalidSpec(format!("{input_h}x{input_w} input pools down to nothing")));
                }
                h = (h - kernel) / stride + 1;
                w = (w - kernel) / stride + 1;
            }
            _ => {}
        }
    }
    Ok(CostReport::new("planar", per))
}

/// Every conv evaluated at full input resolution (stride-1 pools, dilated convs).
pub fn mac_count_dilated(spec: &NetworkSpec, input_h: usize, input_w: usize) -> Result<CostReport> {
    spec.validate()?;
    let per = spec
        .layers
        .iter()
        .filter_map(|l| match l {
            LayerSpec::Conv(c) => Some((
                c.name.clone(),
                conv_macs(c.kernel_h, c.kernel_w, c.in_channels, c.out_channels, input_h, input_w),
            )),
            _ => None,
        })
        .collect();
    Ok(CostReport::new("dilated", per))
}

/// Row-untied network: each row's kernel is applied at every column of a
/// full-resolution `2 H_e`-wide map.
pub fn mac_count_sphconv(plan: &KernelPlan, spec: &NetworkSpec, height: usize) -> Result<CostReport> {
    spec.validate()?;
    let layers = plan.conv_layers();
    let convs = spec.conv_layers();
    if layers.len() != convs.len() {
        return Err(Error::InvalidPlan(format!(
            "plan has {} conv layers, network has {}",
            layers.len(),
            convs.len()
        )));
    }
    let width = 2 * height;
    let mut per = Vec::with_capacity(layers.len());
    for (i, lp) in layers.iter().enumerate() {
        let c = spec.conv(i)?;
        if lp.shapes.len() != height || lp.in_channels != c.in_channels || lp.out_channels != c.out_channels {
            return Err(Error::InvalidPlan(format!("plan layer {i} does not match {} at H_e = {height}", c.name)));
        }
        let m = lp
            .shapes
            .iter()
            .map(|s| conv_macs(s.kh, s.kw, c.in_channels, c.out_channels, 1, width))
            .sum();
        per.push((c.name.clone(), m));
    }
    Ok(CostReport::new("sphconv", per))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MethodCost {
    Exact,
    Direct,
    Interp,
    Perspective,
    SphConv,
}

/// Inputs to [`mac_count_method`]; each method reads only what it needs.
#[derive(Debug, Clone, Copy, Default)]
pub struct CostConfig<'a> {
    /// Equirect height `H_e`; the width is `2 H_e`.
    pub height: Option<usize>,
    /// Positions at which the exact method evaluates the target network.
    pub positions: Option<u64>,
    /// Side of the tangent image the exact method feeds the target network.
    pub patch: Option<usize>,
    /// Interp lattice spacing in equirect pixels.
    pub spacing: Option<usize>,
    /// Cube face side.
    pub face: Option<usize>,
    pub plan: Option<&'a KernelPlan>,
}

fn need<T>(v: Option<T>, what: &str) -> Result<T> {
    v.ok_or_else(|| Error::MissingConfig(what.into()))
}

pub fn mac_count_method(method: MethodCost, spec: &NetworkSpec, cfg: &CostConfig) -> Result<CostReport> {
    match method {
        MethodCost::Exact => {
            let patch = need(cfg.patch, "exact: tangent patch size")?;
            let n = need(cfg.positions, "exact: number of positions")?;
            Ok(mac_count_planar(spec, patch, patch)?.times("exact", n))
        }
        MethodCost::Interp => {
            let patch = need(cfg.patch, "interp: tangent patch size")?;
            let s = need(cfg.spacing, "interp: lattice spacing")?;
            let h = need(cfg.height, "interp: equirect height")?;
            if s == 0 {
                return Err(Error::MissingConfig("interp: spacing must be positive".into()));
            }
            let n = ((2 * h).div_ceil(s) * h.div_ceil(s)) as u64;
            Ok(mac_count_planar(spec, patch, patch)?.times("interp", n))
        }
        MethodCost::Direct => {
            let h = need(cfg.height, "direct: equirect height")?;
            let mut r = mac_count_dilated(spec, h, 2 * h)?;
            r.method = "direct".into();
            Ok(r)
        }
        MethodCost::Perspective => {
            let face = need(cfg.face, "perspective: cube face size")?;
            Ok(mac_count_planar(spec, face, face)?.times("perspective", 6))
        }
        MethodCost::SphConv => {
            let plan = need(cfg.plan, "sphconv: kernel plan")?;
            let h = need(cfg.height, "sphconv: equirect height")?;
            mac_count_sphconv(plan, spec, h)
        }
    }
}

/// Smallest interp spacing whose cost is within 5% of `target` MACs.
pub fn interp_spacing(spec: &NetworkSpec, cfg: &CostConfig, target: u64) -> Result<usize> {
    let h = need(cfg.height, "interp: equirect height")?;
    for s in 1..=2 * h {
        let c = CostConfig {
            spacing: Some(s),
            ..*cfg
        };
        if mac_count_method(MethodCost::Interp, spec, &c)?.total as f64 <= 1.05 * target as f64 {
            return Ok(s);
        }
    }
    Ok(2 * h)
}
