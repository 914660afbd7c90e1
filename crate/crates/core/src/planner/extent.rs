use super::{KernelPlan, KernelShape, PlanStage};
use crate::error::{Error, Result};

/// Receptive field of one output unit of the row-untied stack: input rows
/// `lo..=hi` and column offsets `clo..=chi` relative to the output column.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Extent {
    pub lo: i64,
    pub hi: i64,
    pub clo: i64,
    pub chi: i64,
}

impl Extent {
    pub fn rows(&self) -> usize {
        (self.hi - self.lo + 1) as usize
    }

    pub fn cols(&self) -> usize {
        (self.chi - self.clo + 1) as usize
    }

    fn union(self, o: Extent) -> Extent {
        Extent {
            lo: self.lo.min(o.lo),
            hi: self.hi.max(o.hi),
            clo: self.clo.min(o.clo),
            chi: self.chi.max(o.chi),
        }
    }
}

pub(crate) fn identity(h: usize) -> Vec<Extent> {
    (0..h as i64)
        .map(|y| Extent {
            lo: y,
            hi: y,
            clo: 0,
            chi: 0,
        })
        .collect()
}

/// Extent of row `y` of a conv with shape `s` and dilation `d` reading a map
/// with per-row extents `below`. Rows read past the poles clamp.
pub(crate) fn conv_row(below: &[Extent], h: usize, y: usize, s: KernelShape, d: usize) -> Extent {
    let half_h = (d * (s.kh - 1) / 2) as i64;
    let half_w = (d * (s.kw - 1) / 2) as i64;
    let mut e: Option<Extent> = None;
    for i in 0..s.kh {
        let r = (y as i64 + (d * i) as i64 - half_h).clamp(0, h as i64 - 1) as usize;
        e = Some(match e {
            Some(e) => e.union(below[r]),
            None => below[r],
        });
    }
    let e = e.expect("kernel has at least one row");
    Extent {
        clo: e.clo - half_w,
        chi: e.chi + half_w,
        ..e
    }
}

pub(crate) fn conv_extents(below: &[Extent], h: usize, shapes: &[KernelShape], d: usize) -> Vec<Extent> {
    (0..h).map(|y| conv_row(below, h, y, shapes[y], d)).collect()
}

/// Stride-1 pool with `k x k` taps `d` apart, anchored at its top-left tap.
pub(crate) fn pool_extents(below: &[Extent], h: usize, k: usize, d: usize) -> Vec<Extent> {
    (0..h)
        .map(|y| {
            let mut e = below[y];
            for i in 1..k {
                e = e.union(below[(y + i * d).min(h - 1)]);
            }
            Extent {
                chi: e.chi + ((k - 1) * d) as i64,
                ..e
            }
        })
        .collect()
}

/// Per-row extents of the output of conv `conv_index`.
pub fn plan_extents(plan: &KernelPlan, conv_index: usize) -> Result<Vec<Extent>> {
    let h = plan.height();
    let mut e = identity(h);
    let mut seen = 0;
    for st in &plan.stages {
        match st {
            PlanStage::Conv(l) => {
                e = conv_extents(&e, h, &l.shapes, l.dilation);
                if seen == conv_index {
                    return Ok(e);
                }
                seen += 1;
            }
            PlanStage::Pool { kernel, dilation } => e = pool_extents(&e, h, *kernel, *dilation),
        }
    }
    Err(Error::InvalidPlan(format!("no planned conv layer {conv_index}")))
}

/// Rows and columns spanned by the receptive field of conv `conv_index` at
/// output row `row`.
pub fn sphconv_rf_extent(plan: &KernelPlan, conv_index: usize, row: usize) -> Result<(usize, usize)> {
    if row >= plan.height() {
        return Err(Error::InvalidPlan(format!("row {row} outside a {}-row plan", plan.height())));
    }
    let e = plan_extents(plan, conv_index)?[row];
    Ok((e.rows(), e.cols()))
}
