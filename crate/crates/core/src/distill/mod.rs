//! The learning pipeline: exact targets from tangent-plane projections, the
//! closed-form first layer, kernel-wise pretraining and joint fine-tuning.
//!
//! Every operation here takes images that have already been through
//! [`normalize_input`].

mod analytic;
mod config;
mod finetune;
mod network;
mod oracle;
mod pretrain;
pub mod synth;

use serde::{Deserialize, Serialize};

pub use analytic::analytic_first_layer;
pub use config::{FinetuneStage, Schedule, TrainConfig};
pub use finetune::{finetune, FinetuneReport};
pub use network::{NetworkManifest, SphConvNetwork};
pub use oracle::{exact_maps, exact_oracle, OracleMaps, OracleSample, OracleSet};
pub use pretrain::{pretrain_all, pretrain_kernel, KernelReport, PretrainData, PretrainReport};

use crate::error::Result;
use crate::geometry::{EquirectImage, SphericalCoord, TangentCamera};
use crate::netspec::NetworkSpec;
use crate::planner::PlanConfig;

/// Tangent-plane resolution the target network was trained at.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetCamera {
    /// Field of view in degrees.
    pub fov: f64,
    /// Image width in pixels.
    pub width: usize,
}

impl TargetCamera {
    pub fn pitch(&self) -> f64 {
        2.0 * (self.fov.to_radians() / 2.0).tan() / self.width as f64
    }

    /// A `patch x patch` crop at the target pitch, tangent at `center`.
    pub fn at(&self, center: SphericalCoord, patch: usize) -> Result<TangentCamera> {
        TangentCamera::with_pitch(center, self.pitch(), patch)
    }
}

impl From<&PlanConfig> for TargetCamera {
    fn from(c: &PlanConfig) -> Self {
        Self {
            fov: c.fov,
            width: c.tangent_width,
        }
    }
}

/// Supervised positions: `per_row` evenly spaced columns on every
/// `row_stride`-th row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lattice {
    pub per_row: usize,
    pub row_stride: usize,
}

impl Default for Lattice {
    fn default() -> Self {
        Self {
            per_row: 40,
            row_stride: 1,
        }
    }
}

impl Lattice {
    pub fn columns(&self, width: usize) -> Vec<usize> {
        let n = self.per_row.clamp(1, width);
        (0..n).map(|k| k * width / n).collect()
    }

    pub fn rows(&self, height: usize) -> Vec<usize> {
        (0..height).step_by(self.row_stride.max(1)).collect()
    }

    /// Row-major `(x, y)` positions.
    pub fn positions(&self, width: usize, height: usize) -> Vec<(usize, usize)> {
        let cols = self.columns(width);
        self.rows(height)
            .into_iter()
            .flat_map(|y| cols.iter().map(move |&x| (x, y)))
            .collect()
    }
}

/// Subtracts the network's channel means.
pub fn normalize_input(img: &EquirectImage, spec: &NetworkSpec) -> Result<EquirectImage> {
    let mut out = img.clone();
    out.subtract_mean(&spec.channel_means)?;
    Ok(out)
}
