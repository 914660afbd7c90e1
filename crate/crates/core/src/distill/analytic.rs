use std::collections::BTreeMap;

use super::TargetCamera;
use crate::engine::{RowKernel, RowUntiedConv};
use crate::error::{Error, Result};
use crate::geometry::{bilinear_taps, row_theta, sphere_to_equirect, tangent_grid, SphericalCoord};
use crate::netspec::NetworkSpec;

/// First row-untied layer in closed form.
///
/// A target kernel tap at grid point `(i, j)` reads the bilinear blend of the
/// equirect pixels around that point's backprojection, so composing the
/// kernel with those coefficients gives a row kernel that reproduces the
/// target layer exactly. The support is the bounding box of all taps, made
/// odd and centered. `bound` clips it to `(max_h, max_w)`, dropping the
/// outermost coefficients and with them exactness.
pub fn analytic_first_layer(
    spec: &NetworkSpec,
    camera: &TargetCamera,
    height: usize,
    bound: Option<(usize, usize)>,
) -> Result<RowUntiedConv<f32>> {
    let conv = spec.folded_conv(0)?;
    if conv.stride != 1 {
        return Err(Error::InvalidSpec("the first conv must have stride 1".into()));
    }
    let width = 2 * height;
    let (kh, kw, d) = (conv.kernel_h, conv.kernel_w, conv.dilation);
    let (cin, cout) = (conv.in_channels, conv.out_channels);
    let side = d * (kh.max(kw) - 1) + 1;
    let (oi, oj) = ((side - 1 - d * (kh - 1)) / 2, (side - 1 - d * (kw - 1)) / 2);
    let mut rows = Vec::with_capacity(height);
    for y in 0..height {
        let cam = camera.at(SphericalCoord::new(row_theta(y, height), 0.0)?, side)?;
        let grid = tangent_grid(&cam);
        // (dy, dx) -> weight, per kernel tap
        let mut coeff: Vec<Vec<(i64, i64, f64)>> = Vec::with_capacity(kh * kw);
        for i in 0..kh {
            for j in 0..kw {
                let pt = &grid[(oi + d * i) * side + oj + d * j];
                let (ex, ey) = sphere_to_equirect(pt, width, height);
                coeff.push(
                    bilinear_taps(ex, ey, width, height)
                        .into_iter()
                        .map(|(tx, ty, w)| {
                            let dx = if tx > width / 2 { tx as i64 - width as i64 } else { tx as i64 };
                            (ty as i64 - y as i64, dx, w)
                        })
                        .collect(),
                );
            }
        }
        let mut ry = coeff.iter().flatten().map(|c| c.0.abs()).max().unwrap_or(0);
        let mut rx = coeff.iter().flatten().map(|c| c.1.abs()).max().unwrap_or(0);
        if let Some((bh, bw)) = bound {
            let (by, bx) = ((bh as i64 - 1) / 2, (bw as i64 - 1) / 2);
            if ry > by || rx > bx {
                log::warn!(
                    "row {y}: first-layer support {}x{} clipped to {bh}x{bw}",
                    2 * ry + 1,
                    2 * rx + 1
                );
            }
            ry = ry.min(by);
            rx = rx.min(bx);
        }
        let mut k = RowKernel::<f32>::zeros(cout, cin, (2 * ry + 1) as usize, (2 * rx + 1) as usize);
        for o in 0..cout {
            for c in 0..cin {
                let mut acc: BTreeMap<(i64, i64), f64> = BTreeMap::new();
                for (t, taps) in coeff.iter().enumerate() {
                    let wv = conv.weights[((o * cin + c) * kh + t / kw) * kw + t % kw];
                    for &(dy, dx, w) in taps {
                        if dy.abs() <= ry && dx.abs() <= rx {
                            *acc.entry((dy, dx)).or_insert(0.0) += wv * w;
                        }
                    }
                }
                for ((dy, dx), v) in acc {
                    let idx = k.index(cin, o, c, (dy + ry) as usize, (dx + rx) as usize);
                    k.weights[idx] = v as f32;
                }
            }
            k.bias[o] = conv.bias[o] as f32;
        }
        rows.push(k);
    }
    RowUntiedConv::new(cin, cout, 1, rows)
}
