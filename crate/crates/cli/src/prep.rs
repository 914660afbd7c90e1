//! Perspective object images placed on the sphere.

use anyhow::{bail, Result};

use sphconv_core::distill::TargetCamera;
use sphconv_core::engine::Tensor;
use sphconv_core::geometry::{equirect_to_sphere, EquirectImage, SphericalCoord, TangentCamera};

/// Pixel box `[x0, x1) x [y0, y1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BBox {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

impl BBox {
    fn center(&self) -> (f64, f64) {
        ((self.x0 + self.x1) as f64 / 2.0 - 0.5, (self.y0 + self.y1) as f64 / 2.0 - 0.5)
    }
}

/// Resizes `img` so the box's short side spans `scale` target pixels, puts
/// the box center on the tangent point `(theta, 180)` and unwraps the result
/// into a `2H x H` equirect image. Everything outside the box is zero.
pub fn prep_pascal(
    img: &Tensor<f32>,
    bbox: BBox,
    scale: f64,
    theta: f64,
    camera: &TargetCamera,
    height: usize,
) -> Result<EquirectImage> {
    let (c, ih, iw) = img.dims();
    if bbox.x1 <= bbox.x0 || bbox.y1 <= bbox.y0 {
        bail!("degenerate box {bbox:?}");
    }
    if bbox.x1 > iw || bbox.y1 > ih {
        bail!("box {bbox:?} outside a {iw}x{ih} image");
    }
    if !(scale > 0.0) {
        bail!("scale must be positive");
    }
    let short = (bbox.x1 - bbox.x0).min(bbox.y1 - bbox.y0) as f64;
    // source pixels per target pixel
    let step = short / scale;
    let pitch = camera.pitch();
    let cam = TangentCamera::with_pitch(SphericalCoord::new(theta, 180.0)?, pitch, 1)?;
    let (cx, cy) = bbox.center();
    let (lo_x, hi_x) = (bbox.x0 as f64 - 0.5, bbox.x1 as f64 - 0.5);
    let (lo_y, hi_y) = (bbox.y0 as f64 - 0.5, bbox.y1 as f64 - 0.5);
    let w = 2 * height;
    let mut out = EquirectImage::zeros(c, height);
    for y in 0..height {
        for x in 0..w {
            let d = equirect_to_sphere(x as f64, y as f64, w, height)?;
            let Some((u, v)) = cam.sphere_to_plane(&d) else { continue };
            let sx = cx + u / pitch * step;
            let sy = cy - v / pitch * step;
            if sx < lo_x || sx >= hi_x || sy < lo_y || sy >= hi_y {
                continue;
            }
            // bilinear inside the box
            let fx = sx.clamp(bbox.x0 as f64, (bbox.x1 - 1) as f64);
            let fy = sy.clamp(bbox.y0 as f64, (bbox.y1 - 1) as f64);
            let (x0, y0) = (fx.floor() as usize, fy.floor() as usize);
            let (x1, y1) = ((x0 + 1).min(bbox.x1 - 1), (y0 + 1).min(bbox.y1 - 1));
            let (ax, ay) = ((fx - x0 as f64) as f32, (fy - y0 as f64) as f32);
            for ch in 0..c {
                let top = img.get(ch, y0, x0) * (1.0 - ax) + img.get(ch, y0, x1) * ax;
                let bot = img.get(ch, y1, x0) * (1.0 - ax) + img.get(ch, y1, x1) * ax;
                out.set(ch, y, x, top * (1.0 - ay) + bot * ay);
            }
        }
    }
    Ok(out)
}

/// `file,x0,y0,x1,y1` lines; a non-numeric first line is taken as a header.
pub fn parse_boxes(text: &str) -> Result<Vec<(String, BBox)>> {
    let mut v = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        let nums: Option<Vec<usize>> = f.get(1..5).map(|s| s.iter().filter_map(|n| n.parse().ok()).collect());
        match nums {
            Some(n) if f.len() == 5 && n.len() == 4 => v.push((
                f[0].to_string(),
                BBox {
                    x0: n[0],
                    y0: n[1],
                    x1: n[2],
                    y1: n[3],
                },
            )),
            _ if i == 0 => continue,
            _ => bail!("line {}: expected file,x0,y0,x1,y1", i + 1),
        }
    }
    Ok(v)
}
