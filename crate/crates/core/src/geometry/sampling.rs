use std::io::{Read, Write};

use super::{sphere_to_equirect, EquirectImage, SphericalCoord};
use crate::engine::Tensor;
use crate::error::{shape, Error, Result};

/// Fractional positions this close to a pixel center count as exact hits.
const SNAP: f64 = 1e-9;

/// One bilinear tap: source column, source row and weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tap {
    pub x: u32,
    pub y: u32,
    pub weight: f32,
}

fn snap(v: f64) -> f64 {
    let r = v.round();
    if (v - r).abs() < SNAP {
        r
    } else {
        v
    }
}

/// Bilinear weights (in f64) of a fractional equirectangular position over the
/// surrounding pixel centers. Columns wrap; rows clamp at the polar rows.
/// Zero-weight taps are dropped, so an exact hit yields a single tap.
pub fn bilinear_taps(x: f64, y: f64, width: usize, height: usize) -> Vec<(usize, usize, f64)> {
    let x = snap(x.rem_euclid(width as f64));
    let y = snap(y).clamp(0.0, (height - 1) as f64);
    let x0 = x.floor();
    let y0 = y.floor();
    let fx = x - x0;
    let fy = y - y0;
    let x0 = x0 as usize % width;
    let x1 = (x0 + 1) % width;
    let y0 = y0 as usize;
    let y1 = (y0 + 1).min(height - 1);
    let mut taps = Vec::with_capacity(4);
    for (yy, wy) in [(y0, 1.0 - fy), (y1, fy)] {
        if wy <= 0.0 {
            continue;
        }
        for (xx, wx) in [(x0, 1.0 - fx), (x1, fx)] {
            if wx <= 0.0 {
                continue;
            }
            taps.push((xx, yy, wx * wy));
        }
    }
    taps
}

/// Sparse linear operator taking an equirectangular image to a planar grid.
///
/// Stored in compressed-row form: the taps of output pixel `i` are
/// `taps[offsets[i]..offsets[i + 1]]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplingMap {
    out_width: usize,
    out_height: usize,
    src_width: usize,
    src_height: usize,
    offsets: Vec<usize>,
    taps: Vec<Tap>,
}

pub fn build_sampling_map(
    grid: &[SphericalCoord],
    out_width: usize,
    out_height: usize,
    src_width: usize,
    src_height: usize,
) -> Result<SamplingMap> {
    if grid.len() != out_width * out_height {
        return Err(shape(format!(
            "grid of {} points for a {out_width}x{out_height} output",
            grid.len()
        )));
    }
    if src_width != 2 * src_height || src_height == 0 {
        return Err(shape("source grid must satisfy W = 2H"));
    }
    let mut offsets = Vec::with_capacity(grid.len() + 1);
    let mut taps = Vec::with_capacity(grid.len() * 4);
    offsets.push(0);
    for c in grid {
        let (x, y) = sphere_to_equirect(c, src_width, src_height);
        for (tx, ty, w) in bilinear_taps(x, y, src_width, src_height) {
            taps.push(Tap {
                x: tx as u32,
                y: ty as u32,
                weight: w as f32,
            });
        }
        offsets.push(taps.len());
    }
    Ok(SamplingMap {
        out_width,
        out_height,
        src_width,
        src_height,
        offsets,
        taps,
    })
}

impl SamplingMap {
    pub fn out_width(&self) -> usize {
        self.out_width
    }

    pub fn out_height(&self) -> usize {
        self.out_height
    }

    pub fn src_dims(&self) -> (usize, usize) {
        (self.src_width, self.src_height)
    }

    pub fn pixel_taps(&self, i: usize) -> &[Tap] {
        &self.taps[self.offsets[i]..self.offsets[i + 1]]
    }

    pub fn len(&self) -> usize {
        self.out_width * self.out_height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Same map with every source column shifted by `dx` (azimuthal rotation
    /// by a whole number of equirectangular pixels).
    pub fn shifted(&self, dx: usize) -> SamplingMap {
        let w = self.src_width as u32;
        let dx = (dx % self.src_width) as u32;
        let taps = self
            .taps
            .iter()
            .map(|t| Tap {
                x: (t.x + dx) % w,
                ..*t
            })
            .collect();
        SamplingMap {
            taps,
            ..self.clone()
        }
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(b"SMAP")?;
        for v in [
            1u32,
            self.out_width as u32,
            self.out_height as u32,
            self.src_width as u32,
            self.src_height as u32,
        ] {
            w.write_all(&v.to_le_bytes())?;
        }
        for i in 0..self.len() {
            let taps = self.pixel_taps(i);
            w.write_all(&(taps.len() as u32).to_le_bytes())?;
            for t in taps {
                w.write_all(&t.x.to_le_bytes())?;
                w.write_all(&t.y.to_le_bytes())?;
                w.write_all(&t.weight.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != b"SMAP" {
            return Err(Error::Format("sampling map magic mismatch".into()));
        }
        let mut u32s = [0u32; 5];
        for v in u32s.iter_mut() {
            *v = read_u32(&mut r)?;
        }
        if u32s[0] != 1 {
            return Err(Error::Format(format!("unsupported SMAP version {}", u32s[0])));
        }
        let [_, ow, oh, sw, sh] = u32s.map(|v| v as usize);
        let mut offsets = vec![0];
        let mut taps = Vec::new();
        for _ in 0..ow * oh {
            let n = read_u32(&mut r)?;
            if n > 4 {
                return Err(Error::Format(format!("{n} taps for one pixel")));
            }
            for _ in 0..n {
                let x = read_u32(&mut r)?;
                let y = read_u32(&mut r)?;
                let weight = f32::from_bits(read_u32(&mut r)?);
                if x as usize >= sw || y as usize >= sh {
                    return Err(Error::Format("tap outside source grid".into()));
                }
                taps.push(Tap { x, y, weight });
            }
            offsets.push(taps.len());
        }
        Ok(Self {
            out_width: ow,
            out_height: oh,
            src_width: sw,
            src_height: sh,
            offsets,
            taps,
        })
    }
}

pub(crate) fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

/// Resamples an equirectangular image through a sampling map, producing a
/// `(C, out_height, out_width)` planar image.
pub fn project(img: &EquirectImage, map: &SamplingMap) -> Result<Tensor<f32>> {
    project_tensor(img.tensor(), map)
}

/// [`project`] for any `(C, H_e, W_e)` tensor, e.g. feature maps.
pub fn project_tensor(src: &Tensor<f32>, map: &SamplingMap) -> Result<Tensor<f32>> {
    if (src.width(), src.height()) != map.src_dims() {
        return Err(shape(format!(
            "map built for {:?}, image is {}x{}",
            map.src_dims(),
            src.width(),
            src.height()
        )));
    }
    let mut out = Tensor::zeros(src.channels(), map.out_height, map.out_width);
    for c in 0..src.channels() {
        let plane = src.channel(c);
        let dst = out.channel_mut(c);
        for (i, d) in dst.iter_mut().enumerate() {
            let mut acc = 0.0f32;
            for t in map.pixel_taps(i) {
                acc += t.weight * plane[t.y as usize * map.src_width + t.x as usize];
            }
            *d = acc;
        }
    }
    Ok(out)
}
