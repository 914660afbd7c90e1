use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::TargetCamera;
use crate::engine::{Padding, Tensor};
use crate::error::{domain, shape, Error, Result};
use crate::geometry::{camera_sampling_map, equirect_to_sphere, project, row_theta, EquirectImage, SphericalCoord};
use crate::netspec::{ForwardOptions, NetworkSpec};

/// Target values of every supervised layer at one equirect position.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleSample {
    pub x: usize,
    pub y: usize,
    /// `targets[l]` holds the `C_out(l)` pre-activation values of layer `l`.
    pub targets: Vec<Vec<f32>>,
}

/// Patch half-width and, per supervised layer, the offset at which its
/// valid-mode output grid starts.
fn patch_geometry(spec: &NetworkSpec, n_layers: usize) -> Result<(usize, Vec<usize>)> {
    let convs = spec.conv_layers().len();
    if n_layers == 0 || n_layers > convs {
        return Err(Error::InvalidSpec(format!("{n_layers} supervised layers requested of {convs}")));
    }
    let mut half = 0;
    let mut starts = Vec::with_capacity(n_layers);
    for l in 0..n_layers {
        let (a, b) = spec.a_trous_reach(l)?;
        half = half.max(a.max(b));
        starts.push(a);
    }
    Ok((half, starts))
}

fn valid() -> ForwardOptions {
    ForwardOptions::a_trous(Padding::Valid)
}

/// Target outputs at arbitrary positions, each from its own tangent camera.
///
/// A patch just large enough for the deepest supervised layer is projected
/// around `(theta, phi)` of each position and the target network is run on
/// it at full resolution; the value at the patch center is recorded.
pub fn exact_oracle(
    img: &EquirectImage,
    spec: &NetworkSpec,
    camera: &TargetCamera,
    n_layers: usize,
    positions: &[(usize, usize)],
) -> Result<Vec<OracleSample>> {
    let (w, h) = (img.width(), img.height());
    let (half, starts) = patch_geometry(spec, n_layers)?;
    let p = 2 * half + 1;
    positions
        .par_iter()
        .map(|&(x, y)| {
            if x >= w || y >= h {
                return Err(domain(format!("position ({x}, {y}) outside a {w}x{h} image")));
            }
            let cam = camera.at(equirect_to_sphere(x as f64, y as f64, w, h)?, p)?;
            let patch = project(img, &camera_sampling_map(&cam, w, h)?)?;
            let outs = spec.conv_outputs::<f32>(&patch, n_layers, valid())?;
            let targets = outs
                .iter()
                .zip(&starts)
                .map(|(o, &a)| (0..o.channels()).map(|c| o.get(c, half - a, half - a)).collect())
                .collect();
            Ok(OracleSample { x, y, targets })
        })
        .collect()
}

/// Dense target maps, one `(C_out, H, W)` tensor per supervised layer.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleMaps {
    pub layers: Vec<Tensor<f32>>,
}

impl OracleMaps {
    pub fn sample(&self, layer: usize, x: usize, y: usize) -> Vec<f32> {
        let t = &self.layers[layer];
        (0..t.channels()).map(|c| t.get(c, y, x)).collect()
    }

    pub fn samples(&self, positions: &[(usize, usize)]) -> Vec<OracleSample> {
        positions
            .iter()
            .map(|&(x, y)| OracleSample {
                x,
                y,
                targets: (0..self.layers.len()).map(|l| self.sample(l, x, y)).collect(),
            })
            .collect()
    }
}

/// Target maps at every pixel.
///
/// Cameras along a row differ only by a whole-pixel azimuthal shift, so one
/// sampling map per row serves all its columns. The row's patches are laid
/// side by side in one strip and pushed through the network together; valid
/// convolution keeps each patch center's dependency cone inside its own
/// patch, so the centers are unaffected by their neighbours.
pub fn exact_maps(img: &EquirectImage, spec: &NetworkSpec, camera: &TargetCamera, n_layers: usize) -> Result<OracleMaps> {
    let (w, h, ch) = (img.width(), img.height(), img.channels());
    let (half, starts) = patch_geometry(spec, n_layers)?;
    let p = 2 * half + 1;
    let src = img.tensor().data();
    let plane = w * h;
    let rows: Vec<Vec<Tensor<f32>>> = (0..h)
        .into_par_iter()
        .map(|y| -> Result<Vec<Tensor<f32>>> {
            let cam = camera.at(SphericalCoord::new(row_theta(y, h), 0.0)?, p)?;
            let map = camera_sampling_map(&cam, w, h)?;
            let sw = w * p;
            let mut strip = Tensor::zeros(ch, p, sw);
            let data = strip.data_mut();
            for i in 0..p {
                for j in 0..p {
                    for t in map.pixel_taps(i * p + j) {
                        let (ty, tx) = (t.y as usize, t.x as usize);
                        for x in 0..w {
                            let sx = (tx + x) % w;
                            for c in 0..ch {
                                data[(c * p + i) * sw + x * p + j] += t.weight * src[c * plane + ty * w + sx];
                            }
                        }
                    }
                }
            }
            let outs = spec.conv_outputs::<f32>(&strip, n_layers, valid())?;
            Ok(outs
                .iter()
                .zip(&starts)
                .map(|(o, &a)| {
                    let mut row = Tensor::zeros(o.channels(), 1, w);
                    for c in 0..o.channels() {
                        let src = o.row(c, half - a);
                        for (x, v) in row.row_mut(c, 0).iter_mut().enumerate() {
                            *v = src[x * p + half - a];
                        }
                    }
                    row
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    let layers = (0..n_layers)
        .map(|l| {
            let c = rows[0][l].channels();
            let mut t = Tensor::zeros(c, h, w);
            for (y, r) in rows.iter().enumerate() {
                for k in 0..c {
                    t.row_mut(k, y).copy_from_slice(r[l].row(k, 0));
                }
            }
            t
        })
        .collect();
    Ok(OracleMaps { layers })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct OracleManifest {
    height: usize,
    width: usize,
    camera: TargetCamera,
    layers: Vec<String>,
    channels: Vec<usize>,
    images: Vec<String>,
    /// Raw little-endian f32 maps, image-major then layer-major.
    blob: String,
}

/// Dense targets for a set of named images.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleSet {
    pub camera: TargetCamera,
    pub layer_names: Vec<String>,
    pub images: Vec<String>,
    pub maps: Vec<OracleMaps>,
}

impl OracleSet {
    pub fn build(
        images: &[(String, EquirectImage)],
        spec: &NetworkSpec,
        camera: &TargetCamera,
        n_layers: usize,
    ) -> Result<Self> {
        let layer_names = (0..n_layers).map(|l| spec.conv(l).map(|c| c.name.clone())).collect::<Result<_>>()?;
        let maps = images
            .iter()
            .map(|(_, img)| exact_maps(img, spec, camera, n_layers))
            .collect::<Result<_>>()?;
        Ok(Self {
            camera: *camera,
            layer_names,
            images: images.iter().map(|(n, _)| n.clone()).collect(),
            maps,
        })
    }

    pub fn height(&self) -> usize {
        self.maps.first().map_or(0, |m| m.layers[0].height())
    }

    pub fn save(&self, manifest: &Path) -> Result<()> {
        let first = self.maps.first().ok_or_else(|| shape("empty oracle set"))?;
        let blob_name = format!(
            "{}.bin",
            manifest.file_stem().and_then(|s| s.to_str()).unwrap_or("oracle")
        );
        let m = OracleManifest {
            height: first.layers[0].height(),
            width: first.layers[0].width(),
            camera: self.camera,
            layers: self.layer_names.clone(),
            channels: first.layers.iter().map(|t| t.channels()).collect(),
            images: self.images.clone(),
            blob: blob_name.clone(),
        };
        let mut out = BufWriter::new(File::create(manifest.with_file_name(&blob_name))?);
        for maps in &self.maps {
            for t in &maps.layers {
                for v in t.data() {
                    out.write_all(&v.to_le_bytes())?;
                }
            }
        }
        out.flush()?;
        std::fs::write(manifest, toml::to_string(&m)?)?;
        Ok(())
    }

    pub fn load(manifest: &Path) -> Result<Self> {
        let m: OracleManifest = toml::from_str(&std::fs::read_to_string(manifest)?)?;
        if m.layers.len() != m.channels.len() || m.width != 2 * m.height {
            return Err(Error::Format("inconsistent oracle manifest".into()));
        }
        let mut r = BufReader::new(File::open(manifest.with_file_name(&m.blob))?);
        let mut maps = Vec::with_capacity(m.images.len());
        let mut buf = Vec::new();
        for _ in &m.images {
            let mut layers = Vec::with_capacity(m.channels.len());
            for &c in &m.channels {
                let n = c * m.height * m.width;
                buf.resize(4 * n, 0);
                r.read_exact(&mut buf)
                    .map_err(|_| Error::Format("oracle blob is shorter than its manifest".into()))?;
                let data = buf.chunks_exact(4).map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]])).collect();
                layers.push(Tensor::from_vec(c, m.height, m.width, data)?);
            }
            maps.push(OracleMaps { layers });
        }
        if r.read(&mut [0u8])? != 0 {
            return Err(Error::Format("oracle blob is longer than its manifest".into()));
        }
        Ok(Self {
            camera: m.camera,
            layer_names: m.layers,
            images: m.images,
            maps,
        })
    }
}
