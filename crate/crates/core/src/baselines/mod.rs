//! The comparison methods and the evaluation that ranks them against the
//! exact targets.

mod metrics;
mod report;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distill::{exact_maps, exact_oracle, OracleMaps, SphConvNetwork, TargetCamera};
use crate::engine::{Padding, Tensor};
use crate::error::{Error, Result};
use crate::geometry::{
    camera_sampling_map, cubemap_cameras, equirect_to_sphere, nearest_row, project, sample_faces, EquirectImage,
};
use crate::netspec::{ForwardOptions, NetworkSpec};

pub use metrics::{mean_predictor, mean_predictor_rmse, normalized_rmse, rmse};
pub use report::{EvalReport, EvalRow};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BaselineKind {
    Exact,
    Direct,
    Interp,
    Perspective,
    #[serde(rename = "sphconv-pre")]
    SphConvPre,
    #[serde(rename = "sphconv")]
    SphConv,
    #[serde(rename = "optsphconv")]
    OptSphConv,
}

impl BaselineKind {
    pub const ALL: [BaselineKind; 7] = [
        Self::Exact,
        Self::Direct,
        Self::Interp,
        Self::Perspective,
        Self::SphConvPre,
        Self::SphConv,
        Self::OptSphConv,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Exact => "exact",
            Self::Direct => "direct",
            Self::Interp => "interp",
            Self::Perspective => "perspective",
            Self::SphConvPre => "sphconv-pre",
            Self::SphConv => "sphconv",
            Self::OptSphConv => "optsphconv",
        }
    }
}

impl fmt::Display for BaselineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BaselineKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::MissingConfig(format!("unknown method {s}")))
    }
}

/// What the methods need besides the image.
#[derive(Debug, Clone, Copy)]
pub struct MethodConfig<'a> {
    pub spec: &'a NetworkSpec,
    pub camera: TargetCamera,
    /// Supervised layers to report.
    pub n_layers: usize,
    /// Interp lattice spacing in equirect pixels.
    pub spacing: Option<usize>,
    /// Cube face side for the perspective method.
    pub face: Option<usize>,
    /// Kernel-wise pretrained network (sphconv-pre and optsphconv).
    pub pretrained: Option<&'a SphConvNetwork>,
    /// Fine-tuned network (sphconv).
    pub finetuned: Option<&'a SphConvNetwork>,
}

/// `values[l][k]` is the channel vector of layer `l` at position `k`.
pub type Features = Vec<Vec<Vec<f32>>>;

fn read_dense(maps: &[Tensor<f32>], positions: &[(usize, usize)]) -> Features {
    maps.iter()
        .map(|t| {
            positions
                .iter()
                .map(|&(x, y)| (0..t.channels()).map(|c| t.get(c, y, x)).collect())
                .collect()
        })
        .collect()
}

fn need<T>(v: Option<T>, what: &str) -> Result<T> {
    v.ok_or_else(|| Error::MissingConfig(what.into()))
}

fn check_layers(n: usize, have: usize) -> Result<()> {
    if n == 0 || n > have {
        return Err(Error::MissingConfig(format!("{n} layers requested, {have} available")));
    }
    Ok(())
}

/// Exact values at lattice points `S` apart, blended bilinearly in equirect
/// coordinates. Columns wrap; rows past the last lattice row hold its value.
fn interp(
    img: &EquirectImage,
    cfg: &MethodConfig,
    exact: Option<&OracleMaps>,
    positions: &[(usize, usize)],
) -> Result<Features> {
    let s = need(cfg.spacing, "interp: lattice spacing")?;
    if s == 0 {
        return Err(Error::MissingConfig("interp: spacing must be positive".into()));
    }
    let (w, h) = (img.width(), img.height());
    let last_row = (h - 1) / s * s;
    let mut corners = Vec::with_capacity(positions.len());
    let mut needed: Vec<(usize, usize)> = Vec::new();
    for &(x, y) in positions {
        let x0 = x / s * s;
        let x1 = (x0 + s).min(w);
        let fx = (x - x0) as f64 / (x1 - x0) as f64;
        let y0 = (y / s * s).min(last_row);
        let (y1, fy) = if y0 + s <= last_row {
            (y0 + s, (y - y0) as f64 / s as f64)
        } else {
            (y0, 0.0)
        };
        let c = [(x0, y0), (x1 % w, y0), (x0, y1), (x1 % w, y1)];
        needed.extend_from_slice(&c);
        corners.push((c, fx, fy));
    }
    needed.sort_unstable();
    needed.dedup();
    let values: BTreeMap<(usize, usize), Vec<Vec<f32>>> = match exact {
        Some(m) => needed.iter().map(|&p| (p, m.layers.iter().map(|t| (0..t.channels()).map(|c| t.get(c, p.1, p.0)).collect()).collect())).collect(),
        None => exact_oracle(img, cfg.spec, &cfg.camera, cfg.n_layers, &needed)?
            .into_iter()
            .map(|s| ((s.x, s.y), s.targets))
            .collect(),
    };
    Ok((0..cfg.n_layers)
        .map(|l| {
            corners
                .iter()
                .map(|(c, fx, fy)| {
                    let v: Vec<&Vec<f32>> = c.iter().map(|p| &values[p][l]).collect();
                    (0..v[0].len())
                        .map(|k| {
                            let top = v[0][k] as f64 * (1.0 - fx) + v[1][k] as f64 * fx;
                            let bot = v[2][k] as f64 * (1.0 - fx) + v[3][k] as f64 * fx;
                            (top * (1.0 - fy) + bot * fy) as f32
                        })
                        .collect()
                })
                .collect()
        })
        .collect())
}

/// The target network on six cube faces, read back at each position from
/// the face that owns its direction.
fn perspective(img: &EquirectImage, cfg: &MethodConfig, positions: &[(usize, usize)]) -> Result<Features> {
    let face = need(cfg.face, "perspective: cube face size")?;
    let (w, h) = (img.width(), img.height());
    let cams = cubemap_cameras(face)?;
    let per_face: Vec<Vec<Tensor<f32>>> = cams
        .par_iter()
        .map(|cam| {
            let t = project(img, &camera_sampling_map(cam, w, h)?)?;
            cfg.spec
                .conv_outputs::<f32>(&t, cfg.n_layers, ForwardOptions::a_trous(Padding::Same))
        })
        .collect::<Result<_>>()?;
    let mut out: Features = Vec::with_capacity(cfg.n_layers);
    for l in 0..cfg.n_layers {
        let faces: Vec<Tensor<f32>> = per_face.iter().map(|f| f[l].clone()).collect();
        let mut vals = Vec::with_capacity(positions.len());
        for &(x, y) in positions {
            let d = equirect_to_sphere(x as f64, y as f64, w, h)?.to_vector();
            let mut px = vec![0.0; faces[0].channels()];
            sample_faces(&faces, &cams, d, &mut px);
            vals.push(px);
        }
        out.push(vals);
    }
    Ok(out)
}

/// Features of the first `cfg.n_layers` supervised layers at `positions`.
///
/// `exact` may carry precomputed dense targets for this image; methods that
/// need exact values compute them when it is absent.
pub fn run_method(
    kind: BaselineKind,
    img: &EquirectImage,
    cfg: &MethodConfig,
    exact: Option<&OracleMaps>,
    positions: &[(usize, usize)],
) -> Result<Features> {
    let (w, h) = (img.width(), img.height());
    if let Some(&(x, y)) = positions.iter().find(|(x, y)| *x >= w || *y >= h) {
        return Err(Error::Domain(format!("position ({x}, {y}) outside a {w}x{h} image")));
    }
    check_layers(cfg.n_layers, cfg.spec.conv_layers().len())?;
    match kind {
        BaselineKind::Exact => match exact {
            Some(m) => {
                check_layers(cfg.n_layers, m.layers.len())?;
                Ok(read_dense(&m.layers[..cfg.n_layers], positions))
            }
            None => {
                let s = exact_oracle(img, cfg.spec, &cfg.camera, cfg.n_layers, positions)?;
                Ok((0..cfg.n_layers).map(|l| s.iter().map(|p| p.targets[l].clone()).collect()).collect())
            }
        },
        BaselineKind::Direct => {
            let outs = cfg
                .spec
                .conv_outputs::<f32>(img.tensor(), cfg.n_layers, ForwardOptions::a_trous(Padding::Same))?;
            Ok(read_dense(&outs, positions))
        }
        BaselineKind::Interp => interp(img, cfg, exact, positions),
        BaselineKind::Perspective => perspective(img, cfg, positions),
        BaselineKind::SphConvPre | BaselineKind::SphConv => {
            let net = if kind == BaselineKind::SphConv {
                need(cfg.finetuned, "sphconv: fine-tuned network")?
            } else {
                need(cfg.pretrained, "sphconv-pre: pretrained network")?
            };
            check_layers(cfg.n_layers, net.layers.len())?;
            Ok(read_dense(&net.forward_upto(img.tensor(), cfg.n_layers)?, positions))
        }
        BaselineKind::OptSphConv => {
            let net = need(cfg.pretrained, "optsphconv: pretrained network")?;
            check_layers(cfg.n_layers, net.layers.len())?;
            let owned;
            let m = match exact {
                Some(m) => m,
                None => {
                    owned = exact_maps(img, cfg.spec, &cfg.camera, cfg.n_layers)?;
                    &owned
                }
            };
            let mut outs = vec![net.layers[0].forward(img.tensor())?];
            for l in 1..cfg.n_layers {
                outs.push(net.forward_layer(l, &m.layers[l - 1])?);
            }
            Ok(read_dense(&outs, positions))
        }
    }
}

/// Per-theta evaluation of each method on a set of images.
///
/// For every polar angle the positions are the given columns of the
/// nearest row. Errors are RMSEs over all those positions, images and
/// channels, divided by the RMSE of the per-channel mean of the exact
/// targets at that same angle.
pub fn evaluate(
    methods: &[BaselineKind],
    images: &[EquirectImage],
    exact: &[OracleMaps],
    cfg: &MethodConfig,
    thetas: &[f64],
    columns: &[usize],
) -> Result<EvalReport> {
    if images.is_empty() || images.len() != exact.len() {
        return Err(Error::MissingGroundTruth(format!("{} images for {} target sets", images.len(), exact.len())));
    }
    let h = images[0].height();
    let rows: Vec<usize> = thetas.iter().map(|t| nearest_row(*t, h)).collect();
    let positions: Vec<(usize, usize)> = rows.iter().flat_map(|&y| columns.iter().map(move |&x| (x, y))).collect();
    let per = columns.len();
    let targets: Vec<Features> = exact.iter().map(|m| read_dense(&m.layers[..cfg.n_layers], &positions)).collect();
    let mut report = EvalReport::default();
    for &kind in methods {
        let preds: Vec<Features> = images
            .par_iter()
            .zip(exact)
            .map(|(img, m)| run_method(kind, img, cfg, Some(m), &positions))
            .collect::<Result<_>>()?;
        for l in 0..cfg.n_layers {
            for (ti, &theta) in thetas.iter().enumerate() {
                let range = ti * per..(ti + 1) * per;
                let mut p = Vec::new();
                let mut t = Vec::new();
                for (pi, ti_) in preds.iter().zip(&targets) {
                    p.extend_from_slice(&pi[l][range.clone()]);
                    t.extend_from_slice(&ti_[l][range.clone()]);
                }
                let norm = mean_predictor_rmse(&t)?;
                report.rows.push(EvalRow {
                    method: kind,
                    layer: cfg.spec.conv(l)?.name.clone(),
                    theta,
                    normalized_rmse: normalized_rmse(&p, &t, norm)?,
                    macs: None,
                });
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distill::synth::synth_image;
    use crate::distill::{normalize_input, Lattice};

    #[derive(Serialize, Deserialize)]
    struct Methods {
        m: Vec<BaselineKind>,
    }

    #[test]
    fn names_parse_and_serialize_alike() {
        let text = toml::to_string(&Methods { m: BaselineKind::ALL.to_vec() }).unwrap();
        for k in BaselineKind::ALL {
            assert_eq!(k.name().parse::<BaselineKind>().unwrap(), k);
            assert!(text.contains(&format!("\"{}\"", k.name())), "{text}");
        }
        assert_eq!(toml::from_str::<Methods>(&text).unwrap().m, BaselineKind::ALL.to_vec());
        assert!("sph-conv".parse::<BaselineKind>().is_err());
    }

    fn cfg(spec: &NetworkSpec) -> MethodConfig<'_> {
        MethodConfig {
            spec,
            camera: TargetCamera { fov: 45.0, width: 16 },
            n_layers: 3,
            spacing: Some(1),
            face: Some(24),
            pretrained: None,
            finetuned: None,
        }
    }

    #[test]
    fn names_round_trip() {
        for k in BaselineKind::ALL {
            assert_eq!(k.name().parse::<BaselineKind>().unwrap(), k);
        }
        assert!("bogus".parse::<BaselineKind>().is_err());
    }

    #[test]
    fn interp_at_unit_spacing_is_exact() {
        let spec = NetworkSpec::toy(1);
        let img = normalize_input(&synth_image(3, 16, 3), &spec).unwrap();
        let c = cfg(&spec);
        let pos = Lattice { per_row: 8, row_stride: 3 }.positions(32, 16);
        let e = run_method(BaselineKind::Exact, &img, &c, None, &pos).unwrap();
        let i = run_method(BaselineKind::Interp, &img, &c, None, &pos).unwrap();
        for l in 0..3 {
            for (a, b) in e[l].iter().flatten().zip(i[l].iter().flatten()) {
                assert!((a - b).abs() < 1e-5);
            }
        }
        // sparser lattices interpolate between exact values
        let coarse = MethodConfig { spacing: Some(5), ..c };
        let v = run_method(BaselineKind::Interp, &img, &coarse, None, &[(5, 5), (7, 5), (31, 15)]).unwrap();
        let at = run_method(BaselineKind::Exact, &img, &c, None, &[(5, 5), (10, 5), (30, 15), (0, 15)]).unwrap();
        assert_eq!(v[0][0], at[0][0]);
        for k in 0..8 {
            let want = 0.6 * at[0][0][k] + 0.4 * at[0][1][k];
            assert!((v[0][1][k] - want).abs() < 1e-5);
            // past the last lattice column the blend wraps to column 0
            let want = 0.5 * at[0][2][k] + 0.5 * at[0][3][k];
            assert!((v[0][2][k] - want).abs() < 1e-5);
        }
    }

    #[test]
    fn unconfigured_methods_are_reported() {
        let spec = NetworkSpec::toy(1);
        let img = synth_image(3, 8, 0);
        let c = MethodConfig {
            spacing: None,
            face: None,
            ..cfg(&spec)
        };
        for k in [BaselineKind::Interp, BaselineKind::Perspective, BaselineKind::SphConv, BaselineKind::OptSphConv] {
            assert!(matches!(run_method(k, &img, &c, None, &[(0, 0)]), Err(Error::MissingConfig(_))));
        }
        assert!(run_method(BaselineKind::Direct, &img, &c, None, &[(16, 0)]).is_err());
    }

    #[test]
    fn perspective_is_close_to_exact_away_from_face_edges() {
        let spec = NetworkSpec::toy(2);
        let img = normalize_input(&synth_image(3, 32, 5), &spec).unwrap();
        // face pitch equal to the target pitch
        let camera = TargetCamera { fov: 45.0, width: 24 };
        let face = (2.0 / camera.pitch()).round() as usize;
        let c = MethodConfig {
            camera,
            face: Some(face),
            n_layers: 1,
            ..cfg(&spec)
        };
        // face centers: equator at phi 0 and 90, and the north pole
        let pos = [(0, 16), (16, 16), (0, 0)];
        let p = run_method(BaselineKind::Perspective, &img, &c, None, &pos).unwrap();
        let e = run_method(BaselineKind::Exact, &img, &c, None, &pos).unwrap();
        for (a, b) in p[0].iter().flatten().zip(e[0].iter().flatten()) {
            assert!((a - b).abs() < 0.05 * (1.0 + b.abs()), "{a} vs {b}");
        }
    }

    #[test]
    fn exact_scores_zero_and_mean_scale_methods_are_positive() {
        let spec = NetworkSpec::toy(3);
        let imgs: Vec<_> = (0..2).map(|i| normalize_input(&synth_image(3, 16, i), &spec).unwrap()).collect();
        let c = cfg(&spec);
        let maps: Vec<_> = imgs.iter().map(|i| exact_maps(i, &spec, &c.camera, 3).unwrap()).collect();
        let cols = Lattice::default().columns(32);
        let r = evaluate(
            &[BaselineKind::Exact, BaselineKind::Direct],
            &imgs,
            &maps,
            &c,
            &[18.0, 54.0, 90.0],
            &cols,
        )
        .unwrap();
        assert_eq!(r.rows.len(), 2 * 3 * 3);
        for row in &r.rows {
            let v = row.normalized_rmse.unwrap();
            match row.method {
                BaselineKind::Exact => assert_eq!(v, 0.0),
                _ => assert!(v > 0.0),
            }
        }
        let again = evaluate(&[BaselineKind::Direct], &imgs, &maps, &c, &[18.0, 54.0, 90.0], &cols).unwrap();
        assert_eq!(again.to_csv(), evaluate(&[BaselineKind::Direct], &imgs, &maps, &c, &[18.0, 54.0, 90.0], &cols).unwrap().to_csv());
    }
}
