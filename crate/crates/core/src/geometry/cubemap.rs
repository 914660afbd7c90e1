use super::coords::dot;
use super::{equirect_to_sphere, EquirectImage, SphericalCoord, TangentCamera};
use crate::engine::Tensor;
use crate::error::{shape, Result};

/// Face order: +x, +y, -x, -y (around the equator), then north and south.
pub const FACE_CENTERS: [(f64, f64); 6] = [
    (90.0, 0.0),
    (90.0, 90.0),
    (90.0, 180.0),
    (90.0, 270.0),
    (0.0, 0.0),
    (180.0, 0.0),
];

/// Six 90-degree cameras tiling the sphere, `width` pixels per side.
pub fn cubemap_cameras(width: usize) -> Result<[TangentCamera; 6]> {
    let mk = |i: usize| {
        let (t, p) = FACE_CENTERS[i];
        TangentCamera::new(SphericalCoord::new(t, p)?, 90.0, width)
    };
    Ok([mk(0)?, mk(1)?, mk(2)?, mk(3)?, mk(4)?, mk(5)?])
}

/// Index of the face owning a direction: the one whose axis has the largest
/// component. Ties go to the lower index.
pub fn owning_face(d: [f64; 3]) -> usize {
    let axes = [
        d[0], d[1], -d[0], -d[1], d[2], -d[2],
    ];
    let mut best = 0;
    for i in 1..6 {
        if axes[i] > axes[best] {
            best = i;
        }
    }
    best
}

/// Bilinear sample of a planar `(C, W, W)` map at a fractional pixel position,
/// clamping at the borders.
pub(crate) fn sample_planar(t: &Tensor<f32>, col: f64, row: f64, out: &mut [f32]) {
    let (h, w) = (t.height(), t.width());
    let x = col.clamp(0.0, (w - 1) as f64);
    let y = row.clamp(0.0, (h - 1) as f64);
    let x0 = x.floor() as usize;
    let y0 = y.floor() as usize;
    let x1 = (x0 + 1).min(w - 1);
    let y1 = (y0 + 1).min(h - 1);
    let fx = x - x0 as f64;
    let fy = y - y0 as f64;
    for (c, o) in out.iter_mut().enumerate() {
        let p = t.channel(c);
        let at = |r: usize, q: usize| p[r * w + q] as f64;
        let top = at(y0, x0) + (at(y0, x1) - at(y0, x0)) * fx;
        let bot = at(y1, x0) + (at(y1, x1) - at(y1, x0)) * fx;
        *o = (top + (bot - top) * fy) as f32;
    }
}

/// Samples cube-face maps along a direction: picks the owning face and
/// interpolates bilinearly inside it.
pub fn sample_faces(
    faces: &[Tensor<f32>],
    cameras: &[TangentCamera; 6],
    d: [f64; 3],
    out: &mut [f32],
) {
    let f = owning_face(d);
    let cam = &cameras[f];
    let (fw, _, _) = cam.frame();
    debug_assert!(dot(fw, d) > 0.0);
    let (u, v) = cam.vector_to_plane(d).expect("owning face faces the direction");
    let (col, row) = cam.plane_to_pixel(u, v);
    sample_planar(&faces[f], col, row, out);
}

/// Assembles an equirectangular map from six face maps by face ownership.
pub fn equirect_from_faces(faces: &[Tensor<f32>], width: usize, height: usize) -> Result<EquirectImage> {
    if faces.len() != 6 {
        return Err(shape(format!("expected 6 faces, got {}", faces.len())));
    }
    let side = faces[0].width();
    let channels = faces[0].channels();
    if faces
        .iter()
        .any(|f| f.width() != side || f.height() != side || f.channels() != channels)
    {
        return Err(shape("cube faces must share dimensions"));
    }
    if width != 2 * height {
        return Err(shape("equirectangular output needs W = 2H"));
    }
    let cams = cubemap_cameras(side)?;
    let mut out = Tensor::zeros(channels, height, width);
    let mut px = vec![0.0f32; channels];
    for y in 0..height {
        for x in 0..width {
            let d = equirect_to_sphere(x as f64, y as f64, width, height)?.to_vector();
            sample_faces(faces, &cams, d, &mut px);
            for (c, v) in px.iter().enumerate() {
                out.set(c, y, x, *v);
            }
        }
    }
    EquirectImage::from_tensor(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_sampling_map, project, tangent_grid};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn face_pixel_size() {
        for cam in cubemap_cameras(960).unwrap() {
            assert_eq!(cam.fov(), 90.0);
            assert!((cam.pixel_size() - 0.09375).abs() < 1e-12);
        }
    }

    #[test]
    fn random_directions_fall_in_exactly_one_face() {
        let cams = cubemap_cameras(16).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut edge_hits = 0;
        for _ in 0..100_000 {
            let d: [f64; 3] = [
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            ];
            let inside: Vec<usize> = (0..6)
                .filter(|&i| match cams[i].vector_to_plane(d) {
                    Some((u, v)) => u.abs() < 1.0 && v.abs() < 1.0,
                    None => false,
                })
                .collect();
            match inside.len() {
                1 => assert_eq!(inside[0], owning_face(d)),
                0 => edge_hits += 1,
                n => panic!("{n} faces claim {d:?}"),
            }
        }
        assert_eq!(edge_hits, 0);
    }

    #[test]
    fn face_labels_partition_the_sphere() {
        let faces: Vec<Tensor<f32>> = (0..6)
            .map(|i| Tensor::from_vec(1, 4, 4, vec![i as f32; 16]).unwrap())
            .collect();
        let eq = equirect_from_faces(&faces, 64, 32).unwrap();
        let mut seen = [0usize; 6];
        for v in eq.tensor().data() {
            assert_eq!(v.fract(), 0.0);
            seen[*v as usize] += 1;
        }
        assert!(seen.iter().all(|&n| n > 0));
        // north pole row belongs to the top face
        assert_eq!(eq.get(0, 0, 5), 4.0);
        assert_eq!(eq.get(0, 16, 0), 0.0);
    }

    #[test]
    fn smooth_image_round_trips_through_faces() {
        let (h, w) = (64, 128);
        let mut img = EquirectImage::zeros(1, h);
        for y in 0..h {
            for x in 0..w {
                let d = equirect_to_sphere(x as f64, y as f64, w, h).unwrap().to_vector();
                img.set(0, y, x, (0.5 * d[0] + 0.3 * d[1] * d[2] + 0.2 * d[2]) as f32);
            }
        }
        let side = 48;
        let cams = cubemap_cameras(side).unwrap();
        let faces: Vec<Tensor<f32>> = cams
            .iter()
            .map(|c| {
                let m = build_sampling_map(&tangent_grid(c), side, side, w, h).unwrap();
                project(&img, &m).unwrap()
            })
            .collect();
        let back = equirect_from_faces(&faces, w, h).unwrap();
        let mut worst = 0.0f32;
        for y in 1..h - 1 {
            for x in 0..w {
                let d = equirect_to_sphere(x as f64, y as f64, w, h).unwrap().to_vector();
                let cam = &cams[owning_face(d)];
                let (u, v) = cam.vector_to_plane(d).unwrap();
                let (c, r) = cam.plane_to_pixel(u, v);
                let margin = c.min(r).min(side as f64 - 1.0 - c).min(side as f64 - 1.0 - r);
                if margin < 2.0 {
                    continue;
                }
                worst = worst.max((back.get(0, y, x) - img.get(0, y, x)).abs());
            }
        }
        assert!(worst < 2e-2, "max error {worst}");
    }

    #[test]
    fn face_count_mismatch() {
        let faces = vec![Tensor::<f32>::zeros(1, 4, 4); 5];
        assert!(equirect_from_faces(&faces, 64, 32).is_err());
    }
}
