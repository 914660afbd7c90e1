//! Synthetic spherical images for desk-scale experiments.
//!
//! Each image is a smooth function of the viewing direction, so it has no
//! seam and no polar singularity: a sum of plane waves over a wide band of
//! angular frequencies plus a few soft-edged spherical caps, each with its
//! own color, squashed into `[0, 1]`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, UnitSphere};

use crate::geometry::{equirect_to_sphere, EquirectImage};

const WAVES: usize = 24;
const CAPS: usize = 6;

struct Component {
    dir: [f64; 3],
    color: Vec<f64>,
    kind: Kind,
}

enum Kind {
    Wave { k: f64, phase: f64 },
    Cap { cos_r: f64, softness: f64 },
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn synth_image(channels: usize, height: usize, seed: u64) -> EquirectImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_1ab5);
    let mut comps = Vec::with_capacity(WAVES + CAPS);
    for i in 0..WAVES + CAPS {
        let dir = UnitSphere.sample(&mut rng);
        let color = (0..channels).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let kind = if i < WAVES {
            Kind::Wave {
                // wavelengths from about 4 to 180 degrees
                k: (2.0f64.ln() + rng.gen::<f64>() * (90.0f64 / 2.0).ln()).exp(),
                phase: rng.gen_range(0.0..std::f64::consts::TAU),
            }
        } else {
            Kind::Cap {
                cos_r: rng.gen_range(10.0f64..50.0).to_radians().cos(),
                softness: rng.gen_range(0.002..0.05),
            }
        };
        comps.push(Component { dir, color, kind });
    }
    let norm = 1.0 / ((WAVES + CAPS) as f64).sqrt();
    let width = 2 * height;
    let mut img = EquirectImage::zeros(channels, height);
    let mut px = vec![0.0; channels];
    for y in 0..height {
        for x in 0..width {
            let d = equirect_to_sphere(x as f64, y as f64, width, height)
                .expect("grid pixels are on the sphere")
                .to_vector();
            px.fill(0.0);
            for c in &comps {
                let t = dot(d, c.dir);
                let a = match c.kind {
                    Kind::Wave { k, phase } => (k * t + phase).sin(),
                    Kind::Cap { cos_r, softness } => ((t - cos_r) / softness).tanh(),
                };
                for (p, col) in px.iter_mut().zip(&c.color) {
                    *p += a * col;
                }
            }
            for (ch, p) in px.iter().enumerate() {
                img.set(ch, y, x, (0.5 + 0.5 * (1.5 * norm * p).tanh()) as f32);
            }
        }
    }
    img
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_bounded_and_seam_free() {
        let a = synth_image(3, 32, 7);
        assert_eq!(a, synth_image(3, 32, 7));
        assert_ne!(a, synth_image(3, 32, 8));
        assert!(a.tensor().data().iter().all(|v| (0.0..=1.0).contains(v)));
        // the pole row is a single point on the sphere
        for c in 0..3 {
            let r = a.tensor().row(c, 0);
            assert!(r.iter().all(|v| (v - r[0]).abs() < 1e-6));
        }
        let spread = a.tensor().data().iter().fold((1.0f32, 0.0f32), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        assert!(spread.1 - spread.0 > 0.3);
    }
}
