use crate::error::{domain, Result};

pub(crate) type Vec3 = [f64; 3];

pub(crate) fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub(crate) fn normalize(a: Vec3) -> Vec3 {
    let n = dot(a, a).sqrt();
    [a[0] / n, a[1] / n, a[2] / n]
}

/// Wraps an azimuth in degrees into `[0, 360)`.
pub fn wrap_degrees(phi: f64) -> f64 {
    let w = phi.rem_euclid(360.0);
    // rem_euclid can round up to exactly 360 for tiny negative inputs
    if w >= 360.0 {
        0.0
    } else {
        w
    }
}

/// A direction on the viewing sphere: polar angle `theta` measured from the
/// north pole and azimuth `phi`, both in degrees.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SphericalCoord {
    theta: f64,
    phi: f64,
}

impl SphericalCoord {
    pub fn new(theta: f64, phi: f64) -> Result<Self> {
        if !(0.0..=180.0).contains(&theta) || !phi.is_finite() {
            return Err(domain(format!(
                "polar angle {theta} outside [0, 180] or non-finite azimuth {phi}"
            )));
        }
        Ok(Self {
            theta,
            phi: wrap_degrees(phi),
        })
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn phi(&self) -> f64 {
        self.phi
    }

    /// Unit vector with +z at the north pole and phi = 0 along +x.
    pub fn to_vector(&self) -> [f64; 3] {
        let (st, ct) = self.theta.to_radians().sin_cos();
        let (sp, cp) = self.phi.to_radians().sin_cos();
        [st * cp, st * sp, ct]
    }

    /// Inverse of [`to_vector`](Self::to_vector); the input need not be normalized.
    pub fn from_vector(v: [f64; 3]) -> Self {
        let v = normalize(v);
        let theta = v[2].clamp(-1.0, 1.0).acos().to_degrees();
        let phi = v[1].atan2(v[0]).to_degrees();
        Self {
            theta,
            phi: wrap_degrees(phi),
        }
    }

    /// Great-circle distance in degrees.
    pub fn angular_distance(&self, other: &SphericalCoord) -> f64 {
        dot(self.to_vector(), other.to_vector())
            .clamp(-1.0, 1.0)
            .acos()
            .to_degrees()
    }
}

/// Maps a (possibly fractional) equirectangular pixel position to the sphere
/// using `(theta, phi) = (180 * y / H_e, 360 * x / W_e)`. Columns wrap.
pub fn equirect_to_sphere(x: f64, y: f64, width: usize, height: usize) -> Result<SphericalCoord> {
    if !(0.0..height as f64).contains(&y) {
        return Err(domain(format!("row {y} outside [0, {height})")));
    }
    if !x.is_finite() {
        return Err(domain("non-finite column"));
    }
    SphericalCoord::new(
        180.0 * y / height as f64,
        360.0 * x / width as f64,
    )
}

/// Exact inverse of [`equirect_to_sphere`]; the column is wrapped into `[0, W_e)`.
pub fn sphere_to_equirect(c: &SphericalCoord, width: usize, height: usize) -> (f64, f64) {
    let mut x = c.phi * width as f64 / 360.0;
    if x >= width as f64 {
        x -= width as f64;
    }
    (x, c.theta * height as f64 / 180.0)
}

/// Polar angle of an equirectangular row.
pub fn row_theta(y: usize, height: usize) -> f64 {
    180.0 * y as f64 / height as f64
}

/// Row whose polar angle is closest to `theta`, clamped into the grid.
pub fn nearest_row(theta: f64, height: usize) -> usize {
    let y = (theta * height as f64 / 180.0).round();
    (y.max(0.0) as usize).min(height - 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn equirect_examples() {
        let c = equirect_to_sphere(320.0, 160.0, 640, 320).unwrap();
        assert_eq!((c.theta(), c.phi()), (90.0, 180.0));
        let c = equirect_to_sphere(0.0, 0.0, 640, 320).unwrap();
        assert_eq!((c.theta(), c.phi()), (0.0, 0.0));
        let c = equirect_to_sphere(480.0, 80.0, 640, 320).unwrap();
        assert_eq!((c.theta(), c.phi()), (45.0, 270.0));
    }

    #[test]
    fn row_out_of_range_is_domain_error() {
        assert!(equirect_to_sphere(0.0, 320.0, 640, 320).is_err());
        assert!(equirect_to_sphere(0.0, -0.5, 640, 320).is_err());
        // columns wrap instead
        let c = equirect_to_sphere(700.0, 10.0, 640, 320).unwrap();
        assert!((c.phi() - 33.75).abs() < 1e-12);
    }

    #[test]
    fn inverse_examples() {
        let c = SphericalCoord::new(90.0, 180.0).unwrap();
        assert_eq!(sphere_to_equirect(&c, 640, 320), (320.0, 160.0));
        let c = SphericalCoord::new(0.0, 359.999).unwrap();
        let (x, y) = sphere_to_equirect(&c, 640, 320);
        assert!((x - 639.998_222).abs() < 1e-3);
        assert_eq!(y, 0.0);
    }

    #[test]
    fn random_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let x: f64 = rng.gen_range(0.0..640.0);
            let y: f64 = rng.gen_range(0.0..320.0);
            let c = equirect_to_sphere(x, y, 640, 320).unwrap();
            let (x2, y2) = sphere_to_equirect(&c, 640, 320);
            assert!((x - x2).abs() < 1e-9 && (y - y2).abs() < 1e-9);
        }
    }

    #[test]
    fn vector_round_trip() {
        let c = SphericalCoord::new(33.0, 300.0).unwrap();
        let back = SphericalCoord::from_vector(c.to_vector());
        assert!((back.theta() - 33.0).abs() < 1e-10);
        assert!((back.phi() - 300.0).abs() < 1e-10);
    }

    #[test]
    fn phi_wraps() {
        assert_eq!(SphericalCoord::new(10.0, -90.0).unwrap().phi(), 270.0);
        assert_eq!(wrap_degrees(-1e-20), 0.0);
        assert!(SphericalCoord::new(180.5, 0.0).is_err());
    }
}
