use super::coords::{dot, Vec3};
use super::SphericalCoord;
use crate::error::{domain, Result};

/// A pinhole camera on the plane tangent to the sphere at `center`.
///
/// The image is `width` x `width` pixels uniformly spaced on the tangent
/// plane; pixel edges span `[-tan(fov/2), tan(fov/2)]` at unit focal length.
/// Image "up" points along the meridian toward the north pole, and at the
/// poles the `center.phi()` meridian defines up.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TangentCamera {
    center: SphericalCoord,
    fov: f64,
    width: usize,
}

impl TangentCamera {
    pub fn new(center: SphericalCoord, fov: f64, width: usize) -> Result<Self> {
        if !(fov > 0.0 && fov < 180.0) {
            return Err(domain(format!("field of view {fov} must be in (0, 180)")));
        }
        if width == 0 {
            return Err(domain("camera width must be at least one pixel"));
        }
        Ok(Self { center, fov, width })
    }

    /// Camera with a given plane pitch (tangent-plane distance between pixel
    /// centers at unit focal length).
    pub fn with_pitch(center: SphericalCoord, pitch: f64, width: usize) -> Result<Self> {
        if !(pitch > 0.0) || !pitch.is_finite() {
            return Err(domain(format!("pitch {pitch} must be positive")));
        }
        let fov = 2.0 * (width as f64 * pitch / 2.0).atan().to_degrees();
        Self::new(center, fov, width)
    }

    pub fn center(&self) -> SphericalCoord {
        self.center
    }

    pub fn fov(&self) -> f64 {
        self.fov
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// Degrees per pixel, `fov / width`.
    pub fn pixel_size(&self) -> f64 {
        self.fov / self.width as f64
    }

    pub fn pitch(&self) -> f64 {
        2.0 * (self.fov.to_radians() / 2.0).tan() / self.width as f64
    }

    /// Central `width` x `width` crop of this camera, keeping the pitch.
    pub fn crop(&self, width: usize) -> Result<Self> {
        Self::with_pitch(self.center, self.pitch(), width)
    }

    /// Same intrinsics, different tangent point.
    pub fn recentered(&self, center: SphericalCoord) -> Self {
        Self { center, ..*self }
    }

    /// Orthonormal frame `(forward, east, up)` at the tangent point.
    pub(crate) fn frame(&self) -> (Vec3, Vec3, Vec3) {
        let (st, ct) = self.center.theta().to_radians().sin_cos();
        let (sp, cp) = self.center.phi().to_radians().sin_cos();
        let forward = [st * cp, st * sp, ct];
        let east = [-sp, cp, 0.0];
        let up = [-ct * cp, -ct * sp, st];
        (forward, east, up)
    }

    /// Plane coordinates (right, up) of pixel `(col, row)`.
    pub fn pixel_to_plane(&self, col: f64, row: f64) -> (f64, f64) {
        let half = (self.width as f64 - 1.0) / 2.0;
        let p = self.pitch();
        ((col - half) * p, (half - row) * p)
    }

    /// Fractional pixel position of plane coordinates.
    pub fn plane_to_pixel(&self, u: f64, v: f64) -> (f64, f64) {
        let half = (self.width as f64 - 1.0) / 2.0;
        let p = self.pitch();
        (u / p + half, half - v / p)
    }

    pub fn plane_to_sphere(&self, u: f64, v: f64) -> SphericalCoord {
        let (f, e, up) = self.frame();
        SphericalCoord::from_vector([
            f[0] + u * e[0] + v * up[0],
            f[1] + u * e[1] + v * up[1],
            f[2] + u * e[2] + v * up[2],
        ])
    }

    /// Gnomonic projection of a direction onto the plane; `None` for directions
    /// in the back hemisphere.
    pub fn sphere_to_plane(&self, c: &SphericalCoord) -> Option<(f64, f64)> {
        self.vector_to_plane(c.to_vector())
    }

    pub(crate) fn vector_to_plane(&self, d: Vec3) -> Option<(f64, f64)> {
        let (f, e, up) = self.frame();
        let depth = dot(d, f);
        if depth <= 1e-12 {
            return None;
        }
        Some((dot(d, e) / depth, dot(d, up) / depth))
    }
}

/// Sphere coordinates of every pixel center, row-major (`row * W + col`).
///
/// The grid center `((W-1)/2, (W-1)/2)` maps to the camera center. Gnomonic
/// rays never reach 90 degrees from the tangent point, so a valid camera
/// always yields a valid grid.
pub fn tangent_grid(cam: &TangentCamera) -> Vec<SphericalCoord> {
    let w = cam.width();
    let mut out = Vec::with_capacity(w * w);
    for row in 0..w {
        for col in 0..w {
            let (u, v) = cam.pixel_to_plane(col as f64, row as f64);
            out.push(cam.plane_to_sphere(u, v));
        }
    }
    out
}
