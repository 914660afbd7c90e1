//! Spherical and planar coordinate math: the equirectangular pixel mapping,
//! gnomonic tangent cameras, sparse bilinear sampling maps, receptive-field
//! footprints and cube-map faces.
//!
//! Conventions: `theta` is the polar angle from the north pole (0 deg) to the
//! south pole (180 deg), `phi` the azimuth in `[0, 360)`. Equirectangular
//! pixel `(x, y)` sits at `(180 * y / H_e, 360 * x / W_e)` with no half-pixel
//! offset, so the south-pole row is not part of the grid. Sampling wraps
//! columns and clamps rows.

mod camera;
mod coords;
mod cubemap;
mod footprint;
mod image;
mod sampling;

pub use camera::{tangent_grid, TangentCamera};
pub use coords::{
    equirect_to_sphere, nearest_row, row_theta, sphere_to_equirect, wrap_degrees,
    SphericalCoord,
};
pub use cubemap::{cubemap_cameras, equirect_from_faces, owning_face, sample_faces, FACE_CENTERS};
pub use footprint::{backproject_footprint, coverage, Footprint};
pub use image::EquirectImage;
pub use sampling::{
    bilinear_taps, build_sampling_map, project, project_tensor, SamplingMap, Tap,
};

pub(crate) use sampling::read_u32;

/// Sampling map for a tangent camera over a `width x height` equirect grid.
pub fn camera_sampling_map(cam: &TangentCamera, width: usize, height: usize) -> crate::Result<SamplingMap> {
    build_sampling_map(&tangent_grid(cam), cam.width(), cam.width(), width, height)
}
