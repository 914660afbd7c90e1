use super::{bilinear_taps, sphere_to_equirect, tangent_grid, TangentCamera};
use crate::error::{domain, Result};

/// Set of equirectangular pixels touched by a backprojected tangent grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Footprint {
    /// Sorted, deduplicated `(x, y)` pixel coordinates.
    pixels: Vec<(u32, u32)>,
    width: usize,
    height: usize,
}

impl Footprint {
    pub fn from_pixels(mut pixels: Vec<(u32, u32)>, width: usize, height: usize) -> Result<Self> {
        pixels.sort_unstable();
        pixels.dedup();
        if pixels.is_empty() {
            return Err(domain("empty footprint"));
        }
        if pixels
            .iter()
            .any(|&(x, y)| x as usize >= width || y as usize >= height)
        {
            return Err(domain("footprint pixel outside the equirectangular grid"));
        }
        Ok(Self {
            pixels,
            width,
            height,
        })
    }

    pub fn pixels(&self) -> &[(u32, u32)] {
        &self.pixels
    }

    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    pub fn grid_dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn contains(&self, x: u32, y: u32) -> bool {
        self.pixels.binary_search(&(x, y)).is_ok()
    }

    /// Inclusive `(min_row, max_row)`.
    pub fn row_range(&self) -> (usize, usize) {
        let min = self.pixels.iter().map(|p| p.1).min().unwrap_or(0);
        let max = self.pixels.iter().map(|p| p.1).max().unwrap_or(0);
        (min as usize, max as usize)
    }

    /// Number of rows spanned by the bounding box.
    pub fn bbox_height(&self) -> usize {
        let (a, b) = self.row_range();
        b - a + 1
    }

    /// Smallest circular column interval covering every pixel, as
    /// `(start_column, column_count)`. Found by removing the widest gap between
    /// occupied columns around the azimuthal seam.
    pub fn column_span(&self) -> (usize, usize) {
        let mut occupied = vec![false; self.width];
        for &(x, _) in &self.pixels {
            occupied[x as usize] = true;
        }
        let cols: Vec<usize> = (0..self.width).filter(|&c| occupied[c]).collect();
        if cols.len() == self.width {
            return (0, self.width);
        }
        // gap after cols[i] up to the next occupied column
        let mut best_gap = 0;
        let mut best_start = cols[0];
        for (i, &c) in cols.iter().enumerate() {
            let next = cols[(i + 1) % cols.len()];
            let gap = (next + self.width - c - 1) % self.width;
            let gap = if cols.len() == 1 { self.width - 1 } else { gap };
            if gap > best_gap {
                best_gap = gap;
                best_start = next;
            }
        }
        (best_start, self.width - best_gap)
    }

    /// Number of columns spanned by the unwrapped bounding box.
    pub fn bbox_width(&self) -> usize {
        self.column_span().1
    }

    /// Vertical mirror about the equator under the literal row/angle mapping:
    /// row `r` goes to `H - r`, clamped to the last row like bilinear sampling.
    pub fn mirrored(&self) -> Footprint {
        let h = self.height as u32;
        let pixels = self
            .pixels
            .iter()
            .map(|&(x, y)| (x, (h - y).min(h - 1)))
            .collect();
        Footprint::from_pixels(pixels, self.width, self.height).expect("mirror stays in grid")
    }
}

/// Backprojects every pixel center of `cam` into the equirectangular grid and
/// collects all pixels receiving nonzero bilinear weight.
pub fn backproject_footprint(cam: &TangentCamera, width: usize, height: usize) -> Result<Footprint> {
    if width != 2 * height || height == 0 {
        return Err(domain("equirectangular grid must satisfy W = 2H"));
    }
    let mut pixels = Vec::with_capacity(cam.width() * cam.width() * 4);
    for c in tangent_grid(cam) {
        let (x, y) = sphere_to_equirect(&c, width, height);
        for (px, py, _) in bilinear_taps(x, y, width, height) {
            pixels.push((px as u32, py as u32));
        }
    }
    Footprint::from_pixels(pixels, width, height)
}

/// Fraction of footprint pixels inside a rectangle of rows
/// `rows.0..=rows.1` and circular columns `cols.0..=cols.1` (signed offsets,
/// wrapped modulo the grid width).
pub fn coverage(fp: &Footprint, rows: (i64, i64), cols: (i64, i64)) -> Result<f64> {
    if fp.is_empty() {
        return Err(domain("coverage of an empty footprint"));
    }
    let w = fp.width as i64;
    let span = cols.1 - cols.0;
    let inside = fp
        .pixels
        .iter()
        .filter(|&&(x, y)| {
            let y = y as i64;
            if y < rows.0 || y > rows.1 {
                return false;
            }
            span + 1 >= w || (x as i64 - cols.0).rem_euclid(w) <= span
        })
        .count();
    Ok(inside as f64 / fp.len() as f64)
}
