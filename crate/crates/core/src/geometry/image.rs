use crate::engine::Tensor;
use crate::error::{shape, Result};

/// A 360-degree image in equirectangular projection, `W_e = 2 * H_e`.
///
/// Stored channel-major as a `(C, H_e, W_e)` tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct EquirectImage {
    tensor: Tensor<f32>,
}

impl EquirectImage {
    pub fn new(channels: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        Self::from_tensor(Tensor::from_vec(channels, height, 2 * height, data)?)
    }

    pub fn zeros(channels: usize, height: usize) -> Self {
        Self {
            tensor: Tensor::zeros(channels, height, 2 * height),
        }
    }

    pub fn from_tensor(tensor: Tensor<f32>) -> Result<Self> {
        if tensor.width() != 2 * tensor.height() || tensor.height() == 0 {
            return Err(shape(format!(
                "equirectangular images need W = 2H, got {}x{}",
                tensor.width(),
                tensor.height()
            )));
        }
        Ok(Self { tensor })
    }

    pub fn width(&self) -> usize {
        self.tensor.width()
    }

    pub fn height(&self) -> usize {
        self.tensor.height()
    }

    pub fn channels(&self) -> usize {
        self.tensor.channels()
    }

    pub fn get(&self, c: usize, y: usize, x: usize) -> f32 {
        self.tensor.get(c, y, x)
    }

    pub fn set(&mut self, c: usize, y: usize, x: usize, v: f32) {
        self.tensor.set(c, y, x, v)
    }

    pub fn tensor(&self) -> &Tensor<f32> {
        &self.tensor
    }

    pub fn into_tensor(self) -> Tensor<f32> {
        self.tensor
    }

    /// Subtracts a per-channel mean in place.
    pub fn subtract_mean(&mut self, mean: &[f32]) -> Result<()> {
        if mean.is_empty() {
            return Ok(());
        }
        if mean.len() != self.channels() {
            return Err(shape(format!(
                "{} channel means for a {}-channel image",
                mean.len(),
                self.channels()
            )));
        }
        for (c, m) in mean.iter().enumerate() {
            for v in self.tensor.channel_mut(c) {
                *v -= m;
            }
        }
        Ok(())
    }

    /// Vertically mirrored copy (row `y` becomes row `H - 1 - y`).
    pub fn flipped_vertically(&self) -> Self {
        let (c, h, w) = (self.channels(), self.height(), self.width());
        let mut out = Tensor::zeros(c, h, w);
        for ch in 0..c {
            for y in 0..h {
                out.row_mut(ch, h - 1 - y)
                    .copy_from_slice(self.tensor.row(ch, y));
            }
        }
        Self { tensor: out }
    }
}
