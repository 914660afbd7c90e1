//! Kernel pictures: one row kernel of a layer next to the target kernel.

use anyhow::{bail, Result};

use sphconv_core::distill::SphConvNetwork;
use sphconv_core::engine::Tensor;
use sphconv_core::geometry::nearest_row;
use sphconv_core::netspec::NetworkSpec;

/// `kh x kw` values min-max normalized into a gray tensor, each tap drawn as
/// a `zoom x zoom` block.
pub fn render(values: &[f64], kh: usize, kw: usize, zoom: usize) -> Tensor<f32> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    let mut t = Tensor::zeros(1, kh * zoom, kw * zoom);
    for i in 0..kh * zoom {
        for j in 0..kw * zoom {
            let v = values[(i / zoom) * kw + j / zoom];
            t.set(0, i, j, ((v - lo) / span) as f32);
        }
    }
    t
}

/// `a` and `b` side by side with a `gap`-pixel black strip, top aligned.
pub fn side_by_side(a: &Tensor<f32>, b: &Tensor<f32>, gap: usize) -> Tensor<f32> {
    let h = a.height().max(b.height());
    let mut t = Tensor::zeros(1, h, a.width() + gap + b.width());
    for (src, off) in [(a, 0), (b, a.width() + gap)] {
        for y in 0..src.height() {
            for x in 0..src.width() {
                t.set(0, y, off + x, src.get(0, y, x));
            }
        }
    }
    t
}

pub struct KernelPictures {
    pub target: Tensor<f32>,
    /// `(theta, row, kernel picture, pair with the target)`.
    pub rows: Vec<(f64, usize, Tensor<f32>, Tensor<f32>)>,
}

pub fn export_kernel_images(
    net: &SphConvNetwork,
    spec: &NetworkSpec,
    layer: &str,
    thetas: &[f64],
    zoom: usize,
    channels: (usize, usize),
) -> Result<KernelPictures> {
    let Some(l) = net.names.iter().position(|n| n == layer) else {
        bail!("no layer named {layer}; the network has {}", net.names.join(", "));
    };
    let (o, c) = channels;
    let conv = &net.layers[l];
    if o >= conv.out_channels || c >= conv.in_channels || zoom == 0 {
        bail!("{layer} has {} outputs and {} inputs; zoom must be positive", conv.out_channels, conv.in_channels);
    }
    let t = spec.folded_conv(l)?;
    let tv: Vec<f64> = (0..t.kernel_h * t.kernel_w)
        .map(|k| t.weights[(o * t.in_channels + c) * t.kernel_h * t.kernel_w + k])
        .collect();
    let target = render(&tv, t.kernel_h, t.kernel_w, zoom);
    let mut rows = Vec::new();
    for &theta in thetas {
        let y = nearest_row(theta, net.height());
        let k = &conv.rows[y];
        let v: Vec<f64> = (0..k.kernel_h)
            .flat_map(|i| (0..k.kernel_w).map(move |j| (i, j)))
            .map(|(i, j)| k.weights[k.index(conv.in_channels, o, c, i, j)] as f64)
            .collect();
        let pic = render(&v, k.kernel_h, k.kernel_w, zoom);
        let pair = side_by_side(&target, &pic, zoom);
        rows.push((theta, y, pic, pair));
    }
    Ok(KernelPictures { target, rows })
}
