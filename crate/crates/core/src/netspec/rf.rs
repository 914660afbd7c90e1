use super::{LayerSpec, NetworkSpec};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RfEntry {
    pub layer: usize,
    /// Square receptive-field extent in input pixels.
    pub size: usize,
    /// Output stride in input pixels.
    pub jump: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RfInfo {
    pub size: usize,
    pub jump: usize,
    pub table: Vec<RfEntry>,
}

/// Receptive field of the output of layer `upto_layer` (an index into the
/// layer list), with the per-layer table leading up to it.
pub fn receptive_field(spec: &NetworkSpec, upto_layer: usize) -> Result<RfInfo> {
    if upto_layer >= spec.layers.len() {
        return Err(Error::InvalidSpec(format!(
            "layer {upto_layer} out of range for {} layers",
            spec.layers.len()
        )));
    }
    let mut size = 1;
    let mut jump = 1;
    let mut table = Vec::with_capacity(upto_layer + 1);
    for (i, layer) in spec.layers[..=upto_layer].iter().enumerate() {
        match layer {
            LayerSpec::Conv(c) => {
                size += (c.kernel_h.max(c.kernel_w) - 1) * c.dilation * jump;
                jump *= c.stride;
            }
            LayerSpec::MaxPool { kernel, stride } => {
                size += (kernel - 1) * jump;
                jump *= stride;
            }
            _ => {}
        }
        table.push(RfEntry { layer: i, size, jump });
    }
    Ok(RfInfo { size, jump, table })
}
