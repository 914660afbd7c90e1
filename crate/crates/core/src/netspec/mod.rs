//! Declarative description of the target perspective network: layer list,
//! weights, receptive fields, MAC accounting and a planar forward pass.

mod cost;
mod forward;
mod rf;

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::engine::{BatchNorm, BlobRecord, Conv2d, Scalar, WeightBlob};
use crate::error::{Error, Result};

pub use cost::{
    interp_spacing, mac_count_dilated, mac_count_method, mac_count_planar, mac_count_sphconv, CostConfig,
    CostReport, MethodCost,
};
pub use forward::{ForwardOptions, PoolMode};
pub use rf::{receptive_field, RfEntry, RfInfo};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub name: String,
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    #[serde(default = "one")]
    pub stride: usize,
    #[serde(default = "one")]
    pub dilation: usize,
    /// `(C_out, C_in, k_h, k_w)` row-major; loaded from the weight blob.
    #[serde(skip)]
    pub weights: Option<Vec<f32>>,
    #[serde(skip)]
    pub bias: Option<Vec<f32>>,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchNormSpec {
    pub channels: usize,
    #[serde(skip)]
    pub params: Option<BatchNorm<f32>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum LayerSpec {
    Conv(ConvSpec),
    Relu,
    #[serde(rename = "maxpool")]
    MaxPool {
        kernel: usize,
        stride: usize,
    },
    #[serde(rename = "batchnorm")]
    BatchNorm(BatchNormSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub name: String,
    pub input_channels: usize,
    /// Per-channel means subtracted from inputs in `[0, 1]` units.
    #[serde(default)]
    pub channel_means: Vec<f32>,
    pub layers: Vec<LayerSpec>,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    #[serde(flatten)]
    spec: NetworkSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    weights: Option<PathBuf>,
}

impl ConvSpec {
    pub fn new(name: impl Into<String>, k: usize, in_channels: usize, out_channels: usize) -> Self {
        Self {
            name: name.into(),
            kernel_h: k,
            kernel_w: k,
            in_channels,
            out_channels,
            stride: 1,
            dilation: 1,
            weights: None,
            bias: None,
        }
    }

    pub fn weight_count(&self) -> usize {
        self.out_channels * self.in_channels * self.kernel_h * self.kernel_w
    }

    /// Engine layer with same padding and this spec's stride and dilation.
    /// `layer` is only used to report missing weights.
    pub fn to_conv<T: Scalar>(&self, layer: usize) -> Result<Conv2d<T>> {
        let (w, b) = match (&self.weights, &self.bias) {
            (Some(w), Some(b)) => (w, b),
            _ => return Err(Error::MissingWeights(layer)),
        };
        Ok(Conv2d::new(
            self.in_channels,
            self.out_channels,
            self.kernel_h,
            self.kernel_w,
            w.iter().map(|&v| T::from_f64(v as f64)).collect(),
            b.iter().map(|&v| T::from_f64(v as f64)).collect(),
        )?
        .with_stride(self.stride)
        .with_dilation(self.dilation))
    }
}

impl NetworkSpec {
    pub fn validate(&self) -> Result<()> {
        let invalid = |m: String| Err(Error::InvalidSpec(m));
        if self.input_channels == 0 {
            return invalid("input_channels must be positive".into());
        }
        if !self.channel_means.is_empty() && self.channel_means.len() != self.input_channels {
            return invalid(format!(
                "{} channel means for {} input channels",
                self.channel_means.len(),
                self.input_channels
            ));
        }
        let mut channels = self.input_channels;
        let mut convs = 0;
        for (i, layer) in self.layers.iter().enumerate() {
            match layer {
                LayerSpec::Conv(c) => {
                    if c.in_channels != channels {
                        return invalid(format!(
                            "layer {i} ({}) expects {} channels but receives {channels}",
                            c.name, c.in_channels
                        ));
                    }
                    if c.kernel_h == 0 || c.kernel_w == 0 || c.out_channels == 0 {
                        return invalid(format!("layer {i}: kernel dims and channels must be positive"));
                    }
                    if c.kernel_h % 2 == 0 || c.kernel_w % 2 == 0 {
                        return invalid(format!("layer {i}: kernel dims must be odd"));
                    }
                    if c.stride == 0 || c.dilation == 0 {
                        return invalid(format!("layer {i}: stride and dilation must be at least 1"));
                    }
                    if c.weights.as_ref().is_some_and(|w| w.len() != c.weight_count())
                        || c.bias.as_ref().is_some_and(|b| b.len() != c.out_channels)
                    {
                        return invalid(format!("layer {i}: weight count does not match its shape"));
                    }
                    channels = c.out_channels;
                    convs += 1;
                }
                LayerSpec::MaxPool { kernel, stride } => {
                    if *kernel == 0 || *stride == 0 {
                        return invalid(format!("layer {i}: pool kernel and stride must be positive"));
                    }
                }
                LayerSpec::BatchNorm(b) => {
                    if b.channels != channels || b.params.as_ref().is_some_and(|p| p.channels() != channels) {
                        return invalid(format!("layer {i}: batch norm over {} channels, input has {channels}", b.channels));
                    }
                }
                LayerSpec::Relu => {}
            }
        }
        if convs == 0 {
            return invalid("network has no conv layer".into());
        }
        Ok(())
    }

    /// Layer-list indices of the conv layers, in order.
    pub fn conv_layers(&self) -> Vec<usize> {
        self.layers
            .iter()
            .enumerate()
            .filter(|(_, l)| matches!(l, LayerSpec::Conv(_)))
            .map(|(i, _)| i)
            .collect()
    }

    pub fn conv(&self, conv_index: usize) -> Result<&ConvSpec> {
        let layers = self.conv_layers();
        match layers.get(conv_index).map(|&i| &self.layers[i]) {
            Some(LayerSpec::Conv(c)) => Ok(c),
            _ => Err(Error::InvalidSpec(format!("no conv layer {conv_index}"))),
        }
    }

    pub fn conv_by_name(&self, name: &str) -> Option<usize> {
        self.conv_layers().iter().position(|&i| match &self.layers[i] {
            LayerSpec::Conv(c) => c.name == name,
            _ => false,
        })
    }

    /// Number of pool layers between conv `a` and conv `b` (`a < b`), counting
    /// from the input when `a` is `None`.
    pub fn pools_between(&self, a: Option<usize>, b: usize) -> Vec<usize> {
        let convs = self.conv_layers();
        let start = a.map_or(0, |a| convs[a] + 1);
        (start..convs[b])
            .filter(|&i| matches!(self.layers[i], LayerSpec::MaxPool { .. }))
            .collect()
    }

    /// Indices of all pool layers.
    pub fn pool_layers(&self) -> Vec<usize> {
        self.layers
            .iter()
            .enumerate()
            .filter(|(_, l)| matches!(l, LayerSpec::MaxPool { .. }))
            .map(|(i, _)| i)
            .collect()
    }

    /// Conv `conv_index` with any batch norm that directly follows it folded
    /// into the weights, in `f64`.
    pub fn folded_conv(&self, conv_index: usize) -> Result<Conv2d<f64>> {
        let li = self.conv_layers()[conv_index];
        let mut conv = self.conv(conv_index)?.to_conv::<f64>(li)?;
        if let Some(LayerSpec::BatchNorm(b)) = self.layers.get(li + 1) {
            let p = b.params.as_ref().ok_or(Error::MissingWeights(li + 1))?;
            let (a, s) = p.scale_shift();
            let per = conv.in_channels * conv.kernel_h * conv.kernel_w;
            for o in 0..conv.out_channels {
                for w in &mut conv.weights[o * per..(o + 1) * per] {
                    *w *= a[o];
                }
                conv.bias[o] = a[o] * conv.bias[o] + s[o];
            }
        }
        Ok(conv)
    }

    pub fn has_weights(&self) -> bool {
        self.layers.iter().all(|l| match l {
            LayerSpec::Conv(c) => c.weights.is_some() && c.bias.is_some(),
            LayerSpec::BatchNorm(b) => b.params.is_some(),
            _ => true,
        })
    }

    /// VGG-16 conv stack through conv5_3 (no pool5), without weights.
    pub fn vgg16() -> Self {
        let blocks: [(usize, usize); 5] = [(2, 64), (2, 128), (3, 256), (3, 512), (3, 512)];
        let mut layers = Vec::new();
        let mut cin = 3;
        for (b, &(n, cout)) in blocks.iter().enumerate() {
            for i in 0..n {
                layers.push(LayerSpec::Conv(ConvSpec::new(format!("conv{}_{}", b + 1, i + 1), 3, cin, cout)));
                layers.push(LayerSpec::Relu);
                cin = cout;
            }
            if b < 4 {
                layers.push(LayerSpec::MaxPool { kernel: 2, stride: 2 });
            }
        }
        Self {
            name: "vgg16".into(),
            input_channels: 3,
            channel_means: vec![0.485, 0.456, 0.406],
            layers,
        }
    }

    /// Small three-conv target with one pool: 3 -> 8 -> 16 -> pool -> 16.
    pub fn toy(seed: u64) -> Self {
        let mut spec = Self {
            name: "toy3".into(),
            input_channels: 3,
            channel_means: vec![0.5; 3],
            layers: vec![
                LayerSpec::Conv(ConvSpec::new("conv1", 3, 3, 8)),
                LayerSpec::Relu,
                LayerSpec::Conv(ConvSpec::new("conv2", 3, 8, 16)),
                LayerSpec::Relu,
                LayerSpec::MaxPool { kernel: 2, stride: 2 },
                LayerSpec::Conv(ConvSpec::new("conv3", 3, 16, 16)),
            ],
        };
        spec.randomize_weights(seed);
        spec
    }

    /// He-normal weights and small random biases for every conv layer;
    /// batch-norm layers become identities.
    pub fn randomize_weights(&mut self, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for layer in &mut self.layers {
            match layer {
                LayerSpec::Conv(c) => {
                    let fan_in = (c.in_channels * c.kernel_h * c.kernel_w) as f64;
                    let normal = Normal::new(0.0, (2.0 / fan_in).sqrt()).expect("positive std");
                    c.weights = Some((0..c.weight_count()).map(|_| normal.sample(&mut rng) as f32).collect());
                    let bias = Normal::new(0.0, 0.05).expect("positive std");
                    c.bias = Some((0..c.out_channels).map(|_| bias.sample(&mut rng) as f32).collect());
                }
                LayerSpec::BatchNorm(b) => b.params = Some(BatchNorm::identity(b.channels)),
                _ => {}
            }
        }
    }

    pub fn to_blob(&self) -> Result<WeightBlob> {
        let mut layers = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            let recs = match layer {
                LayerSpec::Conv(c) => {
                    let (w, b) = match (&c.weights, &c.bias) {
                        (Some(w), Some(b)) => (w, b),
                        _ => return Err(Error::MissingWeights(i)),
                    };
                    vec![
                        BlobRecord::new([c.out_channels, c.in_channels, c.kernel_h, c.kernel_w], w.clone())?,
                        BlobRecord::new([c.out_channels, 1, 1, 1], b.clone())?,
                    ]
                }
                LayerSpec::BatchNorm(b) => {
                    let p = b.params.as_ref().ok_or(Error::MissingWeights(i))?;
                    let data = [&p.gamma, &p.beta, &p.running_mean, &p.running_var]
                        .iter()
                        .flat_map(|v| v.iter().copied())
                        .collect();
                    vec![BlobRecord::new([4, b.channels, 1, 1], data)?]
                }
                _ => Vec::new(),
            };
            layers.push(recs);
        }
        Ok(WeightBlob { layers })
    }

    pub fn load_blob(&mut self, blob: &WeightBlob) -> Result<()> {
        if blob.layers.len() != self.layers.len() {
            return Err(Error::Format(format!(
                "weight blob has {} layers, network has {}",
                blob.layers.len(),
                self.layers.len()
            )));
        }
        for (i, (layer, recs)) in self.layers.iter_mut().zip(&blob.layers).enumerate() {
            let bad = || Error::Format(format!("weight blob layer {i} does not match the network"));
            match layer {
                LayerSpec::Conv(c) => {
                    let want = [c.out_channels, c.in_channels, c.kernel_h, c.kernel_w].map(|d| d as u32);
                    if recs.len() != 2 || recs[0].shape != want || recs[1].shape != [c.out_channels as u32, 1, 1, 1] {
                        return Err(bad());
                    }
                    c.weights = Some(recs[0].data.clone());
                    c.bias = Some(recs[1].data.clone());
                }
                LayerSpec::BatchNorm(b) => {
                    if recs.len() != 1 || recs[0].shape != [4, b.channels as u32, 1, 1] {
                        return Err(bad());
                    }
                    let n = b.channels;
                    let d = &recs[0].data;
                    let mut p = BatchNorm::identity(n);
                    p.gamma = d[..n].to_vec();
                    p.beta = d[n..2 * n].to_vec();
                    p.running_mean = d[2 * n..3 * n].to_vec();
                    p.running_var = d[3 * n..].to_vec();
                    b.params = Some(p);
                }
                _ if !recs.is_empty() => return Err(bad()),
                _ => {}
            }
        }
        Ok(())
    }

    /// Writes the manifest, plus the weight blob next to it when weights are
    /// loaded.
    pub fn save(&self, manifest: &Path) -> Result<()> {
        let weights = if self.has_weights() {
            let name = manifest
                .file_stem()
                .map(|s| format!("{}.sphc", s.to_string_lossy()))
                .unwrap_or_else(|| "weights.sphc".into());
            let path = manifest.with_file_name(&name);
            self.to_blob()?.write_to(BufWriter::new(File::create(&path)?))?;
            Some(PathBuf::from(name))
        } else {
            None
        };
        let m = Manifest {
            spec: self.clone(),
            weights,
        };
        std::fs::write(manifest, toml::to_string(&m)?)?;
        Ok(())
    }

    /// Reads a manifest and, if it names one, its weight blob (relative paths
    /// resolve against the manifest's directory).
    pub fn load(manifest: &Path) -> Result<Self> {
        let m: Manifest = toml::from_str(&std::fs::read_to_string(manifest)?)?;
        let mut spec = m.spec;
        if let Some(w) = m.weights {
            let path = if w.is_absolute() {
                w
            } else {
                manifest.parent().unwrap_or(Path::new(".")).join(w)
            };
            let blob = WeightBlob::read_from(BufReader::new(File::open(path)?))?;
            spec.load_blob(&blob)?;
        }
        spec.validate()?;
        Ok(spec)
    }
}
