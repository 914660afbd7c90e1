use super::{LayerSpec, NetworkSpec};
use crate::engine::{relu_inplace, Conv2d, MaxPool, Padding, Scalar, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoolMode {
    /// Pools downsample as specified.
    Strided,
    /// Pools run at stride 1 and every later conv and pool is dilated by the
    /// accumulated stride, keeping full resolution.
    ATrous,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ForwardOptions {
    pub padding: Padding,
    pub pool: PoolMode,
}

impl ForwardOptions {
    pub fn planar() -> Self {
        Self {
            padding: Padding::Same,
            pool: PoolMode::Strided,
        }
    }

    pub fn a_trous(padding: Padding) -> Self {
        Self {
            padding,
            pool: PoolMode::ATrous,
        }
    }
}

enum Stage<T> {
    Conv(Conv2d<T>),
    Pool(MaxPool),
    Relu,
    Affine(Vec<T>, Vec<T>),
}

impl NetworkSpec {
    fn stages<T: Scalar>(&self, upto_layer: usize, opts: ForwardOptions) -> Result<Vec<Stage<T>>> {
        self.validate()?;
        if upto_layer >= self.layers.len() {
            return Err(Error::InvalidSpec(format!("layer {upto_layer} out of range")));
        }
        let mut dil = 1;
        let mut out = Vec::with_capacity(upto_layer + 1);
        for (i, layer) in self.layers[..=upto_layer].iter().enumerate() {
            out.push(match layer {
                LayerSpec::Conv(c) => {
                    let mut conv = c.to_conv::<T>(i)?.with_padding(opts.padding);
                    if opts.pool == PoolMode::ATrous {
                        conv = conv.with_stride(1).with_dilation(c.dilation * dil);
                        dil *= c.stride;
                    }
                    Stage::Conv(conv)
                }
                LayerSpec::MaxPool { kernel, stride } => match opts.pool {
                    PoolMode::Strided => Stage::Pool(MaxPool::new(*kernel, *stride)),
                    PoolMode::ATrous => {
                        let p = MaxPool {
                            kernel: *kernel,
                            stride: 1,
                            dilation: dil,
                            padding: opts.padding,
                            wrap: false,
                        };
                        dil *= stride;
                        Stage::Pool(p)
                    }
                },
                LayerSpec::Relu => Stage::Relu,
                LayerSpec::BatchNorm(b) => {
                    let p = b.params.as_ref().ok_or(Error::MissingWeights(i))?;
                    let (a, s) = p.scale_shift();
                    Stage::Affine(
                        a.into_iter().map(T::from_f64).collect(),
                        s.into_iter().map(T::from_f64).collect(),
                    )
                }
            });
        }
        Ok(out)
    }

    fn run_stage<T: Scalar>(stage: &Stage<T>, x: Tensor<T>) -> Result<Tensor<T>> {
        Ok(match stage {
            Stage::Conv(c) => c.forward(&x)?,
            Stage::Pool(p) => p.forward(&x)?,
            Stage::Relu => {
                let mut x = x;
                relu_inplace(&mut x);
                x
            }
            Stage::Affine(a, s) => {
                let mut x = x;
                for c in 0..x.channels() {
                    for v in x.channel_mut(c) {
                        *v = a[c] * *v + s[c];
                    }
                }
                x
            }
        })
    }

    /// Output of every layer `0..=upto_layer`.
    pub fn forward_layers<T: Scalar>(&self, input: &Tensor<T>, upto_layer: usize, opts: ForwardOptions) -> Result<Vec<Tensor<T>>> {
        let stages = self.stages::<T>(upto_layer, opts)?;
        let mut outs: Vec<Tensor<T>> = Vec::with_capacity(stages.len());
        for st in &stages {
            let x = outs.last().unwrap_or(input).clone();
            outs.push(Self::run_stage(st, x)?);
        }
        Ok(outs)
    }

    /// Supervised values of the first `n_convs` conv layers: each conv's
    /// output, after a batch norm that directly follows it, before any ReLU.
    pub fn conv_outputs<T: Scalar>(&self, input: &Tensor<T>, n_convs: usize, opts: ForwardOptions) -> Result<Vec<Tensor<T>>> {
        let convs = self.conv_layers();
        if n_convs == 0 || n_convs > convs.len() {
            return Err(Error::InvalidSpec(format!("{n_convs} conv outputs requested of {}", convs.len())));
        }
        let mut last = convs[n_convs - 1];
        if matches!(self.layers.get(last + 1), Some(LayerSpec::BatchNorm(_))) {
            last += 1;
        }
        let stages = self.stages::<T>(last, opts)?;
        let mut x = input.clone();
        let mut outs = Vec::with_capacity(n_convs);
        for (i, st) in stages.iter().enumerate() {
            x = Self::run_stage(st, x)?;
            let supervised = match self.layers[i] {
                LayerSpec::Conv(_) => !matches!(self.layers.get(i + 1), Some(LayerSpec::BatchNorm(_))),
                LayerSpec::BatchNorm(_) => i > 0 && matches!(self.layers[i - 1], LayerSpec::Conv(_)),
                _ => false,
            };
            if supervised {
                outs.push(x.clone());
            }
        }
        Ok(outs)
    }

    /// Left and right (equivalently top and bottom) reach, in input pixels,
    /// of conv `conv_index`'s output at full resolution with stride-1 pools.
    /// Pool windows extend only forward, so the reach is asymmetric.
    pub fn a_trous_reach(&self, conv_index: usize) -> Result<(usize, usize)> {
        let last = self.conv_layers()[conv_index];
        let (mut a, mut b, mut dil) = (0, 0, 1);
        for layer in &self.layers[..=last] {
            match layer {
                LayerSpec::Conv(c) => {
                    let hh = (c.kernel_h.max(c.kernel_w) - 1) / 2 * c.dilation * dil;
                    a += hh;
                    b += hh;
                    dil *= c.stride;
                }
                LayerSpec::MaxPool { kernel, stride } => {
                    b += (kernel - 1) * dil;
                    dil *= stride;
                }
                _ => {}
            }
        }
        Ok((a, b))
    }

    /// Full-resolution dilation of conv `conv_index` in the stride-1 network.
    pub fn a_trous_dilation(&self, conv_index: usize) -> usize {
        let last = self.conv_layers()[conv_index];
        let mut dil = 1;
        for layer in &self.layers[..last] {
            match layer {
                LayerSpec::Conv(c) => dil *= c.stride,
                LayerSpec::MaxPool { stride, .. } => dil *= stride,
                _ => {}
            }
        }
        dil
    }
}
