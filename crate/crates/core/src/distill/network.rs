use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::engine::{relu, BlobRecord, MaxPool, RowKernel, RowUntiedConv, Tensor, WeightBlob};
use crate::error::{shape, Error, Result};
use crate::planner::{KernelPlan, PlanStage};

/// A stack of row-untied convs with ReLUs between them and optional
/// stride-1 pools in front of some layers. Every layer runs at the full
/// equirect resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct SphConvNetwork {
    pub names: Vec<String>,
    pub layers: Vec<RowUntiedConv<f32>>,
    /// Pool applied (after the ReLU) to the input of each layer.
    pub pools: Vec<Option<MaxPool>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
struct PoolEntry {
    kernel: usize,
    dilation: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct LayerEntry {
    name: String,
    in_channels: usize,
    out_channels: usize,
    dilation: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pool: Option<PoolEntry>,
}

/// On-disk description of a network; weights live in the SPHC blob it names.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkManifest {
    pub height: usize,
    pub blob: String,
    layers: Vec<LayerEntry>,
}

impl SphConvNetwork {
    /// Zero-weight network with the planned kernel shapes.
    pub fn from_plan(plan: &KernelPlan) -> Result<Self> {
        plan.validate()?;
        let mut net = Self {
            names: Vec::new(),
            layers: Vec::new(),
            pools: Vec::new(),
        };
        let mut pending = None;
        for st in &plan.stages {
            match st {
                PlanStage::Pool { kernel, dilation } => pending = Some(MaxPool::dense(*kernel, *dilation, true)),
                PlanStage::Conv(l) => {
                    let rows = l
                        .shapes
                        .iter()
                        .map(|s| RowKernel::zeros(l.out_channels, l.in_channels, s.kh, s.kw))
                        .collect();
                    net.names.push(l.name.clone());
                    net.layers.push(RowUntiedConv::new(l.in_channels, l.out_channels, l.dilation, rows)?);
                    net.pools.push(pending.take());
                }
            }
        }
        Ok(net)
    }

    pub fn height(&self) -> usize {
        self.layers.first().map_or(0, |l| l.height())
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() || self.names.len() != self.layers.len() || self.pools.len() != self.layers.len() {
            return Err(shape("network layers, names and pools disagree"));
        }
        let h = self.height();
        for (i, l) in self.layers.iter().enumerate() {
            l.validate()?;
            if l.height() != h {
                return Err(shape(format!("layer {i} has {} rows, expected {h}", l.height())));
            }
            if i > 0 && l.in_channels != self.layers[i - 1].out_channels {
                return Err(shape(format!("layer {i} expects {} channels", l.in_channels)));
            }
        }
        if self.pools[0].is_some() {
            return Err(shape("the first layer reads the image directly"));
        }
        Ok(())
    }

    /// Input of layer `i >= 1` given the pre-activation output of layer `i - 1`.
    pub fn layer_input(&self, i: usize, prev: &Tensor<f32>) -> Result<Tensor<f32>> {
        let x = relu(prev);
        match &self.pools[i] {
            Some(p) => p.forward(&x),
            None => Ok(x),
        }
    }

    /// Pre-activation output of layer `i >= 1` fed with `prev` as layer
    /// `i - 1`'s output.
    pub fn forward_layer(&self, i: usize, prev: &Tensor<f32>) -> Result<Tensor<f32>> {
        self.layers[i].forward(&self.layer_input(i, prev)?)
    }

    /// Pre-activation outputs of the first `n` layers.
    pub fn forward_upto(&self, img: &Tensor<f32>, n: usize) -> Result<Vec<Tensor<f32>>> {
        let mut outs: Vec<Tensor<f32>> = Vec::with_capacity(n);
        for i in 0..n.min(self.layers.len()) {
            let o = match outs.last() {
                None => self.layers[0].forward(img)?,
                Some(prev) => self.forward_layer(i, prev)?,
            };
            outs.push(o);
        }
        Ok(outs)
    }

    pub fn forward(&self, img: &Tensor<f32>) -> Result<Vec<Tensor<f32>>> {
        self.forward_upto(img, self.layers.len())
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.parameter_count()).sum()
    }

    pub fn to_blob(&self) -> Result<WeightBlob> {
        let mut layers = Vec::with_capacity(self.layers.len());
        for l in &self.layers {
            let mut recs = Vec::with_capacity(2 * l.rows.len());
            for k in &l.rows {
                recs.push(BlobRecord::new(
                    [l.out_channels, l.in_channels, k.kernel_h, k.kernel_w],
                    k.weights.clone(),
                )?);
                recs.push(BlobRecord::new([l.out_channels, 1, 1, 1], k.bias.clone())?);
            }
            layers.push(recs);
        }
        Ok(WeightBlob { layers })
    }

    pub fn manifest(&self, blob: &str) -> NetworkManifest {
        NetworkManifest {
            height: self.height(),
            blob: blob.into(),
            layers: self
                .layers
                .iter()
                .zip(&self.names)
                .zip(&self.pools)
                .map(|((l, n), p)| LayerEntry {
                    name: n.clone(),
                    in_channels: l.in_channels,
                    out_channels: l.out_channels,
                    dilation: l.dilation,
                    pool: p.as_ref().map(|p| PoolEntry {
                        kernel: p.kernel,
                        dilation: p.dilation,
                    }),
                })
                .collect(),
        }
    }

    pub fn from_parts(m: &NetworkManifest, blob: &WeightBlob) -> Result<Self> {
        if blob.layers.len() != m.layers.len() {
            return Err(Error::Format(format!(
                "manifest lists {} layers, blob holds {}",
                m.layers.len(),
                blob.layers.len()
            )));
        }
        let mut net = Self {
            names: Vec::new(),
            layers: Vec::new(),
            pools: Vec::new(),
        };
        for (e, recs) in m.layers.iter().zip(&blob.layers) {
            if recs.len() != 2 * m.height {
                return Err(Error::Format(format!("layer {} has {} records for {} rows", e.name, recs.len(), m.height)));
            }
            let mut rows = Vec::with_capacity(m.height);
            for pair in recs.chunks_exact(2) {
                let (w, b) = (&pair[0], &pair[1]);
                let [co, ci, kh, kw] = w.shape.map(|d| d as usize);
                if co != e.out_channels || ci != e.in_channels || b.data.len() != co {
                    return Err(Error::Format(format!("layer {} record shape {:?}", e.name, w.shape)));
                }
                rows.push(RowKernel {
                    kernel_h: kh,
                    kernel_w: kw,
                    weights: w.data.clone(),
                    bias: b.data.clone(),
                });
            }
            net.names.push(e.name.clone());
            net.layers.push(RowUntiedConv::new(e.in_channels, e.out_channels, e.dilation, rows)?);
            net.pools.push(e.pool.map(|p| MaxPool::dense(p.kernel, p.dilation, true)));
        }
        net.validate()?;
        Ok(net)
    }

    /// Writes the manifest and a `<stem>.sphc` weight blob next to it.
    pub fn save(&self, manifest: &Path) -> Result<()> {
        let blob = format!(
            "{}.sphc",
            manifest.file_stem().and_then(|s| s.to_str()).unwrap_or("network")
        );
        self.to_blob()?
            .write_to(BufWriter::new(File::create(manifest.with_file_name(&blob))?))?;
        std::fs::write(manifest, toml::to_string(&self.manifest(&blob))?)?;
        Ok(())
    }

    pub fn load(manifest: &Path) -> Result<Self> {
        let m: NetworkManifest = toml::from_str(&std::fs::read_to_string(manifest)?)?;
        let blob = WeightBlob::read_from(BufReader::new(File::open(manifest.with_file_name(&m.blob))?))?;
        Self::from_parts(&m, &blob)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::gradcheck::random_tensor;
    use crate::netspec::NetworkSpec;
    use crate::planner::{plan_kernels, PlanConfig};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_net(cfg: &PlanConfig) -> SphConvNetwork {
        let plan = plan_kernels(&NetworkSpec::toy(0), cfg).unwrap();
        let mut net = SphConvNetwork::from_plan(&plan).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for l in &mut net.layers {
            for k in &mut l.rows {
                k.weights.iter_mut().for_each(|w| *w = rng.gen_range(-0.3..0.3));
                k.bias.iter_mut().for_each(|b| *b = rng.gen_range(-0.1..0.1));
            }
        }
        net
    }

    fn cfg() -> PlanConfig {
        PlanConfig {
            height: 32,
            max_kernel: (5, 5),
            fov: 90.0,
            tangent_width: 8,
        }
    }

    #[test]
    fn plan_shapes_and_retained_pool() {
        let net = random_net(&cfg());
        net.validate().unwrap();
        assert_eq!(net.layers.len(), 3);
        // coarse equirect pixels relative to the target keep the pool
        assert!(net.pools[2].is_some());
        assert_eq!(net.layers[2].dilation, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random_tensor::<f32>(&mut rng, 3, 32, 64);
        let outs = net.forward(&x).unwrap();
        assert_eq!(outs.len(), 3);
        assert_eq!(outs[2].dims(), (16, 32, 64));
        assert_eq!(net.forward_layer(2, &outs[1]).unwrap(), outs[2]);
        assert!(outs[1].data().iter().any(|v| *v < 0.0));
    }

    #[test]
    fn save_and_load() {
        let net = random_net(&cfg());
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.toml");
        net.save(&path).unwrap();
        assert!(dir.path().join("net.sphc").exists());
        assert_eq!(SphConvNetwork::load(&path).unwrap(), net);
        assert_eq!(net.to_blob().unwrap().layers[0].len(), 2 * 32);
    }
}
