//! Binary weight container: magic `SPHC`, a version word and a layer count,
//! then per layer a record count followed by records of a four-word shape
//! header and the raw values. All words and floats are little-endian.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::read_u32;

const MAGIC: &[u8; 4] = b"SPHC";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct BlobRecord {
    pub shape: [u32; 4],
    pub data: Vec<f32>,
}

impl BlobRecord {
    pub fn new(shape: [usize; 4], data: Vec<f32>) -> Result<Self> {
        if shape.iter().product::<usize>() != data.len() {
            return Err(Error::Format(format!(
                "record shape {shape:?} does not hold {} values",
                data.len()
            )));
        }
        Ok(Self {
            shape: shape.map(|d| d as u32),
            data,
        })
    }

    fn byte_len(&self) -> u64 {
        16 + 4 * self.data.len() as u64
    }
}

/// Byte offsets of each layer within a blob, for the plain-text index.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlobIndexEntry {
    pub layer: usize,
    pub offset: u64,
    pub records: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct WeightBlob {
    pub layers: Vec<Vec<BlobRecord>>,
}

impl WeightBlob {
    pub fn index(&self) -> Vec<BlobIndexEntry> {
        let mut offset = 12u64;
        self.layers
            .iter()
            .enumerate()
            .map(|(layer, recs)| {
                let e = BlobIndexEntry {
                    layer,
                    offset,
                    records: recs.len(),
                };
                offset += 4 + recs.iter().map(BlobRecord::byte_len).sum::<u64>();
                e
            })
            .collect()
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&(self.layers.len() as u32).to_le_bytes())?;
        for layer in &self.layers {
            w.write_all(&(layer.len() as u32).to_le_bytes())?;
            for rec in layer {
                for d in rec.shape {
                    w.write_all(&d.to_le_bytes())?;
                }
                let mut bytes = Vec::with_capacity(rec.data.len() * 4);
                for v in &rec.data {
                    bytes.extend_from_slice(&v.to_le_bytes());
                }
                w.write_all(&bytes)?;
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format("weight blob magic mismatch".into()));
        }
        let version = read_u32(&mut r)?;
        if version != VERSION {
            return Err(Error::Format(format!("unsupported weight blob version {version}")));
        }
        let n_layers = read_u32(&mut r)? as usize;
        let mut layers = Vec::with_capacity(n_layers.min(1024));
        for _ in 0..n_layers {
            let n_rec = read_u32(&mut r)? as usize;
            let mut recs = Vec::with_capacity(n_rec.min(4096));
            for _ in 0..n_rec {
                let mut shape = [0u32; 4];
                for d in shape.iter_mut() {
                    *d = read_u32(&mut r)?;
                }
                let n = shape.iter().map(|&d| d as usize).product::<usize>();
                let mut bytes = vec![0u8; n * 4];
                r.read_exact(&mut bytes)?;
                let data = bytes
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                    .collect();
                recs.push(BlobRecord { shape, data });
            }
            layers.push(recs);
        }
        Ok(Self { layers })
    }
}
