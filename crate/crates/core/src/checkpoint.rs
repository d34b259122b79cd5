//! Weight checkpoints.
//!
//! Little-endian layout:
//!
//! ```text
//! offset  size  field
//! 0       8     magic b"CHAOSWT1"
//! 8       8     config fingerprint (u64, see NetworkConfig::fingerprint)
//! 16      4     epoch (u32, 1-based; 0 = initial weights)
//! 20      4     number of weighted layers L (u32)
//! then L records:
//!         4     layer index (u32)
//!         8     scalar count n (u64)
//!         4n    weights as f32, unit by unit, bias last in each unit
//! ```
//!
//! Alignment padding of the in-memory store is not written.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::network::Network;
use crate::weights::{Params, SharedWeights};

pub const MAGIC: &[u8; 8] = b"CHAOSWT1";

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub fingerprint: u64,
    pub epoch: u32,
    pub layers: Vec<(usize, Vec<f32>)>,
}

impl Checkpoint {
    pub fn capture(net: &Network, weights: &SharedWeights, epoch: u32) -> Self {
        let snap = weights.snapshot();
        Checkpoint {
            fingerprint: net.config().fingerprint(),
            epoch,
            layers: net.weighted().map(|(i, _)| (i, snap.logical(i))).collect(),
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let scalars: usize = self.layers.iter().map(|(_, v)| v.len()).sum();
        let mut out = Vec::with_capacity(24 + 12 * self.layers.len() + 4 * scalars);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&self.fingerprint.to_le_bytes());
        out.extend_from_slice(&self.epoch.to_le_bytes());
        out.extend_from_slice(&(self.layers.len() as u32).to_le_bytes());
        for (idx, values) in &self.layers {
            out.extend_from_slice(&(*idx as u32).to_le_bytes());
            out.extend_from_slice(&(values.len() as u64).to_le_bytes());
            for v in values {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Cursor { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(Error::Data("not a weight checkpoint".into()));
        }
        let fingerprint = u64::from_le_bytes(r.array()?);
        let epoch = u32::from_le_bytes(r.array()?);
        let count = u32::from_le_bytes(r.array()?) as usize;
        let mut layers = Vec::with_capacity(count);
        for _ in 0..count {
            let idx = u32::from_le_bytes(r.array()?) as usize;
            let n = u64::from_le_bytes(r.array()?) as usize;
            let raw = r.take(n.checked_mul(4).ok_or_else(truncated)?)?;
            let values = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            layers.push((idx, values));
        }
        Ok(Checkpoint {
            fingerprint,
            epoch,
            layers,
        })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        w.write_all(&self.encode())
            .and_then(|_| w.flush())
            .map_err(|e| Error::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut bytes = Vec::new();
        File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io(path, e))?;
        Self::decode(&bytes)
    }

    /// Rebuilds a weight store for `net`, which must match the
    /// configuration the checkpoint was taken from.
    pub fn restore(&self, net: &Network) -> Result<SharedWeights> {
        if self.fingerprint != net.config().fingerprint() {
            return Err(Error::Data(
                "checkpoint was written for a different network configuration".into(),
            ));
        }
        let mut params = Params::<f32>::zeros(net);
        for (idx, values) in &self.layers {
            let layout = params
                .layout(*idx)
                .filter(|l| l.count() == values.len())
                .ok_or_else(|| Error::Data(format!("checkpoint layer {idx} does not fit the network")))?;
            let dst = params.layer_mut(*idx);
            for (pos, &v) in layout.logical_indices().zip(values) {
                dst[pos] = v;
            }
        }
        Ok(SharedWeights::from_params(&params))
    }
}

fn truncated() -> Error {
    Error::Data("checkpoint is truncated".into())
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).ok_or_else(truncated)?;
        let s = self.bytes.get(self.pos..end).ok_or_else(truncated)?;
        self.pos = end;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().expect("slice of length N"))
    }
}
