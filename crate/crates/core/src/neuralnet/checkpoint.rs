//! Flat binary checkpoint.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic        8 bytes  "CGEFFCK1"
//! header_len   u32
//! header       JSON {"architecture", "config", "best_epoch"}
//! n_tensors    u32
//! per tensor:  name_len u32, name (UTF-8), ndim u32, dims u64 × ndim, values f64 × Π dims
//! ```
//!
//! Tensors are written in name order, parameters and batch-norm buffers
//! together; buffer names contain `.running_`.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::model::{ModelConfig, Network, ParamMap};
use super::tensor::Tensor;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"CGEFFCK1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub architecture: String,
    pub config: ModelConfig,
    pub best_epoch: usize,
}

fn is_buffer(name: &str) -> bool {
    name.contains(".running_")
}

fn put_u32<W: Write>(w: &mut W, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::Checkpoint(format!("length {v} exceeds u32")))?;
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

pub fn write_checkpoint<W: Write>(w: &mut W, net: &Network, best_epoch: usize) -> Result<()> {
    let header = CheckpointHeader {
        architecture: net.config.architecture.name().to_string(),
        config: net.config.clone(),
        best_epoch,
    };
    let json = serde_json::to_vec(&header)?;
    w.write_all(MAGIC)?;
    put_u32(w, json.len())?;
    w.write_all(&json)?;
    let mut all: Vec<(&String, &Tensor)> = net.params.iter().chain(net.buffers.iter()).collect();
    all.sort_by(|a, b| a.0.cmp(b.0));
    put_u32(w, all.len())?;
    for (name, t) in all {
        put_u32(w, name.len())?;
        w.write_all(name.as_bytes())?;
        put_u32(w, t.shape().len())?;
        for &d in t.shape() {
            w.write_all(&(d as u64).to_le_bytes())?;
        }
        for v in t.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

struct Reader<R> {
    inner: R,
}

impl<R: Read> Reader<R> {
    fn bytes(&mut self, n: usize) -> Result<Vec<u8>> {
        let mut buf = vec![0u8; n];
        self.inner
            .read_exact(&mut buf)
            .map_err(|e| Error::Checkpoint(format!("truncated checkpoint: {e}")))?;
        Ok(buf)
    }

    fn u32(&mut self) -> Result<usize> {
        let b = self.bytes(4)?;
        Ok(u32::from_le_bytes(b.try_into().expect("4 bytes")) as usize)
    }

    fn u64(&mut self) -> Result<u64> {
        let b = self.bytes(8)?;
        Ok(u64::from_le_bytes(b.try_into().expect("8 bytes")))
    }
}

pub fn read_checkpoint<R: Read>(r: R) -> Result<(Network, CheckpointHeader)> {
    let mut rd = Reader { inner: r };
    if rd.bytes(8)? != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let hlen = rd.u32()?;
    let header: CheckpointHeader = serde_json::from_slice(&rd.bytes(hlen)?)
        .map_err(|e| Error::Checkpoint(format!("bad header: {e}")))?;
    let count = rd.u32()?;
    let mut params = ParamMap::new();
    let mut buffers = ParamMap::new();
    for _ in 0..count {
        let nlen = rd.u32()?;
        let name = String::from_utf8(rd.bytes(nlen)?).map_err(|_| Error::Checkpoint("tensor name is not UTF-8".into()))?;
        let ndim = rd.u32()?;
        let shape = (0..ndim).map(|_| rd.u64().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        let n: usize = shape.iter().product();
        let raw = rd.bytes(n * 8)?;
        let data = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
        let t = Tensor::new(shape, data)?;
        if !t.all_finite() {
            return Err(Error::Checkpoint(format!("tensor {name} has non-finite values")));
        }
        let target = if is_buffer(&name) { &mut buffers } else { &mut params };
        if target.insert(name.clone(), t).is_some() {
            return Err(Error::Checkpoint(format!("duplicate tensor {name}")));
        }
    }
    let mut trailing = Vec::new();
    rd.inner.read_to_end(&mut trailing)?;
    if !trailing.is_empty() {
        return Err(Error::Checkpoint(format!("{} trailing bytes", trailing.len())));
    }
    if header.architecture != header.config.architecture.name() {
        return Err(Error::Checkpoint("header architecture disagrees with config".into()));
    }
    let net = Network::from_parts(header.config.clone(), params, buffers)?;
    Ok((net, header))
}
