//! Binary checkpoints.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic        8 bytes  "RNNMSCKP"
//! version      u32
//! meta_len     u32, followed by meta_len bytes of JSON {"config", "step"}
//! n_tensors    u32
//! per tensor:  name_len u32, name bytes, rank u32, dims u64 x rank,
//!              f32 data (product of dims values)
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::params::{ModelParams, VocoderConfig};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"RNNMSCKP";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: VocoderConfig,
    pub step: u64,
    pub params: ModelParams,
}

#[derive(Serialize, Deserialize)]
struct Meta {
    config: VocoderConfig,
    step: u64,
}

pub fn save_checkpoint(path: impl AsRef<Path>, ckpt: &Checkpoint) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(CHECKPOINT_MAGIC)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    let meta = serde_json::to_vec(&Meta {
        config: ckpt.config,
        step: ckpt.step,
    })?;
    w.write_all(&(meta.len() as u32).to_le_bytes())?;
    w.write_all(&meta)?;
    let tensors = ckpt.params.tensors();
    w.write_all(&(tensors.len() as u32).to_le_bytes())?;
    for t in tensors {
        w.write_all(&(t.name.len() as u32).to_le_bytes())?;
        w.write_all(t.name.as_bytes())?;
        w.write_all(&(t.dims.len() as u32).to_le_bytes())?;
        for d in &t.dims {
            w.write_all(&(*d as u64).to_le_bytes())?;
        }
        for v in t.data {
            w.write_all(&(*v as f32).to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(Error::Format("not a checkpoint file (bad magic)".into()));
    }
    let version = read_u32(&mut r)?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Format(format!("unsupported checkpoint version {version}")));
    }
    let meta_len = read_u32(&mut r)? as usize;
    let mut meta = vec![0u8; meta_len];
    r.read_exact(&mut meta)?;
    let meta: Meta = serde_json::from_slice(&meta)?;
    meta.config.validate()?;

    let mut params = ModelParams::zeros(&meta.config.model);
    let n_tensors = read_u32(&mut r)? as usize;
    let mut slots = params.tensors_mut();
    if n_tensors != slots.len() {
        return Err(Error::Format(format!(
            "checkpoint holds {n_tensors} tensors, expected {}",
            slots.len()
        )));
    }
    for _ in 0..n_tensors {
        let name_len = read_u32(&mut r)? as usize;
        let mut name = vec![0u8; name_len];
        r.read_exact(&mut name)?;
        let name = String::from_utf8(name).map_err(|_| Error::Format("tensor name is not UTF-8".into()))?;
        let rank = read_u32(&mut r)? as usize;
        let dims = (0..rank)
            .map(|_| read_u64(&mut r).map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        let slot = slots
            .iter_mut()
            .find(|s| s.name == name)
            .ok_or_else(|| Error::Format(format!("unknown tensor {name}")))?;
        if slot.dims != dims {
            return Err(Error::Shape(format!(
                "tensor {name} has dims {dims:?}, config implies {:?}",
                slot.dims
            )));
        }
        let mut raw = vec![0u8; slot.data.len() * 4];
        r.read_exact(&mut raw)?;
        for (v, b) in slot.data.iter_mut().zip(raw.chunks_exact(4)) {
            *v = f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64;
        }
    }
    drop(slots);
    Ok(Checkpoint {
        config: meta.config,
        step: meta.step,
        params,
    })
}
