//! Binary checkpoint format.
//!
//! ```text
//! "CPA1" | version u8 | header_len u32 | header (JSON)
//! tensor_count u64
//! per tensor: name_len u32 | name | kind u8 | backbone u8 | len u64 | len × f64
//! per tensor: len u64 | ADAM first moment  | len u64 | ADAM second moment
//! step u64
//! ```
//!
//! All integers and floats are little-endian; floats are stored as raw `f64`
//! bits so a reload is bit-exact.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{CpaError, Result};
use crate::features::{ChannelRanges, FeatureConfig};
use crate::nn::model::{Model, ModelParams, NetworkConfig, ParamKind, ParamTensor, TaskMode};
use crate::nn::train::TrainConfig;
use crate::signal::FrameConfig;

pub const MAGIC: &[u8; 4] = b"CPA1";
pub const VERSION: u8 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub network: NetworkConfig,
    pub task: TaskMode,
    pub train: Option<TrainConfig>,
    pub frame: Option<FrameConfig>,
    pub features: Option<FeatureConfig>,
    /// Shared per-channel input range; `None` feeds per-sample features.
    #[serde(default)]
    pub input_ranges: Option<ChannelRanges>,
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    pub model: Model,
}

fn kind_code(kind: ParamKind) -> u8 {
    match kind {
        ParamKind::Kernel => 0,
        ParamKind::Bias => 1,
        ParamKind::BnScale => 2,
        ParamKind::BnShift => 3,
        ParamKind::RunningMean => 4,
        ParamKind::RunningVar => 5,
    }
}

fn kind_from(code: u8) -> Result<ParamKind> {
    Ok(match code {
        0 => ParamKind::Kernel,
        1 => ParamKind::Bias,
        2 => ParamKind::BnScale,
        3 => ParamKind::BnShift,
        4 => ParamKind::RunningMean,
        5 => ParamKind::RunningVar,
        other => return Err(CpaError::Format(format!("unknown parameter kind {other}"))),
    })
}

fn write_f64s<W: Write>(w: &mut W, values: &[f64]) -> Result<()> {
    w.write_all(&(values.len() as u64).to_le_bytes())?;
    for v in values {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u8<R: Read>(r: &mut R) -> Result<u8> {
    let mut b = [0u8; 1];
    r.read_exact(&mut b)?;
    Ok(b[0])
}

fn read_f64s<R: Read>(r: &mut R, limit: usize) -> Result<Vec<f64>> {
    let len = read_u64(r)? as usize;
    if len > limit {
        return Err(CpaError::Format(format!("tensor length {len} exceeds {limit}")));
    }
    let mut bytes = vec![0u8; len * 8];
    r.read_exact(&mut bytes)?;
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect())
}

pub fn write_checkpoint<W: Write>(w: &mut W, header: &CheckpointHeader, params: &ModelParams) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&[VERSION])?;
    let json = serde_json::to_vec(header)?;
    w.write_all(&(json.len() as u32).to_le_bytes())?;
    w.write_all(&json)?;
    w.write_all(&(params.tensors.len() as u64).to_le_bytes())?;
    for t in &params.tensors {
        w.write_all(&(t.name.len() as u32).to_le_bytes())?;
        w.write_all(t.name.as_bytes())?;
        w.write_all(&[kind_code(t.kind), u8::from(t.backbone)])?;
        write_f64s(w, &t.values)?;
    }
    for (m, v) in params.adam_m.iter().zip(&params.adam_v) {
        write_f64s(w, m)?;
        write_f64s(w, v)?;
    }
    w.write_all(&params.step.to_le_bytes())?;
    Ok(())
}

pub fn read_checkpoint<R: Read>(r: &mut R) -> Result<Checkpoint> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(CpaError::Format("not a checkpoint (bad magic)".into()));
    }
    let version = read_u8(r)?;
    if version != VERSION {
        return Err(CpaError::Format(format!("unsupported checkpoint version {version}")));
    }
    let header_len = read_u32(r)? as usize;
    let mut json = vec![0u8; header_len];
    r.read_exact(&mut json)?;
    let header: CheckpointHeader = serde_json::from_slice(&json)?;
    header.network.validate()?;
    let limit = 1usize << 32;

    let count = read_u64(r)? as usize;
    if count > 10_000 {
        return Err(CpaError::Format(format!("implausible tensor count {count}")));
    }
    let mut tensors = Vec::with_capacity(count);
    for _ in 0..count {
        let name_len = read_u32(r)? as usize;
        let mut name = vec![0u8; name_len];
        r.read_exact(&mut name)?;
        let name = String::from_utf8(name).map_err(|e| CpaError::Format(e.to_string()))?;
        let kind = kind_from(read_u8(r)?)?;
        let backbone = read_u8(r)? != 0;
        let values = read_f64s(r, limit)?;
        tensors.push(ParamTensor { name, kind, backbone, values });
    }
    let mut adam_m = Vec::with_capacity(count);
    let mut adam_v = Vec::with_capacity(count);
    for _ in 0..count {
        adam_m.push(read_f64s(r, limit)?);
        adam_v.push(read_f64s(r, limit)?);
    }
    let step = read_u64(r)?;
    let params = ModelParams { tensors, adam_m, adam_v, step };
    let model = Model::new(header.network.clone(), params)?;
    Ok(Checkpoint { header, model })
}

pub fn save(path: &Path, header: &CheckpointHeader, params: &ModelParams) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_checkpoint(&mut w, header, params)?;
    w.flush()?;
    Ok(())
}

pub fn load(path: &Path) -> Result<Checkpoint> {
    read_checkpoint(&mut BufReader::new(File::open(path)?))
}
