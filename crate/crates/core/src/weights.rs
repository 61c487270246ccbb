//! SCTW weight container: named f32 tensors with a CRC-checked payload and
//! a leading metadata tensor describing the architecture, so a file is
//! self-sufficient to rebuild its model.
//!
//! Layout (little-endian):
//!
//! ```text
//! magic "SCTW" | version u16 (=1)
//! payload: tensor count u32, then per tensor:
//!   name length u16 | UTF-8 name | rank u8 | dims u32 each | f32 data
//! trailing CRC32 (IEEE) of the payload bytes
//! ```

use crate::error::{Result, SctError};
use crate::nn::abmil::AbmilParams;
use crate::nn::model::{AggMode, HeadKind, ModelConfig, SctModelParams};
use crate::nn::ssp::PoolMode;
use crate::nn::ParamTensors;
use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use std::collections::BTreeMap;
use std::fs::File;
use std::io::{Cursor, Read, Write};
use std::path::Path;

pub const SCTW_MAGIC: &[u8; 4] = b"SCTW";
pub const SCTW_VERSION: u16 = 1;
const META_TENSOR: &str = "__meta__";

/// IEEE CRC32 (reflected, polynomial 0xEDB88320).
pub fn crc32(bytes: &[u8]) -> u32 {
    let mut table = [0u32; 256];
    for (i, slot) in table.iter_mut().enumerate() {
        let mut c = i as u32;
        for _ in 0..8 {
            c = if c & 1 != 0 { 0xEDB8_8320 ^ (c >> 1) } else { c >> 1 };
        }
        *slot = c;
    }
    let mut crc = 0xFFFF_FFFFu32;
    for &b in bytes {
        crc = table[((crc ^ b as u32) & 0xFF) as usize] ^ (crc >> 8);
    }
    crc ^ 0xFFFF_FFFF
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    SctDetection,
    SctGrading,
    Abmil,
}

/// A loaded model, ready for inference.
#[derive(Debug, Clone)]
pub enum TrainedModel {
    Sct(Box<SctModelParams<f32>>, ModelConfig),
    Abmil(Box<AbmilParams<f32>>),
}

impl TrainedModel {
    pub fn kind(&self) -> ModelKind {
        match self {
            TrainedModel::Sct(_, cfg) => match cfg.head {
                HeadKind::Detection => ModelKind::SctDetection,
                HeadKind::Grading => ModelKind::SctGrading,
            },
            TrainedModel::Abmil(_) => ModelKind::Abmil,
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            TrainedModel::Sct(_, cfg) => cfg.input_dim,
            TrainedModel::Abmil(p) => p.input_dim(),
        }
    }
}

fn encode_meta_sct(cfg: &ModelConfig) -> Vec<f32> {
    let kind = match cfg.head {
        HeadKind::Detection => 0.0,
        HeadKind::Grading => 1.0,
    };
    let mut v = vec![
        kind,
        cfg.input_dim as f32,
        cfg.stage_widths.len() as f32,
    ];
    v.extend(cfg.stage_widths.iter().map(|&w| w as f32));
    v.extend([
        cfg.kernel_size as f32,
        cfg.pool_size as f32,
        cfg.stride as f32,
        cfg.n_heads as f32,
        cfg.mlp_hidden as f32,
        match cfg.pool_mode {
            PoolMode::Max => 0.0,
            PoolMode::Avg => 1.0,
        },
        match cfg.agg {
            AggMode::Mean => 0.0,
            AggMode::Max => 1.0,
        },
    ]);
    v
}

fn decode_meta_sct(meta: &[f32]) -> Result<ModelConfig> {
    let schema = |msg: &str| SctError::Schema(format!("weights metadata: {msg}"));
    if meta.len() < 3 {
        return Err(schema("too short"));
    }
    let head = match meta[0] as i64 {
        0 => HeadKind::Detection,
        1 => HeadKind::Grading,
        other => return Err(schema(&format!("unknown model kind {other}"))),
    };
    let input_dim = meta[1] as usize;
    let n_stages = meta[2] as usize;
    if meta.len() != 3 + n_stages + 7 {
        return Err(schema("length does not match stage count"));
    }
    let stage_widths: Vec<usize> = meta[3..3 + n_stages].iter().map(|&w| w as usize).collect();
    let rest = &meta[3 + n_stages..];
    Ok(ModelConfig {
        input_dim,
        stage_widths,
        kernel_size: rest[0] as usize,
        pool_size: rest[1] as usize,
        stride: rest[2] as usize,
        n_heads: rest[3] as usize,
        mlp_hidden: rest[4] as usize,
        pool_mode: if rest[5] == 0.0 { PoolMode::Max } else { PoolMode::Avg },
        agg: if rest[6] == 0.0 { AggMode::Mean } else { AggMode::Max },
        head,
    })
}

fn write_tensor(payload: &mut Vec<u8>, name: &str, shape: &[usize], data: &[f32]) -> Result<()> {
    if name.len() > u16::MAX as usize {
        return Err(SctError::Schema(format!("tensor name '{name}' too long")));
    }
    payload.write_u16::<LittleEndian>(name.len() as u16)?;
    payload.extend_from_slice(name.as_bytes());
    payload.write_u8(shape.len() as u8)?;
    for &d in shape {
        payload.write_u32::<LittleEndian>(d as u32)?;
    }
    for &v in data {
        payload.write_u32::<LittleEndian>(v.to_bits())?;
    }
    Ok(())
}

fn write_file<P: AsRef<Path>>(path: P, tensors: &[(String, Vec<usize>, Vec<f32>)]) -> Result<()> {
    let mut payload = Vec::new();
    payload.write_u32::<LittleEndian>(tensors.len() as u32)?;
    let mut seen = std::collections::HashSet::new();
    for (name, shape, data) in tensors {
        if !seen.insert(name.clone()) {
            return Err(SctError::Schema(format!("duplicate tensor name '{name}'")));
        }
        write_tensor(&mut payload, name, shape, data)?;
    }
    let mut f = File::create(path)?;
    f.write_all(SCTW_MAGIC)?;
    f.write_u16::<LittleEndian>(SCTW_VERSION)?;
    f.write_all(&payload)?;
    f.write_u32::<LittleEndian>(crc32(&payload))?;
    Ok(())
}

fn collect_tensors<P: ParamTensors<f32>>(params: &P) -> Vec<(String, Vec<usize>, Vec<f32>)> {
    let mut out = Vec::new();
    params.visit(&mut |name, shape, data| {
        out.push((name.to_string(), shape.to_vec(), data.to_vec()));
    });
    out
}

/// Save an SCT model with its architecture embedded.
pub fn save_sct_weights<P: AsRef<Path>>(
    path: P,
    params: &SctModelParams<f32>,
    cfg: &ModelConfig,
) -> Result<()> {
    let mut tensors = vec![(META_TENSOR.to_string(), vec![0usize], encode_meta_sct(cfg))];
    tensors[0].1 = vec![tensors[0].2.len()];
    tensors.extend(collect_tensors(params));
    write_file(path, &tensors)
}

/// Save the attention-pooling baseline.
pub fn save_abmil_weights<P: AsRef<Path>>(path: P, params: &AbmilParams<f32>) -> Result<()> {
    let meta = vec![
        2.0f32,
        params.input_dim() as f32,
        params.w.len() as f32,
        if params.u.is_some() { 1.0 } else { 0.0 },
    ];
    let mut tensors = vec![(META_TENSOR.to_string(), vec![meta.len()], meta)];
    tensors.extend(collect_tensors(params));
    write_file(path, &tensors)
}

struct RawTensor {
    shape: Vec<usize>,
    data: Vec<f32>,
}

fn read_all_tensors(bytes: &[u8]) -> Result<BTreeMap<String, RawTensor>> {
    if bytes.len() < 10 {
        return Err(SctError::Corrupt("file too short for an SCTW container".into()));
    }
    let mut cur = Cursor::new(bytes);
    let mut magic = [0u8; 4];
    cur.read_exact(&mut magic)?;
    if &magic != SCTW_MAGIC {
        return Err(SctError::Format(format!(
            "bad magic {:?}, expected \"SCTW\"",
            String::from_utf8_lossy(&magic)
        )));
    }
    let version = cur.read_u16::<LittleEndian>()?;
    if version != SCTW_VERSION {
        return Err(SctError::Format(format!(
            "unsupported SCTW version {version} (this build reads version {SCTW_VERSION})"
        )));
    }
    let payload = &bytes[6..bytes.len() - 4];
    let stored_crc = u32::from_le_bytes(bytes[bytes.len() - 4..].try_into().unwrap());
    let actual = crc32(payload);
    if stored_crc != actual {
        return Err(SctError::Corrupt(format!(
            "CRC mismatch: stored {stored_crc:08x}, computed {actual:08x}"
        )));
    }

    let mut cur = Cursor::new(payload);
    let corrupt = |what: &str| SctError::Corrupt(format!("truncated while reading {what}"));
    let count = cur.read_u32::<LittleEndian>().map_err(|_| corrupt("tensor count"))?;
    let mut out = BTreeMap::new();
    for _ in 0..count {
        let name_len = cur.read_u16::<LittleEndian>().map_err(|_| corrupt("name length"))? as usize;
        let mut name = vec![0u8; name_len];
        cur.read_exact(&mut name).map_err(|_| corrupt("name"))?;
        let name = String::from_utf8(name)
            .map_err(|_| SctError::Schema("tensor name is not UTF-8".into()))?;
        let rank = cur.read_u8().map_err(|_| corrupt("rank"))? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(cur.read_u32::<LittleEndian>().map_err(|_| corrupt("dims"))? as usize);
        }
        let len: usize = shape.iter().product();
        let mut data = Vec::with_capacity(len);
        for _ in 0..len {
            data.push(f32::from_bits(
                cur.read_u32::<LittleEndian>().map_err(|_| corrupt("tensor data"))?,
            ));
        }
        if out.insert(name.clone(), RawTensor { shape, data }).is_some() {
            return Err(SctError::Schema(format!("duplicate tensor '{name}'")));
        }
    }
    if (cur.position() as usize) < payload.len() {
        return Err(SctError::Schema("trailing bytes after the last tensor".into()));
    }
    Ok(out)
}

fn fill_params<P: ParamTensors<f32>>(
    params: &mut P,
    tensors: &BTreeMap<String, RawTensor>,
) -> Result<()> {
    let mut missing = Vec::new();
    let mut used = std::collections::HashSet::new();
    used.insert(META_TENSOR.to_string());
    let mut err: Option<SctError> = None;
    params.visit_mut(&mut |name, shape, data| {
        if err.is_some() {
            return;
        }
        match tensors.get(name) {
            Some(raw) => {
                used.insert(name.to_string());
                if raw.shape != shape {
                    err = Some(SctError::Schema(format!(
                        "tensor '{name}': file shape {:?} does not match expected {:?}",
                        raw.shape, shape
                    )));
                    return;
                }
                data.copy_from_slice(&raw.data);
            }
            None => missing.push(name.to_string()),
        }
    });
    if let Some(e) = err {
        return Err(e);
    }
    if !missing.is_empty() {
        return Err(SctError::Schema(format!("missing tensors: {}", missing.join(", "))));
    }
    for name in tensors.keys() {
        if !used.contains(name) {
            return Err(SctError::Schema(format!("unexpected tensor '{name}' in file")));
        }
    }
    Ok(())
}

/// Load any SCTW file; the metadata tensor decides the model family.
pub fn load_weights<P: AsRef<Path>>(path: P) -> Result<TrainedModel> {
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    let tensors = read_all_tensors(&bytes)?;
    let meta = tensors
        .get(META_TENSOR)
        .ok_or_else(|| SctError::Schema("missing metadata tensor".into()))?;
    match meta.data.first().map(|&k| k as i64) {
        Some(0) | Some(1) => {
            let cfg = decode_meta_sct(&meta.data)?;
            let mut params = cfg.build::<f32>()?;
            fill_params(&mut params, &tensors)?;
            Ok(TrainedModel::Sct(Box::new(params), cfg))
        }
        Some(2) => {
            if meta.data.len() != 4 {
                return Err(SctError::Schema("weights metadata: bad baseline header".into()));
            }
            let input_dim = meta.data[1] as usize;
            let attention_dim = meta.data[2] as usize;
            let gated = meta.data[3] != 0.0;
            let mut params = AbmilParams::<f32>::new(input_dim, attention_dim, gated);
            fill_params(&mut params, &tensors)?;
            Ok(TrainedModel::Abmil(Box::new(params)))
        }
        other => Err(SctError::Schema(format!("unknown model kind {other:?}"))),
    }
}
