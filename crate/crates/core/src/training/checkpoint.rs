use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{AdadeltaConfig, AdadeltaState, Result, TrainError};
use crate::model::{build_variant, AtLstmModel, Hyper, Variant};

pub const MAGIC: &[u8; 4] = b"ATLS";
pub const VERSION: u8 = 1;
const PREFIX: usize = 4 + 1 + 4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CheckpointError {
    #[error("not a checkpoint file (bad magic bytes)")]
    BadMagic,
    #[error("unsupported checkpoint version {0} (this build reads version {VERSION})")]
    UnsupportedVersion(u8),
    #[error("checksum mismatch: stored {stored:08x}, computed {computed:08x} (file truncated or corrupted)")]
    Checksum { stored: u32, computed: u32 },
    #[error("malformed header: {0}")]
    Header(String),
    #[error("header does not match payload: {0}")]
    Inconsistent(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TensorRole {
    Param,
    SqGrad,
    SqUpdate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub role: TensorRole,
    pub shape: Vec<usize>,
    /// Byte offset from the start of the payload.
    pub offset: u64,
    pub trainable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub variant: Variant,
    pub hyper: Hyper,
    pub vocab_size: usize,
    pub charset_size: usize,
    pub vocab_hash: String,
    pub optimizer: Option<AdadeltaConfig>,
    pub payload_bytes: u64,
    pub tensors: Vec<TensorEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: AtLstmModel,
    pub optimizer: Option<AdadeltaState>,
    pub vocab_hash: String,
}

/// Serialises parameters and optional optimizer accumulators.
///
/// Layout: `ATLS`, version byte, `u32` LE header length, JSON header,
/// little-endian `f64` payload in header order, `u32` LE CRC-32 of every
/// preceding byte.
pub fn encode_checkpoint(model: &AtLstmModel, optimizer: Option<&AdadeltaState>, vocab_hash: &str) -> Vec<u8> {
    let mut tensors = Vec::new();
    let mut payload: Vec<u8> = Vec::new();
    let mut push = |name: &str, role, shape: &[usize], trainable, data: &[f64]| {
        tensors.push(TensorEntry {
            name: name.to_string(),
            role,
            shape: shape.to_vec(),
            offset: payload.len() as u64,
            trainable,
        });
        for x in data {
            payload.extend_from_slice(&x.to_le_bytes());
        }
    };
    for (_, p) in model.params.iter() {
        push(&p.name, TensorRole::Param, p.value.shape(), p.trainable, p.value.data());
    }
    if let Some(st) = optimizer {
        for (role, bufs) in [(TensorRole::SqGrad, &st.sq_grad), (TensorRole::SqUpdate, &st.sq_update)] {
            for ((_, p), buf) in model.params.iter().zip(bufs) {
                push(&p.name, role, p.value.shape(), p.trainable, buf);
            }
        }
    }
    let header = Header {
        variant: model.net.variant,
        hyper: model.net.hyper.clone(),
        vocab_size: model.net.vocab_size,
        charset_size: model.net.charset_size,
        vocab_hash: vocab_hash.to_string(),
        optimizer: optimizer.map(|s| s.config),
        payload_bytes: payload.len() as u64,
        tensors,
    };
    let json = serde_json::to_vec(&header).expect("header serialises");
    let mut out = Vec::with_capacity(PREFIX + json.len() + payload.len() + 4);
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(&payload);
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

/// Reads and validates the header without rebuilding the model.
pub fn decode_header(bytes: &[u8]) -> Result<(Header, &[u8]), CheckpointError> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    match bytes.get(4) {
        Some(&VERSION) => {}
        Some(&v) => return Err(CheckpointError::UnsupportedVersion(v)),
        None => return Err(CheckpointError::Header("missing version byte".into())),
    }
    if bytes.len() < PREFIX + 4 {
        return Err(CheckpointError::Checksum {
            stored: 0,
            computed: crc32fast::hash(bytes),
        });
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(tail.try_into().expect("4 bytes"));
    let computed = crc32fast::hash(body);
    if stored != computed {
        return Err(CheckpointError::Checksum { stored, computed });
    }
    let header_len = u32::from_le_bytes(body[5..9].try_into().expect("4 bytes")) as usize;
    let header_bytes = body
        .get(PREFIX..PREFIX + header_len)
        .ok_or_else(|| CheckpointError::Inconsistent(format!("header length {header_len} exceeds file")))?;
    let header: Header = serde_json::from_slice(header_bytes).map_err(|e| CheckpointError::Header(e.to_string()))?;
    let payload = &body[PREFIX + header_len..];
    if payload.len() as u64 != header.payload_bytes {
        return Err(CheckpointError::Inconsistent(format!(
            "header declares {} payload bytes, file holds {}",
            header.payload_bytes,
            payload.len()
        )));
    }
    Ok((header, payload))
}

fn read_f64s(payload: &[u8], entry: &TensorEntry) -> Result<Vec<f64>, CheckpointError> {
    let n: usize = entry.shape.iter().product();
    let start = entry.offset as usize;
    let bytes = payload
        .get(start..start + n * 8)
        .ok_or_else(|| CheckpointError::Inconsistent(format!("tensor `{}` runs past the payload", entry.name)))?;
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect())
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    let (header, payload) = decode_header(bytes)?;
    let mut model = build_variant(header.variant, &header.hyper, header.vocab_size, header.charset_size, 0)?;
    let n = model.params.len();
    let expected = if header.optimizer.is_some() { 3 * n } else { n };
    if header.tensors.len() != expected {
        return Err(CheckpointError::Inconsistent(format!(
            "expected {expected} tensors for variant {}, header lists {}",
            header.variant,
            header.tensors.len()
        ))
        .into());
    }
    let mut covered = 0u64;
    let ids: Vec<_> = model.params.iter().map(|(id, _)| id).collect();
    let mut optimizer = header.optimizer.map(|c| AdadeltaState::new(&model.params, c));
    for (k, entry) in header.tensors.iter().enumerate() {
        let (id, role) = (
            ids[k % n],
            [TensorRole::Param, TensorRole::SqGrad, TensorRole::SqUpdate][k / n],
        );
        let param = model.params.get(id);
        if entry.role != role || entry.name != param.name || entry.shape != param.value.shape() {
            return Err(CheckpointError::Inconsistent(format!(
                "entry {k} is `{}` {:?} {:?}, expected `{}` {:?} {:?}",
                entry.name,
                entry.role,
                entry.shape,
                param.name,
                role,
                param.value.shape()
            ))
            .into());
        }
        if entry.offset != covered {
            return Err(CheckpointError::Inconsistent(format!(
                "tensor `{}` has offset {}, expected {covered}",
                entry.name, entry.offset
            ))
            .into());
        }
        let data = read_f64s(payload, entry)?;
        covered += data.len() as u64 * 8;
        match role {
            TensorRole::Param => {
                let p = model.params.get_mut(id);
                p.value.data_mut().copy_from_slice(&data);
                p.trainable = entry.trainable;
            }
            TensorRole::SqGrad => optimizer.as_mut().expect("optimizer present").sq_grad[id.index()] = data,
            TensorRole::SqUpdate => optimizer.as_mut().expect("optimizer present").sq_update[id.index()] = data,
        }
    }
    if covered != header.payload_bytes {
        return Err(CheckpointError::Inconsistent(format!(
            "tensors cover {covered} bytes of a {}-byte payload",
            header.payload_bytes
        ))
        .into());
    }
    Ok(Checkpoint {
        model,
        optimizer,
        vocab_hash: header.vocab_hash,
    })
}

pub fn save_checkpoint(
    path: &Path,
    model: &AtLstmModel,
    optimizer: Option<&AdadeltaState>,
    vocab_hash: &str,
) -> Result<()> {
    crate::atomic::write_atomic(path, &encode_checkpoint(model, optimizer, vocab_hash)).map_err(|source| {
        TrainError::Io {
            path: path.to_path_buf(),
            source,
        }
    })
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path).map_err(|source| TrainError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    decode_checkpoint(&bytes)
}
