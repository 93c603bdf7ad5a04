//! Checkpoint file: 8-byte magic, little-endian u64 length-prefixed JSON
//! header (config, shapes, per-array digests, metadata), then the raw
//! arrays as little-endian f64 in header order.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::vocab::hex_string;
use crate::error::{Error, Result};
use crate::model::{ModelConfig, ModelParams};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 8] = b"SBCNNRE1";
const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainMeta {
    pub epochs: usize,
    pub final_loss: f64,
    pub seed: u64,
}

#[derive(Serialize, Deserialize)]
struct ArrayInfo {
    name: String,
    shape: Vec<usize>,
    sha256: String,
}

#[derive(Serialize, Deserialize)]
struct Header {
    version: u32,
    config: ModelConfig,
    vocab_digest: String,
    arrays: Vec<ArrayInfo>,
    metadata: TrainMeta,
}

#[derive(Debug)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub vocab_digest: String,
    pub params: ModelParams,
    pub meta: TrainMeta,
}

fn array_bytes(t: &Tensor) -> Vec<u8> {
    let mut out = Vec::with_capacity(t.len() * 8);
    for v in t.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn checkpoint_bytes(
    params: &ModelParams,
    config: &ModelConfig,
    vocab_digest: &str,
    meta: &TrainMeta,
) -> Result<Vec<u8>> {
    let named = params.named();
    let mut blobs = Vec::with_capacity(named.len());
    let mut arrays = Vec::with_capacity(named.len());
    for (name, t) in &named {
        let bytes = array_bytes(t);
        arrays.push(ArrayInfo {
            name: name.clone(),
            shape: t.shape().to_vec(),
            sha256: hex_string(&Sha256::digest(&bytes)),
        });
        blobs.push(bytes);
    }
    let header = Header {
        version: FORMAT_VERSION,
        config: config.clone(),
        vocab_digest: vocab_digest.to_string(),
        arrays,
        metadata: meta.clone(),
    };
    let header_json = serde_json::to_vec(&header)?;
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(header_json.len() as u64).to_le_bytes());
    out.extend_from_slice(&header_json);
    for blob in blobs {
        out.extend_from_slice(&blob);
    }
    Ok(out)
}

pub fn save_checkpoint(
    params: &ModelParams,
    config: &ModelConfig,
    vocab_digest: &str,
    meta: &TrainMeta,
    path: &Path,
) -> Result<()> {
    let bytes = checkpoint_bytes(params, config, vocab_digest, meta)?;
    let mut f = std::fs::File::create(path)?;
    f.write_all(&bytes)?;
    Ok(())
}

pub fn checkpoint_from_bytes(bytes: &[u8]) -> Result<Checkpoint> {
    if bytes.len() < 16 || &bytes[..8] != MAGIC {
        return Err(Error::Checkpoint("bad magic bytes".into()));
    }
    let hlen = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let header_end = 16usize
        .checked_add(hlen)
        .filter(|&e| e <= bytes.len())
        .ok_or_else(|| Error::Checkpoint("truncated header".into()))?;
    let header: Header = serde_json::from_slice(&bytes[16..header_end])
        .map_err(|e| Error::Checkpoint(format!("bad header JSON: {e}")))?;
    if header.version != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!(
            "format version {} unsupported (expected {FORMAT_VERSION})",
            header.version
        )));
    }
    let mut off = header_end;
    let mut tensors = Vec::with_capacity(header.arrays.len());
    for info in &header.arrays {
        let n: usize = info.shape.iter().product();
        let end = off + n * 8;
        if end > bytes.len() {
            return Err(Error::Checkpoint(format!("array {} truncated", info.name)));
        }
        let blob = &bytes[off..end];
        let digest = hex_string(&Sha256::digest(blob));
        if digest != info.sha256 {
            return Err(Error::DigestMismatch(format!("array {}", info.name)));
        }
        let data: Vec<f64> = blob
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        tensors.push(Tensor::from_vec(&info.shape, data)?);
        off = end;
    }
    if off != bytes.len() {
        return Err(Error::Checkpoint("trailing bytes after arrays".into()));
    }
    let params = ModelParams::from_tensors(&header.config, tensors)?;
    Ok(Checkpoint {
        config: header.config,
        vocab_digest: header.vocab_digest,
        params,
        meta: header.metadata,
    })
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    checkpoint_from_bytes(&bytes)
}
