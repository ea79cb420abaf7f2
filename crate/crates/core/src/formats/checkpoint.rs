//! Model checkpoint.
//!
//! Layout: `GMUC`, version byte (1), u32 header length, a JSON header with
//! the model config, parameter names and shapes, seed and step count, then
//! every parameter's f64 payload in header order. Parameters round-trip
//! bit for bit.

use serde::{Deserialize, Serialize};

use super::{format_err, put_f64s, Reader};
use crate::error::Result;
use crate::model::{Model, ModelConfig};
use crate::numerics::Tensor;

pub const MAGIC: &[u8; 4] = b"GMUC";
pub const VERSION: u8 = 1;
/// Upper bound on the JSON header, in bytes.
pub const MAX_HEADER: usize = 16 << 20;
/// Upper bound on the total parameter count.
pub const MAX_SCALARS: usize = 1 << 28;

const WHAT: &str = "checkpoint";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ParamEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    config: ModelConfig,
    params: Vec<ParamEntry>,
    seed: u64,
    step: u64,
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub model: Model,
    pub seed: u64,
    /// Optimiser steps taken before saving.
    pub step: u64,
}

pub fn encode_checkpoint(model: &Model, seed: u64, step: u64) -> Result<Vec<u8>> {
    let params = model.params();
    let header = Header {
        config: model.config().clone(),
        params: params
            .names()
            .iter()
            .zip(params.tensors())
            .map(|(name, t)| ParamEntry { name: name.clone(), shape: t.shape().to_vec() })
            .collect(),
        seed,
        step,
    };
    let json = serde_json::to_vec(&header)?;
    let mut out = Vec::with_capacity(9 + json.len() + 8 * params.scalar_count());
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    for t in params.tensors() {
        put_f64s(&mut out, t.data());
    }
    Ok(out)
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    let mut r = Reader::new(bytes, WHAT);
    if r.take(4)? != MAGIC {
        return Err(format_err(WHAT, "bad magic"));
    }
    let version = r.u8()?;
    if version != VERSION {
        return Err(format_err(WHAT, format!("unsupported version {version}")));
    }
    let header_len = r.u32()? as usize;
    if header_len > MAX_HEADER {
        return Err(format_err(WHAT, format!("header of {header_len} bytes exceeds {MAX_HEADER}")));
    }
    let header: Header = serde_json::from_slice(r.take(header_len)?)
        .map_err(|e| format_err(WHAT, format!("header: {e}")))?;
    header.config.validate()?;
    let mut total = 0usize;
    let mut tensors = Vec::with_capacity(header.params.len().min(1024));
    let mut names = Vec::with_capacity(header.params.len().min(1024));
    for p in header.params {
        let len = p
            .shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .filter(|&n| n > 0)
            .ok_or_else(|| format_err(WHAT, format!("bad shape {:?} for {}", p.shape, p.name)))?;
        total = total.saturating_add(len);
        if total > MAX_SCALARS {
            return Err(format_err(WHAT, "parameter count exceeds limit"));
        }
        tensors.push(Tensor::new(p.shape, r.f64s(len)?)?);
        names.push(p.name);
    }
    r.finish()?;
    let model = Model::from_params(header.config, names, tensors)?;
    Ok(Checkpoint { model, seed: header.seed, step: header.step })
}
