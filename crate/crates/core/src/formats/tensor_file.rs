//! Single-tensor binary file.
//!
//! Layout: `GMUT`, version byte (1), rank as u32, one u32 per dimension, then
//! the row-major f64 payload. All integers and floats are little-endian.

use super::{format_err, put_f64s, Reader};
use crate::error::Result;
use crate::numerics::Tensor;

pub const MAGIC: &[u8; 4] = b"GMUT";
pub const VERSION: u8 = 1;
pub const MAX_RANK: usize = 8;

const WHAT: &str = "tensor file";

pub fn encode_tensor(t: &Tensor) -> Vec<u8> {
    let mut out = Vec::with_capacity(9 + 4 * t.rank() + 8 * t.len());
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.extend_from_slice(&(t.rank() as u32).to_le_bytes());
    for &d in t.shape() {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    put_f64s(&mut out, t.data());
    out
}

pub fn decode_tensor(bytes: &[u8]) -> Result<Tensor> {
    let mut r = Reader::new(bytes, WHAT);
    if r.take(4)? != MAGIC {
        return Err(format_err(WHAT, "bad magic"));
    }
    let version = r.u8()?;
    if version != VERSION {
        return Err(format_err(WHAT, format!("unsupported version {version}")));
    }
    let rank = r.u32()? as usize;
    if rank == 0 || rank > MAX_RANK {
        return Err(format_err(WHAT, format!("rank {rank} outside 1..={MAX_RANK}")));
    }
    let mut shape = Vec::with_capacity(rank);
    let mut len = 1usize;
    for _ in 0..rank {
        let d = r.u32()? as usize;
        if d == 0 {
            return Err(format_err(WHAT, "zero-sized dimension"));
        }
        len = len
            .checked_mul(d)
            .ok_or_else(|| format_err(WHAT, "element count overflows"))?;
        shape.push(d);
    }
    let data = r.f64s(len)?;
    r.finish()?;
    Tensor::new(shape, data)
}
