//! On-disk formats: raw tensor files, model checkpoints and CSV inputs.

pub mod checkpoint;
pub mod csv_input;
pub mod tensor_file;

pub use checkpoint::{decode_checkpoint, encode_checkpoint, Checkpoint};
pub use csv_input::{parse_labels, parse_signals, LabelRow, SignalTable};
pub use tensor_file::{decode_tensor, encode_tensor};

use crate::error::{Error, Result};

pub(crate) fn format_err(what: &'static str, message: impl Into<String>) -> Error {
    Error::Format { what, message: message.into() }
}

/// Little-endian cursor over a byte slice.
pub(crate) struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    what: &'static str,
}

impl<'a> Reader<'a> {
    pub(crate) fn new(bytes: &'a [u8], what: &'static str) -> Self {
        Self { bytes, pos: 0, what }
    }

    pub(crate) fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| format_err(self.what, format!("truncated at byte {}", self.pos)))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    pub(crate) fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub(crate) fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    pub(crate) fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    /// Reads `n` f64 values, checking the length before allocating.
    pub(crate) fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let bytes = n
            .checked_mul(8)
            .ok_or_else(|| format_err(self.what, "payload size overflows"))?;
        if bytes > self.remaining() {
            return Err(format_err(
                self.what,
                format!("payload needs {bytes} bytes, {} left", self.remaining()),
            ));
        }
        Ok(self
            .take(bytes)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }

    pub(crate) fn finish(&self) -> Result<()> {
        match self.remaining() {
            0 => Ok(()),
            n => Err(format_err(self.what, format!("{n} trailing bytes"))),
        }
    }
}

pub(crate) fn put_f64s(out: &mut Vec<u8>, values: &[f64]) {
    out.reserve(values.len() * 8);
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}
