//! Dense `f64` tensors, a dynamic reverse-mode tape and the Adam optimiser.

mod adam;
mod tape;
mod tensor;

pub use adam::{adam_step, AdamState};
pub use tape::{Binary, Tape, Unary, Var};
pub use tensor::Tensor;

pub(crate) use tape::softmax_in_place;

/// Row-wise softmax of a plain slice, outside any tape.
pub fn softmax_rows(values: &[f64], cols: usize) -> Vec<f64> {
    let mut out = values.to_vec();
    for row in out.chunks_mut(cols) {
        softmax_in_place(row);
    }
    out
}

/// Plain matrix product outside any tape; same shape rules as [`Tape::matmul`].
pub fn matmul(a: &Tensor, b: &Tensor) -> crate::Result<Tensor> {
    let mut tape = Tape::new();
    let (va, vb) = (tape.constant(a), tape.constant(b));
    let out = tape.matmul(va, vb)?;
    Ok(tape.tensor(out))
}
