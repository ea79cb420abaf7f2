//! Tape-level building blocks. Every function works on a batch: token
//! tensors are `[B, T+1, P]`, feature vectors `[B, P]`.

use rand::RngCore;

use super::config::ProjectionActivation;
use crate::error::{Error, Result};
use crate::numerics::{Tape, Tensor, Var};

/// Sinusoidal positions `[seq_len, dim]`:
/// `PE[pos, 2i] = sin(pos / 10000^(2i/dim))`, `PE[pos, 2i+1] = cos(..)`.
pub fn positional_encoding(seq_len: usize, dim: usize) -> Result<Tensor> {
    if dim == 0 || dim % 2 != 0 {
        return Err(Error::Config(format!("positional encoding needs an even dimension, got {dim}")));
    }
    if seq_len == 0 {
        return Err(Error::Config("positional encoding needs at least one position".into()));
    }
    let mut data = vec![0.0; seq_len * dim];
    for pos in 0..seq_len {
        for i in 0..dim / 2 {
            let angle = pos as f64 / 10000f64.powf((2 * i) as f64 / dim as f64);
            data[pos * dim + 2 * i] = angle.sin();
            data[pos * dim + 2 * i + 1] = angle.cos();
        }
    }
    Tensor::new(vec![seq_len, dim], data)
}

/// Handles for one transformer block, either parameter ids or tape vars.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockLayout<H> {
    pub ln1_gain: H,
    pub ln1_bias: H,
    pub w_q: H,
    pub w_k: H,
    pub w_v: H,
    pub w_out: H,
    pub ln2_gain: H,
    pub ln2_bias: H,
    pub ff1: H,
    pub ff2: H,
}

impl<H: Copy> BlockLayout<H> {
    pub fn map<U>(&self, f: impl Fn(H) -> U) -> BlockLayout<U> {
        BlockLayout {
            ln1_gain: f(self.ln1_gain),
            ln1_bias: f(self.ln1_bias),
            w_q: f(self.w_q),
            w_k: f(self.w_k),
            w_v: f(self.w_v),
            w_out: f(self.w_out),
            ln2_gain: f(self.ln2_gain),
            ln2_bias: f(self.ln2_bias),
            ff1: f(self.ff1),
            ff2: f(self.ff2),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderLayout<H> {
    pub projection: H,
    pub class_token: H,
    pub blocks: Vec<BlockLayout<H>>,
}

impl<H: Copy> EncoderLayout<H> {
    pub fn map<U>(&self, f: impl Fn(H) -> U + Copy) -> EncoderLayout<U> {
        EncoderLayout {
            projection: f(self.projection),
            class_token: f(self.class_token),
            blocks: self.blocks.iter().map(|b| b.map(f)).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GmuLayout<H> {
    /// Per modality, `[P, shared]`.
    pub hidden: Vec<H>,
    /// Per modality, `[C·P, shared]`, applied to the concatenated features.
    pub gate: Vec<H>,
}

impl<H: Copy> GmuLayout<H> {
    pub fn map<U>(&self, f: impl Fn(H) -> U) -> GmuLayout<U> {
        GmuLayout {
            hidden: self.hidden.iter().map(|&h| f(h)).collect(),
            gate: self.gate.iter().map(|&h| f(h)).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierLayout<H> {
    pub fc1: H,
    pub fc1_bias: H,
    pub fc2: H,
    pub fc2_bias: H,
}

impl<H: Copy> ClassifierLayout<H> {
    pub fn map<U>(&self, f: impl Fn(H) -> U) -> ClassifierLayout<U> {
        ClassifierLayout {
            fc1: f(self.fc1),
            fc1_bias: f(self.fc1_bias),
            fc2: f(self.fc2),
            fc2_bias: f(self.fc2_bias),
        }
    }
}

/// Attention settings shared by every block of an encoder.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttentionSettings {
    pub heads: usize,
    pub activation: ProjectionActivation,
    pub sequential_heads: bool,
    pub dropout: f64,
}

fn project(tape: &mut Tape, x: Var, w: Var, act: ProjectionActivation) -> Result<Var> {
    let y = tape.matmul(x, w)?;
    Ok(match act {
        ProjectionActivation::Identity => y,
        ProjectionActivation::Tanh => tape.tanh(y),
    })
}

fn dims3(tape: &Tape, x: Var, op: &'static str) -> Result<(usize, usize, usize)> {
    match *tape.shape(x) {
        [b, t, p] => Ok((b, t, p)),
        ref s => Err(Error::shape(op, s, &[0, 0, 0])),
    }
}

/// Scaled dot-product attention. Returns the projected output `[B, T, P]`
/// and the attention weights (`[B·H, T, T]`, or `[B, T, T]` of the last head
/// in sequential mode).
pub fn multi_head_attention(
    tape: &mut Tape,
    x: Var,
    block: &BlockLayout<Var>,
    settings: &AttentionSettings,
) -> Result<(Var, Var)> {
    let (b, t, p) = dims3(tape, x, "multi_head_attention")?;
    let w_shape = tape.shape(block.w_q).to_vec();
    if w_shape != [p, p] {
        return Err(Error::shape("multi_head_attention", &[b, t, p], &w_shape));
    }
    let h = settings.heads;
    if h == 0 || p % h != 0 {
        return Err(Error::Config(format!("embed_dim {p} is not divisible by {h} heads")));
    }
    let act = settings.activation;

    if settings.sequential_heads {
        let mut cur = x;
        let mut weights = None;
        for _ in 0..h {
            let q = project(tape, cur, block.w_q, act)?;
            let k = project(tape, cur, block.w_k, act)?;
            let v = project(tape, cur, block.w_v, act)?;
            let scores = tape.batch_matmul(q, k, true)?;
            let scores = tape.scale(scores, 1.0 / (p as f64).sqrt());
            let attn = tape.softmax(scores);
            cur = tape.batch_matmul(attn, v, false)?;
            weights = Some(attn);
        }
        let out = tape.matmul(cur, block.w_out)?;
        return Ok((out, weights.expect("at least one head")));
    }

    let d = p / h;
    let split = |tape: &mut Tape, v: Var| -> Result<Var> {
        let v = tape.reshape(v, &[b, t, h, d])?;
        let v = tape.permute(v, &[0, 2, 1, 3])?;
        tape.reshape(v, &[b * h, t, d])
    };
    let q = project(tape, x, block.w_q, act)?;
    let k = project(tape, x, block.w_k, act)?;
    let v = project(tape, x, block.w_v, act)?;
    let (q, k, v) = (split(tape, q)?, split(tape, k)?, split(tape, v)?);
    let scores = tape.batch_matmul(q, k, true)?;
    let scores = tape.scale(scores, 1.0 / (d as f64).sqrt());
    let attn = tape.softmax(scores);
    let ctx = tape.batch_matmul(attn, v, false)?;
    let ctx = tape.reshape(ctx, &[b, h, t, d])?;
    let ctx = tape.permute(ctx, &[0, 2, 1, 3])?;
    let ctx = tape.reshape(ctx, &[b, t, p])?;
    let out = tape.matmul(ctx, block.w_out)?;
    Ok((out, attn))
}

/// Pre-norm block: `x + Attn(LN(x))`, then `+ FF(LN(·))` with a ReLU
/// two-layer feed-forward. Dropout follows both sublayers in training.
pub fn transformer_block(
    tape: &mut Tape,
    x: Var,
    block: &BlockLayout<Var>,
    settings: &AttentionSettings,
    training: bool,
    rng: &mut dyn RngCore,
) -> Result<Var> {
    let n1 = tape.layer_norm(x, block.ln1_gain, block.ln1_bias)?;
    let (attn, _) = multi_head_attention(tape, n1, block, settings)?;
    let attn = tape.dropout(attn, settings.dropout, training, rng)?;
    let x = tape.add(x, attn)?;
    let n2 = tape.layer_norm(x, block.ln2_gain, block.ln2_bias)?;
    let hidden = tape.matmul(n2, block.ff1)?;
    let hidden = tape.relu(hidden);
    let ff = tape.matmul(hidden, block.ff2)?;
    let ff = tape.dropout(ff, settings.dropout, training, rng)?;
    tape.add(x, ff)
}

/// Projects `[B, T, F]` features to `P`, prepends the CLASS token, adds
/// positions, runs the blocks and returns the CLASS output `[B, P]`.
pub fn encode_channel(
    tape: &mut Tape,
    features: Var,
    encoder: &EncoderLayout<Var>,
    positions: &Tensor,
    settings: &AttentionSettings,
    training: bool,
    rng: &mut dyn RngCore,
) -> Result<Var> {
    let (b, t, _) = dims3(tape, features, "encode_channel")?;
    let p = tape.shape(encoder.projection)[1];
    if positions.shape() != [t + 1, p] {
        return Err(Error::shape("encode_channel", &[t + 1, p], positions.shape()));
    }
    let projected = tape.matmul(features, encoder.projection)?;
    let cls = tape.reshape(encoder.class_token, &[1, p])?;
    let cls = tape.expand(cls, b)?;
    let tokens = tape.concat(&[cls, projected], 1)?;
    let pe = tape.constant(positions);
    let mut x = tape.add(tokens, pe)?;
    for block in &encoder.blocks {
        x = transformer_block(tape, x, block, settings, training, rng)?;
    }
    let first = tape.narrow(x, 1, 0, 1)?;
    tape.reshape(first, &[b, p])
}

/// Gated fusion: `h_i = tanh(x_i·W_i)`, `z_i = σ([x_1..x_C]·W_zi)`,
/// `h = Σ z_i ⊙ h_i`. Returns `h` and the gates `z_i`.
pub fn gmu_fuse(tape: &mut Tape, features: &[Var], gmu: &GmuLayout<Var>) -> Result<(Var, Vec<Var>)> {
    if features.len() != gmu.hidden.len() || features.len() != gmu.gate.len() {
        return Err(Error::Config(format!(
            "GMU built for {} modalities, got {}",
            gmu.hidden.len(),
            features.len()
        )));
    }
    if features.is_empty() {
        return Err(Error::Config("GMU needs at least one modality".into()));
    }
    let joined = fuse_concat(tape, features)?;
    let mut fused: Option<Var> = None;
    let mut gates = Vec::with_capacity(features.len());
    for ((&x, &w_h), &w_z) in features.iter().zip(&gmu.hidden).zip(&gmu.gate) {
        let h = tape.matmul(x, w_h)?;
        let h = tape.tanh(h);
        let z = tape.matmul(joined, w_z)?;
        let z = tape.sigmoid(z);
        let contribution = tape.mul(z, h)?;
        fused = Some(match fused {
            None => contribution,
            Some(acc) => tape.add(acc, contribution)?,
        });
        gates.push(z);
    }
    Ok((fused.expect("non-empty"), gates))
}

/// Concatenates `[B, P_i]` features in order along the feature axis.
pub fn fuse_concat(tape: &mut Tape, features: &[Var]) -> Result<Var> {
    match features {
        [] => Err(Error::Config("nothing to fuse".into())),
        [single] => Ok(*single),
        _ => tape.concat(features, 1),
    }
}

/// `fc1 → ReLU → dropout → fc2`; returns `(logits, probabilities)`.
pub fn classify(
    tape: &mut Tape,
    fused: Var,
    head: &ClassifierLayout<Var>,
    dropout: f64,
    training: bool,
    rng: &mut dyn RngCore,
) -> Result<(Var, Var)> {
    let hidden = tape.matmul(fused, head.fc1)?;
    let hidden = tape.add(hidden, head.fc1_bias)?;
    let hidden = tape.relu(hidden);
    let hidden = tape.dropout(hidden, dropout, training, rng)?;
    let logits = tape.matmul(hidden, head.fc2)?;
    let logits = tape.add(logits, head.fc2_bias)?;
    let probs = tape.softmax(logits);
    Ok((logits, probs))
}
