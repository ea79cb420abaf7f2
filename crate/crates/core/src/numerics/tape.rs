//! Dynamic reverse-mode tape.
//!
//! Every operation appends a node holding its forward value and whatever the
//! backward rule needs. Nodes are appended in evaluation order, so the tape is
//! topologically sorted by construction and `backward` is a single reverse
//! sweep. The tape is rebuilt for every forward pass; call [`Tape::reset`]
//! before reusing it.

use rand::Rng;

use super::tensor::{check_shape, Tensor};
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Unary {
    Tanh,
    Sigmoid,
    Relu,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Binary {
    Add,
    Mul,
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul { a: Var, b: Var, m: usize, k: usize, n: usize },
    BatchMatMul { a: Var, b: Var, g: usize, m: usize, k: usize, n: usize, trans_b: bool },
    Binary { kind: Binary, a: Var, b: Var },
    Unary { kind: Unary, a: Var },
    Affine { a: Var, scale: f64 },
    Sum { a: Var },
    Softmax { a: Var },
    LayerNorm { x: Var, gain: Var, bias: Var, xhat: Vec<f64>, inv_std: Vec<f64> },
    Dropout { a: Var, mask: Vec<f64> },
    CrossEntropy { logits: Var, labels: Vec<f64>, probs: Vec<f64> },
    Reshape { a: Var },
    Permute { a: Var, axes: Vec<usize> },
    Concat { inputs: Vec<Var>, axis: usize },
    Narrow { a: Var, axis: usize, start: usize },
    Expand { a: Var },
}

#[derive(Debug)]
struct Node {
    shape: Vec<usize>,
    value: Vec<f64>,
    requires_grad: bool,
    op: Op,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Option<Vec<f64>>>,
    backward_done: bool,
}

/// `[outer, axis, inner]` factorisation of `shape` around `axis`.
fn split_at_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

fn strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * shape[i + 1];
    }
    s
}

/// For each output position of `permute(shape, axes)`, the flat source index.
fn permute_index_map(shape: &[usize], axes: &[usize]) -> Vec<usize> {
    let src_strides = strides(shape);
    let out_shape: Vec<usize> = axes.iter().map(|&a| shape[a]).collect();
    let n: usize = shape.iter().product();
    let mut map = Vec::with_capacity(n);
    let mut idx = vec![0usize; out_shape.len()];
    for _ in 0..n {
        let src: usize = idx
            .iter()
            .zip(axes)
            .map(|(&i, &a)| i * src_strides[a])
            .sum();
        map.push(src);
        for d in (0..idx.len()).rev() {
            idx[d] += 1;
            if idx[d] < out_shape[d] {
                break;
            }
            idx[d] = 0;
        }
    }
    map
}

/// `c[m×n] += a[m×k] · b[k×n]`
fn gemm_acc(a: &[f64], b: &[f64], c: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let crow = &mut c[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (cv, &bv) in crow.iter_mut().zip(brow) {
                *cv += av * bv;
            }
        }
    }
}

/// `c[m×n] += a[m×k] · b[n×k]ᵀ`
fn gemm_nt_acc(a: &[f64], b: &[f64], c: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        for j in 0..n {
            let brow = &b[j * k..(j + 1) * k];
            c[i * n + j] += arow.iter().zip(brow).map(|(x, y)| x * y).sum::<f64>();
        }
    }
}

/// `c[k×n] += a[m×k]ᵀ · b[m×n]`
fn gemm_tn_acc(a: &[f64], b: &[f64], c: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let brow = &b[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let crow = &mut c[p * n..(p + 1) * n];
            for (cv, &bv) in crow.iter_mut().zip(brow) {
                *cv += av * bv;
            }
        }
    }
}

fn accumulate(slot: &mut Option<Vec<f64>>, len: usize, f: impl FnOnce(&mut [f64])) {
    let buf = slot.get_or_insert_with(|| vec![0.0; len]);
    f(buf);
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Drops all recorded nodes and gradients.
    pub fn reset(&mut self) {
        self.nodes.clear();
        self.grads.clear();
        self.backward_done = false;
    }

    fn push(&mut self, shape: Vec<usize>, value: Vec<f64>, requires_grad: bool, op: Op) -> Var {
        debug_assert_eq!(shape.iter().product::<usize>(), value.len());
        self.nodes.push(Node {
            shape,
            value,
            requires_grad,
            op,
        });
        Var(self.nodes.len() - 1)
    }

    fn node(&self, v: Var) -> &Node {
        &self.nodes[v.0]
    }

    fn rg(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    /// Records a copy of `t`; gradients flow to it iff `t.requires_grad()`.
    pub fn leaf(&mut self, t: &Tensor) -> Var {
        self.push(t.shape().to_vec(), t.data().to_vec(), t.requires_grad(), Op::Leaf)
    }

    pub fn constant(&mut self, t: &Tensor) -> Var {
        self.push(t.shape().to_vec(), t.data().to_vec(), false, Op::Leaf)
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.node(v).value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.node(v).shape
    }

    pub fn tensor(&self, v: Var) -> Tensor {
        let n = self.node(v);
        Tensor::new(n.shape.clone(), n.value.clone()).expect("tape node has valid shape")
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.node(v).value[0]
    }

    /// Matrix product. `a` may carry leading batch axes (`[..., K]` is
    /// treated as `[M, K]`); `b` must be `[K, N]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if sa.len() < 2 || sb.len() != 2 || sa[sa.len() - 1] != sb[0] {
            return Err(Error::shape("matmul", &sa, &sb));
        }
        let k = sb[0];
        let n = sb[1];
        let m = self.node(a).value.len() / k;
        let mut out = vec![0.0; m * n];
        gemm_acc(&self.node(a).value, &self.node(b).value, &mut out, m, k, n);
        let mut shape = sa;
        *shape.last_mut().unwrap() = n;
        let rg = self.rg(&[a, b]);
        Ok(self.push(shape, out, rg, Op::MatMul { a, b, m, k, n }))
    }

    /// Batched product of `[G, M, K]` with `[G, K, N]`, or with `[G, N, K]`
    /// transposed when `trans_b` is set.
    pub fn batch_matmul(&mut self, a: Var, b: Var, trans_b: bool) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if sa.len() != 3 || sb.len() != 3 || sa[0] != sb[0] {
            return Err(Error::shape("batch_matmul", &sa, &sb));
        }
        let (g, m, k) = (sa[0], sa[1], sa[2]);
        let (kb, n) = if trans_b { (sb[2], sb[1]) } else { (sb[1], sb[2]) };
        if kb != k {
            return Err(Error::shape("batch_matmul", &sa, &sb));
        }
        let mut out = vec![0.0; g * m * n];
        {
            let av = &self.node(a).value;
            let bv = &self.node(b).value;
            for gi in 0..g {
                let a_s = &av[gi * m * k..(gi + 1) * m * k];
                let b_s = &bv[gi * k * n..(gi + 1) * k * n];
                let c_s = &mut out[gi * m * n..(gi + 1) * m * n];
                if trans_b {
                    gemm_nt_acc(a_s, b_s, c_s, m, k, n);
                } else {
                    gemm_acc(a_s, b_s, c_s, m, k, n);
                }
            }
        }
        let rg = self.rg(&[a, b]);
        Ok(self.push(vec![g, m, n], out, rg, Op::BatchMatMul { a, b, g, m, k, n, trans_b }))
    }

    /// Elementwise binary op. Shapes must be equal, or the shorter operand's
    /// shape must equal the trailing dimensions of the longer one (it is then
    /// repeated along the leading axes).
    pub fn binary(&mut self, kind: Binary, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        let (la, lb) = (self.node(a).value.len(), self.node(b).value.len());
        let ok = if la >= lb {
            sa.ends_with(&sb)
        } else {
            sb.ends_with(&sa)
        };
        if !ok {
            return Err(Error::shape("elementwise", &sa, &sb));
        }
        let (shape, n) = if la >= lb { (sa, la) } else { (sb, lb) };
        let av = &self.node(a).value;
        let bv = &self.node(b).value;
        let out: Vec<f64> = (0..n)
            .map(|i| {
                let (x, y) = (av[i % la], bv[i % lb]);
                match kind {
                    Binary::Add => x + y,
                    Binary::Mul => x * y,
                }
            })
            .collect();
        let rg = self.rg(&[a, b]);
        Ok(self.push(shape, out, rg, Op::Binary { kind, a, b }))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Binary::Add, a, b)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Binary::Mul, a, b)
    }

    pub fn unary(&mut self, kind: Unary, a: Var) -> Var {
        let n = self.node(a);
        let out: Vec<f64> = n
            .value
            .iter()
            .map(|&x| match kind {
                Unary::Tanh => x.tanh(),
                Unary::Sigmoid => 1.0 / (1.0 + (-x).exp()),
                Unary::Relu => if x < 0.0 { 0.0 } else { x },
            })
            .collect();
        let (shape, rg) = (n.shape.clone(), n.requires_grad);
        self.push(shape, out, rg, Op::Unary { kind, a })
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(Unary::Tanh, a)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(Unary::Sigmoid, a)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(Unary::Relu, a)
    }

    /// `a * scale + shift`
    pub fn affine(&mut self, a: Var, scale: f64, shift: f64) -> Var {
        let n = self.node(a);
        let out = n.value.iter().map(|&x| x * scale + shift).collect();
        let (shape, rg) = (n.shape.clone(), n.requires_grad);
        self.push(shape, out, rg, Op::Affine { a, scale })
    }

    pub fn scale(&mut self, a: Var, scale: f64) -> Var {
        self.affine(a, scale, 0.0)
    }

    /// Sum of all elements, as a `[1]` tensor.
    pub fn sum(&mut self, a: Var) -> Var {
        let n = self.node(a);
        let s = n.value.iter().sum();
        let rg = n.requires_grad;
        self.push(vec![1], vec![s], rg, Op::Sum { a })
    }

    /// Softmax over the last axis, max-subtracted.
    pub fn softmax(&mut self, a: Var) -> Var {
        let n = self.node(a);
        let cols = *n.shape.last().unwrap();
        let mut out = n.value.clone();
        for row in out.chunks_mut(cols) {
            softmax_in_place(row);
        }
        let (shape, rg) = (n.shape.clone(), n.requires_grad);
        self.push(shape, out, rg, Op::Softmax { a })
    }

    /// Layer normalisation over the last axis with `eps = 1e-5`.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var) -> Result<Var> {
        const EPS: f64 = 1e-5;
        let sx = self.shape(x).to_vec();
        let p = *sx.last().unwrap();
        if p < 2 {
            return Err(Error::Contract("layer_norm needs at least 2 features".into()));
        }
        if self.shape(gain) != [p] || self.shape(bias) != [p] {
            return Err(Error::shape("layer_norm", &sx, self.shape(gain)));
        }
        let xv = &self.node(x).value;
        let gv = &self.node(gain).value;
        let bv = &self.node(bias).value;
        let rows = xv.len() / p;
        let mut out = vec![0.0; xv.len()];
        let mut xhat = vec![0.0; xv.len()];
        let mut inv_std = vec![0.0; rows];
        for r in 0..rows {
            let row = &xv[r * p..(r + 1) * p];
            let mean = row.iter().sum::<f64>() / p as f64;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / p as f64;
            let is = 1.0 / (var + EPS).sqrt();
            inv_std[r] = is;
            for j in 0..p {
                let h = (row[j] - mean) * is;
                xhat[r * p + j] = h;
                out[r * p + j] = h * gv[j] + bv[j];
            }
        }
        let rg = self.rg(&[x, gain, bias]);
        Ok(self.push(sx, out, rg, Op::LayerNorm { x, gain, bias, xhat, inv_std }))
    }

    /// Inverted dropout. Identity when `training` is false or `rate == 0`.
    pub fn dropout<R: Rng + ?Sized>(
        &mut self,
        a: Var,
        rate: f64,
        training: bool,
        rng: &mut R,
    ) -> Result<Var> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::Config(format!("dropout rate must be in [0, 1), got {rate}")));
        }
        if !training || rate == 0.0 {
            return Ok(a);
        }
        let keep = 1.0 / (1.0 - rate);
        let n = self.node(a);
        let mask: Vec<f64> = (0..n.value.len())
            .map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep })
            .collect();
        let out = n.value.iter().zip(&mask).map(|(x, m)| x * m).collect();
        let (shape, rg) = (n.shape.clone(), n.requires_grad);
        Ok(self.push(shape, out, rg, Op::Dropout { a, mask }))
    }

    /// Mean over the batch of `-log softmax(logits)[true class]`.
    /// `labels` must be one-hot rows with the same shape as `logits`.
    pub fn cross_entropy(&mut self, logits: Var, labels: &Tensor) -> Result<Var> {
        let sl = self.shape(logits).to_vec();
        if sl.len() != 2 || labels.shape() != sl.as_slice() {
            return Err(Error::shape("cross_entropy", &sl, labels.shape()));
        }
        let (b, k) = (sl[0], sl[1]);
        for (i, row) in labels.data().chunks(k).enumerate() {
            let ones = row.iter().filter(|&&v| v == 1.0).count();
            let zeros = row.iter().filter(|&&v| v == 0.0).count();
            if ones != 1 || ones + zeros != k {
                return Err(Error::Validation(format!("label row {i} is not one-hot")));
            }
        }
        let lv = &self.node(logits).value;
        let mut probs = vec![0.0; b * k];
        let mut loss = 0.0;
        for r in 0..b {
            let row = &lv[r * k..(r + 1) * k];
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
            for j in 0..k {
                probs[r * k + j] = (row[j] - lse).exp();
                if labels.data()[r * k + j] == 1.0 {
                    loss -= row[j] - lse;
                }
            }
        }
        loss /= b as f64;
        let rg = self.rg(&[logits]);
        Ok(self.push(
            vec![1],
            vec![loss],
            rg,
            Op::CrossEntropy { logits, labels: labels.data().to_vec(), probs },
        ))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let n = check_shape(shape)?;
        if n != self.node(a).value.len() {
            return Err(Error::shape("reshape", self.shape(a), shape));
        }
        let value = self.node(a).value.clone();
        let rg = self.rg(&[a]);
        Ok(self.push(shape.to_vec(), value, rg, Op::Reshape { a }))
    }

    /// Reorders axes: output axis `i` is input axis `axes[i]`.
    pub fn permute(&mut self, a: Var, axes: &[usize]) -> Result<Var> {
        let sa = self.shape(a).to_vec();
        let mut seen = vec![false; sa.len()];
        if axes.len() != sa.len() || axes.iter().any(|&x| x >= sa.len() || std::mem::replace(&mut seen[x], true)) {
            return Err(Error::shape("permute", &sa, axes));
        }
        let map = permute_index_map(&sa, axes);
        let av = &self.node(a).value;
        let out = map.iter().map(|&s| av[s]).collect();
        let shape = axes.iter().map(|&x| sa[x]).collect();
        let rg = self.rg(&[a]);
        Ok(self.push(shape, out, rg, Op::Permute { a, axes: axes.to_vec() }))
    }

    /// Concatenates along `axis`; all other dimensions must agree.
    pub fn concat(&mut self, inputs: &[Var], axis: usize) -> Result<Var> {
        let first = self
            .shape(*inputs.first().ok_or_else(|| Error::Contract("concat of nothing".into()))?)
            .to_vec();
        if axis >= first.len() {
            return Err(Error::shape("concat", &first, &[axis]));
        }
        let mut total = 0;
        for &v in inputs {
            let s = self.shape(v);
            if s.len() != first.len()
                || s.iter().enumerate().any(|(i, &d)| i != axis && d != first[i])
            {
                return Err(Error::shape("concat", &first, s));
            }
            total += s[axis];
        }
        let mut shape = first.clone();
        shape[axis] = total;
        let (outer, _, inner) = split_at_axis(&shape, axis);
        let mut out = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for &v in inputs {
                let len = self.shape(v)[axis] * inner;
                out.extend_from_slice(&self.node(v).value[o * len..(o + 1) * len]);
            }
        }
        let rg = self.rg(inputs);
        Ok(self.push(shape, out, rg, Op::Concat { inputs: inputs.to_vec(), axis }))
    }

    /// Slice `[start, start + len)` along `axis`.
    pub fn narrow(&mut self, a: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let sa = self.shape(a).to_vec();
        if axis >= sa.len() || len == 0 || start + len > sa[axis] {
            return Err(Error::shape("narrow", &sa, &[axis, start, len]));
        }
        let (outer, dim, inner) = split_at_axis(&sa, axis);
        let av = &self.node(a).value;
        let mut out = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = o * dim * inner + start * inner;
            out.extend_from_slice(&av[base..base + len * inner]);
        }
        let mut shape = sa;
        shape[axis] = len;
        let rg = self.rg(&[a]);
        Ok(self.push(shape, out, rg, Op::Narrow { a, axis, start }))
    }

    /// Repeats `a` `n` times along a new leading axis.
    pub fn expand(&mut self, a: Var, n: usize) -> Result<Var> {
        if n == 0 {
            return Err(Error::Contract("expand count must be >= 1".into()));
        }
        let av = &self.node(a).value;
        let out = av.repeat(n);
        let mut shape = vec![n];
        shape.extend_from_slice(self.shape(a));
        let rg = self.rg(&[a]);
        Ok(self.push(shape, out, rg, Op::Expand { a }))
    }

    /// Runs the reverse sweep from the scalar `loss`.
    ///
    /// Afterwards [`Tape::grad`] returns a gradient for every node that
    /// requires one; leaves the loss does not depend on get exact zeros.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.backward_done {
            return Err(Error::State("backward already ran on this tape; reset it first".into()));
        }
        if self.node(loss).value.len() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = (0..self.nodes.len()).map(|_| None).collect();
        if self.node(loss).requires_grad {
            grads[loss.0] = Some(vec![1.0]);
        }
        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            self.backprop_node(idx, &g, &mut grads);
            grads[idx] = Some(g);
        }
        for (i, node) in self.nodes.iter().enumerate() {
            if node.requires_grad && grads[i].is_none() {
                grads[i] = Some(vec![0.0; node.value.len()]);
            }
        }
        self.grads = grads;
        self.backward_done = true;
        Ok(())
    }

    fn backprop_node(&self, idx: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[idx];
        let need = |v: Var| self.nodes[v.0].requires_grad;
        let len = |v: Var| self.nodes[v.0].value.len();
        match &node.op {
            Op::Leaf => {}
            &Op::MatMul { a, b, m, k, n } => {
                if need(a) {
                    let bv = &self.nodes[b.0].value;
                    accumulate(&mut grads[a.0], m * k, |ga| gemm_nt_acc(g, bv, ga, m, n, k));
                }
                if need(b) {
                    let av = &self.nodes[a.0].value;
                    accumulate(&mut grads[b.0], k * n, |gb| gemm_tn_acc(av, g, gb, m, k, n));
                }
            }
            &Op::BatchMatMul { a, b, g: groups, m, k, n, trans_b } => {
                let av = &self.nodes[a.0].value;
                let bv = &self.nodes[b.0].value;
                if need(a) {
                    accumulate(&mut grads[a.0], groups * m * k, |ga| {
                        for gi in 0..groups {
                            let gs = &g[gi * m * n..(gi + 1) * m * n];
                            let bs = &bv[gi * k * n..(gi + 1) * k * n];
                            let out = &mut ga[gi * m * k..(gi + 1) * m * k];
                            if trans_b {
                                // dA = dC · B, with B stored as [n×k]
                                gemm_acc(gs, bs, out, m, n, k);
                            } else {
                                gemm_nt_acc(gs, bs, out, m, n, k);
                            }
                        }
                    });
                }
                if need(b) {
                    accumulate(&mut grads[b.0], groups * k * n, |gb| {
                        for gi in 0..groups {
                            let gs = &g[gi * m * n..(gi + 1) * m * n];
                            let as_ = &av[gi * m * k..(gi + 1) * m * k];
                            let out = &mut gb[gi * k * n..(gi + 1) * k * n];
                            if trans_b {
                                // dB[n×k] = dCᵀ · A
                                gemm_tn_acc(gs, as_, out, m, n, k);
                            } else {
                                gemm_tn_acc(as_, gs, out, m, k, n);
                            }
                        }
                    });
                }
            }
            &Op::Binary { kind, a, b } => {
                let (la, lb) = (len(a), len(b));
                let av = &self.nodes[a.0].value;
                let bv = &self.nodes[b.0].value;
                if need(a) {
                    accumulate(&mut grads[a.0], la, |ga| {
                        for (i, &gi) in g.iter().enumerate() {
                            ga[i % la] += match kind {
                                Binary::Add => gi,
                                Binary::Mul => gi * bv[i % lb],
                            };
                        }
                    });
                }
                if need(b) {
                    accumulate(&mut grads[b.0], lb, |gb| {
                        for (i, &gi) in g.iter().enumerate() {
                            gb[i % lb] += match kind {
                                Binary::Add => gi,
                                Binary::Mul => gi * av[i % la],
                            };
                        }
                    });
                }
            }
            &Op::Unary { kind, a } => {
                let y = &node.value;
                let x = &self.nodes[a.0].value;
                accumulate(&mut grads[a.0], y.len(), |ga| {
                    for i in 0..y.len() {
                        ga[i] += g[i]
                            * match kind {
                                Unary::Tanh => 1.0 - y[i] * y[i],
                                Unary::Sigmoid => y[i] * (1.0 - y[i]),
                                Unary::Relu => {
                                    if x[i] > 0.0 {
                                        1.0
                                    } else {
                                        0.0
                                    }
                                }
                            };
                    }
                });
            }
            &Op::Affine { a, scale } => {
                accumulate(&mut grads[a.0], g.len(), |ga| {
                    ga.iter_mut().zip(g).for_each(|(d, &gi)| *d += gi * scale)
                });
            }
            &Op::Sum { a } => {
                accumulate(&mut grads[a.0], len(a), |ga| ga.iter_mut().for_each(|d| *d += g[0]));
            }
            &Op::Softmax { a } => {
                let cols = *node.shape.last().unwrap();
                let y = &node.value;
                accumulate(&mut grads[a.0], y.len(), |ga| {
                    for r in 0..y.len() / cols {
                        let ys = &y[r * cols..(r + 1) * cols];
                        let gs = &g[r * cols..(r + 1) * cols];
                        let dot: f64 = ys.iter().zip(gs).map(|(a, b)| a * b).sum();
                        for j in 0..cols {
                            ga[r * cols + j] += ys[j] * (gs[j] - dot);
                        }
                    }
                });
            }
            Op::LayerNorm { x, gain, bias, xhat, inv_std } => {
                let (x, gain, bias) = (*x, *gain, *bias);
                let p = *node.shape.last().unwrap();
                let rows = inv_std.len();
                let gv = &self.nodes[gain.0].value;
                if need(x) {
                    accumulate(&mut grads[x.0], rows * p, |gx| {
                        let mut dxhat = vec![0.0; p];
                        for r in 0..rows {
                            let gs = &g[r * p..(r + 1) * p];
                            let hs = &xhat[r * p..(r + 1) * p];
                            for j in 0..p {
                                dxhat[j] = gs[j] * gv[j];
                            }
                            let sum_d: f64 = dxhat.iter().sum();
                            let sum_dh: f64 = dxhat.iter().zip(hs).map(|(a, b)| a * b).sum();
                            let pf = p as f64;
                            for j in 0..p {
                                gx[r * p + j] +=
                                    inv_std[r] / pf * (pf * dxhat[j] - sum_d - hs[j] * sum_dh);
                            }
                        }
                    });
                }
                if need(gain) {
                    accumulate(&mut grads[gain.0], p, |gg| {
                        for (i, (&gi, &h)) in g.iter().zip(xhat).enumerate() {
                            gg[i % p] += gi * h;
                        }
                    });
                }
                if need(bias) {
                    accumulate(&mut grads[bias.0], p, |gb| {
                        for (i, &gi) in g.iter().enumerate() {
                            gb[i % p] += gi;
                        }
                    });
                }
            }
            Op::Dropout { a, mask } => {
                accumulate(&mut grads[a.0], mask.len(), |ga| {
                    for i in 0..mask.len() {
                        ga[i] += g[i] * mask[i];
                    }
                });
            }
            Op::CrossEntropy { logits, labels, probs } => {
                let b = self.nodes[logits.0].shape[0] as f64;
                accumulate(&mut grads[logits.0], probs.len(), |gl| {
                    for i in 0..probs.len() {
                        gl[i] += g[0] * (probs[i] - labels[i]) / b;
                    }
                });
            }
            &Op::Reshape { a } => {
                accumulate(&mut grads[a.0], g.len(), |ga| {
                    ga.iter_mut().zip(g).for_each(|(d, &gi)| *d += gi)
                });
            }
            Op::Permute { a, axes } => {
                let map = permute_index_map(&self.nodes[a.0].shape, axes);
                accumulate(&mut grads[a.0], g.len(), |ga| {
                    for (o, &src) in map.iter().enumerate() {
                        ga[src] += g[o];
                    }
                });
            }
            Op::Concat { inputs, axis } => {
                let (outer, _, inner) = split_at_axis(&node.shape, *axis);
                let mut offset = 0;
                let row = node.shape[*axis] * inner;
                for &v in inputs {
                    let vlen = self.nodes[v.0].shape[*axis] * inner;
                    if need(v) {
                        accumulate(&mut grads[v.0], outer * vlen, |gv| {
                            for o in 0..outer {
                                let src = &g[o * row + offset..o * row + offset + vlen];
                                for (d, &s) in gv[o * vlen..(o + 1) * vlen].iter_mut().zip(src) {
                                    *d += s;
                                }
                            }
                        });
                    }
                    offset += vlen;
                }
            }
            &Op::Narrow { a, axis, start } => {
                let sa = &self.nodes[a.0].shape;
                let (outer, dim, inner) = split_at_axis(sa, axis);
                let l = node.shape[axis] * inner;
                accumulate(&mut grads[a.0], outer * dim * inner, |ga| {
                    for o in 0..outer {
                        let base = o * dim * inner + start * inner;
                        for (d, &s) in ga[base..base + l].iter_mut().zip(&g[o * l..(o + 1) * l]) {
                            *d += s;
                        }
                    }
                });
            }
            &Op::Expand { a } => {
                let la = len(a);
                accumulate(&mut grads[a.0], la, |ga| {
                    for (i, &gi) in g.iter().enumerate() {
                        ga[i % la] += gi;
                    }
                });
            }
        }
    }

    /// Gradient of the last `backward` loss with respect to `v`, if `v`
    /// requires one.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    /// Adds the gradient recorded for `v` into `target`'s grad buffer.
    pub fn accumulate_grad_into(&self, v: Var, target: &mut Tensor) -> Result<()> {
        let g = self
            .grad(v)
            .ok_or_else(|| Error::State("no gradient recorded for this value".into()))?;
        target.accumulate_grad(g)
    }
}

pub(crate) fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    for v in row.iter_mut() {
        *v /= total;
    }
}
