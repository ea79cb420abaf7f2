#![allow(dead_code)]

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sleepgmu::numerics::{Tape, Tensor, Var};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_tensor(shape: &[usize], rng: &mut impl Rng) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

/// Random values kept at least `gap` away from zero, for ops with a kink there.
pub fn away_from_zero(shape: &[usize], gap: f64, rng: &mut impl Rng) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let v: f64 = rng.random_range(gap..1.0);
            if rng.random_bool(0.5) { v } else { -v }
        })
        .collect();
    Tensor::new(shape.to_vec(), data).unwrap()
}

pub fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

/// Builds `Σ w ⊙ f(inputs)` with fixed random weights `w`, so every output
/// element gets a distinct upstream gradient.
fn weighted_loss<F>(f: &F, inputs: &[Tensor], weights: &mut Option<Tensor>, seed: u64) -> (Tape, Vec<Var>, Var)
where
    F: Fn(&mut Tape, &[Var]) -> Var,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(&t.clone().with_grad())).collect();
    let out = f(&mut tape, &vars);
    let w = weights.get_or_insert_with(|| random_tensor(tape.shape(out), &mut rng(seed ^ 0xfeed)));
    let w = tape.constant(w);
    let prod = tape.mul(out, w).unwrap();
    let loss = tape.sum(prod);
    (tape, vars, loss)
}

/// Largest relative error between reverse-mode and central-difference
/// gradients over every input element.
pub fn max_grad_error<F>(f: F, inputs: &[Tensor], h: f64, floor: f64, seed: u64) -> f64
where
    F: Fn(&mut Tape, &[Var]) -> Var,
{
    let mut weights = None;
    let (mut tape, vars, loss) = weighted_loss(&f, inputs, &mut weights, seed);
    tape.backward(loss).unwrap();
    let analytic: Vec<Vec<f64>> = vars.iter().map(|&v| tape.grad(v).unwrap().to_vec()).collect();
    let mut worst: f64 = 0.0;
    for (k, input) in inputs.iter().enumerate() {
        for j in 0..input.len() {
            let eval = |delta: f64| {
                let mut shifted = inputs.to_vec();
                shifted[k].data_mut()[j] += delta;
                let (tape, _, loss) = weighted_loss(&f, &shifted, &mut weights.clone(), seed);
                tape.scalar(loss)
            };
            let numeric = (eval(h) - eval(-h)) / (2.0 * h);
            worst = worst.max(rel_err(analytic[k][j], numeric, floor));
        }
    }
    worst
}

/// Naive `[M,K]·[K,N]`.
pub fn matmul_oracle(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            let mut s = 0.0;
            for t in 0..k {
                s += a[i * k + t] * b[t * n + j];
            }
            out[i * n + j] = s;
        }
    }
    out
}

pub fn softmax_oracle(v: &[f64]) -> Vec<f64> {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = v.iter().map(|x| (x - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|x| x / s).collect()
}

/// Loop-by-loop multi-head attention on one `[T, P]` sequence.
pub fn attention_oracle(x: &[f64], t: usize, p: usize, heads: usize, wq: &[f64], wk: &[f64], wv: &[f64], wo: &[f64]) -> Vec<f64> {
    let q = matmul_oracle(x, wq, t, p, p);
    let k = matmul_oracle(x, wk, t, p, p);
    let v = matmul_oracle(x, wv, t, p, p);
    let d = p / heads;
    let mut ctx = vec![0.0; t * p];
    for h in 0..heads {
        for i in 0..t {
            let scores: Vec<f64> = (0..t)
                .map(|j| (0..d).map(|c| q[i * p + h * d + c] * k[j * p + h * d + c]).sum::<f64>() / (d as f64).sqrt())
                .collect();
            let w = softmax_oracle(&scores);
            for c in 0..d {
                ctx[i * p + h * d + c] = (0..t).map(|j| w[j] * v[j * p + h * d + c]).sum();
            }
        }
    }
    matmul_oracle(&ctx, wo, t, p, p)
}

/// Metrics recomputed by walking every (truth, prediction) pair.
pub struct CountedMetrics {
    pub accuracy: f64,
    pub kappa: f64,
    pub f1: [f64; 5],
    pub sensitivity: [f64; 5],
    pub specificity: [f64; 5],
}

fn frac(a: f64, b: f64) -> f64 {
    if b == 0.0 { 0.0 } else { a / b }
}

pub fn counted_metrics(pairs: &[(usize, usize)]) -> CountedMetrics {
    let n = pairs.len() as f64;
    let agree = pairs.iter().filter(|(t, p)| t == p).count() as f64;
    let mut chance = 0.0;
    let (mut f1, mut sensitivity, mut specificity) = ([0.0; 5], [0.0; 5], [0.0; 5]);
    for k in 0..5 {
        let (mut tp, mut fp, mut fn_, mut tn) = (0.0, 0.0, 0.0, 0.0);
        for &(t, p) in pairs {
            match (t == k, p == k) {
                (true, true) => tp += 1.0,
                (false, true) => fp += 1.0,
                (true, false) => fn_ += 1.0,
                (false, false) => tn += 1.0,
            }
        }
        chance += (tp + fn_) / n * (tp + fp) / n;
        let precision = frac(tp, tp + fp);
        let recall = frac(tp, tp + fn_);
        f1[k] = frac(2.0 * precision * recall, precision + recall);
        sensitivity[k] = recall;
        specificity[k] = frac(tn, tn + fp);
    }
    let accuracy = agree / n;
    let kappa = if chance >= 1.0 { 1.0 } else { (accuracy - chance) / (1.0 - chance) };
    CountedMetrics { accuracy, kappa, f1, sensitivity, specificity }
}
