//! Formula-level checks against independent reference computations.

mod common;

use std::f64::consts::PI;

use common::{attention_oracle, matmul_oracle, random_tensor, rng, softmax_oracle};
use sleepgmu::model::{
    classify, gmu_fuse, multi_head_attention, positional_encoding, AttentionSettings, BlockLayout,
    ClassifierLayout, GmuLayout, ProjectionActivation,
};
use sleepgmu::numerics::{matmul, Tape, Tensor};
use sleepgmu::preprocess::{
    detrend_polyfit, fill_gaps, normalize_standardize, project_features, stft_logpower, StftParams,
};

/// Solves the small dense system `a·x = b` by Gaussian elimination with
/// partial pivoting.
fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for c in 0..n {
        let p = (c..n).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs())).unwrap();
        a.swap(c, p);
        b.swap(c, p);
        for r in c + 1..n {
            let f = a[r][c] / a[c][c];
            for k in c..n {
                a[r][k] -= f * a[c][k];
            }
            b[r] -= f * b[c];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|k| a[r][k] * x[k]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    x
}

/// Least-squares residual via the Vandermonde design matrix on raw indices.
fn detrend_oracle(y: &[f64], order: usize) -> Vec<f64> {
    let design: Vec<Vec<f64>> = (0..y.len()).map(|i| (0..=order).map(|k| (i as f64).powi(k as i32)).collect()).collect();
    let gram = (0..=order)
        .map(|r| (0..=order).map(|c| design.iter().map(|row| row[r] * row[c]).sum()).collect())
        .collect();
    let rhs = (0..=order).map(|r| design.iter().zip(y).map(|(row, v)| row[r] * v).sum()).collect();
    let w = solve(gram, rhs);
    y.iter()
        .zip(&design)
        .map(|(v, row)| v - row.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>())
        .collect()
}

#[test]
fn matmul_matches_triple_loop() {
    let mut r = rng(1);
    for (m, k, n) in [(1, 1, 1), (3, 5, 2), (8, 8, 8), (1, 7, 4)] {
        let a = random_tensor(&[m, k], &mut r);
        let b = random_tensor(&[k, n], &mut r);
        let got = matmul(&a, &b).unwrap();
        let want = matmul_oracle(a.data(), b.data(), m, k, n);
        for (g, w) in got.data().iter().zip(&want) {
            assert!((g - w).abs() < 1e-12);
        }
    }
    let x = random_tensor(&[1, 6], &mut r);
    let w = random_tensor(&[6, 3], &mut r);
    let got = project_features(&x, &w).unwrap();
    let want = matmul_oracle(x.data(), w.data(), 1, 6, 3);
    assert!(got.data().iter().zip(&want).all(|(g, w)| (g - w).abs() < 1e-12));
}

#[test]
fn softmax_matches_direct_formula() {
    let mut tape = Tape::new();
    let x = tape.constant(&Tensor::vector(vec![1.0, 2.0, 3.0]));
    let y = tape.softmax(x);
    let want = softmax_oracle(&[1.0, 2.0, 3.0]);
    for (g, w) in tape.value(y).iter().zip(&want) {
        assert!((g - w).abs() < 1e-12);
    }
}

#[test]
fn detrend_quadratic_samples_with_a_line() {
    let (res, fit) = detrend_polyfit(&[0.0, 1.0, 4.0, 9.0], 1).unwrap();
    for (r, w) in res.iter().zip([1.0, -1.0, -1.0, 1.0]) {
        assert!((r - w).abs() < 1e-10, "{res:?}");
    }
    assert!((fit.coefficients[0] + 1.0).abs() < 1e-10);
    assert!((fit.coefficients[1] - 3.0).abs() < 1e-10);
}

#[test]
fn detrend_matches_normal_equation_oracle() {
    let mut r = rng(2);
    for order in 1..=2 {
        for n in [5, 17, 64] {
            let y: Vec<f64> = random_tensor(&[n], &mut r).into_data();
            let got = detrend_polyfit(&y, order).unwrap().0;
            let want = detrend_oracle(&y, order);
            for (g, w) in got.iter().zip(&want) {
                assert!((g - w).abs() < 1e-10, "order {order}, n {n}: {g} vs {w}");
            }
        }
    }
}

/// `ln(|DFT|² + floor)` of one Hamming-windowed, zero-padded frame, bins 1..=n/2.
fn dft_frame(frame: &[f64], n: usize, floor: f64) -> Vec<f64> {
    let w = frame.len();
    (1..=n / 2)
        .map(|k| {
            let (mut re, mut im) = (0.0, 0.0);
            for (i, &s) in frame.iter().enumerate() {
                let taper = 0.54 - 0.46 * (2.0 * PI * i as f64 / (w - 1) as f64).cos();
                let phase = -2.0 * PI * (k * i) as f64 / n as f64;
                re += s * taper * phase.cos();
                im += s * taper * phase.sin();
            }
            (re * re + im * im + floor).ln()
        })
        .collect()
}

#[test]
fn stft_shape_and_values_match_direct_dft() {
    let params = StftParams::default();
    let signal: Vec<f64> = (0..3000).map(|i| (2.0 * PI * 10.0 * i as f64 / 100.0).sin()).collect();
    let spec = stft_logpower(&signal, 100.0, &params).unwrap();
    assert_eq!(spec.shape(), &[29, 128]);
    for frame in [0, 13, 28] {
        let want = dft_frame(&signal[frame * 100..frame * 100 + 200], 256, 1e-10);
        for (j, w) in want.iter().enumerate() {
            assert!((spec.at(&[frame, j]) - w).abs() < 1e-8, "frame {frame} bin {}", j + 1);
        }
    }
    for frame in 0..29 {
        let row = spec.row(frame);
        let peak = (0..128).max_by(|&a, &b| row[a].total_cmp(&row[b])).unwrap() + 1;
        assert!(peak == 25 || peak == 26, "frame {frame} peaks at bin {peak}");
    }
}

#[test]
fn stft_of_silence_is_the_floor() {
    let spec = stft_logpower(&[0.0; 3000], 100.0, &StftParams::default()).unwrap();
    assert!(spec.data().iter().all(|&v| v == 1e-10f64.ln()));
}

#[test]
fn normalisation_worked_example() {
    let a = Tensor::from_rows(&[vec![0.0, 1.0], vec![2.0, 3.0]]).unwrap();
    let (out, params) = normalize_standardize(&a).unwrap();
    // Scaled values 0, 1/3, 2/3, 1: mean 1/2, population sd √5/6.
    let sd = 5f64.sqrt() / 6.0;
    let want = [0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0].map(|v| (v - 0.5) / sd);
    for (g, w) in out.data().iter().zip(want) {
        assert!((g - w).abs() < 1e-12);
    }
    assert!((out.at(&[0, 0]) + 1.3416).abs() < 1e-4 && (out.at(&[0, 1]) + 0.4472).abs() < 1e-4);
    assert!((params.sigma - sd).abs() < 1e-12);
    let (flat, params) = normalize_standardize(&Tensor::filled(&[2, 2], 7.0)).unwrap();
    assert!(flat.data().iter().all(|&v| v == 0.0));
    assert_eq!(params.sigma, 0.0);
}

#[test]
fn positional_encoding_values() {
    let pe = positional_encoding(5, 8).unwrap();
    for c in 0..8 {
        assert_eq!(pe.at(&[0, c]), if c % 2 == 0 { 0.0 } else { 1.0 });
    }
    assert!((pe.at(&[1, 0]) - 1f64.sin()).abs() < 1e-15);
    for pos in 0..5 {
        for i in 0..4 {
            let angle = pos as f64 / 10000f64.powf(2.0 * i as f64 / 8.0);
            assert!((pe.at(&[pos, 2 * i]) - angle.sin()).abs() < 1e-12);
            assert!((pe.at(&[pos, 2 * i + 1]) - angle.cos()).abs() < 1e-12);
        }
    }
    assert!(positional_encoding(3, 7).is_err());
}

fn block_on(tape: &mut Tape, p: usize, seed: u64) -> (BlockLayout<sleepgmu::numerics::Var>, Vec<Tensor>) {
    let mut r = rng(seed);
    let ws: Vec<Tensor> = (0..4).map(|_| random_tensor(&[p, p], &mut r)).collect();
    let one = tape.constant(&Tensor::filled(&[p], 1.0));
    let zero = tape.constant(&Tensor::zeros(&[p]));
    let ff = tape.constant(&Tensor::zeros(&[p, p]));
    let block = BlockLayout {
        ln1_gain: one,
        ln1_bias: zero,
        w_q: tape.constant(&ws[0]),
        w_k: tape.constant(&ws[1]),
        w_v: tape.constant(&ws[2]),
        w_out: tape.constant(&ws[3]),
        ln2_gain: one,
        ln2_bias: zero,
        ff1: ff,
        ff2: ff,
    };
    (block, ws)
}

fn settings(heads: usize) -> AttentionSettings {
    AttentionSettings { heads, activation: ProjectionActivation::Identity, sequential_heads: false, dropout: 0.0 }
}

#[test]
fn attention_matches_dense_oracle() {
    for seed in 0..5 {
        let (b, t, p, h) = (2, 4, 8, 2);
        let mut tape = Tape::new();
        let (block, ws) = block_on(&mut tape, p, seed);
        let x = random_tensor(&[b, t, p], &mut rng(seed + 50));
        let xv = tape.constant(&x);
        let (out, attn) = multi_head_attention(&mut tape, xv, &block, &settings(h)).unwrap();
        let out = tape.value(out);
        for s in 0..b {
            let seq = &x.data()[s * t * p..(s + 1) * t * p];
            let want = attention_oracle(seq, t, p, h, ws[0].data(), ws[1].data(), ws[2].data(), ws[3].data());
            for (g, w) in out[s * t * p..(s + 1) * t * p].iter().zip(&want) {
                assert!((g - w).abs() < 1e-10, "{g} vs {w}");
            }
        }
        for row in tape.value(attn).chunks(t) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}

#[test]
fn zero_query_and_key_weights_attend_uniformly() {
    let (t, p) = (5, 4);
    let mut tape = Tape::new();
    let (mut block, ws) = block_on(&mut tape, p, 9);
    let zero = tape.constant(&Tensor::zeros(&[p, p]));
    let identity = tape.constant(&Tensor::from_rows(&(0..p).map(|i| (0..p).map(|j| (i == j) as u8 as f64).collect()).collect::<Vec<_>>()).unwrap());
    block.w_q = zero;
    block.w_k = zero;
    block.w_out = identity;
    let x = random_tensor(&[1, t, p], &mut rng(3));
    let xv = tape.constant(&x);
    let (out, attn) = multi_head_attention(&mut tape, xv, &block, &settings(2)).unwrap();
    assert!(tape.value(attn).iter().all(|&a| (a - 1.0 / t as f64).abs() < 1e-15));
    let v = matmul_oracle(x.data(), ws[2].data(), t, p, p);
    let out = tape.tensor(out);
    for c in 0..p {
        let mean = (0..t).map(|i| v[i * p + c]).sum::<f64>() / t as f64;
        for i in 0..t {
            assert!((out.at(&[0, i, c]) - mean).abs() < 1e-12);
        }
    }
}

#[test]
fn gmu_matches_hand_oracle() {
    let (c, p, s) = (2, 2, 3);
    let mut r = rng(4);
    let xs: Vec<Tensor> = (0..c).map(|_| random_tensor(&[1, p], &mut r)).collect();
    let hidden: Vec<Tensor> = (0..c).map(|_| random_tensor(&[p, s], &mut r)).collect();
    let gate: Vec<Tensor> = (0..c).map(|_| random_tensor(&[c * p, s], &mut r)).collect();
    let mut tape = Tape::new();
    let feats: Vec<_> = xs.iter().map(|x| tape.constant(x)).collect();
    let layout = GmuLayout {
        hidden: hidden.iter().map(|w| tape.constant(w)).collect(),
        gate: gate.iter().map(|w| tape.constant(w)).collect(),
    };
    let (fused, gates) = gmu_fuse(&mut tape, &feats, &layout).unwrap();

    let joined: Vec<f64> = xs.iter().flat_map(|x| x.data().to_vec()).collect();
    let mut want = [0.0; 3];
    for i in 0..c {
        for u in 0..s {
            let h = (0..p).map(|k| xs[i].data()[k] * hidden[i].at(&[k, u])).sum::<f64>().tanh();
            let a: f64 = (0..c * p).map(|k| joined[k] * gate[i].at(&[k, u])).sum();
            let z = 1.0 / (1.0 + (-a).exp());
            assert!((tape.value(gates[i])[u] - z).abs() < 1e-12);
            assert!(z > 0.0 && z < 1.0);
            want[u] += z * h;
        }
    }
    for (g, w) in tape.value(fused).iter().zip(want) {
        assert!((g - w).abs() < 1e-12);
    }
}

#[test]
fn zeroed_modality_contributes_nothing() {
    let mut r = rng(6);
    let x0 = random_tensor(&[1, 4], &mut r);
    let mut tape = Tape::new();
    let a = tape.constant(&x0);
    let b = tape.constant(&Tensor::zeros(&[1, 4]));
    let w0 = random_tensor(&[4, 3], &mut r);
    let layout = GmuLayout {
        hidden: vec![tape.constant(&w0), tape.constant(&random_tensor(&[4, 3], &mut r))],
        gate: vec![tape.constant(&random_tensor(&[8, 3], &mut r)), tape.constant(&random_tensor(&[8, 3], &mut r))],
    };
    let (fused, gates) = gmu_fuse(&mut tape, &[a, b], &layout).unwrap();
    let h0 = matmul_oracle(x0.data(), w0.data(), 1, 4, 3);
    for u in 0..3 {
        let want = tape.value(gates[0])[u] * h0[u].tanh();
        assert!((tape.value(fused)[u] - want).abs() < 1e-15);
    }
}

#[test]
fn classifier_zero_weights_and_shift_invariance() {
    let mut tape = Tape::new();
    let fused = tape.constant(&random_tensor(&[3, 4], &mut rng(7)));
    let zero = ClassifierLayout {
        fc1: tape.constant(&Tensor::zeros(&[4, 6])),
        fc1_bias: tape.constant(&Tensor::zeros(&[6])),
        fc2: tape.constant(&Tensor::zeros(&[6, 5])),
        fc2_bias: tape.constant(&Tensor::zeros(&[5])),
    };
    let mut r = rng(0);
    let (_, probs) = classify(&mut tape, fused, &zero, 0.5, false, &mut r).unwrap();
    assert!(tape.value(probs).iter().all(|&p| (p - 0.2).abs() < 1e-15));

    let mut w = rng(8);
    let fc1 = random_tensor(&[4, 6], &mut w);
    let fc1_bias = random_tensor(&[6], &mut w);
    let fc2 = random_tensor(&[6, 5], &mut w);
    let bias = random_tensor(&[5], &mut w);
    let shifted = Tensor::vector(bias.data().iter().map(|b| b + 3.7).collect());
    let mut run = |b: &Tensor| {
        let layout = ClassifierLayout {
            fc1: tape.constant(&fc1),
            fc1_bias: tape.constant(&fc1_bias),
            fc2: tape.constant(&fc2),
            fc2_bias: tape.constant(b),
        };
        let (_, probs) = classify(&mut tape, fused, &layout, 0.5, false, &mut r).unwrap();
        tape.tensor(probs)
    };
    let (p1, p2) = (run(&bias), run(&shifted));
    for i in 0..3 {
        assert!(p1.row(i).iter().zip(p2.row(i)).all(|(a, b)| (a - b).abs() < 1e-12));
        assert!((p1.row(i).iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn heart_rate_gap_is_interpolated_linearly() {
    let (filled, n) = fill_gaps(&[Some(60.0), None, Some(66.0)]).unwrap();
    assert_eq!(filled, vec![60.0, 63.0, 66.0]);
    assert_eq!(n, 1);
    let (filled, _) = fill_gaps(&[None, Some(2.0), None, None, Some(8.0), None]).unwrap();
    assert_eq!(filled, vec![2.0, 2.0, 4.0, 6.0, 8.0, 8.0]);
    assert!(fill_gaps(&[None, None]).is_none());
}
