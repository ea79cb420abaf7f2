use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Least-squares polynomial `Σ wⱼ·xʲ` over sample indices `x = 0..N-1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolyFit {
    pub order: usize,
    /// `w₀..w_order`, in the sample-index basis.
    pub coefficients: Vec<f64>,
}

impl PolyFit {
    pub fn eval(&self, x: f64) -> f64 {
        self.coefficients.iter().rev().fold(0.0, |acc, &w| acc * x + w)
    }
}

/// Normal matrices with a 1-norm condition estimate above this are refused.
const MAX_CONDITION: f64 = 1e13;

/// Fits an order-`order` polynomial to `y` by solving the normal equations
/// and returns `y` minus the fitted trend.
///
/// Abscissae are the indices `0..N-1`. The system is assembled on `i/(N-1)`
/// and the coefficients are mapped back to the index basis afterwards, which
/// keeps the Gram matrix well conditioned for long epochs.
pub fn detrend_polyfit(y: &[f64], order: usize) -> Result<(Vec<f64>, PolyFit)> {
    let n = y.len();
    if n <= order {
        return Err(Error::Input(format!(
            "underdetermined fit: {n} samples for a polynomial of order {order}"
        )));
    }
    let dim = order + 1;
    let scale = if n > 1 { (n - 1) as f64 } else { 1.0 };

    // Power sums Σ xᵏ for k ≤ 2m and moments Σ xʲ·y for j ≤ m.
    let mut power_sums = vec![0.0; 2 * order + 1];
    let mut moments = vec![0.0; dim];
    for (i, &yi) in y.iter().enumerate() {
        let x = i as f64 / scale;
        let mut p = 1.0;
        for k in 0..=2 * order {
            power_sums[k] += p;
            if k < dim {
                moments[k] += p * yi;
            }
            p *= x;
        }
    }
    let gram: Vec<Vec<f64>> = (0..dim)
        .map(|j| (0..dim).map(|k| power_sums[j + k]).collect())
        .collect();

    let cond = condition_estimate(&gram)?;
    if cond > MAX_CONDITION {
        return Err(Error::Numerical(format!(
            "normal matrix is ill conditioned (cond₁ ≈ {cond:.3e}) for order {order}"
        )));
    }
    let scaled = solve(&gram, &moments)?;

    let residual = y
        .iter()
        .enumerate()
        .map(|(i, &yi)| {
            let x = i as f64 / scale;
            yi - scaled.iter().rev().fold(0.0, |acc, &w| acc * x + w)
        })
        .collect();
    let coefficients = scaled
        .iter()
        .enumerate()
        .map(|(j, &w)| w / scale.powi(j as i32))
        .collect();
    Ok((residual, PolyFit { order, coefficients }))
}

/// Gaussian elimination with partial pivoting.
fn solve(a: &[Vec<f64>], b: &[f64]) -> Result<Vec<f64>> {
    let n = b.len();
    let mut m: Vec<Vec<f64>> = a
        .iter()
        .zip(b)
        .map(|(row, &rhs)| {
            let mut r = row.clone();
            r.push(rhs);
            r
        })
        .collect();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))
            .unwrap();
        if m[pivot][col] == 0.0 {
            return Err(Error::Numerical("singular normal matrix".into()));
        }
        m.swap(col, pivot);
        for row in col + 1..n {
            let f = m[row][col] / m[col][col];
            if f != 0.0 {
                for k in col..=n {
                    m[row][k] -= f * m[col][k];
                }
            }
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| m[row][k] * x[k]).sum();
        x[row] = (m[row][n] - s) / m[row][row];
    }
    Ok(x)
}

/// `‖A‖₁·‖A⁻¹‖₁`, with the inverse formed column by column.
fn condition_estimate(a: &[Vec<f64>]) -> Result<f64> {
    let n = a.len();
    let norm1 = |cols: &dyn Fn(usize) -> Vec<f64>| {
        (0..n)
            .map(|j| cols(j).iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    };
    let a_norm = norm1(&|j| a.iter().map(|r| r[j]).collect());
    let inv_cols: Vec<Vec<f64>> = (0..n)
        .map(|j| {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            solve(a, &e)
        })
        .collect::<Result<_>>()?;
    let inv_norm = norm1(&|j| inv_cols[j].clone());
    Ok(a_norm * inv_norm)
}
