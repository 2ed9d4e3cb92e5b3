//! Numeric kernels shared by the monolithic and partitioned executors.

use crate::error::{Error, Result};
use crate::model::{GeluKind, NormKind};
use crate::tensor::TensorView;

/// Epsilon guarding the normalization variance.
pub const NORM_EPS: f64 = 1e-5;

/// `a (m x k) * b (k x n)`, plain row-major triple loop with f64 accumulation.
pub fn matmul(a: &TensorView, b: &TensorView) -> Result<TensorView> {
    if a.cols() != b.rows() {
        return Err(Error::ShapeMismatch {
            expected: format!("inner dims to agree ({}x{} * ?x?)", a.rows(), a.cols()),
            got: format!("{}x{}", b.rows(), b.cols()),
        });
    }
    let (m, k, n) = (a.rows(), a.cols(), b.cols());
    let mut out = TensorView::zeros(m, n);
    for i in 0..m {
        let a_row = a.row(i);
        let out_row = out.row_mut(i);
        for (kk, &av) in a_row.iter().enumerate().take(k) {
            let b_row = b.row(kk);
            for j in 0..n {
                out_row[j] += av * b_row[j];
            }
        }
    }
    Ok(out)
}

/// Numerically stable softmax of one row: `e^{x_i - max} / sum`.
pub fn softmax_row(x: &[f64]) -> Vec<f64> {
    let max = x.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let exps: Vec<f64> = x.iter().map(|&v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|&e| e / sum).collect()
}

/// Scaled dot-product attention `softmax(Q K^T / sqrt(d)) V`.
///
/// `q` is `m x d`, `k` and `v` are `n x d` / `n x dv`; output is `m x dv`.
/// With `causal` set, query row `i` attends key positions `j <= i + (n - m)`,
/// which covers both the square prompt case and cached decoding where the
/// queries are the last `m` positions.
pub fn attention(
    q: &TensorView,
    k: &TensorView,
    v: &TensorView,
    scale_dim: usize,
    causal: bool,
) -> Result<TensorView> {
    if q.cols() != k.cols() || k.rows() != v.rows() {
        return Err(Error::ShapeMismatch {
            expected: format!("q {}x{}, k/v with {} cols / equal rows", q.rows(), q.cols(), q.cols()),
            got: format!("k {}x{}, v {}x{}", k.rows(), k.cols(), v.rows(), v.cols()),
        });
    }
    if scale_dim == 0 {
        return Err(Error::InvalidConfig("attention scale_dim must be >= 1".into()));
    }
    let (m, n, dv) = (q.rows(), k.rows(), v.cols());
    let scale = 1.0 / (scale_dim as f64).sqrt();
    let offset = n - m.min(n); // causal offset for cached decoding
    let mut out = TensorView::zeros(m, dv);
    let mut logits = vec![0.0f64; n];
    for i in 0..m {
        let visible = if causal { (i + offset + 1).min(n) } else { n };
        for (j, logit) in logits.iter_mut().enumerate().take(visible) {
            let mut dot = 0.0;
            let (qr, kr) = (q.row(i), k.row(j));
            for c in 0..q.cols() {
                dot += qr[c] * kr[c];
            }
            *logit = dot * scale;
        }
        let weights = softmax_row(&logits[..visible]);
        let out_row = out.row_mut(i);
        for (j, &w) in weights.iter().enumerate() {
            let vr = v.row(j);
            for c in 0..dv {
                out_row[c] += w * vr[c];
            }
        }
    }
    Ok(out)
}

/// GELU activation.
pub fn gelu(x: f64, kind: GeluKind) -> f64 {
    match kind {
        GeluKind::Erf => 0.5 * x * (1.0 + libm::erf(x / std::f64::consts::SQRT_2)),
        GeluKind::Tanh => {
            let inner = (2.0 / std::f64::consts::PI).sqrt() * (x + 0.044715 * x * x * x);
            0.5 * x * (1.0 + inner.tanh())
        }
    }
}

/// Apply GELU element-wise in place.
pub fn gelu_inplace(t: &mut TensorView, kind: GeluKind) {
    for v in t.data_mut() {
        *v = gelu(*v, kind);
    }
}

/// Row-wise normalization of one row with affine parameters.
///
/// Layer-norm subtracts the row mean and divides by the epsilon-guarded
/// standard deviation; RMS-norm divides by the root-mean-square only.
pub fn norm_row(x: &[f64], gamma: &[f64], beta: &[f64], kind: NormKind) -> Vec<f64> {
    debug_assert!(x.len() == gamma.len() && x.len() == beta.len());
    let n = x.len() as f64;
    match kind {
        NormKind::LayerNorm => {
            let mean = x.iter().sum::<f64>() / n;
            let var = x.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / n;
            let inv = 1.0 / (var + NORM_EPS).sqrt();
            x.iter()
                .zip(gamma.iter().zip(beta))
                .map(|(&v, (&g, &b))| (v - mean) * inv * g + b)
                .collect()
        }
        NormKind::RmsNorm => {
            let ms = x.iter().map(|&v| v * v).sum::<f64>() / n;
            let inv = 1.0 / (ms + NORM_EPS).sqrt();
            x.iter()
                .zip(gamma.iter().zip(beta))
                .map(|(&v, (&g, &b))| v * inv * g + b)
                .collect()
        }
    }
}

/// Layer-norm of one row (convenience wrapper used by tests).
pub fn layer_norm_row(x: &[f64], gamma: &[f64], beta: &[f64]) -> Vec<f64> {
    norm_row(x, gamma, beta, NormKind::LayerNorm)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b}");
    }

    #[test]
    fn softmax_uniform_on_equal_inputs() {
        let out = softmax_row(&[0.0, 0.0, 0.0, 0.0]);
        for v in out {
            assert_close(v, 0.25, 1e-15);
        }
    }

    #[test]
    fn softmax_is_overflow_safe() {
        let out = softmax_row(&[1000.0, 1000.0]);
        assert!(out.iter().all(|v| v.is_finite()));
        assert_close(out[0], 0.5, 1e-15);
        assert_close(out[1], 0.5, 1e-15);
    }

    #[test]
    fn softmax_matches_scalar_formula() {
        // Oracle: direct scalar evaluation of e^{x_i-max}/sum.
        let out = softmax_row(&[1.0, 2.0, 3.0]);
        assert_close(out[0], 0.09003057317038046, 1e-12);
        assert_close(out[1], 0.24472847105479767, 1e-12);
        assert_close(out[2], 0.6652409557748219, 1e-12);
    }

    #[test]
    fn softmax_shift_invariant() {
        let a = softmax_row(&[0.3, -1.2, 2.5]);
        let b = softmax_row(&[0.3 + 7.0, -1.2 + 7.0, 2.5 + 7.0]);
        for (x, y) in a.iter().zip(&b) {
            assert_close(*x, *y, 1e-12);
        }
    }

    #[test]
    fn attention_single_logit_is_identity() {
        let c = 3.7;
        let t = TensorView::from_vec(1, 1, vec![c]).unwrap();
        let out = attention(&t, &t, &t, 1, false).unwrap();
        assert_close(out.get(0, 0), c, 1e-15);
    }

    #[test]
    fn attention_uniform_over_identical_keys() {
        // Two identical K rows => uniform weights => output rows are the
        // mean of the V rows.
        let q = TensorView::from_vec(2, 2, vec![0.5, -0.3, 1.0, 2.0]).unwrap();
        let k = TensorView::from_vec(2, 2, vec![1.0, 1.0, 1.0, 1.0]).unwrap();
        let v = TensorView::from_vec(2, 2, vec![2.0, 4.0, 6.0, 8.0]).unwrap();
        let out = attention(&q, &k, &v, 2, false).unwrap();
        for i in 0..2 {
            assert_close(out.get(i, 0), 4.0, 1e-12);
            assert_close(out.get(i, 1), 6.0, 1e-12);
        }
    }

    #[test]
    #[allow(clippy::needless_range_loop)]
    fn attention_matches_three_loop_oracle() {
        // Independent brute-force evaluation of softmax(QK^T/sqrt(d))V.
        let q = TensorView::from_vec(3, 2, vec![0.1, 0.2, -0.4, 1.1, 0.7, -0.9]).unwrap();
        let k = TensorView::from_vec(3, 2, vec![0.5, -0.1, 0.3, 0.8, -1.2, 0.05]).unwrap();
        let v = TensorView::from_vec(3, 2, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let d = 2;

        let mut expected = [[0.0f64; 2]; 3];
        for i in 0..3 {
            let mut logits = [0.0f64; 3];
            for j in 0..3 {
                let mut dot = 0.0;
                for c in 0..2 {
                    dot += q.get(i, c) * k.get(j, c);
                }
                logits[j] = dot / (d as f64).sqrt();
            }
            let mx = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = logits.iter().map(|&l| (l - mx).exp()).collect();
            let sum: f64 = exps.iter().sum();
            for j in 0..3 {
                for c in 0..2 {
                    expected[i][c] += exps[j] / sum * v.get(j, c);
                }
            }
        }

        let out = attention(&q, &k, &v, d, false).unwrap();
        for i in 0..3 {
            for c in 0..2 {
                assert_close(out.get(i, c), expected[i][c], 1e-12);
            }
        }
    }

    #[test]
    fn attention_rejects_shape_mismatch() {
        let q = TensorView::zeros(2, 3);
        let k = TensorView::zeros(2, 2);
        let v = TensorView::zeros(2, 2);
        assert!(matches!(attention(&q, &k, &v, 2, false), Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn causal_mask_blocks_future_positions() {
        // With a causal mask, row 0 must ignore rows 1..: weight fully on V[0].
        let q = TensorView::from_vec(2, 1, vec![1.0, 1.0]).unwrap();
        let k = TensorView::from_vec(2, 1, vec![1.0, 100.0]).unwrap();
        let v = TensorView::from_vec(2, 1, vec![5.0, -5.0]).unwrap();
        let out = attention(&q, &k, &v, 1, true).unwrap();
        assert_close(out.get(0, 0), 5.0, 1e-12);
    }

    #[test]
    fn gelu_zero_is_zero() {
        assert_eq!(gelu(0.0, GeluKind::Erf), 0.0);
        assert_eq!(gelu(0.0, GeluKind::Tanh), 0.0);
    }

    #[test]
    fn gelu_one_matches_erf_oracle() {
        // 0.5 * (1 + erf(1/sqrt(2))) = Phi(1) = 0.8413447460685429.
        assert_close(gelu(1.0, GeluKind::Erf), 0.8413447460685429, 1e-12);
    }

    #[test]
    fn layer_norm_constant_row_is_zero_before_affine() {
        let gamma = vec![1.0; 4];
        let beta = vec![0.0; 4];
        let out = layer_norm_row(&[3.0; 4], &gamma, &beta);
        for v in out {
            assert_close(v, 0.0, 1e-12);
        }
    }

    #[test]
    fn layer_norm_standardizes_rows() {
        let gamma = vec![1.0; 4];
        let beta = vec![0.0; 4];
        let out = layer_norm_row(&[1.0, 2.0, 3.0, 4.0], &gamma, &beta);
        let mean: f64 = out.iter().sum::<f64>() / 4.0;
        let var: f64 = out.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 4.0;
        assert_close(mean, 0.0, 1e-12);
        assert_close(var, 1.0, 1e-2); // epsilon-guarded
    }

    #[test]
    fn matmul_small_known_values() {
        let a = TensorView::from_vec(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let b = TensorView::from_vec(2, 2, vec![5.0, 6.0, 7.0, 8.0]).unwrap();
        let c = matmul(&a, &b).unwrap();
        assert_eq!(c.data(), &[19.0, 22.0, 43.0, 50.0]);
    }
}
