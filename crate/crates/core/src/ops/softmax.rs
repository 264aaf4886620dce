//! Softmax along an arbitrary axis with max-subtraction for stability.

use crate::scalar::Scalar;

/// Decompose a shape around `axis` into (outer, axis_len, inner).
pub fn axis_split(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer: usize = shape[..axis].iter().product();
    let inner: usize = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

pub fn forward<T: Scalar>(input: &[T], shape: &[usize], axis: usize) -> Vec<T> {
    let (outer, n, inner) = axis_split(shape, axis);
    let mut out = vec![T::ZERO; input.len()];
    for o in 0..outer {
        for i in 0..inner {
            let base = o * n * inner + i;
            let mut max = input[base];
            for k in 1..n {
                let v = input[base + k * inner];
                if v > max {
                    max = v;
                }
            }
            let mut sum = T::ZERO;
            for k in 0..n {
                let e = (input[base + k * inner] - max).exp();
                out[base + k * inner] = e;
                sum += e;
            }
            for k in 0..n {
                out[base + k * inner] = out[base + k * inner] / sum;
            }
        }
    }
    out
}

/// dL/dx_k = s_k * (g_k - sum_j g_j * s_j)
pub fn backward<T: Scalar>(output: &[T], grad_out: &[T], shape: &[usize], axis: usize) -> Vec<T> {
    let (outer, n, inner) = axis_split(shape, axis);
    let mut d_input = vec![T::ZERO; output.len()];
    for o in 0..outer {
        for i in 0..inner {
            let base = o * n * inner + i;
            let mut dot = T::ZERO;
            for k in 0..n {
                let idx = base + k * inner;
                dot += grad_out[idx] * output[idx];
            }
            for k in 0..n {
                let idx = base + k * inner;
                d_input[idx] = output[idx] * (grad_out[idx] - dot);
            }
        }
    }
    d_input
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_logits_give_uniform_probs() {
        let out = forward(&[3.0f64; 5], &[5], 0);
        for v in out {
            assert!((v - 0.2).abs() < 1e-12);
        }
    }

    #[test]
    fn analytic_two_way() {
        let out = forward(&[0.0f64, (3.0f64).ln()], &[2], 0);
        assert!((out[0] - 0.25).abs() < 1e-12);
        assert!((out[1] - 0.75).abs() < 1e-12);
    }

    #[test]
    fn large_logits_stay_finite() {
        let out = forward(&[1000.0f64, 1001.0], &[2], 0);
        assert!(out.iter().all(|v| v.is_finite()));
        assert!((out[0] - 0.2689414213699951).abs() < 1e-9);
        assert!((out[1] - 0.7310585786300049).abs() < 1e-9);
    }

    #[test]
    fn middle_axis() {
        // shape [2, 3, 2], softmax over axis 1
        let input: Vec<f64> = (0..12).map(|i| (i % 5) as f64 * 0.7).collect();
        let out = forward(&input, &[2, 3, 2], 1);
        for o in 0..2 {
            for i in 0..2 {
                let s: f64 = (0..3).map(|k| out[o * 6 + k * 2 + i]).sum();
                assert!((s - 1.0).abs() < 1e-9);
            }
        }
    }
}
