//! Concatenation cost volume, soft-argmax disparity regression, and the
//! training losses: per-pixel cross entropy against a normalized Laplacian
//! target plus a smooth-L1 term on the regressed disparity.

use std::sync::Arc;

use crate::error::{Result, TensorError};
use crate::scalar::Scalar;
use crate::tape::{Record, Tape, TensorId};
use crate::tensor::Tensor;

// ── kernels ──────────────────────────────────────────────────────────

pub fn concat_volume_forward<T: Scalar>(
    left: &[T],
    right: &[T],
    b: usize,
    c: usize,
    h: usize,
    w: usize,
    d_max: usize,
) -> Vec<T> {
    let hw = h * w;
    let mut out = vec![T::ZERO; b * 2 * c * d_max * hw];
    let vol = 2 * c * d_max * hw;
    for bi in 0..b {
        for ci in 0..c {
            let l_plane = &left[(bi * c + ci) * hw..(bi * c + ci + 1) * hw];
            let r_plane = &right[(bi * c + ci) * hw..(bi * c + ci + 1) * hw];
            for d in 0..d_max {
                let lo = bi * vol + (ci * d_max + d) * hw;
                let ro = bi * vol + ((c + ci) * d_max + d) * hw;
                for y in 0..h {
                    for x in 0..w {
                        out[lo + y * w + x] = l_plane[y * w + x];
                        if x >= d {
                            out[ro + y * w + x] = r_plane[y * w + x - d];
                        }
                    }
                }
            }
        }
    }
    out
}

pub fn concat_volume_backward<T: Scalar>(
    grad_out: &[T],
    b: usize,
    c: usize,
    h: usize,
    w: usize,
    d_max: usize,
) -> (Vec<T>, Vec<T>) {
    let hw = h * w;
    let vol = 2 * c * d_max * hw;
    let mut d_left = vec![T::ZERO; b * c * hw];
    let mut d_right = vec![T::ZERO; b * c * hw];
    for bi in 0..b {
        for ci in 0..c {
            let dl = &mut d_left[(bi * c + ci) * hw..(bi * c + ci + 1) * hw];
            for d in 0..d_max {
                let lo = bi * vol + (ci * d_max + d) * hw;
                for (o, g) in dl.iter_mut().zip(&grad_out[lo..lo + hw]) {
                    *o += *g;
                }
            }
            let dr = &mut d_right[(bi * c + ci) * hw..(bi * c + ci + 1) * hw];
            for d in 0..d_max {
                let ro = bi * vol + ((c + ci) * d_max + d) * hw;
                for y in 0..h {
                    for x in d..w {
                        dr[y * w + x - d] += grad_out[ro + y * w + x];
                    }
                }
            }
        }
    }
    (d_left, d_right)
}

/// Soft-argmax: expectation of the disparity index under probs (B, D, H, W).
pub fn expectation_forward<T: Scalar>(probs: &[T], b: usize, d: usize, hw: usize) -> Vec<T> {
    let mut out = vec![T::ZERO; b * hw];
    for bi in 0..b {
        for di in 0..d {
            let idx = T::from_usize(di);
            let src = &probs[(bi * d + di) * hw..(bi * d + di + 1) * hw];
            let dst = &mut out[bi * hw..(bi + 1) * hw];
            for (o, p) in dst.iter_mut().zip(src) {
                *o += idx * *p;
            }
        }
    }
    out
}

pub fn expectation_backward<T: Scalar>(grad_out: &[T], b: usize, d: usize, hw: usize) -> Vec<T> {
    let mut dp = vec![T::ZERO; b * d * hw];
    for bi in 0..b {
        for di in 0..d {
            let idx = T::from_usize(di);
            let dst = &mut dp[(bi * d + di) * hw..(bi * d + di + 1) * hw];
            let g = &grad_out[bi * hw..(bi + 1) * hw];
            for (o, gv) in dst.iter_mut().zip(g) {
                *o = idx * *gv;
            }
        }
    }
    dp
}

pub const CE_LOG_EPS: f64 = 1e-12;

pub fn ce_loss_forward<T: Scalar>(
    probs: &[T],
    target: &[T],
    mask: &[T],
    b: usize,
    d: usize,
    hw: usize,
    valid: usize,
) -> T {
    let log_eps = T::from_f64(CE_LOG_EPS);
    let mut total = T::ZERO;
    for bi in 0..b {
        for p in 0..hw {
            if mask[bi * hw + p] == T::ZERO {
                continue;
            }
            let mut pixel = T::ZERO;
            for di in 0..d {
                let idx = (bi * d + di) * hw + p;
                pixel += -(target[idx] * (probs[idx] + log_eps).ln());
            }
            total += pixel;
        }
    }
    total / T::from_usize(valid)
}

pub fn ce_loss_backward<T: Scalar>(
    probs: &[T],
    target: &[T],
    mask: &[T],
    b: usize,
    d: usize,
    hw: usize,
    valid: usize,
    grad: T,
) -> Vec<T> {
    let log_eps = T::from_f64(CE_LOG_EPS);
    let scale = grad / T::from_usize(valid);
    let mut dp = vec![T::ZERO; probs.len()];
    for bi in 0..b {
        for p in 0..hw {
            if mask[bi * hw + p] == T::ZERO {
                continue;
            }
            for di in 0..d {
                let idx = (bi * d + di) * hw + p;
                dp[idx] = -(scale * target[idx] / (probs[idx] + log_eps));
            }
        }
    }
    dp
}

pub fn smooth_l1_forward<T: Scalar>(pred: &[T], target: &[T], mask: &[T], valid: usize) -> T {
    let half = T::from_f64(0.5);
    let mut total = T::ZERO;
    for i in 0..pred.len() {
        if mask[i] == T::ZERO {
            continue;
        }
        let e = pred[i] - target[i];
        let a = e.abs();
        total += if a < T::ONE { half * e * e } else { a - half };
    }
    total / T::from_usize(valid)
}

pub fn smooth_l1_backward<T: Scalar>(pred: &[T], target: &[T], mask: &[T], valid: usize, grad: T) -> Vec<T> {
    let scale = grad / T::from_usize(valid);
    let mut dp = vec![T::ZERO; pred.len()];
    for i in 0..pred.len() {
        if mask[i] == T::ZERO {
            continue;
        }
        let e = pred[i] - target[i];
        dp[i] = scale
            * if e.abs() < T::ONE {
                e
            } else if e > T::ZERO {
                T::ONE
            } else {
                -T::ONE
            };
    }
    dp
}

/// Normalized Laplacian distribution over integer disparities [0, d_max),
/// centered at the (possibly fractional) ground truth. Stabilized by
/// shifting with the minimum distance so tiny bandwidths stay finite.
pub fn laplacian_gt<T: Scalar>(gt: &Tensor<T>, d_max: usize, bandwidth: f64) -> Result<Tensor<T>> {
    if bandwidth <= 0.0 {
        return Err(TensorError::invalid("laplacian_gt", "bandwidth must be positive"));
    }
    let shape = gt.shape();
    let (b, hw) = match shape.len() {
        3 => (shape[0], shape[1] * shape[2]),
        _ => return Err(TensorError::shape("laplacian_gt", format!("expected B x H x W, got {:?}", shape))),
    };
    let mut out = vec![T::ZERO; b * d_max * hw];
    let inv_b = 1.0 / bandwidth;
    for bi in 0..b {
        for p in 0..hw {
            let center = gt.data()[bi * hw + p].to_f64();
            let mut min_dist = f64::INFINITY;
            for d in 0..d_max {
                min_dist = min_dist.min((d as f64 - center).abs());
            }
            let mut sum = 0.0;
            for d in 0..d_max {
                let e = (-((d as f64 - center).abs() - min_dist) * inv_b).exp();
                out[(bi * d_max + d) * hw + p] = T::from_f64(e);
                sum += e;
            }
            let inv = T::from_f64(1.0 / sum);
            for d in 0..d_max {
                out[(bi * d_max + d) * hw + p] *= inv;
            }
        }
    }
    Tensor::new(vec![b, d_max, shape[1], shape[2]], out)
}

// ── tape ops ─────────────────────────────────────────────────────────

impl<T: Scalar> Tape<T> {
    /// Concatenation cost volume: slice d pairs left features with right
    /// features shifted d columns; out-of-range right entries stay zero.
    pub fn concat_volume(&mut self, left: TensorId, right: TensorId, d_max: usize) -> Result<TensorId> {
        let (b, c, h, w) = self.tensor(left).dims4()?;
        if self.tensor(right).shape() != self.tensor(left).shape() {
            return Err(TensorError::shape(
                "concat_volume",
                format!("left {:?} vs right {:?}", self.tensor(left).shape(), self.tensor(right).shape()),
            ));
        }
        if d_max == 0 || d_max > w {
            return Err(TensorError::invalid(
                "concat_volume",
                format!("d_max {} must be in 1..={} (feature width)", d_max, w),
            ));
        }
        let data = concat_volume_forward(self.data(left), self.data(right), b, c, h, w, d_max);
        self.push_node(vec![b, 2 * c, d_max, h, w], data, Record::ConcatVolume { left, right, d_max })
    }

    /// Soft-argmax over the disparity axis of (B, D, H, W) probabilities.
    pub fn disparity_expectation(&mut self, probs: TensorId) -> Result<TensorId> {
        let (b, d, h, w) = self.tensor(probs).dims4()?;
        let data = expectation_forward(self.data(probs), b, d, h * w);
        self.push_node(vec![b, h, w], data, Record::DisparityExpectation { probs })
    }

    /// Softmax over disparities plus soft-argmax. Returns (probs, disparity).
    pub fn regress_disparity(&mut self, logits: TensorId) -> Result<(TensorId, TensorId)> {
        let probs = self.softmax_axis(logits, 1)?;
        let disp = self.disparity_expectation(probs)?;
        Ok((probs, disp))
    }

    /// Masked mean of -sum_d P(d) log(P_hat(d) + 1e-12); gradients flow to
    /// the prediction only.
    pub fn ce_loss(&mut self, probs: TensorId, target: &Tensor<T>, mask: &Tensor<T>) -> Result<TensorId> {
        let (b, d, h, w) = self.tensor(probs).dims4()?;
        if target.shape() != self.tensor(probs).shape() {
            return Err(TensorError::shape(
                "ce_loss",
                format!("probs {:?} vs target {:?}", self.tensor(probs).shape(), target.shape()),
            ));
        }
        if mask.shape() != [b, h, w] {
            return Err(TensorError::shape("ce_loss", format!("mask {:?} must be {:?}", mask.shape(), [b, h, w])));
        }
        let valid = mask.data().iter().filter(|v| **v != T::ZERO).count();
        if valid == 0 {
            return Err(TensorError::NoValidPixels { op: "ce_loss" });
        }
        let value = ce_loss_forward(self.data(probs), target.data(), mask.data(), b, d, h * w, valid);
        let target = Arc::new(target.data().to_vec());
        let mask = Arc::new(mask.data().to_vec());
        self.push_node(vec![1], vec![value], Record::CeLoss { probs, target, mask, valid })
    }

    /// Masked mean smooth-L1 penalty on pred - target.
    pub fn smooth_l1_loss(&mut self, pred: TensorId, target: &Tensor<T>, mask: &Tensor<T>) -> Result<TensorId> {
        if target.shape() != self.tensor(pred).shape() || mask.shape() != self.tensor(pred).shape() {
            return Err(TensorError::shape(
                "smooth_l1_loss",
                format!(
                    "pred {:?}, target {:?}, mask {:?} must all match",
                    self.tensor(pred).shape(),
                    target.shape(),
                    mask.shape()
                ),
            ));
        }
        let valid = mask.data().iter().filter(|v| **v != T::ZERO).count();
        if valid == 0 {
            return Err(TensorError::NoValidPixels { op: "smooth_l1_loss" });
        }
        let value = smooth_l1_forward(self.data(pred), target.data(), mask.data(), valid);
        let target = Arc::new(target.data().to_vec());
        let mask = Arc::new(mask.data().to_vec());
        self.push_node(vec![1], vec![value], Record::SmoothL1 { pred, target, mask, valid })
    }

    /// Combined objective: sum_m lambda_m * (ce_m + mu * sm_m).
    pub fn total_loss(&mut self, terms: &[(TensorId, TensorId)], lambdas: &[f64], mu: f64) -> Result<TensorId> {
        if terms.len() != lambdas.len() {
            return Err(TensorError::invalid(
                "total_loss",
                format!("{} outputs but {} lambda weights", terms.len(), lambdas.len()),
            ));
        }
        let mut acc: Option<TensorId> = None;
        for (&(ce, sm), &lambda) in terms.iter().zip(lambdas) {
            let sm_scaled = self.scale(sm, T::from_f64(mu))?;
            let sum = self.add(ce, sm_scaled)?;
            let weighted = self.scale(sum, T::from_f64(lambda))?;
            acc = Some(match acc {
                None => weighted,
                Some(prev) => self.add(prev, weighted)?,
            });
        }
        acc.ok_or_else(|| TensorError::invalid("total_loss", "no supervised outputs"))
    }
}
