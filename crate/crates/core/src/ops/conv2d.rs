//! Direct 2-D cross-correlation with zero padding, plus its backward pass.
//!
//! Loops are arranged so the innermost axis walks contiguous rows, which lets
//! the stride-1 case vectorize.

use crate::error::{Result, TensorError};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug)]
pub struct Conv2dDims {
    pub batch: usize,
    pub cin: usize,
    pub h: usize,
    pub w: usize,
    pub cout: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub padding: usize,
    pub dilation: usize,
    pub ho: usize,
    pub wo: usize,
}

pub fn out_extent(input: usize, kernel: usize, stride: usize, padding: usize, dilation: usize) -> Option<usize> {
    let effective = (kernel - 1) * dilation + 1;
    let padded = input + 2 * padding;
    if padded < effective {
        return None;
    }
    Some((padded - effective) / stride + 1)
}

impl Conv2dDims {
    pub fn infer(
        input_shape: &[usize],
        weight_shape: &[usize],
        bias_shape: &[usize],
        stride: usize,
        padding: usize,
        dilation: usize,
    ) -> Result<Self> {
        if input_shape.len() != 4 || weight_shape.len() != 4 {
            return Err(TensorError::shape(
                "conv2d",
                format!("input {:?} and weight {:?} must be rank 4", input_shape, weight_shape),
            ));
        }
        if stride < 1 || dilation < 1 {
            return Err(TensorError::invalid("conv2d", "stride and dilation must be >= 1"));
        }
        let (b, cin, h, w) = (input_shape[0], input_shape[1], input_shape[2], input_shape[3]);
        let (cout, wc, kh, kw) = (weight_shape[0], weight_shape[1], weight_shape[2], weight_shape[3]);
        if wc != cin {
            return Err(TensorError::shape(
                "conv2d",
                format!("weight expects {} input channels, input has {}", wc, cin),
            ));
        }
        if bias_shape != [cout] {
            return Err(TensorError::shape(
                "conv2d",
                format!("bias shape {:?} must be [{}]", bias_shape, cout),
            ));
        }
        let ho = out_extent(h, kh, stride, padding, dilation);
        let wo = out_extent(w, kw, stride, padding, dilation);
        match (ho, wo) {
            (Some(ho), Some(wo)) if ho > 0 && wo > 0 => Ok(Conv2dDims {
                batch: b,
                cin,
                h,
                w,
                cout,
                kh,
                kw,
                stride,
                padding,
                dilation,
                ho,
                wo,
            }),
            _ => Err(TensorError::EmptyOutput {
                op: "conv2d",
                detail: format!("input {}x{}, kernel {}x{}, stride {}, padding {}", h, w, kh, kw, stride, padding),
            }),
        }
    }
}

/// Output-column range [lo, hi) for which the tap at `k*dilation - padding`
/// lands inside [0, extent).
#[inline]
fn tap_range(out_len: usize, extent: usize, stride: usize, shift: isize) -> (usize, usize) {
    // index = o * stride + shift must lie in [0, extent)
    let lo = if shift >= 0 { 0 } else { ((-shift) as usize + stride - 1) / stride };
    let max_i = extent as isize - 1 - shift;
    if max_i < 0 {
        return (0, 0);
    }
    let hi = (max_i as usize / stride + 1).min(out_len);
    (lo.min(hi), hi)
}

pub fn forward<T: Scalar>(input: &[T], weight: &[T], bias: &[T], d: &Conv2dDims) -> Vec<T> {
    let mut out = vec![T::ZERO; d.batch * d.cout * d.ho * d.wo];
    for b in 0..d.batch {
        for o in 0..d.cout {
            let out_base = (b * d.cout + o) * d.ho * d.wo;
            out[out_base..out_base + d.ho * d.wo].iter_mut().for_each(|v| *v = bias[o]);
            for c in 0..d.cin {
                let in_base = (b * d.cin + c) * d.h * d.w;
                for kh in 0..d.kh {
                    for kw in 0..d.kw {
                        let wgt = weight[((o * d.cin + c) * d.kh + kh) * d.kw + kw];
                        let shift_w = (kw * d.dilation) as isize - d.padding as isize;
                        let (lo, hi) = tap_range(d.wo, d.w, d.stride, shift_w);
                        if lo >= hi {
                            continue;
                        }
                        for oh in 0..d.ho {
                            let ih = (oh * d.stride) as isize + (kh * d.dilation) as isize - d.padding as isize;
                            if ih < 0 || ih >= d.h as isize {
                                continue;
                            }
                            let in_row = &input[in_base + ih as usize * d.w..in_base + (ih as usize + 1) * d.w];
                            let out_row = &mut out[out_base + oh * d.wo..out_base + (oh + 1) * d.wo];
                            if d.stride == 1 {
                                let iw0 = (lo as isize + shift_w) as usize;
                                let n = hi - lo;
                                let src = &in_row[iw0..iw0 + n];
                                let dst = &mut out_row[lo..hi];
                                for i in 0..n {
                                    dst[i] += wgt * src[i];
                                }
                            } else {
                                for ow in lo..hi {
                                    let iw = (ow * d.stride) as isize + shift_w;
                                    out_row[ow] += wgt * in_row[iw as usize];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

/// Gradients w.r.t. input, weight, and bias.
pub fn backward<T: Scalar>(
    input: &[T],
    weight: &[T],
    grad_out: &[T],
    d: &Conv2dDims,
) -> (Vec<T>, Vec<T>, Vec<T>) {
    let mut d_input = vec![T::ZERO; input.len()];
    let mut d_weight = vec![T::ZERO; weight.len()];
    let mut d_bias = vec![T::ZERO; d.cout];

    for b in 0..d.batch {
        for o in 0..d.cout {
            let out_base = (b * d.cout + o) * d.ho * d.wo;
            let mut bsum = T::ZERO;
            for g in &grad_out[out_base..out_base + d.ho * d.wo] {
                bsum += *g;
            }
            d_bias[o] += bsum;

            for c in 0..d.cin {
                let in_base = (b * d.cin + c) * d.h * d.w;
                for kh in 0..d.kh {
                    for kw in 0..d.kw {
                        let widx = ((o * d.cin + c) * d.kh + kh) * d.kw + kw;
                        let wgt = weight[widx];
                        let mut wsum = T::ZERO;
                        let shift_w = (kw * d.dilation) as isize - d.padding as isize;
                        let (lo, hi) = tap_range(d.wo, d.w, d.stride, shift_w);
                        if lo >= hi {
                            continue;
                        }
                        for oh in 0..d.ho {
                            let ih = (oh * d.stride) as isize + (kh * d.dilation) as isize - d.padding as isize;
                            if ih < 0 || ih >= d.h as isize {
                                continue;
                            }
                            let row = in_base + ih as usize * d.w;
                            let g_row = &grad_out[out_base + oh * d.wo..out_base + (oh + 1) * d.wo];
                            if d.stride == 1 {
                                let iw0 = (lo as isize + shift_w) as usize;
                                let n = hi - lo;
                                let src = &input[row + iw0..row + iw0 + n];
                                let gr = &g_row[lo..hi];
                                let din = &mut d_input[row + iw0..row + iw0 + n];
                                for i in 0..n {
                                    wsum += gr[i] * src[i];
                                    din[i] += wgt * gr[i];
                                }
                            } else {
                                for ow in lo..hi {
                                    let iw = ((ow * d.stride) as isize + shift_w) as usize;
                                    wsum += g_row[ow] * input[row + iw];
                                    d_input[row + iw] += wgt * g_row[ow];
                                }
                            }
                        }
                        d_weight[widx] += wsum;
                    }
                }
            }
        }
    }
    (d_input, d_weight, d_bias)
}
