//! Direct 3-D cross-correlation over (D, H, W) volumes with zero padding.

use crate::error::{Result, TensorError};
use crate::ops::conv2d::out_extent;
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug)]
pub struct Conv3dDims {
    pub batch: usize,
    pub cin: usize,
    pub d: usize,
    pub h: usize,
    pub w: usize,
    pub cout: usize,
    pub kd: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub padding: usize,
    pub do_: usize,
    pub ho: usize,
    pub wo: usize,
}

impl Conv3dDims {
    pub fn infer(
        input_shape: &[usize],
        weight_shape: &[usize],
        bias_shape: &[usize],
        stride: usize,
        padding: usize,
    ) -> Result<Self> {
        if input_shape.len() != 5 || weight_shape.len() != 5 {
            return Err(TensorError::shape(
                "conv3d",
                format!("input {:?} and weight {:?} must be rank 5", input_shape, weight_shape),
            ));
        }
        if stride < 1 {
            return Err(TensorError::invalid("conv3d", "stride must be >= 1"));
        }
        let (b, cin, dd, h, w) =
            (input_shape[0], input_shape[1], input_shape[2], input_shape[3], input_shape[4]);
        let (cout, wc, kd, kh, kw) =
            (weight_shape[0], weight_shape[1], weight_shape[2], weight_shape[3], weight_shape[4]);
        if wc != cin {
            return Err(TensorError::shape(
                "conv3d",
                format!("weight expects {} input channels, input has {}", wc, cin),
            ));
        }
        if bias_shape != [cout] {
            return Err(TensorError::shape(
                "conv3d",
                format!("bias shape {:?} must be [{}]", bias_shape, cout),
            ));
        }
        let do_ = out_extent(dd, kd, stride, padding, 1);
        let ho = out_extent(h, kh, stride, padding, 1);
        let wo = out_extent(w, kw, stride, padding, 1);
        match (do_, ho, wo) {
            (Some(do_), Some(ho), Some(wo)) if do_ > 0 && ho > 0 && wo > 0 => Ok(Conv3dDims {
                batch: b,
                cin,
                d: dd,
                h,
                w,
                cout,
                kd,
                kh,
                kw,
                stride,
                padding,
                do_,
                ho,
                wo,
            }),
            _ => Err(TensorError::EmptyOutput {
                op: "conv3d",
                detail: format!("input {}x{}x{}, kernel {}x{}x{}", dd, h, w, kd, kh, kw),
            }),
        }
    }
}

pub fn forward<T: Scalar>(input: &[T], weight: &[T], bias: &[T], c: &Conv3dDims) -> Vec<T> {
    let mut out = vec![T::ZERO; c.batch * c.cout * c.do_ * c.ho * c.wo];
    let pad = c.padding as isize;
    for b in 0..c.batch {
        for o in 0..c.cout {
            let out_base = (b * c.cout + o) * c.do_ * c.ho * c.wo;
            out[out_base..out_base + c.do_ * c.ho * c.wo].iter_mut().for_each(|v| *v = bias[o]);
            for ci in 0..c.cin {
                let in_base = (b * c.cin + ci) * c.d * c.h * c.w;
                for kd in 0..c.kd {
                    for kh in 0..c.kh {
                        for kw in 0..c.kw {
                            let wgt = weight[(((o * c.cin + ci) * c.kd + kd) * c.kh + kh) * c.kw + kw];
                            let shift_w = kw as isize - pad;
                            for od in 0..c.do_ {
                                let id = (od * c.stride) as isize + kd as isize - pad;
                                if id < 0 || id >= c.d as isize {
                                    continue;
                                }
                                for oh in 0..c.ho {
                                    let ih = (oh * c.stride) as isize + kh as isize - pad;
                                    if ih < 0 || ih >= c.h as isize {
                                        continue;
                                    }
                                    let row = in_base + (id as usize * c.h + ih as usize) * c.w;
                                    let out_row = out_base + (od * c.ho + oh) * c.wo;
                                    if c.stride == 1 {
                                        let lo = if shift_w >= 0 { 0 } else { (-shift_w) as usize };
                                        let hi = ((c.w as isize - shift_w).min(c.wo as isize)).max(0) as usize;
                                        if lo >= hi {
                                            continue;
                                        }
                                        let iw0 = (lo as isize + shift_w) as usize;
                                        let n = hi - lo;
                                        let src = &input[row + iw0..row + iw0 + n];
                                        let dst = &mut out[out_row + lo..out_row + hi];
                                        for i in 0..n {
                                            dst[i] += wgt * src[i];
                                        }
                                    } else {
                                        for ow in 0..c.wo {
                                            let iw = (ow * c.stride) as isize + shift_w;
                                            if iw >= 0 && iw < c.w as isize {
                                                out[out_row + ow] += wgt * input[row + iw as usize];
                                            }
                                        }
                                    }
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

pub fn backward<T: Scalar>(
    input: &[T],
    weight: &[T],
    grad_out: &[T],
    c: &Conv3dDims,
) -> (Vec<T>, Vec<T>, Vec<T>) {
    let mut d_input = vec![T::ZERO; input.len()];
    let mut d_weight = vec![T::ZERO; weight.len()];
    let mut d_bias = vec![T::ZERO; c.cout];
    let pad = c.padding as isize;

    for b in 0..c.batch {
        for o in 0..c.cout {
            let out_base = (b * c.cout + o) * c.do_ * c.ho * c.wo;
            let mut bsum = T::ZERO;
            for g in &grad_out[out_base..out_base + c.do_ * c.ho * c.wo] {
                bsum += *g;
            }
            d_bias[o] += bsum;

            for ci in 0..c.cin {
                let in_base = (b * c.cin + ci) * c.d * c.h * c.w;
                for kd in 0..c.kd {
                    for kh in 0..c.kh {
                        for kw in 0..c.kw {
                            let widx = (((o * c.cin + ci) * c.kd + kd) * c.kh + kh) * c.kw + kw;
                            let wgt = weight[widx];
                            let mut wsum = T::ZERO;
                            let shift_w = kw as isize - pad;
                            for od in 0..c.do_ {
                                let id = (od * c.stride) as isize + kd as isize - pad;
                                if id < 0 || id >= c.d as isize {
                                    continue;
                                }
                                for oh in 0..c.ho {
                                    let ih = (oh * c.stride) as isize + kh as isize - pad;
                                    if ih < 0 || ih >= c.h as isize {
                                        continue;
                                    }
                                    let row = in_base + (id as usize * c.h + ih as usize) * c.w;
                                    let g_row = out_base + (od * c.ho + oh) * c.wo;
                                    if c.stride == 1 {
                                        let lo = if shift_w >= 0 { 0 } else { (-shift_w) as usize };
                                        let hi = ((c.w as isize - shift_w).min(c.wo as isize)).max(0) as usize;
                                        if lo >= hi {
                                            continue;
                                        }
                                        let iw0 = (lo as isize + shift_w) as usize;
                                        let n = hi - lo;
                                        let src = &input[row + iw0..row + iw0 + n];
                                        let gr = &grad_out[g_row + lo..g_row + hi];
                                        let din = &mut d_input[row + iw0..row + iw0 + n];
                                        for i in 0..n {
                                            wsum += gr[i] * src[i];
                                            din[i] += wgt * gr[i];
                                        }
                                    } else {
                                        for ow in 0..c.wo {
                                            let iw = (ow * c.stride) as isize + shift_w;
                                            if iw >= 0 && iw < c.w as isize {
                                                let g = grad_out[g_row + ow];
                                                wsum += g * input[row + iw as usize];
                                                d_input[row + iw as usize] += wgt * g;
                                            }
                                        }
                                    }
                                }
                            }
                            d_weight[widx] += wsum;
                        }
                    }
                }
            }
        }
    }
    (d_input, d_weight, d_bias)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Eight-loop reference used as the oracle.
    fn reference<T: Scalar>(input: &[T], weight: &[T], bias: &[T], c: &Conv3dDims) -> Vec<T> {
        let mut out = vec![T::ZERO; c.batch * c.cout * c.do_ * c.ho * c.wo];
        for b in 0..c.batch {
            for o in 0..c.cout {
                for od in 0..c.do_ {
                    for oh in 0..c.ho {
                        for ow in 0..c.wo {
                            let mut acc = bias[o];
                            for ci in 0..c.cin {
                                for kd in 0..c.kd {
                                    for kh in 0..c.kh {
                                        for kw in 0..c.kw {
                                            let id = (od * c.stride + kd) as isize - c.padding as isize;
                                            let ih = (oh * c.stride + kh) as isize - c.padding as isize;
                                            let iw = (ow * c.stride + kw) as isize - c.padding as isize;
                                            if id >= 0
                                                && ih >= 0
                                                && iw >= 0
                                                && (id as usize) < c.d
                                                && (ih as usize) < c.h
                                                && (iw as usize) < c.w
                                            {
                                                acc += input[(((b * c.cin + ci) * c.d + id as usize) * c.h
                                                    + ih as usize)
                                                    * c.w
                                                    + iw as usize]
                                                    * weight[(((o * c.cin + ci) * c.kd + kd) * c.kh + kh) * c.kw
                                                        + kw];
                                            }
                                        }
                                    }
                                }
                            }
                            out[(((b * c.cout + o) * c.do_ + od) * c.ho + oh) * c.wo + ow] = acc;
                        }
                    }
                }
            }
        }
        out
    }

    fn rand_vec(n: usize, seed: u64) -> Vec<f32> {
        let mut rng = crate::rng::SplitMix64::new(seed);
        (0..n).map(|_| rng.uniform(-1.0, 1.0) as f32).collect()
    }

    #[test]
    fn ones_cube_padded_center_is_27() {
        let c = Conv3dDims::infer(&[1, 1, 3, 3, 3], &[1, 1, 3, 3, 3], &[1], 1, 1).unwrap();
        let out = forward(&vec![1.0f32; 27], &vec![1.0f32; 27], &[0.0], &c);
        assert_eq!(out[13], 27.0);
    }

    #[test]
    fn identity_1x1x1_kernel() {
        let c = Conv3dDims::infer(&[1, 1, 2, 2, 2], &[1, 1, 1, 1, 1], &[1], 1, 0).unwrap();
        let input = vec![1.0f32, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0];
        assert_eq!(forward(&input, &[1.0], &[0.0], &c), input);
    }

    #[test]
    fn matches_reference() {
        for seed in 0..3u64 {
            let c = Conv3dDims::infer(&[2, 2, 5, 6, 7], &[3, 2, 3, 3, 3], &[3], 1, 1).unwrap();
            let input = rand_vec(2 * 2 * 5 * 6 * 7, seed);
            let weight = rand_vec(3 * 2 * 27, seed + 50);
            let bias = rand_vec(3, seed + 90);
            let fast = forward(&input, &weight, &bias, &c);
            let slow = reference(&input, &weight, &bias, &c);
            for (a, b) in fast.iter().zip(&slow) {
                assert!((a - b).abs() < 1e-6, "{} vs {}", a, b);
            }
        }
    }
}
