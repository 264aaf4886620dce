//! 2x spatial upsampling for BCHW maps: nearest-neighbor and bilinear with
//! the align-corners=false convention (source coordinate (o+0.5)/2 - 0.5,
//! edges replicated).

use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum UpsampleMode {
    Nearest,
    Bilinear,
}

/// Per-output-index source taps: (i0, i1, weight_of_i1).
fn bilinear_taps(out_len: usize, in_len: usize) -> Vec<(usize, usize, f64)> {
    (0..out_len)
        .map(|o| {
            let src = ((o as f64 + 0.5) / 2.0 - 0.5).max(0.0);
            let i0 = (src.floor() as usize).min(in_len - 1);
            let i1 = (i0 + 1).min(in_len - 1);
            (i0, i1, src - i0 as f64)
        })
        .collect()
}

pub fn forward<T: Scalar>(input: &[T], b: usize, c: usize, h: usize, w: usize, mode: UpsampleMode) -> Vec<T> {
    let (ho, wo) = (2 * h, 2 * w);
    let mut out = vec![T::ZERO; b * c * ho * wo];
    match mode {
        UpsampleMode::Nearest => {
            for bc in 0..b * c {
                let src = &input[bc * h * w..(bc + 1) * h * w];
                let dst = &mut out[bc * ho * wo..(bc + 1) * ho * wo];
                for oy in 0..ho {
                    let iy = oy / 2;
                    for ox in 0..wo {
                        dst[oy * wo + ox] = src[iy * w + ox / 2];
                    }
                }
            }
        }
        UpsampleMode::Bilinear => {
            let ty = bilinear_taps(ho, h);
            let tx = bilinear_taps(wo, w);
            for bc in 0..b * c {
                let src = &input[bc * h * w..(bc + 1) * h * w];
                let dst = &mut out[bc * ho * wo..(bc + 1) * ho * wo];
                for oy in 0..ho {
                    let (y0, y1, wy) = ty[oy];
                    let (wy0, wy1) = (T::from_f64(1.0 - wy), T::from_f64(wy));
                    for ox in 0..wo {
                        let (x0, x1, wx) = tx[ox];
                        let (wx0, wx1) = (T::from_f64(1.0 - wx), T::from_f64(wx));
                        dst[oy * wo + ox] = wy0 * (wx0 * src[y0 * w + x0] + wx1 * src[y0 * w + x1])
                            + wy1 * (wx0 * src[y1 * w + x0] + wx1 * src[y1 * w + x1]);
                    }
                }
            }
        }
    }
    out
}

pub fn backward<T: Scalar>(
    grad_out: &[T],
    b: usize,
    c: usize,
    h: usize,
    w: usize,
    mode: UpsampleMode,
) -> Vec<T> {
    let (ho, wo) = (2 * h, 2 * w);
    let mut d_input = vec![T::ZERO; b * c * h * w];
    match mode {
        UpsampleMode::Nearest => {
            for bc in 0..b * c {
                let g = &grad_out[bc * ho * wo..(bc + 1) * ho * wo];
                let din = &mut d_input[bc * h * w..(bc + 1) * h * w];
                for oy in 0..ho {
                    for ox in 0..wo {
                        din[(oy / 2) * w + ox / 2] += g[oy * wo + ox];
                    }
                }
            }
        }
        UpsampleMode::Bilinear => {
            let ty = bilinear_taps(ho, h);
            let tx = bilinear_taps(wo, w);
            for bc in 0..b * c {
                let g = &grad_out[bc * ho * wo..(bc + 1) * ho * wo];
                let din = &mut d_input[bc * h * w..(bc + 1) * h * w];
                for oy in 0..ho {
                    let (y0, y1, wy) = ty[oy];
                    let (wy0, wy1) = (T::from_f64(1.0 - wy), T::from_f64(wy));
                    for ox in 0..wo {
                        let (x0, x1, wx) = tx[ox];
                        let (wx0, wx1) = (T::from_f64(1.0 - wx), T::from_f64(wx));
                        let go = g[oy * wo + ox];
                        din[y0 * w + x0] += wy0 * wx0 * go;
                        din[y0 * w + x1] += wy0 * wx1 * go;
                        din[y1 * w + x0] += wy1 * wx0 * go;
                        din[y1 * w + x1] += wy1 * wx1 * go;
                    }
                }
            }
        }
    }
    d_input
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_preserved_both_modes() {
        for mode in [UpsampleMode::Nearest, UpsampleMode::Bilinear] {
            let out = forward(&[0.7f64; 12], 1, 1, 3, 4, mode);
            assert_eq!(out.len(), 48);
            assert!(out.iter().all(|v| (v - 0.7).abs() < 1e-12));
        }
    }

    #[test]
    fn nearest_duplicates_columns() {
        let out = forward(&[1.0f32, 2.0], 1, 1, 1, 2, UpsampleMode::Nearest);
        assert_eq!(out, vec![1.0, 1.0, 2.0, 2.0, 1.0, 1.0, 2.0, 2.0]);
    }

    #[test]
    fn bilinear_reproduces_ramp_at_source_coords() {
        // Input is the ramp f(x) = x. Expected output evaluates f at the
        // clamped source coordinate of each output pixel.
        let w = 6;
        let input: Vec<f64> = (0..w).map(|x| x as f64).collect();
        let out = forward(&input, 1, 1, 1, w, UpsampleMode::Bilinear);
        for ox in 0..2 * w {
            let src = ((ox as f64 + 0.5) / 2.0 - 0.5).clamp(0.0, (w - 1) as f64);
            assert!((out[ox] - src).abs() < 1e-6, "ox={} got {} want {}", ox, out[ox], src);
        }
    }
}
