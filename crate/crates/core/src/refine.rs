//! Self-reassembling refinement: every pixel's cost vector (CSR) or disparity
//! value (DSR) is replaced by a modulated convex combination of values sampled
//! at N learned fractional offsets.
//!
//! Sampling uses 4-tap bilinear interpolation with coordinates clamped to the
//! image rectangle; the backward pass produces gradients for the sampled map
//! and for the fractional coordinates (zero where the clamp is active).

use crate::error::{Result, TensorError};
use crate::scalar::Scalar;
use crate::tape::{Record, Tape, TensorId};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RefineMode {
    None,
    Dsr,
    Csr,
    /// Eq-2 style unweighted mean over the N samples.
    CsrUnweighted,
}

#[derive(Clone, Debug)]
pub struct RefineConfig {
    /// Assembled neighbor count; 0 disables refinement.
    pub neighbors: usize,
    pub mode: RefineMode,
    /// Floor for the modulation-sum denominator.
    pub norm_eps: f64,
}

impl Default for RefineConfig {
    fn default() -> Self {
        RefineConfig { neighbors: 2, mode: RefineMode::Csr, norm_eps: 1e-6 }
    }
}

// ── bilinear sampling kernel ─────────────────────────────────────────

#[inline]
fn taps<T: Scalar>(coord: T, extent: usize) -> (usize, usize, T, bool) {
    let max = T::from_usize(extent - 1);
    let clamped_low = coord < T::ZERO;
    let clamped_high = coord > max;
    let c = coord.maxv(T::ZERO).minv(max);
    let i0 = c.floor().to_f64() as usize;
    let i0 = i0.min(extent - 1);
    let i1 = (i0 + 1).min(extent - 1);
    let frac = c - T::from_usize(i0);
    (i0, i1, frac, clamped_low || clamped_high)
}

pub fn bilinear_forward<T: Scalar>(
    map: &[T],
    cx: &[T],
    cy: &[T],
    b: usize,
    c: usize,
    h: usize,
    w: usize,
) -> Vec<T> {
    let hw = h * w;
    let mut out = vec![T::ZERO; b * c * hw];
    for bi in 0..b {
        for p in 0..hw {
            let (x0, x1, fx, _) = taps(cx[bi * hw + p], w);
            let (y0, y1, fy, _) = taps(cy[bi * hw + p], h);
            let w00 = (T::ONE - fy) * (T::ONE - fx);
            let w01 = (T::ONE - fy) * fx;
            let w10 = fy * (T::ONE - fx);
            let w11 = fy * fx;
            let base = bi * c * hw;
            for ci in 0..c {
                let plane = base + ci * hw;
                out[plane + p] = w00 * map[plane + y0 * w + x0]
                    + w01 * map[plane + y0 * w + x1]
                    + w10 * map[plane + y1 * w + x0]
                    + w11 * map[plane + y1 * w + x1];
            }
        }
    }
    out
}

/// Returns (d_map, d_cx, d_cy).
pub fn bilinear_backward<T: Scalar>(
    map: &[T],
    cx: &[T],
    cy: &[T],
    grad_out: &[T],
    b: usize,
    c: usize,
    h: usize,
    w: usize,
) -> (Vec<T>, Vec<T>, Vec<T>) {
    let hw = h * w;
    let mut d_map = vec![T::ZERO; map.len()];
    let mut d_cx = vec![T::ZERO; cx.len()];
    let mut d_cy = vec![T::ZERO; cy.len()];
    for bi in 0..b {
        for p in 0..hw {
            let (x0, x1, fx, x_clamped) = taps(cx[bi * hw + p], w);
            let (y0, y1, fy, y_clamped) = taps(cy[bi * hw + p], h);
            let w00 = (T::ONE - fy) * (T::ONE - fx);
            let w01 = (T::ONE - fy) * fx;
            let w10 = fy * (T::ONE - fx);
            let w11 = fy * fx;
            let base = bi * c * hw;
            let mut gx = T::ZERO;
            let mut gy = T::ZERO;
            for ci in 0..c {
                let plane = base + ci * hw;
                let g = grad_out[plane + p];
                if g == T::ZERO {
                    continue;
                }
                let v00 = map[plane + y0 * w + x0];
                let v01 = map[plane + y0 * w + x1];
                let v10 = map[plane + y1 * w + x0];
                let v11 = map[plane + y1 * w + x1];
                d_map[plane + y0 * w + x0] += w00 * g;
                d_map[plane + y0 * w + x1] += w01 * g;
                d_map[plane + y1 * w + x0] += w10 * g;
                d_map[plane + y1 * w + x1] += w11 * g;
                gx += g * ((T::ONE - fy) * (v01 - v00) + fy * (v11 - v10));
                gy += g * ((T::ONE - fx) * (v10 - v00) + fx * (v11 - v01));
            }
            if !x_clamped {
                d_cx[bi * hw + p] = gx;
            }
            if !y_clamped {
                d_cy[bi * hw + p] = gy;
            }
        }
    }
    (d_map, d_cx, d_cy)
}

// ── channel-broadcast kernels ────────────────────────────────────────

pub fn chan_mul_forward<T: Scalar>(a: &[T], m: &[T], b: usize, c: usize, hw: usize) -> Vec<T> {
    let mut out = vec![T::ZERO; a.len()];
    for bi in 0..b {
        for ci in 0..c {
            let plane = (bi * c + ci) * hw;
            for p in 0..hw {
                out[plane + p] = a[plane + p] * m[bi * hw + p];
            }
        }
    }
    out
}

pub fn chan_mul_backward<T: Scalar>(
    a: &[T],
    m: &[T],
    grad_out: &[T],
    b: usize,
    c: usize,
    hw: usize,
) -> (Vec<T>, Vec<T>) {
    let mut da = vec![T::ZERO; a.len()];
    let mut dm = vec![T::ZERO; m.len()];
    for bi in 0..b {
        for ci in 0..c {
            let plane = (bi * c + ci) * hw;
            for p in 0..hw {
                let g = grad_out[plane + p];
                da[plane + p] = g * m[bi * hw + p];
                dm[bi * hw + p] += g * a[plane + p];
            }
        }
    }
    (da, dm)
}

pub fn chan_div_floor_forward<T: Scalar>(num: &[T], den: &[T], eps: f64, b: usize, c: usize, hw: usize) -> Vec<T> {
    let eps = T::from_f64(eps);
    let mut out = vec![T::ZERO; num.len()];
    for bi in 0..b {
        for ci in 0..c {
            let plane = (bi * c + ci) * hw;
            for p in 0..hw {
                out[plane + p] = num[plane + p] / den[bi * hw + p].maxv(eps);
            }
        }
    }
    out
}

pub fn chan_div_floor_backward<T: Scalar>(
    num: &[T],
    den: &[T],
    grad_out: &[T],
    eps: f64,
    b: usize,
    c: usize,
    hw: usize,
) -> (Vec<T>, Vec<T>) {
    let eps = T::from_f64(eps);
    let mut dn = vec![T::ZERO; num.len()];
    let mut dd = vec![T::ZERO; den.len()];
    for bi in 0..b {
        for p in 0..hw {
            let d_raw = den[bi * hw + p];
            let d = d_raw.maxv(eps);
            let active = d_raw > eps;
            let mut acc = T::ZERO;
            for ci in 0..c {
                let idx = (bi * c + ci) * hw + p;
                let g = grad_out[idx];
                dn[idx] = g / d;
                acc += g * num[idx];
            }
            if active {
                dd[bi * hw + p] = -(acc / (d * d));
            }
        }
    }
    (dn, dd)
}

// ── tape ops and the reassembly compositions ─────────────────────────

impl<T: Scalar> Tape<T> {
    /// Sample `map` (B, C, H, W) at absolute fractional coordinates given as
    /// two (B, 1, H, W) tensors. Coordinates clamp to the image rectangle.
    pub fn bilinear_sample(&mut self, map: TensorId, coord_x: TensorId, coord_y: TensorId) -> Result<TensorId> {
        let (b, c, h, w) = self.tensor(map).dims4()?;
        for (name, id) in [("coord_x", coord_x), ("coord_y", coord_y)] {
            let s = self.tensor(id).shape();
            if s != [b, 1, h, w] {
                return Err(TensorError::shape(
                    "bilinear_sample",
                    format!("{} shape {:?} must be {:?}", name, s, [b, 1, h, w]),
                ));
            }
        }
        let data = bilinear_forward(self.data(map), self.data(coord_x), self.data(coord_y), b, c, h, w);
        self.push_node(vec![b, c, h, w], data, Record::BilinearSample { map, coord_x, coord_y })
    }

    /// Elementwise a * m with m broadcast over the channel axis.
    pub fn chan_mul(&mut self, a: TensorId, m: TensorId) -> Result<TensorId> {
        let (b, c, h, w) = self.tensor(a).dims4()?;
        if self.tensor(m).shape() != [b, 1, h, w] {
            return Err(TensorError::shape(
                "chan_mul",
                format!("modulation {:?} must be {:?}", self.tensor(m).shape(), [b, 1, h, w]),
            ));
        }
        let data = chan_mul_forward(self.data(a), self.data(m), b, c, h * w);
        self.push_node(vec![b, c, h, w], data, Record::ChanMul { a, b: m })
    }

    /// Elementwise num / max(den, eps) with den broadcast over channels.
    pub fn chan_div_floor(&mut self, num: TensorId, den: TensorId, eps: f64) -> Result<TensorId> {
        let (b, c, h, w) = self.tensor(num).dims4()?;
        if self.tensor(den).shape() != [b, 1, h, w] {
            return Err(TensorError::shape(
                "chan_div_floor",
                format!("denominator {:?} must be {:?}", self.tensor(den).shape(), [b, 1, h, w]),
            ));
        }
        let data = chan_div_floor_forward(self.data(num), self.data(den), eps, b, c, h * w);
        self.push_node(vec![b, c, h, w], data, Record::ChanDivFloor { num, den, eps })
    }

    /// Constant sampling grid for a (B, 1, H, W) coordinate tensor.
    pub fn base_grid(&mut self, b: usize, h: usize, w: usize, horizontal: bool) -> TensorId {
        let mut data = vec![T::ZERO; b * h * w];
        for bi in 0..b {
            for y in 0..h {
                for x in 0..w {
                    data[(bi * h + y) * w + x] = T::from_usize(if horizontal { x } else { y });
                }
            }
        }
        self.leaf(Tensor::new(vec![b, 1, h, w], data).expect("grid shape"))
    }

    /// Cost self-reassembling: sample the full channel vector at each of N
    /// neighbor coordinates and combine. With modulation the weights are
    /// m_i / max(sum_i m_i, eps); without it the plain mean (Eq-2 style).
    ///
    /// `offsets` is (B, 2N, H, W) ordered (dx_1, dy_1, ..., dx_N, dy_N);
    /// `modulation` is (B, N, H, W). N = 0 returns the input unchanged.
    pub fn csr_refine(
        &mut self,
        volume: TensorId,
        offsets: TensorId,
        modulation: Option<TensorId>,
        cfg: &RefineConfig,
    ) -> Result<TensorId> {
        let n = cfg.neighbors;
        if n == 0 {
            return Ok(volume);
        }
        let (b, _c, h, w) = self.tensor(volume).dims4()?;
        let off_shape = self.tensor(offsets).shape().to_vec();
        if off_shape != [b, 2 * n, h, w] {
            return Err(TensorError::shape(
                "csr_refine",
                format!("offsets {:?} must be {:?}", off_shape, [b, 2 * n, h, w]),
            ));
        }
        if let Some(m) = modulation {
            let m_shape = self.tensor(m).shape();
            if m_shape != [b, n, h, w] {
                return Err(TensorError::shape(
                    "csr_refine",
                    format!("modulation {:?} must be {:?}", m_shape, [b, n, h, w]),
                ));
            }
        }

        let grid_x = self.base_grid(b, h, w, true);
        let grid_y = self.base_grid(b, h, w, false);

        let mut acc: Option<TensorId> = None;
        let mut mod_sum: Option<TensorId> = None;
        for i in 0..n {
            let dx = self.channel_slice(offsets, 2 * i, 1)?;
            let dy = self.channel_slice(offsets, 2 * i + 1, 1)?;
            let cx = self.add(grid_x, dx)?;
            let cy = self.add(grid_y, dy)?;
            let sampled = self.bilinear_sample(volume, cx, cy)?;
            let term = match modulation {
                Some(m) => {
                    let mi = self.channel_slice(m, i, 1)?;
                    mod_sum = Some(match mod_sum {
                        None => mi,
                        Some(prev) => self.add(prev, mi)?,
                    });
                    self.chan_mul(sampled, mi)?
                }
                None => sampled,
            };
            acc = Some(match acc {
                None => term,
                Some(prev) => self.add(prev, term)?,
            });
        }
        let acc = acc.expect("n >= 1");
        match mod_sum {
            Some(den) => self.chan_div_floor(acc, den, cfg.norm_eps),
            None => self.scale(acc, T::from_f64(1.0 / n as f64)),
        }
    }

    /// Disparity self-reassembling: the single-channel case of csr_refine.
    /// Input and output are (B, H, W).
    pub fn dsr_refine(
        &mut self,
        disparity: TensorId,
        offsets: TensorId,
        modulation: Option<TensorId>,
        cfg: &RefineConfig,
    ) -> Result<TensorId> {
        let shape = self.tensor(disparity).shape().to_vec();
        if shape.len() != 3 {
            return Err(TensorError::shape("dsr_refine", format!("expected B x H x W, got {:?}", shape)));
        }
        let as_map = self.reshape(disparity, vec![shape[0], 1, shape[1], shape[2]])?;
        let refined = self.csr_refine(as_map, offsets, modulation, cfg)?;
        self.reshape(refined, shape)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn leaf4<T: Scalar>(tape: &mut Tape<T>, shape: [usize; 4], data: Vec<T>) -> TensorId {
        tape.leaf(Tensor::new(shape.to_vec(), data).unwrap())
    }

    #[test]
    fn integer_coords_reproduce_grid_exactly() {
        let (h, w) = (3, 4);
        let map: Vec<f64> = (0..h * w).map(|i| i as f64 * 0.7 - 2.0).collect();
        let mut tape = Tape::<f64>::new();
        let m = leaf4(&mut tape, [1, 1, h, w], map.clone());
        let gx = tape.base_grid(1, h, w, true);
        let gy = tape.base_grid(1, h, w, false);
        let out = tape.bilinear_sample(m, gx, gy).unwrap();
        assert_eq!(tape.data(out), &map[..]);
    }

    #[test]
    fn midpoint_blends_evenly() {
        let mut tape = Tape::<f64>::new();
        let m = leaf4(&mut tape, [1, 1, 1, 2], vec![2.0, 6.0]);
        let cx = leaf4(&mut tape, [1, 1, 1, 2], vec![0.5, 0.5]);
        let cy = leaf4(&mut tape, [1, 1, 1, 2], vec![0.0, 0.0]);
        let out = tape.bilinear_sample(m, cx, cy).unwrap();
        assert!((tape.data(out)[0] - 4.0).abs() < 1e-12);
    }

    #[test]
    fn out_of_range_coordinate_clamps() {
        let (h, w) = (3, 4);
        let map: Vec<f64> = (0..h * w).map(|i| i as f64).collect();
        let mut tape = Tape::<f64>::new();
        let m = leaf4(&mut tape, [1, 1, h, w], map.clone());
        let cx = leaf4(&mut tape, [1, 1, h, w], vec![-5.3; h * w]);
        let cy = leaf4(&mut tape, [1, 1, h, w], vec![2.0; h * w]);
        let out = tape.bilinear_sample(m, cx, cy).unwrap();
        for p in 0..h * w {
            assert_eq!(tape.data(out)[p], map[2 * w]);
        }
    }

    #[test]
    fn csr_identity_with_zero_offsets() {
        let (b, c, h, w) = (1, 5, 4, 4);
        let mut rng = crate::rng::SplitMix64::new(9);
        let vol: Vec<f64> = (0..b * c * h * w).map(|_| rng.uniform(-3.0, 3.0)).collect();
        let n = 2;
        let mut tape = Tape::<f64>::new();
        let v = leaf4(&mut tape, [b, c, h, w], vol.clone());
        let off = leaf4(&mut tape, [b, 2 * n, h, w], vec![0.0; b * 2 * n * h * w]);
        let modu = leaf4(&mut tape, [b, n, h, w], vec![0.5; b * n * h * w]);
        let cfg = RefineConfig { neighbors: n, mode: RefineMode::Csr, norm_eps: 1e-6 };
        let out = tape.csr_refine(v, off, Some(modu), &cfg).unwrap();
        for (a, b) in tape.data(out).iter().zip(&vol) {
            assert!((a - b).abs() <= 1e-6, "{} vs {}", a, b);
        }
    }

    #[test]
    fn equal_weights_give_plain_mean() {
        // two neighbors pointing at known pixels u and v
        let (h, w) = (1, 4);
        let map = vec![10.0f64, 20.0, 30.0, 40.0];
        let n = 2;
        let mut tape = Tape::<f64>::new();
        let v = leaf4(&mut tape, [1, 1, h, w], map);
        // pixel 0 samples x=1 and x=3
        let mut off = vec![0.0; 2 * n * w];
        off[0] = 1.0; // dx_1 at pixel 0
        off[2 * w] = 3.0; // dx_2 at pixel 0
        let off = leaf4(&mut tape, [1, 2 * n, h, w], off);
        let modu = leaf4(&mut tape, [1, n, h, w], vec![0.7; n * w]);
        let cfg = RefineConfig::default();
        let out = tape.csr_refine(v, off, Some(modu), &cfg).unwrap();
        assert!((tape.data(out)[0] - 30.0).abs() < 1e-9);

        // unweighted mean agrees when all m_i are equal
        let mut tape2 = Tape::<f64>::new();
        let v2 = leaf4(&mut tape2, [1, 1, h, w], vec![10.0, 20.0, 30.0, 40.0]);
        let mut off2 = vec![0.0; 2 * n * w];
        off2[0] = 1.0;
        off2[2 * w] = 3.0;
        let off2 = leaf4(&mut tape2, [1, 2 * n, h, w], off2);
        let out2 = tape2.csr_refine(v2, off2, None, &cfg).unwrap();
        assert!((tape2.data(out2)[0] - 30.0).abs() < 1e-9);
    }

    #[test]
    fn matches_per_pixel_oracle() {
        let (b, c, h, w) = (1, 3, 5, 6);
        let n = 2;
        let hw = h * w;
        let mut rng = crate::rng::SplitMix64::new(31);
        let vol: Vec<f64> = (0..b * c * hw).map(|_| rng.uniform(-2.0, 2.0)).collect();
        let off: Vec<f64> = (0..b * 2 * n * hw).map(|_| rng.uniform(-2.5, 2.5)).collect();
        let modu: Vec<f64> = (0..b * n * hw).map(|_| rng.uniform(0.05, 0.95)).collect();

        let mut tape = Tape::<f64>::new();
        let v = leaf4(&mut tape, [b, c, h, w], vol.clone());
        let o = leaf4(&mut tape, [b, 2 * n, h, w], off.clone());
        let m = leaf4(&mut tape, [b, n, h, w], modu.clone());
        let cfg = RefineConfig::default();
        let out = tape.csr_refine(v, o, Some(m), &cfg).unwrap();

        // oracle: direct per-pixel evaluation of the modulated reassembly
        let sample = |ci: usize, x: f64, y: f64| -> f64 {
            let xc = x.clamp(0.0, (w - 1) as f64);
            let yc = y.clamp(0.0, (h - 1) as f64);
            let (x0, y0) = (xc.floor() as usize, yc.floor() as usize);
            let (x1, y1) = ((x0 + 1).min(w - 1), (y0 + 1).min(h - 1));
            let (fx, fy) = (xc - x0 as f64, yc - y0 as f64);
            let at = |yy: usize, xx: usize| vol[ci * hw + yy * w + xx];
            (1.0 - fy) * ((1.0 - fx) * at(y0, x0) + fx * at(y0, x1))
                + fy * ((1.0 - fx) * at(y1, x0) + fx * at(y1, x1))
        };
        for y in 0..h {
            for x in 0..w {
                let p = y * w + x;
                let msum: f64 = (0..n).map(|i| modu[i * hw + p]).sum();
                for ci in 0..c {
                    let mut num = 0.0;
                    for i in 0..n {
                        let sx = x as f64 + off[(2 * i) * hw + p];
                        let sy = y as f64 + off[(2 * i + 1) * hw + p];
                        num += modu[i * hw + p] * sample(ci, sx, sy);
                    }
                    let expect = num / msum.max(1e-6);
                    let got = tape.data(out)[ci * hw + p];
                    assert!((got - expect).abs() < 1e-6, "({},{},{}): {} vs {}", ci, y, x, got, expect);
                }
            }
        }
    }

    #[test]
    fn convexity_of_refined_values() {
        let (b, c, h, w) = (1, 1, 4, 5);
        let n = 3;
        let hw = h * w;
        let mut rng = crate::rng::SplitMix64::new(77);
        let vol: Vec<f64> = (0..hw).map(|_| rng.uniform(-4.0, 4.0)).collect();
        let off: Vec<f64> = (0..2 * n * hw).map(|_| rng.uniform(-3.0, 3.0)).collect();
        let modu: Vec<f64> = (0..n * hw).map(|_| rng.uniform(0.1, 0.9)).collect();
        let mut tape = Tape::<f64>::new();
        let v = leaf4(&mut tape, [b, c, h, w], vol.clone());
        let o = leaf4(&mut tape, [b, 2 * n, h, w], off.clone());
        let m = leaf4(&mut tape, [b, n, h, w], modu.clone());
        let cfg = RefineConfig { neighbors: n, ..RefineConfig::default() };
        let out = tape.csr_refine(v, o, Some(m), &cfg).unwrap();
        let (lo, hi) = vol.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(*v), h.max(*v)));
        for v in tape.data(out) {
            assert!(*v >= lo - 1e-6 && *v <= hi + 1e-6);
        }
    }

    #[test]
    fn dsr_constant_map_stays_constant() {
        let (h, w) = (4, 4);
        let n = 2;
        let mut rng = crate::rng::SplitMix64::new(15);
        let off: Vec<f64> = (0..2 * n * h * w).map(|_| rng.uniform(-3.0, 3.0)).collect();
        let modu: Vec<f64> = (0..n * h * w).map(|_| rng.uniform(0.2, 0.8)).collect();
        let mut tape = Tape::<f64>::new();
        let d = tape.leaf(Tensor::full(vec![1, h, w], 7.0f64));
        let o = leaf4(&mut tape, [1, 2 * n, h, w], off);
        let m = leaf4(&mut tape, [1, n, h, w], modu);
        let out = tape.dsr_refine(d, o, Some(m), &RefineConfig::default()).unwrap();
        for v in tape.data(out) {
            assert!((v - 7.0).abs() < 1e-9);
        }
    }

    #[test]
    fn dsr_follows_handmade_offsets() {
        // checkerboard, offsets point one pixel right, modulation nearly one-hot
        let (h, w) = (4, 4);
        let n = 2;
        let mut board = vec![0.0f64; h * w];
        for y in 0..h {
            for x in 0..w {
                board[y * w + x] = ((x + y) % 2) as f64 * 3.0 + 1.0;
            }
        }
        let mut off = vec![0.0; 2 * n * h * w];
        for p in 0..h * w {
            off[p] = 1.0; // dx_1 = +1
        }
        let mut modu = vec![0.0; n * h * w];
        for p in 0..h * w {
            modu[p] = 0.9999;
            modu[h * w + p] = 1e-7;
        }
        let mut tape = Tape::<f64>::new();
        let d = tape.leaf(Tensor::new(vec![1, h, w], board.clone()).unwrap());
        let o = leaf4(&mut tape, [1, 2 * n, h, w], off);
        let m = leaf4(&mut tape, [1, n, h, w], modu);
        let out = tape.dsr_refine(d, o, Some(m), &RefineConfig::default()).unwrap();
        for y in 0..h {
            for x in 0..w - 1 {
                let expect = board[y * w + x + 1];
                assert!((tape.data(out)[y * w + x] - expect).abs() < 1e-4);
            }
        }
    }

    #[test]
    fn single_channel_csr_equals_dsr() {
        let (h, w) = (3, 5);
        let n = 2;
        let hw = h * w;
        let mut rng = crate::rng::SplitMix64::new(91);
        let vals: Vec<f64> = (0..hw).map(|_| rng.uniform(0.0, 9.0)).collect();
        let off: Vec<f64> = (0..2 * n * hw).map(|_| rng.uniform(-1.5, 1.5)).collect();
        let modu: Vec<f64> = (0..n * hw).map(|_| rng.uniform(0.1, 0.9)).collect();
        let cfg = RefineConfig::default();

        let mut t1 = Tape::<f64>::new();
        let v = leaf4(&mut t1, [1, 1, h, w], vals.clone());
        let o1 = leaf4(&mut t1, [1, 2 * n, h, w], off.clone());
        let m1 = leaf4(&mut t1, [1, n, h, w], modu.clone());
        let csr = t1.csr_refine(v, o1, Some(m1), &cfg).unwrap();

        let mut t2 = Tape::<f64>::new();
        let d = t2.leaf(Tensor::new(vec![1, h, w], vals).unwrap());
        let o2 = leaf4(&mut t2, [1, 2 * n, h, w], off);
        let m2 = leaf4(&mut t2, [1, n, h, w], modu);
        let dsr = t2.dsr_refine(d, o2, Some(m2), &cfg).unwrap();

        assert_eq!(t1.data(csr), t2.data(dsr));
    }

    #[test]
    fn n_zero_returns_input_node() {
        let mut tape = Tape::<f64>::new();
        let v = leaf4(&mut tape, [1, 2, 2, 2], vec![1.0; 8]);
        let off = leaf4(&mut tape, [1, 2, 2, 2], vec![0.0; 8]);
        let cfg = RefineConfig { neighbors: 0, ..RefineConfig::default() };
        let out = tape.csr_refine(v, off, None, &cfg).unwrap();
        assert_eq!(out, v);
    }
}
