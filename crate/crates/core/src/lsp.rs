//! Local Similarity Pattern: per-pixel cosine similarities between a feature
//! vector and its dilated neighbors.
//!
//! Each output channel k holds cos(f(x, y), f(x + dx_k, y + dy_k)) with the
//! neighbor offsets enumerated row-major over (dy, dx), top-left first, and
//! the center excluded by default. Neighbors outside the image are treated as
//! zero vectors, so their similarity is exactly 0. The denominator floors the
//! squared norms at eps^2, which keeps the zero-vector case defined and makes
//! the value exactly 1 when both vectors are identical.

use crate::error::{Result, TensorError};
use crate::scalar::Scalar;
use crate::tape::{Record, Tape, TensorId};

#[derive(Clone, Debug)]
pub struct LspConfig {
    /// Odd window side length; 3 gives 8 neighbor channels per scale.
    pub window: usize,
    pub dilations: Vec<usize>,
    pub include_center: bool,
    /// Norm floor for the cosine denominator.
    pub eps: f64,
}

impl Default for LspConfig {
    fn default() -> Self {
        LspConfig { window: 3, dilations: vec![1, 2, 4, 8], include_center: false, eps: 1e-8 }
    }
}

impl LspConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window < 3 || self.window % 2 == 0 {
            return Err(TensorError::invalid("lsp", format!("window must be odd and >= 3, got {}", self.window)));
        }
        if self.dilations.is_empty() || self.dilations.iter().any(|&d| d == 0) {
            return Err(TensorError::invalid("lsp", "dilations must be non-empty and strictly positive"));
        }
        if self.eps <= 0.0 {
            return Err(TensorError::invalid("lsp", "eps must be positive"));
        }
        Ok(())
    }

    /// Channels produced per scale.
    pub fn neighbors(&self) -> usize {
        let k = self.window * self.window;
        if self.include_center {
            k
        } else {
            k - 1
        }
    }
}

/// Neighbor offsets (dy, dx) in row-major order for one dilation.
pub fn neighbor_offsets(window: usize, dilation: usize, include_center: bool) -> Vec<(isize, isize)> {
    let half = (window / 2) as isize;
    let r = dilation as isize;
    let mut out = Vec::with_capacity(window * window);
    for dy in -half..=half {
        for dx in -half..=half {
            if !include_center && dy == 0 && dx == 0 {
                continue;
            }
            out.push((dy * r, dx * r));
        }
    }
    out
}

/// Squared norm of the channel vector at every pixel.
fn squared_norms<T: Scalar>(f: &[T], b: usize, c: usize, hw: usize) -> Vec<T> {
    let mut out = vec![T::ZERO; b * hw];
    for bi in 0..b {
        for ci in 0..c {
            let src = &f[(bi * c + ci) * hw..(bi * c + ci + 1) * hw];
            let dst = &mut out[bi * hw..(bi + 1) * hw];
            for (o, v) in dst.iter_mut().zip(src) {
                *o += *v * *v;
            }
        }
    }
    out
}

pub fn forward<T: Scalar>(
    f: &[T],
    b: usize,
    c: usize,
    h: usize,
    w: usize,
    offsets: &[(isize, isize)],
    eps: f64,
) -> Vec<T> {
    let hw = h * w;
    let eps2 = T::from_f64(eps * eps);
    let norms = squared_norms(f, b, c, hw);
    let k = offsets.len();
    let mut out = vec![T::ZERO; b * k * hw];

    for bi in 0..b {
        let fb = &f[bi * c * hw..(bi + 1) * c * hw];
        let nb = &norms[bi * hw..(bi + 1) * hw];
        for (ki, &(dy, dx)) in offsets.iter().enumerate() {
            let dst = &mut out[(bi * k + ki) * hw..(bi * k + ki + 1) * hw];
            for y in 0..h {
                let qy = y as isize + dy;
                if qy < 0 || qy >= h as isize {
                    continue; // whole row out of bounds -> stays 0
                }
                for x in 0..w {
                    let qx = x as isize + dx;
                    if qx < 0 || qx >= w as isize {
                        continue;
                    }
                    let p = y * w + x;
                    let q = qy as usize * w + qx as usize;
                    let mut dot = T::ZERO;
                    for ci in 0..c {
                        dot += fb[ci * hw + p] * fb[ci * hw + q];
                    }
                    let denom = (nb[p].maxv(eps2) * nb[q].maxv(eps2)).sqrt();
                    dst[p] = dot / denom;
                }
            }
        }
    }
    out
}

pub fn backward<T: Scalar>(
    f: &[T],
    grad_out: &[T],
    b: usize,
    c: usize,
    h: usize,
    w: usize,
    offsets: &[(isize, isize)],
    eps: f64,
) -> Vec<T> {
    let hw = h * w;
    let eps2 = T::from_f64(eps * eps);
    let norms = squared_norms(f, b, c, hw);
    let k = offsets.len();
    let mut d_f = vec![T::ZERO; f.len()];

    for bi in 0..b {
        let fb = &f[bi * c * hw..(bi + 1) * c * hw];
        let nb = &norms[bi * hw..(bi + 1) * hw];
        for (ki, &(dy, dx)) in offsets.iter().enumerate() {
            let g_plane = &grad_out[(bi * k + ki) * hw..(bi * k + ki + 1) * hw];
            for y in 0..h {
                let qy = y as isize + dy;
                if qy < 0 || qy >= h as isize {
                    continue;
                }
                for x in 0..w {
                    let qx = x as isize + dx;
                    if qx < 0 || qx >= w as isize {
                        continue;
                    }
                    let p = y * w + x;
                    let g = g_plane[p];
                    if g == T::ZERO {
                        continue;
                    }
                    let q = qy as usize * w + qx as usize;
                    let daa = nb[p].maxv(eps2);
                    let dbb = nb[q].maxv(eps2);
                    let denom = (daa * dbb).sqrt();
                    let mut dot = T::ZERO;
                    for ci in 0..c {
                        dot += fb[ci * hw + p] * fb[ci * hw + q];
                    }
                    let v = dot / denom;
                    let a_active = nb[p] > eps2;
                    let b_active = nb[q] > eps2;
                    let base = bi * c * hw;
                    for ci in 0..c {
                        let a = fb[ci * hw + p];
                        let bv = fb[ci * hw + q];
                        let mut da = bv / denom;
                        if a_active {
                            da -= v * a / daa;
                        }
                        let mut db = a / denom;
                        if b_active {
                            db -= v * bv / dbb;
                        }
                        d_f[base + ci * hw + p] += g * da;
                        d_f[base + ci * hw + q] += g * db;
                    }
                }
            }
        }
    }
    d_f
}

impl<T: Scalar> Tape<T> {
    /// One LSP scale: B x K x H x W cosine-similarity channels.
    pub fn lsp_single_scale(&mut self, input: TensorId, dilation: usize, cfg: &LspConfig) -> Result<TensorId> {
        cfg.validate()?;
        if dilation == 0 {
            return Err(TensorError::invalid("lsp", "dilation must be >= 1"));
        }
        let (b, c, h, w) = self.tensor(input).dims4()?;
        let offsets = neighbor_offsets(cfg.window, dilation, cfg.include_center);
        let data = forward(self.data(input), b, c, h, w, &offsets, cfg.eps);
        self.push_node(
            vec![b, offsets.len(), h, w],
            data,
            Record::Lsp { input, dilation, window: cfg.window, include_center: cfg.include_center, eps: cfg.eps },
        )
    }

    /// Concatenation of single-scale LSPs over the configured dilations.
    pub fn lsp_multi_scale(&mut self, input: TensorId, cfg: &LspConfig) -> Result<TensorId> {
        let mut acc: Option<TensorId> = None;
        for &r in &cfg.dilations {
            let s = self.lsp_single_scale(input, r, cfg)?;
            acc = Some(match acc {
                None => s,
                Some(prev) => self.concat_channels(prev, s)?,
            });
        }
        acc.ok_or_else(|| TensorError::invalid("lsp", "empty dilation list"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Direct per-pixel oracle for one scale.
    pub fn oracle(f: &[f64], b: usize, c: usize, h: usize, w: usize, r: usize, eps: f64) -> Vec<f64> {
        let offsets = neighbor_offsets(3, r, false);
        let hw = h * w;
        let mut out = vec![0.0; b * offsets.len() * hw];
        for bi in 0..b {
            for (ki, &(dy, dx)) in offsets.iter().enumerate() {
                for y in 0..h {
                    for x in 0..w {
                        let qy = y as isize + dy;
                        let qx = x as isize + dx;
                        let val = if qy < 0 || qx < 0 || qy >= h as isize || qx >= w as isize {
                            0.0
                        } else {
                            let (q, p) = ((qy as usize * w + qx as usize), y * w + x);
                            let mut dot = 0.0;
                            let mut na = 0.0;
                            let mut nbv = 0.0;
                            for ci in 0..c {
                                let av = f[(bi * c + ci) * hw + p];
                                let bv = f[(bi * c + ci) * hw + q];
                                dot += av * bv;
                                na += av * av;
                                nbv += bv * bv;
                            }
                            dot / (na.max(eps * eps) * nbv.max(eps * eps)).sqrt()
                        };
                        out[(bi * offsets.len() + ki) * hw + y * w + x] = val;
                    }
                }
            }
        }
        out
    }

    #[test]
    fn constant_map_interior_exactly_one() {
        let (c, h, w) = (4, 6, 6);
        let f = vec![0.37f64; c * h * w];
        let out = forward(&f, 1, c, h, w, &neighbor_offsets(3, 1, false), 1e-8);
        // interior pixels: all 8 channels exactly 1; border channels pointing
        // outside are exactly 0
        for k in 0..8 {
            for y in 1..h - 1 {
                for x in 1..w - 1 {
                    assert_eq!(out[(k * h + y) * w + x], 1.0);
                }
            }
        }
        // top-left pixel, neighbor (-1,-1) is outside
        assert_eq!(out[0], 0.0);
    }

    #[test]
    fn orthogonal_halves_give_zero() {
        // two-channel map: left half = (1,0), right half = (0,1)
        let (h, w) = (4, 6);
        let mut f = vec![0.0f64; 2 * h * w];
        for y in 0..h {
            for x in 0..w {
                if x < w / 2 {
                    f[y * w + x] = 1.0;
                } else {
                    f[h * w + y * w + x] = 1.0;
                }
            }
        }
        let out = forward(&f, 1, 2, h, w, &neighbor_offsets(3, 1, false), 1e-8);
        // channel 4 is offset (0, +1); at the last left-half column the right
        // neighbor is orthogonal
        let k_right = 4;
        for y in 0..h {
            assert_eq!(out[(k_right * h + y) * w + (w / 2 - 1)], 0.0);
        }
    }

    #[test]
    fn matches_oracle_all_dilations() {
        let (b, c, h, w) = (1, 4, 6, 6);
        let mut rng = crate::rng::SplitMix64::new(77);
        let f: Vec<f64> = (0..b * c * h * w).map(|_| rng.uniform(-1.0, 1.0)).collect();
        for r in [1usize, 2, 4, 8] {
            let offsets = neighbor_offsets(3, r, false);
            let fast = forward(&f, b, c, h, w, &offsets, 1e-8);
            let slow = oracle(&f, b, c, h, w, r, 1e-8);
            for (a, o) in fast.iter().zip(&slow) {
                assert!((a - o).abs() < 1e-6);
                assert!(*a >= -1.0 - 1e-9 && *a <= 1.0 + 1e-9);
            }
        }
    }

    #[test]
    fn offset_symmetry_exact() {
        let (c, h, w) = (3, 5, 5);
        let mut rng = crate::rng::SplitMix64::new(5);
        let f: Vec<f64> = (0..c * h * w).map(|_| rng.uniform(0.1, 1.0)).collect();
        let offsets = neighbor_offsets(3, 1, false);
        let out = forward(&f, 1, c, h, w, &offsets, 1e-8);
        // channel for (dy,dx) at p equals channel for (-dy,-dx) at p+delta
        for (k, &(dy, dx)) in offsets.iter().enumerate() {
            let kr = offsets.iter().position(|&(a, b)| (a, b) == (-dy, -dx)).unwrap();
            for y in 1..h - 1 {
                for x in 1..w - 1 {
                    let p = y * w + x;
                    let q = ((y as isize + dy) as usize) * w + (x as isize + dx) as usize;
                    assert_eq!(out[k * h * w + p], out[kr * h * w + q]);
                }
            }
        }
    }

    #[test]
    fn positive_scale_invariance() {
        let (c, h, w) = (4, 6, 6);
        let mut rng = crate::rng::SplitMix64::new(13);
        // keep per-pixel norms well above the 1e-3 threshold
        let f: Vec<f64> = (0..c * h * w).map(|_| rng.uniform(0.2, 1.0)).collect();
        let offsets = neighbor_offsets(3, 2, false);
        let base = forward(&f, 1, c, h, w, &offsets, 1e-8);
        for scale in [0.5, 1.3, 2.0] {
            let scaled: Vec<f64> = f.iter().map(|v| v * scale).collect();
            let out = forward(&scaled, 1, c, h, w, &offsets, 1e-8);
            for (a, b) in base.iter().zip(&out) {
                assert!((a - b).abs() < 1e-6);
            }
        }
    }
}
