//! Central finite-difference verification of every backward pass.
//!
//! Checks run in 64-bit: for each input element, compare the analytic
//! gradient from tape replay against (f(x+h) - f(x-h)) / 2h. Relative error
//! uses the denominator max(|analytic|, |numeric|, 1e-8). Evaluation points
//! must sit away from kinks (exact-zero relu inputs, integer sampling
//! coordinates, |x| = 1 for smooth-L1); the input builders below choose them
//! accordingly.

use crate::cost::laplacian_gt;
use crate::error::{Result, TensorError};
use crate::lsp::LspConfig;
use crate::ops::upsample::UpsampleMode;
use crate::refine::RefineConfig;
use crate::rng::SplitMix64;
use crate::tape::{Tape, TensorId};
use crate::tensor::Tensor;

pub const DEFAULT_H: f64 = 1e-4;
pub const DEFAULT_TOLERANCE: f64 = 1e-4;
/// Linear maps are exact up to rounding; hold them to a much tighter bound.
pub const LINEAR_TOLERANCE: f64 = 1e-9;

/// max(|a - n|) / max(|a|, |n|, 1e-8)
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub worst_analytic: f64,
    pub worst_numeric: f64,
    pub elements_checked: usize,
}

impl GradCheckReport {
    fn empty() -> Self {
        GradCheckReport { max_rel_err: 0.0, worst_analytic: 0.0, worst_numeric: 0.0, elements_checked: 0 }
    }

    fn record(&mut self, analytic: f64, numeric: f64) {
        let e = relative_error(analytic, numeric);
        self.elements_checked += 1;
        if e > self.max_rel_err {
            self.max_rel_err = e;
            self.worst_analytic = analytic;
            self.worst_numeric = numeric;
        }
    }
}

/// Compare tape gradients of a scalar-valued graph against central
/// differences, perturbing every element of every input (or a deterministic
/// subset of `sample` elements per input when given).
pub fn finite_diff_check<F>(
    inputs: &[Tensor<f64>],
    h: f64,
    sample: Option<(usize, u64)>,
    forward: F,
) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape<f64>, &[TensorId]) -> Result<TensorId>,
{
    let eval = |tensors: &[Tensor<f64>]| -> Result<f64> {
        let mut tape = Tape::new();
        let ids: Vec<TensorId> = tensors.iter().map(|t| tape.leaf(t.clone())).collect();
        let root = forward(&mut tape, &ids)?;
        if tape.tensor(root).numel() != 1 {
            return Err(TensorError::invalid("finite_diff_check", "forward must produce a scalar"));
        }
        let v = tape.data(root)[0];
        if !v.is_finite() {
            return Err(TensorError::NonFinite { op: "finite_diff_check", detail: "forward value".into() });
        }
        Ok(v)
    };

    // analytic gradients
    let mut tape = Tape::new();
    let ids: Vec<TensorId> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
    let root = forward(&mut tape, &ids)?;
    tape.backward(root)?;
    let analytic: Vec<Vec<f64>> = ids
        .iter()
        .map(|&id| tape.grad(id).map(|g| g.to_vec()).unwrap_or_else(|| vec![0.0; tape.tensor(id).numel()]))
        .collect();
    if analytic.iter().flatten().any(|v| !v.is_finite()) {
        return Err(TensorError::NonFinite { op: "finite_diff_check", detail: "analytic gradient".into() });
    }

    let mut report = GradCheckReport::empty();
    let mut work = inputs.to_vec();
    for (i, input) in inputs.iter().enumerate() {
        let n = input.numel();
        let elements: Vec<usize> = match sample {
            None => (0..n).collect(),
            Some((k, seed)) => {
                let mut rng = SplitMix64::new(seed ^ (i as u64).wrapping_mul(0x9e37_79b9));
                (0..k.min(n)).map(|_| rng.next_below(n)).collect()
            }
        };
        for j in elements {
            let original = work[i].data()[j];
            work[i].data_mut()[j] = original + h;
            let plus = eval(&work)?;
            work[i].data_mut()[j] = original - h;
            let minus = eval(&work)?;
            work[i].data_mut()[j] = original;
            let numeric = (plus - minus) / (2.0 * h);
            report.record(analytic[i][j], numeric);
        }
    }
    Ok(report)
}

// ── standard suite ───────────────────────────────────────────────────

#[derive(Clone, Debug)]
pub struct SuiteEntry {
    pub name: &'static str,
    pub tolerance: f64,
    pub max_rel_err: f64,
    pub pass: bool,
}

fn rand_tensor(shape: Vec<usize>, lo: f64, hi: f64, rng: &mut SplitMix64) -> Tensor<f64> {
    let numel: usize = shape.iter().product();
    let data: Vec<f64> = (0..numel).map(|_| rng.uniform(lo, hi)).collect();
    Tensor::new(shape, data).expect("rand tensor shape")
}

/// Values bounded away from zero on both sides (relu-kink safe).
fn rand_tensor_no_zero(shape: Vec<usize>, rng: &mut SplitMix64) -> Tensor<f64> {
    let numel: usize = shape.iter().product();
    let data: Vec<f64> = (0..numel)
        .map(|_| {
            let mag = rng.uniform(0.25, 1.5);
            if rng.next_f64() < 0.5 {
                mag
            } else {
                -mag
            }
        })
        .collect();
    Tensor::new(shape, data).expect("rand tensor shape")
}

/// Fractional offsets whose fractional part stays in [0.3, 0.7], keeping
/// sampling coordinates away from integer kinks.
fn rand_offsets(shape: Vec<usize>, reach: i64, rng: &mut SplitMix64) -> Tensor<f64> {
    let numel: usize = shape.iter().product();
    let data: Vec<f64> = (0..numel)
        .map(|_| {
            let k = (rng.next_below((2 * reach + 1) as usize) as i64 - reach) as f64;
            k + rng.uniform(0.3, 0.7)
        })
        .collect();
    Tensor::new(shape, data).expect("rand tensor shape")
}

/// Collapse any tensor to a scalar via a fixed random projection followed by
/// a mean, so every output element influences the loss with a distinct
/// weight.
pub fn collapse(tape: &mut Tape<f64>, id: TensorId, seed: u64) -> Result<TensorId> {
    let shape = tape.shape(id).to_vec();
    let numel: usize = shape.iter().product();
    let mut rng = SplitMix64::new(seed ^ 0xC011_A95E);
    let weights: Vec<f64> = (0..numel).map(|_| rng.uniform(-1.0, 1.0)).collect();
    let w = tape.leaf(Tensor::new(shape, weights)?);
    let prod = tape.mul(id, w)?;
    tape.reduce_mean(prod)
}

fn check_over_seeds<F>(seeds: std::ops::Range<u64>, mut one: F) -> Result<f64>
where
    F: FnMut(u64) -> Result<GradCheckReport>,
{
    let mut worst: f64 = 0.0;
    for s in seeds {
        let r = one(s)?;
        worst = worst.max(r.max_rel_err);
    }
    Ok(worst)
}

/// Run the whole per-op gradient suite plus the end-to-end model check.
/// Each op is evaluated over `n_seeds` random instances at h = 1e-4.
pub fn standard_suite(base_seed: u64, n_seeds: u64) -> Result<Vec<SuiteEntry>> {
    let h = DEFAULT_H;
    let mut entries = Vec::new();
    let seeds = base_seed..base_seed + n_seeds;

    let mut push = |name: &'static str, tolerance: f64, worst: f64, out: &mut Vec<SuiteEntry>| {
        out.push(SuiteEntry { name, tolerance, max_rel_err: worst, pass: worst < tolerance });
    };

    // pointwise add (linear: near machine precision)
    let worst = check_over_seeds(seeds.clone(), |s| {
        let mut rng = SplitMix64::new(s);
        let a = rand_tensor(vec![2, 3, 4], -1.0, 1.0, &mut rng);
        let b = rand_tensor(vec![2, 3, 4], -1.0, 1.0, &mut rng);
        finite_diff_check(&[a, b], h, None, |t, ids| {
            let sum = t.add(ids[0], ids[1])?;
            collapse(t, sum, s)
        })
    })?;
    push("pointwise_add", LINEAR_TOLERANCE, worst, &mut entries);

    let worst = check_over_seeds(seeds.clone(), |s| {
        let mut rng = SplitMix64::new(s ^ 0x11);
        let a = rand_tensor(vec![2, 3, 4], -1.0, 1.0, &mut rng);
        let b = rand_tensor(vec![2, 3, 4], -1.0, 1.0, &mut rng);
        finite_diff_check(&[a, b], h, None, |t, ids| {
            let prod = t.mul(ids[0], ids[1])?;
            collapse(t, prod, s)
        })
    })?;
    push("pointwise_mul", DEFAULT_TOLERANCE, worst, &mut entries);

    let worst = check_over_seeds(seeds.clone(), |s| {
        let mut rng = SplitMix64::new(s ^ 0x12);
        let a = rand_tensor(vec![3, 5], -1.0, 1.0, &mut rng);
        finite_diff_check(&[a], h, None, |t, ids| {
            let scaled = t.scale(ids[0], -1.7)?;
            collapse(t, scaled, s)
        })
    })?;
    push("pointwise_scale", LINEAR_TOLERANCE, worst, &mut entries);

    let worst = check_over_seeds(seeds.clone(), |s| {
        let mut rng = SplitMix64::new(s ^ 0x13);
        let a = rand_tensor(vec![1, 2, 3, 3], -1.0, 1.0, &mut rng);
        let b = rand_tensor(vec![1, 3, 3, 3], -1.0, 1.0, &mut rng);
        finite_diff_check(&[a, b], h, None, |t, ids| {
            let cat = t.concat_channels(ids[0], ids[1])?;
            let sl = t.channel_slice(cat, 1, 3)?;
            collapse(t, sl, s)
        })
    })?;
    push("pointwise_concat_slice", LINEAR_TOLERANCE, worst, &mut entries);

    // activations
    let worst = check_over_seeds(seeds.clone(), |s| {
        let mut rng = SplitMix64::new(s ^ 0x21);
        let a = rand_tensor_no_zero(vec![2, 3, 4], &mut rng);
        finite_diff_check(&[a], h, None, |t, ids| {
            let r = t.relu(ids[0])?;
            collapse(t, r, s)
        })
    })?;
    push("activation_relu", DEFAULT_TOLERANCE, worst, &mut entries);

    let worst = check_over_seeds(seeds.clone(), |s| {
        let mut rng = SplitMix64::new(s ^ 0x22);
        let a = rand_tensor(vec![2, 3, 4], -2.0, 2.0, &mut rng);
        finite_diff_check(&[a], h, None, |t, ids| {
            let r = t.sigmoid(ids[0])?;
            collapse(t, r, s)
        })
    })?;
    push("activation_sigmoid", DEFAULT_TOLERANCE, worst, &mut entries);

    let worst = check_over_seeds(seeds.clone(), |s| {
        let mut rng = SplitMix64::new(s ^ 0x23);
        let a = rand_tensor(vec![2, 5, 3], -2.0, 2.0, &mut rng);
        finite_diff_check(&[a], h, None, |t, ids| {
            let sm = t.softmax_axis(ids[0], 1)?;
            collapse(t, sm, s)
        })
    })?;
    push("softmax_axis", DEFAULT_TOLERANCE, worst, &mut entries);

    for (name, mode) in
        [("upsample2x_nearest", UpsampleMode::Nearest), ("upsample2x_bilinear", UpsampleMode::Bilinear)]
    {
        let worst = check_over_seeds(seeds.clone(), |s| {
            let mut rng = SplitMix64::new(s ^ 0x24);
            let a = rand_tensor(vec![1, 2, 3, 4], -1.0, 1.0, &mut rng);
            finite_diff_check(&[a], h, None, |t, ids| {
                let up = t.upsample2x(ids[0], mode)?;
                collapse(t, up, s)
            })
        })?;
        push(name, LINEAR_TOLERANCE, worst, &mut entries);
    }

    let worst = check_over_seeds(seeds.clone(), |s| {
        let mut rng = SplitMix64::new(s ^ 0x25);
        let a = rand_tensor(vec![2, 3, 4], -1.0, 1.0, &mut rng);
        let mask: Vec<f64> = (0..24).map(|_| if rng.next_f64() < 0.7 { 1.0 } else { 0.0 }).collect();
        let mask = Tensor::new(vec![2, 3, 4], mask).unwrap();
        finite_diff_check(&[a], h, None, move |t, ids| {
            let all = t.reduce_mean(ids[0])?;
            let masked = t.reduce_mean_masked(ids[0], &mask)?;
            t.add(all, masked)
        })
    })?;
    push("reduce_mean", LINEAR_TOLERANCE, worst, &mut entries);

    // convolutions
    let worst = check_over_seeds(seeds.clone(), |s| {
        let mut rng = SplitMix64::new(s ^ 0x31);
        let input = rand_tensor(vec![1, 3, 6, 6], -1.0, 1.0, &mut rng);
        let weight = rand_tensor(vec![2, 3, 3, 3], -0.5, 0.5, &mut rng);
        let bias = rand_tensor(vec![2], -0.2, 0.2, &mut rng);
        let (stride, dilation) = if s % 2 == 0 { (1, 2) } else { (2, 1) };
        finite_diff_check(&[input, weight, bias], h, None, move |t, ids| {
            let out = t.conv2d(ids[0], ids[1], ids[2], stride, 1, dilation)?;
            collapse(t, out, s)
        })
    })?;
    push("conv2d", DEFAULT_TOLERANCE, worst, &mut entries);

    let worst = check_over_seeds(seeds.clone(), |s| {
        let mut rng = SplitMix64::new(s ^ 0x32);
        let input = rand_tensor(vec![1, 2, 4, 5, 5], -1.0, 1.0, &mut rng);
        let weight = rand_tensor(vec![2, 2, 3, 3, 3], -0.4, 0.4, &mut rng);
        let bias = rand_tensor(vec![2], -0.2, 0.2, &mut rng);
        finite_diff_check(&[input, weight, bias], h, None, |t, ids| {
            let out = t.conv3d(ids[0], ids[1], ids[2], 1, 1)?;
            collapse(t, out, s)
        })
    })?;
    push("conv3d", DEFAULT_TOLERANCE, worst, &mut entries);

    // LSP cosine feature
    let worst = check_over_seeds(seeds.clone(), |s| {
        let mut rng = SplitMix64::new(s ^ 0x41);
        let f = rand_tensor(vec![1, 4, 6, 6], 0.2, 1.2, &mut rng);
        let cfg = LspConfig { dilations: vec![1, 2], ..LspConfig::default() };
        finite_diff_check(&[f], h, None, move |t, ids| {
            let lsp = t.lsp_multi_scale(ids[0], &cfg)?;
            collapse(t, lsp, s)
        })
    })?;
    push("lsp_cosine", DEFAULT_TOLERANCE, worst, &mut entries);

    // cost volume + regression
    let worst = check_over_seeds(seeds.clone(), |s| {
        let mut rng = SplitMix64::new(s ^ 0x51);
        let l = rand_tensor(vec![1, 3, 4, 6], -1.0, 1.0, &mut rng);
        let r = rand_tensor(vec![1, 3, 4, 6], -1.0, 1.0, &mut rng);
        finite_diff_check(&[l, r], h, None, |t, ids| {
            let v = t.concat_volume(ids[0], ids[1], 3)?;
            collapse(t, v, s)
        })
    })?;
    push("concat_volume", LINEAR_TOLERANCE, worst, &mut entries);

    let worst = check_over_seeds(seeds.clone(), |s| {
        let mut rng = SplitMix64::new(s ^ 0x52);
        let logits = rand_tensor(vec![1, 6, 3, 4], -2.0, 2.0, &mut rng);
        finite_diff_check(&[logits], h, None, |t, ids| {
            let (_, disp) = t.regress_disparity(ids[0])?;
            collapse(t, disp, s)
        })
    })?;
    push("disparity_regression", DEFAULT_TOLERANCE, worst, &mut entries);

    // bilinear sampling: gradients w.r.t. map and both coordinates
    let worst = check_over_seeds(seeds.clone(), |s| {
        let mut rng = SplitMix64::new(s ^ 0x61);
        let map = rand_tensor(vec![1, 3, 5, 6], -1.0, 1.0, &mut rng);
        let mut cx = rand_offsets(vec![1, 1, 5, 6], 1, &mut rng);
        let mut cy = rand_offsets(vec![1, 1, 5, 6], 1, &mut rng);
        // shift into the valid interior so no coordinate sits near the clamp
        for v in cx.data_mut() {
            *v = v.abs() + 1.0; // within [1.3, 2.7]
        }
        for v in cy.data_mut() {
            *v = v.abs() + 1.0;
        }
        finite_diff_check(&[map, cx, cy], h, None, |t, ids| {
            let out = t.bilinear_sample(ids[0], ids[1], ids[2])?;
            collapse(t, out, s)
        })
    })?;
    push("bilinear_sample", DEFAULT_TOLERANCE, worst, &mut entries);

    // CSR / DSR including modulation gradients
    let worst = check_over_seeds(seeds.clone(), |s| {
        let mut rng = SplitMix64::new(s ^ 0x62);
        let n = 2;
        let volume = rand_tensor(vec![1, 3, 5, 5], -1.5, 1.5, &mut rng);
        let offsets = rand_offsets(vec![1, 2 * n, 5, 5], 1, &mut rng);
        let modulation = rand_tensor(vec![1, n, 5, 5], 0.15, 0.85, &mut rng);
        let cfg = RefineConfig::default();
        finite_diff_check(&[volume, offsets, modulation], h, None, move |t, ids| {
            let out = t.csr_refine(ids[0], ids[1], Some(ids[2]), &cfg)?;
            collapse(t, out, s)
        })
    })?;
    push("csr_refine", DEFAULT_TOLERANCE, worst, &mut entries);

    let worst = check_over_seeds(seeds.clone(), |s| {
        let mut rng = SplitMix64::new(s ^ 0x63);
        let n = 2;
        let disp = rand_tensor(vec![1, 5, 5], 0.0, 6.0, &mut rng);
        let offsets = rand_offsets(vec![1, 2 * n, 5, 5], 1, &mut rng);
        let modulation = rand_tensor(vec![1, n, 5, 5], 0.15, 0.85, &mut rng);
        let cfg = RefineConfig::default();
        finite_diff_check(&[disp, offsets, modulation], h, None, move |t, ids| {
            let out = t.dsr_refine(ids[0], ids[1], Some(ids[2]), &cfg)?;
            collapse(t, out, s)
        })
    })?;
    push("dsr_refine", DEFAULT_TOLERANCE, worst, &mut entries);

    // losses
    let worst = check_over_seeds(seeds.clone(), |s| {
        let mut rng = SplitMix64::new(s ^ 0x71);
        let (d, hgt, wid) = (5, 3, 4);
        let logits = rand_tensor(vec![1, d, hgt, wid], -2.0, 2.0, &mut rng);
        let gt = rand_tensor(vec![1, hgt, wid], 0.5, (d - 1) as f64 - 0.5, &mut rng);
        let target = laplacian_gt(&gt, d, 1.0).unwrap();
        let maskv: Vec<f64> = (0..hgt * wid).map(|_| if rng.next_f64() < 0.8 { 1.0 } else { 0.0 }).collect();
        let has_valid = maskv.iter().any(|v| *v != 0.0);
        let mask = Tensor::new(vec![1, hgt, wid], if has_valid { maskv } else { vec![1.0; hgt * wid] }).unwrap();
        finite_diff_check(&[logits], h, None, move |t, ids| {
            let (probs, _) = t.regress_disparity(ids[0])?;
            t.ce_loss(probs, &target, &mask)
        })
    })?;
    push("ce_loss", DEFAULT_TOLERANCE, worst, &mut entries);

    let worst = check_over_seeds(seeds.clone(), |s| {
        let mut rng = SplitMix64::new(s ^ 0x72);
        let (hgt, wid) = (3, 4);
        let pred = rand_tensor(vec![1, hgt, wid], -3.0, 3.0, &mut rng);
        // errors in [0.2, 0.8] or [1.2, 2.0]: both branches, away from |x|=1
        let target_data: Vec<f64> = pred
            .data()
            .iter()
            .map(|p| {
                let e = if rng.next_f64() < 0.5 { rng.uniform(0.2, 0.8) } else { rng.uniform(1.2, 2.0) };
                if rng.next_f64() < 0.5 {
                    p - e
                } else {
                    p + e
                }
            })
            .collect();
        let target = Tensor::new(vec![1, hgt, wid], target_data).unwrap();
        let mask = Tensor::full(vec![1, hgt, wid], 1.0);
        finite_diff_check(&[pred], h, None, move |t, ids| t.smooth_l1_loss(ids[0], &target, &mask))
    })?;
    push("smooth_l1_loss", DEFAULT_TOLERANCE, worst, &mut entries);

    // full model end to end (subset of parameter elements per seed)
    let worst = check_over_seeds(base_seed..base_seed + n_seeds, crate::model::end_to_end_gradcheck)?;
    push("model_end_to_end", DEFAULT_TOLERANCE, worst, &mut entries);

    Ok(entries)
}
