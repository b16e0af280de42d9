//! Aliasing diagnostics: above-Nyquist energy, predicted spectral folding,
//! and shift consistency of networks.
//!
//! Aliasing is measured where it originates: on the tensor feeding a
//! subsampling step, energy in DFT bins whose wrapped frequency index
//! exceeds the post-subsampling Nyquist limit (axis length / (2·stride))
//! will fold into the retained band.

use num_complex::Complex;

use crate::dft::{dft1, dft2};
use crate::error::{Error, Result};
use crate::network::{LayerGraph, Mode};
use crate::scalar::{cast_usize, to_f64, Scalar};
use crate::tensor::{shift2d, PaddingMode, Tensor};

/// Above-Nyquist energy of one plane relative to a subsampling stride.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct AliasReport {
    pub total_energy: f64,
    pub above_nyquist_energy: f64,
    /// `above_nyquist_energy / total_energy`, or 0 for an all-zero plane.
    pub fraction: f64,
    pub stride: usize,
}

/// Prediction agreement between inputs and their spatially shifted copies.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ConsistencyReport {
    pub pairs_evaluated: usize,
    pub agreement_rate: f64,
    pub mean_feature_cosine: f64,
}

fn check_stride(stride: usize, h: usize, w: usize) -> Result<()> {
    if stride < 2 {
        return Err(Error::Argument(format!(
            "aliasing analysis needs stride >= 2, got {stride}"
        )));
    }
    if !h.is_multiple_of(stride) || !w.is_multiple_of(stride) {
        return Err(Error::Argument(format!(
            "stride {stride} does not divide the {h}x{w} plane"
        )));
    }
    Ok(())
}

/// Energy above the post-subsampling Nyquist limit for one H×W plane.
/// A bin (k, l) is counted when its wrapped index min(k, H−k) or
/// min(l, W−l) strictly exceeds the limit on that axis; DC is always kept.
pub fn aliased_energy<S: Scalar>(
    plane: &[S],
    h: usize,
    w: usize,
    stride: usize,
) -> Result<AliasReport> {
    check_stride(stride, h, w)?;
    let spectrum = dft2(plane, h, w)?;
    let limit_y = h as f64 / (2.0 * stride as f64);
    let limit_x = w as f64 / (2.0 * stride as f64);
    let mut total = 0.0;
    let mut above = 0.0;
    for k in 0..h {
        for l in 0..w {
            let e = to_f64(spectrum.at(k, l).norm_sqr());
            total += e;
            let wy = k.min(h - k) as f64;
            let wx = l.min(w - l) as f64;
            if wy > limit_y || wx > limit_x {
                above += e;
            }
        }
    }
    let fraction = if total > 0.0 { above / total } else { 0.0 };
    Ok(AliasReport {
        total_energy: total,
        above_nyquist_energy: above,
        fraction,
        stride,
    })
}

/// Aggregate of [`aliased_energy`] over every (batch, channel) plane of a
/// tensor; energies sum, the fraction is of the summed energies.
pub fn aliased_energy_tensor<S: Scalar>(t: &Tensor<S>, stride: usize) -> Result<AliasReport> {
    let (n, c, h, w) = t.shape();
    check_stride(stride, h, w)?;
    let mut total = 0.0;
    let mut above = 0.0;
    for bn in 0..n {
        for ch in 0..c {
            let r = aliased_energy(t.plane(bn, ch), h, w, stride)?;
            total += r.total_energy;
            above += r.above_nyquist_energy;
        }
    }
    let fraction = if total > 0.0 { above / total } else { 0.0 };
    Ok(AliasReport {
        total_energy: total,
        above_nyquist_energy: above,
        fraction,
        stride,
    })
}

/// Predicted spectrum of the subsampled signal by folding the full
/// spectrum: X_sub[k] = (1/s)·Σ_m X[k + m·N/s].
pub fn folding_spectrum<S: Scalar>(signal: &[S], stride: usize) -> Result<Vec<Complex<S>>> {
    let n = signal.len();
    if stride < 1 || n == 0 {
        return Err(Error::Argument("folding needs stride >= 1 and data".into()));
    }
    if !n.is_multiple_of(stride) {
        return Err(Error::Argument(format!(
            "stride {stride} does not divide signal length {n}"
        )));
    }
    let full = dft1(signal);
    let m = n / stride;
    let inv_s = S::one() / cast_usize::<S>(stride);
    Ok((0..m)
        .map(|k| {
            let mut acc = Complex::new(S::zero(), S::zero());
            for fold in 0..stride {
                acc = acc + full[k + fold * m];
            }
            acc * inv_s
        })
        .collect())
}

fn argmax_row<S: Scalar>(logits: &Tensor<S>, n: usize) -> usize {
    let (_, c, _, _) = logits.shape();
    let mut best = 0;
    for k in 1..c {
        if logits.at(n, k, 0, 0) > logits.at(n, best, 0, 0) {
            best = k;
        }
    }
    best
}

fn feature_cosine<S: Scalar>(a: &Tensor<S>, b: &Tensor<S>, n: usize) -> f64 {
    let (_, c, _, _) = a.shape();
    let mut dot = 0.0;
    let mut na = 0.0;
    let mut nb = 0.0;
    for k in 0..c {
        let x = to_f64(a.at(n, k, 0, 0));
        let y = to_f64(b.at(n, k, 0, 0));
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 && nb == 0.0 {
        return 1.0;
    }
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    dot / (na.sqrt() * nb.sqrt())
}

/// Agreement and feature cosine for a single shift offset.
pub fn shift_consistency_single<S: Scalar>(
    net: &LayerGraph<S>,
    inputs: &Tensor<S>,
    shift: (isize, isize),
    padding: PaddingMode,
) -> Result<ConsistencyReport> {
    if net.mode() != Mode::Eval {
        return Err(Error::Argument(
            "shift consistency requires the network in eval mode".into(),
        ));
    }
    let (n, _, _, _) = inputs.shape();
    if n == 0 {
        return Err(Error::Argument("shift consistency needs inputs".into()));
    }
    let (feat_orig, logits_orig) = net.eval_features_and_logits(inputs)?;
    let shifted = shift2d(inputs, shift.0, shift.1, padding);
    let (feat_shift, logits_shift) = net.eval_features_and_logits(&shifted)?;
    let mut agree = 0usize;
    let mut cosine_sum = 0.0;
    for i in 0..n {
        if argmax_row(&logits_orig, i) == argmax_row(&logits_shift, i) {
            agree += 1;
        }
        cosine_sum += feature_cosine(&feat_orig, &feat_shift, i);
    }
    Ok(ConsistencyReport {
        pairs_evaluated: n,
        agreement_rate: agree as f64 / n as f64,
        mean_feature_cosine: cosine_sum / n as f64,
    })
}

/// Compares predictions on each input against its shifted copies for every
/// offset (dy, dx) with 1 ≤ dy, dx ≤ `max_shift`.
pub fn shift_consistency<S: Scalar>(
    net: &LayerGraph<S>,
    inputs: &Tensor<S>,
    max_shift: usize,
    padding: PaddingMode,
) -> Result<ConsistencyReport> {
    if max_shift < 1 {
        return Err(Error::Argument("max_shift must be >= 1".into()));
    }
    let mut pairs = 0usize;
    let mut agree_weighted = 0.0;
    let mut cosine_weighted = 0.0;
    for dy in 1..=max_shift {
        for dx in 1..=max_shift {
            let r = shift_consistency_single(net, inputs, (dy as isize, dx as isize), padding)?;
            pairs += r.pairs_evaluated;
            agree_weighted += r.agreement_rate * r.pairs_evaluated as f64;
            cosine_weighted += r.mean_feature_cosine * r.pairs_evaluated as f64;
        }
    }
    Ok(ConsistencyReport {
        pairs_evaluated: pairs,
        agreement_rate: agree_weighted / pairs as f64,
        mean_feature_cosine: cosine_weighted / pairs as f64,
    })
}
