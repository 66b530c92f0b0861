//! Photometric dissimilarity maps: L1, windowed SSIM, and soft ternary census.
//!
//! The appearance-matching cost between an image and its warped
//! reconstruction blends three per-pixel maps:
//!
//! - **L1**: per-pixel mean over channels of absolute difference.
//! - **SSIM**: `(1 - SSIM) / 2` with uniform window statistics; window
//!   samples are clamp-replicated at borders so every pixel has a full
//!   window.
//! - **Census**: a ternary census descriptor (sign of neighbor minus center
//!   with a dead zone) compared by Hamming distance, made differentiable by
//!   a soft sign `d / sqrt(d² + τ²)` and a bounded quadratic-over-linear
//!   element distance `Δ² / (Δ² + ε)`. The census term is what keeps the
//!   match robust to local brightness changes: it is exactly invariant to
//!   global additive shifts.
//!
//! The blended scalar loss weights the three map means.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{ImageField, ScalarField};

/// Soft-Hamming element-distance constant: `Δ² / (Δ² + CENSUS_DIST_EPS)`.
pub(crate) const CENSUS_DIST_EPS: f64 = 0.1;

/// Weights and window parameters for the photometric loss.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhotometricParams {
    /// Weight of the SSIM term.
    pub alpha1: f64,
    /// Weight of the L1 term.
    pub alpha2: f64,
    /// Weight of the census term.
    pub alpha3: f64,
    /// SSIM uniform window side length (odd).
    pub ssim_window: usize,
    /// SSIM luminance stabilizer (0.01²).
    pub ssim_c1: f64,
    /// SSIM contrast stabilizer (0.03²).
    pub ssim_c2: f64,
    /// Census patch side length (odd, >= 3).
    pub census_patch: usize,
    /// Census dead-zone half-width; also the soft-sign scale.
    pub census_threshold: f64,
}

impl Default for PhotometricParams {
    fn default() -> Self {
        Self {
            alpha1: 0.85,
            alpha2: 0.15,
            alpha3: 0.08,
            ssim_window: 3,
            ssim_c1: 1e-4,
            ssim_c2: 9e-4,
            census_patch: 3,
            census_threshold: 0.01,
        }
    }
}

impl PhotometricParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("alpha1", self.alpha1),
            ("alpha2", self.alpha2),
            ("alpha3", self.alpha3),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidConfig(format!(
                    "{name} must be finite and >= 0, got {v}"
                )));
            }
        }
        if self.ssim_window % 2 == 0 || self.ssim_window == 0 {
            return Err(Error::InvalidConfig(format!(
                "ssim_window must be odd, got {}",
                self.ssim_window
            )));
        }
        if self.census_patch % 2 == 0 || self.census_patch < 3 {
            return Err(Error::InvalidConfig(format!(
                "census_patch must be odd and >= 3, got {}",
                self.census_patch
            )));
        }
        for (name, v) in [("ssim_c1", self.ssim_c1), ("ssim_c2", self.ssim_c2)] {
            if !v.is_finite() || v <= 0.0 {
                return Err(Error::InvalidConfig(format!(
                    "{name} must be finite and > 0, got {v}"
                )));
            }
        }
        if !self.census_threshold.is_finite() || self.census_threshold < 0.0 {
            return Err(Error::InvalidConfig(format!(
                "census_threshold must be finite and >= 0, got {}",
                self.census_threshold
            )));
        }
        Ok(())
    }
}

fn check_pair(a: &ImageField, b: &ImageField) -> Result<()> {
    if a.height() != b.height() || a.width() != b.width() || a.channels() != b.channels() {
        return Err(Error::ShapeMismatch(format!(
            "image pair {}x{}x{} vs {}x{}x{}",
            a.height(),
            a.width(),
            a.channels(),
            b.height(),
            b.width(),
            b.channels()
        )));
    }
    Ok(())
}

/// One channel of an image as a scalar field.
pub(crate) fn channel_plane(img: &ImageField, c: usize) -> ScalarField {
    ScalarField::from_fn(img.height(), img.width(), |i, j| img.get(i, j, c))
}

/// Uniform window mean with clamp-replicated borders.
pub(crate) fn box_mean(src: &ScalarField, window: usize) -> ScalarField {
    let r = (window / 2) as isize;
    let inv = 1.0 / (window * window) as f64;
    let (h, w) = (src.height(), src.width());
    ScalarField::from_fn(h, w, |i, j| {
        let mut acc = 0.0;
        for di in -r..=r {
            let y = (i as isize + di).clamp(0, h as isize - 1) as usize;
            for dj in -r..=r {
                let x = (j as isize + dj).clamp(0, w as isize - 1) as usize;
                acc += src.get(y, x);
            }
        }
        acc * inv
    })
}

/// Adjoint of [`box_mean`]: scatter-adds each window-mean cotangent back to
/// the (clamped) source pixels it read.
pub(crate) fn box_mean_adjoint(cotangent: &ScalarField, window: usize) -> ScalarField {
    let r = (window / 2) as isize;
    let inv = 1.0 / (window * window) as f64;
    let (h, w) = (cotangent.height(), cotangent.width());
    let mut out = ScalarField::new(h, w);
    for i in 0..h {
        for j in 0..w {
            let g = cotangent.get(i, j) * inv;
            if g == 0.0 {
                continue;
            }
            for di in -r..=r {
                let y = (i as isize + di).clamp(0, h as isize - 1) as usize;
                for dj in -r..=r {
                    let x = (j as isize + dj).clamp(0, w as isize - 1) as usize;
                    out.set(y, x, out.get(y, x) + g);
                }
            }
        }
    }
    out
}

/// Raw window moments of one channel pair, shared by the SSIM forward map
/// and its hand-derived adjoint.
pub(crate) struct SsimStats {
    pub mx: ScalarField,
    pub my: ScalarField,
    /// Raw second moment of `a` (window mean of a²).
    pub sxx_raw: ScalarField,
    /// Raw second moment of `b`.
    pub syy_raw: ScalarField,
    /// Raw cross moment (window mean of a·b).
    pub sxy_raw: ScalarField,
}

pub(crate) fn ssim_channel_stats(
    a: &ImageField,
    b: &ImageField,
    c: usize,
    window: usize,
) -> SsimStats {
    let pa = channel_plane(a, c);
    let pb = channel_plane(b, c);
    let (h, w) = (pa.height(), pa.width());
    let sq = |f: &ScalarField| ScalarField::from_fn(h, w, |i, j| f.get(i, j) * f.get(i, j));
    let prod = ScalarField::from_fn(h, w, |i, j| pa.get(i, j) * pb.get(i, j));
    SsimStats {
        mx: box_mean(&pa, window),
        my: box_mean(&pb, window),
        sxx_raw: box_mean(&sq(&pa), window),
        syy_raw: box_mean(&sq(&pb), window),
        sxy_raw: box_mean(&prod, window),
    }
}

/// Per-pixel mean over channels of |a - b|.
pub fn l1_map(a: &ImageField, b: &ImageField) -> Result<ScalarField> {
    check_pair(a, b)?;
    let inv_c = 1.0 / a.channels() as f64;
    Ok(ScalarField::from_fn(a.height(), a.width(), |i, j| {
        let mut acc = 0.0;
        for c in 0..a.channels() {
            acc += (a.get(i, j, c) - b.get(i, j, c)).abs();
        }
        acc * inv_c
    }))
}

/// Per-pixel `(1 - SSIM) / 2`, averaged over channels; values lie in [0, 1].
pub fn ssim_map(a: &ImageField, b: &ImageField, params: &PhotometricParams) -> Result<ScalarField> {
    check_pair(a, b)?;
    params.validate()?;
    let (h, w) = (a.height(), a.width());
    let inv_c = 1.0 / a.channels() as f64;
    let mut out = ScalarField::new(h, w);
    for c in 0..a.channels() {
        let st = ssim_channel_stats(a, b, c, params.ssim_window);
        for i in 0..h {
            for j in 0..w {
                let (mx, my) = (st.mx.get(i, j), st.my.get(i, j));
                let sxx = st.sxx_raw.get(i, j) - mx * mx;
                let syy = st.syy_raw.get(i, j) - my * my;
                let sxy = st.sxy_raw.get(i, j) - mx * my;
                let num = (2.0 * mx * my + params.ssim_c1) * (2.0 * sxy + params.ssim_c2);
                let den = (mx * mx + my * my + params.ssim_c1) * (sxx + syy + params.ssim_c2);
                let ssim = num / den;
                out.set(i, j, out.get(i, j) + (1.0 - ssim) * 0.5 * inv_c);
            }
        }
    }
    Ok(out)
}

/// Soft sign with dead-zone scale τ: `d / sqrt(d² + τ²)`.
#[inline]
pub(crate) fn soft_sign(d: f64, tau: f64) -> f64 {
    d / (d * d + tau * tau).sqrt()
}

/// Derivative of [`soft_sign`] in `d`: `τ² / (d² + τ²)^(3/2)`.
#[inline]
pub(crate) fn soft_sign_deriv(d: f64, tau: f64) -> f64 {
    let s = d * d + tau * tau;
    tau * tau / (s * s.sqrt())
}

/// Bounded per-element descriptor distance `Δ² / (Δ² + ε)` in [0, 1).
#[inline]
pub(crate) fn soft_hamming_element(delta: f64) -> f64 {
    let q = delta * delta;
    q / (q + CENSUS_DIST_EPS)
}

/// Patch offsets of a census descriptor (all but the center).
pub(crate) fn census_offsets(patch: usize) -> Vec<(isize, isize)> {
    let r = (patch / 2) as isize;
    let mut offs = Vec::with_capacity(patch * patch - 1);
    for di in -r..=r {
        for dj in -r..=r {
            if di != 0 || dj != 0 {
                offs.push((di, dj));
            }
        }
    }
    offs
}

/// Per-pixel mean soft Hamming distance between ternary census descriptors
/// of the two images' grayscale planes; values lie in [0, 1).
///
/// Patch samples are clamp-replicated at borders (the same policy the SSIM
/// window uses), so fields smaller than the patch still yield well-defined
/// (partially degenerate) descriptors; a replicated neighbor that collapses
/// onto the center contributes zero distance.
pub fn census_map(
    a: &ImageField,
    b: &ImageField,
    params: &PhotometricParams,
) -> Result<ScalarField> {
    check_pair(a, b)?;
    params.validate()?;
    let ga = a.channel_mean();
    let gb = b.channel_mean();
    let offs = census_offsets(params.census_patch);
    let inv_k = 1.0 / offs.len() as f64;
    let tau = params.census_threshold;
    let (h, w) = (a.height(), a.width());
    Ok(ScalarField::from_fn(h, w, |i, j| {
        let ca = ga.get(i, j);
        let cb = gb.get(i, j);
        let mut acc = 0.0;
        for &(di, dj) in &offs {
            let y = (i as isize + di).clamp(0, h as isize - 1) as usize;
            let x = (j as isize + dj).clamp(0, w as isize - 1) as usize;
            let da = soft_sign(ga.get(y, x) - ca, tau);
            let db = soft_sign(gb.get(y, x) - cb, tau);
            acc += soft_hamming_element(da - db);
        }
        acc * inv_k
    }))
}

/// Blended photometric loss: `α₁·mean(ssim) + α₂·mean(l1) + α₃·mean(census)`.
pub fn photometric_loss(
    a: &ImageField,
    b: &ImageField,
    params: &PhotometricParams,
) -> Result<f64> {
    let mean = |f: &ScalarField| f.data().iter().sum::<f64>() / f.data().len() as f64;
    let ssim = ssim_map(a, b, params)?;
    let l1 = l1_map(a, b)?;
    let census = census_map(a, b, params)?;
    Ok(params.alpha1 * mean(&ssim) + params.alpha2 * mean(&l1) + params.alpha3 * mean(&census))
}
