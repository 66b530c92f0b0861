//! The multi-scale stereo objective over per-pixel inverse-depth fields.
//!
//! For a rectified pair with per-scale inverse-depth fields ρ_l, ρ_r the
//! total loss sums four weighted terms over the pyramid scales:
//!
//! - **reconstruction**: photometric dissimilarity between each image and
//!   its warp-reconstruction from the opposite view;
//! - **lr**: left-right consistency — each inverse-depth field compared
//!   against the opposite field warped into its frame;
//! - **supervised**: masked L1 between predicted inverse depth and sparse
//!   ground-truth inverse depth (1/Z), applied at full resolution only;
//! - **smooth**: edge-aware first-order smoothness, forward differences
//!   weighted by `exp(-|∂I|)`.
//!
//! Inverse depth converts to pixel disparity as `d = baseline · focal · ρ`,
//! divided by `2^(s-1)` at pyramid scale `s` to account for the coarser
//! pixel grid. Per-scale terms are averaged over the pixel count of their
//! own scale, which keeps the per-scale magnitudes comparable.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{
    build_pyramid, grad_x, grad_y, CameraRig, ImageField, Pyramid, ScalarField, SparseDepthMap,
};
use crate::photometric::{photometric_loss, PhotometricParams};
use crate::sampler::{
    bilinear_sample, warp_horizontal_image, WarpDirection,
};

/// Number of pyramid scales the total loss runs over.
pub const NUM_SCALES: usize = 4;

/// Term weights for the total objective, plus the photometric blend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossWeights {
    /// Reconstruction term weight.
    pub lambda1: f64,
    /// Left-right consistency weight.
    pub lambda2: f64,
    /// Supervised inverse-depth weight.
    pub lambda3: f64,
    /// Smoothness weight.
    pub lambda4: f64,
    pub photometric: PhotometricParams,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda1: 1.0,
            lambda2: 1.0,
            lambda3: 150.0,
            lambda4: 0.1,
            photometric: PhotometricParams::default(),
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("lambda1", self.lambda1),
            ("lambda2", self.lambda2),
            ("lambda3", self.lambda3),
            ("lambda4", self.lambda4),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidConfig(format!(
                    "{name} must be finite and >= 0, got {v}"
                )));
            }
        }
        self.photometric.validate()
    }
}

/// A rectified stereo training sample: image pair, optional sparse ground
/// truth per view, and the rig geometry.
#[derive(Debug, Clone)]
pub struct StereoSample {
    pub left: ImageField,
    pub right: ImageField,
    pub gt_left: Option<SparseDepthMap>,
    pub gt_right: Option<SparseDepthMap>,
    pub rig: CameraRig,
}

impl StereoSample {
    pub fn validate(&self) -> Result<()> {
        self.rig.validate()?;
        let (h, w) = (self.left.height(), self.left.width());
        if self.right.height() != h
            || self.right.width() != w
            || self.right.channels() != self.left.channels()
        {
            return Err(Error::ShapeMismatch(format!(
                "left {}x{}x{} vs right {}x{}x{}",
                h,
                w,
                self.left.channels(),
                self.right.height(),
                self.right.width(),
                self.right.channels()
            )));
        }
        if self.rig.height != h || self.rig.width != w {
            return Err(Error::ShapeMismatch(format!(
                "rig frame {}x{} vs image {}x{}",
                self.rig.height, self.rig.width, h, w
            )));
        }
        for (name, gt) in [("gt_left", &self.gt_left), ("gt_right", &self.gt_right)] {
            if let Some(gt) = gt {
                if gt.height() != h || gt.width() != w {
                    return Err(Error::ShapeMismatch(format!(
                        "{name} {}x{} vs image {}x{}",
                        gt.height(),
                        gt.width(),
                        h,
                        w
                    )));
                }
            }
        }
        Ok(())
    }

    /// The mirrored-and-swapped sample: views exchanged and every field
    /// flipped along x. Every loss term is invariant under this transform
    /// (together with [`mirror_swap_pyramids`] on the inverse-depth fields).
    pub fn mirror_swap(&self) -> Self {
        Self {
            left: self.right.mirror_x(),
            right: self.left.mirror_x(),
            gt_left: self.gt_right.as_ref().map(|g| g.mirror_x()),
            gt_right: self.gt_left.as_ref().map(|g| g.mirror_x()),
            rig: self.rig.clone(),
        }
    }
}

/// Mirrors and swaps a pair of per-scale inverse-depth pyramids, matching
/// [`StereoSample::mirror_swap`].
pub fn mirror_swap_pyramids(
    rho_l: &Pyramid<ScalarField>,
    rho_r: &Pyramid<ScalarField>,
) -> (Pyramid<ScalarField>, Pyramid<ScalarField>) {
    let flip = |p: &Pyramid<ScalarField>| {
        Pyramid::from_levels(p.levels().iter().map(|l| l.mirror_x()).collect()).unwrap()
    };
    (flip(rho_r), flip(rho_l))
}

/// Raw (unweighted) per-term values at one scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScaleLoss {
    pub reconstruction: f64,
    pub lr: f64,
    pub supervised: f64,
    pub smooth: f64,
}

impl ScaleLoss {
    pub fn weighted_total(&self, w: &LossWeights) -> f64 {
        w.lambda1 * self.reconstruction
            + w.lambda2 * self.lr
            + w.lambda3 * self.supervised
            + w.lambda4 * self.smooth
    }
}

/// Weighted loss decomposition across terms and scales.
///
/// Term fields hold λ-weighted sums over scales, `per_scale[s-1]` the
/// λ-weighted total of scale `s`, and `total` the sum of `per_scale`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LossBreakdown {
    pub reconstruction: f64,
    pub lr: f64,
    pub supervised: f64,
    pub smooth: f64,
    pub per_scale: [f64; NUM_SCALES],
    pub total: f64,
}

/// Converts inverse depth to pixel disparity at a 1-based pyramid scale:
/// `d = baseline · focal · ρ / 2^(scale-1)`.
pub fn inverse_depth_to_disparity(
    rho: &ScalarField,
    rig: &CameraRig,
    scale: usize,
) -> Result<ScalarField> {
    check_scale(scale)?;
    let factor = rig.baseline_m * rig.focal_px / (1u64 << (scale - 1)) as f64;
    let mut out = ScalarField::new(rho.height(), rho.width());
    for (k, &r) in rho.data().iter().enumerate() {
        if !r.is_finite() || r < 0.0 {
            return Err(Error::Domain(format!(
                "inverse depth must be finite and >= 0, got {r} at flat index {k}"
            )));
        }
        out.data_mut()[k] = factor * r;
    }
    Ok(out)
}

fn check_scale(scale: usize) -> Result<()> {
    if scale == 0 || scale > NUM_SCALES {
        return Err(Error::Domain(format!(
            "scale must be in 1..={NUM_SCALES}, got {scale}"
        )));
    }
    Ok(())
}

fn check_same_shape(a: &ScalarField, b: &ScalarField, what: &str) -> Result<()> {
    if a.height() != b.height() || a.width() != b.width() {
        return Err(Error::ShapeMismatch(format!(
            "{what}: {}x{} vs {}x{}",
            a.height(),
            a.width(),
            b.height(),
            b.width()
        )));
    }
    Ok(())
}

/// Photometric reconstruction term at one scale: the blended photometric
/// loss of each view against its reconstruction from the opposite view,
/// summed over both views.
pub fn e_reconstruction(
    left: &ImageField,
    right: &ImageField,
    rho_l: &ScalarField,
    rho_r: &ScalarField,
    rig: &CameraRig,
    params: &PhotometricParams,
    scale: usize,
) -> Result<f64> {
    let d_l = inverse_depth_to_disparity(rho_l, rig, scale)?;
    let d_r = inverse_depth_to_disparity(rho_r, rig, scale)?;
    let recon_l = warp_horizontal_image(right, &d_l, WarpDirection::ReconstructLeftFromRight)?;
    let recon_r = warp_horizontal_image(left, &d_r, WarpDirection::ReconstructRightFromLeft)?;
    Ok(photometric_loss(left, &recon_l, params)? + photometric_loss(right, &recon_r, params)?)
}

/// Left-right consistency term at one scale:
/// `(1/N) Σ |ρ_l - ρ_r(j - d_l)| + |ρ_r - ρ_l(j + d_r)|`.
pub fn e_lr(
    rho_l: &ScalarField,
    rho_r: &ScalarField,
    rig: &CameraRig,
    scale: usize,
) -> Result<f64> {
    check_same_shape(rho_l, rho_r, "e_lr inverse-depth fields")?;
    let d_l = inverse_depth_to_disparity(rho_l, rig, scale)?;
    let d_r = inverse_depth_to_disparity(rho_r, rig, scale)?;
    let (h, w) = (rho_l.height(), rho_l.width());
    let mut acc = 0.0;
    for i in 0..h {
        for j in 0..w {
            let x_l = j as f64 - d_l.get(i, j);
            let x_r = j as f64 + d_r.get(i, j);
            acc += (rho_l.get(i, j) - bilinear_sample(rho_r, x_l, i as f64)).abs();
            acc += (rho_r.get(i, j) - bilinear_sample(rho_l, x_r, i as f64)).abs();
        }
    }
    Ok(acc / (h * w) as f64)
}

/// Masked L1 between predicted inverse depth and ground-truth inverse depth
/// (1/Z), each available side normalized by its own measurement count.
pub fn e_supervised(
    rho_l: &ScalarField,
    rho_r: &ScalarField,
    gt_left: Option<&SparseDepthMap>,
    gt_right: Option<&SparseDepthMap>,
) -> Result<f64> {
    let mut total = 0.0;
    let mut any = false;
    for (rho, gt, side) in [
        (rho_l, gt_left, "left"),
        (rho_r, gt_right, "right"),
    ] {
        let Some(gt) = gt else { continue };
        if gt.height() != rho.height() || gt.width() != rho.width() {
            return Err(Error::ShapeMismatch(format!(
                "gt_{side} {}x{} vs inverse depth {}x{}",
                gt.height(),
                gt.width(),
                rho.height(),
                rho.width()
            )));
        }
        let m = gt.count();
        if m == 0 {
            continue;
        }
        any = true;
        let mut acc = 0.0;
        for i in 0..gt.height() {
            for j in 0..gt.width() {
                if gt.is_valid(i, j) {
                    acc += (rho.get(i, j) - 1.0 / gt.depth_at(i, j)).abs();
                }
            }
        }
        total += acc / m as f64;
    }
    if !any {
        return Err(Error::Degenerate(
            "supervised term needs ground truth on at least one side".into(),
        ));
    }
    Ok(total)
}

/// Mean absolute forward difference of each image channel, along x or y.
pub(crate) fn image_grad_mag(image: &ImageField, along_x: bool) -> ScalarField {
    let (h, w) = (image.height(), image.width());
    let inv_c = 1.0 / image.channels() as f64;
    ScalarField::from_fn(h, w, |i, j| {
        if along_x && j + 1 >= w || !along_x && i + 1 >= h {
            return 0.0;
        }
        let (i2, j2) = if along_x { (i, j + 1) } else { (i + 1, j) };
        let mut acc = 0.0;
        for c in 0..image.channels() {
            acc += (image.get(i2, j2, c) - image.get(i, j, c)).abs();
        }
        acc * inv_c
    })
}

/// Edge-aware smoothness for one view:
/// `(1/N) Σ |∂x ρ| e^(-|∂x I|) + |∂y ρ| e^(-|∂y I|)` with forward
/// differences (zero along the last column/row). A direction with extent 1
/// has only last-row/column entries, so it contributes exactly zero.
pub fn e_smooth(rho: &ScalarField, image: &ImageField) -> Result<f64> {
    if image.height() != rho.height() || image.width() != rho.width() {
        return Err(Error::ShapeMismatch(format!(
            "image {}x{} vs inverse depth {}x{}",
            image.height(),
            image.width(),
            rho.height(),
            rho.width()
        )));
    }
    let n = (rho.height() * rho.width()) as f64;
    let mut acc = 0.0;
    if rho.width() >= 2 {
        let gx = grad_x(rho)?;
        let wx = image_grad_mag(image, true);
        for k in 0..gx.data().len() {
            acc += gx.data()[k].abs() * (-wx.data()[k]).exp();
        }
    }
    if rho.height() >= 2 {
        let gy = grad_y(rho)?;
        let wy = image_grad_mag(image, false);
        for k in 0..gy.data().len() {
            acc += gy.data()[k].abs() * (-wy.data()[k]).exp();
        }
    }
    Ok(acc / n)
}

/// All four raw term values at one scale. The supervised term is evaluated
/// only at scale 1 (and only when `weights.lambda3 > 0`); disabled terms
/// (zero weight) are skipped entirely and reported as exact zeros.
#[allow(clippy::too_many_arguments)]
pub fn scale_loss(
    left: &ImageField,
    right: &ImageField,
    gt_left: Option<&SparseDepthMap>,
    gt_right: Option<&SparseDepthMap>,
    rho_l: &ScalarField,
    rho_r: &ScalarField,
    rig: &CameraRig,
    weights: &LossWeights,
    scale: usize,
) -> Result<ScaleLoss> {
    check_scale(scale)?;
    weights.validate()?;
    let reconstruction = if weights.lambda1 > 0.0 {
        e_reconstruction(left, right, rho_l, rho_r, rig, &weights.photometric, scale)?
    } else {
        0.0
    };
    let lr = if weights.lambda2 > 0.0 {
        e_lr(rho_l, rho_r, rig, scale)?
    } else {
        0.0
    };
    let supervised = if scale == 1 && weights.lambda3 > 0.0 {
        e_supervised(rho_l, rho_r, gt_left, gt_right)?
    } else {
        0.0
    };
    let smooth = if weights.lambda4 > 0.0 {
        e_smooth(rho_l, left)? + e_smooth(rho_r, right)?
    } else {
        0.0
    };
    Ok(ScaleLoss {
        reconstruction,
        lr,
        supervised,
        smooth,
    })
}

/// Validates that an inverse-depth pyramid matches an image pyramid's
/// per-level dimensions.
fn check_pyramid_dims(
    rho: &Pyramid<ScalarField>,
    images: &Pyramid<ImageField>,
    side: &str,
) -> Result<()> {
    if rho.n_scales() != NUM_SCALES {
        return Err(Error::ShapeMismatch(format!(
            "{side} inverse-depth pyramid has {} levels, need {NUM_SCALES}",
            rho.n_scales()
        )));
    }
    for s in 1..=NUM_SCALES {
        let (r, im) = (rho.level(s), images.level(s));
        if r.height() != im.height() || r.width() != im.width() {
            return Err(Error::ShapeMismatch(format!(
                "{side} inverse depth at scale {s} is {}x{}, image level is {}x{}",
                r.height(),
                r.width(),
                im.height(),
                im.width()
            )));
        }
    }
    Ok(())
}

/// Image pyramids plus per-scale ground truth for repeated loss evaluation.
pub(crate) struct PreparedSample {
    pub left: Pyramid<ImageField>,
    pub right: Pyramid<ImageField>,
    pub gt_left: Option<SparseDepthMap>,
    pub gt_right: Option<SparseDepthMap>,
    pub rig: CameraRig,
}

impl PreparedSample {
    pub fn new(sample: &StereoSample) -> Result<Self> {
        sample.validate()?;
        Ok(Self {
            left: build_pyramid(&sample.left, NUM_SCALES)?,
            right: build_pyramid(&sample.right, NUM_SCALES)?,
            gt_left: sample.gt_left.clone(),
            gt_right: sample.gt_right.clone(),
            rig: sample.rig.clone(),
        })
    }

    pub fn scale_loss(
        &self,
        rho_l: &ScalarField,
        rho_r: &ScalarField,
        weights: &LossWeights,
        scale: usize,
    ) -> Result<ScaleLoss> {
        scale_loss(
            self.left.level(scale),
            self.right.level(scale),
            self.gt_left.as_ref(),
            self.gt_right.as_ref(),
            rho_l,
            rho_r,
            &self.rig,
            weights,
            scale,
        )
    }

    pub fn check_rho(
        &self,
        rho_l: &Pyramid<ScalarField>,
        rho_r: &Pyramid<ScalarField>,
    ) -> Result<()> {
        check_pyramid_dims(rho_l, &self.left, "left")?;
        check_pyramid_dims(rho_r, &self.right, "right")
    }

    pub fn total_loss(
        &self,
        rho_l: &Pyramid<ScalarField>,
        rho_r: &Pyramid<ScalarField>,
        weights: &LossWeights,
    ) -> Result<LossBreakdown> {
        self.check_rho(rho_l, rho_r)?;
        let mut breakdown = LossBreakdown {
            reconstruction: 0.0,
            lr: 0.0,
            supervised: 0.0,
            smooth: 0.0,
            per_scale: [0.0; NUM_SCALES],
            total: 0.0,
        };
        for s in 1..=NUM_SCALES {
            let sl = self.scale_loss(rho_l.level(s), rho_r.level(s), weights, s)?;
            breakdown.reconstruction += weights.lambda1 * sl.reconstruction;
            breakdown.lr += weights.lambda2 * sl.lr;
            breakdown.supervised += weights.lambda3 * sl.supervised;
            breakdown.smooth += weights.lambda4 * sl.smooth;
            breakdown.per_scale[s - 1] = sl.weighted_total(weights);
        }
        breakdown.total = breakdown.per_scale.iter().sum();
        Ok(breakdown)
    }
}

/// The full multi-scale objective: weighted per-scale losses over 4-level
/// pyramids of both images and both inverse-depth fields.
pub fn total_loss(
    sample: &StereoSample,
    rho_l: &Pyramid<ScalarField>,
    rho_r: &Pyramid<ScalarField>,
    weights: &LossWeights,
) -> Result<LossBreakdown> {
    PreparedSample::new(sample)?.total_loss(rho_l, rho_r, weights)
}
