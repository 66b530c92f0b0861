//! Bilinear sampling and differentiable horizontal warping.
//!
//! Rectified stereo moves pixels only along rows: a left-view pixel (i, j)
//! with disparity d corresponds to (i, j - d) in the right view, and a
//! right-view pixel to (i, j + d) in the left view. Warping builds a full
//! reconstruction by bilinearly sampling the opposite image at those
//! fractional coordinates, with out-of-range coordinates clamped to the edge.
//! The warp's derivative with respect to the local disparity entry is the
//! (sign-adjusted) horizontal interpolation slope, which is what lets the
//! photometric terms drive inverse depth by gradient descent.

use crate::error::{Error, Result};
use crate::field::{ImageField, ScalarField};

/// Which view is being reconstructed, i.e. which sign the disparity takes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WarpDirection {
    /// Rebuild the left view by sampling the right image at `j - d`.
    ReconstructLeftFromRight,
    /// Rebuild the right view by sampling the left image at `j + d`.
    ReconstructRightFromLeft,
}

impl WarpDirection {
    /// Sign applied to the disparity when forming the sample x-coordinate.
    #[inline]
    pub fn disparity_sign(self) -> f64 {
        match self {
            WarpDirection::ReconstructLeftFromRight => -1.0,
            WarpDirection::ReconstructRightFromLeft => 1.0,
        }
    }
}

/// Interpolation corners and weights for one clamped bilinear lookup.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Corners {
    pub x0: usize,
    pub x1: usize,
    pub y0: usize,
    pub y1: usize,
    pub fx: f64,
    pub fy: f64,
    /// True when the x-coordinate lies strictly inside (0, width-1); the
    /// horizontal slope (and hence the warp Jacobian) is zero elsewhere.
    pub x_interior: bool,
}

pub(crate) fn corners(height: usize, width: usize, x: f64, y: f64) -> Corners {
    let max_x = (width - 1) as f64;
    let max_y = (height - 1) as f64;
    let xc = x.clamp(0.0, max_x);
    let yc = y.clamp(0.0, max_y);
    let x0f = xc.floor();
    let y0f = yc.floor();
    let x0 = x0f as usize;
    let y0 = y0f as usize;
    Corners {
        x0,
        x1: (x0 + 1).min(width - 1),
        y0,
        y1: (y0 + 1).min(height - 1),
        fx: xc - x0f,
        fy: yc - y0f,
        x_interior: x > 0.0 && x < max_x,
    }
}

/// Clamp-to-edge bilinear interpolation of a scalar field at (x, y).
pub fn bilinear_sample(field: &ScalarField, x: f64, y: f64) -> f64 {
    let c = corners(field.height(), field.width(), x, y);
    let v00 = field.get(c.y0, c.x0);
    let v01 = field.get(c.y0, c.x1);
    let v10 = field.get(c.y1, c.x0);
    let v11 = field.get(c.y1, c.x1);
    let top = (1.0 - c.fx) * v00 + c.fx * v01;
    let bot = (1.0 - c.fx) * v10 + c.fx * v11;
    (1.0 - c.fy) * top + c.fy * bot
}

/// Clamp-to-edge bilinear interpolation of one image channel at (x, y).
pub fn bilinear_sample_channel(image: &ImageField, channel: usize, x: f64, y: f64) -> f64 {
    let c = corners(image.height(), image.width(), x, y);
    let v00 = image.get(c.y0, c.x0, channel);
    let v01 = image.get(c.y0, c.x1, channel);
    let v10 = image.get(c.y1, c.x0, channel);
    let v11 = image.get(c.y1, c.x1, channel);
    let top = (1.0 - c.fx) * v00 + c.fx * v01;
    let bot = (1.0 - c.fx) * v10 + c.fx * v11;
    (1.0 - c.fy) * top + c.fy * bot
}

fn check_warp_inputs(
    src_h: usize,
    src_w: usize,
    disparity: &ScalarField,
) -> Result<()> {
    if disparity.height() != src_h || disparity.width() != src_w {
        return Err(Error::ShapeMismatch(format!(
            "disparity {}x{} does not match source {}x{}",
            disparity.height(),
            disparity.width(),
            src_h,
            src_w
        )));
    }
    for (k, &d) in disparity.data().iter().enumerate() {
        if !d.is_finite() || d < 0.0 {
            return Err(Error::Domain(format!(
                "disparity must be finite and >= 0, got {d} at flat index {k}"
            )));
        }
    }
    Ok(())
}

/// Reconstructs a view by sampling `source` along rows at `j ± d[i, j]`.
pub fn warp_horizontal(
    source: &ScalarField,
    disparity: &ScalarField,
    dir: WarpDirection,
) -> Result<ScalarField> {
    check_warp_inputs(source.height(), source.width(), disparity)?;
    let sign = dir.disparity_sign();
    let mut out = ScalarField::new(source.height(), source.width());
    for i in 0..source.height() {
        for j in 0..source.width() {
            let x = j as f64 + sign * disparity.get(i, j);
            out.set(i, j, bilinear_sample(source, x, i as f64));
        }
    }
    Ok(out)
}

/// Image-valued variant of [`warp_horizontal`] (all channels share weights).
pub fn warp_horizontal_image(
    source: &ImageField,
    disparity: &ScalarField,
    dir: WarpDirection,
) -> Result<ImageField> {
    check_warp_inputs(source.height(), source.width(), disparity)?;
    let sign = dir.disparity_sign();
    let mut out = ImageField::new(source.height(), source.width(), source.channels())?;
    for i in 0..source.height() {
        for j in 0..source.width() {
            let x = j as f64 + sign * disparity.get(i, j);
            let c = corners(source.height(), source.width(), x, i as f64);
            for ch in 0..source.channels() {
                let v00 = source.get(c.y0, c.x0, ch);
                let v01 = source.get(c.y0, c.x1, ch);
                let v10 = source.get(c.y1, c.x0, ch);
                let v11 = source.get(c.y1, c.x1, ch);
                let top = (1.0 - c.fx) * v00 + c.fx * v01;
                let bot = (1.0 - c.fx) * v10 + c.fx * v11;
                out.set(i, j, ch, (1.0 - c.fy) * top + c.fy * bot);
            }
        }
    }
    Ok(out)
}

/// Horizontal interpolation slope of `source` at clamped coordinate `x` on
/// row-interpolated position `y`; zero when `x` falls on or outside the
/// horizontal border (the clamped sample no longer moves with `x`).
#[inline]
pub(crate) fn horizontal_slope(source: &ScalarField, x: f64, y: f64) -> f64 {
    let c = corners(source.height(), source.width(), x, y);
    if !c.x_interior {
        return 0.0;
    }
    let top = source.get(c.y0, c.x1) - source.get(c.y0, c.x0);
    let bot = source.get(c.y1, c.x1) - source.get(c.y1, c.x0);
    (1.0 - c.fy) * top + c.fy * bot
}

/// Per-pixel derivative of [`warp_horizontal`] output with respect to the
/// local disparity entry: the sign-adjusted horizontal interpolation slope,
/// zero where the sample is clamped at a border.
pub fn warp_jacobian_disparity(
    source: &ScalarField,
    disparity: &ScalarField,
    dir: WarpDirection,
) -> Result<ScalarField> {
    check_warp_inputs(source.height(), source.width(), disparity)?;
    let sign = dir.disparity_sign();
    let mut out = ScalarField::new(source.height(), source.width());
    for i in 0..source.height() {
        for j in 0..source.width() {
            let x = j as f64 + sign * disparity.get(i, j);
            out.set(i, j, sign * horizontal_slope(source, x, i as f64));
        }
    }
    Ok(out)
}

/// Per-channel variant of [`warp_jacobian_disparity`] for image sources.
pub fn warp_jacobian_disparity_image(
    source: &ImageField,
    disparity: &ScalarField,
    dir: WarpDirection,
) -> Result<ImageField> {
    check_warp_inputs(source.height(), source.width(), disparity)?;
    let sign = dir.disparity_sign();
    let mut out = ImageField::new(source.height(), source.width(), source.channels())?;
    for i in 0..source.height() {
        for j in 0..source.width() {
            let x = j as f64 + sign * disparity.get(i, j);
            let c = corners(source.height(), source.width(), x, i as f64);
            if !c.x_interior {
                continue;
            }
            for ch in 0..source.channels() {
                let top = source.get(c.y0, c.x1, ch) - source.get(c.y0, c.x0, ch);
                let bot = source.get(c.y1, c.x1, ch) - source.get(c.y1, c.x0, ch);
                out.set(i, j, ch, sign * ((1.0 - c.fy) * top + c.fy * bot));
            }
        }
    }
    Ok(out)
}
