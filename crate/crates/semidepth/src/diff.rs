//! Hand-derived analytic gradients of the multi-scale objective, plus a
//! seeded finite-difference checker.
//!
//! Each loss term gets a reverse-order chain-rule pass with respect to the
//! per-scale inverse-depth fields:
//!
//! - **reconstruction**: the photometric cotangent with respect to the
//!   warped image (L1 sign, SSIM window-statistic adjoints chained through
//!   the box-filter transpose, soft-census scatter) contracts against the
//!   warp's disparity Jacobian;
//! - **lr**: L1 signs route both into the local field entry (including the
//!   sampling-coordinate motion it induces) and back through the bilinear
//!   corner weights of the opposite field;
//! - **supervised**: masked L1 sign over measured pixels;
//! - **smooth**: signed forward differences with the fixed edge weights.
//!
//! Scales never mix: the scale-`s` fields only enter the scale-`s` loss, so
//! the bundle's per-level gradients are exact for the total as well.
//!
//! The checker perturbs randomly chosen entries (seeded) and compares
//! central differences of the full loss against the analytic bundle,
//! rejecting probes that sit on an L1 kink, too close to an integer or
//! border sampling coordinate, or close enough to zero that the negative
//! probe would leave the valid disparity domain.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::field::{ImageField, Pyramid, ScalarField, SparseDepthMap};
use crate::losses::{
    image_grad_mag, inverse_depth_to_disparity, LossWeights, PreparedSample, StereoSample,
    NUM_SCALES,
};
use crate::photometric::{
    box_mean_adjoint, census_offsets, soft_sign, soft_sign_deriv, ssim_channel_stats,
    PhotometricParams, CENSUS_DIST_EPS,
};
use crate::sampler::{
    bilinear_sample, bilinear_sample_channel, corners, horizontal_slope, warp_horizontal_image,
    warp_jacobian_disparity_image, WarpDirection,
};

/// Gradients of the total loss with respect to both inverse-depth pyramids,
/// together with the loss value they were taken at.
#[derive(Debug, Clone)]
pub struct GradientBundle {
    pub d_rho_l: Pyramid<ScalarField>,
    pub d_rho_r: Pyramid<ScalarField>,
    pub value: f64,
}

/// L1 subgradient with the kink resolved to 0.
#[inline]
fn sign0(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Accumulates `coef · d(photometric_loss(reference, warped)) / d(warped)`
/// into `g_warped` (flat `h·w·channels` layout matching [`ImageField`]).
fn photometric_backward(
    reference: &ImageField,
    warped: &ImageField,
    params: &PhotometricParams,
    coef: f64,
    g_warped: &mut [f64],
) {
    let (h, w, ch) = (reference.height(), reference.width(), reference.channels());
    let n = (h * w) as f64;
    let inv_nc = 1.0 / (n * ch as f64);

    // L1: d|warped - reference| / d(warped) = sign, averaged as the map is.
    if params.alpha2 > 0.0 {
        let g = coef * params.alpha2 * inv_nc;
        for (k, gw) in g_warped.iter_mut().enumerate() {
            *gw += g * sign0(warped.data()[k] - reference.data()[k]);
        }
    }

    // SSIM: differentiate the per-pixel rational form in the window moments
    // that depend on `warped` (my, syy_raw, sxy_raw), then push each moment
    // cotangent back through the box filter's adjoint.
    if params.alpha1 > 0.0 {
        let g_ssim = -0.5 * coef * params.alpha1 * inv_nc;
        for c in 0..ch {
            let st = ssim_channel_stats(reference, warped, c, params.ssim_window);
            let mut g_my = ScalarField::new(h, w);
            let mut g_syy = ScalarField::new(h, w);
            let mut g_sxy = ScalarField::new(h, w);
            for i in 0..h {
                for j in 0..w {
                    let (mx, my) = (st.mx.get(i, j), st.my.get(i, j));
                    let sxx = st.sxx_raw.get(i, j) - mx * mx;
                    let syy = st.syy_raw.get(i, j) - my * my;
                    let sxy = st.sxy_raw.get(i, j) - mx * my;
                    let a1 = 2.0 * mx * my + params.ssim_c1;
                    let a2 = 2.0 * sxy + params.ssim_c2;
                    let b1 = mx * mx + my * my + params.ssim_c1;
                    let b2 = sxx + syy + params.ssim_c2;
                    let inv_b1b2 = 1.0 / (b1 * b2);
                    let ssim = a1 * a2 * inv_b1b2;
                    let d_my = 2.0 * mx * (a2 - a1) * inv_b1b2
                        - 2.0 * my * ssim * (1.0 / b1 - 1.0 / b2);
                    g_my.set(i, j, g_ssim * d_my);
                    g_syy.set(i, j, g_ssim * (-ssim / b2));
                    g_sxy.set(i, j, g_ssim * 2.0 * a1 * inv_b1b2);
                }
            }
            let t_my = box_mean_adjoint(&g_my, params.ssim_window);
            let t_syy = box_mean_adjoint(&g_syy, params.ssim_window);
            let t_sxy = box_mean_adjoint(&g_sxy, params.ssim_window);
            for i in 0..h {
                for j in 0..w {
                    let y = warped.get(i, j, c);
                    let x = reference.get(i, j, c);
                    g_warped[warped.idx(i, j, c)] += t_my.get(i, j)
                        + 2.0 * y * t_syy.get(i, j)
                        + x * t_sxy.get(i, j);
                }
            }
        }
    }

    // Census: scatter the soft-Hamming element derivative to the (clamped)
    // neighbor and center of each descriptor bit, then spread the grayscale
    // cotangent evenly over channels.
    if params.alpha3 > 0.0 {
        let ga = reference.channel_mean();
        let gb = warped.channel_mean();
        let offs = census_offsets(params.census_patch);
        let tau = params.census_threshold;
        let base = coef * params.alpha3 / (n * offs.len() as f64);
        let mut g_gray = ScalarField::new(h, w);
        for i in 0..h {
            for j in 0..w {
                let ca = ga.get(i, j);
                let cb = gb.get(i, j);
                for &(di, dj) in &offs {
                    let y = (i as isize + di).clamp(0, h as isize - 1) as usize;
                    let x = (j as isize + dj).clamp(0, w as isize - 1) as usize;
                    let db = gb.get(y, x) - cb;
                    let delta = soft_sign(ga.get(y, x) - ca, tau) - soft_sign(db, tau);
                    let q = delta * delta + CENSUS_DIST_EPS;
                    let d_elem = 2.0 * delta * CENSUS_DIST_EPS / (q * q);
                    let g = base * (-d_elem) * soft_sign_deriv(db, tau);
                    g_gray.set(y, x, g_gray.get(y, x) + g);
                    g_gray.set(i, j, g_gray.get(i, j) - g);
                }
            }
        }
        let inv_ch = 1.0 / ch as f64;
        for i in 0..h {
            for j in 0..w {
                let g = g_gray.get(i, j) * inv_ch;
                for c in 0..ch {
                    g_warped[warped.idx(i, j, c)] += g;
                }
            }
        }
    }
}

/// Reconstruction backward at one scale: photometric cotangent of each
/// warped view contracted with the warp's disparity Jacobian, chained
/// through `d = baseline · focal · ρ / 2^(s-1)`.
#[allow(clippy::too_many_arguments)]
fn reconstruction_backward(
    prep: &PreparedSample,
    rho_l: &ScalarField,
    rho_r: &ScalarField,
    params: &PhotometricParams,
    lambda1: f64,
    scale: usize,
    g_rho_l: &mut ScalarField,
    g_rho_r: &mut ScalarField,
) -> Result<()> {
    let c_s = prep.rig.baseline_m * prep.rig.focal_px / (1u64 << (scale - 1)) as f64;
    let left = prep.left.level(scale);
    let right = prep.right.level(scale);
    let sides = [
        (rho_l, right, left, WarpDirection::ReconstructLeftFromRight),
        (rho_r, left, right, WarpDirection::ReconstructRightFromLeft),
    ];
    for (side, (rho, source, reference, dir)) in sides.into_iter().enumerate() {
        let d = inverse_depth_to_disparity(rho, &prep.rig, scale)?;
        let warped = warp_horizontal_image(source, &d, dir)?;
        let jac = warp_jacobian_disparity_image(source, &d, dir)?;
        let mut g_warped = vec![0.0; warped.data().len()];
        photometric_backward(reference, &warped, params, lambda1, &mut g_warped);
        let g_rho = if side == 0 { &mut *g_rho_l } else { &mut *g_rho_r };
        for i in 0..rho.height() {
            for j in 0..rho.width() {
                let mut acc = 0.0;
                for c in 0..warped.channels() {
                    acc += g_warped[warped.idx(i, j, c)] * jac.get(i, j, c);
                }
                g_rho.set(i, j, g_rho.get(i, j) + c_s * acc);
            }
        }
    }
    Ok(())
}

/// Adds `v`, split by the bilinear corner weights, to a gradient field.
fn scatter_corners(g: &mut ScalarField, h: usize, w: usize, x: f64, y: f64, v: f64) {
    let c = corners(h, w, x, y);
    g.set(c.y0, c.x0, g.get(c.y0, c.x0) + v * (1.0 - c.fx) * (1.0 - c.fy));
    g.set(c.y0, c.x1, g.get(c.y0, c.x1) + v * c.fx * (1.0 - c.fy));
    g.set(c.y1, c.x0, g.get(c.y1, c.x0) + v * (1.0 - c.fx) * c.fy);
    g.set(c.y1, c.x1, g.get(c.y1, c.x1) + v * c.fx * c.fy);
}

/// Left-right consistency backward: each |ρ_a − sample(ρ_b)| term sends its
/// sign to the local entry (with the coordinate-motion correction from the
/// local disparity) and the negated, corner-weighted sign into the sampled
/// field.
fn lr_backward(
    rho_l: &ScalarField,
    rho_r: &ScalarField,
    c_s: f64,
    lambda2: f64,
    g_rho_l: &mut ScalarField,
    g_rho_r: &mut ScalarField,
) {
    let (h, w) = (rho_l.height(), rho_l.width());
    let coef = lambda2 / (h * w) as f64;
    for i in 0..h {
        for j in 0..w {
            // |ρ_l(i,j) − ρ_r(i, j − d_l)|: x moves at −c_s per unit ρ_l.
            let x = j as f64 - c_s * rho_l.get(i, j);
            let s = sign0(rho_l.get(i, j) - bilinear_sample(rho_r, x, i as f64));
            if s != 0.0 {
                let slope = horizontal_slope(rho_r, x, i as f64);
                g_rho_l.set(i, j, g_rho_l.get(i, j) + coef * s * (1.0 + c_s * slope));
                scatter_corners(g_rho_r, h, w, x, i as f64, -coef * s);
            }
            // |ρ_r(i,j) − ρ_l(i, j + d_r)|: x moves at +c_s per unit ρ_r.
            let x = j as f64 + c_s * rho_r.get(i, j);
            let s = sign0(rho_r.get(i, j) - bilinear_sample(rho_l, x, i as f64));
            if s != 0.0 {
                let slope = horizontal_slope(rho_l, x, i as f64);
                g_rho_r.set(i, j, g_rho_r.get(i, j) + coef * s * (1.0 - c_s * slope));
                scatter_corners(g_rho_l, h, w, x, i as f64, -coef * s);
            }
        }
    }
}

/// Supervised backward for one side: λ₃ · sign(ρ − 1/Z) / M over measured
/// pixels.
fn supervised_backward(
    rho: &ScalarField,
    gt: Option<&SparseDepthMap>,
    lambda3: f64,
    g_rho: &mut ScalarField,
) {
    let Some(gt) = gt else { return };
    let m = gt.count();
    if m == 0 {
        return;
    }
    let coef = lambda3 / m as f64;
    for i in 0..gt.height() {
        for j in 0..gt.width() {
            if gt.is_valid(i, j) {
                let s = sign0(rho.get(i, j) - 1.0 / gt.depth_at(i, j));
                g_rho.set(i, j, g_rho.get(i, j) + coef * s);
            }
        }
    }
}

/// Smoothness backward: each forward difference sends ±sign times its fixed
/// edge weight to the two entries it spans.
fn smooth_backward(rho: &ScalarField, image: &ImageField, lambda4: f64, g_rho: &mut ScalarField) {
    let (h, w) = (rho.height(), rho.width());
    let coef = lambda4 / (h * w) as f64;
    if w >= 2 {
        let wx = image_grad_mag(image, true);
        for i in 0..h {
            for j in 0..w - 1 {
                let s = sign0(rho.get(i, j + 1) - rho.get(i, j));
                if s != 0.0 {
                    let g = coef * s * (-wx.get(i, j)).exp();
                    g_rho.set(i, j + 1, g_rho.get(i, j + 1) + g);
                    g_rho.set(i, j, g_rho.get(i, j) - g);
                }
            }
        }
    }
    if h >= 2 {
        let wy = image_grad_mag(image, false);
        for i in 0..h - 1 {
            for j in 0..w {
                let s = sign0(rho.get(i + 1, j) - rho.get(i, j));
                if s != 0.0 {
                    let g = coef * s * (-wy.get(i, j)).exp();
                    g_rho.set(i + 1, j, g_rho.get(i + 1, j) + g);
                    g_rho.set(i, j, g_rho.get(i, j) - g);
                }
            }
        }
    }
}

/// Weighted per-scale loss value (same code path as the forward evaluation)
/// together with its gradients with respect to that scale's two fields.
pub(crate) fn scale_value_and_grad(
    prep: &PreparedSample,
    rho_l: &ScalarField,
    rho_r: &ScalarField,
    weights: &LossWeights,
    scale: usize,
) -> Result<(f64, ScalarField, ScalarField)> {
    let sl = prep.scale_loss(rho_l, rho_r, weights, scale)?;
    let (h, w) = (rho_l.height(), rho_l.width());
    let mut g_l = ScalarField::new(h, w);
    let mut g_r = ScalarField::new(h, w);
    if weights.lambda1 > 0.0 {
        reconstruction_backward(
            prep,
            rho_l,
            rho_r,
            &weights.photometric,
            weights.lambda1,
            scale,
            &mut g_l,
            &mut g_r,
        )?;
    }
    if weights.lambda2 > 0.0 {
        let c_s = prep.rig.baseline_m * prep.rig.focal_px / (1u64 << (scale - 1)) as f64;
        lr_backward(rho_l, rho_r, c_s, weights.lambda2, &mut g_l, &mut g_r);
    }
    if scale == 1 && weights.lambda3 > 0.0 {
        supervised_backward(rho_l, prep.gt_left.as_ref(), weights.lambda3, &mut g_l);
        supervised_backward(rho_r, prep.gt_right.as_ref(), weights.lambda3, &mut g_r);
    }
    if weights.lambda4 > 0.0 {
        smooth_backward(rho_l, prep.left.level(scale), weights.lambda4, &mut g_l);
        smooth_backward(rho_r, prep.right.level(scale), weights.lambda4, &mut g_r);
    }
    Ok((sl.weighted_total(weights), g_l, g_r))
}

fn check_finite(pyr: &Pyramid<ScalarField>, what: &str) -> Result<()> {
    for s in 1..=pyr.n_scales() {
        let level = pyr.level(s);
        for i in 0..level.height() {
            for j in 0..level.width() {
                if !level.get(i, j).is_finite() {
                    return Err(Error::NonFinite {
                        what: what.to_string(),
                        scale: s,
                        row: i,
                        col: j,
                    });
                }
            }
        }
    }
    Ok(())
}

pub(crate) fn value_and_grad_prepared(
    prep: &PreparedSample,
    rho_l: &Pyramid<ScalarField>,
    rho_r: &Pyramid<ScalarField>,
    weights: &LossWeights,
) -> Result<GradientBundle> {
    prep.check_rho(rho_l, rho_r)?;
    let mut levels_l = Vec::with_capacity(NUM_SCALES);
    let mut levels_r = Vec::with_capacity(NUM_SCALES);
    let mut value = 0.0;
    for s in 1..=NUM_SCALES {
        let (v, g_l, g_r) =
            scale_value_and_grad(prep, rho_l.level(s), rho_r.level(s), weights, s)?;
        value += v;
        levels_l.push(g_l);
        levels_r.push(g_r);
    }
    let bundle = GradientBundle {
        d_rho_l: Pyramid::from_levels(levels_l)?,
        d_rho_r: Pyramid::from_levels(levels_r)?,
        value,
    };
    check_finite(&bundle.d_rho_l, "left gradient")?;
    check_finite(&bundle.d_rho_r, "right gradient")?;
    Ok(bundle)
}

/// Evaluates the multi-scale loss and its exact analytic gradient with
/// respect to every inverse-depth entry at every scale. The value matches
/// `total_loss(..).total` bit for bit (same evaluation path).
pub fn value_and_grad(
    sample: &StereoSample,
    rho_l: &Pyramid<ScalarField>,
    rho_r: &Pyramid<ScalarField>,
    weights: &LossWeights,
) -> Result<GradientBundle> {
    let prep = PreparedSample::new(sample)?;
    value_and_grad_prepared(&prep, rho_l, rho_r, weights)
}

/// One randomly drawn gradient-check location.
#[derive(Debug, Clone, Copy)]
pub(crate) struct FdProbe {
    /// 0 = left field, 1 = right field.
    pub side: usize,
    pub scale: usize,
    pub i: usize,
    pub j: usize,
}

/// Generic central-difference loop shared by the public checker and the
/// test-side functional injections: draws seeded probes, filters them
/// through `accept`, and returns the maximum relative deviation between
/// `(f(+step) − f(−step)) / 2·step` and `analytic`.
pub(crate) fn fd_check_core<F, G, A>(
    rho_l: &Pyramid<ScalarField>,
    rho_r: &Pyramid<ScalarField>,
    mut eval: F,
    analytic: G,
    accept: A,
    step: f64,
    probes: usize,
    seed: u64,
) -> Result<f64>
where
    F: FnMut(&Pyramid<ScalarField>, &Pyramid<ScalarField>) -> Result<f64>,
    G: Fn(&FdProbe) -> f64,
    A: Fn(&FdProbe) -> bool,
{
    if !step.is_finite() || step <= 0.0 {
        return Err(Error::Domain(format!("fd step must be > 0, got {step}")));
    }
    if probes == 0 {
        return Err(Error::Domain("fd probe count must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut work_l = rho_l.clone();
    let mut work_r = rho_r.clone();
    let max_attempts = probes.saturating_mul(1000);
    let mut attempts = 0;
    let mut accepted = 0;
    let mut max_rel: f64 = 0.0;
    while accepted < probes {
        if attempts >= max_attempts {
            return Err(Error::ProbesExhausted {
                accepted,
                requested: probes,
                attempts,
            });
        }
        attempts += 1;
        let side = rng.random_range(0..2usize);
        let scale = rng.random_range(1..=NUM_SCALES);
        let level = if side == 0 {
            rho_l.level(scale)
        } else {
            rho_r.level(scale)
        };
        let probe = FdProbe {
            side,
            scale,
            i: rng.random_range(0..level.height()),
            j: rng.random_range(0..level.width()),
        };
        if !accept(&probe) {
            continue;
        }
        let original = level.get(probe.i, probe.j);
        let target = if side == 0 { &mut work_l } else { &mut work_r };
        target.level_mut(scale).set(probe.i, probe.j, original + step);
        let f_plus = eval(&work_l, &work_r)?;
        let target = if side == 0 { &mut work_l } else { &mut work_r };
        target.level_mut(scale).set(probe.i, probe.j, original - step);
        let f_minus = eval(&work_l, &work_r)?;
        let target = if side == 0 { &mut work_l } else { &mut work_r };
        target.level_mut(scale).set(probe.i, probe.j, original);
        let fd = (f_plus - f_minus) / (2.0 * step);
        let ga = analytic(&probe);
        let rel = (fd - ga).abs() / fd.abs().max(ga.abs()).max(1e-9);
        max_rel = max_rel.max(rel);
        accepted += 1;
    }
    Ok(max_rel)
}

/// True when the x-coordinate either lies beyond the clamp margin on both
/// probe evaluations (the sample is pinned to the border and constant) or
/// sits inside one interpolation cell with margin to spare.
fn coordinate_ok(x: f64, width: usize, reach: f64) -> bool {
    let hi = (width - 1) as f64;
    let margin = 0.05 + 2.0 * reach;
    if x <= -margin || x >= hi + margin {
        return true;
    }
    if x < margin || x > hi - margin {
        return false;
    }
    let frac = x - x.floor();
    frac >= margin && frac <= 1.0 - margin
}

/// True when the probe's sampling coordinate is pinned to a border far
/// enough that both FD evaluations read the identical clamped pixel.
fn fully_clamped(x: f64, width: usize, reach: f64) -> bool {
    let margin = 0.05 + 2.0 * reach;
    x <= -margin || x >= (width - 1) as f64 + margin
}

/// Rejection predicate: every |·| argument the probe can move must be away
/// from its kink, and every sampling coordinate it displaces must stay
/// within one interpolation cell (or stay fully clamped).
fn probe_acceptable(
    prep: &PreparedSample,
    rho_l: &Pyramid<ScalarField>,
    rho_r: &Pyramid<ScalarField>,
    weights: &LossWeights,
    step: f64,
    p: &FdProbe,
) -> bool {
    let c_s = prep.rig.baseline_m * prep.rig.focal_px / (1u64 << (p.scale - 1)) as f64;
    let (rho_a, rho_b, img_a, img_b, sign, gt_a) = if p.side == 0 {
        (
            rho_l.level(p.scale),
            rho_r.level(p.scale),
            prep.left.level(p.scale),
            prep.right.level(p.scale),
            -1.0,
            prep.gt_left.as_ref(),
        )
    } else {
        (
            rho_r.level(p.scale),
            rho_l.level(p.scale),
            prep.right.level(p.scale),
            prep.left.level(p.scale),
            1.0,
            prep.gt_right.as_ref(),
        )
    };
    let (h, w) = (rho_a.height(), rho_a.width());
    let (i, j) = (p.i, p.j);
    let rho_margin = (50.0 * step).max(1e-3);
    let reach = c_s * step;
    let img_margin = (2.5 * reach).max(0.01);
    let warps_active = weights.lambda1 > 0.0 || weights.lambda2 > 0.0;

    if warps_active {
        // The −step probe must keep the disparity non-negative.
        if rho_a.get(i, j) <= 2.0 * step {
            return false;
        }
        let x = j as f64 + sign * c_s * rho_a.get(i, j);
        if !coordinate_ok(x, w, reach) {
            return false;
        }
        let pinned = fully_clamped(x, w, reach);
        if weights.lambda1 > 0.0 && !pinned {
            // The probe's own warped pixel feeds an L1 term per channel.
            for c in 0..img_a.channels() {
                let warped = bilinear_sample_channel(img_b, c, x, i as f64);
                if (warped - img_a.get(i, j, c)).abs() <= img_margin {
                    return false;
                }
            }
        }
        if weights.lambda2 > 0.0 {
            // Local consistency term |ρ_a − sample(ρ_b)|.
            if (rho_a.get(i, j) - bilinear_sample(rho_b, x, i as f64)).abs() <= rho_margin {
                return false;
            }
            // Remote terms of the opposite side whose bilinear corners read
            // this entry; the sampled value moves linearly with the probe,
            // so only their |·| kinks need margin.
            for j2 in 0..w {
                let x2 = j2 as f64 - sign * c_s * rho_b.get(i, j2);
                let c2 = corners(h, w, x2, i as f64);
                if c2.x0 == j || c2.x1 == j {
                    let sampled = bilinear_sample(rho_a, x2, i as f64);
                    if (rho_b.get(i, j2) - sampled).abs() <= rho_margin {
                        return false;
                    }
                }
            }
        }
    }
    if p.scale == 1 && weights.lambda3 > 0.0 {
        if let Some(gt) = gt_a {
            if gt.is_valid(i, j)
                && (rho_a.get(i, j) - 1.0 / gt.depth_at(i, j)).abs() <= rho_margin
            {
                return false;
            }
        }
    }
    if weights.lambda4 > 0.0 {
        let kinked = |a: f64, b: f64| (a - b).abs() <= rho_margin;
        if j >= 1 && kinked(rho_a.get(i, j), rho_a.get(i, j - 1)) {
            return false;
        }
        if j + 1 < w && kinked(rho_a.get(i, j + 1), rho_a.get(i, j)) {
            return false;
        }
        if i >= 1 && kinked(rho_a.get(i, j), rho_a.get(i - 1, j)) {
            return false;
        }
        if i + 1 < h && kinked(rho_a.get(i + 1, j), rho_a.get(i, j)) {
            return false;
        }
    }
    true
}

/// Seeded finite-difference audit of [`value_and_grad`]: draws `probes`
/// accepted entries, central-differences the full loss at ±`step`, and
/// returns the maximum relative deviation from the analytic gradient.
pub fn fd_check(
    sample: &StereoSample,
    rho_l: &Pyramid<ScalarField>,
    rho_r: &Pyramid<ScalarField>,
    weights: &LossWeights,
    step: f64,
    probes: usize,
    seed: u64,
) -> Result<f64> {
    let prep = PreparedSample::new(sample)?;
    let bundle = value_and_grad_prepared(&prep, rho_l, rho_r, weights)?;
    fd_check_core(
        rho_l,
        rho_r,
        |l, r| prep.total_loss(l, r, weights).map(|b| b.total),
        |p| {
            let g = if p.side == 0 {
                &bundle.d_rho_l
            } else {
                &bundle.d_rho_r
            };
            g.level(p.scale).get(p.i, p.j)
        },
        |p| probe_acceptable(&prep, rho_l, rho_r, weights, step, p),
        step,
        probes,
        seed,
    )
}
