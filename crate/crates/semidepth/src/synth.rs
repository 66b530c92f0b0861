//! Deterministic synthetic stereo scenes with exact ground truth.
//!
//! A scene is a stack of slanted planes: a full-frame background plus
//! axis-aligned boxes, each carrying an affine inverse-depth profile and a
//! band-limited value-noise texture. Both views are rendered analytically
//! from the same geometry — the right view resamples each surface along
//! its true disparity — so every derived quantity (depth, visibility,
//! reprojection residual) has a closed form to test against.
//!
//! A displaced LiDAR sensor is simulated by ray-casting the same planes
//! from the rig's sensor origin on a sparse scan grid. Because the sensor
//! sits off the camera center, background returns near depth edges project
//! into pixels the camera sees as foreground; those leaks are labeled, so
//! the raw projected map, the artifact labels, and the clean (camera
//! -visible, exact-depth) map form a supervised oracle for the occlusion
//! filter and for raw-vs-clean training comparisons.
//!
//! Everything is a pure function of the spec: textures use integer lattice
//! hashing (FNV-1a) with smoothstep interpolation and no transcendentals,
//! so outputs are bit-identical across runs and platforms.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{CameraRig, ImageField, ScalarField, SparseDepthMap};
use crate::lidar::{project_points, LidarPoint, PointCloud};
use crate::losses::StereoSample;
use crate::sampler::{warp_horizontal_image, WarpDirection};

/// Raw depths above `(1 + tol) ·` true depth are labeled occlusion leaks.
pub const ARTIFACT_REL_TOL: f64 = 0.02;

/// Objects with at least this much texture contrast count as textured.
pub const TEXTURED_MIN_CONTRAST: f64 = 0.1;

/// One band of lattice value noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TextureOctave {
    pub wavelength_px: f64,
    pub amplitude: f64,
}

/// Procedural texture: a sum of noise octaves around each object's albedo.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TextureParams {
    pub octaves: Vec<TextureOctave>,
}

impl Default for TextureParams {
    fn default() -> Self {
        Self {
            octaves: vec![
                TextureOctave {
                    wavelength_px: 64.0,
                    amplitude: 0.16,
                },
                TextureOctave {
                    wavelength_px: 20.0,
                    amplitude: 0.16,
                },
                TextureOctave {
                    wavelength_px: 8.0,
                    amplitude: 0.10,
                },
            ],
        }
    }
}

impl TextureParams {
    pub fn validate(&self) -> Result<()> {
        for (k, o) in self.octaves.iter().enumerate() {
            if !o.wavelength_px.is_finite() || o.wavelength_px < 2.0 {
                return Err(Error::InvalidConfig(format!(
                    "octave {k}: wavelength must be >= 2 px, got {}",
                    o.wavelength_px
                )));
            }
            if !o.amplitude.is_finite() || o.amplitude < 0.0 {
                return Err(Error::InvalidConfig(format!(
                    "octave {k}: amplitude must be >= 0, got {}",
                    o.amplitude
                )));
            }
        }
        Ok(())
    }

    fn total_amplitude(&self) -> f64 {
        self.octaves.iter().map(|o| o.amplitude).sum()
    }
}

/// A textured plane. `region` bounds it in left-view pixels
/// `[i0, i1) × [j0, j1)`; `None` extends the plane under the whole frame
/// (the background). Inverse depth is affine over the image:
/// `ρ(i, j) = 1/depth_m + slant_x·(j − cj) + slant_y·(i − ci)` anchored at
/// the region center.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectSpec {
    pub region: Option<[usize; 4]>,
    pub depth_m: f64,
    pub slant: [f64; 2],
    pub albedo: f64,
    pub contrast: f64,
}

/// Which rows of the frame receive ground-truth returns.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub enum GtCoverage {
    Full,
    /// Keep only the bottom fraction of rows (e.g. 0.5 = bottom half).
    BottomFraction(f64),
}

/// Full description of a synthetic scene; generation is a pure function
/// of this value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSpec {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub layout: Vec<ObjectSpec>,
    pub texture: TextureParams,
    pub seed: u64,
    pub rig: CameraRig,
    /// Number of simulated scan rows, spread evenly over the frame.
    pub lidar_lines: usize,
    pub gt_coverage: GtCoverage,
}

impl SceneSpec {
    /// Two textured boxes over a textured background — the stock scene for
    /// optimization and pipeline runs.
    pub fn default_scene() -> Self {
        let (h, w) = (64, 128);
        Self {
            width: w,
            height: h,
            channels: 3,
            layout: vec![
                ObjectSpec {
                    region: None,
                    depth_m: 6.0,
                    slant: [0.0, 0.0],
                    albedo: 0.45,
                    contrast: 1.0,
                },
                ObjectSpec {
                    region: Some([12, 44, 16, 56]),
                    depth_m: 3.2,
                    slant: [0.0, 0.0],
                    albedo: 0.6,
                    contrast: 1.0,
                },
                ObjectSpec {
                    region: Some([28, 58, 72, 116]),
                    depth_m: 4.2,
                    slant: [0.001, 0.0],
                    albedo: 0.35,
                    contrast: 1.0,
                },
            ],
            texture: TextureParams::default(),
            seed: 20,
            rig: CameraRig::new(110.0, 0.5, w, h, [0.3, -0.25, 0.0]).unwrap(),
            lidar_lines: 24,
            gt_coverage: GtCoverage::Full,
        }
    }

    /// A wider scene with several small boxes, dense enough in scan lines
    /// that the occlusion filter's hit/false-removal rates are measurable.
    pub fn lidar_benchmark() -> Self {
        let (h, w) = (112, 320);
        let boxes = [[16, 56, 40, 60], [56, 96, 200, 220]];
        let mut layout = vec![ObjectSpec {
            region: None,
            depth_m: 6.0,
            slant: [0.0, 0.0],
            albedo: 0.45,
            contrast: 1.0,
        }];
        for (k, b) in boxes.iter().enumerate() {
            layout.push(ObjectSpec {
                region: Some(*b),
                depth_m: 2.8 + 0.2 * k as f64,
                slant: [0.0, 0.0],
                albedo: 0.6,
                contrast: 1.0,
            });
        }
        Self {
            width: w,
            height: h,
            channels: 3,
            layout,
            texture: TextureParams::default(),
            seed: 41,
            rig: CameraRig::new(110.0, 0.5, w, h, [0.3, -0.25, 0.0]).unwrap(),
            lidar_lines: 40,
            gt_coverage: GtCoverage::Full,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.width < 8 || self.height < 8 {
            return Err(Error::InvalidConfig(format!(
                "scene must be at least 8x8, got {}x{}",
                self.height, self.width
            )));
        }
        if self.channels != 1 && self.channels != 3 {
            return Err(Error::InvalidConfig(format!(
                "channels must be 1 or 3, got {}",
                self.channels
            )));
        }
        if self.rig.width != self.width || self.rig.height != self.height {
            return Err(Error::InvalidConfig(format!(
                "rig frame {}x{} does not match scene {}x{}",
                self.rig.height, self.rig.width, self.height, self.width
            )));
        }
        self.rig.validate()?;
        self.texture.validate()?;
        if !self.layout.iter().any(|o| o.region.is_none()) {
            return Err(Error::InvalidConfig(
                "layout needs a full-frame background object".into(),
            ));
        }
        if self.lidar_lines == 0 || self.lidar_lines > self.height {
            return Err(Error::InvalidConfig(format!(
                "lidar_lines must lie in 1..=height, got {}",
                self.lidar_lines
            )));
        }
        if let GtCoverage::BottomFraction(f) = self.gt_coverage {
            if !(f > 0.0 && f <= 1.0) {
                return Err(Error::InvalidConfig(format!(
                    "coverage fraction must lie in (0, 1], got {f}"
                )));
            }
        }
        let amp = self.texture.total_amplitude();
        let b_f = self.rig.baseline_m * self.rig.focal_px;
        for (k, obj) in self.layout.iter().enumerate() {
            if let Some([i0, i1, j0, j1]) = obj.region {
                if i0 >= i1 || j0 >= j1 || i1 > self.height || j1 > self.width {
                    return Err(Error::InvalidConfig(format!(
                        "object {k}: region [{i0}, {i1}) x [{j0}, {j1}) does not fit a {}x{} frame",
                        self.height, self.width
                    )));
                }
            }
            if !obj.depth_m.is_finite() || !obj.slant.iter().all(|s| s.is_finite()) {
                return Err(Error::InvalidConfig(format!(
                    "object {k}: non-finite geometry"
                )));
            }
            let (i0, i1, j0, j1) = match obj.region {
                Some([i0, i1, j0, j1]) => (i0, i1, j0, j1),
                None => (0, self.height, 0, self.width),
            };
            for corner_i in [i0 as f64, i1 as f64 - 1.0] {
                for corner_j in [j0 as f64, j1 as f64 - 1.0] {
                    let rho = rho_of(obj, i0, i1, j0, j1, corner_i, corner_j);
                    if !(rho >= 1.0 / 80.0 && rho < 1.0) {
                        return Err(Error::InvalidConfig(format!(
                            "object {k}: depth {} m at ({corner_i}, {corner_j}) leaves (1, 80] m",
                            1.0 / rho
                        )));
                    }
                }
            }
            if (b_f * obj.slant[0]).abs() > 0.5 {
                return Err(Error::InvalidConfig(format!(
                    "object {k}: horizontal slant {} too steep for baseline·focal {b_f}",
                    obj.slant[0]
                )));
            }
            let span = 0.5 * obj.contrast * amp;
            if !(obj.contrast >= 0.0 && obj.albedo - span >= 0.0 && obj.albedo + span <= 1.0) {
                return Err(Error::InvalidConfig(format!(
                    "object {k}: albedo {} ± contrast·amplitude {span} leaves [0, 1]",
                    obj.albedo
                )));
            }
        }
        Ok(())
    }
}

/// A rendered scene with its exact ground truth and LiDAR simulation.
#[derive(Debug, Clone)]
pub struct SynthScene {
    pub spec: SceneSpec,
    pub left: ImageField,
    pub right: ImageField,
    pub true_depth_l: ScalarField,
    pub true_depth_r: ScalarField,
    /// Raw LiDAR projection (contains labeled occlusion leaks).
    pub gt_raw: SparseDepthMap,
    /// Camera-visible returns only, snapped to the exact surface depth.
    pub gt_clean: SparseDepthMap,
    /// Row-major flags marking gt_raw pixels that are occlusion leaks.
    pub artifact_labels: Vec<bool>,
    /// Row-major flags: left pixel's surface is visible in the right view.
    pub visible_l: Vec<bool>,
    /// Row-major flags: left pixel lies on a textured object.
    pub textured_l: Vec<bool>,
    /// The simulated returns in sensor coordinates.
    pub cloud: PointCloud,
}

/// Which ground-truth map (if any) a training sample should carry.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GtSelection {
    None,
    Clean,
    Raw,
}

impl SynthScene {
    /// Packages the scene for the loss/optimizer modules.
    pub fn to_sample(&self, gt: GtSelection) -> StereoSample {
        StereoSample {
            left: self.left.clone(),
            right: self.right.clone(),
            gt_left: match gt {
                GtSelection::None => None,
                GtSelection::Clean => Some(self.gt_clean.clone()),
                GtSelection::Raw => Some(self.gt_raw.clone()),
            },
            gt_right: None,
            rig: self.spec.rig.clone(),
        }
    }
}

/// FNV-1a over a byte slice; the determinism fingerprint used everywhere.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h = 0xcbf29ce484222325u64;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

fn fnv_fold_u64(h: &mut u64, v: u64) {
    for b in v.to_le_bytes() {
        *h ^= b as u64;
        *h = h.wrapping_mul(0x100000001b3);
    }
}

/// Order-sensitive fingerprint of every rendered field, mask, and return.
pub fn scene_hash(scene: &SynthScene) -> u64 {
    let mut h = 0xcbf29ce484222325u64;
    for v in [
        scene.spec.height as u64,
        scene.spec.width as u64,
        scene.spec.channels as u64,
    ] {
        fnv_fold_u64(&mut h, v);
    }
    for field in [&scene.left, &scene.right] {
        for &v in field.data() {
            fnv_fold_u64(&mut h, v.to_bits());
        }
    }
    for field in [&scene.true_depth_l, &scene.true_depth_r] {
        for &v in field.data() {
            fnv_fold_u64(&mut h, v.to_bits());
        }
    }
    for map in [&scene.gt_raw, &scene.gt_clean] {
        for (k, &m) in map.mask().iter().enumerate() {
            fnv_fold_u64(&mut h, m as u64);
            fnv_fold_u64(&mut h, map.depth().data()[k].to_bits());
        }
    }
    for flags in [&scene.artifact_labels, &scene.visible_l, &scene.textured_l] {
        for &b in flags.iter() {
            fnv_fold_u64(&mut h, b as u64);
        }
    }
    for p in &scene.cloud.points {
        for v in [p.x, p.y, p.z, p.reflectance] {
            fnv_fold_u64(&mut h, v.to_bits());
        }
    }
    h
}

/// Hash of an integer lattice point to [0, 1), keyed by object, channel,
/// and octave so every surface band is independent.
fn lattice01(seed: u64, obj: u64, chan: u64, octave: u64, iy: i64, ix: i64) -> f64 {
    let mut h = 0xcbf29ce484222325u64;
    for v in [seed, obj, chan, octave, iy as u64, ix as u64] {
        fnv_fold_u64(&mut h, v);
    }
    (h >> 11) as f64 / (1u64 << 53) as f64
}

#[inline]
fn smoothstep(t: f64) -> f64 {
    t * t * (3.0 - 2.0 * t)
}

/// Smooth lattice value noise in [0, 1) at continuous image coordinates.
fn value_noise(seed: u64, obj: u64, chan: u64, octave: u64, wavelength: f64, y: f64, x: f64) -> f64 {
    let gx = x / wavelength;
    let gy = y / wavelength;
    let x0 = gx.floor();
    let y0 = gy.floor();
    let tx = smoothstep(gx - x0);
    let ty = smoothstep(gy - y0);
    let (ix, iy) = (x0 as i64, y0 as i64);
    let n00 = lattice01(seed, obj, chan, octave, iy, ix);
    let n01 = lattice01(seed, obj, chan, octave, iy, ix + 1);
    let n10 = lattice01(seed, obj, chan, octave, iy + 1, ix);
    let n11 = lattice01(seed, obj, chan, octave, iy + 1, ix + 1);
    let top = n00 + (n01 - n00) * tx;
    let bot = n10 + (n11 - n10) * tx;
    top + (bot - top) * ty
}

/// The surface color of object `obj_idx` at continuous coordinates.
fn texture_at(spec: &SceneSpec, obj_idx: usize, chan: usize, i: f64, j: f64) -> f64 {
    let obj = &spec.layout[obj_idx];
    let mut v = obj.albedo;
    for (k, oct) in spec.texture.octaves.iter().enumerate() {
        let n = value_noise(
            spec.seed,
            obj_idx as u64,
            chan as u64,
            k as u64,
            oct.wavelength_px,
            i,
            j,
        );
        v += obj.contrast * oct.amplitude * (n - 0.5);
    }
    v
}

/// The exclusive pixel bounds of an object's footprint.
fn bounds(obj: &ObjectSpec, spec: &SceneSpec) -> (usize, usize, usize, usize) {
    match obj.region {
        Some([i0, i1, j0, j1]) => (i0, i1, j0, j1),
        None => (0, spec.height, 0, spec.width),
    }
}

/// Inverse depth of the plane anchored at the footprint center.
fn rho_of(obj: &ObjectSpec, i0: usize, i1: usize, j0: usize, j1: usize, i: f64, j: f64) -> f64 {
    let ci = (i0 + i1 - 1) as f64 / 2.0;
    let cj = (j0 + j1 - 1) as f64 / 2.0;
    1.0 / obj.depth_m + obj.slant[0] * (j - cj) + obj.slant[1] * (i - ci)
}

/// Whether continuous image coordinates fall inside the footprint; the
/// background extends past the frame so off-center rays still land on it.
fn covers(obj: &ObjectSpec, i: f64, j: f64) -> bool {
    match obj.region {
        Some([i0, i1, j0, j1]) => {
            i >= i0 as f64 - 0.5
                && i < (i1 - 1) as f64 + 0.5
                && j >= j0 as f64 - 0.5
                && j < (j1 - 1) as f64 + 0.5
        }
        None => true,
    }
}

/// Nearest surface along the left-camera ray through pixel (i, j).
fn left_winner(spec: &SceneSpec, i: f64, j: f64) -> (usize, f64) {
    let mut best = (usize::MAX, f64::NEG_INFINITY);
    for (k, obj) in spec.layout.iter().enumerate() {
        if !covers(obj, i, j) {
            continue;
        }
        let (i0, i1, j0, j1) = bounds(obj, spec);
        let rho = rho_of(obj, i0, i1, j0, j1, i, j);
        if rho > best.1 {
            best = (k, rho);
        }
    }
    best
}

/// Nearest surface along the right-camera ray at row `i`, column `x_r`.
/// Returns the object, the left-view column it was lifted from, and its
/// inverse depth at the hit.
fn right_winner(spec: &SceneSpec, i: f64, x_r: f64) -> (usize, f64, f64) {
    let b_f = spec.rig.baseline_m * spec.rig.focal_px;
    let mut best = (usize::MAX, 0.0, f64::NEG_INFINITY);
    for (k, obj) in spec.layout.iter().enumerate() {
        let (i0, i1, j0, j1) = bounds(obj, spec);
        let ci = (i0 + i1 - 1) as f64 / 2.0;
        let cj = (j0 + j1 - 1) as f64 / 2.0;
        let rho_row = 1.0 / obj.depth_m + obj.slant[1] * (i - ci);
        // Solve x_r = x_l − b·f·ρ(i, x_l) for x_l on this plane.
        let x_l = (x_r + b_f * (rho_row - obj.slant[0] * cj)) / (1.0 - b_f * obj.slant[0]);
        if !covers(obj, i, x_l) {
            continue;
        }
        let rho = rho_of(obj, i0, i1, j0, j1, i, x_l);
        if rho > best.2 {
            best = (k, x_l, rho);
        }
    }
    best
}

/// Casts one LiDAR ray (camera-frame origin and direction) against every
/// plane and returns the nearest hit as (object, point, image coords).
fn cast_ray(
    spec: &SceneSpec,
    origin: [f64; 3],
    dir: [f64; 3],
) -> Option<(usize, [f64; 3], f64, f64)> {
    let f = spec.rig.focal_px;
    let cx = (spec.width as f64 - 1.0) / 2.0;
    let cy = (spec.height as f64 - 1.0) / 2.0;
    let mut best: Option<(usize, [f64; 3], f64, f64)> = None;
    let mut best_t = f64::INFINITY;
    for (k, obj) in spec.layout.iter().enumerate() {
        let (i0, i1, j0, j1) = bounds(obj, spec);
        let ci = (i0 + i1 - 1) as f64 / 2.0;
        let cj = (j0 + j1 - 1) as f64 / 2.0;
        // The affine image profile ρ(i, j) is the plane a·P = 1 in 3-D.
        let a = [
            f * obj.slant[0],
            f * obj.slant[1],
            1.0 / obj.depth_m + obj.slant[0] * (cx - cj) + obj.slant[1] * (cy - ci),
        ];
        let denom = a[0] * dir[0] + a[1] * dir[1] + a[2] * dir[2];
        if denom.abs() < 1e-12 {
            continue;
        }
        let t = (1.0 - (a[0] * origin[0] + a[1] * origin[1] + a[2] * origin[2])) / denom;
        if t <= 1e-9 || t >= best_t {
            continue;
        }
        let p = [
            origin[0] + t * dir[0],
            origin[1] + t * dir[1],
            origin[2] + t * dir[2],
        ];
        if p[2] < 0.1 || p[2] > 120.0 {
            continue;
        }
        let jj = f * p[0] / p[2] + cx;
        let ii = f * p[1] / p[2] + cy;
        if covers(obj, ii, jj) {
            best_t = t;
            best = Some((k, p, ii, jj));
        }
    }
    best
}

/// First row (inclusive) that ground truth covers.
fn coverage_start(spec: &SceneSpec) -> usize {
    match spec.gt_coverage {
        GtCoverage::Full => 0,
        GtCoverage::BottomFraction(f) => ((1.0 - f) * spec.height as f64).floor() as usize,
    }
}

/// Renders a scene: both views, exact depths, visibility and texture
/// masks, the simulated LiDAR cloud, and the raw/clean ground truth with
/// artifact labels.
pub fn make_scene(spec: &SceneSpec) -> Result<SynthScene> {
    spec.validate()?;
    let (h, w, c) = (spec.height, spec.width, spec.channels);
    let b_f = spec.rig.baseline_m * spec.rig.focal_px;

    let mut winners = vec![0usize; h * w];
    let mut true_depth_l = ScalarField::new(h, w);
    for i in 0..h {
        for j in 0..w {
            let (k, rho) = left_winner(spec, i as f64, j as f64);
            winners[i * w + j] = k;
            true_depth_l.set(i, j, 1.0 / rho);
        }
    }
    let left = ImageField::from_fn(h, w, c, |i, j, ch| {
        texture_at(spec, winners[i * w + j], ch, i as f64, j as f64)
    })?;

    let mut true_depth_r = ScalarField::new(h, w);
    let mut right_hits = vec![(0usize, 0.0f64); h * w];
    for i in 0..h {
        for j in 0..w {
            let (k, x_l, rho) = right_winner(spec, i as f64, j as f64);
            right_hits[i * w + j] = (k, x_l);
            true_depth_r.set(i, j, 1.0 / rho);
        }
    }
    let right = ImageField::from_fn(h, w, c, |i, j, ch| {
        let (k, x_l) = right_hits[i * w + j];
        texture_at(spec, k, ch, i as f64, x_l)
    })?;

    let mut visible_l = vec![false; h * w];
    let mut textured_l = vec![false; h * w];
    for i in 0..h {
        for j in 0..w {
            let k = winners[i * w + j];
            textured_l[i * w + j] = spec.layout[k].contrast >= TEXTURED_MIN_CONTRAST;
            let x_r = j as f64 - b_f / true_depth_l.get(i, j);
            if x_r < 0.0 || x_r > (w - 1) as f64 {
                continue;
            }
            let (k_r, x_l_back, _) = right_winner(spec, i as f64, x_r);
            visible_l[i * w + j] = k_r == k && (x_l_back - j as f64).abs() < 1e-6;
        }
    }

    // Scan grid: evenly spaced rows (sensor pixel grid mirrors the
    // camera's), every column, cast from the displaced sensor origin.
    let origin = spec.rig.lidar_offset;
    let f = spec.rig.focal_px;
    let cx = (w as f64 - 1.0) / 2.0;
    let cy = (h as f64 - 1.0) / 2.0;
    let mut points = Vec::new();
    for line in 0..spec.lidar_lines {
        let v = if spec.lidar_lines == 1 {
            cy
        } else {
            line as f64 * (h as f64 - 1.0) / (spec.lidar_lines as f64 - 1.0)
        };
        for u in 0..w {
            let dir = [(u as f64 - cx) / f, (v - cy) / f, 1.0];
            if let Some((k, p, ii, jj)) = cast_ray(spec, origin, dir) {
                points.push(LidarPoint {
                    x: p[0] - origin[0],
                    y: p[1] - origin[1],
                    z: p[2] - origin[2],
                    reflectance: texture_at(spec, k, 0, ii, jj),
                });
            }
        }
    }
    let cloud = PointCloud { points };

    let mut gt_raw = project_points(&cloud, &spec.rig, origin)?;
    let row0 = coverage_start(spec);
    for i in 0..row0 {
        for j in 0..w {
            gt_raw.remove(i, j);
        }
    }
    let mut gt_clean = SparseDepthMap::empty(h, w);
    let mut artifact_labels = vec![false; h * w];
    for i in 0..h {
        for j in 0..w {
            if !gt_raw.is_valid(i, j) {
                continue;
            }
            let truth = true_depth_l.get(i, j);
            if gt_raw.depth_at(i, j) > (1.0 + ARTIFACT_REL_TOL) * truth {
                artifact_labels[i * w + j] = true;
            } else {
                gt_clean.insert(i, j, truth)?;
            }
        }
    }

    Ok(SynthScene {
        spec: spec.clone(),
        left,
        right,
        true_depth_l,
        true_depth_r,
        gt_raw,
        gt_clean,
        artifact_labels,
        visible_l,
        textured_l,
        cloud,
    })
}

/// Projects the scene's LiDAR scan into the right camera, producing the
/// right-view counterpart of `gt_raw` (occlusion artifacts included, same
/// coverage trim). The right camera sits one baseline along +x, so the
/// sensor origin shifts by −baseline in its frame.
pub fn right_view_raw_gt(scene: &SynthScene) -> Result<SparseDepthMap> {
    let rig = &scene.spec.rig;
    let o = rig.lidar_offset;
    let origin = [o[0] - rig.baseline_m, o[1], o[2]];
    let mut gt = project_points(&scene.cloud, rig, origin)?;
    for i in 0..coverage_start(&scene.spec) {
        for j in 0..scene.spec.width {
            gt.remove(i, j);
        }
    }
    Ok(gt)
}

/// Mean L1 between the left view and the right view warped by the true
/// disparity, over pixels whose surface both cameras see. The renderer's
/// self-consistency number: small values mean the views really are
/// resamplings of one geometry.
pub fn reproject_check(scene: &SynthScene) -> Result<f64> {
    let (h, w) = (scene.spec.height, scene.spec.width);
    let b_f = scene.spec.rig.baseline_m * scene.spec.rig.focal_px;
    let disparity = ScalarField::from_fn(h, w, |i, j| b_f / scene.true_depth_l.get(i, j));
    let warped = warp_horizontal_image(
        &scene.right,
        &disparity,
        WarpDirection::ReconstructLeftFromRight,
    )?;
    let c = scene.left.channels();
    let mut acc = 0.0;
    let mut n = 0usize;
    for i in 0..h {
        for j in 0..w {
            if !scene.visible_l[i * w + j] {
                continue;
            }
            for ch in 0..c {
                acc += (warped.get(i, j, ch) - scene.left.get(i, j, ch)).abs();
                n += 1;
            }
        }
    }
    if n == 0 {
        return Err(Error::Degenerate(
            "no mutually visible pixels to compare".into(),
        ));
    }
    Ok(acc / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lidar::occlusion_filter;

    /// Determinism fingerprint of the stock scene, recorded on first build.
    const DEFAULT_SCENE_HASH: u64 = 0xc113591970c79768;

    fn plane_spec(depth: f64) -> SceneSpec {
        let mut spec = SceneSpec::default_scene();
        spec.layout.truncate(1);
        spec.layout[0].depth_m = depth;
        spec
    }

    #[test]
    fn plane_depth_and_disparity_follow_the_formula() {
        let scene = make_scene(&plane_spec(5.0)).unwrap();
        for &d in scene.true_depth_l.data() {
            assert_eq!(d, 5.0);
        }
        for &d in scene.true_depth_r.data() {
            assert_eq!(d, 5.0);
        }
        // b·f/Z = 0.5·110/5 = 11 px everywhere.
        let b_f = scene.spec.rig.baseline_m * scene.spec.rig.focal_px;
        assert_eq!(b_f / 5.0, 11.0);
    }

    #[test]
    fn zero_baseline_views_are_identical() {
        let mut spec = plane_spec(5.0);
        spec.rig = CameraRig::new(110.0, 0.0, spec.width, spec.height, [0.0, 0.0, 0.0]).unwrap();
        let scene = make_scene(&spec).unwrap();
        assert_eq!(scene.left.data(), scene.right.data());
        assert_eq!(reproject_check(&scene).unwrap(), 0.0);
    }

    #[test]
    fn single_plane_reprojection_is_sharp() {
        let err = reproject_check(&make_scene(&plane_spec(5.0)).unwrap()).unwrap();
        assert!(err < 1e-3, "plane reprojection error {err}");
    }

    #[test]
    fn default_scene_reprojection_is_consistent() {
        let err = reproject_check(&make_scene(&SceneSpec::default_scene()).unwrap()).unwrap();
        assert!(err < 0.01, "default reprojection error {err}");
    }

    #[test]
    fn occluded_pixels_inflate_the_residual() {
        let scene = make_scene(&SceneSpec::default_scene()).unwrap();
        let masked = reproject_check(&scene).unwrap();
        let (h, w) = (scene.spec.height, scene.spec.width);
        let b_f = scene.spec.rig.baseline_m * scene.spec.rig.focal_px;
        let disparity = ScalarField::from_fn(h, w, |i, j| b_f / scene.true_depth_l.get(i, j));
        let warped = warp_horizontal_image(
            &scene.right,
            &disparity,
            WarpDirection::ReconstructLeftFromRight,
        )
        .unwrap();
        let mut acc = 0.0;
        for (&a, &b) in warped.data().iter().zip(scene.left.data()) {
            acc += (a - b).abs();
        }
        let unmasked = acc / warped.data().len() as f64;
        assert!(
            masked < unmasked,
            "masked {masked} should beat unmasked {unmasked}"
        );
        assert!(scene.visible_l.iter().any(|&v| !v));
    }

    #[test]
    fn generation_is_deterministic_and_matches_the_golden_hash() {
        let spec = SceneSpec::default_scene();
        let a = scene_hash(&make_scene(&spec).unwrap());
        let b = scene_hash(&make_scene(&spec).unwrap());
        assert_eq!(a, b);
        if DEFAULT_SCENE_HASH != 0 {
            assert_eq!(a, DEFAULT_SCENE_HASH, "actual hash {a:#018x}");
        } else {
            panic!("record the golden hash: {a:#018x}");
        }
    }

    #[test]
    fn clean_depths_equal_true_depths_exactly() {
        let scene = make_scene(&SceneSpec::default_scene()).unwrap();
        let w = scene.spec.width;
        let mut seen = 0;
        for i in 0..scene.spec.height {
            for j in 0..w {
                if scene.gt_clean.is_valid(i, j) {
                    assert_eq!(scene.gt_clean.depth_at(i, j), scene.true_depth_l.get(i, j));
                    seen += 1;
                }
            }
        }
        assert!(seen > 500, "only {seen} clean returns");
    }

    #[test]
    fn raw_decomposes_into_clean_plus_labeled_artifacts() {
        let scene = make_scene(&SceneSpec::default_scene()).unwrap();
        let w = scene.spec.width;
        let mut artifacts = 0;
        for i in 0..scene.spec.height {
            for j in 0..w {
                let raw = scene.gt_raw.is_valid(i, j);
                let clean = scene.gt_clean.is_valid(i, j);
                let label = scene.artifact_labels[i * w + j];
                assert!(!(clean && label), "clean and artifact at ({i}, {j})");
                assert_eq!(raw, clean || label, "raw mask mismatch at ({i}, {j})");
                if label {
                    artifacts += 1;
                    // Leaks are background readings in front of a nearer
                    // surface, so they overshoot the true depth badly.
                    assert!(
                        scene.gt_raw.depth_at(i, j) > 1.2 * scene.true_depth_l.get(i, j),
                        "mild artifact at ({i}, {j})"
                    );
                }
            }
        }
        assert!(artifacts > 20, "only {artifacts} artifacts injected");
    }

    #[test]
    fn occlusion_filter_removes_leaks_but_keeps_surface_points() {
        let scene = make_scene(&SceneSpec::lidar_benchmark()).unwrap();
        let w = scene.spec.width;
        let filtered = occlusion_filter(&scene.gt_raw, 7, 0.05).unwrap();
        let (mut artifacts, mut removed_artifacts) = (0, 0);
        let (mut clean, mut removed_clean) = (0, 0);
        for i in 0..scene.spec.height {
            for j in 0..w {
                if scene.artifact_labels[i * w + j] {
                    artifacts += 1;
                    if !filtered.is_valid(i, j) {
                        removed_artifacts += 1;
                    }
                } else if scene.gt_raw.is_valid(i, j) {
                    clean += 1;
                    if !filtered.is_valid(i, j) {
                        removed_clean += 1;
                    }
                }
            }
        }
        assert!(artifacts >= 50, "only {artifacts} artifacts to score");
        let recall = removed_artifacts as f64 / artifacts as f64;
        let false_removal = removed_clean as f64 / clean as f64;
        assert!(recall >= 0.9, "artifact removal rate {recall}");
        assert!(false_removal <= 0.02, "false removal rate {false_removal}");
    }

    #[test]
    fn bottom_coverage_limits_ground_truth_rows() {
        let mut spec = SceneSpec::default_scene();
        spec.gt_coverage = GtCoverage::BottomFraction(0.5);
        let scene = make_scene(&spec).unwrap();
        let half = spec.height / 2;
        let mut below = 0;
        for i in 0..spec.height {
            for j in 0..spec.width {
                let any = scene.gt_raw.is_valid(i, j) || scene.gt_clean.is_valid(i, j);
                if i < half {
                    assert!(!any, "ground truth above the fold at ({i}, {j})");
                } else if scene.gt_clean.is_valid(i, j) {
                    below += 1;
                }
            }
        }
        assert!(below > 200, "only {below} covered returns");
    }

    #[test]
    fn cloud_points_lie_on_scene_surfaces() {
        let spec = SceneSpec::default_scene();
        let scene = make_scene(&spec).unwrap();
        let f = spec.rig.focal_px;
        let cx = (spec.width as f64 - 1.0) / 2.0;
        let cy = (spec.height as f64 - 1.0) / 2.0;
        for p in &scene.cloud.points {
            let cam = [
                p.x + spec.rig.lidar_offset[0],
                p.y + spec.rig.lidar_offset[1],
                p.z + spec.rig.lidar_offset[2],
            ];
            let on_any = spec.layout.iter().any(|obj| {
                let (i0, i1, j0, j1) = bounds(obj, &spec);
                let ci = (i0 + i1 - 1) as f64 / 2.0;
                let cj = (j0 + j1 - 1) as f64 / 2.0;
                let a = [
                    f * obj.slant[0],
                    f * obj.slant[1],
                    1.0 / obj.depth_m + obj.slant[0] * (cx - cj) + obj.slant[1] * (cy - ci),
                ];
                (a[0] * cam[0] + a[1] * cam[1] + a[2] * cam[2] - 1.0).abs() < 1e-9
            });
            assert!(on_any, "stray return at ({}, {}, {})", p.x, p.y, p.z);
        }
    }

    #[test]
    fn box_shadows_break_visibility_next_to_edges() {
        let spec = SceneSpec::default_scene();
        let scene = make_scene(&spec).unwrap();
        let w = spec.width;
        // Background pixels hugging box 1's left edge are hidden in the
        // right view; the box interior is plainly visible.
        let [i0, i1, j0, _] = spec.layout[1].region.unwrap();
        let mid = (i0 + i1) / 2;
        assert!(!scene.visible_l[mid * w + (j0 - 1)]);
        assert!(scene.visible_l[mid * w + (j0 + 8)]);
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let mut spec = SceneSpec::default_scene();
        spec.layout[1].depth_m = 0.9;
        assert!(spec.validate().is_err(), "too-near depth");

        let mut spec = SceneSpec::default_scene();
        spec.layout[0].depth_m = 81.0;
        assert!(spec.validate().is_err(), "too-far depth");

        let mut spec = SceneSpec::default_scene();
        spec.layout[1].region = Some([14, 38, 100, 130]);
        assert!(spec.validate().is_err(), "region past the frame");

        let mut spec = SceneSpec::default_scene();
        spec.layout.remove(0);
        assert!(spec.validate().is_err(), "no background plane");

        let mut spec = SceneSpec::default_scene();
        spec.gt_coverage = GtCoverage::BottomFraction(0.0);
        assert!(spec.validate().is_err(), "empty coverage");

        let mut spec = SceneSpec::default_scene();
        spec.rig = CameraRig::new(110.0, 0.5, 32, 32, [0.0, 0.0, 0.0]).unwrap();
        assert!(spec.validate().is_err(), "rig/scene size mismatch");

        let mut spec = SceneSpec::default_scene();
        spec.layout[1].albedo = 0.95;
        assert!(spec.validate().is_err(), "texture leaves [0, 1]");
    }

    #[test]
    fn specs_round_trip_through_json() {
        let spec = SceneSpec::default_scene();
        let text = serde_json::to_string(&spec).unwrap();
        let back: SceneSpec = serde_json::from_str(&text).unwrap();
        assert_eq!(spec, back);
    }

    #[test]
    fn right_view_gt_tracks_the_right_depth_with_its_own_leaks() {
        let scene = make_scene(&SceneSpec::default_scene()).unwrap();
        let gt = right_view_raw_gt(&scene).unwrap();
        assert!(gt.count() > 500, "only {} right-view returns", gt.count());

        let (mut matches, mut leaks) = (0usize, 0usize);
        for i in 0..scene.spec.height {
            for j in 0..scene.spec.width {
                if !gt.is_valid(i, j) {
                    continue;
                }
                let truth = scene.true_depth_r.get(i, j);
                let ratio = gt.depth_at(i, j) / truth;
                if (ratio - 1.0).abs() <= 0.01 {
                    matches += 1;
                } else if ratio > 1.0 + ARTIFACT_REL_TOL {
                    leaks += 1;
                }
            }
        }
        assert!(
            matches as f64 >= 0.75 * gt.count() as f64,
            "only {matches}/{} right-view points sit on the visible surface",
            gt.count()
        );
        assert!(leaks > 20, "expected parallax leaks in the right view, got {leaks}");

        let filtered = occlusion_filter(&gt, 7, 0.05).unwrap();
        assert!(filtered.count() < gt.count() - leaks / 2, "filter barely pruned the right view");
    }
}
