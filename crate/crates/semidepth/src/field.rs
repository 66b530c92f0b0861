//! Dense field types and resolution-pyramid primitives.
//!
//! Everything downstream (warping, losses, gradients) operates on these
//! row-major `f64` containers:
//!
//! - [`ImageField`]: H×W×C intensities in [0, 1], C ∈ {1, 3}, channel-interleaved.
//! - [`ScalarField`]: H×W finite scalars (inverse depth, disparity, weights).
//! - [`SparseDepthMap`]: a depth field plus a validity mask (0 = no measurement).
//! - [`Pyramid`]: per-scale stack built by repeated 2×2 mean pooling.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Multi-channel image with intensities in [0, 1].
///
/// Data is row-major and channel-interleaved: index `(i * width + j) * channels + c`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageField {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f64>,
}

impl ImageField {
    /// Zero-filled image. `channels` must be 1 or 3.
    pub fn new(height: usize, width: usize, channels: usize) -> Result<Self> {
        check_dims(height, width)?;
        if channels != 1 && channels != 3 {
            return Err(Error::Domain(format!(
                "image channels must be 1 or 3, got {channels}"
            )));
        }
        Ok(Self {
            height,
            width,
            channels,
            data: vec![0.0; height * width * channels],
        })
    }

    /// Builds an image from raw interleaved data, validating range and finiteness.
    pub fn from_vec(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        let mut img = Self::new(height, width, channels)?;
        if data.len() != height * width * channels {
            return Err(Error::ShapeMismatch(format!(
                "image data length {} does not match {}x{}x{}",
                data.len(),
                height,
                width,
                channels
            )));
        }
        for (k, &v) in data.iter().enumerate() {
            if !v.is_finite() || !(0.0..=1.0).contains(&v) {
                return Err(Error::Domain(format!(
                    "image value {v} at flat index {k} outside [0, 1]"
                )));
            }
        }
        img.data = data;
        Ok(img)
    }

    /// Builds an image by evaluating `f(i, j, c)`; values are clamped to [0, 1].
    pub fn from_fn(
        height: usize,
        width: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let mut img = Self::new(height, width, channels)?;
        for i in 0..height {
            for j in 0..width {
                for c in 0..channels {
                    let v = f(i, j, c);
                    if !v.is_finite() {
                        return Err(Error::Domain(format!(
                            "non-finite image value at ({i}, {j}, {c})"
                        )));
                    }
                    img.data[(i * width + j) * channels + c] = v.clamp(0.0, 1.0);
                }
            }
        }
        Ok(img)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize, c: usize) -> usize {
        (i * self.width + j) * self.channels + c
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, c: usize) -> f64 {
        self.data[(i * self.width + j) * self.channels + c]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, c: usize, v: f64) {
        self.data[(i * self.width + j) * self.channels + c] = v;
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// 2×2 mean pooling with ceil dimensions; edge blocks average the pixels
    /// that exist.
    pub fn downsample2x(&self) -> Result<Self> {
        check_downsample_dims(self.height, self.width)?;
        let (oh, ow) = (self.height.div_ceil(2), self.width.div_ceil(2));
        let mut out = Self::new(oh, ow, self.channels)?;
        for oi in 0..oh {
            for oj in 0..ow {
                let i1 = (2 * oi + 2).min(self.height);
                let j1 = (2 * oj + 2).min(self.width);
                let count = ((i1 - 2 * oi) * (j1 - 2 * oj)) as f64;
                for c in 0..self.channels {
                    let mut acc = 0.0;
                    for i in 2 * oi..i1 {
                        for j in 2 * oj..j1 {
                            acc += self.get(i, j, c);
                        }
                    }
                    out.set(oi, oj, c, acc / count);
                }
            }
        }
        Ok(out)
    }

    /// Per-pixel mean over channels (grayscale view).
    pub fn channel_mean(&self) -> ScalarField {
        let inv_c = 1.0 / self.channels as f64;
        let mut out = ScalarField::new(self.height, self.width);
        for i in 0..self.height {
            for j in 0..self.width {
                let mut acc = 0.0;
                for c in 0..self.channels {
                    acc += self.get(i, j, c);
                }
                out.set(i, j, acc * inv_c);
            }
        }
        out
    }

    /// Horizontal mirror (column j becomes column width-1-j).
    pub fn mirror_x(&self) -> Self {
        let mut out = self.clone();
        for i in 0..self.height {
            for j in 0..self.width {
                for c in 0..self.channels {
                    out.set(i, j, c, self.get(i, self.width - 1 - j, c));
                }
            }
        }
        out
    }
}

/// Single-channel field of finite scalars.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl ScalarField {
    pub fn new(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            data: vec![0.0; height * width],
        }
    }

    pub fn constant(height: usize, width: usize, v: f64) -> Self {
        Self {
            height,
            width,
            data: vec![v; height * width],
        }
    }

    pub fn from_vec(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::ShapeMismatch(format!(
                "scalar data length {} does not match {}x{}",
                data.len(),
                height,
                width
            )));
        }
        if let Some(k) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Domain(format!(
                "non-finite scalar value at flat index {k}"
            )));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut out = Self::new(height, width);
        for i in 0..height {
            for j in 0..width {
                out.set(i, j, f(i, j));
            }
        }
        out
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        i * self.width + j
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.width + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.width + j] = v;
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// 2×2 mean pooling with ceil dimensions (edge blocks average what exists).
    pub fn downsample2x(&self) -> Result<Self> {
        check_downsample_dims(self.height, self.width)?;
        let (oh, ow) = (self.height.div_ceil(2), self.width.div_ceil(2));
        let mut out = Self::new(oh, ow);
        for oi in 0..oh {
            for oj in 0..ow {
                let i1 = (2 * oi + 2).min(self.height);
                let j1 = (2 * oj + 2).min(self.width);
                let mut acc = 0.0;
                for i in 2 * oi..i1 {
                    for j in 2 * oj..j1 {
                        acc += self.get(i, j);
                    }
                }
                out.set(oi, oj, acc / ((i1 - 2 * oi) * (j1 - 2 * oj)) as f64);
            }
        }
        Ok(out)
    }

    /// Horizontal mirror (column j becomes column width-1-j).
    pub fn mirror_x(&self) -> Self {
        Self::from_fn(self.height, self.width, |i, j| {
            self.get(i, self.width - 1 - j)
        })
    }
}

/// Forward difference along x: `out[i, j] = f[i, j+1] - f[i, j]`, last column 0.
pub fn grad_x(field: &ScalarField) -> Result<ScalarField> {
    if field.width() < 2 {
        return Err(Error::TooSmall(format!(
            "grad_x needs width >= 2, got {}",
            field.width()
        )));
    }
    let mut out = ScalarField::new(field.height(), field.width());
    for i in 0..field.height() {
        for j in 0..field.width() - 1 {
            out.set(i, j, field.get(i, j + 1) - field.get(i, j));
        }
    }
    Ok(out)
}

/// Forward difference along y: `out[i, j] = f[i+1, j] - f[i, j]`, last row 0.
pub fn grad_y(field: &ScalarField) -> Result<ScalarField> {
    if field.height() < 2 {
        return Err(Error::TooSmall(format!(
            "grad_y needs height >= 2, got {}",
            field.height()
        )));
    }
    let mut out = ScalarField::new(field.height(), field.width());
    for i in 0..field.height() - 1 {
        for j in 0..field.width() {
            out.set(i, j, field.get(i + 1, j) - field.get(i, j));
        }
    }
    Ok(out)
}

/// Depth measurements on a sparse pixel set. `mask[p]` true means `depth[p]`
/// holds a measurement (> 0); depth is 0 wherever the mask is false.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseDepthMap {
    depth: ScalarField,
    mask: Vec<bool>,
}

impl SparseDepthMap {
    /// Empty map (all pixels invalid).
    pub fn empty(height: usize, width: usize) -> Self {
        Self {
            depth: ScalarField::new(height, width),
            mask: vec![false; height * width],
        }
    }

    /// Builds a map from a depth field and mask; masked depths must be > 0,
    /// unmasked entries are zeroed.
    pub fn new(depth: ScalarField, mask: Vec<bool>) -> Result<Self> {
        if mask.len() != depth.height() * depth.width() {
            return Err(Error::ShapeMismatch(format!(
                "mask length {} does not match {}x{}",
                mask.len(),
                depth.height(),
                depth.width()
            )));
        }
        let mut depth = depth;
        for (k, &m) in mask.iter().enumerate() {
            if m {
                if depth.data()[k] <= 0.0 {
                    return Err(Error::Domain(format!(
                        "masked depth {} at flat index {k} must be > 0",
                        depth.data()[k]
                    )));
                }
            } else {
                depth.data_mut()[k] = 0.0;
            }
        }
        Ok(Self { depth, mask })
    }

    pub fn height(&self) -> usize {
        self.depth.height()
    }

    pub fn width(&self) -> usize {
        self.depth.width()
    }

    #[inline]
    pub fn is_valid(&self, i: usize, j: usize) -> bool {
        self.mask[i * self.width() + j]
    }

    #[inline]
    pub fn depth_at(&self, i: usize, j: usize) -> f64 {
        self.depth.get(i, j)
    }

    pub fn depth(&self) -> &ScalarField {
        &self.depth
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    /// Number of valid measurements.
    pub fn count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    /// Inserts (or overwrites) a measurement. `d` must be > 0.
    pub fn insert(&mut self, i: usize, j: usize, d: f64) -> Result<()> {
        if d <= 0.0 || !d.is_finite() {
            return Err(Error::Domain(format!(
                "depth measurement {d} at ({i}, {j}) must be finite and > 0"
            )));
        }
        let k = self.depth.idx(i, j);
        self.depth.set(i, j, d);
        self.mask[k] = true;
        Ok(())
    }

    /// Removes a measurement if present.
    pub fn remove(&mut self, i: usize, j: usize) {
        let k = self.depth.idx(i, j);
        self.mask[k] = false;
        self.depth.set(i, j, 0.0);
    }

    /// Horizontal mirror (column j becomes column width-1-j).
    pub fn mirror_x(&self) -> Self {
        let w = self.width();
        let depth = self.depth.mirror_x();
        let mut mask = vec![false; self.mask.len()];
        for i in 0..self.height() {
            for j in 0..w {
                mask[i * w + j] = self.mask[i * w + (w - 1 - j)];
            }
        }
        Self { depth, mask }
    }
}

/// Rectified stereo rig intrinsics plus the LiDAR mounting offset.
///
/// `lidar_offset` is the LiDAR origin expressed in the left-camera frame
/// (x right, y down, z forward), in meters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraRig {
    pub focal_px: f64,
    pub baseline_m: f64,
    pub width: usize,
    pub height: usize,
    pub lidar_offset: [f64; 3],
}

impl CameraRig {
    pub fn new(
        focal_px: f64,
        baseline_m: f64,
        width: usize,
        height: usize,
        lidar_offset: [f64; 3],
    ) -> Result<Self> {
        let rig = Self {
            focal_px,
            baseline_m,
            width,
            height,
            lidar_offset,
        };
        rig.validate()?;
        Ok(rig)
    }

    /// Focal must be positive; baseline non-negative (zero baseline is the
    /// degenerate identical-view rig used by renderer self-checks).
    pub fn validate(&self) -> Result<()> {
        if !(self.focal_px.is_finite() && self.focal_px > 0.0) {
            return Err(Error::Domain(format!(
                "focal_px must be finite and > 0, got {}",
                self.focal_px
            )));
        }
        if !(self.baseline_m.is_finite() && self.baseline_m >= 0.0) {
            return Err(Error::Domain(format!(
                "baseline_m must be finite and >= 0, got {}",
                self.baseline_m
            )));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::TooSmall(format!(
                "rig frame {}x{} must be nonzero",
                self.height, self.width
            )));
        }
        if self.lidar_offset.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("lidar_offset must be finite".into()));
        }
        Ok(())
    }

    /// Principal point (pixel-center convention: centers at integer coordinates).
    pub fn principal_point(&self) -> (f64, f64) {
        ((self.width as f64 - 1.0) / 2.0, (self.height as f64 - 1.0) / 2.0)
    }
}

/// Resolution stack: `levels()[0]` is full resolution (scale 1), each
/// subsequent level halves both dimensions with ceil rounding.
#[derive(Debug, Clone, PartialEq)]
pub struct Pyramid<F> {
    levels: Vec<F>,
}

/// Field kinds that support 2×2 mean pooling.
pub trait Downsample2x: Sized {
    fn downsample2x(&self) -> Result<Self>;
}

impl Downsample2x for ImageField {
    fn downsample2x(&self) -> Result<Self> {
        ImageField::downsample2x(self)
    }
}

impl Downsample2x for ScalarField {
    fn downsample2x(&self) -> Result<Self> {
        ScalarField::downsample2x(self)
    }
}

impl<F> Pyramid<F> {
    /// Wraps pre-built levels (finest first). Must be nonempty.
    pub fn from_levels(levels: Vec<F>) -> Result<Self> {
        if levels.is_empty() {
            return Err(Error::TooSmall("pyramid needs at least one level".into()));
        }
        Ok(Self { levels })
    }

    pub fn n_scales(&self) -> usize {
        self.levels.len()
    }

    pub fn levels(&self) -> &[F] {
        &self.levels
    }

    pub fn levels_mut(&mut self) -> &mut [F] {
        &mut self.levels
    }

    /// Level for a 1-based scale index (scale 1 = full resolution).
    pub fn level(&self, scale: usize) -> &F {
        &self.levels[scale - 1]
    }

    pub fn level_mut(&mut self, scale: usize) -> &mut F {
        &mut self.levels[scale - 1]
    }
}

/// Builds an `n_scales`-level pyramid by repeated [`Downsample2x`].
pub fn build_pyramid<F: Downsample2x + Clone>(field: &F, n_scales: usize) -> Result<Pyramid<F>> {
    if n_scales == 0 {
        return Err(Error::TooSmall("pyramid needs at least one level".into()));
    }
    let mut levels = Vec::with_capacity(n_scales);
    levels.push(field.clone());
    for _ in 1..n_scales {
        let next = levels.last().unwrap().downsample2x()?;
        levels.push(next);
    }
    Pyramid::from_levels(levels)
}

fn check_dims(height: usize, width: usize) -> Result<()> {
    if height == 0 || width == 0 {
        return Err(Error::TooSmall(format!(
            "field dimensions {height}x{width} must be nonzero"
        )));
    }
    Ok(())
}

fn check_downsample_dims(height: usize, width: usize) -> Result<()> {
    if height < 2 || width < 2 {
        return Err(Error::TooSmall(format!(
            "downsample2x needs at least 2x2, got {height}x{width}"
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Independent block-mean oracle: averages every source pixel into its
    /// ceil-divided destination block.
    fn downsample_oracle(f: &ScalarField) -> ScalarField {
        let (oh, ow) = (f.height().div_ceil(2), f.width().div_ceil(2));
        let mut sums = vec![0.0; oh * ow];
        let mut counts = vec![0usize; oh * ow];
        for i in 0..f.height() {
            for j in 0..f.width() {
                let k = (i / 2) * ow + (j / 2);
                sums[k] += f.get(i, j);
                counts[k] += 1;
            }
        }
        let data = sums
            .iter()
            .zip(&counts)
            .map(|(s, &c)| s / c as f64)
            .collect();
        ScalarField::from_vec(oh, ow, data).unwrap()
    }

    fn lcg_values(n: usize, seed: u64) -> Vec<f64> {
        let mut state = seed;
        (0..n)
            .map(|_| {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                (state >> 11) as f64 / (1u64 << 53) as f64
            })
            .collect()
    }

    #[test]
    fn downsample_2x2_is_block_mean() {
        let f = ScalarField::from_vec(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let d = f.downsample2x().unwrap();
        assert_eq!((d.height(), d.width()), (1, 1));
        assert_eq!(d.get(0, 0), 2.5);
    }

    #[test]
    fn downsample_odd_dims_averages_available_pixels() {
        let f = ScalarField::constant(3, 3, 1.0);
        let d = f.downsample2x().unwrap();
        assert_eq!((d.height(), d.width()), (2, 2));
        for i in 0..2 {
            for j in 0..2 {
                assert_eq!(d.get(i, j), 1.0);
            }
        }
    }

    #[test]
    fn downsample_matches_block_mean_oracle() {
        let f = ScalarField::from_vec(5, 7, lcg_values(35, 42)).unwrap();
        let d = f.downsample2x().unwrap();
        let oracle = downsample_oracle(&f);
        assert_eq!((d.height(), d.width()), (3, 4));
        for i in 0..3 {
            for j in 0..4 {
                assert!((d.get(i, j) - oracle.get(i, j)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn downsample_preserves_mean_for_even_dims() {
        let f = ScalarField::from_vec(6, 8, lcg_values(48, 7)).unwrap();
        let d = f.downsample2x().unwrap();
        let mean = |s: &ScalarField| s.data().iter().sum::<f64>() / s.data().len() as f64;
        assert!((mean(&f) - mean(&d)).abs() < 1e-12);
    }

    #[test]
    fn downsample_rejects_tiny_fields() {
        let f = ScalarField::constant(1, 5, 0.0);
        assert!(matches!(f.downsample2x(), Err(Error::TooSmall(_))));
    }

    #[test]
    fn image_downsample_pools_each_channel() {
        let img = ImageField::from_fn(4, 4, 3, |i, j, c| {
            (i as f64 * 0.1 + j as f64 * 0.02 + c as f64 * 0.05).min(1.0)
        })
        .unwrap();
        let d = img.downsample2x().unwrap();
        for c in 0..3 {
            for oi in 0..2 {
                for oj in 0..2 {
                    let mut acc = 0.0;
                    for di in 0..2 {
                        for dj in 0..2 {
                            acc += img.get(2 * oi + di, 2 * oj + dj, c);
                        }
                    }
                    assert!((d.get(oi, oj, c) - acc / 4.0).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn pyramid_dims_follow_ceil_halving() {
        let img = ImageField::new(256, 512, 3).unwrap();
        let pyr = build_pyramid(&img, 4).unwrap();
        let dims: Vec<_> = pyr
            .levels()
            .iter()
            .map(|l| (l.height(), l.width()))
            .collect();
        assert_eq!(dims, vec![(256, 512), (128, 256), (64, 128), (32, 64)]);
    }

    #[test]
    fn pyramid_levels_compose_downsamples() {
        let f = ScalarField::from_vec(8, 8, lcg_values(64, 3)).unwrap();
        let pyr = build_pyramid(&f, 3).unwrap();
        let expect = pyr.level(1).downsample2x().unwrap();
        assert_eq!(pyr.level(2), &expect);
        let expect = expect.downsample2x().unwrap();
        assert_eq!(pyr.level(3), &expect);
    }

    #[test]
    fn grad_x_on_column_ramp_is_one_except_last_column() {
        let f = ScalarField::from_fn(3, 5, |_, j| j as f64);
        let g = grad_x(&f).unwrap();
        for i in 0..3 {
            for j in 0..5 {
                let expect = if j == 4 { 0.0 } else { 1.0 };
                assert_eq!(g.get(i, j), expect);
            }
        }
    }

    #[test]
    fn grad_y_on_row_ramp_is_one_except_last_row() {
        let f = ScalarField::from_fn(4, 3, |i, _| 2.0 * i as f64);
        let g = grad_y(&f).unwrap();
        for i in 0..4 {
            for j in 0..3 {
                let expect = if i == 3 { 0.0 } else { 2.0 };
                assert_eq!(g.get(i, j), expect);
            }
        }
    }

    #[test]
    fn sparse_map_rejects_nonpositive_masked_depth() {
        let depth = ScalarField::from_vec(1, 2, vec![0.0, 1.5]).unwrap();
        assert!(SparseDepthMap::new(depth.clone(), vec![true, true]).is_err());
        let ok = SparseDepthMap::new(depth, vec![false, true]).unwrap();
        assert_eq!(ok.count(), 1);
        assert!(ok.is_valid(0, 1));
    }

    #[test]
    fn rig_validation_rules() {
        assert!(CameraRig::new(100.0, 0.5, 64, 32, [0.0; 3]).is_ok());
        assert!(CameraRig::new(100.0, 0.0, 64, 32, [0.0; 3]).is_ok());
        assert!(CameraRig::new(0.0, 0.5, 64, 32, [0.0; 3]).is_err());
        assert!(CameraRig::new(100.0, -0.1, 64, 32, [0.0; 3]).is_err());
    }

    #[test]
    fn image_values_validated_to_unit_range() {
        assert!(ImageField::from_vec(1, 1, 1, vec![1.2]).is_err());
        assert!(ImageField::from_vec(1, 1, 1, vec![f64::NAN]).is_err());
        assert!(ImageField::from_vec(1, 1, 1, vec![0.7]).is_ok());
    }

    #[test]
    fn mirror_x_is_involutive() {
        let f = ScalarField::from_vec(3, 4, lcg_values(12, 9)).unwrap();
        assert_eq!(f.mirror_x().mirror_x(), f);
        let img = ImageField::from_fn(3, 4, 3, |i, j, c| {
            ((i * 13 + j * 7 + c * 3) % 11) as f64 / 11.0
        })
        .unwrap();
        assert_eq!(img.mirror_x().mirror_x(), img);
    }
}
