//! LiDAR point-cloud projection, occlusion-artifact filtering, and the
//! 16-bit depth-map container.
//!
//! Points live in the sensor frame; projection shifts them by the sensor's
//! origin expressed in camera coordinates and applies the rig's pinhole
//! model with a per-pixel z-buffer. Because the sensor is displaced from
//! the camera, background points near depth edges can land on pixels that
//! the camera sees as foreground; `occlusion_filter` deletes such leaks
//! with a local window heuristic. Depth maps serialize as 16-bit grayscale
//! PNG with 1/256 m quantization (sample 0 marks invalid pixels), and
//! point clouds as raw little-endian float32 `(x, y, z, reflectance)`
//! records.

use std::path::Path;

use crate::error::{Error, Result};
use crate::field::{CameraRig, SparseDepthMap};

/// A LiDAR return: position in meters (sensor frame) plus reflectance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LidarPoint {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub reflectance: f64,
}

/// An unordered collection of LiDAR returns with finite coordinates.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointCloud {
    pub points: Vec<LidarPoint>,
}

impl PointCloud {
    pub fn validate(&self) -> Result<()> {
        for (k, p) in self.points.iter().enumerate() {
            if !(p.x.is_finite() && p.y.is_finite() && p.z.is_finite()) {
                return Err(Error::Domain(format!(
                    "point {k} has non-finite coordinates ({}, {}, {})",
                    p.x, p.y, p.z
                )));
            }
        }
        Ok(())
    }
}

/// Parses a raw point-cloud buffer: little-endian float32 quadruples
/// `(x, y, z, reflectance)`. Non-finite coordinates are rejected;
/// reflectance is passed through untouched.
pub fn read_pointcloud_bin(bytes: &[u8]) -> Result<PointCloud> {
    if bytes.len() % 16 != 0 {
        return Err(Error::Format(format!(
            "point-cloud buffer length {} is not a multiple of 16",
            bytes.len()
        )));
    }
    let mut points = Vec::with_capacity(bytes.len() / 16);
    for (k, rec) in bytes.chunks_exact(16).enumerate() {
        let field = |o: usize| f32::from_le_bytes(rec[o..o + 4].try_into().unwrap()) as f64;
        let p = LidarPoint {
            x: field(0),
            y: field(4),
            z: field(8),
            reflectance: field(12),
        };
        if !(p.x.is_finite() && p.y.is_finite() && p.z.is_finite()) {
            return Err(Error::Format(format!(
                "point {k} has non-finite coordinates"
            )));
        }
        points.push(p);
    }
    Ok(PointCloud { points })
}

/// Serializes a point cloud to the raw `.bin` layout read by
/// [`read_pointcloud_bin`]. Coordinates are narrowed to f32.
pub fn pointcloud_to_bin(cloud: &PointCloud) -> Vec<u8> {
    let mut out = Vec::with_capacity(cloud.points.len() * 16);
    for p in &cloud.points {
        for v in [p.x, p.y, p.z, p.reflectance] {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    out
}

pub fn save_pointcloud_bin(cloud: &PointCloud, path: &Path) -> Result<()> {
    std::fs::write(path, pointcloud_to_bin(cloud))?;
    Ok(())
}

pub fn load_pointcloud_bin(path: &Path) -> Result<PointCloud> {
    read_pointcloud_bin(&std::fs::read(path)?)
}

/// Projects a point cloud into the camera through the rig's pinhole model.
///
/// `origin_offset` is the sensor origin in camera coordinates, so each
/// point maps to `p + origin_offset` in the camera frame. Points with
/// non-positive camera depth or landing outside the frame are dropped;
/// sub-pixel positions round to the nearest pixel center, and collisions
/// keep the nearest depth.
pub fn project_points(
    cloud: &PointCloud,
    rig: &CameraRig,
    origin_offset: [f64; 3],
) -> Result<SparseDepthMap> {
    rig.validate()?;
    cloud.validate()?;
    let (h, w) = (rig.height, rig.width);
    let (cx, cy) = ((w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0);
    let mut map = SparseDepthMap::empty(h, w);
    for p in &cloud.points {
        let x = p.x + origin_offset[0];
        let y = p.y + origin_offset[1];
        let z = p.z + origin_offset[2];
        if z <= 0.0 {
            continue;
        }
        let u = (rig.focal_px * x / z + cx).round();
        let v = (rig.focal_px * y / z + cy).round();
        if u < 0.0 || v < 0.0 || u >= w as f64 || v >= h as f64 {
            continue;
        }
        let (i, j) = (v as usize, u as usize);
        if !map.is_valid(i, j) || z < map.depth_at(i, j) {
            map.insert(i, j, z)?;
        }
    }
    Ok(map)
}

/// Removes projected points that leak around foreground occluders: any
/// valid pixel whose depth exceeds `(1 + rel_tol)` times the minimum valid
/// depth inside its centered `window`×`window` neighborhood is dropped.
/// Never adds or alters surviving depths.
pub fn occlusion_filter(raw: &SparseDepthMap, window: usize, rel_tol: f64) -> Result<SparseDepthMap> {
    if window < 3 || window % 2 == 0 {
        return Err(Error::Domain(format!(
            "filter window must be odd and >= 3, got {window}"
        )));
    }
    if !rel_tol.is_finite() || rel_tol < 0.0 {
        return Err(Error::Domain(format!(
            "relative tolerance must be finite and >= 0, got {rel_tol}"
        )));
    }
    let (h, w) = (raw.height(), raw.width());
    let half = window / 2;
    let mut out = raw.clone();
    for i in 0..h {
        for j in 0..w {
            if !raw.is_valid(i, j) {
                continue;
            }
            let mut min_depth = f64::INFINITY;
            for ii in i.saturating_sub(half)..=(i + half).min(h - 1) {
                for jj in j.saturating_sub(half)..=(j + half).min(w - 1) {
                    if raw.is_valid(ii, jj) {
                        min_depth = min_depth.min(raw.depth_at(ii, jj));
                    }
                }
            }
            if raw.depth_at(i, j) > (1.0 + rel_tol) * min_depth {
                out.remove(i, j);
            }
        }
    }
    Ok(out)
}

/// A quantized depth image: `depth_m = sample / 256`, sample 0 = invalid.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthPng16 {
    pub width: usize,
    pub height: usize,
    pub samples: Vec<u16>,
}

/// Quantizes a depth map to 1/256 m samples. Valid depths must stay below
/// 256 m; a valid depth small enough to round to the invalid sentinel is
/// bumped to the smallest representable sample.
pub fn encode_depth_png(map: &SparseDepthMap) -> Result<DepthPng16> {
    let (h, w) = (map.height(), map.width());
    let mut samples = vec![0u16; h * w];
    for i in 0..h {
        for j in 0..w {
            if !map.is_valid(i, j) {
                continue;
            }
            let d = map.depth_at(i, j);
            if d >= 256.0 {
                return Err(Error::Range(format!(
                    "depth {d} m at ({i}, {j}) exceeds the 16-bit container limit"
                )));
            }
            let s = (d * 256.0).round() as u32;
            samples[i * w + j] = (s.max(1)) as u16;
        }
    }
    Ok(DepthPng16 {
        width: w,
        height: h,
        samples,
    })
}

/// Inverse of [`encode_depth_png`]: zero samples decode to invalid pixels.
pub fn decode_depth_png(png: &DepthPng16) -> Result<SparseDepthMap> {
    if png.samples.len() != png.width * png.height {
        return Err(Error::ShapeMismatch(format!(
            "{} samples for a {}x{} depth image",
            png.samples.len(),
            png.height,
            png.width
        )));
    }
    let mut map = SparseDepthMap::empty(png.height, png.width);
    for i in 0..png.height {
        for j in 0..png.width {
            let s = png.samples[i * png.width + j];
            if s > 0 {
                map.insert(i, j, s as f64 / 256.0)?;
            }
        }
    }
    Ok(map)
}

pub fn save_depth_png(png: &DepthPng16, path: &Path) -> Result<()> {
    let mut buf = image::ImageBuffer::<image::Luma<u16>, Vec<u16>>::new(
        png.width as u32,
        png.height as u32,
    );
    if png.samples.len() != png.width * png.height {
        return Err(Error::ShapeMismatch(format!(
            "{} samples for a {}x{} depth image",
            png.samples.len(),
            png.height,
            png.width
        )));
    }
    for (k, px) in buf.pixels_mut().enumerate() {
        px.0[0] = png.samples[k];
    }
    buf.save_with_format(path, image::ImageFormat::Png)?;
    Ok(())
}

pub fn load_depth_png(path: &Path) -> Result<DepthPng16> {
    let img = image::open(path)?;
    match img {
        image::DynamicImage::ImageLuma16(buf) => {
            let (w, h) = (buf.width() as usize, buf.height() as usize);
            Ok(DepthPng16 {
                width: w,
                height: h,
                samples: buf.into_raw(),
            })
        }
        other => Err(Error::Format(format!(
            "expected 16-bit grayscale PNG, got {:?}",
            other.color()
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rig(h: usize, w: usize, focal: f64) -> CameraRig {
        CameraRig::new(focal, 0.5, w, h, [0.0, 0.0, 0.0]).unwrap()
    }

    fn lcg(state: &mut u64) -> f64 {
        *state = state
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        (*state >> 11) as f64 / (1u64 << 53) as f64
    }

    #[test]
    fn axis_point_lands_in_the_center_pixel() {
        let cloud = PointCloud {
            points: vec![LidarPoint {
                x: 0.0,
                y: 0.0,
                z: 10.0,
                reflectance: 0.3,
            }],
        };
        let map = project_points(&cloud, &rig(11, 11, 10.0), [0.0, 0.0, 0.0]).unwrap();
        assert_eq!(map.count(), 1);
        assert_eq!(map.depth_at(5, 5), 10.0);
    }

    #[test]
    fn nearer_point_wins_the_z_buffer() {
        let mk = |z: f64| LidarPoint {
            x: 0.0,
            y: 0.0,
            z,
            reflectance: 0.0,
        };
        let cloud = PointCloud {
            points: vec![mk(9.0), mk(5.0), mk(7.0)],
        };
        let map = project_points(&cloud, &rig(11, 11, 10.0), [0.0, 0.0, 0.0]).unwrap();
        assert_eq!(map.depth_at(5, 5), 5.0);
    }

    #[test]
    fn behind_camera_and_out_of_frame_points_are_dropped() {
        let pts = [
            [0.0, 0.0, -4.0],  // behind the camera
            [0.0, 0.0, 0.0],   // on the camera plane
            [100.0, 0.0, 1.0], // off the right edge
            [0.0, -50.0, 1.0], // above the top edge
        ];
        let cloud = PointCloud {
            points: pts
                .iter()
                .map(|p| LidarPoint {
                    x: p[0],
                    y: p[1],
                    z: p[2],
                    reflectance: 0.0,
                })
                .collect(),
        };
        let map = project_points(&cloud, &rig(9, 9, 10.0), [0.0, 0.0, 0.0]).unwrap();
        assert_eq!(map.count(), 0);
    }

    #[test]
    fn random_clouds_match_a_brute_force_projection() {
        let r = rig(24, 40, 30.0);
        let offset = [0.1, -0.2, 0.05];
        let mut state = 99u64;
        let cloud = PointCloud {
            points: (0..500)
                .map(|_| LidarPoint {
                    x: (lcg(&mut state) - 0.5) * 20.0,
                    y: (lcg(&mut state) - 0.5) * 12.0,
                    z: lcg(&mut state) * 30.0 - 2.0,
                    reflectance: lcg(&mut state),
                })
                .collect(),
        };
        let map = project_points(&cloud, &r, offset).unwrap();
        // Oracle: scan every pixel for the nearest point that rounds to it.
        for i in 0..r.height {
            for j in 0..r.width {
                let mut best = f64::INFINITY;
                for p in &cloud.points {
                    let (x, y, z) = (p.x + offset[0], p.y + offset[1], p.z + offset[2]);
                    if z <= 0.0 {
                        continue;
                    }
                    let u = (r.focal_px * x / z + (r.width as f64 - 1.0) / 2.0).round();
                    let v = (r.focal_px * y / z + (r.height as f64 - 1.0) / 2.0).round();
                    if u == j as f64 && v == i as f64 {
                        best = best.min(z);
                    }
                }
                if best.is_finite() {
                    assert_eq!(map.depth_at(i, j), best, "pixel ({i}, {j})");
                } else {
                    assert!(!map.is_valid(i, j), "pixel ({i}, {j})");
                }
            }
        }
    }

    #[test]
    fn plane_depths_agree_between_camera_and_sensor_origins() {
        // A fronto-parallel plane sampled from a laterally displaced sensor:
        // projecting with and without the offset moves pixels around but
        // every stored depth is the plane distance, so overlapping pixels
        // agree exactly.
        let r = rig(16, 24, 20.0);
        let offset = [0.3, -0.2, 0.0];
        let mut points = Vec::new();
        for iy in -30..30 {
            for ix in -40..40 {
                points.push(LidarPoint {
                    x: ix as f64 * 0.1 - offset[0],
                    y: iy as f64 * 0.1 - offset[1],
                    z: 8.0,
                    reflectance: 0.5,
                });
            }
        }
        let cloud = PointCloud { points };
        let with = project_points(&cloud, &r, offset).unwrap();
        let without = project_points(&cloud, &r, [0.0, 0.0, 0.0]).unwrap();
        let mut overlap = 0;
        for i in 0..16 {
            for j in 0..24 {
                if with.is_valid(i, j) && without.is_valid(i, j) {
                    assert_eq!(with.depth_at(i, j), without.depth_at(i, j));
                    overlap += 1;
                }
            }
        }
        assert!(overlap > 50, "plane projections barely overlap: {overlap}");
    }

    #[test]
    fn isolated_points_survive_the_filter() {
        let mut map = SparseDepthMap::empty(9, 9);
        map.insert(4, 4, 17.0).unwrap();
        let out = occlusion_filter(&map, 7, 0.05).unwrap();
        assert_eq!(out.depth_at(4, 4), 17.0);
        assert_eq!(out.count(), 1);
    }

    #[test]
    fn background_leak_next_to_a_pole_is_removed() {
        let mut map = SparseDepthMap::empty(9, 9);
        map.insert(4, 4, 5.0).unwrap();
        map.insert(4, 5, 30.0).unwrap();
        let out = occlusion_filter(&map, 7, 0.05).unwrap();
        assert!(out.is_valid(4, 4));
        assert!(!out.is_valid(4, 5));
    }

    #[test]
    fn depths_within_tolerance_of_the_minimum_survive() {
        let mut map = SparseDepthMap::empty(5, 5);
        map.insert(2, 1, 10.0).unwrap();
        map.insert(2, 3, 10.4).unwrap(); // within 5% of 10.0
        let out = occlusion_filter(&map, 5, 0.05).unwrap();
        assert_eq!(out.count(), 2);
    }

    #[test]
    fn filter_only_removes_points() {
        let mut state = 7u64;
        let mut map = SparseDepthMap::empty(14, 18);
        for i in 0..14 {
            for j in 0..18 {
                if lcg(&mut state) < 0.4 {
                    map.insert(i, j, 1.0 + lcg(&mut state) * 40.0).unwrap();
                }
            }
        }
        let out = occlusion_filter(&map, 3, 0.1).unwrap();
        for i in 0..14 {
            for j in 0..18 {
                if out.is_valid(i, j) {
                    assert!(map.is_valid(i, j));
                    assert_eq!(out.depth_at(i, j), map.depth_at(i, j));
                }
            }
        }
        assert!(out.count() <= map.count());
    }

    #[test]
    fn bad_filter_windows_are_rejected() {
        let map = SparseDepthMap::empty(5, 5);
        assert!(occlusion_filter(&map, 4, 0.05).is_err());
        assert!(occlusion_filter(&map, 1, 0.05).is_err());
        assert!(occlusion_filter(&map, 5, -0.1).is_err());
    }

    #[test]
    fn one_meter_encodes_to_sample_256() {
        let mut map = SparseDepthMap::empty(1, 2);
        map.insert(0, 0, 1.0).unwrap();
        let png = encode_depth_png(&map).unwrap();
        assert_eq!(png.samples, vec![256, 0]);
        let back = decode_depth_png(&png).unwrap();
        assert_eq!(back.depth_at(0, 0), 1.0);
        assert!(!back.is_valid(0, 1));
    }

    #[test]
    fn random_maps_round_trip_within_half_a_sample() {
        let mut state = 1234u64;
        let mut map = SparseDepthMap::empty(20, 30);
        for i in 0..20 {
            for j in 0..30 {
                if lcg(&mut state) < 0.7 {
                    map.insert(i, j, 0.5 + lcg(&mut state) * 250.0).unwrap();
                }
            }
        }
        let back = decode_depth_png(&encode_depth_png(&map).unwrap()).unwrap();
        for i in 0..20 {
            for j in 0..30 {
                assert_eq!(map.is_valid(i, j), back.is_valid(i, j));
                if map.is_valid(i, j) {
                    let err = (map.depth_at(i, j) - back.depth_at(i, j)).abs();
                    assert!(err <= 1.0 / 512.0, "error {err} at ({i}, {j})");
                }
            }
        }
    }

    #[test]
    fn depths_at_or_beyond_256_meters_are_range_errors() {
        let mut map = SparseDepthMap::empty(1, 1);
        map.insert(0, 0, 256.0).unwrap();
        assert!(matches!(encode_depth_png(&map), Err(Error::Range(_))));
    }

    #[test]
    fn tiny_valid_depths_stay_valid_after_encoding() {
        let mut map = SparseDepthMap::empty(1, 1);
        map.insert(0, 0, 1e-3).unwrap();
        let png = encode_depth_png(&map).unwrap();
        assert_eq!(png.samples[0], 1);
        assert!(decode_depth_png(&png).unwrap().is_valid(0, 0));
    }

    #[test]
    fn sixteen_zero_bytes_parse_to_the_origin() {
        let cloud = read_pointcloud_bin(&[0u8; 16]).unwrap();
        assert_eq!(
            cloud.points,
            vec![LidarPoint {
                x: 0.0,
                y: 0.0,
                z: 0.0,
                reflectance: 0.0
            }]
        );
    }

    #[test]
    fn hand_encoded_points_parse_exactly() {
        let mut bytes = Vec::new();
        for v in [1.0f32, 2.0, 3.0, 0.5] {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        let cloud = read_pointcloud_bin(&bytes).unwrap();
        assert_eq!(
            cloud.points,
            vec![LidarPoint {
                x: 1.0,
                y: 2.0,
                z: 3.0,
                reflectance: 0.5
            }]
        );
        assert_eq!(pointcloud_to_bin(&cloud), bytes);
    }

    #[test]
    fn misaligned_buffers_are_format_errors() {
        for len in [1usize, 7, 15, 17, 31, 100] {
            assert!(
                matches!(read_pointcloud_bin(&vec![0u8; len]), Err(Error::Format(_))),
                "length {len}"
            );
        }
    }

    #[test]
    fn non_finite_coordinates_are_rejected_but_reflectance_is_free() {
        let mut bytes = Vec::new();
        for v in [f32::NAN, 2.0, 3.0, 0.5] {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        assert!(read_pointcloud_bin(&bytes).is_err());
        let mut bytes = Vec::new();
        for v in [1.0f32, 2.0, 3.0, f32::INFINITY] {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        assert_eq!(read_pointcloud_bin(&bytes).unwrap().points.len(), 1);
    }

    #[test]
    fn fuzzed_buffers_never_panic() {
        let mut state = 5u64;
        for _ in 0..256 {
            let len = (lcg(&mut state) * 96.0) as usize;
            let bytes: Vec<u8> = (0..len).map(|_| (lcg(&mut state) * 256.0) as u8).collect();
            let _ = read_pointcloud_bin(&bytes);
        }
    }

    #[test]
    fn depth_png_files_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("depth.png");
        let mut map = SparseDepthMap::empty(6, 9);
        let mut state = 3u64;
        for i in 0..6 {
            for j in 0..9 {
                if lcg(&mut state) < 0.5 {
                    map.insert(i, j, 1.0 + lcg(&mut state) * 80.0).unwrap();
                }
            }
        }
        let png = encode_depth_png(&map).unwrap();
        save_depth_png(&png, &path).unwrap();
        let back = load_depth_png(&path).unwrap();
        assert_eq!(png, back);
    }

    #[test]
    fn eight_bit_files_are_rejected_by_the_depth_loader() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("gray.png");
        let img = crate::field::ImageField::from_fn(4, 4, 1, |i, j, _| {
            (i + j) as f64 / 8.0
        })
        .unwrap();
        crate::io::save_image_png(&img, &path).unwrap();
        assert!(matches!(load_depth_png(&path), Err(Error::Format(_))));
    }

    #[test]
    fn projection_depths_come_from_camera_frame_z() {
        // A sensor sitting 0.3 m behind the camera sees the plane at 8.3 m;
        // projecting with the forward offset restores camera depths.
        let cloud = PointCloud {
            points: vec![LidarPoint {
                x: 0.0,
                y: 0.0,
                z: 8.3,
                reflectance: 0.0,
            }],
        };
        let map = project_points(&cloud, &rig(11, 11, 10.0), [0.0, 0.0, -0.3]).unwrap();
        assert_eq!(map.depth_at(5, 5), 8.0);
    }
}
