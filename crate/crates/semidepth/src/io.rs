//! File formats for fields: 8-bit PNG for viewable images and PFM
//! (portable float map) for float round-trips.
//!
//! PNG samples are normalized to `[0, 1]` by dividing by 255 on load and
//! quantized by rounding on save. PFM files use 32-bit little-endian floats
//! (scale written as −1.0) with rows stored bottom-to-top, so saving and
//! reloading a field is exact up to `f64 → f32` rounding.

use std::fs;
use std::path::Path;

use image::{DynamicImage, GrayImage, RgbImage};

use crate::error::{Error, Result};
use crate::field::{ImageField, ScalarField};

/// Saves an image field as an 8-bit grayscale or RGB PNG, rounding each
/// sample to the nearest 1/255 step.
pub fn save_image_png(image: &ImageField, path: &Path) -> Result<()> {
    let (h, w) = (image.height(), image.width());
    let byte = |v: f64| (v * 255.0).round().clamp(0.0, 255.0) as u8;
    match image.channels() {
        1 => {
            let mut out = GrayImage::new(w as u32, h as u32);
            for i in 0..h {
                for j in 0..w {
                    out.put_pixel(j as u32, i as u32, image::Luma([byte(image.get(i, j, 0))]));
                }
            }
            out.save(path)?;
        }
        3 => {
            let mut out = RgbImage::new(w as u32, h as u32);
            for i in 0..h {
                for j in 0..w {
                    let px = [
                        byte(image.get(i, j, 0)),
                        byte(image.get(i, j, 1)),
                        byte(image.get(i, j, 2)),
                    ];
                    out.put_pixel(j as u32, i as u32, image::Rgb(px));
                }
            }
            out.save(path)?;
        }
        c => return Err(Error::Domain(format!("cannot encode {c}-channel PNG"))),
    }
    Ok(())
}

/// Loads an 8-bit grayscale or RGB PNG as an image field with values in
/// `[0, 1]` (sample / 255).
pub fn load_image_png(path: &Path) -> Result<ImageField> {
    let decoded = image::open(path)?;
    match decoded {
        DynamicImage::ImageLuma8(img) => {
            let (w, h) = (img.width() as usize, img.height() as usize);
            ImageField::from_vec(
                h,
                w,
                1,
                img.into_raw().iter().map(|&b| b as f64 / 255.0).collect(),
            )
        }
        DynamicImage::ImageRgb8(img) => {
            let (w, h) = (img.width() as usize, img.height() as usize);
            ImageField::from_vec(
                h,
                w,
                3,
                img.into_raw().iter().map(|&b| b as f64 / 255.0).collect(),
            )
        }
        other => Err(Error::Format(format!(
            "unsupported PNG layout {:?}; expected 8-bit grayscale or RGB",
            other.color()
        ))),
    }
}

/// Serializes samples as a PFM file: `Pf` (one channel) or `PF` (three),
/// dimensions, scale −1.0 (little-endian), then rows bottom-to-top.
fn write_pfm(path: &Path, height: usize, width: usize, channels: usize, data: &[f64]) -> Result<()> {
    let magic = if channels == 3 { "PF" } else { "Pf" };
    let mut bytes = format!("{magic}\n{width} {height}\n-1.0\n").into_bytes();
    bytes.reserve(height * width * channels * 4);
    for i in (0..height).rev() {
        let row = &data[i * width * channels..(i + 1) * width * channels];
        for &v in row {
            bytes.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    fs::write(path, bytes)?;
    Ok(())
}

/// Parsed PFM payload: dimensions plus row-major top-down samples.
struct PfmPayload {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f64>,
}

fn pfm_token(bytes: &[u8], pos: &mut usize) -> Result<String> {
    while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    if start == *pos {
        return Err(Error::Format("truncated PFM header".into()));
    }
    std::str::from_utf8(&bytes[start..*pos])
        .map(str::to_owned)
        .map_err(|_| Error::Format("non-ASCII PFM header".into()))
}

fn read_pfm(path: &Path) -> Result<PfmPayload> {
    let bytes = fs::read(path)?;
    let mut pos = 0;
    let magic = pfm_token(&bytes, &mut pos)?;
    let channels = match magic.as_str() {
        "Pf" => 1,
        "PF" => 3,
        other => return Err(Error::Format(format!("bad PFM magic {other:?}"))),
    };
    let width: usize = pfm_token(&bytes, &mut pos)?
        .parse()
        .map_err(|_| Error::Format("bad PFM width".into()))?;
    let height: usize = pfm_token(&bytes, &mut pos)?
        .parse()
        .map_err(|_| Error::Format("bad PFM height".into()))?;
    let scale: f64 = pfm_token(&bytes, &mut pos)?
        .parse()
        .map_err(|_| Error::Format("bad PFM scale".into()))?;
    if scale == 0.0 || !scale.is_finite() {
        return Err(Error::Format(format!("bad PFM scale {scale}")));
    }
    // Exactly one whitespace byte separates the header from the samples.
    pos += 1;
    let n = height
        .checked_mul(width)
        .and_then(|p| p.checked_mul(channels * 4))
        .ok_or_else(|| Error::Format("PFM dimensions overflow".into()))?;
    if bytes.len().saturating_sub(pos) != n {
        return Err(Error::Format(format!(
            "PFM payload holds {} bytes, expected {n}",
            bytes.len().saturating_sub(pos)
        )));
    }
    let little_endian = scale < 0.0;
    let mut data = vec![0.0; height * width * channels];
    for file_row in 0..height {
        let image_row = height - 1 - file_row;
        for k in 0..width * channels {
            let at = pos + (file_row * width * channels + k) * 4;
            let raw: [u8; 4] = bytes[at..at + 4].try_into().unwrap();
            let v = if little_endian {
                f32::from_le_bytes(raw)
            } else {
                f32::from_be_bytes(raw)
            };
            data[image_row * width * channels + k] = v as f64;
        }
    }
    Ok(PfmPayload {
        height,
        width,
        channels,
        data,
    })
}

/// Saves a scalar field as a one-channel (`Pf`) PFM file.
pub fn save_scalar_pfm(field: &ScalarField, path: &Path) -> Result<()> {
    write_pfm(path, field.height(), field.width(), 1, field.data())
}

/// Loads a one-channel (`Pf`) PFM file as a scalar field; all samples must
/// be finite.
pub fn load_scalar_pfm(path: &Path) -> Result<ScalarField> {
    let pfm = read_pfm(path)?;
    if pfm.channels != 1 {
        return Err(Error::Format("expected one-channel PFM (Pf)".into()));
    }
    ScalarField::from_vec(pfm.height, pfm.width, pfm.data)
}

/// Saves an image field as a PFM file (`Pf` for one channel, `PF` for
/// three), keeping full float precision for round-trips.
pub fn save_image_pfm(image: &ImageField, path: &Path) -> Result<()> {
    write_pfm(
        path,
        image.height(),
        image.width(),
        image.channels(),
        image.data(),
    )
}

/// Loads a PFM file as an image field; samples must lie in `[0, 1]`.
pub fn load_image_pfm(path: &Path) -> Result<ImageField> {
    let pfm = read_pfm(path)?;
    ImageField::from_vec(pfm.height, pfm.width, pfm.channels, pfm.data)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tmp(name: &str) -> (tempfile::TempDir, std::path::PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(name);
        (dir, path)
    }

    #[test]
    fn png_round_trip_is_exact_on_the_255_grid() {
        let img = ImageField::from_fn(5, 7, 3, |i, j, c| {
            ((i * 31 + j * 7 + c * 3) % 256) as f64 / 255.0
        })
        .unwrap();
        let (_d, path) = tmp("rt.png");
        save_image_png(&img, &path).unwrap();
        let back = load_image_png(&path).unwrap();
        assert_eq!(back.channels(), 3);
        assert_eq!(back.data(), img.data());
    }

    #[test]
    fn png_save_quantizes_to_nearest_step() {
        let img =
            ImageField::from_fn(3, 4, 1, |i, j, _| (0.1 + 0.07 * (i * 4 + j) as f64).min(1.0))
                .unwrap();
        let (_d, path) = tmp("q.png");
        save_image_png(&img, &path).unwrap();
        let back = load_image_png(&path).unwrap();
        assert_eq!(back.channels(), 1);
        for (a, b) in back.data().iter().zip(img.data()) {
            assert!((a - b).abs() <= 0.5 / 255.0 + 1e-12);
        }
    }

    #[test]
    fn pfm_scalar_round_trip_is_exact_at_f32_precision() {
        let field = ScalarField::from_fn(6, 5, |i, j| {
            (i as f64 - 2.5) * 13.7 + j as f64 * 0.003 - 40.0
        });
        let (_d, path) = tmp("rt.pfm");
        save_scalar_pfm(&field, &path).unwrap();
        let back = load_scalar_pfm(&path).unwrap();
        assert_eq!(back.height(), 6);
        assert_eq!(back.width(), 5);
        for (a, b) in back.data().iter().zip(field.data()) {
            assert_eq!(*a, *b as f32 as f64);
        }
    }

    #[test]
    fn pfm_image_round_trip_preserves_three_channels() {
        let img = ImageField::from_fn(4, 3, 3, |i, j, c| {
            ((i * 9 + j * 3 + c) as f64 / 35.0).min(1.0)
        })
        .unwrap();
        let (_d, path) = tmp("rgb.pfm");
        save_image_pfm(&img, &path).unwrap();
        let back = load_image_pfm(&path).unwrap();
        assert_eq!(back.channels(), 3);
        for (a, b) in back.data().iter().zip(img.data()) {
            assert_eq!(*a, *b as f32 as f64);
        }
    }

    #[test]
    fn pfm_header_and_row_order_follow_the_format() {
        // Two rows with distinct values: the file must start with the
        // grayscale magic and store the bottom row first.
        let field = ScalarField::from_vec(2, 1, vec![0.25, 0.75]).unwrap();
        let (_d, path) = tmp("layout.pfm");
        save_scalar_pfm(&field, &path).unwrap();
        let bytes = fs::read(&path).unwrap();
        let header = b"Pf\n1 2\n-1.0\n";
        assert_eq!(&bytes[..header.len()], header);
        let first = f32::from_le_bytes(bytes[header.len()..header.len() + 4].try_into().unwrap());
        assert_eq!(first, 0.75);
    }

    #[test]
    fn pfm_reader_honors_big_endian_scale() {
        // Hand-built file with positive scale: samples are big-endian.
        let mut bytes = b"Pf\n2 1\n1.0\n".to_vec();
        bytes.extend_from_slice(&1.5f32.to_be_bytes());
        bytes.extend_from_slice(&(-2.0f32).to_be_bytes());
        let (_d, path) = tmp("be.pfm");
        fs::write(&path, bytes).unwrap();
        let field = load_scalar_pfm(&path).unwrap();
        assert_eq!(field.data(), &[1.5, -2.0]);
    }

    #[test]
    fn malformed_pfm_files_are_rejected() {
        let (_d, dir) = tmp("unused");
        let dir = dir.parent().unwrap().to_path_buf();

        let bad_magic = dir.join("magic.pfm");
        fs::write(&bad_magic, b"P6\n1 1\n-1.0\n\0\0\0\0").unwrap();
        assert!(matches!(load_scalar_pfm(&bad_magic), Err(Error::Format(_))));

        let truncated = dir.join("short.pfm");
        fs::write(&truncated, b"Pf\n2 2\n-1.0\n\0\0\0\0").unwrap();
        assert!(matches!(load_scalar_pfm(&truncated), Err(Error::Format(_))));

        let no_header = dir.join("empty.pfm");
        fs::write(&no_header, b"Pf\n2").unwrap();
        assert!(matches!(load_scalar_pfm(&no_header), Err(Error::Format(_))));

        let wrong_kind = dir.join("color.pfm");
        let img = ImageField::from_fn(1, 1, 3, |_, _, _| 0.5).unwrap();
        save_image_pfm(&img, &wrong_kind).unwrap();
        assert!(matches!(load_scalar_pfm(&wrong_kind), Err(Error::Format(_))));
    }

    #[test]
    fn non_finite_pfm_samples_fail_field_validation() {
        let mut bytes = b"Pf\n1 1\n-1.0\n".to_vec();
        bytes.extend_from_slice(&f32::NAN.to_le_bytes());
        let (_d, path) = tmp("nan.pfm");
        fs::write(&path, bytes).unwrap();
        assert!(load_scalar_pfm(&path).is_err());
    }
}
