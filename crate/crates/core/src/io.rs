//! PNG reading and writing for images, disparity maps, and masks.
//!
//! Loaded images are tagged [`ColorSpace::Encoded`]. Disparity maps are
//! written as 16-bit grayscale so the quantization step is 1/65535.

use std::fs;
use std::path::{Path, PathBuf};

use image::{DynamicImage, ImageFormat};

use crate::buffer::{ensure_same_dims, ColorSpace, DisparityMap, ImageBuffer, Mask};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum BitDepth {
    #[default]
    Eight,
    Sixteen,
}

fn decode(path: &Path) -> Result<DynamicImage> {
    let reader = image::ImageReader::open(path).map_err(|e| Error::io(path, e))?;
    let reader = reader.with_guessed_format().map_err(|e| Error::io(path, e))?;
    if reader.format() != Some(ImageFormat::Png) {
        return Err(Error::UnsupportedFormat {
            path: path.to_path_buf(),
            detail: format!("{:?}", reader.format()),
        });
    }
    reader.decode().map_err(|source| Error::Decode {
        path: path.to_path_buf(),
        source,
    })
}

fn to_buffer(path: &Path, img: DynamicImage) -> Result<ImageBuffer> {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let (channels, data): (usize, Vec<f32>) = match img {
        DynamicImage::ImageLuma8(b) => (1, b.into_raw().iter().map(|v| *v as f32 / 255.0).collect()),
        DynamicImage::ImageLumaA8(b) => (2, b.into_raw().iter().map(|v| *v as f32 / 255.0).collect()),
        DynamicImage::ImageRgb8(b) => (3, b.into_raw().iter().map(|v| *v as f32 / 255.0).collect()),
        DynamicImage::ImageRgba8(b) => (4, b.into_raw().iter().map(|v| *v as f32 / 255.0).collect()),
        DynamicImage::ImageLuma16(b) => (1, b.into_raw().iter().map(|v| *v as f32 / 65535.0).collect()),
        DynamicImage::ImageLumaA16(b) => (2, b.into_raw().iter().map(|v| *v as f32 / 65535.0).collect()),
        DynamicImage::ImageRgb16(b) => (3, b.into_raw().iter().map(|v| *v as f32 / 65535.0).collect()),
        DynamicImage::ImageRgba16(b) => (4, b.into_raw().iter().map(|v| *v as f32 / 65535.0).collect()),
        other => {
            return Err(Error::UnsupportedFormat {
                path: path.to_path_buf(),
                detail: format!("{:?}", other.color()),
            })
        }
    };
    ImageBuffer::new(w, h, channels, ColorSpace::Encoded, data)
}

/// Loads an 8- or 16-bit PNG.
pub fn load_image(path: impl AsRef<Path>) -> Result<ImageBuffer> {
    let path = path.as_ref();
    to_buffer(path, decode(path)?)
}

/// Decodes PNG bytes held in memory.
pub fn decode_png(bytes: &[u8]) -> Result<ImageBuffer> {
    let path = PathBuf::from("<memory>");
    let img = image::load_from_memory_with_format(bytes, ImageFormat::Png).map_err(|source| Error::Decode {
        path: path.clone(),
        source,
    })?;
    to_buffer(&path, img)
}

fn quantize8(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

fn quantize16(v: f32) -> u16 {
    (v.clamp(0.0, 1.0) as f64 * 65535.0).round() as u16
}

fn to_dynamic(img: &ImageBuffer, depth: BitDepth) -> DynamicImage {
    let (w, h) = (img.width() as u32, img.height() as u32);
    macro_rules! build {
        ($buf:ident, $q:ident) => {{
            let raw = img.data().iter().map(|v| $q(*v)).collect();
            DynamicImage::$buf(image::ImageBuffer::from_raw(w, h, raw).expect("sized buffer"))
        }};
    }
    match (img.channels(), depth) {
        (1, BitDepth::Eight) => build!(ImageLuma8, quantize8),
        (2, BitDepth::Eight) => build!(ImageLumaA8, quantize8),
        (3, BitDepth::Eight) => build!(ImageRgb8, quantize8),
        (4, BitDepth::Eight) => build!(ImageRgba8, quantize8),
        (1, BitDepth::Sixteen) => build!(ImageLuma16, quantize16),
        (2, BitDepth::Sixteen) => build!(ImageLumaA16, quantize16),
        (3, BitDepth::Sixteen) => build!(ImageRgb16, quantize16),
        (_, BitDepth::Sixteen) => build!(ImageRgba16, quantize16),
        (_, BitDepth::Eight) => build!(ImageRgba8, quantize8),
    }
}

/// Encodes an image as PNG bytes.
pub fn encode_png(img: &ImageBuffer, depth: BitDepth) -> Vec<u8> {
    let mut out = std::io::Cursor::new(Vec::new());
    to_dynamic(img, depth)
        .write_to(&mut out, ImageFormat::Png)
        .expect("PNG encoding into memory cannot fail");
    out.into_inner()
}

/// Writes a PNG, creating parent directories. Samples are written as-is;
/// callers encode linear data first.
pub fn save_image(img: &ImageBuffer, path: impl AsRef<Path>, depth: BitDepth) -> Result<()> {
    let path = path.as_ref();
    write_bytes(path, &encode_png(img, depth))
}

pub(crate) fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    // Write beside the target, then rename over it.
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    static SEQ: std::sync::atomic::AtomicU64 = std::sync::atomic::AtomicU64::new(0);
    let seq = SEQ.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
    let tmp = path.with_file_name(format!(".{name}.{}.{seq}.tmp", std::process::id()));
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Loads a disparity map from channel 0 of a PNG, normalized to `[0, 1]`.
pub fn load_disparity(path: impl AsRef<Path>) -> Result<DisparityMap> {
    DisparityMap::from_image(&load_image(path)?)
}

pub fn save_disparity(map: &DisparityMap, path: impl AsRef<Path>) -> Result<()> {
    save_image(&map.to_image(ColorSpace::Linear), path, BitDepth::Sixteen)
}

/// Writes the disparity PNG plus a `<path>.range` sidecar holding the
/// original `min max` values before normalization.
pub fn save_disparity_with_range(map: &DisparityMap, path: impl AsRef<Path>, original_range: (f64, f64)) -> Result<()> {
    let path = path.as_ref();
    save_disparity(map, path)?;
    let mut sidecar = path.as_os_str().to_owned();
    sidecar.push(".range");
    let sidecar = PathBuf::from(sidecar);
    write_bytes(
        &sidecar,
        format!("{} {}\n", original_range.0, original_range.1).as_bytes(),
    )
}

pub fn load_mask(path: impl AsRef<Path>) -> Result<Mask> {
    let img = load_image(path)?;
    Mask::new(img.width(), img.height(), img.channel(0))
}

pub fn save_mask(mask: &Mask, path: impl AsRef<Path>) -> Result<()> {
    save_image(&mask.to_image(ColorSpace::Linear), path, BitDepth::Eight)
}

/// Loads an image and its disparity map, checking that their sizes agree.
pub fn load_pair(image: impl AsRef<Path>, disparity: impl AsRef<Path>) -> Result<(ImageBuffer, DisparityMap)> {
    let img = load_image(image)?;
    let disp = load_disparity(disparity)?;
    ensure_same_dims(img.dims(), disp.dims())?;
    Ok((img, disp))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(channels: usize) -> ImageBuffer {
        ImageBuffer::from_fn(17, 9, channels, ColorSpace::Encoded, |x, y, c| {
            ((x * 13 + y * 7 + c * 31) % 97) as f32 / 96.0
        })
        .unwrap()
    }

    #[test]
    fn eight_bit_roundtrip_within_half_step() {
        let dir = tempfile::tempdir().unwrap();
        for ch in 1..=4 {
            let img = ramp(ch);
            let p = dir.path().join(format!("img{ch}.png"));
            save_image(&img, &p, BitDepth::Eight).unwrap();
            let back = load_image(&p).unwrap();
            assert_eq!(back.channels(), ch);
            assert_eq!(back.space(), ColorSpace::Encoded);
            let err = img
                .data()
                .iter()
                .zip(back.data())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0f32, f32::max);
            assert!(err <= 0.5 / 255.0 + 1e-7, "err {err}");
        }
    }

    #[test]
    fn sixteen_bit_disparity_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let d = DisparityMap::from_fn(31, 5, |x, _| x as f32 / 30.0).unwrap();
        let p = dir.path().join("d.png");
        save_disparity(&d, &p).unwrap();
        let back = load_disparity(&p).unwrap();
        let (lo, hi) = back.min_max();
        assert!(lo >= 0.0 && hi <= 1.0);
        let err = d
            .data()
            .iter()
            .zip(back.data())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f32, f32::max);
        assert!(err <= 0.5 / 65535.0 + 1e-7);
    }

    #[test]
    fn range_sidecar_written() {
        let dir = tempfile::tempdir().unwrap();
        let d = DisparityMap::filled(2, 2, 0.5).unwrap();
        let p = dir.path().join("d.png");
        save_disparity_with_range(&d, &p, (0.25, 12.5)).unwrap();
        let text = fs::read_to_string(dir.path().join("d.png.range")).unwrap();
        assert_eq!(text.trim(), "0.25 12.5");
    }

    #[test]
    fn truncated_file_is_decode_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.png");
        save_image(&ramp(3), &p, BitDepth::Eight).unwrap();
        let bytes = fs::read(&p).unwrap();
        fs::write(&p, &bytes[..bytes.len() / 2]).unwrap();
        assert!(matches!(load_image(&p), Err(Error::Decode { .. })));
    }

    #[test]
    fn missing_and_non_png() {
        assert!(matches!(load_image("/nonexistent/x.png"), Err(Error::Io { .. })));
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.png");
        fs::write(&p, b"hello world, not an image").unwrap();
        assert!(load_image(&p).is_err());
    }

    #[test]
    fn paired_load_checks_dims() {
        let dir = tempfile::tempdir().unwrap();
        let ip = dir.path().join("i.png");
        let dp = dir.path().join("d.png");
        save_image(&ramp(3), &ip, BitDepth::Eight).unwrap();
        save_disparity(&DisparityMap::filled(4, 4, 0.5).unwrap(), &dp).unwrap();
        assert!(matches!(load_pair(&ip, &dp), Err(Error::DimensionMismatch { .. })));
    }
}
