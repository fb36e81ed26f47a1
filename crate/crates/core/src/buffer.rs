//! Image, disparity, mask, and gradient containers.
//!
//! All scalar containers store `f32` samples in row-major order. Values are
//! clamped to `[0, 1]` on construction; every clamped (or non-finite) sample
//! bumps a process-wide counter readable through [`clamped_sample_count`].

use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

static CLAMPED_SAMPLES: AtomicU64 = AtomicU64::new(0);

/// Number of samples clamped into `[0, 1]` since process start.
pub fn clamped_sample_count() -> u64 {
    CLAMPED_SAMPLES.load(Ordering::Relaxed)
}

fn clamp_unit(data: &mut [f32]) {
    let mut clamped = 0u64;
    for v in data.iter_mut() {
        if !(0.0..=1.0).contains(v) {
            *v = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
            clamped += 1;
        }
    }
    if clamped > 0 {
        CLAMPED_SAMPLES.fetch_add(clamped, Ordering::Relaxed);
        log::debug!("clamped {clamped} out-of-range samples");
    }
}

fn check_dims(width: usize, height: usize, len: usize, channels: usize) -> Result<()> {
    if width == 0 || height == 0 {
        return Err(Error::param("size", format!("{width}x{height} is empty")));
    }
    if len != width * height * channels {
        return Err(Error::param(
            "data",
            format!(
                "expected {} samples for {width}x{height}x{channels}, got {len}",
                width * height * channels
            ),
        ));
    }
    Ok(())
}

/// Whether samples hold display-referred (gamma-encoded) values or linear
/// irradiance.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColorSpace {
    Encoded,
    Linear,
}

/// Interleaved `H×W×C` float image with 1 to 4 channels.
///
/// Channel layouts follow PNG: gray, gray+alpha, RGB, RGBA. The last channel
/// of a 2- or 4-channel image is coverage and never takes part in gamma
/// transforms.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageBuffer {
    width: usize,
    height: usize,
    channels: usize,
    space: ColorSpace,
    data: Vec<f32>,
}

impl ImageBuffer {
    pub fn new(width: usize, height: usize, channels: usize, space: ColorSpace, mut data: Vec<f32>) -> Result<Self> {
        if !(1..=4).contains(&channels) {
            return Err(Error::Channels(channels));
        }
        check_dims(width, height, data.len(), channels)?;
        clamp_unit(&mut data);
        Ok(Self {
            width,
            height,
            channels,
            space,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, channels: usize, space: ColorSpace, value: f32) -> Result<Self> {
        Self::new(width, height, channels, space, vec![value; width * height * channels])
    }

    /// Builds an image by evaluating `f(x, y, channel)` for every sample.
    pub fn from_fn(
        width: usize,
        height: usize,
        channels: usize,
        space: ColorSpace,
        mut f: impl FnMut(usize, usize, usize) -> f32,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height * channels);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    data.push(f(x, y, c));
                }
            }
        }
        Self::new(width, height, channels, space, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn space(&self) -> ColorSpace {
        self.space
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn has_alpha(&self) -> bool {
        self.channels == 2 || self.channels == 4
    }

    /// Number of leading channels that carry color.
    pub fn color_channels(&self) -> usize {
        if self.has_alpha() {
            self.channels - 1
        } else {
            self.channels
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f32 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> &[f32] {
        let i = (y * self.width + x) * self.channels;
        &self.data[i..i + self.channels]
    }

    pub fn with_space(mut self, space: ColorSpace) -> Self {
        self.space = space;
        self
    }

    /// Returns the three color channels, expanding gray to RGB and dropping alpha.
    pub fn to_rgb(&self) -> ImageBuffer {
        let mut out = Vec::with_capacity(self.width * self.height * 3);
        for px in self.data.chunks_exact(self.channels) {
            match self.channels {
                1 | 2 => out.extend_from_slice(&[px[0], px[0], px[0]]),
                _ => out.extend_from_slice(&px[..3]),
            }
        }
        ImageBuffer {
            width: self.width,
            height: self.height,
            channels: 3,
            space: self.space,
            data: out,
        }
    }

    /// Coverage channel, or an opaque mask when the image has no alpha.
    pub fn alpha(&self) -> Mask {
        let data = if self.has_alpha() {
            self.data
                .chunks_exact(self.channels)
                .map(|px| px[self.channels - 1])
                .collect()
        } else {
            vec![1.0; self.width * self.height]
        };
        Mask {
            width: self.width,
            height: self.height,
            data,
        }
    }

    /// Builds an RGBA image from a 3-channel color image and a coverage mask.
    pub fn from_rgb_alpha(rgb: &ImageBuffer, alpha: &Mask) -> Result<ImageBuffer> {
        if rgb.channels != 3 {
            return Err(Error::Channels(rgb.channels));
        }
        if rgb.dims() != alpha.dims() {
            return Err(Error::DimensionMismatch {
                expected: rgb.dims(),
                found: alpha.dims(),
            });
        }
        let mut data = Vec::with_capacity(rgb.width * rgb.height * 4);
        for (px, a) in rgb.data.chunks_exact(3).zip(&alpha.data) {
            data.extend_from_slice(&[px[0], px[1], px[2], *a]);
        }
        ImageBuffer::new(rgb.width, rgb.height, 4, rgb.space, data)
    }

    /// Extracts channel `c` as a single-channel scalar map.
    pub fn channel(&self, c: usize) -> Vec<f32> {
        self.data.chunks_exact(self.channels).map(|px| px[c]).collect()
    }

    /// Rounds every sample to the nearest multiple of 1/255.
    pub fn quantize8(&self) -> ImageBuffer {
        let data = self.data.iter().map(|v| (v * 255.0).round() / 255.0).collect();
        ImageBuffer { data, ..self.clone() }
    }

    pub(crate) fn map_samples(&self, f: impl Fn(usize, f32) -> f32) -> ImageBuffer {
        let ch = self.channels;
        let mut data: Vec<f32> = self.data.iter().enumerate().map(|(i, v)| f(i % ch, *v)).collect();
        clamp_unit(&mut data);
        ImageBuffer { data, ..self.clone() }
    }
}

macro_rules! scalar_map {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Clone, Debug, PartialEq)]
        pub struct $name {
            width: usize,
            height: usize,
            data: Vec<f32>,
        }

        impl $name {
            pub fn new(width: usize, height: usize, mut data: Vec<f32>) -> Result<Self> {
                check_dims(width, height, data.len(), 1)?;
                clamp_unit(&mut data);
                Ok(Self { width, height, data })
            }

            pub fn filled(width: usize, height: usize, value: f32) -> Result<Self> {
                Self::new(width, height, vec![value; width * height])
            }

            pub fn from_fn(
                width: usize,
                height: usize,
                mut f: impl FnMut(usize, usize) -> f32,
            ) -> Result<Self> {
                let mut data = Vec::with_capacity(width * height);
                for y in 0..height {
                    for x in 0..width {
                        data.push(f(x, y));
                    }
                }
                Self::new(width, height, data)
            }

            pub fn width(&self) -> usize {
                self.width
            }

            pub fn height(&self) -> usize {
                self.height
            }

            pub fn dims(&self) -> (usize, usize) {
                (self.width, self.height)
            }

            pub fn data(&self) -> &[f32] {
                &self.data
            }

            pub fn into_data(self) -> Vec<f32> {
                self.data
            }

            #[inline]
            pub fn get(&self, x: usize, y: usize) -> f32 {
                self.data[y * self.width + x]
            }

            /// Bilinear sample at continuous pixel coordinates, clamped to the
            /// map's extent.
            pub fn sample_bilinear(&self, x: f64, y: f64) -> f32 {
                let x = x.clamp(0.0, (self.width - 1) as f64);
                let y = y.clamp(0.0, (self.height - 1) as f64);
                let x0 = x.floor() as usize;
                let y0 = y.floor() as usize;
                let x1 = (x0 + 1).min(self.width - 1);
                let y1 = (y0 + 1).min(self.height - 1);
                let fx = x - x0 as f64;
                let fy = y - y0 as f64;
                let top = self.get(x0, y0) as f64 * (1.0 - fx) + self.get(x1, y0) as f64 * fx;
                let bot = self.get(x0, y1) as f64 * (1.0 - fx) + self.get(x1, y1) as f64 * fx;
                (top * (1.0 - fy) + bot * fy) as f32
            }

            /// Same data as a single-channel image.
            pub fn to_image(&self, space: ColorSpace) -> ImageBuffer {
                ImageBuffer {
                    width: self.width,
                    height: self.height,
                    channels: 1,
                    space,
                    data: self.data.clone(),
                }
            }

            pub fn min_max(&self) -> (f32, f32) {
                self.data
                    .iter()
                    .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), v| {
                        (lo.min(*v), hi.max(*v))
                    })
            }
        }
    };
}

scalar_map!(
    /// Per-pixel disparity in `[0, 1]`; larger is closer to the camera.
    DisparityMap
);

scalar_map!(
    /// Per-pixel selection weight in `[0, 1]`; `0` keeps, `1` selects.
    Mask
);

impl DisparityMap {
    /// Reads channel 0 of a single- or multi-channel image as disparity.
    pub fn from_image(img: &ImageBuffer) -> Result<Self> {
        Self::new(img.width(), img.height(), img.channel(0))
    }
}

impl Mask {
    pub fn empty(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0.0; width * height],
        }
    }

    /// Binary mask from a predicate.
    pub fn from_predicate(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(if f(x, y) { 1.0 } else { 0.0 });
            }
        }
        Self { width, height, data }
    }

    #[inline]
    pub fn is_set(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x] > 0.5
    }

    #[inline]
    pub(crate) fn is_set_at(&self, i: usize) -> bool {
        self.data[i] > 0.5
    }

    /// Number of selected (> 0.5) pixels.
    pub fn count(&self) -> usize {
        self.data.iter().filter(|v| **v > 0.5).count()
    }

    pub fn is_empty(&self) -> bool {
        self.count() == 0
    }

    /// Fraction of pixels selected.
    pub fn coverage(&self) -> f64 {
        self.count() as f64 / self.data.len() as f64
    }

    /// Thresholds at 0.5.
    pub fn binarize(&self) -> Mask {
        Mask {
            data: self.data.iter().map(|v| if *v > 0.5 { 1.0 } else { 0.0 }).collect(),
            ..self.clone()
        }
    }

    pub fn union(&self, other: &Mask) -> Result<Mask> {
        self.zip_with(other, f32::max)
    }

    pub fn intersect(&self, other: &Mask) -> Result<Mask> {
        self.zip_with(other, f32::min)
    }

    /// Pixels selected in `self` but not in `other`.
    pub fn subtract(&self, other: &Mask) -> Result<Mask> {
        self.zip_with(other, |a, b| if b > 0.5 { 0.0 } else { a })
    }

    pub fn invert(&self) -> Mask {
        Mask {
            data: self.data.iter().map(|v| 1.0 - v).collect(),
            ..self.clone()
        }
    }

    /// True when every selected pixel of `self` is selected in `other`.
    pub fn is_subset_of(&self, other: &Mask) -> bool {
        self.dims() == other.dims() && self.data.iter().zip(&other.data).all(|(a, b)| *a <= 0.5 || *b > 0.5)
    }

    fn zip_with(&self, other: &Mask, f: impl Fn(f32, f32) -> f32) -> Result<Mask> {
        if self.dims() != other.dims() {
            return Err(Error::DimensionMismatch {
                expected: self.dims(),
                found: other.dims(),
            });
        }
        Ok(Mask {
            data: self.data.iter().zip(&other.data).map(|(a, b)| f(*a, *b)).collect(),
            ..self.clone()
        })
    }
}

/// Two-channel per-pixel vector field, in disparity units per pixel.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientField {
    width: usize,
    height: usize,
    pub(crate) gx: Vec<f32>,
    pub(crate) gy: Vec<f32>,
}

impl GradientField {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            gx: vec![0.0; width * height],
            gy: vec![0.0; width * height],
        }
    }

    pub fn new(width: usize, height: usize, gx: Vec<f32>, gy: Vec<f32>) -> Result<Self> {
        check_dims(width, height, gx.len(), 1)?;
        check_dims(width, height, gy.len(), 1)?;
        if gx.iter().chain(&gy).any(|v| !v.is_finite()) {
            return Err(Error::param("gradient", "non-finite component"));
        }
        Ok(Self { width, height, gx, gy })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn gx(&self) -> &[f32] {
        &self.gx
    }

    pub fn gy(&self) -> &[f32] {
        &self.gy
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> (f32, f32) {
        let i = y * self.width + x;
        (self.gx[i], self.gy[i])
    }

    #[inline]
    pub fn magnitude_at(&self, i: usize) -> f32 {
        self.gx[i].hypot(self.gy[i])
    }

    /// Pixels where the vector is nonzero.
    pub fn support(&self) -> Mask {
        Mask {
            width: self.width,
            height: self.height,
            data: self
                .gx
                .iter()
                .zip(&self.gy)
                .map(|(x, y)| if *x != 0.0 || *y != 0.0 { 1.0 } else { 0.0 })
                .collect(),
        }
    }
}

pub(crate) fn ensure_same_dims(a: (usize, usize), b: (usize, usize)) -> Result<()> {
    if a != b {
        return Err(Error::DimensionMismatch { expected: a, found: b });
    }
    Ok(())
}
