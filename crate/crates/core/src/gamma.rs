//! Power-law transfer between encoded values and linear irradiance.
//!
//! Coverage channels pass through untouched.

use crate::buffer::{ColorSpace, ImageBuffer};
use crate::error::{Error, Result};
use crate::params::check_gamma;

#[inline]
pub fn decode_value(v: f32, gamma: f64) -> f32 {
    (v as f64).powf(gamma) as f32
}

#[inline]
pub fn encode_value(v: f32, gamma: f64) -> f32 {
    (v as f64).powf(1.0 / gamma) as f32
}

/// `v → v^γ` on color channels; the result is tagged linear.
pub fn gamma_decode(img: &ImageBuffer, gamma: f64) -> Result<ImageBuffer> {
    check_gamma(gamma)?;
    if img.space() != ColorSpace::Encoded {
        return Err(Error::ColorSpace {
            expected: ColorSpace::Encoded,
            found: img.space(),
        });
    }
    let color = img.color_channels();
    Ok(img
        .map_samples(|c, v| if c < color { decode_value(v, gamma) } else { v })
        .with_space(ColorSpace::Linear))
}

/// `v → v^(1/γ)` on color channels; the result is tagged encoded.
pub fn gamma_encode(img: &ImageBuffer, gamma: f64) -> Result<ImageBuffer> {
    check_gamma(gamma)?;
    if img.space() != ColorSpace::Linear {
        return Err(Error::ColorSpace {
            expected: ColorSpace::Linear,
            found: img.space(),
        });
    }
    let color = img.color_channels();
    Ok(img
        .map_samples(|c, v| if c < color { encode_value(v, gamma) } else { v })
        .with_space(ColorSpace::Encoded))
}
