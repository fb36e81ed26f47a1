//! Rendering parameters and the thin-lens blur law.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_PLANE_COUNT: usize = 32;
pub const DEFAULT_GAMMA: f64 = 2.2;

/// Blur radius in pixels of a point at disparity `d` when the lens is focused
/// at `d_f`: `A·|d − d_f|`.
#[inline]
pub fn blur_radius(blur_amount: f64, d: f64, d_f: f64) -> f64 {
    blur_amount * (d - d_f).abs()
}

/// Controls for one bokeh rendering.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RenderParams {
    /// Maximum blur radius in pixels per unit disparity difference (`A`).
    pub blur_amount: f64,
    /// Disparity rendered in focus (`d_f`).
    pub refocus_disparity: f64,
    pub gamma: f64,
    pub plane_count: usize,
}

impl Default for RenderParams {
    fn default() -> Self {
        Self {
            blur_amount: 0.0,
            refocus_disparity: 0.5,
            gamma: DEFAULT_GAMMA,
            plane_count: DEFAULT_PLANE_COUNT,
        }
    }
}

impl RenderParams {
    pub fn new(blur_amount: f64, refocus_disparity: f64, gamma: f64, plane_count: usize) -> Result<Self> {
        let p = Self {
            blur_amount,
            refocus_disparity,
            gamma,
            plane_count,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.blur_amount >= 0.0 && self.blur_amount.is_finite()) {
            return Err(Error::param("blur_amount", "must be finite and >= 0"));
        }
        if !(0.0..=1.0).contains(&self.refocus_disparity) {
            return Err(Error::param("refocus_disparity", "must lie in [0, 1]"));
        }
        check_gamma(self.gamma)?;
        if self.plane_count < 2 {
            return Err(Error::param("plane_count", "must be >= 2"));
        }
        Ok(())
    }

    pub fn radius_at(&self, d: f64) -> f64 {
        blur_radius(self.blur_amount, d, self.refocus_disparity)
    }
}

pub(crate) fn check_gamma(gamma: f64) -> Result<()> {
    if !(1.0..=4.0).contains(&gamma) {
        return Err(Error::param("gamma", format!("{gamma} outside [1, 4]")));
    }
    Ok(())
}
