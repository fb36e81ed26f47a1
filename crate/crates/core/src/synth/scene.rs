use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::buffer::ImageBuffer;
use crate::error::{Error, Result};
use crate::oracle::{PlanarLayer, PlaneCoeffs, SceneSpec};
use crate::params::{check_gamma, DEFAULT_GAMMA};

use super::assets::{resize, Assets};

/// Disparity range shared out between the layers of a scene.
pub const DISPARITY_RANGE: (f64, f64) = (0.05, 0.95);
const MIN_BAND: f64 = 0.01;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DisparityMode {
    #[default]
    Constant,
    Planar,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RefocusMode {
    /// One refocus point per layer, at the layer's disparity.
    #[default]
    ObjectDisparities,
    Explicit(Vec<f64>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssetDirs {
    pub backgrounds: PathBuf,
    pub foregrounds: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub n_scenes: usize,
    pub width: usize,
    pub height: usize,
    pub n_foregrounds: usize,
    pub disparity_mode: DisparityMode,
    pub blur_params: Vec<f64>,
    pub refocus: RefocusMode,
    pub gamma: f64,
    pub rays: usize,
    pub seed: u64,
    /// `None` uses the built-in procedural assets.
    pub asset_dirs: Option<AssetDirs>,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            n_scenes: 10,
            width: 256,
            height: 256,
            n_foregrounds: 3,
            disparity_mode: DisparityMode::Constant,
            blur_params: vec![20.0, 40.0, 60.0, 80.0],
            refocus: RefocusMode::ObjectDisparities,
            gamma: DEFAULT_GAMMA,
            rays: 256,
            seed: 0,
            asset_dirs: None,
        }
    }
}

impl DatasetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.width < 64 || self.height < 64 {
            return Err(Error::param(
                "resolution",
                format!("{}x{} is below 64", self.width, self.height),
            ));
        }
        if self.blur_params.is_empty() {
            return Err(Error::param("blur_params", "must not be empty"));
        }
        if self.blur_params.iter().any(|a| !(a.is_finite() && *a >= 0.0)) {
            return Err(Error::param("blur_params", "values must be finite and >= 0"));
        }
        if self.rays == 0 {
            return Err(Error::param("rays", "must be >= 1"));
        }
        if let RefocusMode::Explicit(v) = &self.refocus {
            if v.is_empty() || v.iter().any(|d| !(0.0..=1.0).contains(d)) {
                return Err(Error::param(
                    "refocus",
                    "explicit list must be nonempty with values in [0, 1]",
                ));
            }
        }
        check_gamma(self.gamma)?;
        band_width(self.n_foregrounds)?;
        Ok(())
    }

    pub fn assets(&self) -> Result<Assets> {
        match &self.asset_dirs {
            Some(d) => Assets::load(&d.backgrounds, &d.foregrounds),
            None => Ok(Assets::procedural()),
        }
    }
}

fn band_width(n_foregrounds: usize) -> Result<f64> {
    let bw = (DISPARITY_RANGE.1 - DISPARITY_RANGE.0) / (n_foregrounds + 1) as f64;
    if bw < MIN_BAND {
        return Err(Error::InvalidScene(format!(
            "{n_foregrounds} foregrounds leave disparity bands of {bw:.4}, below {MIN_BAND}"
        )));
    }
    Ok(bw)
}

/// A generated scene plus one representative disparity per layer (back to
/// front), sampled at the center of each layer's visible footprint.
#[derive(Clone, Debug, PartialEq)]
pub struct GeneratedScene {
    pub scene: SceneSpec,
    pub object_disparities: Vec<f64>,
}

/// Plane through `(cx, cy)` at disparity `d0` with gradient `(gx, gy)`, the
/// gradient shrunk until the plane's constant term stays positive.
fn plane(d0: f64, mut gx: f64, mut gy: f64, cx: f64, cy: f64) -> PlaneCoeffs {
    loop {
        let k0 = d0 - gx * cx - gy * cy;
        if k0 >= 0.02 || (gx == 0.0 && gy == 0.0) {
            let c = 1.0 / k0;
            return PlaneCoeffs {
                a: -gx * c,
                b: -gy * c,
                c,
            };
        }
        gx *= 0.5;
        gy *= 0.5;
        if gx.abs() < 1e-9 && gy.abs() < 1e-9 {
            gx = 0.0;
            gy = 0.0;
        }
    }
}

/// Random layered scene: a full-frame background in the farthest disparity
/// band and `n_foregrounds` assets in successively nearer bands.
pub fn random_scene(seed: u64, assets: &Assets, cfg: &DatasetConfig) -> Result<GeneratedScene> {
    let n_fg = cfg.n_foregrounds;
    if assets.backgrounds.is_empty() {
        return Err(Error::InvalidScene("no background assets".into()));
    }
    if assets.foregrounds.len() < n_fg.min(1) {
        return Err(Error::InvalidScene("no foreground assets".into()));
    }
    let bw = band_width(n_fg)?;
    let (w, h) = (cfg.width, cfg.height);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let bg_img = &assets.backgrounds[rng.random_range(0..assets.backgrounds.len())];
    let bg = ImageBuffer::from_rgb_alpha(
        &resize(&bg_img.to_rgb(), w, h),
        &crate::buffer::Mask::filled(w, h, 1.0)?,
    )?
    .quantize8();

    // Distinct foreground assets while they last.
    let mut order: Vec<usize> = (0..assets.foregrounds.len()).collect();
    for i in (1..order.len()).rev() {
        order.swap(i, rng.random_range(0..=i));
    }

    let mut layers = Vec::with_capacity(n_fg + 1);
    let mut objects = Vec::with_capacity(n_fg + 1);
    for k in 0..=n_fg {
        let lo = DISPARITY_RANGE.0 + k as f64 * bw;
        let (rgba, offset, full_frame) = if k == 0 {
            (bg.clone(), (0i64, 0i64), true)
        } else {
            let src = &assets.foregrounds[order[(k - 1) % order.len()]];
            let side = rng.random_range(0.3..0.55) * w.min(h) as f64;
            let s = side / src.width().max(src.height()) as f64;
            let (fw, fh) = (
                ((src.width() as f64 * s).round() as usize).max(8),
                ((src.height() as f64 * s).round() as usize).max(8),
            );
            let img = resize(src, fw, fh).quantize8();
            let ox = rng.random_range(-(fw as i64) / 4..=w as i64 - 3 * fw as i64 / 4);
            let oy = rng.random_range(-(fh as i64) / 4..=h as i64 - 3 * fh as i64 / 4);
            (img, (ox, oy), false)
        };
        let (fw, fh) = (rgba.width() as f64, rgba.height() as f64);
        // Footprint center, clamped to the canvas.
        let cx = (offset.0 as f64 + fw / 2.0).clamp(0.0, (w - 1) as f64);
        let cy = (offset.1 as f64 + fh / 2.0).clamp(0.0, (h - 1) as f64);
        let coeffs = match cfg.disparity_mode {
            DisparityMode::Constant => PlaneCoeffs::constant(lo + bw * rng.random_range(0.2..0.8)),
            DisparityMode::Planar => {
                let d0 = lo + bw * rng.random_range(0.35..0.65);
                let span = bw * rng.random_range(0.1..0.3);
                let th = rng.random_range(0.0..std::f64::consts::TAU);
                // Total change across the footprint (any texel, any corner) is `span`.
                let g = span / (th.cos().abs() * fw + th.sin().abs() * fh);
                let (ccx, ccy) = (offset.0 as f64 + (fw - 1.0) / 2.0, offset.1 as f64 + (fh - 1.0) / 2.0);
                plane(d0, g * th.cos(), g * th.sin(), ccx, ccy)
            }
        };
        objects.push(coeffs.disparity_at(cx, cy));
        layers.push(PlanarLayer {
            rgba,
            coeffs,
            offset,
            full_frame,
        });
    }
    let scene = SceneSpec::new(w, h, layers)?;
    Ok(GeneratedScene {
        scene,
        object_disparities: objects,
    })
}
