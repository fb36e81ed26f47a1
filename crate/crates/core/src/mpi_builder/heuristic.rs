use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::buffer::{ensure_same_dims, ColorSpace, DisparityMap, ImageBuffer, Mask};
use crate::compositor::{plane_disparity, MpiPlane, MpiStack};
use crate::error::{Error, Result};
use crate::filter::dilate_disc;
use crate::gamma::gamma_decode;
use crate::params::{check_gamma, DEFAULT_GAMMA, DEFAULT_PLANE_COUNT};

use super::background::BackgroundSet;
use super::zones::{weights_to_alphas, zone_weights, ZoneMode};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HeuristicConfig {
    pub plane_count: usize,
    pub gamma: f64,
    pub zone_mode: ZoneMode,
    /// Radius of the dilation applied to the blend maps; 0 disables it.
    pub blend_dilate_px: f64,
    /// False builds the visible-surface-only stack.
    pub use_background: bool,
}

impl Default for HeuristicConfig {
    fn default() -> Self {
        Self {
            plane_count: DEFAULT_PLANE_COUNT,
            gamma: DEFAULT_GAMMA,
            zone_mode: ZoneMode::Soft,
            blend_dilate_px: 0.0,
            use_background: true,
        }
    }
}

impl HeuristicConfig {
    pub fn validate(&self) -> Result<()> {
        if self.plane_count < 2 {
            return Err(Error::param(
                "plane_count",
                format!("need at least 2, got {}", self.plane_count),
            ));
        }
        check_gamma(self.gamma)?;
        if !(self.blend_dilate_px.is_finite() && self.blend_dilate_px >= 0.0) {
            return Err(Error::param(
                "blend_dilate_px",
                format!("must be >= 0, got {}", self.blend_dilate_px),
            ));
        }
        Ok(())
    }
}

fn linear_rgb(img: &ImageBuffer, gamma: f64) -> Result<ImageBuffer> {
    let rgb = img.to_rgb();
    match rgb.space() {
        ColorSpace::Encoded => gamma_decode(&rgb, gamma),
        ColorSpace::Linear => Ok(rgb),
    }
}

/// Per-pixel plane assignment: `(plane, alpha, hidden)` with 1-based planes.
type Cell = Vec<(usize, f32, bool)>;

fn assign(d: f64, hidden: Option<f64>, n: usize, mode: ZoneMode) -> Cell {
    let (vis, kv) = zone_weights(d, n, mode);
    let lowest = vis[0].0;
    let mut out = Cell::with_capacity(4);
    if let Some(db) = hidden {
        let (hid, kh) = zone_weights(db, n, mode);
        let kept: Vec<(usize, f64)> = hid[..kh].iter().copied().filter(|(i, _)| *i < lowest).collect();
        let s: f64 = kept.iter().map(|p| p.1).sum();
        if s > 0.0 {
            let mut ws: Vec<f64> = kept.iter().map(|p| p.1 / s).collect();
            weights_to_alphas(&mut ws);
            out.extend(kept.iter().zip(ws).map(|((i, _), a)| (*i, a as f32, true)));
        }
    }
    let mut ws: Vec<f64> = vis[..kv].iter().map(|p| p.1).collect();
    weights_to_alphas(&mut ws);
    out.extend(vis[..kv].iter().zip(ws).map(|((i, _), a)| (*i, a as f32, false)));
    out
}

/// Stack from one image, its disparity, and background hypotheses.
///
/// Visible content takes the zone weights of `d` with color `I`. Inside each
/// background mask, planes strictly behind the visible surface take the zone
/// weights of the background disparity with color `I^b` (blend weight 1).
/// Alphas are set so the over-composite reproduces the zone weights of each
/// group, and the visible group always closes coverage.
pub fn build_mpi_heuristic(
    image: &ImageBuffer,
    d: &DisparityMap,
    bg: &BackgroundSet,
    cfg: &HeuristicConfig,
) -> Result<MpiStack> {
    cfg.validate()?;
    ensure_same_dims(image.dims(), d.dims())?;
    let n = cfg.plane_count;
    let (w, h) = d.dims();
    let use_bg = cfg.use_background && !bg.is_empty();
    if use_bg {
        bg.validate(d, n)?;
    }
    let lin = linear_rgb(image, cfg.gamma)?;
    // Background color and disparity per pixel: first entry covering it.
    let mut owner = vec![usize::MAX; w * h];
    if use_bg {
        for (k, e) in bg.entries.iter().enumerate() {
            for (i, o) in owner.iter_mut().enumerate() {
                if *o == usize::MAX && e.mask.is_set_at(i) {
                    *o = k;
                }
            }
        }
    }
    let bg_lin: Vec<ImageBuffer> = if use_bg {
        bg.entries
            .iter()
            .map(|e| linear_rgb(&e.image, cfg.gamma))
            .collect::<Result<_>>()?
    } else {
        Vec::new()
    };

    let cells: Vec<Cell> = (0..w * h)
        .into_par_iter()
        .map(|i| {
            let hidden = (owner[i] != usize::MAX).then(|| bg.entries[owner[i]].disparity.data()[i] as f64);
            assign(d.data()[i] as f64, hidden, n, cfg.zone_mode)
        })
        .collect();

    let mut alpha = vec![vec![0.0f32; w * h]; n];
    let mut blend = vec![vec![0.0f32; w * h]; n];
    for (i, cell) in cells.iter().enumerate() {
        for &(p, a, hid) in cell {
            alpha[p - 1][i] = a;
            if hid {
                blend[p - 1][i] = 1.0;
            }
        }
    }

    let planes = alpha
        .into_par_iter()
        .zip(blend)
        .enumerate()
        .map(|(k, (a, b))| {
            let mut wmap = Mask::new(w, h, b)?;
            if cfg.blend_dilate_px > 0.0 && !wmap.is_empty() {
                wmap = dilate_disc(&wmap, cfg.blend_dilate_px);
            }
            let wd = wmap.data();
            let color: Vec<f32> = (0..w * h)
                .flat_map(|i| {
                    let base = lin.pixel(i % w, i / w);
                    let wt = wd[i];
                    let mut c = [base[0], base[1], base[2]];
                    if wt > 0.0 && owner[i] != usize::MAX {
                        let b = bg_lin[owner[i]].pixel(i % w, i / w);
                        for ch in 0..3 {
                            c[ch] = wt * b[ch] + (1.0 - wt) * base[ch];
                        }
                    }
                    c
                })
                .collect();
            Ok(MpiPlane {
                color: ImageBuffer::new(w, h, 3, ColorSpace::Linear, color)?,
                alpha: Mask::new(w, h, a)?,
                blend: (!wmap.is_empty()).then_some(wmap),
                disparity: plane_disparity(k + 1, n),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    MpiStack::new(planes)
}

/// Stack of the visible surface only (no background, blend weights zero).
pub fn build_mpi_visible(image: &ImageBuffer, d: &DisparityMap, cfg: &HeuristicConfig) -> Result<MpiStack> {
    let cfg = HeuristicConfig {
        use_background: false,
        ..cfg.clone()
    };
    build_mpi_heuristic(image, d, &BackgroundSet::empty(), &cfg)
}
