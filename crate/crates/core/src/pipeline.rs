//! End-to-end bokeh rendering from one image and its disparity map.

use serde::{Deserialize, Serialize};

use crate::buffer::{ensure_same_dims, DisparityMap, ImageBuffer, Mask};
use crate::compositor::{plane_disparity, render_mpi_with_stats, MpiStack, RenderStats};
use crate::error::{Error, Result};
use crate::mpi_builder::{
    build_background_with, build_mpi_heuristic, BackgroundSet, HeuristicConfig, ZoneMode, DEFAULT_INPAINT_ITERS,
};
use crate::occlusion::{occlusion_mask, OcclusionConfig};
use crate::params::{check_gamma, RenderParams, DEFAULT_GAMMA, DEFAULT_PLANE_COUNT};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub plane_count: usize,
    pub gamma: f64,
    pub occlusion: OcclusionConfig,
    pub zone_mode: ZoneMode,
    pub blend_dilate_px: f64,
    pub inpaint_iters: usize,
    /// Number of background hypotheses (disparity levels of the occluder).
    pub background_count: usize,
    pub normalize: bool,
    pub use_background: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            plane_count: DEFAULT_PLANE_COUNT,
            gamma: DEFAULT_GAMMA,
            occlusion: OcclusionConfig::default(),
            zone_mode: ZoneMode::Soft,
            blend_dilate_px: 0.0,
            inpaint_iters: DEFAULT_INPAINT_ITERS,
            background_count: 1,
            normalize: true,
            use_background: true,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.heuristic().validate()?;
        self.occlusion.validate()?;
        if self.background_count == 0 {
            return Err(Error::param("background_count", "must be >= 1"));
        }
        Ok(())
    }

    pub fn heuristic(&self) -> HeuristicConfig {
        HeuristicConfig {
            plane_count: self.plane_count,
            gamma: self.gamma,
            zone_mode: self.zone_mode,
            blend_dilate_px: self.blend_dilate_px,
            use_background: self.use_background,
        }
    }
}

/// A built stack ready to be rendered any number of times.
#[derive(Clone, Debug)]
pub struct Representation {
    pub stack: MpiStack,
    pub background: BackgroundSet,
    pub mask: Mask,
    pub disparity: DisparityMap,
    pub config: PipelineConfig,
}

/// Occlusion mask, background fill, and stack construction. `blur_amount`,
/// when known, sizes the mask extension; `external` replaces the inpainted
/// background color.
pub fn build_representation(
    image: &ImageBuffer,
    d: &DisparityMap,
    cfg: &PipelineConfig,
    blur_amount: Option<f64>,
    external: Option<&ImageBuffer>,
) -> Result<Representation> {
    cfg.validate()?;
    ensure_same_dims(image.dims(), d.dims())?;
    let image = image.to_rgb();
    let (mask, background) = if cfg.use_background {
        let mask = occlusion_mask(d, &cfg.occlusion, blur_amount)?;
        let bg = build_background_with(
            &image,
            d,
            &mask,
            cfg.occlusion.grad_threshold,
            cfg.inpaint_iters,
            cfg.background_count,
            external.map(|e| e.to_rgb()).as_ref(),
        )?;
        (mask, bg)
    } else {
        (Mask::empty(d.width(), d.height()), BackgroundSet::empty())
    };
    let stack = build_mpi_heuristic(&image, d, &background, &cfg.heuristic())?;
    Ok(Representation {
        stack,
        background,
        mask,
        disparity: d.clone(),
        config: cfg.clone(),
    })
}

impl Representation {
    /// Gamma-encoded bokeh image. `gamma` overrides the build gamma for the
    /// final encode only.
    pub fn render(
        &self,
        blur_amount: f64,
        refocus_disparity: f64,
        gamma: Option<f64>,
    ) -> Result<(ImageBuffer, RenderStats)> {
        let gamma = gamma.unwrap_or(self.config.gamma);
        check_gamma(gamma)?;
        let params = RenderParams::new(blur_amount, refocus_disparity, gamma, self.config.plane_count)?;
        render_mpi_with_stats(&self.stack, &params, self.config.normalize)
    }

    /// Bilinear disparity at `(x, y)`.
    pub fn disparity_at(&self, x: f64, y: f64) -> f64 {
        self.disparity.sample_bilinear(x, y) as f64
    }
}

/// Disparity in focus at pixel `(x, y)`, optionally snapped to the nearest
/// plane center.
pub fn focus_disparity(d: &DisparityMap, x: f64, y: f64, snap: Option<usize>) -> Result<f64> {
    let (w, h) = d.dims();
    if !(x >= 0.0 && y >= 0.0 && x <= (w - 1) as f64 && y <= (h - 1) as f64) {
        return Err(Error::param("focus", format!("({x}, {y}) outside {w}x{h}")));
    }
    let v = d.sample_bilinear(x, y) as f64;
    Ok(match snap {
        Some(n) => snap_to_plane(v, n),
        None => v,
    })
}

/// Nearest plane-center disparity of an `n`-plane stack.
pub fn snap_to_plane(d: f64, n: usize) -> f64 {
    let i = ((d * n as f64 + 0.5).round().max(0.0) as usize).clamp(1, n);
    plane_disparity(i, n)
}

/// One-shot render: build then render.
pub fn render_image(
    image: &ImageBuffer,
    d: &DisparityMap,
    cfg: &PipelineConfig,
    blur_amount: f64,
    refocus_disparity: f64,
    external: Option<&ImageBuffer>,
) -> Result<ImageBuffer> {
    let rep = build_representation(image, d, cfg, Some(blur_amount), external)?;
    rep.render(blur_amount, refocus_disparity, None).map(|r| r.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::composite_all_in_focus;
    use crate::oracle::scene::tests::two_layer;

    #[test]
    fn zero_blur_is_identity_after_quantization() {
        let scene = two_layer(48, 48, 0.2, 0.8);
        let (img, d) = composite_all_in_focus(&scene, 2.2).unwrap();
        let img = img.quantize8();
        let out = render_image(&img, &d, &PipelineConfig::default(), 0.0, 0.5, None).unwrap();
        let q = out.quantize8();
        let worst = q
            .data()
            .iter()
            .zip(img.data())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f32, f32::max);
        assert!(worst <= 1.0 / 255.0 + 1e-6, "{worst}");
    }

    #[test]
    fn focus_snaps_to_plane_center() {
        let d = DisparityMap::filled(8, 8, 0.51).unwrap();
        assert!((focus_disparity(&d, 3.0, 3.0, None).unwrap() - 0.51).abs() < 1e-6);
        assert_eq!(
            focus_disparity(&d, 3.0, 3.0, Some(32)).unwrap(),
            plane_disparity(17, 32)
        );
        assert!(focus_disparity(&d, 9.0, 3.0, None).is_err());
    }

    #[test]
    fn background_only_behind_foreground() {
        let scene = two_layer(64, 64, 0.2, 0.8);
        let (img, d) = composite_all_in_focus(&scene, 2.2).unwrap();
        let rep = build_representation(&img, &d, &PipelineConfig::default(), Some(20.0), None).unwrap();
        assert!(!rep.mask.is_empty());
        assert_eq!(rep.background.len(), 1);
        let (a, _) = rep.render(20.0, 0.2, None).unwrap();
        let (b, _) = rep.render(20.0, 0.2, None).unwrap();
        assert_eq!(a, b);
    }
}
