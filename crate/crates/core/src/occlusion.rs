//! Occlusion masks from disparity edges.
//!
//! Sobel gradients are thresholded into an edge mask, small fragments are
//! dropped, and the mask is then marched toward increasing disparity one
//! pixel per iteration by splatting unit normals forward. A final disc
//! dilation pads the result.

use serde::{Deserialize, Serialize};

use crate::buffer::{DisparityMap, GradientField, Mask};
use crate::error::{Error, Result};
use crate::filter::{connected_components, dilate_disc};

/// Vectors shorter than this normalize to zero.
pub const NORM_EPS: f32 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OcclusionConfig {
    /// Gradient magnitude threshold `τ`, disparity units per pixel.
    pub grad_threshold: f64,
    /// Edge components smaller than this many pixels are dropped.
    pub min_segment: usize,
    /// Extension iterations; `None` picks a count from the blur amount.
    pub extend_iters: Option<usize>,
    pub dilate_px: f64,
}

impl Default for OcclusionConfig {
    fn default() -> Self {
        Self {
            grad_threshold: 0.05,
            min_segment: 20,
            extend_iters: None,
            dilate_px: 5.0,
        }
    }
}

impl OcclusionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.grad_threshold > 0.0 && self.grad_threshold.is_finite()) {
            return Err(Error::param("grad_threshold", "must be > 0"));
        }
        if !(self.dilate_px >= 0.0 && self.dilate_px.is_finite()) {
            return Err(Error::param("dilate_px", "must be >= 0"));
        }
        Ok(())
    }

    /// Iteration count: the explicit value, else `max(8, ⌈A·step⌉)` when the
    /// blur amount is known, else 16. `max_step` is the largest gradient
    /// magnitude on the cleaned mask.
    pub fn iterations(&self, blur_amount: Option<f64>, max_step: f64) -> usize {
        match (self.extend_iters, blur_amount) {
            (Some(n), _) => n,
            (None, Some(a)) => 8.max((a * max_step).ceil() as usize),
            (None, None) => 16,
        }
    }
}

/// 3×3 Sobel with replicate borders, scaled by 1/4 so a step of height `h`
/// reads `h` on both columns beside the edge.
pub fn disparity_gradient(d: &DisparityMap) -> GradientField {
    let (w, h) = d.dims();
    let at = |x: isize, y: isize| d.get(x.clamp(0, w as isize - 1) as usize, y.clamp(0, h as isize - 1) as usize);
    let mut gx = vec![0.0f32; w * h];
    let mut gy = vec![0.0f32; w * h];
    for y in 0..h as isize {
        for x in 0..w as isize {
            let sx = (at(x + 1, y - 1) + 2.0 * at(x + 1, y) + at(x + 1, y + 1))
                - (at(x - 1, y - 1) + 2.0 * at(x - 1, y) + at(x - 1, y + 1));
            let sy = (at(x - 1, y + 1) + 2.0 * at(x, y + 1) + at(x + 1, y + 1))
                - (at(x - 1, y - 1) + 2.0 * at(x, y - 1) + at(x + 1, y - 1));
            let i = y as usize * w + x as usize;
            gx[i] = sx / 4.0;
            gy[i] = sy / 4.0;
        }
    }
    GradientField::new(w, h, gx, gy).expect("finite gradients")
}

/// Pixels whose gradient magnitude exceeds `tau`.
pub fn initial_mask(g: &GradientField, tau: f64) -> Mask {
    let (w, h) = g.dims();
    Mask::from_predicate(w, h, |x, y| g.magnitude_at(y * w + x) as f64 > tau)
}

/// Zeroes 8-connected mask components smaller than `min_segment` in both the
/// mask and the field.
pub fn remove_short_segments(m: &Mask, g: &GradientField, min_segment: usize) -> (Mask, GradientField) {
    let comps = connected_components(m);
    let (w, h) = m.dims();
    let keep = |i: usize| {
        let l = comps.labels[i];
        l != 0 && comps.sizes[l as usize - 1] >= min_segment
    };
    let mut g = g.clone();
    for i in 0..w * h {
        if comps.labels[i] != 0 && !keep(i) {
            g.gx[i] = 0.0;
            g.gy[i] = 0.0;
        }
    }
    (Mask::from_predicate(w, h, |x, y| keep(y * w + x)), g)
}

/// Unit-length copy of `g`; near-zero vectors become zero.
pub fn normalize_field(g: &GradientField) -> GradientField {
    let mut out = g.clone();
    for i in 0..out.gx.len() {
        let m = g.magnitude_at(i);
        if m < NORM_EPS {
            out.gx[i] = 0.0;
            out.gy[i] = 0.0;
        } else {
            out.gx[i] /= m;
            out.gy[i] /= m;
        }
    }
    out
}

/// Splats each masked unit vector to `p + Gn(p)` with bilinear weights, sums
/// per texel, and renormalizes. Texels whose sum cancels stay zero.
pub fn forward_warp_normals(gn: &GradientField, m: &Mask) -> GradientField {
    let (w, h) = gn.dims();
    let mut ax = vec![0.0f64; w * h];
    let mut ay = vec![0.0f64; w * h];
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if !m.is_set_at(i) {
                continue;
            }
            let (vx, vy) = (gn.gx[i] as f64, gn.gy[i] as f64);
            if vx == 0.0 && vy == 0.0 {
                continue;
            }
            let (tx, ty) = (x as f64 + vx, y as f64 + vy);
            let (fx0, fy0) = (tx.floor(), ty.floor());
            let (fx, fy) = (tx - fx0, ty - fy0);
            for (dx, dy, wgt) in [
                (0, 0, (1.0 - fx) * (1.0 - fy)),
                (1, 0, fx * (1.0 - fy)),
                (0, 1, (1.0 - fx) * fy),
                (1, 1, fx * fy),
            ] {
                let (qx, qy) = (fx0 as isize + dx, fy0 as isize + dy);
                if wgt <= 0.0 || qx < 0 || qy < 0 || qx >= w as isize || qy >= h as isize {
                    continue;
                }
                let q = qy as usize * w + qx as usize;
                ax[q] += wgt * vx;
                ay[q] += wgt * vy;
            }
        }
    }
    let mut gx = vec![0.0f32; w * h];
    let mut gy = vec![0.0f32; w * h];
    for i in 0..w * h {
        let m = ax[i].hypot(ay[i]);
        if m >= NORM_EPS as f64 {
            gx[i] = (ax[i] / m) as f32;
            gy[i] = (ay[i] / m) as f32;
        }
    }
    GradientField::new(w, h, gx, gy).expect("finite")
}

/// Grows `m` toward increasing disparity for `iters` steps using
/// `G ← M·Gⁿ + (1 − M)·Gʷ`. Vectors outside `m` are ignored.
pub fn extend_mask(m: &Mask, g: &GradientField, iters: usize) -> Mask {
    extend_mask_steps(m, g, iters).pop().unwrap_or_else(|| m.binarize())
}

/// Like [`extend_mask`] but returns the mask after every iteration.
pub fn extend_mask_steps(m: &Mask, g: &GradientField, iters: usize) -> Vec<Mask> {
    let (w, h) = m.dims();
    let mut mask = m.binarize();
    let mut g = g.clone();
    for i in 0..w * h {
        if !mask.is_set_at(i) {
            g.gx[i] = 0.0;
            g.gy[i] = 0.0;
        }
    }
    let mut steps = Vec::with_capacity(iters);
    for _ in 0..iters {
        let gn = normalize_field(&g);
        let gw = forward_warp_normals(&gn, &gn.support());
        let mut next = GradientField::zeros(w, h);
        for i in 0..w * h {
            let src = if mask.is_set_at(i) { &gn } else { &gw };
            next.gx[i] = src.gx[i];
            next.gy[i] = src.gy[i];
        }
        // Pixels already in the mask stay in it even if their normal cancels.
        let support = next.support();
        mask = mask.union(&support).expect("same dims");
        g = next;
        steps.push(mask.clone());
    }
    steps
}

/// Every intermediate of the mask pipeline.
#[derive(Clone, Debug)]
pub struct OcclusionStages {
    pub gradient: GradientField,
    pub initial: Mask,
    pub cleaned: Mask,
    pub extended: Mask,
    pub dilated: Mask,
    pub iterations: usize,
}

pub fn occlusion_stages(d: &DisparityMap, cfg: &OcclusionConfig, blur_amount: Option<f64>) -> Result<OcclusionStages> {
    cfg.validate()?;
    let gradient = disparity_gradient(d);
    let initial = initial_mask(&gradient, cfg.grad_threshold);
    let (cleaned, g) = remove_short_segments(&initial, &gradient, cfg.min_segment);
    let max_step = (0..g.gx.len())
        .filter(|i| cleaned.is_set_at(*i))
        .map(|i| g.magnitude_at(i) as f64)
        .fold(0.0, f64::max);
    let iterations = cfg.iterations(blur_amount, max_step);
    let extended = extend_mask(&cleaned, &g, iterations);
    let dilated = dilate_disc(&extended, cfg.dilate_px);
    Ok(OcclusionStages {
        gradient,
        initial,
        cleaned,
        extended,
        dilated,
        iterations,
    })
}

/// Final binary occlusion mask.
pub fn occlusion_mask(d: &DisparityMap, cfg: &OcclusionConfig, blur_amount: Option<f64>) -> Result<Mask> {
    occlusion_stages(d, cfg, blur_amount).map(|s| s.dilated)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn step(w: usize, h: usize, k: usize, lo: f32, hi: f32) -> DisparityMap {
        DisparityMap::from_fn(w, h, |x, _| if x >= k { hi } else { lo }).unwrap()
    }

    #[test]
    fn gradient_of_constant_is_zero() {
        let g = disparity_gradient(&DisparityMap::filled(9, 9, 0.4).unwrap());
        assert!(g.gx().iter().chain(g.gy()).all(|v| *v == 0.0));
    }

    #[test]
    fn gradient_of_step() {
        let g = disparity_gradient(&step(20, 10, 10, 0.2, 0.8));
        for y in 0..10 {
            for x in 0..20 {
                let (gx, gy) = g.at(x, y);
                let want = if x == 9 || x == 10 { 0.6 } else { 0.0 };
                assert!((gx - want).abs() < 1e-6, "({x},{y}) {gx}");
                assert_eq!(gy, 0.0);
            }
        }
    }

    #[test]
    fn gradient_of_ramp() {
        // With step-height scaling, a ramp of slope s reads 2s.
        let d = DisparityMap::from_fn(40, 8, |x, _| 0.1 + 0.01 * x as f32).unwrap();
        let g = disparity_gradient(&d);
        for x in 1..39 {
            assert!((g.at(x, 4).0 - 0.02).abs() < 1e-6);
        }
        assert!(initial_mask(&g, 0.05).is_empty());
    }

    #[test]
    fn step_mask_covers_adjacent_columns() {
        let g = disparity_gradient(&step(20, 10, 10, 0.2, 0.8));
        let m = initial_mask(&g, 0.05);
        assert_eq!(m.count(), 20);
        assert!((0..10).all(|y| m.is_set(9, y) && m.is_set(10, y)));
        assert!(initial_mask(&GradientField::zeros(5, 5), 0.05).is_empty());
    }

    #[test]
    fn short_segments() {
        let blob = Mask::from_predicate(30, 30, |x, y| x < 1 && y < 5);
        let g = GradientField::new(30, 30, vec![1.0; 900], vec![0.0; 900]).unwrap();
        let (m, g2) = remove_short_segments(&blob, &g, 20);
        assert!(m.is_empty());
        assert_eq!(g2.at(0, 0), (0.0, 0.0));
        assert_eq!(g2.at(5, 5), (1.0, 0.0));

        let band = Mask::from_predicate(30, 30, |x, y| x < 4 && y < 25);
        let (m, _) = remove_short_segments(&band, &g, 20);
        assert_eq!(m, band);

        let (m, g3) = remove_short_segments(&Mask::empty(30, 30), &g, 20);
        assert!(m.is_empty());
        assert_eq!(g3, g);
    }

    fn single(w: usize, h: usize, p: (usize, usize), v: (f32, f32)) -> (GradientField, Mask) {
        let mut g = GradientField::zeros(w, h);
        g.gx[p.1 * w + p.0] = v.0;
        g.gy[p.1 * w + p.0] = v.1;
        let m = g.support();
        (g, m)
    }

    #[test]
    fn warp_integer_offset() {
        let (g, m) = single(20, 20, (10, 10), (1.0, 0.0));
        let out = forward_warp_normals(&g, &m);
        assert_eq!(out.support().count(), 1);
        assert_eq!(out.at(11, 10), (1.0, 0.0));
    }

    #[test]
    fn warp_bilinear_footprint() {
        let (g, m) = single(20, 20, (10, 10), (0.6, 0.8));
        let out = forward_warp_normals(&g, &m);
        for (x, y) in [(10, 10), (11, 10), (10, 11), (11, 11)] {
            let (vx, vy) = out.at(x, y);
            assert!((vx - 0.6).abs() < 1e-6 && (vy - 0.8).abs() < 1e-6);
        }
        assert_eq!(out.support().count(), 4);
    }

    #[test]
    fn warp_cancellation() {
        let mut g = GradientField::zeros(10, 10);
        g.gx[5 * 10 + 4] = 1.0;
        g.gx[5 * 10 + 6] = -1.0;
        let out = forward_warp_normals(&g, &g.support());
        assert_eq!(out.at(5, 5), (0.0, 0.0));
    }

    #[test]
    fn extension_on_step_goes_to_larger_side() {
        let d = step(60, 30, 30, 0.2, 0.8);
        let g = disparity_gradient(&d);
        let m = initial_mask(&g, 0.05);
        assert_eq!(extend_mask(&m, &g, 0), m);
        let steps = extend_mask_steps(&m, &g, 10);
        for pair in steps.windows(2) {
            assert!(pair[0].is_subset_of(&pair[1]));
        }
        let ext = steps.last().unwrap();
        let right = (0..30).filter(|y| ext.is_set(29 + 11, *y)).count();
        assert_eq!(right, 30);
        assert!(!ext.is_set(29 + 12, 15));
        let left = (0..29).filter(|x| ext.is_set(*x, 15)).count();
        assert!(left <= 2);
    }

    #[test]
    fn constant_map_gives_empty_mask() {
        let d = DisparityMap::filled(32, 32, 0.7).unwrap();
        for a in [None, Some(80.0)] {
            assert!(occlusion_mask(&d, &OcclusionConfig::default(), a).unwrap().is_empty());
        }
    }

    #[test]
    fn nested_objects() {
        let d = DisparityMap::from_fn(96, 96, |x, y| {
            let r = ((x as f32 - 48.0).powi(2) + (y as f32 - 48.0).powi(2)).sqrt();
            if r < 12.0 {
                0.9
            } else if r < 30.0 {
                0.5
            } else {
                0.1
            }
        })
        .unwrap();
        let cfg = OcclusionConfig {
            extend_iters: Some(6),
            ..Default::default()
        };
        let s = occlusion_stages(&d, &cfg, None).unwrap();
        // Both silhouettes seed the mask, and growth favors the closer side.
        assert!(s.extended.is_set(48 + 8, 48));
        assert!(s.extended.is_set(48 + 25, 48));
        assert!(!s.extended.is_set(48 + 36, 48));
        assert!(!s.extended.is_set(48 + 16, 48));
        assert!(s.cleaned.count() <= s.extended.count());
        assert!(s.extended.is_subset_of(&s.dilated));
    }

    #[test]
    fn auto_iterations() {
        let cfg = OcclusionConfig::default();
        assert_eq!(cfg.iterations(None, 0.6), 16);
        assert_eq!(cfg.iterations(Some(80.0), 0.6), 48);
        assert_eq!(cfg.iterations(Some(5.0), 0.6), 8);
        let fixed = OcclusionConfig {
            extend_iters: Some(3),
            ..cfg
        };
        assert_eq!(fixed.iterations(Some(80.0), 0.6), 3);
    }
}
