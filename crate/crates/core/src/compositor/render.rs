use rayon::prelude::*;
use serde::Serialize;

use super::convolve::convolve_channels;
use super::kernel::disc_kernel;
use super::stack::{MpiPlane, MpiStack};
use crate::buffer::{ColorSpace, DisparityMap, ImageBuffer, Mask};
use crate::error::Result;
use crate::gamma::gamma_encode;
use crate::params::RenderParams;

/// Below this blurred coverage the normalized composite falls back to the
/// plain one.
pub const EPS_NORM: f64 = 1e-4;

/// Denominator statistics from a normalized render.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct RenderStats {
    pub denominator_min: f64,
    pub denominator_max: f64,
    /// Pixels whose denominator fell below [`EPS_NORM`].
    pub fallback_pixels: usize,
    /// Pixels whose denominator exceeded `1 + 1e-6`.
    pub above_one_pixels: usize,
}

/// Folds one plane's premultiplied color and alpha over the running
/// back-to-front composite.
fn fold_over(num: &mut [f64], den: &mut [f64], premult: &[Vec<f32>], alpha: &[f32]) {
    num.par_chunks_mut(3)
        .zip(den.par_iter_mut())
        .enumerate()
        .for_each(|(i, (n, d))| {
            let a = alpha[i] as f64;
            let keep = 1.0 - a;
            for c in 0..3 {
                n[c] = n[c] * keep + premult[c][i] as f64;
            }
            *d = *d * keep + a;
        });
}

fn premultiplied(plane: &MpiPlane) -> Vec<Vec<f32>> {
    let alpha = plane.alpha.data();
    (0..3)
        .map(|c| {
            plane
                .color
                .data()
                .chunks_exact(3)
                .zip(alpha)
                .map(|(px, a)| px[c] * a)
                .collect()
        })
        .collect()
}

fn linear_rgb(w: usize, h: usize, data: Vec<f64>) -> ImageBuffer {
    let data = data.into_iter().map(|v| v.clamp(0.0, 1.0) as f32).collect();
    ImageBuffer::new(w, h, 3, ColorSpace::Linear, data).expect("sized buffer")
}

/// Sharp over-composite `I = Σ c_i·α_i·Π_{j>i}(1 − α_j)`, in linear space.
pub fn compose_sharp(mpi: &MpiStack) -> ImageBuffer {
    let (w, h) = mpi.dims();
    let mut num = vec![0.0f64; w * h * 3];
    let mut den = vec![0.0f64; w * h];
    for p in mpi.planes().iter().filter(|p| !p.is_empty()) {
        fold_over(&mut num, &mut den, &premultiplied(p), p.alpha.data());
    }
    linear_rgb(w, h, num)
}

/// Over-composited coverage `Σ α_i·Π_{j>i}(1 − α_j)`.
pub fn coverage(mpi: &MpiStack) -> Mask {
    let (w, h) = mpi.dims();
    let mut acc = vec![0.0f64; w * h];
    for p in mpi.planes() {
        for (v, a) in acc.iter_mut().zip(p.alpha.data()) {
            *v = *v * (1.0 - *a as f64) + *a as f64;
        }
    }
    Mask::new(w, h, acc.into_iter().map(|v| v.min(1.0) as f32).collect()).expect("sized")
}

/// `D^rc = Σ d_i·α_i·Π_{j>i}(1 − α_j)`.
pub fn reconstruct_disparity(mpi: &MpiStack) -> DisparityMap {
    let (w, h) = mpi.dims();
    let mut acc = vec![0.0f64; w * h];
    for p in mpi.planes() {
        for (v, a) in acc.iter_mut().zip(p.alpha.data()) {
            let a = *a as f64;
            *v = *v * (1.0 - a) + p.disparity * a;
        }
    }
    DisparityMap::new(w, h, acc.into_iter().map(|v| v as f32).collect()).expect("sized")
}

/// Blurs every plane with its own disc and composites them, returning the
/// linear-space result and denominator statistics. `normalize` selects the
/// coverage-normalized composite.
pub fn render_mpi_linear(mpi: &MpiStack, params: &RenderParams, normalize: bool) -> Result<(ImageBuffer, RenderStats)> {
    params.validate()?;
    let (w, h) = mpi.dims();
    let mut num = vec![0.0f64; w * h * 3];
    let mut den = vec![0.0f64; w * h];
    // One plane in flight at a time keeps memory at a single blurred layer.
    for p in mpi.planes().iter().filter(|p| !p.is_empty()) {
        let kernel = disc_kernel(params.radius_at(p.disparity));
        let mut chans = premultiplied(p);
        chans.push(p.alpha.data().to_vec());
        let mut blurred = convolve_channels(&chans, w, h, &kernel);
        let alpha = blurred.pop().expect("alpha channel");
        fold_over(&mut num, &mut den, &blurred, &alpha);
    }
    let mut stats = RenderStats {
        denominator_min: f64::INFINITY,
        denominator_max: 0.0,
        ..Default::default()
    };
    for d in &den {
        stats.denominator_min = stats.denominator_min.min(*d);
        stats.denominator_max = stats.denominator_max.max(*d);
        if *d < EPS_NORM {
            stats.fallback_pixels += 1;
        }
        if *d > 1.0 + 1e-6 {
            stats.above_one_pixels += 1;
        }
    }
    if normalize {
        num.par_chunks_mut(3).zip(den.par_iter()).for_each(|(n, d)| {
            if *d >= EPS_NORM {
                n.iter_mut().for_each(|v| *v /= d);
            }
        });
    }
    Ok((linear_rgb(w, h, num), stats))
}

/// Gamma-encoded bokeh rendering of an MPI.
pub fn render_mpi(mpi: &MpiStack, params: &RenderParams, normalize: bool) -> Result<ImageBuffer> {
    render_mpi_with_stats(mpi, params, normalize).map(|(img, _)| img)
}

pub fn render_mpi_with_stats(
    mpi: &MpiStack,
    params: &RenderParams,
    normalize: bool,
) -> Result<(ImageBuffer, RenderStats)> {
    let (lin, stats) = render_mpi_linear(mpi, params, normalize)?;
    log::debug!(
        "render A={} d_f={}: denominator in [{:.6}, {:.6}], {} fallback px",
        params.blur_amount,
        params.refocus_disparity,
        stats.denominator_min,
        stats.denominator_max,
        stats.fallback_pixels
    );
    Ok((gamma_encode(&lin, params.gamma)?, stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compositor::stack::plane_disparity;

    fn solid(w: usize, h: usize, n: usize, i: usize, color: f32, alpha: f32) -> MpiPlane {
        MpiPlane {
            color: ImageBuffer::filled(w, h, 3, ColorSpace::Linear, color).unwrap(),
            alpha: Mask::filled(w, h, alpha).unwrap(),
            blend: None,
            disparity: plane_disparity(i, n),
        }
    }

    fn stack(w: usize, h: usize, n: usize, fill: &[(usize, f32, f32)]) -> MpiStack {
        let planes = (1..=n)
            .map(|i| match fill.iter().find(|f| f.0 == i) {
                Some(&(_, c, a)) => solid(w, h, n, i, c, a),
                None => MpiPlane::transparent(w, h, plane_disparity(i, n)),
            })
            .collect();
        MpiStack::new(planes).unwrap()
    }

    #[test]
    fn sharp_composite_examples() {
        let one = stack(4, 4, 2, &[(1, 0.3, 1.0)]);
        assert!(compose_sharp(&one).data().iter().all(|v| (v - 0.3).abs() < 1e-7));
        let occluded = stack(4, 4, 2, &[(1, 0.3, 1.0), (2, 0.9, 1.0)]);
        assert!(compose_sharp(&occluded).data().iter().all(|v| (v - 0.9).abs() < 1e-7));
        let quarter = stack(4, 4, 2, &[(1, 0.0, 1.0), (2, 1.0, 0.25)]);
        assert!(compose_sharp(&quarter).data().iter().all(|v| (v - 0.25).abs() < 1e-7));
    }

    #[test]
    fn zero_blur_matches_sharp() {
        let mut planes: Vec<MpiPlane> = (1..=4)
            .map(|i| MpiPlane::transparent(16, 12, plane_disparity(i, 4)))
            .collect();
        planes[0] = solid(16, 12, 4, 1, 0.2, 1.0);
        planes[2].color = ImageBuffer::from_fn(16, 12, 3, ColorSpace::Linear, |x, y, c| {
            ((x + 2 * y + c) % 7) as f32 / 6.0
        })
        .unwrap();
        planes[2].alpha = Mask::from_fn(16, 12, |x, _| x as f32 / 15.0).unwrap();
        let mpi = MpiStack::new(planes).unwrap();
        let params = RenderParams::new(0.0, 0.3, 2.2, 4).unwrap();
        let out = render_mpi(&mpi, &params, true).unwrap();
        let sharp = gamma_encode(&compose_sharp(&mpi), 2.2).unwrap();
        let err = out
            .data()
            .iter()
            .zip(sharp.data())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f32, f32::max);
        assert!(err <= 1e-6, "{err}");
    }

    #[test]
    fn in_focus_opaque_plane_is_identity() {
        let n = 8;
        let mut planes: Vec<MpiPlane> = (1..=n)
            .map(|i| MpiPlane::transparent(20, 20, plane_disparity(i, n)))
            .collect();
        let color = ImageBuffer::from_fn(20, 20, 3, ColorSpace::Linear, |x, y, c| {
            ((x * 3 + y * 5 + c) % 11) as f32 / 10.0
        })
        .unwrap();
        planes[4].color = color.clone();
        planes[4].alpha = Mask::filled(20, 20, 1.0).unwrap();
        let mpi = MpiStack::new(planes).unwrap();
        let params = RenderParams::new(40.0, plane_disparity(5, n), 1.0, n).unwrap();
        let out = render_mpi(&mpi, &params, true).unwrap();
        assert_eq!(out.data(), color.data());
    }

    #[test]
    fn normalization_only_matters_off_full_coverage() {
        // Constant-disparity opaque scene: coverage stays 1 in the interior.
        let mpi = stack(48, 48, 4, &[(2, 0.6, 1.0)]);
        let params = RenderParams::new(20.0, 0.875, 2.2, 4).unwrap();
        let (a, stats) = render_mpi_linear(&mpi, &params, true).unwrap();
        let (b, _) = render_mpi_linear(&mpi, &params, false).unwrap();
        assert!(stats.denominator_max <= 1.0 + 1e-6);
        let c = 24 * 48 + 24;
        assert!((a.data()[c * 3] - b.data()[c * 3]).abs() < 1e-6);
        // border: unnormalized darkens, normalized keeps the color
        assert!((a.data()[0] - 0.6).abs() < 1e-5);
        assert!(b.data()[0] < 0.5);
    }

    #[test]
    fn reconstructed_disparity_of_single_plane() {
        let mpi = stack(3, 3, 32, &[(7, 0.5, 1.0)]);
        let d = reconstruct_disparity(&mpi);
        assert!(d.data().iter().all(|v| (*v as f64 - 6.5 / 32.0).abs() < 1e-7));
        assert!(coverage(&mpi).data().iter().all(|v| *v == 1.0));
    }

    #[test]
    fn output_in_range_for_overlapping_alphas() {
        let mpi = stack(24, 24, 3, &[(1, 1.0, 1.0), (2, 1.0, 0.9), (3, 1.0, 0.9)]);
        let params = RenderParams::new(30.0, 0.0, 2.2, 3).unwrap();
        let (img, _) = render_mpi_with_stats(&mpi, &params, true).unwrap();
        assert!(img.data().iter().all(|v| v.is_finite() && (0.0..=1.0).contains(v)));
    }
}
