use rayon::prelude::*;

use crate::buffer::{ColorSpace, ImageBuffer, Mask};
use crate::compositor::{plane_disparity, MpiPlane, MpiStack};
use crate::error::{Error, Result};
use crate::gamma::decode_value;
use crate::oracle::SceneSpec;
use crate::params::check_gamma;

use super::zones::hard_bin;

/// Stack built from a known layered scene: each layer texel lands on the
/// plane whose bin holds its local disparity, and texels sharing a plane are
/// over-composited in scene order.
pub fn build_mpi_ideal(scene: &SceneSpec, n: usize, gamma: f64) -> Result<MpiStack> {
    scene.validate()?;
    check_gamma(gamma)?;
    if n < 2 {
        return Err(Error::param("plane_count", format!("need at least 2, got {n}")));
    }
    let (w, h) = scene.dims();
    // Premultiplied color and alpha per plane, filled row by row.
    let mut prem = vec![vec![0.0f32; w * h * 3]; n];
    let mut alpha = vec![vec![0.0f32; w * h]; n];
    let rows: Vec<Vec<(usize, usize, [f32; 4])>> = (0..h)
        .into_par_iter()
        .map(|y| {
            let mut out = Vec::new();
            for x in 0..w {
                let mut acc: Vec<(usize, [f64; 4])> = Vec::with_capacity(2);
                for layer in &scene.layers {
                    let Some((u, v)) = layer.texel_at(x, y) else { continue };
                    let px = layer.rgba.pixel(u, v);
                    let a = px[3] as f64;
                    if a <= 0.0 {
                        continue;
                    }
                    let bin = hard_bin(layer.coeffs.disparity_at(x as f64, y as f64), n);
                    let t = [
                        decode_value(px[0], gamma) as f64 * a,
                        decode_value(px[1], gamma) as f64 * a,
                        decode_value(px[2], gamma) as f64 * a,
                        a,
                    ];
                    let k = match acc.iter().position(|(b, _)| *b == bin) {
                        Some(k) => k,
                        None => {
                            acc.push((bin, [0.0; 4]));
                            acc.len() - 1
                        }
                    };
                    let slot = &mut acc[k].1;
                    for c in 0..4 {
                        slot[c] = slot[c] * (1.0 - a) + t[c];
                    }
                }
                for (bin, s) in acc {
                    out.push((x, bin, s.map(|v| v as f32)));
                }
            }
            out
        })
        .collect();
    for (y, row) in rows.into_iter().enumerate() {
        for (x, bin, s) in row {
            let i = y * w + x;
            prem[bin - 1][i * 3..i * 3 + 3].copy_from_slice(&s[..3]);
            alpha[bin - 1][i] = s[3];
        }
    }
    let planes = prem
        .into_iter()
        .zip(alpha)
        .enumerate()
        .map(|(k, (p, a))| {
            let color: Vec<f32> = p
                .chunks_exact(3)
                .zip(&a)
                .flat_map(|(c, al)| {
                    let inv = if *al > 0.0 { 1.0 / al } else { 0.0 };
                    [c[0] * inv, c[1] * inv, c[2] * inv]
                })
                .collect();
            Ok(MpiPlane {
                color: ImageBuffer::new(w, h, 3, ColorSpace::Linear, color)?,
                alpha: Mask::new(w, h, a)?,
                blend: None,
                disparity: plane_disparity(k + 1, n),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    MpiStack::new(planes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compositor::{compose_sharp, reconstruct_disparity};
    use crate::oracle::scene::tests::{solid_rgba, two_layer};
    use crate::oracle::{composite_all_in_focus, PlanarLayer, PlaneCoeffs, Tracer};

    fn nonempty(stack: &MpiStack) -> Vec<usize> {
        stack
            .planes()
            .iter()
            .enumerate()
            .filter(|(_, p)| !p.is_empty())
            .map(|(i, _)| i + 1)
            .collect()
    }

    #[test]
    fn constant_layer_single_plane() {
        let layer = PlanarLayer {
            rgba: solid_rgba(16, 16, [0.4, 0.5, 0.6], 1.0),
            coeffs: PlaneCoeffs::constant(0.515),
            offset: (0, 0),
            full_frame: true,
        };
        let scene = SceneSpec::new(16, 16, vec![layer]).unwrap();
        let stack = build_mpi_ideal(&scene, 32, 2.2).unwrap();
        assert_eq!(nonempty(&stack), vec![17]);
    }

    #[test]
    fn two_plane_reproduces_composite() {
        let scene = two_layer(40, 40, 0.2, 0.8);
        let stack = build_mpi_ideal(&scene, 32, 2.2).unwrap();
        assert_eq!(nonempty(&stack).len(), 2);
        let sharp = compose_sharp(&stack);
        let (lin, _) = Tracer::new(&scene, 2.2).unwrap().composite();
        for (a, b) in sharp.data().iter().zip(lin.data()) {
            assert!((a - b).abs() <= 1e-6);
        }
        let (_, d) = composite_all_in_focus(&scene, 2.2).unwrap();
        let rc = reconstruct_disparity(&stack);
        for (a, b) in rc.data().iter().zip(d.data()) {
            assert!((a - b).abs() <= 1.0 / 32.0 + 1e-3);
        }
    }

    #[test]
    fn ramp_layer_spans_consecutive_planes() {
        // d runs from 0.30 to 0.37 across x: bins 10, 11, 12 of 32.
        let w = 30;
        let c = 1.0 / 0.30;
        let a = -(0.07 / 29.0) * c;
        let layer = PlanarLayer {
            rgba: solid_rgba(w, 8, [0.7, 0.2, 0.1], 1.0),
            coeffs: PlaneCoeffs { a, b: 0.0, c },
            offset: (0, 0),
            full_frame: true,
        };
        let scene = SceneSpec::new(w, 8, vec![layer]).unwrap();
        let stack = build_mpi_ideal(&scene, 32, 2.2).unwrap();
        assert_eq!(nonempty(&stack), vec![10, 11, 12]);
        let (_, d) = composite_all_in_focus(&scene, 2.2).unwrap();
        let rc = reconstruct_disparity(&stack);
        for (a, b) in rc.data().iter().zip(d.data()) {
            assert!((a - b).abs() <= 1.0 / 32.0);
        }
    }
}
