use rayon::prelude::*;

use super::aperture::{aperture_samples, ApertureSample};
use super::scene::{PlaneCoeffs, SceneSpec};
use crate::buffer::{ColorSpace, DisparityMap, ImageBuffer};
use crate::error::Result;
use crate::gamma::{decode_value, gamma_encode};
use crate::params::{check_gamma, RenderParams};

/// Denominator magnitude below which a ray counts as parallel to a plane.
pub const EPS_DEN: f64 = 1e-6;
/// Residual ray energy at which the walk stops.
pub const EPS_ENERGY: f64 = 1e-3;

/// Where the aperture ray through `(x, y)` and `(μ, ν)` meets the plane,
/// projected back to the sensor. `None` when the ray is (nearly) parallel to
/// the plane.
pub fn project_sample(
    x: f64,
    y: f64,
    coeffs: PlaneCoeffs,
    blur_amount: f64,
    refocus_disparity: f64,
    mu: f64,
    nu: f64,
) -> Option<(f64, f64)> {
    let PlaneCoeffs { a, b, c } = coeffs;
    let (am, an) = (blur_amount * mu, blur_amount * nu);
    let den = a * am + b * an + c;
    if den.abs() < EPS_DEN {
        return None;
    }
    let t = (1.0 - a * x - b * y - c * refocus_disparity) / den;
    Some((x + t * am, y + t * an))
}

/// A layer with premultiplied linear RGBA ready for lookups.
struct TraceLayer {
    w: usize,
    h: usize,
    x0: f64,
    y0: f64,
    coeffs: PlaneCoeffs,
    texels: Vec<[f32; 4]>,
}

impl TraceLayer {
    #[inline]
    fn texel(&self, u: isize, v: isize) -> [f32; 4] {
        if u < 0 || v < 0 || u >= self.w as isize || v >= self.h as isize {
            [0.0; 4]
        } else {
            self.texels[v as usize * self.w + u as usize]
        }
    }

    /// Bilinear premultiplied lookup at canvas position; zero off the layer.
    #[inline]
    fn sample(&self, xc: f64, yc: f64) -> [f64; 4] {
        let u = xc - self.x0;
        let v = yc - self.y0;
        if u <= -1.0 || v <= -1.0 || u >= self.w as f64 || v >= self.h as f64 {
            return [0.0; 4];
        }
        let (uf, vf) = (u.floor(), v.floor());
        let (fx, fy) = (u - uf, v - vf);
        let (u0, v0) = (uf as isize, vf as isize);
        let mut out = [0.0f64; 4];
        for (du, dv, wgt) in [
            (0, 0, (1.0 - fx) * (1.0 - fy)),
            (1, 0, fx * (1.0 - fy)),
            (0, 1, (1.0 - fx) * fy),
            (1, 1, fx * fy),
        ] {
            if wgt == 0.0 {
                continue;
            }
            let t = self.texel(u0 + du, v0 + dv);
            for c in 0..4 {
                out[c] += wgt * t[c] as f64;
            }
        }
        out
    }
}

/// Accumulated result of one aperture ray.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct RayResult {
    /// `Σ weight·α·κ` in linear space.
    pub color: [f64; 3],
    /// `Σ weight·α`; equals the energy the ray deposited.
    pub weight: f64,
}

/// Scene prepared for repeated ray queries.
pub struct Tracer {
    width: usize,
    height: usize,
    gamma: f64,
    /// Front to back.
    layers: Vec<TraceLayer>,
}

impl Tracer {
    pub fn new(scene: &SceneSpec, gamma: f64) -> Result<Self> {
        scene.validate()?;
        check_gamma(gamma)?;
        let layers = scene
            .layers
            .iter()
            .rev()
            .map(|l| TraceLayer {
                w: l.width(),
                h: l.height(),
                x0: l.offset.0 as f64,
                y0: l.offset.1 as f64,
                coeffs: l.coeffs,
                texels: l
                    .rgba
                    .data()
                    .chunks_exact(4)
                    .map(|px| {
                        let a = px[3];
                        [
                            decode_value(px[0], gamma) * a,
                            decode_value(px[1], gamma) * a,
                            decode_value(px[2], gamma) * a,
                            a,
                        ]
                    })
                    .collect(),
            })
            .collect();
        Ok(Self {
            width: scene.width,
            height: scene.height,
            gamma,
            layers,
        })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Walks one ray front to back, splitting its energy by alpha at each hit.
    pub fn trace_ray(
        &self,
        x: f64,
        y: f64,
        sample: ApertureSample,
        blur_amount: f64,
        refocus_disparity: f64,
    ) -> RayResult {
        let mut energy = 1.0f64;
        let mut out = RayResult::default();
        for layer in &self.layers {
            let Some((xn, yn)) =
                project_sample(x, y, layer.coeffs, blur_amount, refocus_disparity, sample.mu, sample.nu)
            else {
                continue;
            };
            let s = layer.sample(xn, yn);
            let alpha = s[3];
            if alpha <= 0.0 {
                continue;
            }
            for (o, v) in out.color.iter_mut().zip(&s[..3]) {
                *o += energy * v;
            }
            out.weight += energy * alpha;
            energy *= 1.0 - alpha;
            if energy < EPS_ENERGY {
                break;
            }
        }
        out
    }

    /// Sums all rays of one pixel under the given per-pixel rotation.
    pub fn trace_pixel(
        &self,
        x: usize,
        y: usize,
        samples: &[ApertureSample],
        params: &RenderParams,
        seed: u64,
    ) -> RayResult {
        let theta = pixel_angle(seed, x, y);
        let (sin, cos) = theta.sin_cos();
        let mut acc = RayResult::default();
        for s in samples {
            let r = self.trace_ray(
                x as f64,
                y as f64,
                s.rotated(cos, sin),
                params.blur_amount,
                params.refocus_disparity,
            );
            for c in 0..3 {
                acc.color[c] += r.color[c];
            }
            acc.weight += r.weight;
        }
        acc
    }

    /// Exact back-to-front over-composite at integer pixels, in linear space,
    /// plus the alpha-weighted composite of layer disparities.
    pub fn composite(&self) -> (ImageBuffer, DisparityMap) {
        let (w, h) = (self.width, self.height);
        let mut color = vec![0.0f32; w * h * 3];
        let mut disp = vec![0.0f32; w * h];
        color
            .par_chunks_mut(w * 3)
            .zip(disp.par_chunks_mut(w))
            .enumerate()
            .for_each(|(y, (crow, drow))| {
                for x in 0..w {
                    let mut acc = [0.0f64; 3];
                    let mut d = 0.0f64;
                    for layer in self.layers.iter().rev() {
                        let u = x as isize - layer.x0 as isize;
                        let v = y as isize - layer.y0 as isize;
                        let t = layer.texel(u, v);
                        let a = t[3] as f64;
                        if a <= 0.0 {
                            continue;
                        }
                        let keep = 1.0 - a;
                        for c in 0..3 {
                            acc[c] = acc[c] * keep + t[c] as f64;
                        }
                        d = d * keep + a * layer.coeffs.disparity_at(x as f64, y as f64);
                    }
                    for c in 0..3 {
                        crow[x * 3 + c] = acc[c].clamp(0.0, 1.0) as f32;
                    }
                    drow[x] = d.clamp(0.0, 1.0) as f32;
                }
            });
        (
            ImageBuffer::new(w, h, 3, ColorSpace::Linear, color).expect("sized"),
            DisparityMap::new(w, h, disp).expect("sized"),
        )
    }

    /// Ray-traced bokeh in linear space.
    pub fn render_linear(&self, params: &RenderParams, n_samples: usize, seed: u64) -> Result<ImageBuffer> {
        params.validate()?;
        // A pinhole aperture or zero blur sends every ray to the pixel itself.
        if params.blur_amount == 0.0 || n_samples <= 1 {
            return Ok(self.composite().0);
        }
        let samples = aperture_samples(n_samples, seed);
        let (w, h) = (self.width, self.height);
        let mut out = vec![0.0f32; w * h * 3];
        out.par_chunks_mut(w * 3).enumerate().for_each(|(y, row)| {
            for x in 0..w {
                let r = self.trace_pixel(x, y, &samples, params, seed);
                if r.weight > 0.0 {
                    for c in 0..3 {
                        row[x * 3 + c] = (r.color[c] / r.weight).clamp(0.0, 1.0) as f32;
                    }
                }
            }
        });
        ImageBuffer::new(w, h, 3, ColorSpace::Linear, out)
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Per-pixel aperture rotation in `[0, 2π)`, a pure function of
/// `(seed, x, y)`.
pub fn pixel_angle(seed: u64, x: usize, y: usize) -> f64 {
    let h = splitmix64(splitmix64(seed) ^ ((x as u64) << 32 | y as u64));
    (h >> 11) as f64 / (1u64 << 53) as f64 * std::f64::consts::TAU
}

/// Ray-traced ground-truth bokeh, gamma-encoded with `params.gamma`.
pub fn trace_bokeh(scene: &SceneSpec, params: &RenderParams, n_samples: usize, seed: u64) -> Result<ImageBuffer> {
    let tracer = Tracer::new(scene, params.gamma)?;
    gamma_encode(&tracer.render_linear(params, n_samples, seed)?, params.gamma)
}

/// Ray-traced bokeh left in linear space.
pub fn trace_bokeh_linear(
    scene: &SceneSpec,
    params: &RenderParams,
    n_samples: usize,
    seed: u64,
) -> Result<ImageBuffer> {
    Tracer::new(scene, params.gamma)?.render_linear(params, n_samples, seed)
}

/// All-in-focus image (gamma-encoded) and disparity map of a scene.
pub fn composite_all_in_focus(scene: &SceneSpec, gamma: f64) -> Result<(ImageBuffer, DisparityMap)> {
    let (lin, disp) = Tracer::new(scene, gamma)?.composite();
    Ok((gamma_encode(&lin, gamma)?, disp))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compositor::{convolve::convolve_direct, disc_kernel};
    use crate::oracle::scene::tests::two_layer;
    use crate::oracle::scene::PlanarLayer;

    #[test]
    fn projection_examples() {
        let p = project_sample(10.0, 10.0, PlaneCoeffs::constant(0.5), 16.0, 0.25, 1.0, 0.0).unwrap();
        assert!((p.0 - 14.0).abs() < 1e-12 && (p.1 - 10.0).abs() < 1e-12);

        let p = project_sample(3.0, 4.0, PlaneCoeffs::constant(0.4), 30.0, 0.4, 0.3, -0.7).unwrap();
        assert!((p.0 - 3.0).abs() < 1e-12 && (p.1 - 4.0).abs() < 1e-12);

        // Exact rational evaluation: 100 + 0.9/1.005·5 = 100 + 900/201.
        let c = PlaneCoeffs {
            a: 0.001,
            b: 0.0,
            c: 1.0,
        };
        let p = project_sample(100.0, 50.0, c, 10.0, 0.0, 0.5, 0.0).unwrap();
        assert!((p.0 - (100.0 + 900.0 / 201.0)).abs() < 1e-12);
        assert!((p.0 - 104.4776).abs() < 1e-4);
        assert_eq!(p.1, 50.0);

        let tilted = PlaneCoeffs {
            a: -0.1,
            b: 0.0,
            c: 1.0,
        };
        assert!(project_sample(0.0, 0.0, tilted, 10.0, 0.0, 1.0, 0.0).is_none());
    }

    #[test]
    fn fronto_parallel_offsets_form_scaled_disc() {
        let (a, d, df) = (24.0, 0.8, 0.3);
        for s in aperture_samples(64, 5) {
            let (xn, yn) = project_sample(50.0, 60.0, PlaneCoeffs::constant(d), a, df, s.mu, s.nu).unwrap();
            let r = a * (d - df);
            assert!((xn - 50.0 - r * s.mu).abs() < 1e-9);
            assert!((yn - 60.0 - r * s.nu).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_blur_equals_composite_exactly() {
        let scene = two_layer(32, 24, 0.2, 0.7);
        let params = RenderParams::new(0.0, 0.5, 2.2, 32).unwrap();
        let t = trace_bokeh(&scene, &params, 64, 1).unwrap();
        let (aif, _) = composite_all_in_focus(&scene, 2.2).unwrap();
        assert_eq!(t, aif);
        let one_ray = RenderParams::new(30.0, 0.5, 2.2, 32).unwrap();
        assert_eq!(trace_bokeh(&scene, &one_ray, 1, 1).unwrap(), aif);
    }

    #[test]
    fn composite_examples() {
        let scene = two_layer(16, 16, 0.2, 0.8);
        let (_, d) = composite_all_in_focus(&scene, 2.2).unwrap();
        assert!((d.get(8, 8) as f64 - 0.8).abs() < 1e-6);
        assert!((d.get(0, 0) as f64 - 0.2).abs() < 1e-6);

        // half-transparent white over a black/white split background
        let bg = ImageBuffer::from_fn(
            8,
            8,
            4,
            ColorSpace::Encoded,
            |x, _, c| {
                if c == 3 || x >= 4 {
                    1.0
                } else {
                    0.0
                }
            },
        )
        .unwrap();
        let scene = SceneSpec::new(
            8,
            8,
            vec![
                PlanarLayer {
                    rgba: bg,
                    coeffs: PlaneCoeffs::constant(0.1),
                    offset: (0, 0),
                    full_frame: true,
                },
                PlanarLayer {
                    rgba: ImageBuffer::from_fn(8, 8, 4, ColorSpace::Encoded, |_, _, c| if c == 3 { 0.5 } else { 0.0 })
                        .unwrap(),
                    coeffs: PlaneCoeffs::constant(0.9),
                    offset: (0, 0),
                    full_frame: true,
                },
            ],
        )
        .unwrap();
        let (lin, _) = Tracer::new(&scene, 2.2).unwrap().composite();
        assert!((lin.get(6, 3, 0) - 0.5).abs() < 1e-6);
        assert!(lin.get(1, 3, 0).abs() < 1e-6);
    }

    #[test]
    fn energy_is_conserved_inside_canvas() {
        let scene = two_layer(40, 40, 0.1, 0.9);
        let tracer = Tracer::new(&scene, 2.2).unwrap();
        let samples = aperture_samples(128, 3);
        for (x, y) in [(20, 20), (10, 10), (30, 12), (20, 9)] {
            for s in &samples {
                let r = tracer.trace_ray(x as f64, y as f64, *s, 8.0, 0.1);
                assert!(r.weight <= 1.0 + 1e-12 && r.weight >= 1.0 - EPS_ENERGY, "{r:?}");
            }
        }
    }

    #[test]
    fn constant_layer_matches_disc_convolution() {
        let n = 48;
        let bg = ImageBuffer::from_fn(n, n, 4, ColorSpace::Encoded, |x, y, c| {
            if c == 3 {
                1.0
            } else {
                (((x / 3) * 7 + (y / 5) * 3 + c) % 5) as f32 / 4.0
            }
        })
        .unwrap();
        let scene = SceneSpec::new(
            n,
            n,
            vec![PlanarLayer {
                rgba: bg,
                coeffs: PlaneCoeffs::constant(1.0),
                offset: (0, 0),
                full_frame: true,
            }],
        )
        .unwrap();
        let params = RenderParams::new(6.0, 0.0, 2.2, 32).unwrap();
        let traced = trace_bokeh_linear(&scene, &params, 1024, 9).unwrap();
        let (aif, _) = Tracer::new(&scene, 2.2).unwrap().composite();
        let k = disc_kernel(6.0);
        let mut se = 0.0f64;
        let mut count = 0usize;
        for c in 0..3 {
            let blurred = convolve_direct(&aif.channel(c), n, n, &k);
            for y in 8..n - 8 {
                for x in 8..n - 8 {
                    let e = (blurred[y * n + x] - traced.get(x, y, c)) as f64;
                    se += e * e;
                    count += 1;
                }
            }
        }
        let psnr = 10.0 * (1.0 / (se / count as f64)).log10();
        assert!(psnr >= 40.0, "psnr {psnr}");
    }

    #[test]
    fn deterministic() {
        let scene = two_layer(24, 24, 0.2, 0.6);
        let params = RenderParams::new(12.0, 0.2, 2.2, 32).unwrap();
        let a = trace_bokeh(&scene, &params, 32, 4).unwrap();
        let b = trace_bokeh(&scene, &params, 32, 4).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn partial_occlusion_reveals_background() {
        // Blurred foreground over an in-focus background: near the inside of
        // the silhouette some rays slip past the foreground.
        let scene = two_layer(64, 64, 0.2, 0.8);
        let params = RenderParams::new(10.0, 0.2, 2.2, 32).unwrap();
        let traced = trace_bokeh_linear(&scene, &params, 256, 2).unwrap();
        let fg_red = decode_value(scene.layers[1].rgba.get(0, 0, 0), 2.2);
        assert!((traced.get(32, 32, 0) - fg_red).abs() < 1e-6);
        assert!((traced.get(17, 32, 0) - fg_red).abs() > 0.02);
    }
}
