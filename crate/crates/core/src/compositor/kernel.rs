//! Anti-aliased disc kernels.
//!
//! Each texel's weight is the exact area of its unit square covered by the
//! disc, so the kernel varies continuously with a real-valued radius.

/// Square, normalized, rotationally symmetric disc kernel.
#[derive(Clone, Debug, PartialEq)]
pub struct Kernel {
    radius: f64,
    half: usize,
    weights: Vec<f64>,
}

impl Kernel {
    pub fn radius(&self) -> f64 {
        self.radius
    }

    /// Half-width `⌈r⌉`; the grid is `(2·half + 1)²`.
    pub fn half(&self) -> usize {
        self.half
    }

    pub fn side(&self) -> usize {
        2 * self.half + 1
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Weight at integer offset `(dx, dy)` from the center; zero outside the grid.
    pub fn at(&self, dx: isize, dy: isize) -> f64 {
        let h = self.half as isize;
        if dx.abs() > h || dy.abs() > h {
            return 0.0;
        }
        self.weights[((dy + h) as usize) * self.side() + (dx + h) as usize]
    }

    /// True when only the center texel carries weight.
    pub fn is_identity(&self) -> bool {
        let c = self.weights.len() / 2;
        self.weights
            .iter()
            .enumerate()
            .all(|(i, w)| if i == c { *w == 1.0 } else { *w == 0.0 })
    }
}

/// `∫₀ᵘ √(r² − t²) dt` for `|u| ≤ r`.
fn half_chord_integral(r: f64, u: f64) -> f64 {
    let u = u.clamp(-r, r);
    0.5 * (u * (r * r - u * u).max(0.0).sqrt() + r * r * (u / r).clamp(-1.0, 1.0).asin())
}

/// Exact area of the disc of radius `r` at the origin intersected with the
/// rectangle `[x0, x1] × [y0, y1]`.
pub fn disc_rect_area(r: f64, x0: f64, x1: f64, y0: f64, y1: f64) -> f64 {
    if r <= 0.0 {
        return 0.0;
    }
    let a = x0.max(-r);
    let b = x1.min(r);
    if a >= b || y0 >= y1 {
        return 0.0;
    }
    // Split [a, b] where the clipped chord switches between a rectangle edge
    // and the circle, so each piece integrates in closed form.
    let mut cuts = vec![a, b];
    for y in [y0, y1] {
        if y.abs() < r {
            let s = (r * r - y * y).sqrt();
            for p in [-s, s] {
                if p > a && p < b {
                    cuts.push(p);
                }
            }
        }
    }
    cuts.sort_by(|p, q| p.partial_cmp(q).unwrap());
    let mut area = 0.0;
    for pair in cuts.windows(2) {
        let (p, q) = (pair[0], pair[1]);
        if q <= p {
            continue;
        }
        let m = 0.5 * (p + q);
        let s = (r * r - m * m).max(0.0).sqrt();
        if y1.min(s) <= y0.max(-s) {
            continue;
        }
        let arc = half_chord_integral(r, q) - half_chord_integral(r, p);
        let upper = if y1 < s { y1 * (q - p) } else { arc };
        let lower = if y0 > -s { y0 * (q - p) } else { -arc };
        area += upper - lower;
    }
    area
}

/// Normalized disc of the given radius. Radius 0 gives the 1×1 identity.
pub fn disc_kernel(radius: f64) -> Kernel {
    let radius = if radius.is_finite() { radius.max(0.0) } else { 0.0 };
    let half = radius.ceil() as usize;
    let side = 2 * half + 1;
    let mut weights = vec![0.0; side * side];
    if half == 0 {
        weights[0] = 1.0;
        return Kernel { radius, half, weights };
    }
    for j in 0..side {
        let dy = j as f64 - half as f64;
        for i in 0..side {
            let dx = i as f64 - half as f64;
            weights[j * side + i] = disc_rect_area(radius, dx - 0.5, dx + 0.5, dy - 0.5, dy + 0.5);
        }
    }
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);
    // A disc that fits inside the center texel is exactly the identity.
    if radius <= 0.5 {
        weights.iter_mut().for_each(|w| *w = 0.0);
        weights[(side * side) / 2] = 1.0;
    }
    Kernel { radius, half, weights }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Supersampled coverage, independent of the closed form.
    fn supersampled(r: f64, cx: f64, cy: f64, n: usize) -> f64 {
        let mut hits = 0usize;
        for j in 0..n {
            for i in 0..n {
                let x = cx - 0.5 + (i as f64 + 0.5) / n as f64;
                let y = cy - 0.5 + (j as f64 + 0.5) / n as f64;
                if x * x + y * y <= r * r {
                    hits += 1;
                }
            }
        }
        hits as f64 / (n * n) as f64
    }

    #[test]
    fn radius_zero_is_identity() {
        let k = disc_kernel(0.0);
        assert_eq!(k.side(), 1);
        assert_eq!(k.weights(), &[1.0]);
        assert!(k.is_identity());
        assert!(disc_kernel(0.4).is_identity());
    }

    #[test]
    fn radius_one() {
        let k = disc_kernel(1.0);
        assert_eq!(k.side(), 3);
        let sum: f64 = k.weights().iter().sum();
        assert!((sum - 1.0).abs() < 1e-9);
        let c = k.at(0, 0);
        assert!(k.weights().iter().all(|w| *w <= c));
        assert!(k.at(1, 0) > k.at(1, 1));
    }

    #[test]
    fn radius_five_and_a_half() {
        let k = disc_kernel(5.5);
        assert_eq!(k.side(), 13);
        let sum: f64 = k.weights().iter().sum();
        assert!((sum - 1.0).abs() < 1e-9);
        assert!(k.at(5, 0) > k.at(6, 0));
        // frozen from the supersampled oracle: total disc area / texel
        let total_area = std::f64::consts::PI * 5.5 * 5.5;
        let c = supersampled(5.5, 5.0, 0.0, 400) / total_area;
        assert!((k.at(5, 0) - c).abs() < 1e-4, "{} vs {}", k.at(5, 0), c);
    }

    #[test]
    fn closed_form_matches_supersampling() {
        for r in [0.7f64, 1.3, 2.0, 3.6, 7.25] {
            let h = r.ceil() as isize;
            for dy in -h..=h {
                for dx in -h..=h {
                    let (x, y) = (dx as f64, dy as f64);
                    let exact = disc_rect_area(r, x - 0.5, x + 0.5, y - 0.5, y + 0.5);
                    let approx = supersampled(r, x, y, 300);
                    assert!((exact - approx).abs() < 5e-3, "r={r} ({dx},{dy}) {exact} {approx}");
                }
            }
        }
    }

    #[test]
    fn unnormalized_areas_sum_to_disc_area() {
        let r = 4.3;
        let h = 5isize;
        let mut total = 0.0;
        for dy in -h..=h {
            for dx in -h..=h {
                let (x, y) = (dx as f64, dy as f64);
                total += disc_rect_area(r, x - 0.5, x + 0.5, y - 0.5, y + 0.5);
            }
        }
        assert!((total - std::f64::consts::PI * r * r).abs() < 1e-9);
    }

    #[test]
    fn symmetric() {
        let k = disc_kernel(3.3);
        for dy in -4..=4 {
            for dx in -4..=4 {
                assert!((k.at(dx, dy) - k.at(dy, -dx)).abs() < 1e-12);
                assert!((k.at(dx, dy) - k.at(-dx, dy)).abs() < 1e-12);
            }
        }
    }
}
