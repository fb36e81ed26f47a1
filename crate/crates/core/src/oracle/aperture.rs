//! Deterministic sampling of the unit-disk aperture.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Point `(μ, ν)` on the aperture with `μ² + ν² ≤ 1`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ApertureSample {
    pub mu: f64,
    pub nu: f64,
}

impl ApertureSample {
    pub const CENTER: Self = Self { mu: 0.0, nu: 0.0 };

    /// Rotates the sample by `theta` radians about the aperture center.
    #[inline]
    pub fn rotated(self, cos: f64, sin: f64) -> Self {
        Self {
            mu: cos * self.mu - sin * self.nu,
            nu: sin * self.mu + cos * self.nu,
        }
    }
}

/// Shirley–Chiu concentric map from `[0, 1]²` onto the unit disk.
pub fn concentric_disk(u: f64, v: f64) -> (f64, f64) {
    use std::f64::consts::FRAC_PI_4;
    let a = 2.0 * u - 1.0;
    let b = 2.0 * v - 1.0;
    if a == 0.0 && b == 0.0 {
        return (0.0, 0.0);
    }
    let (r, phi) = if a.abs() > b.abs() {
        (a, FRAC_PI_4 * (b / a))
    } else {
        (b, 2.0 * FRAC_PI_4 - FRAC_PI_4 * (a / b))
    };
    let (mut x, mut y) = (r * phi.cos(), r * phi.sin());
    // Guard against rounding just past the rim.
    let n2 = x * x + y * y;
    if n2 > 1.0 {
        let s = n2.sqrt();
        x /= s;
        y /= s;
    }
    (x, y)
}

/// `n` aperture points: the center first, then `n − 1` jittered strata of a
/// near-square grid pushed through the concentric map. When the grid has
/// more cells than needed, a seeded shuffle picks which ones to keep.
pub fn aperture_samples(n: usize, seed: u64) -> Vec<ApertureSample> {
    let n = n.max(1);
    let mut out = Vec::with_capacity(n);
    out.push(ApertureSample::CENTER);
    let m = n - 1;
    if m == 0 {
        return out;
    }
    let cols = (m as f64).sqrt().ceil() as usize;
    let rows = m.div_ceil(cols);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cells: Vec<usize> = (0..rows * cols).collect();
    cells.shuffle(&mut rng);
    cells.truncate(m);
    cells.sort_unstable();
    for cell in cells {
        let (i, j) = (cell % cols, cell / cols);
        let u = (i as f64 + rng.random::<f64>()) / cols as f64;
        let v = (j as f64 + rng.random::<f64>()) / rows as f64;
        let (mu, nu) = concentric_disk(u, v);
        out.push(ApertureSample { mu, nu });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_sample_is_center() {
        assert_eq!(aperture_samples(1, 3), vec![ApertureSample::CENTER]);
    }

    #[test]
    fn samples_inside_disk_and_deterministic() {
        let s = aperture_samples(2500, 7);
        assert_eq!(s.len(), 2500);
        assert!(s.iter().all(|p| p.mu * p.mu + p.nu * p.nu <= 1.0));
        assert_eq!(s, aperture_samples(2500, 7));
        assert_ne!(s, aperture_samples(2500, 8));
    }

    #[test]
    fn mean_is_near_center() {
        let s = aperture_samples(2500, 7);
        let mx = s.iter().map(|p| p.mu).sum::<f64>() / s.len() as f64;
        let my = s.iter().map(|p| p.nu).sum::<f64>() / s.len() as f64;
        assert!(mx.abs() < 0.05 && my.abs() < 0.05, "{mx} {my}");
    }

    #[test]
    fn concentric_map_corners() {
        let (x, y) = concentric_disk(1.0, 0.5);
        assert!((x - 1.0).abs() < 1e-12 && y.abs() < 1e-12);
        assert_eq!(concentric_disk(0.5, 0.5), (0.0, 0.0));
        let (x, y) = concentric_disk(1.0, 1.0);
        assert!((x * x + y * y - 1.0).abs() < 1e-12);
    }

    #[test]
    fn odd_counts() {
        for n in [2, 3, 10, 17, 64, 65] {
            assert_eq!(aperture_samples(n, 1).len(), n);
        }
    }
}
