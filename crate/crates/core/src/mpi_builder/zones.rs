use serde::{Deserialize, Serialize};

use crate::buffer::{DisparityMap, Mask};
use crate::compositor::plane_disparity;

/// How disparity is distributed across planes.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ZoneMode {
    /// Triangular hats of half-width `1/N` centered on the plane disparities.
    #[default]
    Soft,
    /// Indicator of the bin `[(i−1)/N, i/N)`.
    Hard,
}

/// 1-based bin of `d` in an `n`-plane stack; `d = 1` falls in the last bin.
#[inline]
pub fn hard_bin(d: f64, n: usize) -> usize {
    (((d * n as f64).floor() as i64 + 1).clamp(1, n as i64)) as usize
}

/// Nonzero zone weights of a single disparity as `(plane index, weight)`
/// with 1-based indices in back-to-front order. Weights sum to 1.
pub fn zone_weights(d: f64, n: usize, mode: ZoneMode) -> ([(usize, f64); 2], usize) {
    match mode {
        ZoneMode::Hard => ([(hard_bin(d, n), 1.0), (0, 0.0)], 1),
        ZoneMode::Soft => {
            let lo = plane_disparity(1, n);
            let hi = plane_disparity(n, n);
            let d = d.clamp(lo, hi);
            // Position in plane-index units: plane i sits at i.
            let t = d * n as f64 + 0.5;
            let i = (t.floor() as usize).clamp(1, n);
            let f = t - i as f64;
            if f <= 0.0 || i == n {
                ([(i, 1.0), (0, 0.0)], 1)
            } else {
                ([(i, 1.0 - f), (i + 1, f)], 2)
            }
        }
    }
}

/// Per-plane membership masks; index 0 is plane 1 (the farthest).
pub fn zone_masks(d: &DisparityMap, n: usize, mode: ZoneMode) -> Vec<Mask> {
    let (w, h) = d.dims();
    let mut planes = vec![vec![0.0f32; w * h]; n];
    for (p, v) in d.data().iter().enumerate() {
        let (ws, k) = zone_weights(*v as f64, n, mode);
        for &(i, wt) in &ws[..k] {
            planes[i - 1][p] = wt as f32;
        }
    }
    planes
        .into_iter()
        .map(|data| Mask::new(w, h, data).expect("sized"))
        .collect()
}

/// Converts per-plane weights (back to front, summing to one) into alphas
/// whose over-composite reproduces the weights: `α_i = z_i / Σ_{k≤i} z_k`.
pub fn weights_to_alphas(weights: &mut [f64]) {
    let mut acc = 0.0;
    for z in weights.iter_mut() {
        acc += *z;
        *z = if acc > 0.0 { *z / acc } else { 0.0 };
    }
}
