use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::buffer::DisparityMap;
use crate::filter::{gaussian_blur, gray_morphology};

pub const MAX_NOISE_SIGMA: f64 = 0.02;
pub const MAX_BLUR_SIGMA: f64 = 2.0;
pub const MAX_MORPH_PX: f64 = 3.0;

/// Magnitudes for one augmentation. A positive `morph_px` dilates, a
/// negative one erodes.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AugmentParams {
    pub noise_sigma: f64,
    pub blur_sigma: f64,
    pub morph_px: f64,
}

impl AugmentParams {
    pub fn sample(rng: &mut impl Rng) -> Self {
        Self {
            noise_sigma: rng.random_range(0.0..=MAX_NOISE_SIGMA),
            blur_sigma: rng.random_range(0.0..=MAX_BLUR_SIGMA),
            morph_px: rng.random_range(-MAX_MORPH_PX..=MAX_MORPH_PX),
        }
    }
}

/// Morphology, then blur, then additive noise; clamped to `[0, 1]`.
pub fn augment_with(d: &DisparityMap, p: &AugmentParams, seed: u64) -> DisparityMap {
    let (w, h) = d.dims();
    let mut v = gray_morphology(d.data(), w, h, p.morph_px.abs(), p.morph_px > 0.0);
    v = gaussian_blur(&v, w, h, p.blur_sigma);
    if p.noise_sigma > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x006E_015E);
        let n = Normal::new(0.0, p.noise_sigma).expect("finite sigma");
        for x in v.iter_mut() {
            *x += n.sample(&mut rng) as f32;
        }
    }
    for x in v.iter_mut() {
        *x = x.clamp(0.0, 1.0);
    }
    DisparityMap::new(w, h, v).expect("same dims")
}

/// Augmentation with seeded random magnitudes.
pub fn augment_disparity(d: &DisparityMap, seed: u64) -> (DisparityMap, AugmentParams) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = AugmentParams::sample(&mut rng);
    (augment_with(d, &p, seed), p)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn step() -> DisparityMap {
        DisparityMap::from_fn(40, 10, |x, _| if x >= 20 { 0.8 } else { 0.2 }).unwrap()
    }

    #[test]
    fn zero_magnitudes_are_identity() {
        let d = step();
        assert_eq!(augment_with(&d, &AugmentParams::default(), 5), d);
    }

    #[test]
    fn constant_survives_blur_and_morphology() {
        let d = DisparityMap::filled(20, 20, 0.37).unwrap();
        let p = AugmentParams {
            noise_sigma: 0.0,
            blur_sigma: 1.7,
            morph_px: -2.5,
        };
        let out = augment_with(&d, &p, 1);
        assert!(out.data().iter().all(|v| (v - 0.37).abs() < 1e-6));
    }

    #[test]
    fn erosion_moves_edge_into_near_side() {
        let p = AugmentParams {
            morph_px: -2.0,
            ..Default::default()
        };
        let out = augment_with(&step(), &p, 0);
        let edge = (0..40).find(|x| out.get(*x, 5) > 0.5).unwrap();
        assert!(edge > 20 && edge <= 22, "{edge}");
    }

    #[test]
    fn sampled_magnitudes_within_caps() {
        for seed in 0..50 {
            let (out, p) = augment_disparity(&step(), seed);
            assert!(p.noise_sigma <= MAX_NOISE_SIGMA && p.blur_sigma <= MAX_BLUR_SIGMA);
            assert!(p.morph_px.abs() <= MAX_MORPH_PX);
            assert!(out.data().iter().all(|v| (0.0..=1.0).contains(v)));
        }
        assert_eq!(augment_disparity(&step(), 9), augment_disparity(&step(), 9));
    }
}
