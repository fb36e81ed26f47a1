//! Shared inputs for the benchmarks.

use refocus_core::synth::{random_scene, Assets, DatasetConfig};
use refocus_core::{composite_all_in_focus, DisparityMap, ImageBuffer, SceneSpec};

/// A seeded synthetic scene with its all-in-focus image and disparity.
pub fn scene(size: usize, seed: u64) -> (SceneSpec, ImageBuffer, DisparityMap) {
    let cfg = DatasetConfig {
        width: size,
        height: size,
        ..Default::default()
    };
    let g = random_scene(seed, &Assets::procedural(), &cfg).expect("valid config");
    let (img, d) = composite_all_in_focus(&g.scene, cfg.gamma).expect("valid scene");
    (g.scene, img, d)
}
