#![allow(dead_code)]

use std::path::{Path, PathBuf};

use refocus_core::io::{save_disparity, save_image, BitDepth};
use refocus_core::oracle::save_scene;
use refocus_core::{composite_all_in_focus, ColorSpace, ImageBuffer, PlanarLayer, PlaneCoeffs, SceneSpec};

pub const W: usize = 80;
pub const H: usize = 64;
pub const FG_D: f64 = 0.7;
pub const BG_D: f64 = 0.2;
/// Foreground square: x in FG_X..FG_X+FG_SIDE, same for y.
pub const FG_X: usize = 24;
pub const FG_SIDE: usize = 32;

/// Textured background with an opaque textured square in front.
pub fn scene() -> SceneSpec {
    let q = |v: f32| (v * 255.0).round() / 255.0;
    let bg = ImageBuffer::from_fn(W, H, 4, ColorSpace::Encoded, |x, y, c| {
        if c == 3 {
            1.0
        } else {
            q(0.2 + 0.6 * (((x / 4 + y / 4 + c) % 3) as f32 / 2.0))
        }
    })
    .unwrap();
    let fg = ImageBuffer::from_fn(FG_SIDE, FG_SIDE, 4, ColorSpace::Encoded, |x, y, c| match c {
        3 => 1.0,
        0 => q(0.9 - 0.02 * (x % 8) as f32),
        1 => q(0.1 + 0.02 * (y % 8) as f32),
        _ => q(0.3),
    })
    .unwrap();
    SceneSpec::new(
        W,
        H,
        vec![
            PlanarLayer {
                rgba: bg,
                coeffs: PlaneCoeffs::constant(BG_D),
                offset: (0, 0),
                full_frame: true,
            },
            PlanarLayer {
                rgba: fg,
                coeffs: PlaneCoeffs::constant(FG_D),
                offset: (FG_X as i64, FG_X as i64),
                full_frame: false,
            },
        ],
    )
    .unwrap()
}

pub struct Fixture {
    pub dir: tempfile::TempDir,
    pub image: PathBuf,
    pub disparity: PathBuf,
    pub scene: PathBuf,
}

pub fn fixture() -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let s = scene();
    let (img, d) = composite_all_in_focus(&s, 2.2).unwrap();
    let image = dir.path().join("image.png");
    let disparity = dir.path().join("disparity.png");
    let scene = dir.path().join("scene.json");
    save_image(&img, &image, BitDepth::Eight).unwrap();
    save_disparity(&d, &disparity).unwrap();
    save_scene(&s, &scene).unwrap();
    Fixture {
        dir,
        image,
        disparity,
        scene,
    }
}

pub fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}
