use std::f64::consts::TAU;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::buffer::{ColorSpace, ImageBuffer};
use crate::error::{Error, Result};
use crate::io::{load_image, save_image, BitDepth};

pub const BACKGROUND_SIZE: usize = 256;
pub const FOREGROUND_SIZE: usize = 128;
const ASSET_COUNT: u64 = 5;

/// Background (RGB) and foreground (RGBA) images a scene is composed from.
#[derive(Clone, Debug, PartialEq)]
pub struct Assets {
    pub backgrounds: Vec<ImageBuffer>,
    pub foregrounds: Vec<ImageBuffer>,
}

fn hsv(h: f64, s: f64, v: f64) -> [f64; 3] {
    let h = h.rem_euclid(1.0) * 6.0;
    let f = h - h.floor();
    let (p, q, t) = (v * (1.0 - s), v * (1.0 - s * f), v * (1.0 - s * (1.0 - f)));
    match h as u32 {
        0 => [v, t, p],
        1 => [q, v, p],
        2 => [p, v, t],
        3 => [p, q, v],
        4 => [t, p, v],
        _ => [v, p, q],
    }
}

/// Textured background: a color gradient, oriented gratings, and scattered
/// discs.
fn background(seed: u64) -> ImageBuffer {
    let mut rng = ChaCha8Rng::seed_from_u64(0xB6 ^ seed);
    let n = BACKGROUND_SIZE as f64;
    let hue = rng.random::<f64>();
    let c0 = hsv(hue, 0.5, 0.8);
    let c1 = hsv(hue + 0.35, 0.6, 0.35);
    let gratings: Vec<(f64, f64, f64, f64, usize)> = (0..4)
        .map(|_| {
            (
                rng.random::<f64>() * TAU,
                rng.random_range(6.0..40.0),
                rng.random::<f64>() * TAU,
                rng.random_range(0.05..0.15),
                rng.random_range(0..3usize),
            )
        })
        .collect();
    let discs: Vec<(f64, f64, f64, [f64; 3])> = (0..24)
        .map(|_| {
            (
                rng.random::<f64>() * n,
                rng.random::<f64>() * n,
                rng.random_range(3.0..18.0),
                hsv(rng.random::<f64>(), 0.7, rng.random_range(0.3..1.0)),
            )
        })
        .collect();
    let gdir = rng.random::<f64>() * TAU;
    let mut px = vec![[0.0f64; 3]; BACKGROUND_SIZE * BACKGROUND_SIZE];
    for y in 0..BACKGROUND_SIZE {
        for x in 0..BACKGROUND_SIZE {
            let (fx, fy) = (x as f64, y as f64);
            let t = 0.5 + ((fx - n / 2.0) * gdir.cos() + (fy - n / 2.0) * gdir.sin()) / n;
            let mut c = [0.0; 3];
            for k in 0..3 {
                c[k] = c0[k] * (1.0 - t) + c1[k] * t;
            }
            for &(theta, period, phase, amp, ch) in &gratings {
                let s = ((fx * theta.cos() + fy * theta.sin()) * TAU / period + phase).sin();
                c[ch] += amp * s;
                c[(ch + 1) % 3] += 0.5 * amp * s;
            }
            for &(cx, cy, r, col) in &discs {
                let dist = ((fx - cx).powi(2) + (fy - cy).powi(2)).sqrt();
                let a = (r - dist + 0.5).clamp(0.0, 1.0) * 0.85;
                for k in 0..3 {
                    c[k] = c[k] * (1.0 - a) + col[k] * a;
                }
            }
            px[y * BACKGROUND_SIZE + x] = c;
        }
    }
    ImageBuffer::from_fn(BACKGROUND_SIZE, BACKGROUND_SIZE, 3, ColorSpace::Encoded, |x, y, c| {
        px[y * BACKGROUND_SIZE + x][c].clamp(0.0, 1.0) as f32
    })
    .expect("fixed size")
    .quantize8()
}

/// Signed distance (pixels, negative inside) of one of five silhouettes
/// centered in the tile.
fn silhouette(kind: u64, x: f64, y: f64, rot: f64) -> f64 {
    let c = FOREGROUND_SIZE as f64 / 2.0;
    let (dx, dy) = (x - c, y - c);
    let (u, v) = (dx * rot.cos() + dy * rot.sin(), -dx * rot.sin() + dy * rot.cos());
    let r = (u * u + v * v).sqrt();
    let th = v.atan2(u);
    match kind % 5 {
        0 => r - 50.0,
        1 => {
            // rounded square
            let (qx, qy) = (u.abs() - 36.0, v.abs() - 36.0);
            let out = (qx.max(0.0).powi(2) + qy.max(0.0).powi(2)).sqrt();
            out + qx.max(qy).min(0.0) - 12.0
        }
        2 => r - (40.0 + 14.0 * (5.0 * th).cos()),
        3 => {
            // ellipse, approximate distance
            let k = ((u / 56.0).powi(2) + (v / 34.0).powi(2)).sqrt();
            (k - 1.0) * 34.0
        }
        _ => r - (44.0 + 6.0 * (3.0 * th).sin() + 4.0 * (7.0 * th).cos()),
    }
}

/// Foreground RGBA with an antialiased silhouette and a striped fill.
fn foreground(seed: u64) -> ImageBuffer {
    let mut rng = ChaCha8Rng::seed_from_u64(0xF6 ^ seed);
    let rot = rng.random::<f64>() * TAU;
    let hue = rng.random::<f64>();
    let a = hsv(hue, 0.8, 0.95);
    let b = hsv(hue + 0.5, 0.7, 0.5);
    let period = rng.random_range(8.0..20.0);
    let stripe = rng.random::<f64>() * TAU;
    ImageBuffer::from_fn(FOREGROUND_SIZE, FOREGROUND_SIZE, 4, ColorSpace::Encoded, |x, y, c| {
        let (fx, fy) = (x as f64, y as f64);
        if c == 3 {
            return (0.5 - silhouette(seed, fx, fy, rot)).clamp(0.0, 1.0) as f32;
        }
        let s = ((fx * stripe.cos() + fy * stripe.sin()) * TAU / period).sin();
        let t = 0.5 + 0.5 * s;
        (a[c] * t + b[c] * (1.0 - t)) as f32
    })
    .expect("fixed size")
    .quantize8()
}

impl Assets {
    /// The built-in asset set, identical on every call.
    pub fn procedural() -> Self {
        Self {
            backgrounds: (0..ASSET_COUNT).map(background).collect(),
            foregrounds: (0..ASSET_COUNT).map(foreground).collect(),
        }
    }

    /// Every PNG in each directory, in file-name order.
    pub fn load(backgrounds: impl AsRef<Path>, foregrounds: impl AsRef<Path>) -> Result<Self> {
        let list = |dir: &Path| -> Result<Vec<ImageBuffer>> {
            let mut paths: Vec<_> = std::fs::read_dir(dir)
                .map_err(|e| Error::io(dir, e))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("png")))
                .collect();
            paths.sort();
            paths.iter().map(load_image).collect()
        };
        let backgrounds: Vec<ImageBuffer> = list(backgrounds.as_ref())?.iter().map(|i| i.to_rgb()).collect();
        let foregrounds = list(foregrounds.as_ref())?;
        for (k, f) in foregrounds.iter().enumerate() {
            if !f.has_alpha() || f.channels() != 4 {
                return Err(Error::InvalidScene(format!(
                    "foreground asset {k} has no alpha channel ({} channels)",
                    f.channels()
                )));
            }
        }
        Ok(Self {
            backgrounds,
            foregrounds,
        })
    }

    pub fn save(&self, backgrounds: impl AsRef<Path>, foregrounds: impl AsRef<Path>) -> Result<()> {
        for (k, b) in self.backgrounds.iter().enumerate() {
            save_image(b, backgrounds.as_ref().join(format!("bg_{k:02}.png")), BitDepth::Eight)?;
        }
        for (k, f) in self.foregrounds.iter().enumerate() {
            save_image(f, foregrounds.as_ref().join(format!("fg_{k:02}.png")), BitDepth::Eight)?;
        }
        Ok(())
    }
}

/// Bilinear-family resize through `image`; RGBA is resampled premultiplied.
pub fn resize(img: &ImageBuffer, width: usize, height: usize) -> ImageBuffer {
    use image::imageops::{resize as im_resize, FilterType};
    if img.dims() == (width, height) {
        return img.clone();
    }
    let (w, h) = (img.width() as u32, img.height() as u32);
    let ch = img.channels();
    let mut rgba: Vec<f32> = Vec::with_capacity(img.data().len() / ch * 4);
    for px in img.data().chunks_exact(ch) {
        let (rgb, a) = match ch {
            1 => ([px[0]; 3], 1.0),
            2 => ([px[0]; 3], px[1]),
            3 => ([px[0], px[1], px[2]], 1.0),
            _ => ([px[0], px[1], px[2]], px[3]),
        };
        rgba.extend_from_slice(&[rgb[0] * a, rgb[1] * a, rgb[2] * a, a]);
    }
    let src = image::Rgba32FImage::from_raw(w, h, rgba).expect("sized");
    let out = im_resize(&src, width as u32, height as u32, FilterType::Triangle);
    let px: Vec<[f32; 4]> = out.pixels().map(|p| p.0).collect();
    ImageBuffer::from_fn(width, height, ch, img.space(), |x, y, c| {
        let p = px[y * width + x];
        let a = p[3].clamp(0.0, 1.0);
        let straight = |v: f32| if a > 0.0 { (v / a).clamp(0.0, 1.0) } else { 0.0 };
        match (ch, c) {
            (1, _) | (2, 0) => straight(p[0]),
            (2, _) => a,
            (3, _) => straight(p[c]),
            (_, 3) => a,
            _ => straight(p[c]),
        }
    })
    .expect("sized")
}
