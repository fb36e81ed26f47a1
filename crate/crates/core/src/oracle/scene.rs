//! Layered scenes of RGBA images on planar disparity surfaces.
//!
//! A layer's disparity at canvas pixel `(x, y)` is `(1 − a·x − b·y)/c`.
//! Scene files are JSON; plane coefficients are written as decimal strings
//! so they survive a round trip bit-for-bit.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::buffer::{ColorSpace, ImageBuffer};
use crate::error::{Error, Result};
use crate::io::{load_image, save_image, write_bytes, BitDepth};

/// Coefficients `(a, b, c)` of `d(x, y) = (1 − a·x − b·y)/c`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PlaneCoeffs {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl PlaneCoeffs {
    /// Fronto-parallel plane at constant disparity `d > 0`.
    pub fn constant(d: f64) -> Self {
        Self {
            a: 0.0,
            b: 0.0,
            c: 1.0 / d,
        }
    }

    #[inline]
    pub fn disparity_at(&self, x: f64, y: f64) -> f64 {
        (1.0 - self.a * x - self.b * y) / self.c
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlanarLayer {
    /// Straight-alpha RGBA, gamma-encoded.
    pub rgba: ImageBuffer,
    pub coeffs: PlaneCoeffs,
    /// Canvas position of the layer's top-left texel.
    pub offset: (i64, i64),
    pub full_frame: bool,
}

impl PlanarLayer {
    pub fn width(&self) -> usize {
        self.rgba.width()
    }

    pub fn height(&self) -> usize {
        self.rgba.height()
    }

    /// Disparity at layer texel `(u, v)`.
    pub fn disparity_at_texel(&self, u: usize, v: usize) -> f64 {
        self.coeffs
            .disparity_at((u as i64 + self.offset.0) as f64, (v as i64 + self.offset.1) as f64)
    }

    /// Layer texel covering canvas pixel `(x, y)`, if any.
    pub fn texel_at(&self, x: usize, y: usize) -> Option<(usize, usize)> {
        let u = x as i64 - self.offset.0;
        let v = y as i64 - self.offset.1;
        (u >= 0 && v >= 0 && (u as usize) < self.width() && (v as usize) < self.height())
            .then_some((u as usize, v as usize))
    }
}

/// Layers ordered back to front on a fixed canvas.
#[derive(Clone, Debug, PartialEq)]
pub struct SceneSpec {
    pub width: usize,
    pub height: usize,
    pub layers: Vec<PlanarLayer>,
}

const DISPARITY_TOL: f64 = 1e-9;

impl SceneSpec {
    pub fn new(width: usize, height: usize, layers: Vec<PlanarLayer>) -> Result<Self> {
        let s = Self { width, height, layers };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidScene(m));
        if self.width == 0 || self.height == 0 {
            return bad("canvas is empty".into());
        }
        let Some(back) = self.layers.first() else {
            return bad("scene has no layers".into());
        };
        if !back.full_frame || back.offset != (0, 0) || back.rgba.dims() != (self.width, self.height) {
            return bad("layers[0] must be a full-frame layer covering the canvas".into());
        }
        if back.rgba.alpha().data().iter().any(|a| *a < 1.0) {
            return bad("layers[0] must be opaque".into());
        }
        for (k, l) in self.layers.iter().enumerate() {
            if l.rgba.channels() != 4 {
                return bad(format!("layers[{k}] must be RGBA, has {} channels", l.rgba.channels()));
            }
            let PlaneCoeffs { a, b, c } = l.coeffs;
            if !(a.is_finite() && b.is_finite() && c.is_finite()) {
                return bad(format!("layers[{k}]: non-finite plane coefficient"));
            }
            if c <= 0.0 {
                return bad(format!("layers[{k}].c must be > 0, got {c}"));
            }
            if l.full_frame && (l.offset != (0, 0) || l.rgba.dims() != (self.width, self.height)) {
                return bad(format!(
                    "layers[{k}] is marked full_frame but does not cover the canvas"
                ));
            }
            for v in 0..l.height() {
                for u in 0..l.width() {
                    let d = l.disparity_at_texel(u, v);
                    if !(-DISPARITY_TOL..=1.0 + DISPARITY_TOL).contains(&d) {
                        return bad(format!(
                            "layers[{k}] disparity {d} at texel ({u}, {v}) is outside [0, 1]"
                        ));
                    }
                }
            }
        }
        // A front layer must not sit behind a back layer where both exist.
        for (j, front) in self.layers.iter().enumerate().skip(1) {
            for (k, back) in self.layers.iter().enumerate().take(j) {
                for v in 0..front.height() {
                    let y = v as i64 + front.offset.1;
                    for u in 0..front.width() {
                        let x = u as i64 + front.offset.0;
                        if x < 0 || y < 0 || back.texel_at(x as usize, y as usize).is_none() {
                            continue;
                        }
                        let (df, db) = (
                            front.coeffs.disparity_at(x as f64, y as f64),
                            back.coeffs.disparity_at(x as f64, y as f64),
                        );
                        if df < db - DISPARITY_TOL {
                            return bad(format!(
                                "layers[{j}] lies behind layers[{k}] at ({x}, {y}): {df} < {db}"
                            ));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }
}

/// Plane coefficient in a scene file: a decimal string, or a bare number.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
enum Coeff {
    Text(String),
    Number(f64),
}

impl Coeff {
    fn value(&self, field: &str) -> Result<f64> {
        match self {
            Coeff::Number(v) => Ok(*v),
            Coeff::Text(s) => s
                .trim()
                .parse::<f64>()
                .map_err(|e| Error::InvalidScene(format!("{field}: `{s}` is not a number ({e})"))),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CanvasFile {
    width: usize,
    height: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LayerFile {
    path: String,
    a: Coeff,
    b: Coeff,
    c: Coeff,
    #[serde(default)]
    offset: [i64; 2],
    #[serde(default)]
    full_frame: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SceneFile {
    canvas: CanvasFile,
    layers: Vec<LayerFile>,
}

/// Writes `scene.json` at `path` plus one RGBA PNG per layer under
/// `layers/` next to it. Layer samples should already sit on the 8-bit grid
/// for a lossless reload.
pub fn save_scene(scene: &SceneSpec, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let dir = path.parent().unwrap_or(Path::new(""));
    let mut layers = Vec::with_capacity(scene.layers.len());
    for (k, l) in scene.layers.iter().enumerate() {
        let rel = format!("layers/layer_{k}.png");
        save_image(&l.rgba, dir.join(&rel), BitDepth::Eight)?;
        layers.push(LayerFile {
            path: rel,
            a: Coeff::Text(format!("{:?}", l.coeffs.a)),
            b: Coeff::Text(format!("{:?}", l.coeffs.b)),
            c: Coeff::Text(format!("{:?}", l.coeffs.c)),
            offset: [l.offset.0, l.offset.1],
            full_frame: l.full_frame,
        });
    }
    let file = SceneFile {
        canvas: CanvasFile {
            width: scene.width,
            height: scene.height,
        },
        layers,
    };
    let json = serde_json::to_vec_pretty(&file).expect("serializable scene");
    write_bytes(path, &json)
}

/// Reads a scene file; layer paths resolve relative to the file.
pub fn load_scene(path: impl AsRef<Path>) -> Result<SceneSpec> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let file: SceneFile = serde_json::from_slice(&bytes).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })?;
    let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let mut layers = Vec::with_capacity(file.layers.len());
    for (k, l) in file.layers.iter().enumerate() {
        let p = PathBuf::from(&l.path);
        let p = if p.is_absolute() { p } else { dir.join(p) };
        let img = load_image(&p)?;
        let rgba = if img.channels() == 4 {
            img
        } else {
            let rgb = img.to_rgb();
            ImageBuffer::from_rgb_alpha(&rgb, &img.alpha())?.with_space(ColorSpace::Encoded)
        };
        layers.push(PlanarLayer {
            rgba,
            coeffs: PlaneCoeffs {
                a: l.a.value(&format!("layers[{k}].a"))?,
                b: l.b.value(&format!("layers[{k}].b"))?,
                c: l.c.value(&format!("layers[{k}].c"))?,
            },
            offset: (l.offset[0], l.offset[1]),
            full_frame: l.full_frame,
        });
    }
    SceneSpec::new(file.canvas.width, file.canvas.height, layers)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) fn solid_rgba(w: usize, h: usize, rgb: [f32; 3], alpha: f32) -> ImageBuffer {
        ImageBuffer::from_fn(
            w,
            h,
            4,
            ColorSpace::Encoded,
            |_, _, c| {
                if c == 3 {
                    alpha
                } else {
                    rgb[c]
                }
            },
        )
        .unwrap()
        .quantize8()
    }

    pub(crate) fn two_layer(w: usize, h: usize, d_bg: f64, d_fg: f64) -> SceneSpec {
        let bg = PlanarLayer {
            rgba: ImageBuffer::from_fn(w, h, 4, ColorSpace::Encoded, |x, y, c| {
                if c == 3 {
                    1.0
                } else {
                    (((x / 4 + y / 4) % 2) as f32) * 0.8 + 0.1
                }
            })
            .unwrap()
            .quantize8(),
            coeffs: PlaneCoeffs::constant(d_bg),
            offset: (0, 0),
            full_frame: true,
        };
        let fg = PlanarLayer {
            rgba: solid_rgba(w / 2, h / 2, [0.9, 0.2, 0.1], 1.0),
            coeffs: PlaneCoeffs::constant(d_fg),
            offset: ((w / 4) as i64, (h / 4) as i64),
            full_frame: false,
        };
        SceneSpec::new(w, h, vec![bg, fg]).unwrap()
    }

    #[test]
    fn validation_errors() {
        let ok = two_layer(16, 16, 0.2, 0.8);
        assert!(ok.validate().is_ok());

        let mut behind = ok.clone();
        behind.layers[1].coeffs = PlaneCoeffs::constant(0.1);
        assert!(matches!(behind.validate(), Err(Error::InvalidScene(m)) if m.contains("behind")));

        let mut translucent = ok.clone();
        translucent.layers[0].rgba = solid_rgba(16, 16, [0.5; 3], 0.5);
        assert!(translucent.validate().is_err());

        let mut neg = ok.clone();
        neg.layers[1].coeffs.c = -1.0;
        assert!(matches!(neg.validate(), Err(Error::InvalidScene(m)) if m.contains("layers[1].c")));

        let mut out = ok;
        out.layers[1].coeffs = PlaneCoeffs {
            a: -0.2,
            b: 0.0,
            c: 1.0,
        };
        assert!(out.validate().is_err());
    }

    #[test]
    fn json_roundtrip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let mut scene = two_layer(20, 12, 0.1, 0.7);
        scene.layers[1].coeffs = PlaneCoeffs {
            a: 1.0 / 3000.0,
            b: -std::f64::consts::PI / 1e4,
            c: 1.0 / 0.7 + 1e-13,
        };
        let p = dir.path().join("scene.json");
        save_scene(&scene, &p).unwrap();
        let back = load_scene(&p).unwrap();
        assert_eq!(back, scene);
    }

    #[test]
    fn json_errors_name_the_field() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.json");
        std::fs::write(
            &p,
            r#"{"canvas":{"width":4,"height":4},"layers":[{"path":"x.png","a":"0","b":"0"}]}"#,
        )
        .unwrap();
        let err = load_scene(&p).unwrap_err().to_string();
        assert!(err.contains("`c`"), "{err}");

        std::fs::write(&p, r#"{"canvas":{"width":4},"layers":[]}"#).unwrap();
        let err = load_scene(&p).unwrap_err().to_string();
        assert!(err.contains("height"), "{err}");
    }

    #[test]
    fn bad_coefficient_text() {
        let c = Coeff::Text("1.5e".into());
        assert!(c.value("layers[0].a").unwrap_err().to_string().contains("layers[0].a"));
    }
}
