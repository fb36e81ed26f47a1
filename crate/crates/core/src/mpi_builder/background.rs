use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::buffer::{ensure_same_dims, DisparityMap, ImageBuffer, Mask};
use crate::error::{Error, Result};
use crate::io::{load_disparity, load_image, load_mask, save_disparity, save_image, save_mask, write_bytes, BitDepth};

use super::inpaint::{background_sources, inpaint_disparity, inpaint_with_sources};

/// One background hypothesis: the image and disparity hidden behind `mask`.
#[derive(Clone, Debug, PartialEq)]
pub struct BackgroundEntry {
    /// Gamma-encoded, aligned with the base image.
    pub image: ImageBuffer,
    pub disparity: DisparityMap,
    pub mask: Mask,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct BackgroundSet {
    pub entries: Vec<BackgroundEntry>,
}

impl BackgroundSet {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Union of every entry's mask.
    pub fn mask_union(&self, dims: (usize, usize)) -> Mask {
        let mut m = Mask::empty(dims.0, dims.1);
        for e in &self.entries {
            m = m.union(&e.mask).expect("validated dims");
        }
        m
    }

    /// Checks alignment with the base map and that the background lies no
    /// closer than the visible surface (to within one plane spacing).
    pub fn validate(&self, base: &DisparityMap, plane_count: usize) -> Result<()> {
        let tol = 1.0 / plane_count as f64;
        for (k, e) in self.entries.iter().enumerate() {
            for dims in [e.image.dims(), e.disparity.dims(), e.mask.dims()] {
                ensure_same_dims(base.dims(), dims)?;
            }
            for i in 0..base.data().len() {
                if !e.mask.is_set_at(i) {
                    continue;
                }
                let (db, d) = (e.disparity.data()[i] as f64, base.data()[i] as f64);
                if db > d + tol {
                    let w = base.width();
                    return Err(Error::InvalidBackground(format!(
                        "entry {k}: background disparity {db:.4} exceeds visible {d:.4} at ({}, {})",
                        i % w,
                        i / w
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Splits `mask` into `levels` bands by the visible (occluder) disparity.
pub fn split_by_occluder(d: &DisparityMap, mask: &Mask, levels: usize) -> Vec<Mask> {
    let levels = levels.max(1);
    let (w, h) = d.dims();
    if levels == 1 || mask.is_empty() {
        return vec![mask.binarize()];
    }
    let (mut lo, mut hi) = (f32::INFINITY, f32::NEG_INFINITY);
    for (v, m) in d.data().iter().zip(mask.data()) {
        if *m > 0.5 {
            lo = lo.min(*v);
            hi = hi.max(*v);
        }
    }
    let span = (hi - lo).max(1e-6);
    (0..levels)
        .map(|k| {
            Mask::from_predicate(w, h, |x, y| {
                if !mask.is_set(x, y) {
                    return false;
                }
                let t = ((d.get(x, y) - lo) / span * levels as f32) as usize;
                t.min(levels - 1) == k
            })
        })
        .filter(|m| !m.is_empty())
        .collect()
}

/// Builds background entries with the built-in inpainter: colors and
/// disparity diffuse in from the far side of each masked region, and the
/// filled disparity never exceeds the visible one.
pub fn build_background(
    image: &ImageBuffer,
    d: &DisparityMap,
    mask: &Mask,
    tau: f64,
    iters: usize,
    levels: usize,
) -> Result<BackgroundSet> {
    build_background_with(image, d, mask, tau, iters, levels, None)
}

/// As [`build_background`]; when `external` is given it replaces the
/// inpainted color (disparity is still filled internally).
pub fn build_background_with(
    image: &ImageBuffer,
    d: &DisparityMap,
    mask: &Mask,
    tau: f64,
    iters: usize,
    levels: usize,
    external: Option<&ImageBuffer>,
) -> Result<BackgroundSet> {
    ensure_same_dims(image.dims(), d.dims())?;
    ensure_same_dims(image.dims(), mask.dims())?;
    if let Some(e) = external {
        ensure_same_dims(image.dims(), e.dims())?;
    }
    if mask.is_empty() {
        return Ok(BackgroundSet::empty());
    }
    let mut entries = Vec::new();
    for part in split_by_occluder(d, mask, levels) {
        let sources = background_sources(d, &part, tau);
        let filled = inpaint_disparity(d, &part, Some(&sources), iters)?;
        let db = DisparityMap::new(
            d.width(),
            d.height(),
            filled.data().iter().zip(d.data()).map(|(a, b)| a.min(*b)).collect(),
        )?;
        let img = match external {
            Some(e) => e.clone(),
            None => inpaint_with_sources(image, &part, Some(&sources), iters)?,
        };
        entries.push(BackgroundEntry {
            image: img,
            disparity: db,
            mask: part,
        });
    }
    Ok(BackgroundSet { entries })
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EntryFile {
    image: String,
    disparity: String,
    mask: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SetFile {
    backgrounds: Vec<EntryFile>,
}

/// Writes `path` (JSON) and the entry PNGs beside it.
pub fn save_background_set(set: &BackgroundSet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let dir = path.parent().unwrap_or(Path::new(""));
    let mut files = Vec::new();
    for (k, e) in set.entries.iter().enumerate() {
        let f = EntryFile {
            image: format!("background_{k}.png"),
            disparity: format!("background_{k}_disparity.png"),
            mask: format!("background_{k}_mask.png"),
        };
        save_image(&e.image, dir.join(&f.image), BitDepth::Eight)?;
        save_disparity(&e.disparity, dir.join(&f.disparity))?;
        save_mask(&e.mask, dir.join(&f.mask))?;
        files.push(f);
    }
    let json = serde_json::to_vec_pretty(&SetFile { backgrounds: files }).expect("serializable");
    write_bytes(path, &json)
}

pub fn load_background_set(path: impl AsRef<Path>) -> Result<BackgroundSet> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let file: SetFile = serde_json::from_slice(&bytes).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })?;
    let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let resolve = |p: &str| {
        let p = PathBuf::from(p);
        if p.is_absolute() {
            p
        } else {
            dir.join(p)
        }
    };
    let mut entries = Vec::new();
    for f in &file.backgrounds {
        entries.push(BackgroundEntry {
            image: load_image(resolve(&f.image))?,
            disparity: load_disparity(resolve(&f.disparity))?,
            mask: load_mask(resolve(&f.mask))?.binarize(),
        });
    }
    Ok(BackgroundSet { entries })
}
