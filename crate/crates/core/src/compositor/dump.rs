//! Debug dump of a stack as per-plane PNG pairs plus `index.json`.
//!
//! Colors and alphas are written as 16-bit linear PNGs so a reload is
//! accurate to 1/65535.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::stack::{MpiPlane, MpiStack};
use crate::buffer::{ColorSpace, Mask};
use crate::error::{Error, Result};
use crate::io::{load_image, save_image, write_bytes, BitDepth};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DumpIndex {
    pub width: usize,
    pub height: usize,
    pub planes: Vec<DumpEntry>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DumpEntry {
    pub index: usize,
    pub disparity: f64,
    pub color: String,
    pub alpha: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub blend: Option<String>,
}

pub fn save_stack(mpi: &MpiStack, dir: impl AsRef<Path>) -> Result<DumpIndex> {
    let dir = dir.as_ref();
    let (width, height) = mpi.dims();
    let mut planes = Vec::with_capacity(mpi.len());
    for (k, p) in mpi.planes().iter().enumerate() {
        let i = k + 1;
        let color = format!("plane_{i:02}_color.png");
        let alpha = format!("plane_{i:02}_alpha.png");
        save_image(&p.color, dir.join(&color), BitDepth::Sixteen)?;
        save_image(
            &p.alpha.to_image(ColorSpace::Linear),
            dir.join(&alpha),
            BitDepth::Sixteen,
        )?;
        let blend = match &p.blend {
            Some(b) => {
                let name = format!("plane_{i:02}_blend.png");
                save_image(&b.to_image(ColorSpace::Linear), dir.join(&name), BitDepth::Eight)?;
                Some(name)
            }
            None => None,
        };
        planes.push(DumpEntry {
            index: i,
            disparity: p.disparity,
            color,
            alpha,
            blend,
        });
    }
    let index = DumpIndex { width, height, planes };
    let json = serde_json::to_vec_pretty(&index).expect("serializable index");
    write_bytes(&dir.join("index.json"), &json)?;
    Ok(index)
}

pub fn load_stack(dir: impl AsRef<Path>) -> Result<MpiStack> {
    let dir = dir.as_ref();
    let path = dir.join("index.json");
    let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
    let index: DumpIndex = serde_json::from_slice(&bytes).map_err(|source| Error::Json { path, source })?;
    let mut planes = Vec::with_capacity(index.planes.len());
    for e in &index.planes {
        let color = load_image(dir.join(&e.color))?.to_rgb().with_space(ColorSpace::Linear);
        let a = load_image(dir.join(&e.alpha))?;
        let alpha = Mask::new(a.width(), a.height(), a.channel(0))?;
        let blend = match &e.blend {
            Some(name) => {
                let b = load_image(dir.join(name))?;
                Some(Mask::new(b.width(), b.height(), b.channel(0))?)
            }
            None => None,
        };
        planes.push(MpiPlane {
            color,
            alpha,
            blend,
            disparity: e.disparity,
        });
    }
    MpiStack::new(planes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::buffer::ImageBuffer;
    use crate::compositor::stack::plane_disparity;

    #[test]
    fn dump_and_reload() {
        let dir = tempfile::tempdir().unwrap();
        let mut planes: Vec<MpiPlane> = (1..=3)
            .map(|i| MpiPlane::transparent(9, 7, plane_disparity(i, 3)))
            .collect();
        planes[1].color =
            ImageBuffer::from_fn(9, 7, 3, ColorSpace::Linear, |x, y, c| (x + y + c) as f32 / 20.0).unwrap();
        planes[1].alpha = Mask::from_fn(9, 7, |x, _| x as f32 / 8.0).unwrap();
        planes[1].blend = Some(Mask::from_predicate(9, 7, |x, _| x > 4));
        let mpi = MpiStack::new(planes).unwrap();
        let index = save_stack(&mpi, dir.path()).unwrap();
        assert_eq!(index.planes.len(), 3);
        assert!(dir.path().join("plane_02_alpha.png").exists());
        let back = load_stack(dir.path()).unwrap();
        for (a, b) in mpi.planes().iter().zip(back.planes()) {
            assert_eq!(a.disparity, b.disparity);
            for (x, y) in a.alpha.data().iter().zip(b.alpha.data()) {
                assert!((x - y).abs() <= 0.5 / 65535.0 + 1e-7);
            }
            assert_eq!(a.blend, b.blend);
        }
    }
}
