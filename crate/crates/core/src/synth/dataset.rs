use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::gamma::gamma_encode;
use crate::io::{save_disparity, save_image, write_bytes, BitDepth};
use crate::oracle::{save_scene, Tracer};
use crate::params::RenderParams;

use super::scene::{random_scene, DatasetConfig, RefocusMode};

pub const MANIFEST_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const TIMING_FILE: &str = "timing.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BokehEntry {
    pub path: String,
    pub blur_amount: f64,
    pub refocus_disparity: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneEntry {
    pub index: usize,
    pub seed: u64,
    pub image: String,
    pub disparity: String,
    pub scene: String,
    pub object_disparities: Vec<f64>,
    pub bokeh: Vec<BokehEntry>,
    /// SHA-256 of every file under the scene directory, keyed by path.
    pub checksums: BTreeMap<String, String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub config: DatasetConfig,
    pub scenes: Vec<SceneEntry>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Timing {
    pub total_seconds: f64,
    pub scene_seconds: Vec<f64>,
}

fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of scene `index` in a dataset seeded with `seed`.
pub fn scene_seed(seed: u64, index: usize) -> u64 {
    mix(mix(seed) ^ index as u64)
}

pub fn bokeh_file_name(blur_amount: f64, refocus_disparity: f64) -> String {
    format!("bokeh_A{blur_amount}_f{refocus_disparity:.4}.png")
}

/// Refocus disparity as written into file names, so names and values agree.
fn rounded(d: f64) -> f64 {
    (d * 1e4).round() / 1e4
}

fn files_under(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    for e in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let p = e.map_err(|e| Error::io(dir, e))?.path();
        if p.is_dir() {
            files_under(&p, out)?;
        } else {
            out.push(p);
        }
    }
    Ok(())
}

fn rel(p: &Path, root: &Path) -> String {
    p.strip_prefix(root)
        .unwrap_or(p)
        .components()
        .map(|c| c.as_os_str().to_string_lossy().into_owned())
        .collect::<Vec<_>>()
        .join("/")
}

fn generate_scene(cfg: &DatasetConfig, assets: &super::Assets, index: usize, outdir: &Path) -> Result<SceneEntry> {
    let seed = scene_seed(cfg.seed, index);
    let gen = random_scene(seed, assets, cfg)?;
    let name = format!("scene_{index:04}");
    let final_dir = outdir.join(&name);
    let tmp = outdir.join(format!(".{name}.partial"));
    if tmp.exists() {
        fs::remove_dir_all(&tmp).map_err(|e| Error::io(&tmp, e))?;
    }
    fs::create_dir_all(&tmp).map_err(|e| Error::io(&tmp, e))?;

    let tracer = Tracer::new(&gen.scene, cfg.gamma)?;
    let (lin, disp) = tracer.composite();
    save_image(&gamma_encode(&lin, cfg.gamma)?, tmp.join("image.png"), BitDepth::Eight)?;
    save_disparity(&disp, tmp.join("disparity.png"))?;
    save_scene(&gen.scene, tmp.join("scene.json"))?;

    let refocus: Vec<f64> = match &cfg.refocus {
        RefocusMode::ObjectDisparities => gen.object_disparities.clone(),
        RefocusMode::Explicit(v) => v.clone(),
    };
    let mut bokeh = Vec::new();
    for &a in &cfg.blur_params {
        for &f in &refocus {
            let f = rounded(f);
            let params = RenderParams::new(a, f, cfg.gamma, 2)?;
            let img = gamma_encode(&tracer.render_linear(&params, cfg.rays, seed)?, cfg.gamma)?;
            let file = bokeh_file_name(a, f);
            save_image(&img, tmp.join(&file), BitDepth::Eight)?;
            bokeh.push(BokehEntry {
                path: format!("{name}/{file}"),
                blur_amount: a,
                refocus_disparity: f,
            });
        }
    }

    let mut files = Vec::new();
    files_under(&tmp, &mut files)?;
    let mut checksums = BTreeMap::new();
    for f in files {
        let bytes = fs::read(&f).map_err(|e| Error::io(&f, e))?;
        checksums.insert(format!("{name}/{}", rel(&f, &tmp)), hex::encode(Sha256::digest(&bytes)));
    }
    if final_dir.exists() {
        fs::remove_dir_all(&final_dir).map_err(|e| Error::io(&final_dir, e))?;
    }
    fs::rename(&tmp, &final_dir).map_err(|e| Error::io(&final_dir, e))?;
    Ok(SceneEntry {
        index,
        seed,
        image: format!("{name}/image.png"),
        disparity: format!("{name}/disparity.png"),
        scene: format!("{name}/scene.json"),
        object_disparities: gen.object_disparities,
        bokeh,
        checksums,
    })
}

/// Generates every scene under `outdir` and writes the manifest plus a
/// separate timing file (kept out of the manifest so it stays reproducible).
pub fn generate_dataset(cfg: &DatasetConfig, outdir: impl AsRef<Path>) -> Result<Manifest> {
    cfg.validate()?;
    let outdir = outdir.as_ref();
    fs::create_dir_all(outdir).map_err(|e| Error::io(outdir, e))?;
    let assets = cfg.assets()?;
    let start = Instant::now();
    let results: Vec<(SceneEntry, f64)> = (0..cfg.n_scenes)
        .into_par_iter()
        .map(|i| {
            let t = Instant::now();
            let e = generate_scene(cfg, &assets, i, outdir)?;
            log::info!("scene {i} done in {:.2}s", t.elapsed().as_secs_f64());
            Ok((e, t.elapsed().as_secs_f64()))
        })
        .collect::<Result<_>>()?;
    let (scenes, scene_seconds): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    let manifest = Manifest {
        version: MANIFEST_VERSION,
        config: cfg.clone(),
        scenes,
    };
    write_manifest(&manifest, outdir.join(MANIFEST_FILE))?;
    let timing = Timing {
        total_seconds: start.elapsed().as_secs_f64(),
        scene_seconds,
    };
    write_bytes(
        &outdir.join(TIMING_FILE),
        &serde_json::to_vec_pretty(&timing).expect("serializable"),
    )?;
    Ok(manifest)
}

pub fn write_manifest(m: &Manifest, path: impl AsRef<Path>) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(m).expect("serializable");
    bytes.push(b'\n');
    write_bytes(path.as_ref(), &bytes)
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<Manifest> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_slice(&bytes).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })
}
