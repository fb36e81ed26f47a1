use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};

use refocus_core::compositor::dump::save_stack;
use refocus_core::io::{encode_png, load_disparity, load_image, load_pair, save_image, save_mask, BitDepth};
use refocus_core::metrics::{evaluate, EvalOptions, MIN_BAND_RADIUS};
use refocus_core::mpi_builder::{save_background_set, ZoneMode};
use refocus_core::occlusion::occlusion_stages;
use refocus_core::oracle::{load_scene, trace_bokeh};
use refocus_core::pipeline::snap_to_plane;
use refocus_core::synth::{generate_dataset, AssetDirs, DatasetConfig, DisparityMode, RefocusMode};
use refocus_core::{
    build_representation, focus_disparity, OcclusionConfig, PipelineConfig, RenderParams, DEFAULT_GAMMA,
    DEFAULT_PLANE_COUNT,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ZoneArg {
    Soft,
    Hard,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeArg {
    Constant,
    Planar,
}

/// Occlusion-mask flags.
#[derive(Args, Clone, Debug, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct OcclusionArgs {
    /// Gradient threshold for depth edges.
    #[arg(long)]
    pub grad_threshold: Option<f64>,
    /// Drop edge fragments smaller than this many pixels.
    #[arg(long)]
    pub min_segment: Option<usize>,
    /// Mask extension iterations (default: from the blur amount).
    #[arg(long)]
    pub extend_iters: Option<usize>,
    /// Final mask dilation radius in pixels.
    #[arg(long)]
    pub dilate_px: Option<f64>,
}

impl OcclusionArgs {
    pub fn config(&self) -> OcclusionConfig {
        let d = OcclusionConfig::default();
        OcclusionConfig {
            grad_threshold: self.grad_threshold.unwrap_or(d.grad_threshold),
            min_segment: self.min_segment.unwrap_or(d.min_segment),
            extend_iters: self.extend_iters.or(d.extend_iters),
            dilate_px: self.dilate_px.unwrap_or(d.dilate_px),
        }
    }
}

/// Flags shared by every command that builds an MPI.
#[derive(Args, Clone, Debug, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct BuildArgs {
    /// Number of MPI planes.
    #[arg(long)]
    pub planes: Option<usize>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long, value_enum)]
    pub zone_mode: Option<ZoneArg>,
    /// Dilation of the background-blend maps in pixels.
    #[arg(long)]
    pub blend_dilate_px: Option<f64>,
    #[arg(long)]
    pub inpaint_iters: Option<usize>,
    /// Background hypotheses (occluder disparity levels).
    #[arg(long)]
    pub background_count: Option<usize>,
    /// Pre-inpainted background image used instead of the built-in fill.
    #[arg(long)]
    pub background: Option<PathBuf>,
    /// Skip weight normalization.
    #[arg(long)]
    pub no_normalize: bool,
    /// Visible surface only: no occlusion mask, no background.
    #[arg(long)]
    pub visible_only: bool,
    #[command(flatten)]
    #[serde(flatten)]
    pub occlusion: OcclusionArgs,
}

impl BuildArgs {
    pub fn pipeline(&self) -> PipelineConfig {
        let d = PipelineConfig::default();
        PipelineConfig {
            plane_count: self.planes.unwrap_or(DEFAULT_PLANE_COUNT),
            gamma: self.gamma.unwrap_or(DEFAULT_GAMMA),
            occlusion: self.occlusion.config(),
            zone_mode: match self.zone_mode {
                Some(ZoneArg::Hard) => ZoneMode::Hard,
                _ => ZoneMode::Soft,
            },
            blend_dilate_px: self.blend_dilate_px.unwrap_or(d.blend_dilate_px),
            inpaint_iters: self.inpaint_iters.unwrap_or(d.inpaint_iters),
            background_count: self.background_count.unwrap_or(d.background_count),
            normalize: !self.no_normalize,
            use_background: !self.visible_only,
        }
    }
}

fn parse_xy(s: &str) -> Result<(f64, f64), String> {
    let (x, y) = s.split_once(',').ok_or("expected X,Y")?;
    Ok((
        x.trim().parse().map_err(|e| format!("x: {e}"))?,
        y.trim().parse().map_err(|e| format!("y: {e}"))?,
    ))
}

#[derive(Args, Clone, Debug, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct RenderArgs {
    /// All-in-focus image (PNG).
    #[arg(long)]
    pub image: Option<PathBuf>,
    /// Disparity map (PNG, larger is nearer).
    #[arg(long)]
    pub disparity: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Blur amount A: blur radius in pixels per unit disparity.
    #[arg(long)]
    pub blur: Option<f64>,
    /// Disparity in focus.
    #[arg(long, conflicts_with = "focus")]
    pub focus_disparity: Option<f64>,
    /// Pixel whose disparity is brought into focus, as X,Y.
    #[arg(long, value_parser = parse_xy)]
    pub focus: Option<(f64, f64)>,
    /// Snap the focus disparity to the nearest plane center.
    #[arg(long)]
    pub focus_snap: bool,
    /// Also write the occlusion mask here.
    #[arg(long)]
    pub save_mask: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    pub build: BuildArgs,
}

fn need<T: Clone>(v: &Option<T>, flag: &str) -> Result<T> {
    v.clone().with_context(|| format!("missing --{flag}"))
}

pub fn render(a: &RenderArgs) -> Result<()> {
    let (image_path, disp_path, out) = (
        need(&a.image, "image")?,
        need(&a.disparity, "disparity")?,
        need(&a.out, "out")?,
    );
    let blur = need(&a.blur, "blur")?;
    let (img, d) = load_pair(&image_path, &disp_path).context("loading inputs")?;
    let cfg = a.build.pipeline();
    let snap = a.focus_snap.then_some(cfg.plane_count);
    let d_f = match (a.focus_disparity, a.focus) {
        (Some(f), None) if a.focus_snap => snap_to_plane(f, cfg.plane_count),
        (Some(f), None) => f,
        (None, Some((x, y))) => focus_disparity(&d, x, y, snap).context("focus point")?,
        (None, None) => bail!("one of --focus-disparity or --focus is required"),
        (Some(_), Some(_)) => bail!("--focus-disparity and --focus are exclusive"),
    };
    let external = match &a.build.background {
        Some(p) => Some(load_image(p).with_context(|| format!("loading background {}", p.display()))?),
        None => None,
    };
    let rep = build_representation(&img, &d, &cfg, Some(blur), external.as_ref()).context("building the MPI")?;
    let (out_img, stats) = rep.render(blur, d_f, None).context("rendering")?;
    log::info!("d_f = {d_f:.4}; {}", serde_json::to_string(&stats)?);
    save_image(&out_img, &out, BitDepth::Eight).with_context(|| format!("writing {}", out.display()))?;
    if let Some(m) = &a.save_mask {
        save_mask(&rep.mask, m).with_context(|| format!("writing {}", m.display()))?;
    }
    Ok(())
}

#[derive(Args, Clone, Debug, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct OracleArgs {
    /// Scene description (JSON).
    #[arg(long)]
    pub scene: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub blur: Option<f64>,
    #[arg(long)]
    pub focus_disparity: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Rays per pixel.
    #[arg(long)]
    pub rays: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

pub const DEFAULT_RAYS: usize = 2500;

pub fn oracle(a: &OracleArgs) -> Result<()> {
    let scene_path = need(&a.scene, "scene")?;
    let out = need(&a.out, "out")?;
    let scene = load_scene(&scene_path).with_context(|| format!("loading scene {}", scene_path.display()))?;
    let params = RenderParams::new(
        need(&a.blur, "blur")?,
        need(&a.focus_disparity, "focus-disparity")?,
        a.gamma.unwrap_or(DEFAULT_GAMMA),
        DEFAULT_PLANE_COUNT,
    )?;
    let img = trace_bokeh(&scene, &params, a.rays.unwrap_or(DEFAULT_RAYS), a.seed.unwrap_or(0)).context("tracing")?;
    save_image(&img, &out, BitDepth::Eight).with_context(|| format!("writing {}", out.display()))
}

#[derive(Args, Clone, Debug, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct SynthArgs {
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub scenes: Option<usize>,
    #[arg(long)]
    pub width: Option<usize>,
    #[arg(long)]
    pub height: Option<usize>,
    /// Foreground objects per scene.
    #[arg(long)]
    pub foregrounds: Option<usize>,
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    /// Comma-separated blur amounts.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    pub blur_params: Option<Vec<f64>>,
    /// Comma-separated refocus disparities (default: one per object).
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    pub refocus: Option<Vec<f64>>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub rays: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Directory of background PNGs (default: built-in assets).
    #[arg(long, requires = "foreground_dir")]
    pub background_dir: Option<PathBuf>,
    /// Directory of RGBA foreground PNGs.
    #[arg(long, requires = "background_dir")]
    pub foreground_dir: Option<PathBuf>,
}

impl SynthArgs {
    pub fn dataset(&self) -> DatasetConfig {
        let d = DatasetConfig::default();
        DatasetConfig {
            n_scenes: self.scenes.unwrap_or(d.n_scenes),
            width: self.width.unwrap_or(d.width),
            height: self.height.unwrap_or(d.height),
            n_foregrounds: self.foregrounds.unwrap_or(d.n_foregrounds),
            disparity_mode: match self.mode {
                Some(ModeArg::Planar) => DisparityMode::Planar,
                _ => DisparityMode::Constant,
            },
            blur_params: self.blur_params.clone().unwrap_or(d.blur_params),
            refocus: self
                .refocus
                .clone()
                .map_or(RefocusMode::ObjectDisparities, RefocusMode::Explicit),
            gamma: self.gamma.unwrap_or(d.gamma),
            rays: self.rays.unwrap_or(d.rays),
            seed: self.seed.unwrap_or(d.seed),
            asset_dirs: match (&self.background_dir, &self.foreground_dir) {
                (Some(b), Some(f)) => Some(AssetDirs {
                    backgrounds: b.clone(),
                    foregrounds: f.clone(),
                }),
                _ => None,
            },
        }
    }
}

pub fn synth(a: &SynthArgs) -> Result<()> {
    let out = need(&a.out, "out")?;
    let m = generate_dataset(&a.dataset(), &out)?;
    println!("{} scenes written to {}", m.scenes.len(), out.display());
    Ok(())
}

#[derive(Args, Clone, Debug, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct EvalArgs {
    /// Directory of predictions named like the ground truth.
    #[arg(long)]
    pub pred: Option<PathBuf>,
    /// Ground-truth manifest.
    #[arg(long)]
    pub gt: Option<PathBuf>,
    /// Report JSON path.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Minimum boundary-band radius in pixels.
    #[arg(long)]
    pub band_dilate: Option<f64>,
    /// Method label in the report.
    #[arg(long)]
    pub method: Option<String>,
    #[command(flatten)]
    #[serde(flatten)]
    pub occlusion: OcclusionArgs,
}

pub fn eval(a: &EvalArgs) -> Result<()> {
    let (pred, gt) = (need(&a.pred, "pred")?, need(&a.gt, "gt")?);
    let opts = EvalOptions {
        method: a.method.clone().unwrap_or_else(|| "prediction".into()),
        band: a.occlusion.config(),
        min_band_radius: a.band_dilate.unwrap_or(MIN_BAND_RADIUS),
    };
    let report = evaluate(&pred, &gt, &opts)?;
    print!("{}", report.to_table());
    if let Some(out) = &a.out {
        std::fs::write(out, serde_json::to_vec_pretty(&report)?)
            .with_context(|| format!("writing {}", out.display()))?;
    }
    Ok(())
}

#[derive(Args, Clone, Debug, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct MaskArgs {
    #[arg(long)]
    pub disparity: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Blur amount used to size the extension.
    #[arg(long)]
    pub blur: Option<f64>,
    /// Also write every intermediate mask into this directory.
    #[arg(long)]
    pub stages: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    pub occlusion: OcclusionArgs,
}

pub fn mask(a: &MaskArgs) -> Result<()> {
    let dp = need(&a.disparity, "disparity")?;
    let out = need(&a.out, "out")?;
    let d = load_disparity(&dp).with_context(|| format!("loading {}", dp.display()))?;
    let st = occlusion_stages(&d, &a.occlusion.config(), a.blur)?;
    save_mask(&st.dilated, &out).with_context(|| format!("writing {}", out.display()))?;
    if let Some(dir) = &a.stages {
        for (name, m) in [
            ("initial", &st.initial),
            ("cleaned", &st.cleaned),
            ("extended", &st.extended),
            ("dilated", &st.dilated),
        ] {
            save_mask(m, dir.join(format!("{name}.png")))?;
        }
    }
    println!(
        "mask coverage {:.4} after {} extension iterations",
        st.dilated.coverage(),
        st.iterations
    );
    Ok(())
}

#[derive(Args, Clone, Debug, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct DumpArgs {
    #[arg(long)]
    pub image: Option<PathBuf>,
    #[arg(long)]
    pub disparity: Option<PathBuf>,
    /// Output directory for planes, background, and mask.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Blur amount used to size the occlusion mask.
    #[arg(long)]
    pub blur: Option<f64>,
    #[command(flatten)]
    #[serde(flatten)]
    pub build: BuildArgs,
}

pub fn mpi_dump(a: &DumpArgs) -> Result<()> {
    let (ip, dp, out) = (
        need(&a.image, "image")?,
        need(&a.disparity, "disparity")?,
        need(&a.out, "out")?,
    );
    let (img, d) = load_pair(&ip, &dp).context("loading inputs")?;
    let external = match &a.build.background {
        Some(p) => Some(load_image(p)?),
        None => None,
    };
    let rep = build_representation(&img, &d, &a.build.pipeline(), a.blur, external.as_ref())?;
    let index = save_stack(&rep.stack, &out)?;
    save_mask(&rep.mask, out.join("occlusion_mask.png"))?;
    save_background_set(&rep.background, out.join("background.json"))?;
    println!("{} planes written to {}", index.planes.len(), out.display());
    Ok(())
}

/// PNG bytes of an encoded image.
pub fn png_bytes(img: &refocus_core::ImageBuffer) -> Vec<u8> {
    encode_png(img, BitDepth::Eight)
}
