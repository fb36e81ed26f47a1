//! Bokeh rendering from a single image and disparity map through a
//! multiplane image, with a ray-traced reference renderer, synthetic data
//! generation, and evaluation metrics.

pub mod buffer;
pub mod compositor;
pub mod error;
pub mod filter;
pub mod gamma;
pub mod io;
pub mod metrics;
pub mod mpi_builder;
pub mod occlusion;
pub mod oracle;
pub mod params;
pub mod pipeline;
pub mod synth;

pub use buffer::{ColorSpace, DisparityMap, GradientField, ImageBuffer, Mask};
pub use compositor::{
    compose_sharp, coverage, reconstruct_disparity, render_mpi, render_mpi_linear, render_mpi_with_stats, MpiPlane,
    MpiStack, RenderStats,
};
pub use error::{Error, Result};
pub use gamma::{gamma_decode, gamma_encode};
pub use metrics::{boundary_band, evaluate, psnr, ssim, EvalReport};
pub use mpi_builder::{
    build_mpi_heuristic, build_mpi_ideal, build_mpi_visible, BackgroundSet, HeuristicConfig, ZoneMode,
};
pub use occlusion::{occlusion_mask, occlusion_stages, OcclusionConfig, OcclusionStages};
pub use oracle::{composite_all_in_focus, trace_bokeh, trace_bokeh_linear, PlanarLayer, PlaneCoeffs, SceneSpec};
pub use params::{blur_radius, RenderParams, DEFAULT_GAMMA, DEFAULT_PLANE_COUNT};
pub use pipeline::{build_representation, focus_disparity, render_image, PipelineConfig, Representation};
pub use synth::{generate_dataset, random_scene, DatasetConfig, Manifest};
