//! Ray-traced ground truth for layered planar scenes.

pub mod aperture;
pub mod scene;
pub mod trace;

pub use aperture::{aperture_samples, ApertureSample};
pub use scene::{load_scene, save_scene, PlanarLayer, PlaneCoeffs, SceneSpec};
pub use trace::{
    composite_all_in_focus, project_sample, trace_bokeh, trace_bokeh_linear, RayResult, Tracer, EPS_DEN, EPS_ENERGY,
};
