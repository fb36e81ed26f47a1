//! MPI bokeh rendering: per-plane disc blur and (optionally normalized)
//! back-to-front compositing in linear space.

pub mod convolve;
pub mod dump;
pub mod kernel;
pub mod render;
pub mod stack;

pub use kernel::{disc_kernel, Kernel};
pub use render::{
    compose_sharp, coverage, reconstruct_disparity, render_mpi, render_mpi_linear, render_mpi_with_stats, RenderStats,
    EPS_NORM,
};
pub use stack::{plane_disparity, MpiPlane, MpiStack};
