//! MPI construction from layered scenes or from a single image plus
//! disparity and background hypotheses.

pub mod background;
pub mod heuristic;
pub mod ideal;
pub mod inpaint;
pub mod zones;

pub use background::{
    build_background, build_background_with, load_background_set, save_background_set, split_by_occluder,
    BackgroundEntry, BackgroundSet,
};
pub use heuristic::{build_mpi_heuristic, build_mpi_visible, HeuristicConfig};
pub use ideal::build_mpi_ideal;
pub use inpaint::{background_sources, inpaint, inpaint_disparity, inpaint_with_sources, DEFAULT_INPAINT_ITERS};
pub use zones::{hard_bin, weights_to_alphas, zone_masks, zone_weights, ZoneMode};
