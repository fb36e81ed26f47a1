//! Synthetic layered scenes and ground-truth bokeh datasets.

pub mod assets;
pub mod augment;
pub mod dataset;
pub mod scene;

pub use assets::{resize, Assets};
pub use augment::{augment_disparity, augment_with, AugmentParams};
pub use dataset::{
    bokeh_file_name, generate_dataset, load_manifest, scene_seed, write_manifest, BokehEntry, Manifest, SceneEntry,
    MANIFEST_FILE, TIMING_FILE,
};
pub use scene::{random_scene, AssetDirs, DatasetConfig, DisparityMode, GeneratedScene, RefocusMode};
