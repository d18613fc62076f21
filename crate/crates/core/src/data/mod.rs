//! Toy scene generation, dataset assembly, patches and file formats.

mod dataset;
mod io;
mod patches;
mod scenes;

pub use dataset::{
    assemble_dataset, assign_splits, load_pairs, read_manifest, write_manifest, DatasetConfig,
    DatasetManifest, ManifestEntry, ScenePair, SensitivityRef, SensitivitySource, SourceMode,
    Split, MANIFEST_VERSION,
};
pub use io::{
    cube_to_rgb, load_hsb, read_hsb, rgb_to_cube, save_hsb, write_hsb, write_png, HSB_MAGIC,
};
pub use patches::{crop_cube, crop_rgb, extract_patches, patch_origins, reassemble, Patch};
pub use scenes::{generate_toy_scenes, random_spectrum, toy_scene, ToySceneSpec};
