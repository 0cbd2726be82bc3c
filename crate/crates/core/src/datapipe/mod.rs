//! Dataset preparation: mask clean-up, sequence padding, patching,
//! crack/no-crack balancing, splitting and the per-frame (mono) view.

mod build;
mod dataset;
mod loader;
mod morph;
mod samples;

pub use build::{
    build_dataset, ingest_real_dataset, prepare_scene, read_any_scene, read_manifest, scene_checksum, scene_dirs,
    simulate_table1_counts, CheckLine, Expectation, MANIFEST_FILE, PATCH_DIR,
};
pub use dataset::{
    balance, compute_statistics, deserialize, split, split_sizes, BuildParams, DatasetManifest, ManifestSample,
    SceneSource, Split, SplitStats, StatsTable, MANIFEST_SCHEMA,
};
pub use loader::Dataset;
pub use morph::{clean_mask, close3, dilate, remove_small_components, MIN_COMPONENT};
pub use samples::{
    cut_patch, default_crop, duplicate_indices, extract_patches, pad_sequence, CropRegion, HasCrack, MonoSample, Origin,
    SequencePatch, SequenceSample,
};
