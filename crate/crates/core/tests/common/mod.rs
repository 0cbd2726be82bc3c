#![allow(dead_code)]

use std::path::Path;

use crackseq::datapipe::{build_dataset, BuildParams, Dataset};
use crackseq::nets::{ModelSpec, SwinSpec, UNetSpec};
use crackseq::synthgen::{generate_scenes, DistractorParams, SceneSpec};

/// `n` small scenes built into a dataset of 32x32 patches over `t` frames.
pub fn tiny_dataset(root: &Path, n: usize, t: usize) -> Dataset {
    let template = SceneSpec {
        width_px: 64,
        height_px: 64,
        n_epochs: t,
        distractor_params: DistractorParams::default().scaled(0.2),
        ..SceneSpec::default()
    };
    generate_scenes(root, n, &template, 11).unwrap();
    let params = BuildParams { patch_size: 32, sequence_length: t, ..BuildParams::default() };
    build_dataset(root, &params).unwrap();
    Dataset::open(root, true).unwrap()
}

pub fn tiny_swin() -> ModelSpec {
    ModelSpec::SwinUnetr(SwinSpec {
        feature_size: 6,
        window_size: 2,
        depths: vec![1],
        num_heads: vec![2],
        mlp_ratio: 2.0,
        ..SwinSpec::default()
    })
}

pub fn tiny_unet() -> ModelSpec {
    ModelSpec::Unet(UNetSpec { widths: vec![4, 8], ..UNetSpec::default() })
}
