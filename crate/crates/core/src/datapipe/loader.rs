//! Read access to a built dataset: patch sequences and single frames.

use std::path::{Path, PathBuf};

use super::build::{prepare_scene, read_any_scene, read_manifest, scene_checksum, PATCH_DIR};
use super::dataset::{DatasetManifest, Split};
use super::samples::{cut_patch, default_crop, CropRegion, Origin, SequencePatch};
use crate::error::{data_err, Result};
use crate::imaging::{Mask, RgbImage};
use crate::synthgen::{DistractorKind, FrameSequence};

enum Store {
    /// Prepared scenes held in memory; patches are views into them.
    Scenes(Vec<(FrameSequence, CropRegion)>),
    /// One directory of PNGs per sample.
    Patches(PathBuf),
}

pub struct Dataset {
    pub root: PathBuf,
    pub manifest: DatasetManifest,
    store: Store,
}

impl Dataset {
    /// Opens the dataset at `root`. With `verify`, scene checksums must match
    /// those recorded at build time.
    pub fn open(root: &Path, verify: bool) -> Result<Self> {
        let manifest = read_manifest(root)?;
        if verify {
            for s in &manifest.scenes {
                let got = scene_checksum(&root.join(&s.dir))?;
                if got != s.checksum {
                    return Err(data_err!("scene {} changed since the dataset was built", s.dir));
                }
            }
        }
        let store = if manifest.params.materialize {
            Store::Patches(root.join(PATCH_DIR))
        } else {
            let p = &manifest.params;
            let scenes = manifest
                .scenes
                .iter()
                .map(|s| {
                    let seq = prepare_scene(read_any_scene(&root.join(&s.dir))?, p)?;
                    let crop = p.crop.unwrap_or_else(|| default_crop(seq.width(), seq.height(), p.patch_size));
                    Ok((seq, crop))
                })
                .collect::<Result<Vec<_>>>()?;
            Store::Scenes(scenes)
        };
        Ok(Self { root: root.to_path_buf(), manifest, store })
    }

    pub fn patch_size(&self) -> usize {
        self.manifest.params.patch_size
    }

    pub fn sequence_length(&self) -> usize {
        self.manifest.params.sequence_length
    }

    pub fn origins(&self, split: Split) -> Vec<Origin> {
        self.manifest.split_of(split).map(|s| s.origin).collect()
    }

    /// `(origin, t)` for every frame of every sample in `split`.
    pub fn mono_items(&self, split: Split) -> Vec<(Origin, usize)> {
        let t = self.sequence_length();
        self.origins(split).into_iter().flat_map(|o| (0..t).map(move |i| (o, i))).collect()
    }

    pub fn sequence(&self, origin: Origin) -> Result<SequencePatch> {
        match &self.store {
            Store::Scenes(scenes) => {
                let (seq, crop) = scenes.get(origin.scene).ok_or_else(|| data_err!("no scene {}", origin.scene))?;
                Ok(cut_patch(seq, origin, self.patch_size(), *crop))
            }
            Store::Patches(dir) => {
                let dir = dir.join(origin.id());
                let (mut images, mut masks) = (Vec::new(), Vec::new());
                for t in 0..self.sequence_length() {
                    images.push(RgbImage::load_png(&dir.join(format!("frame_{t:02}.png")))?);
                    masks.push(Mask::load_png(&dir.join(format!("mask_{t:02}.png")))?);
                }
                Ok(SequencePatch { images, masks })
            }
        }
    }

    pub fn frame(&self, origin: Origin, t: usize) -> Result<(RgbImage, Mask)> {
        match &self.store {
            Store::Scenes(scenes) => {
                let (seq, crop) = scenes.get(origin.scene).ok_or_else(|| data_err!("no scene {}", origin.scene))?;
                let f = seq.frames.get(t).ok_or_else(|| data_err!("no frame {t}"))?;
                let p = self.patch_size();
                let (x, y) = (crop.x + origin.col * p, crop.y + origin.row * p);
                Ok((f.image.crop(x, y, p, p), f.mask.crop(x, y, p, p)))
            }
            Store::Patches(dir) => {
                let dir = dir.join(origin.id());
                Ok((RgbImage::load_png(&dir.join(format!("frame_{t:02}.png")))?, Mask::load_png(&dir.join(format!("mask_{t:02}.png")))?))
            }
        }
    }

    /// Distractor footprints that intersect the patch at `origin`, cropped to
    /// it. Empty for materialized datasets and scenes without annotations.
    pub fn distractors(&self, origin: Origin) -> Vec<(DistractorKind, Mask)> {
        let Store::Scenes(scenes) = &self.store else { return Vec::new() };
        let Some((seq, crop)) = scenes.get(origin.scene) else { return Vec::new() };
        let p = self.patch_size();
        let (x, y) = (crop.x + origin.col * p, crop.y + origin.row * p);
        seq.distractors
            .footprints(seq.width(), seq.height())
            .into_iter()
            .map(|(k, m)| (k, m.crop(x, y, p, p)))
            .filter(|(_, m)| !m.is_empty())
            .collect()
    }
}
