//! Synthetic multi-temporal crack scenes.
//!
//! A scene is a static concrete-like surface with static distractors, on which
//! a few crack trees lengthen and widen from frame to frame. Masks are monotone
//! in time and never cover a distractor.

mod crack;
mod distractors;
mod raster;
mod texture;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use crack::{grow_all, grow_cracks, linear_profile, sample_skeletons, CrackParams, CrackSkeleton, GrowthStep};
pub use distractors::{place_distractors, Cable, Cavity, DistractorKind, DistractorParams, DistractorSet, PencilDigit, Sensor};
pub use raster::Point;
pub use texture::{render_frame, Surface, TextureParams};

use crate::error::{data_err, invalid, Error, Result};
use crate::imaging::{Mask, RgbImage};
use crate::seeds;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneSpec {
    pub width_px: usize,
    pub height_px: usize,
    pub n_epochs: usize,
    pub n_crack_seeds: usize,
    pub distractor_counts: BTreeMap<DistractorKind, usize>,
    pub texture_params: TextureParams,
    pub crack_params: CrackParams,
    pub distractor_params: DistractorParams,
    pub rng_seed: u64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            width_px: 512,
            height_px: 512,
            n_epochs: 25,
            n_crack_seeds: 3,
            distractor_counts: [
                (DistractorKind::PencilDigit, 3),
                (DistractorKind::Sensor, 1),
                (DistractorKind::Cable, 1),
                (DistractorKind::Cavity, 6),
            ]
            .into(),
            texture_params: TextureParams::default(),
            crack_params: CrackParams::default(),
            distractor_params: DistractorParams::default(),
            rng_seed: 0,
        }
    }
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        if self.width_px == 0 || self.height_px == 0 {
            return Err(invalid!("scene must have a positive area, got {}x{}", self.width_px, self.height_px));
        }
        if self.n_epochs == 0 {
            return Err(invalid!("n_epochs must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Synthetic(SceneSpec),
    Real(PathBuf),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Frame {
    pub image: RgbImage,
    pub mask: Mask,
}

/// Registered frames of one scene in temporal order.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameSequence {
    pub frames: Vec<Frame>,
    pub distractors: DistractorSet,
    pub provenance: Provenance,
}

impl FrameSequence {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn width(&self) -> usize {
        self.frames.first().map_or(0, |f| f.image.width)
    }

    pub fn height(&self) -> usize {
        self.frames.first().map_or(0, |f| f.image.height)
    }

    pub fn validate(&self) -> Result<()> {
        let (w, h) = (self.width(), self.height());
        for (t, f) in self.frames.iter().enumerate() {
            if (f.image.width, f.image.height, f.mask.width, f.mask.height) != (w, h, w, h) {
                return Err(data_err!("frame {t} is not {w}x{h}"));
            }
        }
        Ok(())
    }
}

/// Crack skeletons of a scene (a pure function of the spec).
pub fn scene_skeletons(spec: &SceneSpec) -> Vec<CrackSkeleton> {
    let mut rng = seeds::rng(seeds::sub_seed(spec.rng_seed, "cracks"));
    sample_skeletons(spec.n_crack_seeds, &spec.crack_params, spec.width_px, spec.height_px, spec.n_epochs, &mut rng)
}

pub fn generate_scene(spec: &SceneSpec) -> Result<FrameSequence> {
    spec.validate()?;
    let (w, h) = (spec.width_px, spec.height_px);
    let mut rng = seeds::rng(seeds::sub_seed(spec.rng_seed, "distractors"));
    let distractors = place_distractors(&spec.distractor_counts, &spec.distractor_params, w, h, &mut rng)?;
    let occluded = distractors.footprint(w, h);
    let surface = Surface::generate(&spec.texture_params, w, h, seeds::sub_seed(spec.rng_seed, "texture"));
    let frames = grow_all(&scene_skeletons(spec), spec.n_epochs, w, h)
        .into_iter()
        .enumerate()
        .map(|(t, mut mask)| {
            for (m, &o) in mask.data.iter_mut().zip(&occluded.data) {
                *m &= 1 - o;
            }
            let mut jitter = seeds::rng(seeds::keyed_seed(spec.rng_seed, "frame", t as u64));
            let image = render_frame(&mask, &distractors, &surface, &mut jitter);
            Frame { image, mask }
        })
        .collect();
    Ok(FrameSequence { frames, distractors, provenance: Provenance::Synthetic(spec.clone()) })
}

fn index_width(n: usize) -> usize {
    n.saturating_sub(1).to_string().len().max(2)
}

pub fn scene_dir_name(id: usize) -> String {
    format!("scene_{id:04}")
}

/// Writes `scene_<id>/frame_<tt>.png`, `mask_<tt>.png`, `distractors.json`
/// and `spec.json` under `root`; returns the scene directory.
pub fn write_scene(root: &Path, id: usize, seq: &FrameSequence) -> Result<PathBuf> {
    let dir = root.join(scene_dir_name(id));
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let iw = index_width(seq.len());
    for (t, f) in seq.frames.iter().enumerate() {
        f.image.save_png(&dir.join(format!("frame_{t:0iw$}.png")))?;
        f.mask.save_png(&dir.join(format!("mask_{t:0iw$}.png")))?;
    }
    write_json(&dir.join("distractors.json"), &seq.distractors)?;
    write_json(&dir.join("spec.json"), &seq.provenance)?;
    Ok(dir)
}

/// Generates and writes `n` scenes; scene `i` uses `template` with seed
/// `keyed_seed(seed, "scene", i)`. Runs on the current rayon pool.
pub fn generate_scenes(root: &Path, n: usize, template: &SceneSpec, seed: u64) -> Result<Vec<PathBuf>> {
    template.validate()?;
    (0..n)
        .into_par_iter()
        .map(|i| {
            let spec = SceneSpec { rng_seed: seeds::keyed_seed(seed, "scene", i as u64), ..template.clone() };
            write_scene(root, i, &generate_scene(&spec)?)
        })
        .collect()
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)?).map_err(|e| Error::io(path, e))
}

/// Numbered files `<prefix>_<n>.png` in `dir`, sorted by number.
fn numbered(dir: &Path, prefix: &str) -> Result<Vec<(usize, PathBuf)>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let Some(name) = path.file_name().and_then(|n| n.to_str()) else { continue };
        let Some(rest) = name.strip_prefix(prefix).and_then(|r| r.strip_prefix('_')) else { continue };
        let Some(num) = rest.strip_suffix(".png") else { continue };
        if let Ok(n) = num.parse::<usize>() {
            out.push((n, path));
        }
    }
    out.sort();
    Ok(out)
}

/// Reads a scene directory in the layout produced by [`write_scene`].
/// `distractors.json` and `spec.json` are optional.
pub fn read_scene(dir: &Path) -> Result<FrameSequence> {
    let frames = numbered(dir, "frame")?;
    let masks = numbered(dir, "mask")?;
    if frames.is_empty() {
        return Err(data_err!("{}: no frame_<tt>.png files", dir.display()));
    }
    if frames.iter().map(|f| f.0).ne(masks.iter().map(|m| m.0)) {
        return Err(data_err!("{}: frame and mask indices differ", dir.display()));
    }
    let frames = frames
        .iter()
        .zip(&masks)
        .map(|((_, fp), (_, mp))| Ok(Frame { image: RgbImage::load_png(fp)?, mask: Mask::load_png(mp)? }))
        .collect::<Result<Vec<_>>>()?;
    let read_json = |name: &str| -> Result<Option<String>> {
        let path = dir.join(name);
        match fs::read_to_string(&path) {
            Ok(s) => Ok(Some(s)),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(Error::io(&path, e)),
        }
    };
    let distractors = match read_json("distractors.json")? {
        Some(s) => serde_json::from_str(&s).map_err(|e| data_err!("{}/distractors.json: {e}", dir.display()))?,
        None => DistractorSet::default(),
    };
    let provenance = match read_json("spec.json")? {
        Some(s) => serde_json::from_str(&s).map_err(|e| data_err!("{}/spec.json: {e}", dir.display()))?,
        None => Provenance::Real(dir.to_path_buf()),
    };
    let seq = FrameSequence { frames, distractors, provenance };
    seq.validate()?;
    Ok(seq)
}
