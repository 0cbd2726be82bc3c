//! Sequence padding, patch grids and the sample records built from them.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::imaging::{Mask, RgbImage};
use crate::synthgen::FrameSequence;

/// Extends a sequence to `target` frames by duplicating `d = target - n`
/// evenly spaced frames, each inserted right after its source. Duplicated
/// indices are `round(k (n-1) / (d-1))` for `k < d`, or the midpoint when `d = 1`.
pub fn pad_sequence<T: Clone>(frames: &[T], target: usize) -> Result<Vec<T>> {
    let n = frames.len();
    if n == 0 {
        return Err(invalid!("cannot pad an empty sequence"));
    }
    if n > target {
        return Err(invalid!("sequence of {n} frames is longer than the target {target}"));
    }
    let dups = duplicate_indices(n, target - n);
    let mut out = Vec::with_capacity(target);
    for (i, f) in frames.iter().enumerate() {
        out.push(f.clone());
        for _ in dups.iter().filter(|&&d| d == i) {
            out.push(f.clone());
        }
    }
    Ok(out)
}

/// Source indices duplicated by [`pad_sequence`] for `d` missing frames.
pub fn duplicate_indices(n: usize, d: usize) -> Vec<usize> {
    match d {
        0 => vec![],
        1 => vec![((n - 1) as f64 / 2.0).round() as usize],
        _ => (0..d).map(|k| (k as f64 * (n - 1) as f64 / (d - 1) as f64).round() as usize).collect(),
    }
}

/// Region of the registered frames that is cut into patches.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CropRegion {
    pub x: usize,
    pub y: usize,
    pub width: usize,
    pub height: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Origin {
    pub scene: usize,
    pub row: usize,
    pub col: usize,
}

impl Origin {
    pub fn id(&self) -> String {
        format!("s{:04}_r{:03}_c{:03}", self.scene, self.row, self.col)
    }
}

/// Samples that know whether they contain crack pixels.
pub trait HasCrack {
    fn has_crack(&self) -> bool;
}

/// A patch location followed through every frame. Pixels stay in the scene;
/// the record keeps per-frame crack pixel counts for statistics.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SequenceSample {
    pub origin: Origin,
    /// Crack pixels in each frame.
    pub frame_crack_pixels: Vec<u32>,
}

impl SequenceSample {
    pub fn crack_pixels(&self) -> u64 {
        self.frame_crack_pixels.iter().map(|&c| c as u64).sum()
    }

    pub fn len(&self) -> usize {
        self.frame_crack_pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frame_crack_pixels.is_empty()
    }
}

impl HasCrack for SequenceSample {
    fn has_crack(&self) -> bool {
        self.frame_crack_pixels.iter().any(|&c| c > 0)
    }
}

/// One frame of a sequence sample.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MonoSample {
    pub origin: Origin,
    pub t: usize,
    pub crack_pixels: u32,
}

impl HasCrack for MonoSample {
    fn has_crack(&self) -> bool {
        self.crack_pixels > 0
    }
}

/// Pixel data of one sequence sample.
#[derive(Clone, Debug, PartialEq)]
pub struct SequencePatch {
    pub images: Vec<RgbImage>,
    pub masks: Vec<Mask>,
}

/// Largest top-left-anchored region that holds whole patches.
pub fn default_crop(width: usize, height: usize, patch: usize) -> CropRegion {
    CropRegion { x: 0, y: 0, width: width / patch * patch, height: height / patch * patch }
}

/// Non-overlapping `patch x patch` grid over `crop` (default: largest
/// top-left aligned crop); the partial border strip is dropped.
pub fn extract_patches(seq: &FrameSequence, scene: usize, patch: usize, crop: Option<CropRegion>) -> Result<Vec<SequenceSample>> {
    let (w, h) = (seq.width(), seq.height());
    if patch == 0 {
        return Err(invalid!("patch size must be positive"));
    }
    let crop = crop.unwrap_or_else(|| default_crop(w, h, patch));
    if crop.x + crop.width > w || crop.y + crop.height > h {
        return Err(invalid!("crop {crop:?} exceeds the {w}x{h} frames"));
    }
    let (cols, rows) = (crop.width / patch, crop.height / patch);
    if cols == 0 || rows == 0 {
        return Err(invalid!("{}x{} region holds no full {patch}x{patch} patch", crop.width, crop.height));
    }
    let mut counts = vec![vec![0u32; seq.len()]; rows * cols];
    for (t, f) in seq.frames.iter().enumerate() {
        for y in 0..rows * patch {
            let row = &f.mask.data[(crop.y + y) * w + crop.x..][..cols * patch];
            for (c, chunk) in row.chunks_exact(patch).enumerate() {
                counts[(y / patch) * cols + c][t] += chunk.iter().map(|&v| v as u32).sum::<u32>();
            }
        }
    }
    Ok(counts
        .into_iter()
        .enumerate()
        .map(|(i, frame_crack_pixels)| SequenceSample { origin: Origin { scene, row: i / cols, col: i % cols }, frame_crack_pixels })
        .collect())
}

/// Pixels of the patch at `origin` in a scene cut with `crop` and `patch`.
pub fn cut_patch(seq: &FrameSequence, origin: Origin, patch: usize, crop: CropRegion) -> SequencePatch {
    let (x, y) = (crop.x + origin.col * patch, crop.y + origin.row * patch);
    SequencePatch {
        images: seq.frames.iter().map(|f| f.image.crop(x, y, patch, patch)).collect(),
        masks: seq.frames.iter().map(|f| f.mask.crop(x, y, patch, patch)).collect(),
    }
}
