//! Whole-scene inference on the dataset's patch grid.

use serde::{Deserialize, Serialize};

use crate::datapipe::{cut_patch, default_crop, CropRegion, Origin};
use crate::error::{invalid, Result};
use crate::imaging::Mask;
use crate::nets::Model;
use crate::synthgen::FrameSequence;
use crate::trainer::{frames_of, predict, Loaded};

#[derive(Clone, Debug, PartialEq)]
pub struct TiledPrediction {
    /// One full-resolution mask per frame.
    pub masks: Vec<Mask>,
    /// Region covered by whole tiles; outside it masks are 0.
    pub grid: CropRegion,
    pub tiles: usize,
}

impl TiledPrediction {
    /// True when part of the scene lies outside the tile grid and was not predicted.
    pub fn has_border(&self) -> bool {
        self.masks.first().is_some_and(|m| self.grid.width < m.width || self.grid.height < m.height)
    }

    pub fn summary(&self) -> TileSummary {
        let (w, h) = self.masks.first().map_or((0, 0), |m| (m.width, m.height));
        TileSummary { tiles: self.tiles, grid: self.grid, width: w, height: h, unpredicted_border: self.has_border() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TileSummary {
    pub tiles: usize,
    pub grid: CropRegion,
    pub width: usize,
    pub height: usize,
    pub unpredicted_border: bool,
}

/// Predicts every non-overlapping `patch` tile of the top-left aligned grid
/// and stitches the results. Sequence models see each tile's full clip,
/// frame models each frame separately.
pub fn tile_infer(model: &Model, seq: &FrameSequence, patch: usize, threshold: f64, micro_batch: usize) -> Result<TiledPrediction> {
    let (w, h) = (seq.width(), seq.height());
    if patch == 0 || w < patch || h < patch {
        return Err(invalid!("{w}x{h} scene is smaller than one {patch}x{patch} tile"));
    }
    let grid = default_crop(w, h, patch);
    let (rows, cols) = (grid.height / patch, grid.width / patch);
    let origins: Vec<Origin> = (0..rows).flat_map(|row| (0..cols).map(move |col| Origin { scene: 0, row, col })).collect();
    let mut masks = vec![Mask::new(w, h); seq.len()];
    let micro = micro_batch.max(1);
    let mut paste = |o: Origin, t: usize, m: &Mask| {
        let (x0, y0) = (o.col * patch, o.row * patch);
        for y in 0..patch {
            masks[t].data[(y0 + y) * w + x0..][..patch].copy_from_slice(&m.data[y * patch..][..patch]);
        }
    };
    let loaded = |o: Origin| {
        let p = cut_patch(seq, o, patch, grid);
        Loaded { images: p.images, masks: p.masks }
    };
    if model.is_multi_temporal() {
        for chunk in origins.chunks(micro) {
            let samples: Vec<Loaded> = chunk.iter().map(|&o| loaded(o)).collect();
            let pred = predict(model, &samples, threshold)?;
            for (&o, seq_masks) in chunk.iter().zip(&pred.masks) {
                for (t, m) in seq_masks.iter().enumerate() {
                    paste(o, t, m);
                }
            }
        }
    } else {
        for &o in &origins {
            let frames = frames_of(&loaded(o));
            for (c, chunk) in frames.chunks(micro).enumerate() {
                let pred = predict(model, chunk, threshold)?;
                for (i, m) in pred.masks.iter().enumerate() {
                    paste(o, c * micro + i, &m[0]);
                }
            }
        }
    }
    Ok(TiledPrediction { masks, grid, tiles: origins.len() })
}
