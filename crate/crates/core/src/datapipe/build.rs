//! Dataset construction from a directory of scenes, and the Table 1 check.

use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::dataset::{BuildParams, DatasetManifest, SceneSource, SplitStats};
use super::morph::clean_mask;
use super::samples::{cut_patch, default_crop, extract_patches, pad_sequence, Origin, SequenceSample};
use crate::error::{data_err, Error, Result};
use crate::imaging::{Mask, RgbImage};
use crate::seeds;
use crate::synthgen::{read_scene, write_json, Frame, FrameSequence, Provenance};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const PATCH_DIR: &str = "patches";

fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut v: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .map(|e| e.map(|e| e.path()).map_err(|err| Error::io(dir, err)))
        .collect::<Result<_>>()?;
    v.sort();
    Ok(v)
}

/// Trailing decimal number of a file stem, e.g. `epoch_07` -> 7.
fn trailing_number(stem: &str) -> Option<usize> {
    let digits: String = stem.chars().rev().take_while(|c| c.is_ascii_digit()).collect();
    digits.chars().rev().collect::<String>().parse().ok()
}

/// Scene from `images/` and `masks/` subdirectories holding same-named PNGs,
/// ordered by the number at the end of each name.
fn read_pair_dirs(dir: &Path) -> Result<FrameSequence> {
    let mut pairs = Vec::new();
    for img in sorted_entries(&dir.join("images"))? {
        if img.extension().and_then(|e| e.to_str()).map(|e| e.to_ascii_lowercase()) != Some("png".into()) {
            continue;
        }
        let name = img.file_name().unwrap().to_owned();
        let stem = img.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
        let idx = trailing_number(stem).ok_or_else(|| data_err!("{}: no epoch number in the name", img.display()))?;
        let mask = dir.join("masks").join(&name);
        if !mask.exists() {
            return Err(data_err!("missing mask file {}", mask.display()));
        }
        pairs.push((idx, img, mask));
    }
    if pairs.is_empty() {
        return Err(data_err!("{}: no images", dir.join("images").display()));
    }
    pairs.sort();
    let mut frames = Vec::with_capacity(pairs.len());
    for (_, img, mask) in &pairs {
        let image = RgbImage::load_png(img)?;
        let m = Mask::load_png(mask)?;
        if (m.width, m.height) != (image.width, image.height) {
            return Err(data_err!("{} is {}x{} but its image is {}x{}", mask.display(), m.width, m.height, image.width, image.height));
        }
        frames.push(Frame { image, mask: m });
    }
    let seq = FrameSequence { frames, distractors: Default::default(), provenance: Provenance::Real(dir.to_path_buf()) };
    seq.validate()?;
    Ok(seq)
}

fn is_scene_dir(dir: &Path) -> bool {
    dir.join("images").is_dir() || sorted_entries(dir).is_ok_and(|v| v.iter().any(|p| p.file_name().is_some_and(|n| n.to_string_lossy().starts_with("frame_"))))
}

/// Scene directories under `root`: `scene_*` subdirectories, or `root` itself.
pub fn scene_dirs(root: &Path) -> Result<Vec<PathBuf>> {
    let subs: Vec<PathBuf> = sorted_entries(root)?
        .into_iter()
        .filter(|p| p.is_dir() && p.file_name().is_some_and(|n| n.to_string_lossy().starts_with("scene_")))
        .collect();
    if !subs.is_empty() {
        return Ok(subs);
    }
    if is_scene_dir(root) {
        return Ok(vec![root.to_path_buf()]);
    }
    Err(data_err!("{}: no scenes found", root.display()))
}

/// Loads one scene: `frame_<tt>.png`/`mask_<tt>.png` pairs, or
/// `images/<name>.png` with `masks/<name>.png`. Masks binarize at 128.
pub fn read_any_scene(dir: &Path) -> Result<FrameSequence> {
    if dir.join("images").is_dir() {
        read_pair_dirs(dir)
    } else {
        read_scene(dir)
    }
}

/// Every scene under `path`, ordered by directory name.
pub fn ingest_real_dataset(path: &Path) -> Result<Vec<FrameSequence>> {
    scene_dirs(path)?.iter().map(|d| read_any_scene(d)).collect()
}

/// SHA-256 over the sorted file names and contents of a scene directory.
pub fn scene_checksum(dir: &Path) -> Result<String> {
    let mut files = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for p in sorted_entries(&d)? {
            if p.file_name().is_some_and(|n| n == MANIFEST_FILE || n == PATCH_DIR) {
                continue;
            }
            if p.is_dir() {
                stack.push(p);
            } else {
                files.push(p);
            }
        }
    }
    files.sort();
    let mut h = Sha256::new();
    for f in files {
        let rel = f.strip_prefix(dir).unwrap_or(&f);
        h.update(rel.to_string_lossy().as_bytes());
        h.update(Sha256::digest(fs::read(&f).map_err(|e| Error::io(&f, e))?));
    }
    Ok(hex(&h.finalize()))
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Cleans the masks (if enabled) and pads to the sequence length.
pub fn prepare_scene(mut seq: FrameSequence, params: &BuildParams) -> Result<FrameSequence> {
    if params.clean_masks {
        for f in &mut seq.frames {
            f.mask = clean_mask(&f.mask);
        }
    }
    seq.frames = pad_sequence(&seq.frames, params.sequence_length)?;
    Ok(seq)
}

/// Builds the dataset for the scenes under `root` and writes `manifest.json`
/// (plus per-patch PNGs under `patches/` when `params.materialize`).
pub fn build_dataset(root: &Path, params: &BuildParams) -> Result<DatasetManifest> {
    let mut sources = Vec::new();
    let mut candidates = Vec::new();
    let dirs = scene_dirs(root)?;
    for (i, dir) in dirs.iter().enumerate() {
        let seq = prepare_scene(read_any_scene(dir)?, params)?;
        log::info!("scene {} ({} frames, {}x{})", dir.display(), seq.len(), seq.width(), seq.height());
        candidates.extend(extract_patches(&seq, i, params.patch_size, params.crop)?);
        sources.push(SceneSource {
            dir: dir.strip_prefix(root).unwrap_or(dir).to_string_lossy().into_owned(),
            frames: seq.len(),
            width: seq.width(),
            height: seq.height(),
            checksum: scene_checksum(dir)?,
        });
    }
    let manifest = DatasetManifest::assemble(params.clone(), sources, candidates)?;
    if params.materialize {
        materialize(root, &manifest)?;
    }
    write_json(&root.join(MANIFEST_FILE), &manifest)?;
    Ok(manifest)
}

fn materialize(root: &Path, manifest: &DatasetManifest) -> Result<()> {
    let p = &manifest.params;
    for (i, src) in manifest.scenes.iter().enumerate() {
        let seq = prepare_scene(read_any_scene(&root.join(&src.dir))?, p)?;
        let crop = p.crop.unwrap_or_else(|| default_crop(seq.width(), seq.height(), p.patch_size));
        for s in manifest.samples.iter().filter(|s| s.sample.origin.scene == i) {
            let patch = cut_patch(&seq, s.sample.origin, p.patch_size, crop);
            let dir = root.join(PATCH_DIR).join(s.sample.origin.id());
            fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
            for (t, (img, m)) in patch.images.iter().zip(&patch.masks).enumerate() {
                img.save_png(&dir.join(format!("frame_{t:02}.png")))?;
                m.save_png(&dir.join(format!("mask_{t:02}.png")))?;
            }
        }
    }
    Ok(())
}

pub fn read_manifest(root: &Path) -> Result<DatasetManifest> {
    let path = root.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let m: DatasetManifest = serde_json::from_str(&text).map_err(|e| data_err!("{}: {e}", path.display()))?;
    m.validate()?;
    Ok(m)
}

/// Reference counts and ratios for a built dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Expectation {
    pub name: String,
    /// Sample counts for `all`, `train`, `val`, `test`.
    pub multi_counts: [usize; 4],
    pub mono_counts: [usize; 4],
    /// Percentages over all samples: (crack image ratio, crack pixel ratio).
    pub multi_ratios: (f64, f64),
    pub mono_ratios: (f64, f64),
    /// Allowed deviation of the ratios, in percentage points.
    pub tolerance_pp: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CheckLine {
    pub name: String,
    pub expected: f64,
    pub actual: f64,
    pub tolerance: f64,
}

impl CheckLine {
    pub fn passed(&self) -> bool {
        (self.expected - self.actual).abs() <= self.tolerance + 1e-12
    }
}

const GROUPS: [&str; 4] = ["all", "train", "val", "test"];

impl Expectation {
    /// Published statistics of the real dataset.
    pub fn table1() -> Self {
        Self {
            name: "table1".into(),
            multi_counts: [1356, 813, 271, 272],
            mono_counts: [43392, 26016, 8672, 8704],
            multi_ratios: (66.7, 1.2),
            mono_ratios: (40.1, 1.2),
            tolerance_pp: 0.5,
        }
    }

    /// Golden values taken from an existing manifest (ratios rounded to 0.1 %).
    pub fn from_manifest(name: &str, m: &DatasetManifest) -> Self {
        let counts = |t: &super::dataset::StatsTable| GROUPS.map(|g| t.get(g).map_or(0, |s| s.samples));
        let pct = |s: Option<&SplitStats>| s.map_or((0.0, 0.0), |s| (round1(100.0 * s.crack_image_ratio), round1(100.0 * s.crack_pixel_ratio)));
        Self {
            name: name.into(),
            multi_counts: counts(&m.multi_stats),
            mono_counts: counts(&m.mono_stats),
            multi_ratios: pct(m.multi_stats.get("all")),
            mono_ratios: pct(m.mono_stats.get("all")),
            tolerance_pp: 0.5,
        }
    }

    pub fn check(&self, m: &DatasetManifest) -> Vec<CheckLine> {
        let mut out = Vec::new();
        for (kind, table, counts, ratios) in
            [("multi", &m.multi_stats, &self.multi_counts, self.multi_ratios), ("mono", &m.mono_stats, &self.mono_counts, self.mono_ratios)]
        {
            for (g, &want) in GROUPS.iter().zip(counts) {
                let got = table.get(*g).map_or(0, |s| s.samples);
                out.push(CheckLine { name: format!("{kind} {g} samples"), expected: want as f64, actual: got as f64, tolerance: 0.0 });
            }
            let all = table.get("all");
            let img = all.map_or(0.0, |s| 100.0 * s.crack_image_ratio);
            let px = all.map_or(0.0, |s| 100.0 * s.crack_pixel_ratio);
            out.push(CheckLine { name: format!("{kind} crack image ratio %"), expected: ratios.0, actual: img, tolerance: self.tolerance_pp });
            out.push(CheckLine { name: format!("{kind} crack pixel ratio %"), expected: ratios.1, actual: px, tolerance: self.tolerance_pp });
        }
        out
    }
}

fn round1(x: f64) -> f64 {
    (x * 10.0).round() / 10.0
}

/// Runs balancing, splitting and deserialization on record-only samples with
/// the real slab's tallies (5632 patch sequences, 904 with cracks), which pins
/// down every count of Table 1 without the images.
pub fn simulate_table1_counts(seed: u64) -> Result<DatasetManifest> {
    let (rows, cols, crack) = (64, 88, 904);
    let mut rng = seeds::rng(seeds::sub_seed(seed, "table1"));
    let mut with_crack: Vec<bool> = (0..rows * cols).map(|i| i < crack).collect();
    use rand::seq::SliceRandom;
    with_crack.shuffle(&mut rng);
    let candidates = with_crack
        .iter()
        .enumerate()
        .map(|(i, &c)| {
            let start = if c { rng.random_range(0..32) } else { 32 };
            let frame_crack_pixels = (0..32).map(|t| if t >= start { 200 } else { 0 }).collect();
            SequenceSample { origin: Origin { scene: 0, row: i / cols, col: i % cols }, frame_crack_pixels }
        })
        .collect();
    let scene = SceneSource { dir: "simulated".into(), frames: 32, width: cols * 128, height: rows * 128, checksum: String::new() };
    let params = BuildParams { balance_seed: seed, split_seed: seed, ..BuildParams::default() };
    DatasetManifest::assemble(params, vec![scene], candidates)
}
