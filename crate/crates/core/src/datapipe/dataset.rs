//! Balancing, splitting, deserialization and statistics.

use std::collections::BTreeMap;

use rand::seq::{index, SliceRandom};
use serde::{Deserialize, Serialize};

use super::samples::{CropRegion, HasCrack, MonoSample, SequenceSample};
use crate::error::{data_err, invalid, Result};
use crate::seeds;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

/// Keeps every crack sample and `floor(n_crack / ratio)` crack-free ones
/// drawn with `seed`, then shuffles the result with the same seed.
pub fn balance<T: HasCrack + Clone>(samples: &[T], ratio: f64, seed: u64) -> Result<Vec<T>> {
    if !(ratio > 0.0 && ratio.is_finite()) {
        return Err(invalid!("balance ratio must be positive, got {ratio}"));
    }
    let (crack, free): (Vec<&T>, Vec<&T>) = samples.iter().partition(|s| s.has_crack());
    let wanted = (crack.len() as f64 / ratio + 1e-9).floor() as usize;
    let mut rng = seeds::rng(seed);
    let keep = if wanted > free.len() {
        log::warn!("only {} crack-free samples for the {wanted} requested; keeping all", free.len());
        free.len()
    } else {
        wanted
    };
    let mut picked = index::sample(&mut rng, free.len(), keep).into_vec();
    picked.sort_unstable();
    let mut out: Vec<T> = crack.into_iter().cloned().chain(picked.into_iter().map(|i| free[i].clone())).collect();
    out.shuffle(&mut rng);
    Ok(out)
}

/// Split sizes for `n` samples: `floor(f0 n)`, `floor(f1 n)` and the rest.
pub fn split_sizes(n: usize, fractions: (f64, f64, f64)) -> Result<[usize; 3]> {
    let (a, b, c) = fractions;
    if [a, b, c].iter().any(|f| !(0.0..=1.0).contains(f)) || ((a + b + c) - 1.0).abs() > 1e-9 {
        return Err(invalid!("split fractions {fractions:?} must be in [0, 1] and sum to 1"));
    }
    if n < 3 {
        return Err(invalid!("need at least 3 samples to split, got {n}"));
    }
    let train = (a * n as f64 + 1e-9).floor() as usize;
    let val = (b * n as f64 + 1e-9).floor() as usize;
    Ok([train, val, n - train - val])
}

/// Assigns each of the `n` input positions a split after a seeded shuffle.
pub fn split(n: usize, fractions: (f64, f64, f64), seed: u64) -> Result<Vec<Split>> {
    let [train, val, _] = split_sizes(n, fractions)?;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seeds::rng(seed));
    let mut out = vec![Split::Test; n];
    for (rank, &i) in order.iter().enumerate() {
        out[i] = if rank < train {
            Split::Train
        } else if rank < train + val {
            Split::Val
        } else {
            Split::Test
        };
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitStats {
    pub samples: usize,
    pub crack_samples: usize,
    /// Fraction of samples with any crack pixel.
    pub crack_image_ratio: f64,
    pub crack_pixels: u64,
    pub total_pixels: u64,
    pub crack_pixel_ratio: f64,
}

/// Statistics of one group of samples, each `pixels_per_sample` pixels.
pub fn compute_statistics<'a, T: HasCrack + 'a>(
    samples: impl IntoIterator<Item = &'a T>,
    crack_pixels: impl Fn(&T) -> u64,
    pixels_per_sample: u64,
) -> Result<SplitStats> {
    let (mut n, mut nc, mut cp) = (0usize, 0usize, 0u64);
    for s in samples {
        n += 1;
        nc += s.has_crack() as usize;
        cp += crack_pixels(s);
    }
    if n == 0 {
        return Err(data_err!("statistics of an empty split"));
    }
    let total = n as u64 * pixels_per_sample;
    Ok(SplitStats {
        samples: n,
        crack_samples: nc,
        crack_image_ratio: nc as f64 / n as f64,
        crack_pixels: cp,
        total_pixels: total,
        crack_pixel_ratio: cp as f64 / total as f64,
    })
}

/// Per-split and overall statistics, keyed `all`, `train`, `val`, `test`.
pub type StatsTable = BTreeMap<String, SplitStats>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestSample {
    #[serde(flatten)]
    pub sample: SequenceSample,
    pub split: Split,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneSource {
    pub dir: String,
    pub frames: usize,
    pub width: usize,
    pub height: usize,
    /// SHA-256 over the per-file digests of the scene's files.
    pub checksum: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BuildParams {
    pub patch_size: usize,
    pub sequence_length: usize,
    pub clean_masks: bool,
    pub balance_ratio: f64,
    pub balance_seed: u64,
    pub split_seed: u64,
    pub fractions: (f64, f64, f64),
    /// Crop applied to every scene; `None` means the largest aligned crop.
    pub crop: Option<CropRegion>,
    pub materialize: bool,
}

impl Default for BuildParams {
    fn default() -> Self {
        Self {
            patch_size: 128,
            sequence_length: 32,
            clean_masks: true,
            balance_ratio: 2.0,
            balance_seed: 0,
            split_seed: 0,
            fractions: (0.6, 0.2, 0.2),
            crop: None,
            materialize: false,
        }
    }
}

pub const MANIFEST_SCHEMA: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub schema_version: u32,
    pub params: BuildParams,
    pub scenes: Vec<SceneSource>,
    /// Patch sequences before balancing.
    pub candidates: usize,
    pub samples: Vec<ManifestSample>,
    pub multi_stats: StatsTable,
    pub mono_stats: StatsTable,
}

impl DatasetManifest {
    /// Balances `candidates`, splits the survivors and computes statistics.
    pub fn assemble(params: BuildParams, scenes: Vec<SceneSource>, candidates: Vec<SequenceSample>) -> Result<Self> {
        let n_candidates = candidates.len();
        let kept = balance(&candidates, params.balance_ratio, params.balance_seed)?;
        let splits = split(kept.len(), params.fractions, params.split_seed)?;
        let samples = kept.into_iter().zip(splits).map(|(sample, split)| ManifestSample { sample, split }).collect();
        let mut m = DatasetManifest {
            schema_version: MANIFEST_SCHEMA,
            params,
            scenes,
            candidates: n_candidates,
            samples,
            multi_stats: StatsTable::new(),
            mono_stats: StatsTable::new(),
        };
        m.refresh_statistics()?;
        Ok(m)
    }

    pub fn refresh_statistics(&mut self) -> Result<()> {
        let px = (self.params.patch_size * self.params.patch_size) as u64;
        let t = self.params.sequence_length as u64;
        let mono = deserialize(self);
        let mut multi_stats = StatsTable::new();
        let mut mono_stats = StatsTable::new();
        let all = |_: Split| true;
        let groups: [(&str, &dyn Fn(Split) -> bool); 4] = [
            ("all", &all),
            ("train", &|s| s == Split::Train),
            ("val", &|s| s == Split::Val),
            ("test", &|s| s == Split::Test),
        ];
        for (name, keep) in groups {
            // empty splits (possible for tiny datasets) get no entry
            if !self.samples.iter().any(|s| keep(s.split)) {
                continue;
            }
            let multi = self.samples.iter().filter(|s| keep(s.split)).map(|s| &s.sample);
            multi_stats.insert(name.into(), compute_statistics(multi, |s| s.crack_pixels(), px * t)?);
            let m = mono.iter().filter(|(_, s)| keep(*s)).map(|(m, _)| m);
            mono_stats.insert(name.into(), compute_statistics(m, |s| s.crack_pixels as u64, px)?);
        }
        self.multi_stats = multi_stats;
        self.mono_stats = mono_stats;
        Ok(())
    }

    pub fn split_of(&self, split: Split) -> impl Iterator<Item = &SequenceSample> {
        self.samples.iter().filter(move |s| s.split == split).map(|s| &s.sample)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != MANIFEST_SCHEMA {
            return Err(data_err!("manifest schema {} (expected {MANIFEST_SCHEMA})", self.schema_version));
        }
        let mut seen = std::collections::BTreeSet::new();
        for s in &self.samples {
            if !seen.insert(s.sample.origin) {
                return Err(data_err!("sample {} listed twice", s.sample.origin.id()));
            }
            if s.sample.len() != self.params.sequence_length {
                return Err(data_err!("sample {} has {} frames", s.sample.origin.id(), s.sample.len()));
            }
            if s.sample.origin.scene >= self.scenes.len() {
                return Err(data_err!("sample {} refers to a missing scene", s.sample.origin.id()));
            }
        }
        Ok(())
    }
}

/// Unrolls every sequence into one mono sample per frame, inheriting its split.
pub fn deserialize(manifest: &DatasetManifest) -> Vec<(MonoSample, Split)> {
    manifest
        .samples
        .iter()
        .flat_map(|s| {
            s.sample
                .frame_crack_pixels
                .iter()
                .enumerate()
                .map(move |(t, &c)| (MonoSample { origin: s.sample.origin, t, crack_pixels: c }, s.split))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datapipe::samples::Origin;

    #[derive(Clone, Debug, PartialEq)]
    struct Toy(usize, bool);
    impl HasCrack for Toy {
        fn has_crack(&self) -> bool {
            self.1
        }
    }

    fn toys(crack: usize, free: usize) -> Vec<Toy> {
        (0..crack + free).map(|i| Toy(i, i < crack)).collect()
    }

    #[test]
    fn balance_matches_table_one_tallies() {
        let out = balance(&toys(904, 4728), 2.0, 3).unwrap();
        assert_eq!(out.len(), 1356);
        assert_eq!(out.iter().filter(|t| t.1).count(), 904);
        assert_eq!(out, balance(&toys(904, 4728), 2.0, 3).unwrap());
        assert_ne!(out, balance(&toys(904, 4728), 2.0, 4).unwrap());
        assert!(balance(&toys(0, 50), 2.0, 0).unwrap().is_empty());
        // too few crack-free: keep all of them
        assert_eq!(balance(&toys(10, 2), 2.0, 0).unwrap().len(), 12);
        assert!(balance(&toys(10, 2), 0.0, 0).is_err());
    }

    #[test]
    fn split_sizes_follow_floor_rule() {
        assert_eq!(split_sizes(1356, (0.6, 0.2, 0.2)).unwrap(), [813, 271, 272]);
        assert_eq!(split_sizes(10, (0.6, 0.2, 0.2)).unwrap(), [6, 2, 2]);
        assert!(split_sizes(10, (0.5, 0.5, 0.1)).is_err());
        assert!(split_sizes(2, (0.6, 0.2, 0.2)).is_err());
        let s = split(1356, (0.6, 0.2, 0.2), 1).unwrap();
        assert_eq!(s.iter().filter(|&&x| x == Split::Val).count(), 271);
    }

    #[test]
    fn crack_appearing_last_gives_one_crack_frame() {
        let mut counts = vec![0u32; 32];
        counts[31] = 7;
        let sample = SequenceSample { origin: Origin { scene: 0, row: 0, col: 0 }, frame_crack_pixels: counts };
        let m = DatasetManifest {
            schema_version: MANIFEST_SCHEMA,
            params: BuildParams::default(),
            scenes: vec![],
            candidates: 1,
            samples: vec![ManifestSample { sample, split: Split::Val }],
            multi_stats: StatsTable::new(),
            mono_stats: StatsTable::new(),
        };
        let mono = deserialize(&m);
        assert_eq!(mono.len(), 32);
        assert_eq!(mono.iter().filter(|(s, _)| s.has_crack()).count(), 1);
        assert!(mono.iter().all(|(_, s)| *s == Split::Val));
    }

    #[test]
    fn statistics_of_small_groups() {
        let s = compute_statistics(&toys(2, 1), |t| t.1 as u64, 10).unwrap();
        assert!((s.crack_image_ratio - 2.0 / 3.0).abs() < 1e-12);
        assert!((s.crack_pixel_ratio - 2.0 / 30.0).abs() < 1e-12);
        assert_eq!(compute_statistics(&toys(0, 4), |_| 0, 10).unwrap().crack_pixel_ratio, 0.0);
        assert!(compute_statistics(&toys(0, 0), |_| 0, 10).is_err());
    }
}
