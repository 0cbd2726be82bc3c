//! False positives on annotated non-crack structures.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::datapipe::dilate;
use crate::error::{data_err, invalid, Result};
use crate::imaging::Mask;
use crate::synthgen::{DistractorKind, FrameSequence, Provenance};

pub const DEFAULT_DILATION: usize = 2;
pub const DEFAULT_HIT_FRACTION: f64 = 0.1;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tally {
    pub hits: usize,
    pub total: usize,
}

impl Tally {
    pub fn rate(&self) -> Option<f64> {
        (self.total > 0).then(|| self.hits as f64 / self.total as f64)
    }
}

impl std::ops::AddAssign for Tally {
    fn add_assign(&mut self, o: Self) {
        self.hits += o.hits;
        self.total += o.total;
    }
}

pub type Tallies = BTreeMap<DistractorKind, Tally>;

pub fn merge_tallies(into: &mut Tallies, other: &Tallies) {
    for (k, t) in other {
        *into.entry(*k).or_default() += *t;
    }
}

/// A footprint is hit when at least `hit_fraction` of it, dilated by
/// `dilation` px (3x3 steps), is predicted crack. Every kind in
/// [`DistractorKind::ALL`] appears in the result.
pub fn distractor_report(pred: &Mask, footprints: &[(DistractorKind, Mask)], dilation: usize, hit_fraction: f64) -> Result<Tallies> {
    let mut out: Tallies = DistractorKind::ALL.iter().map(|&k| (k, Tally::default())).collect();
    for (kind, fp) in footprints {
        if (fp.width, fp.height) != (pred.width, pred.height) {
            return Err(invalid!("footprint {}x{} does not match prediction {}x{}", fp.width, fp.height, pred.width, pred.height));
        }
        let zone = dilate(fp, dilation);
        let area = zone.count();
        if area == 0 {
            continue;
        }
        let covered = zone.data.iter().zip(&pred.data).filter(|(&z, &p)| z != 0 && p != 0).count();
        let t = out.get_mut(kind).expect("all kinds present");
        t.total += 1;
        t.hits += (covered as f64 >= hit_fraction * area as f64) as usize;
    }
    Ok(out)
}

/// Predicted pixels that the ground truth marks as background. Tallies are
/// taken on this mask so that correctly found cracks running up to a
/// distractor do not count against it.
pub fn false_positive_mask(pred: &Mask, target: &Mask) -> Result<Mask> {
    if (pred.width, pred.height) != (target.width, target.height) {
        return Err(invalid!("prediction {}x{} does not match target {}x{}", pred.width, pred.height, target.width, target.height));
    }
    let data = pred.data.iter().zip(&target.data).map(|(&p, &t)| (p != 0 && t == 0) as u8).collect();
    Ok(Mask { width: pred.width, height: pred.height, data })
}

/// Tallies for a whole scene. Real scenes must come with annotations.
pub fn scene_distractor_report(pred: &Mask, seq: &FrameSequence, dilation: usize, hit_fraction: f64) -> Result<Tallies> {
    if seq.distractors.is_empty() && matches!(seq.provenance, Provenance::Real(_)) {
        return Err(data_err!("scene has no distractor annotations (distractors.json)"));
    }
    distractor_report(pred, &seq.distractors.footprints(pred.width, pred.height), dilation, hit_fraction)
}
