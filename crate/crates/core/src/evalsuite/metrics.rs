//! Pixel confusion counts, crack-class metrics and temporal consistency.

use std::ops::{Add, AddAssign};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::imaging::Mask;

/// Crack is the positive class.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    /// Counts from flat binary buffers.
    pub fn from_slices(pred: &[u8], target: &[u8]) -> Self {
        let mut c = [0u64; 4];
        for (&p, &t) in pred.iter().zip(target) {
            c[((p != 0) as usize) << 1 | (t != 0) as usize] += 1;
        }
        Self { tn: c[0], fn_: c[1], fp: c[2], tp: c[3] }
    }
}

impl Add for ConfusionCounts {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self { tp: self.tp + o.tp, fp: self.fp + o.fp, fn_: self.fn_ + o.fn_, tn: self.tn + o.tn }
    }
}

impl AddAssign for ConfusionCounts {
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

impl std::iter::Sum for ConfusionCounts {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(Self::default(), |a, b| a + b)
    }
}

pub fn confusion(pred: &Mask, target: &Mask) -> Result<ConfusionCounts> {
    if (pred.width, pred.height) != (target.width, target.height) {
        return Err(invalid!(
            "prediction {}x{} and target {}x{} differ",
            pred.width,
            pred.height,
            target.width,
            target.height
        ));
    }
    Ok(ConfusionCounts::from_slices(&pred.data, &target.data))
}

/// IoU, precision, recall and F1 in percent.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub iou: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

pub fn metrics(c: &ConfusionCounts) -> Metrics {
    let perfect = c.fp == 0 && c.fn_ == 0;
    let ratio = |num: u64, den: u64| {
        if den == 0 {
            if perfect {
                100.0
            } else {
                0.0
            }
        } else {
            100.0 * num as f64 / den as f64
        }
    };
    let iou = ratio(c.tp, c.tp + c.fp + c.fn_);
    let precision = ratio(c.tp, c.tp + c.fp);
    let recall = ratio(c.tp, c.tp + c.fn_);
    let f1 = if precision + recall > 0.0 { 2.0 * precision * recall / (precision + recall) } else { 0.0 };
    Metrics { iou, precision, recall, f1 }
}

/// `1 - mean_t d_t`, where `d_t` is the fraction of pixels with
/// `target_t == target_{t+1}` on which `pred_t != pred_{t+1}`. Steps without
/// such pixels count as fully stable.
pub fn temporal_consistency(preds: &[Mask], targets: &[Mask]) -> Result<f64> {
    if preds.len() != targets.len() {
        return Err(invalid!("{} predictions for {} targets", preds.len(), targets.len()));
    }
    if preds.len() < 2 {
        return Err(invalid!("temporal consistency needs at least 2 frames"));
    }
    let (w, h) = (targets[0].width, targets[0].height);
    if preds.iter().chain(targets).any(|m| (m.width, m.height) != (w, h)) {
        return Err(invalid!("masks differ in size"));
    }
    let mut total = 0.0;
    for t in 0..preds.len() - 1 {
        let (mut stable, mut changed) = (0u64, 0u64);
        for i in 0..w * h {
            if targets[t].data[i] == targets[t + 1].data[i] {
                stable += 1;
                changed += (preds[t].data[i] != preds[t + 1].data[i]) as u64;
            }
        }
        total += if stable == 0 { 0.0 } else { changed as f64 / stable as f64 };
    }
    Ok(1.0 - total / (preds.len() - 1) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_case() {
        let m = metrics(&ConfusionCounts { tp: 2, fp: 1, fn_: 1, tn: 10 });
        assert_eq!(m.iou, 50.0);
        for v in [m.precision, m.recall, m.f1] {
            assert!((v - 200.0 / 3.0).abs() < 1e-9);
        }
        let perfect = metrics(&ConfusionCounts { tn: 5, ..Default::default() });
        assert_eq!((perfect.iou, perfect.precision, perfect.recall, perfect.f1), (100.0, 100.0, 100.0, 100.0));
        let missed = metrics(&ConfusionCounts { fn_: 3, tn: 5, ..Default::default() });
        assert_eq!((missed.iou, missed.precision, missed.recall), (0.0, 0.0, 0.0));
    }

    #[test]
    fn inverse_prediction() {
        let mut t = Mask::new(4, 4);
        t.set(1, 1, true);
        let inv = Mask::from_raw(4, 4, t.data.iter().map(|v| 1 - v).collect()).unwrap();
        let c = confusion(&inv, &t).unwrap();
        assert_eq!((c.tp, c.tn, c.fp, c.fn_), (0, 0, 15, 1));
        assert!(confusion(&Mask::new(3, 4), &t).is_err());
    }

    #[test]
    fn consistency_extremes() {
        let z = Mask::new(3, 3);
        let o = Mask::from_raw(3, 3, vec![1; 9]).unwrap();
        assert_eq!(temporal_consistency(&[z.clone(), z.clone(), z.clone()], &[z.clone(), z.clone(), z.clone()]).unwrap(), 1.0);
        assert_eq!(temporal_consistency(&[z.clone(), o.clone(), z.clone()], &[z.clone(), z.clone(), z.clone()]).unwrap(), 0.0);
        assert!(temporal_consistency(&[z.clone()], &[z.clone()]).is_err());
    }
}
