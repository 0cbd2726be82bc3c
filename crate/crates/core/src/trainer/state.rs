//! Early stopping and plateau learning-rate schedule.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss_crack: f64,
    pub val_iou: f64,
    /// Learning rate after this epoch's scheduler update.
    pub lr: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainState {
    /// Completed epochs; the next epoch is `epoch + 1`.
    pub epoch: usize,
    pub best_iou: Option<f64>,
    pub best_epoch: usize,
    pub epochs_since_improvement: usize,
    pub lr: f64,
    pub best_val_loss: Option<f64>,
    pub epochs_since_loss_improvement: usize,
    pub history: Vec<EpochRecord>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Decision {
    /// New best validation IoU: checkpoint now.
    pub improved: bool,
    pub lr_reduced: bool,
    pub stop: bool,
}

impl TrainState {
    pub fn new(initial_lr: f64) -> Self {
        Self {
            epoch: 0,
            best_iou: None,
            best_epoch: 0,
            epochs_since_improvement: 0,
            lr: initial_lr,
            best_val_loss: None,
            epochs_since_loss_improvement: 0,
            history: Vec::new(),
        }
    }

    /// Records one finished epoch. IoU must strictly exceed the best so far to
    /// count as an improvement, the loss must strictly drop; NaN never does.
    pub fn observe(&mut self, train_loss: f64, val_loss_crack: f64, val_iou: f64, cfg: &TrainConfig) -> Decision {
        self.epoch += 1;
        let improved = !val_iou.is_nan() && self.best_iou.is_none_or(|b| val_iou > b);
        if improved {
            self.best_iou = Some(val_iou);
            self.best_epoch = self.epoch;
            self.epochs_since_improvement = 0;
        } else {
            self.epochs_since_improvement += 1;
        }
        let mut lr_reduced = false;
        if !val_loss_crack.is_nan() && self.best_val_loss.is_none_or(|b| val_loss_crack < b) {
            self.best_val_loss = Some(val_loss_crack);
            self.epochs_since_loss_improvement = 0;
        } else {
            self.epochs_since_loss_improvement += 1;
            if self.epochs_since_loss_improvement >= cfg.lr_patience {
                self.lr *= cfg.lr_factor;
                self.epochs_since_loss_improvement = 0;
                lr_reduced = true;
            }
        }
        self.history.push(EpochRecord { epoch: self.epoch, train_loss, val_loss_crack, val_iou, lr: self.lr });
        let stop = self.epochs_since_improvement >= cfg.early_stop_patience || self.epoch >= cfg.max_epochs;
        Decision { improved, lr_reduced, stop }
    }
}

pub const HISTORY_HEADER: [&str; 5] = ["epoch", "train_loss", "val_loss_crack", "val_iou", "lr"];

pub fn write_history(path: &Path, history: &[EpochRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(HISTORY_HEADER)?;
    for r in history {
        w.write_record([
            r.epoch.to_string(),
            r.train_loss.to_string(),
            r.val_loss_crack.to_string(),
            r.val_iou.to_string(),
            r.lr.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_history(path: &Path) -> Result<Vec<EpochRecord>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| Ok(row?)).collect()
}

/// Writes `state.json` next to a failed run for post-mortem inspection.
pub fn dump_state(dir: &Path, state: &TrainState, reason: &str) -> Result<()> {
    let path = dir.join("state.json");
    let body = serde_json::json!({ "reason": reason, "state": state });
    let mut f = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
    f.write_all(serde_json::to_string_pretty(&body)?.as_bytes()).map_err(|e| Error::io(&path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_epoch_always_improves() {
        let cfg = TrainConfig::default();
        let mut s = TrainState::new(1e-4);
        let d = s.observe(1.0, 0.5, 0.0, &cfg);
        assert!(d.improved && !d.stop);
        assert_eq!((s.best_epoch, s.best_iou), (1, Some(0.0)));
        assert!(!s.observe(1.0, 0.5, f64::NAN, &cfg).improved);
    }

    #[test]
    fn history_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let rows = vec![
            EpochRecord { epoch: 1, train_loss: 0.9, val_loss_crack: 0.7, val_iou: 12.5, lr: 1e-4 },
            EpochRecord { epoch: 2, train_loss: 0.8, val_loss_crack: 0.6, val_iou: 20.0, lr: 1e-5 },
        ];
        let p = dir.path().join("history.csv");
        write_history(&p, &rows).unwrap();
        assert!(std::fs::read_to_string(&p).unwrap().starts_with("epoch,train_loss,val_loss_crack,val_iou,lr\n"));
        assert_eq!(read_history(&p).unwrap(), rows);
    }
}
