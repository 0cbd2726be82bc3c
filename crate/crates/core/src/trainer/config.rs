use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Photometric and geometric augmentation, each transform drawn with `p`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentPolicy {
    pub p: f64,
    /// Additive brightness offset range, in gray levels.
    pub brightness: f64,
    /// Contrast factor drawn from `[1 - contrast, 1 + contrast]`.
    pub contrast: f64,
    /// Gaussian blur sigma range, in pixels.
    pub blur_sigma: (f64, f64),
}

impl Default for AugmentPolicy {
    fn default() -> Self {
        Self { p: 0.5, brightness: 25.0, contrast: 0.2, blur_sigma: (0.5, 1.2) }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch_size: usize,
    /// Samples per autodiff graph; gradients are accumulated up to `batch_size`.
    pub micro_batch: usize,
    pub early_stop_patience: usize,
    pub lr_patience: usize,
    pub lr_factor: f64,
    pub initial_lr: f64,
    pub max_epochs: usize,
    pub augmentation: bool,
    pub augment: AugmentPolicy,
    pub threshold: f64,
    pub seed: u64,
    pub workers: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 4,
            micro_batch: 4,
            early_stop_patience: 20,
            lr_patience: 10,
            lr_factor: 0.1,
            initial_lr: 1e-4,
            max_epochs: 500,
            augmentation: false,
            augment: AugmentPolicy::default(),
            threshold: 0.5,
            seed: 0,
            workers: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.micro_batch == 0 {
            return Err(invalid!("batch sizes must be at least 1"));
        }
        if self.early_stop_patience == 0 || self.lr_patience == 0 {
            return Err(invalid!("patience values must be at least 1"));
        }
        if !(self.lr_factor > 0.0 && self.lr_factor < 1.0) {
            return Err(invalid!("lr factor must lie in (0, 1), got {}", self.lr_factor));
        }
        if !(self.initial_lr > 0.0 && self.initial_lr.is_finite()) {
            return Err(invalid!("initial lr must be positive"));
        }
        if self.max_epochs == 0 {
            return Err(invalid!("max_epochs must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.augment.p) {
            return Err(invalid!("augmentation probability must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// The five training set-ups compared in the study.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Experiment {
    #[serde(rename = "BL-mono")]
    BaselineMono,
    #[serde(rename = "BL-multi")]
    BaselineMulti,
    /// Mono-temporal model on train/val subsampled to the multi-temporal counts.
    #[serde(rename = "1")]
    Downsampled,
    /// Multi-temporal model with augmentation.
    #[serde(rename = "2")]
    AugmentedMulti,
    /// Mono-temporal model with augmentation.
    #[serde(rename = "3")]
    AugmentedMono,
}

impl Experiment {
    pub const ALL: [Experiment; 5] =
        [Self::BaselineMono, Self::BaselineMulti, Self::Downsampled, Self::AugmentedMulti, Self::AugmentedMono];

    pub fn tag(self) -> &'static str {
        match self {
            Self::BaselineMono => "BL-mono",
            Self::BaselineMulti => "BL-multi",
            Self::Downsampled => "1",
            Self::AugmentedMulti => "2",
            Self::AugmentedMono => "3",
        }
    }

    pub fn multi_temporal(self) -> bool {
        matches!(self, Self::BaselineMulti | Self::AugmentedMulti)
    }

    pub fn downsampled(self) -> bool {
        self == Self::Downsampled
    }

    pub fn augmented(self) -> bool {
        matches!(self, Self::AugmentedMulti | Self::AugmentedMono)
    }

    /// Table column labels: experiment, model, DS, DA.
    pub fn columns(self) -> [&'static str; 4] {
        let exp = match self {
            Self::BaselineMono | Self::BaselineMulti => "BL",
            Self::Downsampled => "1",
            Self::AugmentedMulti => "2",
            Self::AugmentedMono => "3",
        };
        let model = if self.multi_temporal() { "Swin UNETR" } else { "U-Net" };
        let yes = |b: bool| if b { "yes" } else { "no" };
        [exp, model, yes(self.downsampled()), yes(self.augmented())]
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Experiment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL.into_iter().find(|e| e.tag().eq_ignore_ascii_case(s)).ok_or_else(|| {
            let tags: Vec<_> = Self::ALL.iter().map(|e| e.tag()).collect();
            invalid!("unknown experiment '{s}'; valid tags: {}", tags.join(", "))
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tags_parse_and_reject() {
        for e in Experiment::ALL {
            assert_eq!(e.tag().parse::<Experiment>().unwrap(), e);
        }
        let err = "9".parse::<Experiment>().unwrap_err().to_string();
        assert!(err.contains("BL-multi") && err.contains("3"));
        assert!(Experiment::AugmentedMulti.multi_temporal() && Experiment::AugmentedMulti.augmented());
        assert!(!Experiment::BaselineMulti.augmented());
    }

    #[test]
    fn config_checks() {
        TrainConfig::default().validate().unwrap();
        assert!(TrainConfig { lr_factor: 1.0, ..Default::default() }.validate().is_err());
        assert!(TrainConfig { early_stop_patience: 0, ..Default::default() }.validate().is_err());
    }
}
