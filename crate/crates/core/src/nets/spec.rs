use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Hyperparameters of the temporal shifted-window encoder-decoder.
///
/// Defaults reproduce the reference configuration at feature size 24.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SwinSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    pub feature_size: usize,
    pub patch_size: usize,
    pub window_size: usize,
    pub depths: Vec<usize>,
    pub num_heads: Vec<usize>,
    pub mlp_ratio: f64,
    pub drop_rate: f64,
    pub attn_drop_rate: f64,
    pub drop_path_rate: f64,
}

impl Default for SwinSpec {
    fn default() -> Self {
        Self {
            in_channels: 3,
            out_channels: 1,
            feature_size: 24,
            patch_size: 2,
            window_size: 7,
            depths: vec![2, 2, 2, 2],
            num_heads: vec![3, 6, 12, 24],
            mlp_ratio: 4.0,
            drop_rate: 0.0,
            attn_drop_rate: 0.0,
            drop_path_rate: 0.0,
        }
    }
}

impl SwinSpec {
    pub fn num_stages(&self) -> usize {
        self.depths.len()
    }

    /// Total spatial/temporal reduction: patch embedding plus one merge per stage.
    pub fn downsample_factor(&self) -> usize {
        self.patch_size * (1 << self.num_stages())
    }

    /// Token width at stage `i` (0 = after patch embedding).
    pub fn stage_dim(&self, i: usize) -> usize {
        self.feature_size << i
    }

    pub fn validate(&self) -> Result<()> {
        if self.feature_size == 0 || self.in_channels == 0 || self.out_channels == 0 {
            return Err(invalid!("feature size and channel counts must be positive"));
        }
        if self.patch_size != 2 {
            return Err(invalid!("patch size must be 2, got {}", self.patch_size));
        }
        if self.window_size == 0 {
            return Err(invalid!("window size must be positive"));
        }
        if self.depths.is_empty() || self.depths.len() != self.num_heads.len() {
            return Err(invalid!("depths {:?} and heads {:?} must be non-empty and equally long", self.depths, self.num_heads));
        }
        for (i, &h) in self.num_heads.iter().enumerate() {
            let dim = self.stage_dim(i);
            if h == 0 || dim % h != 0 {
                return Err(invalid!("{h} heads do not divide stage {i} width {dim}"));
            }
        }
        if !(self.mlp_ratio > 0.0) {
            return Err(invalid!("mlp ratio must be positive"));
        }
        for (name, p) in [("drop", self.drop_rate), ("attn drop", self.attn_drop_rate), ("drop path", self.drop_path_rate)] {
            if !(0.0..1.0).contains(&p) {
                return Err(invalid!("{name} rate {p} outside [0, 1)"));
            }
        }
        Ok(())
    }

    /// Checks a `[N, C, T, H, W]` input shape against the architecture.
    pub fn check_input(&self, shape: &[usize]) -> Result<()> {
        if shape.len() != 5 || shape[1] != self.in_channels {
            return Err(invalid!("expected [N, {}, T, H, W] input, got {shape:?}", self.in_channels));
        }
        let f = self.downsample_factor();
        for &d in &shape[2..] {
            if d < f || d % f != 0 {
                return Err(invalid!(
                    "input extents {:?} must be multiples of {f} (minimum {f}x{f}x{f})",
                    &shape[2..]
                ));
            }
        }
        Ok(())
    }
}

/// Hyperparameters of the 2D padded U-Net.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct UNetSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    /// Encoder widths from full resolution down to the bottleneck.
    pub widths: Vec<usize>,
}

impl Default for UNetSpec {
    fn default() -> Self {
        Self { in_channels: 3, out_channels: 1, widths: vec![64, 128, 256, 512, 1024] }
    }
}

impl UNetSpec {
    pub fn downsample_factor(&self) -> usize {
        1 << (self.widths.len() - 1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.widths.len() < 2 || self.widths.contains(&0) {
            return Err(invalid!("u-net needs at least two positive widths, got {:?}", self.widths));
        }
        if self.in_channels == 0 || self.out_channels == 0 {
            return Err(invalid!("channel counts must be positive"));
        }
        Ok(())
    }

    pub fn check_input(&self, shape: &[usize]) -> Result<()> {
        if shape.len() != 4 || shape[1] != self.in_channels {
            return Err(invalid!("expected [N, {}, H, W] input, got {shape:?}", self.in_channels));
        }
        let f = self.downsample_factor();
        if shape[2..].iter().any(|&d| d == 0 || d % f != 0) {
            return Err(invalid!("input extents {:?} must be multiples of {f}", &shape[2..]));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "arch", rename_all = "snake_case")]
pub enum ModelSpec {
    SwinUnetr(SwinSpec),
    Unet(UNetSpec),
}

impl ModelSpec {
    /// True for the model consuming whole sequences.
    pub fn is_multi_temporal(&self) -> bool {
        matches!(self, ModelSpec::SwinUnetr(_))
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ModelSpec::SwinUnetr(s) => s.validate(),
            ModelSpec::Unet(s) => s.validate(),
        }
    }
}
