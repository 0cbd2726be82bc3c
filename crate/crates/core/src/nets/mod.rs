//! Segmentation networks: the multi-temporal Swin-UNETR and the mono-temporal U-Net.

pub mod checkpoint;
pub mod layers;
pub mod spec;
pub mod swin;
pub mod swin_unetr;
pub mod unet;

use crackseq_tensor::{Graph, ParamStore, Var};

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use layers::Mode;
pub use spec::{ModelSpec, SwinSpec, UNetSpec};
pub use swin_unetr::SwinUnetr;
pub use unet::UNet;

use crate::error::Result;
use crate::seeds;

#[derive(Clone, Debug)]
pub enum Model {
    Swin(SwinUnetr),
    Unet(UNet),
}

impl Model {
    /// Freshly initialised network; identical seeds give identical weights.
    pub fn new(spec: &ModelSpec, seed: u64) -> Result<Self> {
        let mut rng = seeds::rng(seed);
        Ok(match spec {
            ModelSpec::SwinUnetr(s) => Model::Swin(SwinUnetr::new(s, &mut rng)?),
            ModelSpec::Unet(s) => Model::Unet(UNet::new(s, &mut rng)?),
        })
    }

    pub fn spec(&self) -> ModelSpec {
        match self {
            Model::Swin(m) => ModelSpec::SwinUnetr(m.spec.clone()),
            Model::Unet(m) => ModelSpec::Unet(m.spec.clone()),
        }
    }

    pub fn is_multi_temporal(&self) -> bool {
        matches!(self, Model::Swin(_))
    }

    pub fn params(&self) -> &ParamStore<f32> {
        match self {
            Model::Swin(m) => &m.params,
            Model::Unet(m) => &m.params,
        }
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<f32> {
        match self {
            Model::Swin(m) => &mut m.params,
            Model::Unet(m) => &mut m.params,
        }
    }

    /// Spatial extents must be multiples of this (and, for clips, the length too).
    pub fn downsample_factor(&self) -> usize {
        match self {
            Model::Swin(m) => m.spec.downsample_factor(),
            Model::Unet(m) => m.spec.downsample_factor(),
        }
    }

    /// Logits: `[N, 1, T, H, W]` from clips for the Swin-UNETR, `[N, 1, H, W]`
    /// from single frames for the U-Net.
    pub fn forward<'g>(&self, g: &'g Graph<f32>, x: &Var<'g, f32>, mode: &mut Mode) -> Result<Var<'g, f32>> {
        match self {
            Model::Swin(m) => m.forward(g, x, mode),
            Model::Unet(m) => m.forward(g, x, mode),
        }
    }
}

/// Number of trainable scalars.
pub fn count_parameters(model: &Model) -> usize {
    model.params().num_scalars()
}
