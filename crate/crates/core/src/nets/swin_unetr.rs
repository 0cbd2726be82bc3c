//! Temporal Swin-UNETR: a shifted-window transformer encoder over
//! `[N, C, T, H, W]` clips with a convolutional decoder producing per-frame logits.

use crackseq_tensor::{Float, Graph, ParamStore, Var};
use rand_chacha::ChaCha8Rng;

use super::layers::{dropout, Builder, Conv, ConvTranspose, Mode, ResBlock};
use super::spec::SwinSpec;
use super::swin::{PatchEmbed, PatchMerging, SwinBlock, SwinStage};
use crate::error::Result;

#[derive(Clone, Debug)]
struct UpBlock {
    up: ConvTranspose,
    block: ResBlock,
}

impl UpBlock {
    fn new<F: Float>(b: &mut Builder<'_, F>, cin: usize, cout: usize) -> Self {
        Self {
            up: ConvTranspose::new(&mut b.sub("transp_conv.conv"), cin, cout, [2; 3], false),
            block: ResBlock::new(&mut b.sub("conv_block"), 2 * cout, cout),
        }
    }

    fn forward<'g, F: Float>(&self, g: &'g Graph<F>, p: &ParamStore<F>, x: &Var<'g, F>, skip: &Var<'g, F>) -> Var<'g, F> {
        let up = self.up.forward(g, p, x);
        self.block.forward(g, p, &Var::concat(&[&up, skip], 1))
    }
}

#[derive(Clone, Debug)]
pub struct SwinUnetr {
    pub spec: SwinSpec,
    pub params: ParamStore<f32>,
    embed: PatchEmbed,
    stages: Vec<SwinStage>,
    /// `encoders[0]` acts on the input; `encoders[i]` on hidden state `i - 1`.
    encoders: Vec<ResBlock>,
    bottleneck: ResBlock,
    /// Deepest first.
    decoders: Vec<UpBlock>,
    head: Conv,
}

impl SwinUnetr {
    pub fn new(spec: &SwinSpec, rng: &mut ChaCha8Rng) -> Result<Self> {
        let (mut model, store) = Self::build_with::<f32>(spec, rng)?;
        model.params = store;
        Ok(model)
    }

    /// Builds the layer graph with parameters of any float type.
    pub fn build_with<F: Float>(spec: &SwinSpec, rng: &mut ChaCha8Rng) -> Result<(SwinUnetr, ParamStore<F>)> {
        spec.validate()?;
        let mut store = ParamStore::<F>::new();
        let mut b = Builder::new(&mut store, rng);
        let c = spec.feature_size;
        let w = [spec.window_size; 3];
        let half = [spec.window_size / 2; 3];
        let total_blocks: usize = spec.depths.iter().sum();
        let mut block_idx = 0;

        let embed = PatchEmbed::new(&mut b.sub("swinViT.patch_embed"), spec.in_channels, c);
        let mut stages = Vec::new();
        for (i, (&depth, &heads)) in spec.depths.iter().zip(&spec.num_heads).enumerate() {
            let dim = spec.stage_dim(i);
            let mut sb = b.sub(&format!("swinViT.layers{}.0", i + 1));
            let blocks = (0..depth)
                .map(|j| {
                    let dp = if total_blocks > 1 {
                        spec.drop_path_rate * block_idx as f64 / (total_blocks - 1) as f64
                    } else {
                        0.0
                    };
                    block_idx += 1;
                    let shift = if j % 2 == 0 { [0; 3] } else { half };
                    SwinBlock::new(
                        &mut sb.sub(&format!("blocks.{j}")),
                        dim,
                        heads,
                        w,
                        shift,
                        spec.mlp_ratio,
                        spec.drop_rate,
                        spec.attn_drop_rate,
                        dp,
                    )
                })
                .collect();
            let merge = PatchMerging::new(&mut sb.sub("downsample"), dim);
            stages.push(SwinStage { blocks, merge });
        }

        let l = spec.num_stages();
        let mut encoders = vec![ResBlock::new(&mut b.sub("encoder1.layer"), spec.in_channels, c)];
        for i in 1..l {
            let dim = spec.stage_dim(i - 1);
            encoders.push(ResBlock::new(&mut b.sub(&format!("encoder{}.layer", i + 1)), dim, dim));
        }
        let deep = spec.stage_dim(l);
        let bottleneck = ResBlock::new(&mut b.sub("encoder10.layer"), deep, deep);
        let mut decoders = Vec::new();
        for i in (0..l).rev() {
            // decoder{i+2} upsamples stage width i+1 to i
            let name = format!("decoder{}", i + 2);
            decoders.push(UpBlock::new(&mut b.sub(&name), spec.stage_dim(i + 1), spec.stage_dim(i)));
        }
        decoders.push(UpBlock::new(&mut b.sub("decoder1"), c, c));
        let head = Conv::new(&mut b.sub("out.conv.conv"), c, spec.out_channels, [1; 3], true);

        let model = SwinUnetr {
            spec: spec.clone(),
            params: ParamStore::new(),
            embed,
            stages,
            encoders,
            bottleneck,
            decoders,
            head,
        };
        Ok((model, store))
    }

    pub fn num_parameters(&self) -> usize {
        self.params.num_scalars()
    }

    /// Logits `[N, out, T, H, W]` for input `[N, in, T, H, W]`, using an
    /// explicit parameter store (of any float type).
    pub fn forward_with<'g, F: Float>(
        &self,
        g: &'g Graph<F>,
        p: &ParamStore<F>,
        x: &Var<'g, F>,
        mode: &mut Mode,
    ) -> Result<Var<'g, F>> {
        self.spec.check_input(x.shape())?;
        let tokens = dropout(&self.embed.forward(g, p, x)?, self.spec.drop_rate, mode);
        let mut hidden = vec![tokens];
        for stage in &self.stages {
            let next = stage.forward(g, p, hidden.last().unwrap(), mode);
            hidden.push(next);
        }
        // Layer-normalised, channels-first copies of every hidden state.
        let hs: Vec<_> = hidden.iter().map(|h| h.layer_norm(None, 1e-5).permute(&[0, 4, 1, 2, 3])).collect();

        let l = self.stages.len();
        let mut skips = vec![self.encoders[0].forward(g, p, x)];
        for i in 1..l {
            skips.push(self.encoders[i].forward(g, p, &hs[i - 1]));
        }
        let mut dec = self.bottleneck.forward(g, p, &hs[l]);
        dec = self.decoders[0].forward(g, p, &dec, &hs[l - 1]);
        for (k, up) in self.decoders[1..].iter().enumerate() {
            dec = up.forward(g, p, &dec, &skips[l - 1 - k]);
        }
        Ok(self.head.forward(g, p, &dec))
    }

    pub fn forward<'g>(&self, g: &'g Graph<f32>, x: &Var<'g, f32>, mode: &mut Mode) -> Result<Var<'g, f32>> {
        self.forward_with(g, &self.params, x, mode)
    }
}
