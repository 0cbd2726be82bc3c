//! Mono-temporal 2D U-Net with padded convolutions.
//!
//! Internally every tensor is kept 5D as `[N, C, 1, H, W]` so the 3D kernels
//! serve both networks; kernels carry a unit depth axis.

use crackseq_tensor::{Float, Graph, ParamStore, Var};
use rand_chacha::ChaCha8Rng;

use super::layers::{Builder, Conv, ConvTranspose, InstanceNormAffine, Mode};
use super::spec::UNetSpec;
use crate::error::Result;

#[derive(Clone, Debug)]
struct DoubleConv {
    conv1: Conv,
    norm1: InstanceNormAffine,
    conv2: Conv,
    norm2: InstanceNormAffine,
}

impl DoubleConv {
    fn new<F: Float>(b: &mut Builder<'_, F>, cin: usize, cout: usize) -> Self {
        Self {
            conv1: Conv::new(&mut b.sub("double_conv.0"), cin, cout, [1, 3, 3], false),
            norm1: InstanceNormAffine::new(&mut b.sub("double_conv.1"), cout),
            conv2: Conv::new(&mut b.sub("double_conv.3"), cout, cout, [1, 3, 3], false),
            norm2: InstanceNormAffine::new(&mut b.sub("double_conv.4"), cout),
        }
    }

    fn forward<'g, F: Float>(&self, g: &'g Graph<F>, p: &ParamStore<F>, x: &Var<'g, F>) -> Var<'g, F> {
        let h = self.norm1.forward(g, p, &self.conv1.forward(g, p, x)).relu();
        self.norm2.forward(g, p, &self.conv2.forward(g, p, &h)).relu()
    }
}

#[derive(Clone, Debug)]
pub struct UNet {
    pub spec: UNetSpec,
    pub params: ParamStore<f32>,
    inc: DoubleConv,
    downs: Vec<DoubleConv>,
    ups: Vec<(ConvTranspose, DoubleConv)>,
    head: Conv,
}

impl UNet {
    pub fn new(spec: &UNetSpec, rng: &mut ChaCha8Rng) -> Result<Self> {
        let (mut model, store) = Self::build_with::<f32>(spec, rng)?;
        model.params = store;
        Ok(model)
    }

    pub fn build_with<F: Float>(spec: &UNetSpec, rng: &mut ChaCha8Rng) -> Result<(UNet, ParamStore<F>)> {
        spec.validate()?;
        let mut store = ParamStore::<F>::new();
        let mut b = Builder::new(&mut store, rng);
        let w = &spec.widths;
        let inc = DoubleConv::new(&mut b.sub("inc"), spec.in_channels, w[0]);
        let downs = (1..w.len())
            .map(|i| DoubleConv::new(&mut b.sub(&format!("down{i}.maxpool_conv.1")), w[i - 1], w[i]))
            .collect();
        let ups = (1..w.len())
            .rev()
            .enumerate()
            .map(|(k, i)| {
                let mut ub = b.sub(&format!("up{}", k + 1));
                let up = ConvTranspose::new(&mut ub.sub("up"), w[i], w[i - 1], [1, 2, 2], true);
                let conv = DoubleConv::new(&mut ub.sub("conv"), 2 * w[i - 1], w[i - 1]);
                (up, conv)
            })
            .collect();
        let head = Conv::new(&mut b.sub("outc.conv"), w[0], spec.out_channels, [1, 1, 1], true);
        let model = UNet { spec: spec.clone(), params: ParamStore::new(), inc, downs, ups, head };
        Ok((model, store))
    }

    pub fn num_parameters(&self) -> usize {
        self.params.num_scalars()
    }

    /// Logits `[N, out, H, W]` for input `[N, in, H, W]`.
    pub fn forward_with<'g, F: Float>(
        &self,
        g: &'g Graph<F>,
        p: &ParamStore<F>,
        x: &Var<'g, F>,
        _mode: &mut Mode,
    ) -> Result<Var<'g, F>> {
        self.spec.check_input(x.shape())?;
        let s = x.shape().to_vec();
        let x = x.reshape(&[s[0], s[1], 1, s[2], s[3]]);
        let mut skips = vec![self.inc.forward(g, p, &x)];
        for down in &self.downs {
            let pooled = skips.last().unwrap().max_pool3d([1, 2, 2]);
            skips.push(down.forward(g, p, &pooled));
        }
        let mut h = skips.pop().unwrap();
        for (up, conv) in &self.ups {
            let skip = skips.pop().unwrap();
            let u = up.forward(g, p, &h);
            h = conv.forward(g, p, &Var::concat(&[&skip, &u], 1));
        }
        let out = self.head.forward(g, p, &h);
        Ok(out.reshape(&[s[0], self.spec.out_channels, s[2], s[3]]))
    }

    pub fn forward<'g>(&self, g: &'g Graph<f32>, x: &Var<'g, f32>, mode: &mut Mode) -> Result<Var<'g, f32>> {
        self.forward_with(g, &self.params, x, mode)
    }
}
