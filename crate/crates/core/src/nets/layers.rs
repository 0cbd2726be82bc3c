//! Parameterized building blocks shared by both networks.

use std::sync::Arc;

use crackseq_tensor::{kaiming_uniform, trunc_normal, Float, Graph, IndexMap, ParamId, ParamStore, Tensor, Var};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Forward-pass mode. Training mode carries the stream used for dropout.
pub enum Mode {
    Eval,
    Train(ChaCha8Rng),
}

impl Mode {
    pub fn is_train(&self) -> bool {
        matches!(self, Mode::Train(_))
    }
}

/// Registers parameters under a dotted name prefix.
pub struct Builder<'a, F: Float> {
    pub store: &'a mut ParamStore<F>,
    pub rng: &'a mut ChaCha8Rng,
    prefix: String,
}

impl<'a, F: Float> Builder<'a, F> {
    pub fn new(store: &'a mut ParamStore<F>, rng: &'a mut ChaCha8Rng) -> Self {
        Self { store, rng, prefix: String::new() }
    }

    pub fn sub(&mut self, name: &str) -> Builder<'_, F> {
        let prefix = if self.prefix.is_empty() { name.to_string() } else { format!("{}.{name}", self.prefix) };
        Builder { store: self.store, rng: self.rng, prefix }
    }

    pub fn add(&mut self, name: &str, t: Tensor<F>) -> ParamId {
        let full = if self.prefix.is_empty() { name.to_string() } else { format!("{}.{name}", self.prefix) };
        self.store.add(full, t)
    }
}

/// `y = x W^T + b` on the last axis.
#[derive(Clone, Debug)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
}

impl Linear {
    pub fn new<F: Float>(b: &mut Builder<'_, F>, din: usize, dout: usize, bias: bool) -> Self {
        let weight = trunc_normal(&[dout, din], 0.02, b.rng);
        let weight = b.add("weight", weight);
        let bias = bias.then(|| b.add("bias", Tensor::zeros(&[dout])));
        Self { weight, bias }
    }

    pub fn forward<'g, F: Float>(&self, g: &'g Graph<F>, p: &ParamStore<F>, x: &Var<'g, F>) -> Var<'g, F> {
        let w = g.param(p, self.weight);
        let b = self.bias.map(|b| g.param(p, b));
        x.linear(&w, b.as_ref())
    }
}

#[derive(Clone, Debug)]
pub struct LayerNorm {
    pub weight: ParamId,
    pub bias: ParamId,
}

impl LayerNorm {
    pub fn new<F: Float>(b: &mut Builder<'_, F>, dim: usize) -> Self {
        Self { weight: b.add("weight", Tensor::ones(&[dim])), bias: b.add("bias", Tensor::zeros(&[dim])) }
    }

    pub fn forward<'g, F: Float>(&self, g: &'g Graph<F>, p: &ParamStore<F>, x: &Var<'g, F>) -> Var<'g, F> {
        let (w, b) = (g.param(p, self.weight), g.param(p, self.bias));
        x.layer_norm(Some((&w, &b)), 1e-5)
    }
}

/// Stride-1 "same" convolution over `[N, C, D, H, W]` (2D convolutions use `kd = 1`).
#[derive(Clone, Debug)]
pub struct Conv {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
}

impl Conv {
    pub fn new<F: Float>(b: &mut Builder<'_, F>, cin: usize, cout: usize, k: [usize; 3], bias: bool) -> Self {
        let fan_in = cin * k.iter().product::<usize>();
        let weight = kaiming_uniform(&[cout, cin, k[0], k[1], k[2]], fan_in, b.rng);
        let weight = b.add("weight", weight);
        let bias = bias.then(|| {
            let t = kaiming_uniform(&[cout], fan_in, b.rng);
            b.add("bias", t)
        });
        Self { weight, bias }
    }

    pub fn forward<'g, F: Float>(&self, g: &'g Graph<F>, p: &ParamStore<F>, x: &Var<'g, F>) -> Var<'g, F> {
        let w = g.param(p, self.weight);
        let b = self.bias.map(|b| g.param(p, b));
        x.conv3d(&w, b.as_ref())
    }
}

/// Transposed convolution whose stride equals its kernel (`k` in {1, 2} per
/// axis) over `[N, C, D, H, W]`. Weight layout `[Cin, Cout, kd, kh, kw]`.
#[derive(Clone, Debug)]
pub struct ConvTranspose {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
    pub cin: usize,
    pub cout: usize,
    pub k: [usize; 3],
}

impl ConvTranspose {
    pub fn new<F: Float>(b: &mut Builder<'_, F>, cin: usize, cout: usize, k: [usize; 3], bias: bool) -> Self {
        let fan_in = cout * k.iter().product::<usize>();
        let weight = kaiming_uniform(&[cin, cout, k[0], k[1], k[2]], fan_in, b.rng);
        let weight = b.add("weight", weight);
        let bias = bias.then(|| {
            let t = kaiming_uniform(&[cout], fan_in, b.rng);
            b.add("bias", t)
        });
        Self { weight, bias, cin, cout, k }
    }

    pub fn forward<'g, F: Float>(&self, g: &'g Graph<F>, p: &ParamStore<F>, x: &Var<'g, F>) -> Var<'g, F> {
        let s = x.shape().to_vec();
        assert_eq!(s.len(), 5, "transposed convolution expects [N, C, D, H, W]");
        assert_eq!(s[1], self.cin);
        let (n, k) = (s[0], self.k);
        let kv: usize = k.iter().product();
        let pos = s[2] * s[3] * s[4];
        let tokens = x.permute(&[0, 2, 3, 4, 1]).reshape(&[1, n * pos, self.cin]);
        let w = g.param(p, self.weight).reshape(&[1, self.cin, self.cout * kv]);
        let y = tokens.bmm(&w, false);
        let ys = [n, s[2], s[3], s[4], self.cout, k[0], k[1], k[2]];
        let out = [n, self.cout, s[2] * k[0], s[3] * k[1], s[4] * k[2]];
        let map = IndexMap::from_fn(&ys, &out, |o, q| {
            q[0] = o[0];
            q[4] = o[1];
            for i in 0..3 {
                q[1 + i] = o[2 + i] / k[i];
                q[5 + i] = o[2 + i] % k[i];
            }
            true
        });
        let y = y.reshape(&ys).gather(Arc::new(map));
        match self.bias {
            Some(b) => y.add(&g.param(p, b).reshape(&[1, self.cout, 1, 1, 1])),
            None => y,
        }
    }
}

/// Residual block: two 3x3x3 convolutions with non-affine instance norm and
/// leaky ReLU, plus a 1x1x1 projection on the skip path when widths differ.
#[derive(Clone, Debug)]
pub struct ResBlock {
    pub conv1: Conv,
    pub conv2: Conv,
    pub conv3: Option<Conv>,
}

const LEAKY_SLOPE: f64 = 0.01;
const NORM_EPS: f64 = 1e-5;

impl ResBlock {
    pub fn new<F: Float>(b: &mut Builder<'_, F>, cin: usize, cout: usize) -> Self {
        Self {
            conv1: Conv::new(&mut b.sub("conv1.conv"), cin, cout, [3; 3], false),
            conv2: Conv::new(&mut b.sub("conv2.conv"), cout, cout, [3; 3], false),
            conv3: (cin != cout).then(|| Conv::new(&mut b.sub("conv3.conv"), cin, cout, [1; 3], false)),
        }
    }

    pub fn forward<'g, F: Float>(&self, g: &'g Graph<F>, p: &ParamStore<F>, x: &Var<'g, F>) -> Var<'g, F> {
        let slope = F::lit(LEAKY_SLOPE);
        let h = self.conv1.forward(g, p, x).instance_norm(None, NORM_EPS).leaky_relu(slope);
        let h = self.conv2.forward(g, p, &h).instance_norm(None, NORM_EPS);
        let r = match &self.conv3 {
            Some(c) => c.forward(g, p, x).instance_norm(None, NORM_EPS),
            None => x.clone(),
        };
        h.add(&r).leaky_relu(slope)
    }
}

/// Per-channel affine instance normalization.
#[derive(Clone, Debug)]
pub struct InstanceNormAffine {
    pub weight: ParamId,
    pub bias: ParamId,
}

impl InstanceNormAffine {
    pub fn new<F: Float>(b: &mut Builder<'_, F>, c: usize) -> Self {
        Self { weight: b.add("weight", Tensor::ones(&[c])), bias: b.add("bias", Tensor::zeros(&[c])) }
    }

    pub fn forward<'g, F: Float>(&self, g: &'g Graph<F>, p: &ParamStore<F>, x: &Var<'g, F>) -> Var<'g, F> {
        let (w, b) = (g.param(p, self.weight), g.param(p, self.bias));
        x.instance_norm(Some((&w, &b)), 1e-5)
    }
}

/// Inverted dropout; identity in eval mode or at rate 0.
pub fn dropout<'g, F: Float>(x: &Var<'g, F>, rate: f64, mode: &mut Mode) -> Var<'g, F> {
    let Mode::Train(rng) = mode else { return x.clone() };
    if rate <= 0.0 {
        return x.clone();
    }
    let keep = F::lit(1.0 / (1.0 - rate));
    let mask: Vec<F> = (0..x.value().len()).map(|_| if rng.random::<f64>() < rate { F::zero() } else { keep }).collect();
    x.mul(&x.graph().constant(Tensor::from_vec(x.shape(), mask).unwrap()))
}

/// Stochastic depth: drops the whole residual branch per sample (axis 0).
pub fn drop_path<'g, F: Float>(x: &Var<'g, F>, rate: f64, mode: &mut Mode) -> Var<'g, F> {
    let Mode::Train(rng) = mode else { return x.clone() };
    if rate <= 0.0 {
        return x.clone();
    }
    let n = x.shape()[0];
    let keep = F::lit(1.0 / (1.0 - rate));
    let mask: Vec<F> = (0..n).map(|_| if rng.random::<f64>() < rate { F::zero() } else { keep }).collect();
    let mut shape = vec![1; x.shape().len()];
    shape[0] = n;
    x.mul(&x.graph().constant(Tensor::from_vec(&shape, mask).unwrap()))
}
