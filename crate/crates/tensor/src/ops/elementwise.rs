use crate::float::Float;
use crate::graph::Var;
use crate::tensor::{numel, strides, Tensor};

pub(crate) fn broadcast_shape(a: &[usize], b: &[usize]) -> Vec<usize> {
    let n = a.len().max(b.len());
    (0..n)
        .map(|i| {
            let da = if i + a.len() >= n { a[i + a.len() - n] } else { 1 };
            let db = if i + b.len() >= n { b[i + b.len() - n] } else { 1 };
            match (da, db) {
                (x, y) if x == y => x,
                (1, y) => y,
                (x, 1) => x,
                _ => panic!("shapes {a:?} and {b:?} do not broadcast"),
            }
        })
        .collect()
}

/// Strides of `shape` laid over `out` (right aligned), zero on broadcast axes.
fn aligned_strides(shape: &[usize], out: &[usize]) -> Vec<usize> {
    let st = strides(shape);
    let off = out.len() - shape.len();
    (0..out.len())
        .map(|i| if i < off || shape[i - off] == 1 { 0 } else { st[i - off] })
        .collect()
}

/// Calls `f(out_flat, offset_a, offset_b)` for every element of `out`.
fn for_each_pair(out: &[usize], sa: &[usize], sb: &[usize], mut f: impl FnMut(usize, usize, usize)) {
    let total = numel(out);
    if total == 0 {
        return;
    }
    let nd = out.len();
    if nd == 0 {
        f(0, 0, 0);
        return;
    }
    let inner = out[nd - 1];
    let (ia, ib) = (sa[nd - 1], sb[nd - 1]);
    let mut idx = vec![0usize; nd];
    let (mut oa, mut ob) = (0usize, 0usize);
    let mut flat = 0;
    while flat < total {
        for j in 0..inner {
            f(flat + j, oa + j * ia, ob + j * ib);
        }
        flat += inner;
        // advance outer counters
        let mut d = nd - 1;
        while d > 0 {
            d -= 1;
            idx[d] += 1;
            oa += sa[d];
            ob += sb[d];
            if idx[d] < out[d] {
                break;
            }
            oa -= sa[d] * out[d];
            ob -= sb[d] * out[d];
            idx[d] = 0;
        }
    }
}

pub(crate) fn binary_map<F: Float>(a: &Tensor<F>, b: &Tensor<F>, f: impl Fn(F, F) -> F) -> Tensor<F> {
    if a.shape() == b.shape() {
        let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
        return Tensor::from_vec(a.shape(), data).unwrap();
    }
    let out = broadcast_shape(a.shape(), b.shape());
    let sa = aligned_strides(a.shape(), &out);
    let sb = aligned_strides(b.shape(), &out);
    let mut data = vec![F::zero(); numel(&out)];
    let (ad, bd) = (a.data(), b.data());
    for_each_pair(&out, &sa, &sb, |o, i, j| data[o] = f(ad[i], bd[j]));
    Tensor::from_vec(&out, data).unwrap()
}

/// Sums `g` (of a broadcast shape) down to `shape`.
pub(crate) fn reduce_to<F: Float>(g: &Tensor<F>, shape: &[usize]) -> Tensor<F> {
    if g.shape() == shape {
        return g.clone();
    }
    let out = g.shape();
    let st = aligned_strides(shape, out);
    let zero = vec![0; out.len()];
    let mut acc = vec![F::zero(); numel(shape)];
    let gd = g.data();
    for_each_pair(out, &st, &zero, |o, i, _| acc[i] += gd[o]);
    Tensor::from_vec(shape, acc).unwrap()
}

/// `g` repeated along broadcast axes up to `shape`.
pub(crate) fn broadcast_to<F: Float>(g: &Tensor<F>, shape: &[usize]) -> Tensor<F> {
    binary_map(&Tensor::zeros(shape), g, |_, v| v)
}

impl<'g, F: Float> Var<'g, F> {
    pub fn add(&self, other: &Var<'g, F>) -> Var<'g, F> {
        let (sa, sb) = (self.shape().to_vec(), other.shape().to_vec());
        let out = binary_map(self.value(), other.value(), |x, y| x + y);
        self.graph.record(out, &[self, other], move |g, need| {
            vec![need[0].then(|| reduce_to(g, &sa)), need[1].then(|| reduce_to(g, &sb))]
        })
    }

    pub fn sub(&self, other: &Var<'g, F>) -> Var<'g, F> {
        let (sa, sb) = (self.shape().to_vec(), other.shape().to_vec());
        let out = binary_map(self.value(), other.value(), |x, y| x - y);
        self.graph.record(out, &[self, other], move |g, need| {
            vec![
                need[0].then(|| reduce_to(g, &sa)),
                need[1].then(|| reduce_to(&g.map(|v| -v), &sb)),
            ]
        })
    }

    pub fn mul(&self, other: &Var<'g, F>) -> Var<'g, F> {
        let (a, b) = (self.value_arc(), other.value_arc());
        let out = binary_map(&a, &b, |x, y| x * y);
        self.graph.record(out, &[self, other], move |g, need| {
            vec![
                need[0].then(|| reduce_to(&binary_map(g, &b, |u, v| u * v), a.shape())),
                need[1].then(|| reduce_to(&binary_map(g, &a, |u, v| u * v), b.shape())),
            ]
        })
    }

    pub fn div(&self, other: &Var<'g, F>) -> Var<'g, F> {
        let (a, b) = (self.value_arc(), other.value_arc());
        let out = binary_map(&a, &b, |x, y| x / y);
        self.graph.record(out, &[self, other], move |g, need| {
            vec![
                need[0].then(|| reduce_to(&binary_map(g, &b, |u, v| u / v), a.shape())),
                need[1].then(|| {
                    let ab = binary_map(&a, &b, |x, y| x / (y * y));
                    reduce_to(&binary_map(g, &ab, |u, v| -u * v), b.shape())
                }),
            ]
        })
    }

    pub fn scale(&self, s: F) -> Var<'g, F> {
        let out = self.value().map(|v| v * s);
        self.graph.record(out, &[self], move |g, _| vec![Some(g.map(|v| v * s))])
    }

    pub fn add_scalar(&self, s: F) -> Var<'g, F> {
        let out = self.value().map(|v| v + s);
        self.graph.record(out, &[self], move |g, _| vec![Some(g.clone())])
    }

    pub fn neg(&self) -> Var<'g, F> {
        self.scale(-F::one())
    }

    /// Elementwise `f` with derivative `df(x, y)` expressed through input and output.
    fn unary(&self, f: impl Fn(F) -> F, df: impl Fn(F, F) -> F + 'static) -> Var<'g, F> {
        let x = self.value_arc();
        let y = std::sync::Arc::new(x.map(f));
        let yc = y.clone();
        let out = (*y).clone();
        self.graph.record(out, &[self], move |g, _| {
            let data = g
                .data()
                .iter()
                .zip(x.data().iter().zip(yc.data()))
                .map(|(&gv, (&xv, &yv))| gv * df(xv, yv))
                .collect();
            vec![Some(Tensor::from_vec(g.shape(), data).unwrap())]
        })
    }

    pub fn relu(&self) -> Var<'g, F> {
        self.unary(|x| x.max(F::zero()), |x, _| if x > F::zero() { F::one() } else { F::zero() })
    }

    pub fn leaky_relu(&self, slope: F) -> Var<'g, F> {
        self.unary(
            move |x| if x > F::zero() { x } else { x * slope },
            move |x, _| if x > F::zero() { F::one() } else { slope },
        )
    }

    pub fn sigmoid(&self) -> Var<'g, F> {
        self.unary(sigmoid, |_, y| y * (F::one() - y))
    }

    pub fn exp(&self) -> Var<'g, F> {
        self.unary(|x| x.exp(), |_, y| y)
    }

    pub fn ln(&self) -> Var<'g, F> {
        self.unary(|x| x.ln(), |x, _| F::one() / x)
    }

    /// Exact (erf-based) GELU.
    pub fn gelu(&self) -> Var<'g, F> {
        let half = F::lit(0.5);
        let inv_sqrt2 = F::lit(std::f64::consts::FRAC_1_SQRT_2);
        let inv_sqrt_2pi = F::lit(0.398_942_280_401_432_7);
        self.unary(
            move |x| half * x * (F::one() + (x * inv_sqrt2).erf()),
            move |x, _| {
                half * (F::one() + (x * inv_sqrt2).erf()) + x * inv_sqrt_2pi * (-half * x * x).exp()
            },
        )
    }

    pub fn sum_all(&self) -> Var<'g, F> {
        let shape = self.shape().to_vec();
        let out = Tensor::scalar(self.value().sum());
        self.graph.record(out, &[self], move |g, _| vec![Some(Tensor::full(&shape, g.item()))])
    }

    pub fn mean_all(&self) -> Var<'g, F> {
        let n = F::from_usize(self.value().len()).unwrap();
        self.sum_all().scale(F::one() / n)
    }

    /// Sum over the given axes, keeping them as size-1 dimensions.
    pub fn sum_axes_keepdim(&self, axes: &[usize]) -> Var<'g, F> {
        let shape = self.shape().to_vec();
        let mut target = shape.clone();
        for &a in axes {
            target[a] = 1;
        }
        let out = reduce_to(self.value(), &target);
        self.graph.record(out, &[self], move |g, _| vec![Some(broadcast_to(g, &shape))])
    }
}

pub(crate) fn sigmoid<F: Float>(x: F) -> F {
    if x >= F::zero() {
        F::one() / (F::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (F::one() + e)
    }
}
