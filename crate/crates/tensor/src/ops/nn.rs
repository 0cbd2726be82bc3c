use crate::float::{matmul_into, Float, MatRef};
use crate::graph::Var;
use crate::ops::direct::{conv_taps, conv_taps_weight_grad};
use crate::ops::elementwise::sigmoid;
use crate::tensor::{numel, Tensor};

/// Normalizes each contiguous row of length `row`; returns `(xhat, rstd)`.
fn normalize_rows<F: Float>(x: &[F], row: usize, eps: F) -> (Vec<F>, Vec<F>) {
    let n = F::from_usize(row).unwrap();
    let mut xhat = vec![F::zero(); x.len()];
    let mut rstd = Vec::with_capacity(x.len() / row.max(1));
    for (src, dst) in x.chunks(row).zip(xhat.chunks_mut(row)) {
        let mean = src.iter().copied().sum::<F>() / n;
        let var = src.iter().map(|&v| (v - mean) * (v - mean)).sum::<F>() / n;
        let r = F::one() / (var + eps).sqrt();
        for (d, &s) in dst.iter_mut().zip(src) {
            *d = (s - mean) * r;
        }
        rstd.push(r);
    }
    (xhat, rstd)
}

/// Gradient w.r.t. the un-normalized rows given the gradient w.r.t. `xhat`.
fn normalize_rows_backward<F: Float>(gxhat: &[F], xhat: &[F], rstd: &[F], row: usize) -> Vec<F> {
    let n = F::from_usize(row).unwrap();
    let mut gx = vec![F::zero(); gxhat.len()];
    for (((g, xh), dst), &r) in gxhat.chunks(row).zip(xhat.chunks(row)).zip(gx.chunks_mut(row)).zip(rstd) {
        let mg = g.iter().copied().sum::<F>() / n;
        let mgx = g.iter().zip(xh).map(|(&a, &b)| a * b).sum::<F>() / n;
        for ((d, &gv), &xv) in dst.iter_mut().zip(g).zip(xh) {
            *d = r * (gv - mg - xv * mgx);
        }
    }
    gx
}

/// Re-lays a `[cout, cin, kv]` weight out tap-major: `[kv, cout, cin]`, or
/// `[kv, cin, cout]` when `transpose` is set.
fn tap_major<F: Float>(w: &[F], cout: usize, cin: usize, kv: usize, transpose: bool) -> Vec<F> {
    let mut out = vec![F::zero(); w.len()];
    for o in 0..cout {
        for i in 0..cin {
            for t in 0..kv {
                let dst = if transpose { (t * cin + i) * cout + o } else { (t * cout + o) * cin + i };
                out[dst] = w[(o * cin + i) * kv + t];
            }
        }
    }
    out
}

/// Geometry of a stride-1 "same" convolution evaluated on a zero-padded copy
/// of the input.
///
/// With the input padded to `[Dp, Hp, Wp]` and flattened, output voxel
/// `(d, h, w)` is anchored at `d*Hp*Wp + h*Wp + w` and kernel tap `(a, b, e)`
/// reads the padded input at anchor + `a*Hp*Wp + b*Wp + e`. Every tap is then a
/// plain matrix product over a contiguous window of anchors, so no im2col
/// buffer is needed. Anchors that fall on padding are computed and discarded.
#[derive(Clone, Copy)]
struct ConvGeom {
    dims: [usize; 3],
    k: [usize; 3],
}

impl ConvGeom {
    fn p(&self) -> usize {
        self.dims.iter().product()
    }

    fn kvol(&self) -> usize {
        self.k.iter().product()
    }

    fn padded(&self) -> [usize; 3] {
        [0, 1, 2].map(|i| self.dims[i] + 2 * (self.k[i] / 2))
    }

    fn np(&self) -> usize {
        self.padded().iter().product()
    }

    /// Number of anchor columns evaluated per tap.
    fn span(&self) -> usize {
        let [_, hp, wp] = self.padded();
        let [d, h, w] = self.dims;
        (d - 1) * hp * wp + (h - 1) * wp + w
    }

    fn tap_offsets(&self) -> Vec<usize> {
        let [_, hp, wp] = self.padded();
        let [kd, kh, kw] = self.k;
        let mut v = Vec::with_capacity(self.kvol());
        for a in 0..kd {
            for b in 0..kh {
                for e in 0..kw {
                    v.push(a * hp * wp + b * wp + e);
                }
            }
        }
        v
    }

    fn is_pointwise(&self) -> bool {
        self.kvol() == 1
    }

    /// Calls `f(dense_index, anchor)` for every row start `(d, h, 0)`.
    fn for_each_row(&self, mut f: impl FnMut(usize, usize)) {
        let [_, hp, wp] = self.padded();
        let [d, h, w] = self.dims;
        for i in 0..d {
            for j in 0..h {
                f((i * h + j) * w, i * hp * wp + j * wp);
            }
        }
    }

    /// `[c, P]` dense rows into `[c, Np]` zero-padded rows.
    fn pad<F: Float>(&self, x: &[F], c: usize) -> Vec<F> {
        let (p, np) = (self.p(), self.np());
        let [pd, ph, pw] = self.k.map(|k| k / 2);
        let [_, hp, wp] = self.padded();
        let base = pd * hp * wp + ph * wp + pw;
        let w = self.dims[2];
        let mut out = vec![F::zero(); c * np];
        for ch in 0..c {
            let (src, dst) = (&x[ch * p..(ch + 1) * p], &mut out[ch * np..(ch + 1) * np]);
            self.for_each_row(|di, anchor| {
                dst[base + anchor..base + anchor + w].copy_from_slice(&src[di..di + w]);
            });
        }
        out
    }

    /// Inverse of [`ConvGeom::pad`] (drops the border).
    fn unpad<F: Float>(&self, xp: &[F], c: usize) -> Vec<F> {
        let (p, np) = (self.p(), self.np());
        let [pd, ph, pw] = self.k.map(|k| k / 2);
        let [_, hp, wp] = self.padded();
        let base = pd * hp * wp + ph * wp + pw;
        let w = self.dims[2];
        let mut out = vec![F::zero(); c * p];
        for ch in 0..c {
            let (src, dst) = (&xp[ch * np..(ch + 1) * np], &mut out[ch * p..(ch + 1) * p]);
            self.for_each_row(|di, anchor| {
                dst[di..di + w].copy_from_slice(&src[base + anchor..base + anchor + w]);
            });
        }
        out
    }

    /// `[c, span]` anchor rows into `[c, P]` dense rows.
    fn gather_anchors<F: Float>(&self, a: &[F], c: usize, dst: &mut [F]) {
        let (p, l, w) = (self.p(), self.span(), self.dims[2]);
        for ch in 0..c {
            let (src, out) = (&a[ch * l..(ch + 1) * l], &mut dst[ch * p..(ch + 1) * p]);
            self.for_each_row(|di, anchor| out[di..di + w].copy_from_slice(&src[anchor..anchor + w]));
        }
    }

    /// `[c, P]` dense rows into `[c, span]` anchor rows, zero elsewhere.
    fn scatter_anchors<F: Float>(&self, g: &[F], c: usize) -> Vec<F> {
        let (p, l, w) = (self.p(), self.span(), self.dims[2]);
        let mut out = vec![F::zero(); c * l];
        for ch in 0..c {
            let (src, dst) = (&g[ch * p..(ch + 1) * p], &mut out[ch * l..(ch + 1) * l]);
            self.for_each_row(|di, anchor| dst[anchor..anchor + w].copy_from_slice(&src[di..di + w]));
        }
        out
    }
}

impl<'g, F: Float> Var<'g, F> {
    /// Softmax over the last axis.
    pub fn softmax_last(&self) -> Var<'g, F> {
        let row = *self.shape().last().unwrap();
        let mut y = self.value().data().to_vec();
        for r in y.chunks_mut(row) {
            let m = r.iter().copied().fold(F::neg_infinity(), F::max);
            let mut s = F::zero();
            for v in r.iter_mut() {
                *v = (*v - m).exp();
                s += *v;
            }
            for v in r.iter_mut() {
                *v /= s;
            }
        }
        let out = Tensor::from_vec(self.shape(), y).unwrap();
        let y = std::sync::Arc::new(out.clone());
        self.graph.record(out, &[self], move |g, _| {
            let mut gx = vec![F::zero(); g.len()];
            for ((gr, yr), dst) in g.data().chunks(row).zip(y.data().chunks(row)).zip(gx.chunks_mut(row)) {
                let dot: F = gr.iter().zip(yr).map(|(&a, &b)| a * b).sum();
                for ((d, &gv), &yv) in dst.iter_mut().zip(gr).zip(yr) {
                    *d = yv * (gv - dot);
                }
            }
            vec![Some(Tensor::from_vec(g.shape(), gx).unwrap())]
        })
    }

    /// Layer normalization over the last axis with optional elementwise affine.
    pub fn layer_norm(&self, affine: Option<(&Var<'g, F>, &Var<'g, F>)>, eps: f64) -> Var<'g, F> {
        let row = *self.shape().last().unwrap();
        let (xhat, rstd) = normalize_rows(self.value().data(), row, F::lit(eps));
        let shape = self.shape().to_vec();
        let Some((w, b)) = affine else {
            let out = Tensor::from_vec(&shape, xhat.clone()).unwrap();
            return self.graph.record(out, &[self], move |g, _| {
                let gx = normalize_rows_backward(g.data(), &xhat, &rstd, row);
                vec![Some(Tensor::from_vec(&shape, gx).unwrap())]
            });
        };
        assert_eq!(w.shape(), [row]);
        assert_eq!(b.shape(), [row]);
        let (wv, bv) = (w.value_arc(), b.value_arc());
        let mut y = xhat.clone();
        for r in y.chunks_mut(row) {
            for ((v, &wi), &bi) in r.iter_mut().zip(wv.data()).zip(bv.data()) {
                *v = *v * wi + bi;
            }
        }
        let out = Tensor::from_vec(&shape, y).unwrap();
        self.graph.record(out, &[self, w, b], move |g, need| {
            let gd = g.data();
            let gx = need[0].then(|| {
                let mut gxhat = gd.to_vec();
                for r in gxhat.chunks_mut(row) {
                    for (v, &wi) in r.iter_mut().zip(wv.data()) {
                        *v *= wi;
                    }
                }
                Tensor::from_vec(&shape, normalize_rows_backward(&gxhat, &xhat, &rstd, row)).unwrap()
            });
            let (mut gw, mut gb) = (vec![F::zero(); row], vec![F::zero(); row]);
            for (gr, xr) in gd.chunks(row).zip(xhat.chunks(row)) {
                for i in 0..row {
                    gw[i] += gr[i] * xr[i];
                    gb[i] += gr[i];
                }
            }
            vec![
                gx,
                Some(Tensor::from_vec(&[row], gw).unwrap()),
                Some(Tensor::from_vec(&[row], gb).unwrap()),
            ]
        })
    }

    /// Instance normalization of `[N, C, ...]` over the trailing axes, with
    /// optional per-channel affine.
    pub fn instance_norm(&self, affine: Option<(&Var<'g, F>, &Var<'g, F>)>, eps: f64) -> Var<'g, F> {
        let shape = self.shape().to_vec();
        assert!(shape.len() >= 3, "instance_norm needs [N, C, ...], got {shape:?}");
        let c = shape[1];
        let row: usize = shape[2..].iter().product();
        let (xhat, rstd) = normalize_rows(self.value().data(), row, F::lit(eps));
        let Some((w, b)) = affine else {
            let out = Tensor::from_vec(&shape, xhat.clone()).unwrap();
            return self.graph.record(out, &[self], move |g, _| {
                let gx = normalize_rows_backward(g.data(), &xhat, &rstd, row);
                vec![Some(Tensor::from_vec(&shape, gx).unwrap())]
            });
        };
        assert_eq!(w.shape(), [c]);
        assert_eq!(b.shape(), [c]);
        let (wv, bv) = (w.value_arc(), b.value_arc());
        let mut y = xhat.clone();
        for (i, r) in y.chunks_mut(row).enumerate() {
            let (wi, bi) = (wv.data()[i % c], bv.data()[i % c]);
            r.iter_mut().for_each(|v| *v = *v * wi + bi);
        }
        let out = Tensor::from_vec(&shape, y).unwrap();
        self.graph.record(out, &[self, w, b], move |g, need| {
            let gd = g.data();
            let gx = need[0].then(|| {
                let mut gxhat = gd.to_vec();
                for (i, r) in gxhat.chunks_mut(row).enumerate() {
                    let wi = wv.data()[i % c];
                    r.iter_mut().for_each(|v| *v *= wi);
                }
                Tensor::from_vec(&shape, normalize_rows_backward(&gxhat, &xhat, &rstd, row)).unwrap()
            });
            let (mut gw, mut gb) = (vec![F::zero(); c], vec![F::zero(); c]);
            for (i, (gr, xr)) in gd.chunks(row).zip(xhat.chunks(row)).enumerate() {
                gw[i % c] += gr.iter().zip(xr).map(|(&a, &b)| a * b).sum::<F>();
                gb[i % c] += gr.iter().copied().sum::<F>();
            }
            vec![
                gx,
                Some(Tensor::from_vec(&[c], gw).unwrap()),
                Some(Tensor::from_vec(&[c], gb).unwrap()),
            ]
        })
    }

    /// Stride-1, zero "same" padded 3D convolution.
    ///
    /// Input `[N, Cin, D, H, W]`, weight `[Cout, Cin, kd, kh, kw]` with odd kernel
    /// extents, optional bias `[Cout]`.
    pub fn conv3d(&self, weight: &Var<'g, F>, bias: Option<&Var<'g, F>>) -> Var<'g, F> {
        let xs = self.shape().to_vec();
        let ws = weight.shape().to_vec();
        assert_eq!(xs.len(), 5, "conv3d input must be [N, C, D, H, W], got {xs:?}");
        assert_eq!(ws.len(), 5, "conv3d weight must be 5D, got {ws:?}");
        assert_eq!(xs[1], ws[1], "conv3d channels: input {xs:?} weight {ws:?}");
        assert!(ws[2..].iter().all(|k| k % 2 == 1), "conv3d kernel extents must be odd");
        let (n, cin, cout) = (xs[0], xs[1], ws[0]);
        let geom = ConvGeom { dims: [xs[2], xs[3], xs[4]], k: [ws[2], ws[3], ws[4]] };
        let (p, np, l, kv) = (geom.p(), geom.np(), geom.span(), geom.kvol());
        let taps = geom.tap_offsets();
        let x = self.value_arc();
        let w = weight.value_arc();
        let mut y = vec![F::zero(); n * cout * p];
        let mut acc = vec![F::zero(); cout * l];
        let w_fwd = tap_major(w.data(), cout, cin, kv, false);
        for i in 0..n {
            let xi = &x.data()[i * cin * p..(i + 1) * cin * p];
            let dst = &mut y[i * cout * p..(i + 1) * cout * p];
            if geom.is_pointwise() {
                matmul_into(MatRef::new(w.data(), cout, cin), MatRef::new(xi, cin, p), dst, false);
                continue;
            }
            let xp = geom.pad(xi, cin);
            conv_taps(&w_fwd, &xp, np, &taps, cout, cin, l, &mut acc, false);
            geom.gather_anchors(&acc, cout, dst);
        }
        if let Some(b) = bias {
            assert_eq!(b.shape(), [cout]);
            for (j, chunk) in y.chunks_mut(p).enumerate() {
                let bv = b.value().data()[j % cout];
                chunk.iter_mut().for_each(|v| *v += bv);
            }
        }
        let out_shape = [n, cout, xs[2], xs[3], xs[4]];
        let out = Tensor::from_vec(&out_shape, y).unwrap();
        let backward = move |g: &Tensor<F>, need: &[bool]| {
            let gd = g.data();
            let mut gx = need[0].then(|| vec![F::zero(); x.len()]);
            let mut gw = need[1].then(|| vec![F::zero(); cout * cin * kv]);
            let w_bwd = if need[0] { tap_major(w.data(), cout, cin, kv, true) } else { Vec::new() };
            for i in 0..n {
                let gi = &gd[i * cout * p..(i + 1) * cout * p];
                let xi = &x.data()[i * cin * p..(i + 1) * cin * p];
                if geom.is_pointwise() {
                    if let Some(gw) = gw.as_mut() {
                        matmul_into(MatRef::new(gi, cout, p), MatRef::new(xi, cin, p).t(), gw, true);
                    }
                    if let Some(gx) = gx.as_mut() {
                        let dst = &mut gx[i * cin * p..(i + 1) * cin * p];
                        matmul_into(MatRef::new(w.data(), cout, cin).t(), MatRef::new(gi, cout, p), dst, false);
                    }
                    continue;
                }
                let ga = geom.scatter_anchors(gi, cout);
                if let Some(gw) = gw.as_mut() {
                    let xp = geom.pad(xi, cin);
                    conv_taps_weight_grad(&ga, &xp, np, &taps, cout, cin, l, gw);
                }
                if let Some(gx) = gx.as_mut() {
                    // dXp[q] = sum_t W_t^T G[q - off_t]: a convolution of the
                    // front-padded anchor gradient with mirrored offsets.
                    let off_max = *taps.last().unwrap();
                    let stride = np + off_max;
                    let mut gap = vec![F::zero(); cout * stride];
                    for (src, dst) in ga.chunks(l).zip(gap.chunks_mut(stride)) {
                        dst[off_max..off_max + l].copy_from_slice(src);
                    }
                    let mirrored: Vec<usize> = taps.iter().map(|&o| off_max - o).collect();
                    let mut gxp = vec![F::zero(); cin * np];
                    conv_taps(&w_bwd, &gap, stride, &mirrored, cin, cout, np, &mut gxp, false);
                    gx[i * cin * p..(i + 1) * cin * p].copy_from_slice(&geom.unpad(&gxp, cin));
                }
            }
            let mut grads = vec![
                gx.map(|v| Tensor::from_vec(&xs, v).unwrap()),
                gw.map(|v| Tensor::from_vec(&ws, v).unwrap()),
            ];
            if need.len() == 3 {
                grads.push(need[2].then(|| {
                    let mut gb = vec![F::zero(); cout];
                    for (j, chunk) in gd.chunks(p).enumerate() {
                        gb[j % cout] += chunk.iter().copied().sum::<F>();
                    }
                    Tensor::from_vec(&[cout], gb).unwrap()
                }));
            }
            grads
        };
        match bias {
            Some(b) => self.graph.record(out, &[self, weight, b], backward),
            None => self.graph.record(out, &[self, weight], backward),
        }
    }

    /// 2D convolution on `[N, C, H, W]` with weight `[Cout, Cin, kh, kw]`.
    pub fn conv2d(&self, weight: &Var<'g, F>, bias: Option<&Var<'g, F>>) -> Var<'g, F> {
        let xs = self.shape().to_vec();
        let ws = weight.shape().to_vec();
        assert_eq!(xs.len(), 4, "conv2d input must be [N, C, H, W], got {xs:?}");
        let x5 = self.reshape(&[xs[0], xs[1], 1, xs[2], xs[3]]);
        let w5 = weight.reshape(&[ws[0], ws[1], 1, ws[2], ws[3]]);
        x5.conv3d(&w5, bias).reshape(&[xs[0], ws[0], xs[2], xs[3]])
    }

    /// Non-overlapping max pooling of `[N, C, D, H, W]` with the given window.
    pub fn max_pool3d(&self, window: [usize; 3]) -> Var<'g, F> {
        let xs = self.shape().to_vec();
        assert_eq!(xs.len(), 5);
        assert!(
            (0..3).all(|i| xs[i + 2] % window[i] == 0),
            "max_pool3d: {xs:?} not divisible by {window:?}"
        );
        let (nc, d, h, w) = (xs[0] * xs[1], xs[2], xs[3], xs[4]);
        let (od, oh, ow) = (d / window[0], h / window[1], w / window[2]);
        let out_shape = [xs[0], xs[1], od, oh, ow];
        let x = self.value().data();
        let mut y = Vec::with_capacity(numel(&out_shape));
        let mut arg = Vec::with_capacity(numel(&out_shape));
        for c in 0..nc {
            for a in 0..od {
                for b in 0..oh {
                    for e in 0..ow {
                        let base = ((c * d + a * window[0]) * h + b * window[1]) * w + e * window[2];
                        let (mut best, mut best_i) = (x[base], base);
                        for i in 0..window[0] {
                            for j in 0..window[1] {
                                for k in 0..window[2] {
                                    let idx = base + (i * h + j) * w + k;
                                    if x[idx] > best {
                                        best = x[idx];
                                        best_i = idx;
                                    }
                                }
                            }
                        }
                        y.push(best);
                        arg.push(best_i as u32);
                    }
                }
            }
        }
        let out = Tensor::from_vec(&out_shape, y).unwrap();
        self.graph.record(out, &[self], move |g, _| {
            let mut gx = vec![F::zero(); numel(&xs)];
            for (&i, &v) in arg.iter().zip(g.data()) {
                gx[i as usize] += v;
            }
            vec![Some(Tensor::from_vec(&xs, gx).unwrap())]
        })
    }

    /// 2x2 max pooling of `[N, C, H, W]`.
    pub fn max_pool2d(&self) -> Var<'g, F> {
        let xs = self.shape().to_vec();
        assert_eq!(xs.len(), 4);
        self.reshape(&[xs[0], xs[1], 1, xs[2], xs[3]])
            .max_pool3d([1, 2, 2])
            .reshape(&[xs[0], xs[1], xs[2] / 2, xs[3] / 2])
    }

    /// Mean binary cross-entropy between `sigmoid(self)` and `target`, computed
    /// stably from logits.
    pub fn bce_with_logits(&self, target: &Tensor<F>) -> Var<'g, F> {
        assert_eq!(self.shape(), target.shape(), "bce shapes");
        let x = self.value_arc();
        let t = std::sync::Arc::new(target.clone());
        let n = F::from_usize(x.len()).unwrap();
        let total: F = x
            .data()
            .iter()
            .zip(t.data())
            .map(|(&xv, &tv)| xv.max(F::zero()) - xv * tv + (F::one() + (-xv.abs()).exp()).ln())
            .sum();
        let out = Tensor::scalar(total / n);
        self.graph.record(out, &[self], move |g, _| {
            let s = g.item() / n;
            let data = x.data().iter().zip(t.data()).map(|(&xv, &tv)| (sigmoid(xv) - tv) * s).collect();
            vec![Some(Tensor::from_vec(x.shape(), data).unwrap())]
        })
    }
}
