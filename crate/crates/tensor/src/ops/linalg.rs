use crate::float::{matmul_into, Float, MatRef};
use crate::graph::Var;
use crate::tensor::Tensor;

impl<'g, F: Float> Var<'g, F> {
    /// `x @ weight^T + bias` over the last axis; `weight` is `[out, in]`.
    pub fn linear(&self, weight: &Var<'g, F>, bias: Option<&Var<'g, F>>) -> Var<'g, F> {
        let xs = self.shape().to_vec();
        let (out_f, in_f) = (weight.shape()[0], weight.shape()[1]);
        assert_eq!(*xs.last().unwrap(), in_f, "linear: input {:?} vs weight {:?}", xs, weight.shape());
        let m = self.value().len() / in_f;
        let mut out_shape = xs.clone();
        *out_shape.last_mut().unwrap() = out_f;
        let mut y = vec![F::zero(); m * out_f];
        matmul_into(
            MatRef::new(self.value().data(), m, in_f),
            MatRef::new(weight.value().data(), out_f, in_f).t(),
            &mut y,
            false,
        );
        if let Some(b) = bias {
            assert_eq!(b.shape(), [out_f]);
            let bd = b.value().data();
            for row in y.chunks_mut(out_f) {
                for (v, &bv) in row.iter_mut().zip(bd) {
                    *v += bv;
                }
            }
        }
        let out = Tensor::from_vec(&out_shape, y).unwrap();
        let (x, w) = (self.value_arc(), weight.value_arc());
        let backward = move |g: &Tensor<F>, need: &[bool]| {
            let gd = g.data();
            let gx = need[0].then(|| {
                let mut gx = vec![F::zero(); m * in_f];
                matmul_into(MatRef::new(gd, m, out_f), MatRef::new(w.data(), out_f, in_f), &mut gx, false);
                Tensor::from_vec(&xs, gx).unwrap()
            });
            let gw = need[1].then(|| {
                let mut gw = vec![F::zero(); out_f * in_f];
                matmul_into(MatRef::new(gd, m, out_f).t(), MatRef::new(x.data(), m, in_f), &mut gw, false);
                Tensor::from_vec(&[out_f, in_f], gw).unwrap()
            });
            let mut grads = vec![gx, gw];
            if need.len() == 3 {
                grads.push(need[2].then(|| {
                    let mut gb = vec![F::zero(); out_f];
                    for row in gd.chunks(out_f) {
                        for (a, &v) in gb.iter_mut().zip(row) {
                            *a += v;
                        }
                    }
                    Tensor::from_vec(&[out_f], gb).unwrap()
                }));
            }
            grads
        };
        match bias {
            Some(b) => self.graph.record(out, &[self, weight, b], backward),
            None => self.graph.record(out, &[self, weight], backward),
        }
    }

    /// Batched matrix product over the last two axes: `[.., m, k] @ [.., k, n]`,
    /// or `[.., m, k] @ [.., n, k]^T` when `trans_rhs`. Leading axes must match.
    pub fn bmm(&self, rhs: &Var<'g, F>, trans_rhs: bool) -> Var<'g, F> {
        let (sa, sb) = (self.shape().to_vec(), rhs.shape().to_vec());
        let nd = sa.len();
        assert!(nd >= 2 && sb.len() == nd && sa[..nd - 2] == sb[..nd - 2], "bmm shapes {sa:?} {sb:?}");
        let batch: usize = sa[..nd - 2].iter().product();
        let (m, k) = (sa[nd - 2], sa[nd - 1]);
        let (br, bc) = (sb[nd - 2], sb[nd - 1]);
        let n = if trans_rhs { br } else { bc };
        assert_eq!(if trans_rhs { bc } else { br }, k, "bmm inner dims {sa:?} {sb:?}");
        let mut out_shape = sa.clone();
        out_shape[nd - 1] = n;
        let (a, b) = (self.value_arc(), rhs.value_arc());
        let mut y = vec![F::zero(); batch * m * n];
        for i in 0..batch {
            let bm = MatRef::new(&b.data()[i * br * bc..(i + 1) * br * bc], br, bc);
            matmul_into(
                MatRef::new(&a.data()[i * m * k..(i + 1) * m * k], m, k),
                if trans_rhs { bm.t() } else { bm },
                &mut y[i * m * n..(i + 1) * m * n],
                false,
            );
        }
        let out = Tensor::from_vec(&out_shape, y).unwrap();
        self.graph.record(out, &[self, rhs], move |g, need| {
            let gd = g.data();
            let ga = need[0].then(|| {
                let mut ga = vec![F::zero(); batch * m * k];
                for i in 0..batch {
                    let gm = MatRef::new(&gd[i * m * n..(i + 1) * m * n], m, n);
                    let bm = MatRef::new(&b.data()[i * br * bc..(i + 1) * br * bc], br, bc);
                    // dA = G @ op(B)^T
                    matmul_into(gm, if trans_rhs { bm } else { bm.t() }, &mut ga[i * m * k..(i + 1) * m * k], false);
                }
                Tensor::from_vec(&sa, ga).unwrap()
            });
            let gb = need[1].then(|| {
                let mut gb = vec![F::zero(); batch * br * bc];
                for i in 0..batch {
                    let gm = MatRef::new(&gd[i * m * n..(i + 1) * m * n], m, n);
                    let am = MatRef::new(&a.data()[i * m * k..(i + 1) * m * k], m, k);
                    let dst = &mut gb[i * br * bc..(i + 1) * br * bc];
                    if trans_rhs {
                        // B is [n, k]: dB = G^T @ A
                        matmul_into(gm.t(), am, dst, false);
                    } else {
                        // B is [k, n]: dB = A^T @ G
                        matmul_into(am.t(), gm, dst, false);
                    }
                }
                Tensor::from_vec(&sb, gb).unwrap()
            });
            vec![ga, gb]
        })
    }
}
