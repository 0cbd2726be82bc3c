//! Data-movement operations. Most reduce to [`Var::gather`] over a precomputed
//! index map, whose backward pass is a scatter-add.

use std::sync::Arc;

use crate::float::Float;
use crate::graph::Var;
use crate::tensor::{numel, strides, Tensor};

/// `out[i] = input[map[i]]`, or zero where `map[i]` is `None`.
#[derive(Clone, Debug)]
pub struct IndexMap {
    pub out_shape: Vec<usize>,
    pub src: Vec<Option<u32>>,
}

impl IndexMap {
    /// Map from a function of the output multi-index. `f` writes the source
    /// multi-index into its second argument and returns `false` for zero fill.
    pub fn from_fn(
        in_shape: &[usize],
        out_shape: &[usize],
        f: impl Fn(&[usize], &mut [usize]) -> bool,
    ) -> Self {
        let in_st = strides(in_shape);
        let n = numel(out_shape);
        assert!(numel(in_shape) <= u32::MAX as usize, "tensor too large for an index map");
        let mut idx = vec![0usize; out_shape.len()];
        let mut srcpos = vec![0usize; in_shape.len()];
        let mut src = Vec::with_capacity(n);
        for _ in 0..n {
            let hit = f(&idx, &mut srcpos);
            src.push(hit.then(|| {
                debug_assert!(srcpos.iter().zip(in_shape).all(|(a, b)| a < b));
                srcpos.iter().zip(&in_st).map(|(a, s)| a * s).sum::<usize>() as u32
            }));
            for d in (0..idx.len()).rev() {
                idx[d] += 1;
                if idx[d] < out_shape[d] {
                    break;
                }
                idx[d] = 0;
            }
        }
        Self { out_shape: out_shape.to_vec(), src }
    }

    pub fn apply<F: Float>(&self, input: &Tensor<F>) -> Tensor<F> {
        let d = input.data();
        let data = self.src.iter().map(|s| s.map_or(F::zero(), |i| d[i as usize])).collect();
        Tensor::from_vec(&self.out_shape, data).unwrap()
    }

    pub fn scatter_add<F: Float>(&self, g: &Tensor<F>, in_shape: &[usize]) -> Tensor<F> {
        let mut acc = vec![F::zero(); numel(in_shape)];
        for (s, &v) in self.src.iter().zip(g.data()) {
            if let Some(i) = s {
                acc[*i as usize] += v;
            }
        }
        Tensor::from_vec(in_shape, acc).unwrap()
    }
}

pub fn permute_map(shape: &[usize], axes: &[usize]) -> IndexMap {
    assert_eq!(axes.len(), shape.len(), "permutation rank");
    let out: Vec<usize> = axes.iter().map(|&a| shape[a]).collect();
    let inv = {
        let mut inv = vec![0; axes.len()];
        for (i, &a) in axes.iter().enumerate() {
            inv[a] = i;
        }
        inv
    };
    IndexMap::from_fn(shape, &out, |o, p| {
        for (pi, &i) in p.iter_mut().zip(&inv) {
            *pi = o[i];
        }
        true
    })
}

/// Cyclic shift: `out[i] = in[(i - shift) mod n]` per axis (same sign as `torch.roll`).
pub fn roll_map(shape: &[usize], shifts: &[isize]) -> IndexMap {
    assert_eq!(shifts.len(), shape.len());
    IndexMap::from_fn(shape, shape, |o, p| {
        for (((pi, &i), &n), &s) in p.iter_mut().zip(o).zip(shape).zip(shifts) {
            *pi = (i as isize - s).rem_euclid(n as isize) as usize;
        }
        true
    })
}

/// Zero padding after the end of each axis.
pub fn pad_end_map(shape: &[usize], pads: &[usize]) -> IndexMap {
    let out: Vec<usize> = shape.iter().zip(pads).map(|(a, b)| a + b).collect();
    IndexMap::from_fn(shape, &out, |o, p| {
        p.copy_from_slice(o);
        o.iter().zip(shape).all(|(a, b)| a < b)
    })
}

/// Edge replication after the end of each axis.
pub fn pad_end_replicate_map(shape: &[usize], pads: &[usize]) -> IndexMap {
    let out: Vec<usize> = shape.iter().zip(pads).map(|(a, b)| a + b).collect();
    IndexMap::from_fn(shape, &out, |o, p| {
        for ((pi, &a), &b) in p.iter_mut().zip(o).zip(shape) {
            *pi = a.min(b - 1);
        }
        true
    })
}

/// Keeps `[start, start + len)` on each axis.
pub fn crop_map(shape: &[usize], start: &[usize], len: &[usize]) -> IndexMap {
    IndexMap::from_fn(shape, len, |o, p| {
        for ((pi, &a), &b) in p.iter_mut().zip(o).zip(start) {
            *pi = a + b;
        }
        true
    })
}

pub fn flip_map(shape: &[usize], axes: &[usize]) -> IndexMap {
    IndexMap::from_fn(shape, shape, |o, p| {
        p.copy_from_slice(o);
        for &a in axes {
            p[a] = shape[a] - 1 - o[a];
        }
        true
    })
}

impl<'g, F: Float> Var<'g, F> {
    pub fn gather(&self, map: Arc<IndexMap>) -> Var<'g, F> {
        let in_shape = self.shape().to_vec();
        let out = map.apply(self.value());
        self.graph.record(out, &[self], move |g, _| vec![Some(map.scatter_add(g, &in_shape))])
    }

    pub fn reshape(&self, shape: &[usize]) -> Var<'g, F> {
        let in_shape = self.shape().to_vec();
        let out = self.value().clone();
        let out = out.reshape(shape).unwrap_or_else(|e| panic!("{e}"));
        self.graph
            .record(out, &[self], move |g, _| vec![Some(g.clone().reshape(&in_shape).unwrap())])
    }

    pub fn permute(&self, axes: &[usize]) -> Var<'g, F> {
        self.gather(Arc::new(permute_map(self.shape(), axes)))
    }

    pub fn roll(&self, shifts: &[isize]) -> Var<'g, F> {
        if shifts.iter().all(|&s| s == 0) {
            return self.clone();
        }
        self.gather(Arc::new(roll_map(self.shape(), shifts)))
    }

    pub fn pad_end(&self, pads: &[usize]) -> Var<'g, F> {
        if pads.iter().all(|&p| p == 0) {
            return self.clone();
        }
        self.gather(Arc::new(pad_end_map(self.shape(), pads)))
    }

    pub fn crop(&self, start: &[usize], len: &[usize]) -> Var<'g, F> {
        if start.iter().all(|&s| s == 0) && len == self.shape() {
            return self.clone();
        }
        self.gather(Arc::new(crop_map(self.shape(), start, len)))
    }

    pub fn flip(&self, axes: &[usize]) -> Var<'g, F> {
        self.gather(Arc::new(flip_map(self.shape(), axes)))
    }

    /// Concatenation along `axis`.
    pub fn concat(parts: &[&Var<'g, F>], axis: usize) -> Var<'g, F> {
        assert!(!parts.is_empty());
        let first = parts[0].shape().to_vec();
        for p in parts {
            assert_eq!(p.shape().len(), first.len());
            for (d, (&a, &b)) in p.shape().iter().zip(&first).enumerate() {
                assert!(d == axis || a == b, "concat shape mismatch {:?} vs {:?}", p.shape(), first);
            }
        }
        let outer: usize = first[..axis].iter().product();
        let inner: usize = first[axis + 1..].iter().product();
        let sizes: Vec<usize> = parts.iter().map(|p| p.shape()[axis]).collect();
        let total: usize = sizes.iter().sum();
        let mut out_shape = first.clone();
        out_shape[axis] = total;
        let mut data = Vec::with_capacity(numel(&out_shape));
        for o in 0..outer {
            for (p, &s) in parts.iter().zip(&sizes) {
                let chunk = s * inner;
                data.extend_from_slice(&p.value().data()[o * chunk..(o + 1) * chunk]);
            }
        }
        let out = Tensor::from_vec(&out_shape, data).unwrap();
        let shapes: Vec<Vec<usize>> = parts.iter().map(|p| p.shape().to_vec()).collect();
        parts[0].graph.record(out, parts, move |g, need| {
            let gd = g.data();
            let mut offs = 0;
            shapes
                .iter()
                .zip(&sizes)
                .zip(need)
                .map(|((shape, &s), &nd)| {
                    let start = offs;
                    offs += s * inner;
                    nd.then(|| {
                        let mut v = Vec::with_capacity(numel(shape));
                        for o in 0..outer {
                            let base = o * total * inner + start;
                            v.extend_from_slice(&gd[base..base + s * inner]);
                        }
                        Tensor::from_vec(shape, v).unwrap()
                    })
                })
                .collect()
        })
    }
}
