//! Register-blocked multi-tap convolution kernel.
//!
//! Small channel counts make per-tap GEMM calls dominated by operand packing;
//! this kernel instead keeps a block of output rows x anchors in registers and
//! accumulates every tap and input channel before storing.

use crate::float::{gemm_strided, Float, StridedRef};

const STRIP: usize = 16;
const ROWS: usize = 4;

/// `out[o * l + a] (+)= sum_t sum_i w[(t * rows + o) * cols + i] * x[i * xs + offs[t] + a]`
/// for `o < rows`, `a < l`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn conv_taps<F: Float>(
    w: &[F],
    x: &[F],
    xs: usize,
    offs: &[usize],
    rows: usize,
    cols: usize,
    l: usize,
    out: &mut [F],
    accumulate: bool,
) {
    conv_taps_with(w, x, xs, offs, rows, cols, l, out, accumulate, prefer_direct(rows, cols, l))
}

#[allow(clippy::too_many_arguments)]
fn conv_taps_with<F: Float>(
    w: &[F],
    x: &[F],
    xs: usize,
    offs: &[usize],
    rows: usize,
    cols: usize,
    l: usize,
    out: &mut [F],
    accumulate: bool,
    direct: bool,
) {
    assert_eq!(w.len(), offs.len() * rows * cols);
    assert!(out.len() >= rows * l);
    if let Some(&max_off) = offs.iter().max() {
        if cols > 0 && l > 0 {
            assert!((cols - 1) * xs + max_off + l <= x.len(), "kernel reads past the input");
        }
    }
    if !direct {
        for (t, &off) in offs.iter().enumerate() {
            let wt = StridedRef::new(&w[t * rows * cols..(t + 1) * rows * cols], 0, rows, cols, cols, 1);
            let xt = StridedRef::new(x, off, cols, l, xs, 1);
            gemm_strided(wt, xt, out, 0, l, 1, accumulate || t > 0);
        }
        return;
    }
    conv_taps_body(w, x, xs, offs, rows, cols, l, out, accumulate);
}

/// Register blocking wins when the spatial extent dwarfs the channel counts;
/// packed GEMM wins for wide layers on small grids.
fn prefer_direct(rows: usize, cols: usize, l: usize) -> bool {
    l >= 2048 && rows.max(cols) <= 48
}

/// Full-width strip for f32 with AVX2/FMA: `acc[r][j] = sum_t sum_i packed[t, i, r] * x[i * xs + offs[t] + j]`.
/// Returns `false` when the fast path is unavailable.
#[inline(always)]
fn strip_fast<F: Float>(packed: &[F], x: &[F], xs: usize, offs: &[usize], cols: usize, acc: &mut [[F; STRIP]; ROWS]) -> bool {
    #[cfg(target_arch = "x86_64")]
    if std::any::TypeId::of::<F>() == std::any::TypeId::of::<f32>()
        && is_x86_feature_detected!("avx2")
        && is_x86_feature_detected!("fma")
    {
        // SAFETY: F is f32 (checked above) so the casts are identity
        // reinterpretations; bounds were asserted by `conv_taps`, and the CPU
        // features were detected.
        unsafe {
            let packed = std::slice::from_raw_parts(packed.as_ptr() as *const f32, packed.len());
            let x = std::slice::from_raw_parts(x.as_ptr() as *const f32, x.len());
            let acc = &mut *(acc as *mut [[F; STRIP]; ROWS] as *mut [[f32; STRIP]; ROWS]);
            strip_avx2(packed, x, xs, offs, cols, acc);
        }
        return true;
    }
    let _ = (packed, x, xs, offs, cols, acc);
    false
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2,fma")]
unsafe fn strip_avx2(packed: &[f32], x: &[f32], xs: usize, offs: &[usize], cols: usize, acc: &mut [[f32; STRIP]; ROWS]) {
    use std::arch::x86_64::*;
    let mut a = [_mm256_setzero_ps(); 8];
    for (t, &off) in offs.iter().enumerate() {
        debug_assert!((cols.max(1) - 1) * xs + off + STRIP <= x.len());
        let mut xp = x.as_ptr().add(off);
        let mut wp = packed.as_ptr().add(t * cols * ROWS);
        for _ in 0..cols {
            let x0 = _mm256_loadu_ps(xp);
            let x1 = _mm256_loadu_ps(xp.add(8));
            for r in 0..ROWS {
                let wv = _mm256_broadcast_ss(&*wp.add(r));
                a[2 * r] = _mm256_fmadd_ps(wv, x0, a[2 * r]);
                a[2 * r + 1] = _mm256_fmadd_ps(wv, x1, a[2 * r + 1]);
            }
            xp = xp.add(xs);
            wp = wp.add(ROWS);
        }
    }
    for r in 0..ROWS {
        _mm256_storeu_ps(acc[r].as_mut_ptr(), a[2 * r]);
        _mm256_storeu_ps(acc[r].as_mut_ptr().add(8), a[2 * r + 1]);
    }
}

#[allow(clippy::too_many_arguments)]
fn conv_taps_body<F: Float>(
    w: &[F],
    x: &[F],
    xs: usize,
    offs: &[usize],
    rows: usize,
    cols: usize,
    l: usize,
    out: &mut [F],
    accumulate: bool,
) {
    let kv = offs.len();
    let mut packed = vec![F::zero(); kv * cols * ROWS];
    let mut o0 = 0;
    while o0 < rows {
        let rb = ROWS.min(rows - o0);
        // packed[(t * cols + i) * ROWS + r] = w[t, o0 + r, i], zero rows past the end
        packed.iter_mut().for_each(|v| *v = F::zero());
        for t in 0..kv {
            for r in 0..rb {
                for i in 0..cols {
                    packed[(t * cols + i) * ROWS + r] = w[(t * rows + o0 + r) * cols + i];
                }
            }
        }
        let mut a0 = 0;
        while a0 < l {
            let sl = STRIP.min(l - a0);
            let mut acc = [[F::zero(); STRIP]; ROWS];
            if sl == STRIP && strip_fast(&packed, &x[a0..], xs, offs, cols, &mut acc) {
            } else {
                for (t, &off) in offs.iter().enumerate() {
                    for i in 0..cols {
                        let xv = &x[i * xs + off + a0..][..sl];
                        for (r, acc_r) in acc.iter_mut().enumerate().take(rb) {
                            let wv = packed[(t * cols + i) * ROWS + r];
                            for j in 0..sl {
                                acc_r[j] = wv.mul_add(xv[j], acc_r[j]);
                            }
                        }
                    }
                }
            }
            for (r, acc_r) in acc.iter().enumerate().take(rb) {
                let dst = &mut out[(o0 + r) * l + a0..][..sl];
                if accumulate {
                    dst.iter_mut().zip(acc_r).for_each(|(d, &v)| *d += v);
                } else {
                    dst.copy_from_slice(&acc_r[..sl]);
                }
            }
            a0 += STRIP;
        }
        o0 += ROWS;
    }
}

const CHUNK: usize = 256;

/// Weight gradient of [`conv_taps`]:
/// `gw[(o * cols + i) * kv + t] += sum_a g[o * l + a] * x[i * xs + offs[t] + a]`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn conv_taps_weight_grad<F: Float>(
    g: &[F],
    x: &[F],
    xs: usize,
    offs: &[usize],
    rows: usize,
    cols: usize,
    l: usize,
    gw: &mut [F],
) {
    weight_grad_with(g, x, xs, offs, rows, cols, l, gw, prefer_direct(rows, cols, l))
}

#[allow(clippy::too_many_arguments)]
fn weight_grad_with<F: Float>(
    g: &[F],
    x: &[F],
    xs: usize,
    offs: &[usize],
    rows: usize,
    cols: usize,
    l: usize,
    gw: &mut [F],
    direct: bool,
) {
    let kv = offs.len();
    assert_eq!(gw.len(), rows * cols * kv);
    assert!(g.len() >= rows * l);
    if let Some(&max_off) = offs.iter().max() {
        if cols > 0 && l > 0 {
            assert!((cols - 1) * xs + max_off + l <= x.len(), "kernel reads past the input");
        }
    }
    if !direct {
        for (t, &off) in offs.iter().enumerate() {
            let gt = StridedRef::new(g, 0, rows, l, l, 1);
            let xt = StridedRef::new(x, off, cols, l, xs, 1).t();
            gemm_strided(gt, xt, gw, t, cols * kv, kv, true);
        }
        return;
    }
    #[cfg(target_arch = "x86_64")]
    if std::any::TypeId::of::<F>() == std::any::TypeId::of::<f32>()
        && is_x86_feature_detected!("avx2")
        && is_x86_feature_detected!("fma")
    {
        // SAFETY: F is f32, bounds asserted above, CPU features detected.
        unsafe {
            let g = std::slice::from_raw_parts(g.as_ptr() as *const f32, g.len());
            let x = std::slice::from_raw_parts(x.as_ptr() as *const f32, x.len());
            let gw = std::slice::from_raw_parts_mut(gw.as_mut_ptr() as *mut f32, gw.len());
            weight_grad_avx2(g, x, xs, offs, rows, cols, l, gw);
        }
        return;
    }
    for o in 0..rows {
        let gr = &g[o * l..(o + 1) * l];
        for i in 0..cols {
            for (t, &off) in offs.iter().enumerate() {
                let xr = &x[i * xs + off..i * xs + off + l];
                gw[(o * cols + i) * kv + t] += gr.iter().zip(xr).map(|(&a, &b)| a * b).sum::<F>();
            }
        }
    }
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2,fma")]
#[allow(clippy::too_many_arguments)]
unsafe fn weight_grad_avx2(g: &[f32], x: &[f32], xs: usize, offs: &[usize], rows: usize, cols: usize, l: usize, gw: &mut [f32]) {
    let kv = offs.len();
    // rows padded to a multiple of ROWS with zeros so every block is full
    let prow = rows.div_ceil(ROWS) * ROWS;
    let mut gp = vec![0f32; prow * l];
    gp[..rows * l].copy_from_slice(&g[..rows * l]);
    let mut sums = vec![0f32; prow * cols * kv];
    let mut a0 = 0;
    while a0 < l {
        let len = CHUNK.min(l - a0);
        let vl = len / 8 * 8;
        for (t, &off) in offs.iter().enumerate() {
            for o0 in (0..prow).step_by(ROWS) {
                let mut i = 0;
                while i + 2 <= cols {
                    let d = wg_block::<2>(&gp, l, x, xs, o0, i, a0 + off, a0, vl);
                    for r in 0..ROWS {
                        for c in 0..2 {
                            sums[((o0 + r) * cols + i + c) * kv + t] += d[r][c];
                        }
                    }
                    i += 2;
                }
                if i < cols {
                    let d = wg_block::<1>(&gp, l, x, xs, o0, i, a0 + off, a0, vl);
                    for r in 0..ROWS {
                        sums[((o0 + r) * cols + i) * kv + t] += d[r][0];
                    }
                }
                for r in 0..ROWS {
                    for c in 0..cols {
                        let mut s = 0.0;
                        for j in vl..len {
                            s += gp[(o0 + r) * l + a0 + j] * x[c * xs + a0 + off + j];
                        }
                        sums[((o0 + r) * cols + c) * kv + t] += s;
                    }
                }
            }
        }
        a0 += len;
    }
    for (dst, &v) in gw.iter_mut().zip(&sums[..rows * cols * kv]) {
        *dst += v;
    }
}

/// Dot products of `ROWS` gradient rows with `C` shifted input rows over `vl`
/// (a multiple of 8) elements.
#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2,fma")]
#[allow(clippy::too_many_arguments)]
unsafe fn wg_block<const C: usize>(
    gp: &[f32],
    l: usize,
    x: &[f32],
    xs: usize,
    o0: usize,
    i0: usize,
    xstart: usize,
    gstart: usize,
    vl: usize,
) -> [[f32; C]; ROWS] {
    use std::arch::x86_64::*;
    let mut acc = [[_mm256_setzero_ps(); C]; ROWS];
    let gptr: [*const f32; ROWS] = std::array::from_fn(|r| gp.as_ptr().add((o0 + r) * l + gstart));
    let xptr: [*const f32; C] = std::array::from_fn(|c| x.as_ptr().add((i0 + c) * xs + xstart));
    let mut j = 0;
    while j < vl {
        let xv: [__m256; C] = std::array::from_fn(|c| _mm256_loadu_ps(xptr[c].add(j)));
        for r in 0..ROWS {
            let gv = _mm256_loadu_ps(gptr[r].add(j));
            for c in 0..C {
                acc[r][c] = _mm256_fmadd_ps(gv, xv[c], acc[r][c]);
            }
        }
        j += 8;
    }
    let mut out = [[0f32; C]; ROWS];
    for r in 0..ROWS {
        for c in 0..C {
            let mut lanes = [0f32; 8];
            _mm256_storeu_ps(lanes.as_mut_ptr(), acc[r][c]);
            out[r][c] = lanes.iter().sum();
        }
    }
    out
}
