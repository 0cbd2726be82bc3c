use crackseq::nets::layers::Builder;
use crackseq::nets::swin::SwinBlock;
use crackseq::nets::{count_parameters, load_checkpoint, save_checkpoint, Mode, Model, ModelSpec, SwinSpec, SwinUnetr, UNetSpec};
use crackseq::Error;
use crackseq_tensor::{Graph, ParamStore, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random<F: crackseq_tensor::Float>(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<F> {
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| F::lit(rng.random_range(-1.0..1.0))).collect()).unwrap()
}

fn small_swin() -> SwinSpec {
    SwinSpec { feature_size: 6, depths: vec![2, 2], num_heads: vec![2, 3], window_size: 4, ..SwinSpec::default() }
}

#[test]
fn reference_parameter_counts() {
    let swin = Model::new(&ModelSpec::SwinUnetr(SwinSpec::default()), 0).unwrap();
    let n = count_parameters(&swin);
    assert!((14_100_000..=17_300_000).contains(&n), "swin-unetr has {n} parameters");
    let unet = Model::new(&ModelSpec::Unet(UNetSpec::default()), 0).unwrap();
    let n = count_parameters(&unet);
    assert!((27_900_000..=34_100_000).contains(&n), "u-net has {n} parameters");
}

#[test]
fn swin_accepts_minimum_clip_and_rejects_smaller() {
    let model = Model::new(&ModelSpec::SwinUnetr(SwinSpec::default()), 1).unwrap();
    let g = Graph::no_grad();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let x = g.constant(random(&[1, 3, 32, 32, 32], &mut rng));
    let y = model.forward(&g, &x, &mut Mode::Eval).unwrap();
    assert_eq!(y.shape(), [1, 1, 32, 32, 32]);
    assert!(y.value().is_finite());

    for bad in [[1, 3, 16, 16, 16], [1, 3, 32, 48, 32], [1, 1, 32, 32, 32]] {
        let x = g.constant(Tensor::zeros(&bad));
        assert!(matches!(model.forward(&g, &x, &mut Mode::Eval), Err(Error::Invalid(_))), "{bad:?} accepted");
    }
}

#[test]
fn swin_output_matches_input_extent() {
    let model = Model::new(&ModelSpec::SwinUnetr(small_swin()), 2).unwrap();
    assert_eq!(model.downsample_factor(), 8);
    let g = Graph::no_grad();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x = g.constant(random(&[2, 3, 8, 16, 24], &mut rng));
    assert_eq!(model.forward(&g, &x, &mut Mode::Eval).unwrap().shape(), [2, 1, 8, 16, 24]);
}

#[test]
fn unet_shapes() {
    let model = Model::new(&ModelSpec::Unet(UNetSpec::default()), 3).unwrap();
    let g = Graph::no_grad();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let x = g.constant(random(&[1, 3, 32, 48], &mut rng));
    assert_eq!(model.forward(&g, &x, &mut Mode::Eval).unwrap().shape(), [1, 1, 32, 48]);
    let x = g.constant(Tensor::zeros(&[1, 3, 40, 48]));
    assert!(model.forward(&g, &x, &mut Mode::Eval).is_err());
}

#[test]
fn same_seed_same_weights() {
    let spec = ModelSpec::SwinUnetr(small_swin());
    let a = Model::new(&spec, 9).unwrap();
    let b = Model::new(&spec, 9).unwrap();
    let c = Model::new(&spec, 10).unwrap();
    let eq = |x: &Model, y: &Model| x.params().iter().zip(y.params().iter()).all(|((_, p), (_, q))| p.value() == q.value());
    assert!(eq(&a, &b));
    assert!(!eq(&a, &c));
}

#[test]
fn checkpoint_round_trip_and_corruption() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    let model = Model::new(&ModelSpec::Unet(UNetSpec { widths: vec![4, 8], ..UNetSpec::default() }), 4).unwrap();
    let meta = serde_json::json!({"epoch": 3});
    save_checkpoint(&path, &model, &meta).unwrap();
    let loaded = load_checkpoint(&path).unwrap();
    assert_eq!(loaded.meta, meta);
    assert_eq!(loaded.model.spec(), model.spec());
    for ((_, p), (_, q)) in loaded.model.params().iter().zip(model.params().iter()) {
        assert_eq!(p.name, q.name);
        assert_eq!(p.value(), q.value());
    }

    let mut bytes = std::fs::read(&path).unwrap();
    bytes.truncate(bytes.len() - 8);
    std::fs::write(&path, &bytes).unwrap();
    assert!(matches!(load_checkpoint(&path), Err(Error::Data(_))));
    std::fs::write(&path, b"not a model").unwrap();
    assert!(matches!(load_checkpoint(&path), Err(Error::Data(_))));
}

/// Brute-force shifted-window attention over an `L^3` grid: every token attends
/// to the tokens sharing its window after a cyclic shift, restricted to those
/// that were contiguous before the shift, with an explicit relative-position bias.
fn dense_shifted_attention(
    x: &[f64],
    l: usize,
    c: usize,
    heads: usize,
    w: usize,
    s: usize,
    p: &ParamStore<f64>,
    prefix: &str,
) -> Vec<f64> {
    let get = |n: &str| p.value(p.find(&format!("{prefix}.{n}")).unwrap()).data().to_vec();
    let (wq, bq) = (get("attn.qkv.weight"), get("attn.qkv.bias"));
    let (wp, bp) = (get("attn.proj.weight"), get("attn.proj.bias"));
    let table = get("attn.relative_position_bias_table");
    let n = l * l * l;
    let hd = c / heads;
    let scale = 1.0 / (hd as f64).sqrt();
    let mut qkv = vec![0.0; n * 3 * c];
    for t in 0..n {
        for o in 0..3 * c {
            qkv[t * 3 * c + o] = bq[o] + (0..c).map(|i| wq[o * c + i] * x[t * c + i]).sum::<f64>();
        }
    }
    // shifted coordinates and pre-shift segment labels
    let coord = |t: usize| [t / (l * l), (t / l) % l, t % l];
    let shifted = |t: usize| coord(t).map(|v| (v + l - s) % l);
    let seg = |v: usize| if v < l - w { 0 } else if v < l - s { 1 } else { 2 };
    let mut attended = vec![0.0; n * c];
    for a in 0..n {
        let sa = shifted(a);
        let mut nbrs = Vec::new();
        for b in 0..n {
            let sb = shifted(b);
            if (0..3).all(|i| sa[i] / w == sb[i] / w && seg(sa[i]) == seg(sb[i])) {
                nbrs.push(b);
            }
        }
        for h in 0..heads {
            let logits: Vec<f64> = nbrs
                .iter()
                .map(|&b| {
                    let sb = shifted(b);
                    let r: Vec<usize> = (0..3).map(|i| (sa[i] % w + w - 1) - sb[i] % w).collect();
                    let idx = (r[0] * (2 * w - 1) + r[1]) * (2 * w - 1) + r[2];
                    let dot: f64 = (0..hd).map(|d| qkv[a * 3 * c + h * hd + d] * qkv[b * 3 * c + c + h * hd + d]).sum();
                    dot * scale + table[idx * heads + h]
                })
                .collect();
            let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = logits.iter().map(|v| (v - m).exp()).collect();
            let z: f64 = e.iter().sum();
            for (k, &b) in nbrs.iter().enumerate() {
                for d in 0..hd {
                    attended[a * c + h * hd + d] += e[k] / z * qkv[b * 3 * c + 2 * c + h * hd + d];
                }
            }
        }
    }
    let mut out = vec![0.0; n * c];
    for t in 0..n {
        for o in 0..c {
            out[t * c + o] = bp[o] + (0..c).map(|i| wp[o * c + i] * attended[t * c + i]).sum::<f64>();
        }
    }
    out
}

#[test]
fn shifted_window_attention_matches_dense_oracle() {
    let (l, c, heads, w, s) = (8, 8, 2, 4, 2);
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::<f64>::new();
        let block = {
            let mut b = Builder::new(&mut store, &mut rng);
            SwinBlock::new(&mut b.sub("blk"), c, heads, [w; 3], [s; 3], 4.0, 0.0, 0.0, 0.0)
        };
        // larger bias entries than the default init so the term is visible
        let tid = store.find("blk.attn.relative_position_bias_table").unwrap();
        let bias = random::<f64>(store.value(tid).shape(), &mut rng);
        store.set(tid, bias);
        let x = random::<f64>(&[1, l, l, l, c], &mut rng);
        let g = Graph::no_grad();
        let got = block.attention(&g, &store, &g.constant(x.clone()), &mut Mode::Eval);
        let want = dense_shifted_attention(x.data(), l, c, heads, w, s, &store, "blk");
        let err = got.value().data().iter().zip(&want).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-5, "seed {seed}: max abs error {err}");
    }
}

#[test]
fn swin_unetr_gradients_match_finite_differences() {
    let spec = SwinSpec {
        feature_size: 4,
        depths: vec![2],
        num_heads: vec![2],
        window_size: 2,
        ..SwinSpec::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (model, mut store) = SwinUnetr::build_with::<f64>(&spec, &mut rng).unwrap();
    let x = random::<f64>(&[1, 3, 8, 8, 8], &mut rng);
    let weights = random::<f64>(&[1, 1, 8, 8, 8], &mut rng);
    let loss = |store: &ParamStore<f64>| {
        let g = Graph::no_grad();
        let y = model.forward_with(&g, store, &g.constant(x.clone()), &mut Mode::Eval).unwrap();
        y.value().data().iter().zip(weights.data()).map(|(a, b)| a * b).sum::<f64>()
    };
    let g = Graph::new();
    let y = model.forward_with(&g, &store, &g.constant(x.clone()), &mut Mode::Eval).unwrap();
    let out = y.mul(&g.constant(weights.clone())).sum_all();
    let grads = g.backward(&out).into_params();

    // ten weights spread over embedding, attention, merging and decoder
    let mut picked = 0;
    let ids: Vec<_> = store.ids().collect();
    for k in 0..10 {
        let id = ids[(k * 7 + 3) % ids.len()];
        let name = store.get(id).name.clone();
        let len = store.value(id).len();
        let i = (k * 131) % len;
        let analytic = grads.iter().find(|(p, _)| *p == id).map_or(0.0, |(_, t)| t.data()[i]);
        let eps = 1e-6;
        let orig = store.value(id).data()[i];
        store.value_mut(id).data_mut()[i] = orig + eps;
        let up = loss(&store);
        store.value_mut(id).data_mut()[i] = orig - eps;
        let down = loss(&store);
        store.value_mut(id).data_mut()[i] = orig;
        let numeric = (up - down) / (2.0 * eps);
        let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8);
        assert!(rel < 1e-3 || (analytic - numeric).abs() < 1e-8, "{name}[{i}]: analytic {analytic} numeric {numeric}");
        picked += 1;
    }
    assert_eq!(picked, 10);
}

proptest::proptest! {
    #![proptest_config(proptest::prelude::ProptestConfig::with_cases(48))]

    #[test]
    fn partition_and_shift_invert(
        dims in proptest::array::uniform3(1usize..9),
        window in proptest::array::uniform3(1usize..5),
        shift in proptest::array::uniform3(-4isize..5),
        c in 1usize..4,
        seed in proptest::prelude::any::<u64>(),
    ) {
        use crackseq::nets::swin::{cyclic_shift, window_partition, window_reverse};
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = Graph::<f64>::no_grad();
        let x = g.constant(random(&[2, dims[0], dims[1], dims[2], c], &mut rng));
        let (w, rec) = window_partition(&x, window);
        let vol: usize = window.iter().product();
        proptest::prop_assert_eq!(w.shape(), &[2 * rec.num_windows(window), vol, c][..]);
        let back = window_reverse(&w, window, &rec, 2);
        proptest::prop_assert_eq!(back.value(), x.value());
        let back = cyclic_shift(&cyclic_shift(&x, shift), shift.map(|s| -s));
        proptest::prop_assert_eq!(back.value(), x.value());
    }
}
