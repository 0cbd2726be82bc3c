//! Acceptance criteria. Every test prints one `[PASS]`/`[FAIL]` line and
//! fails when its criterion is not met.
//!
//! Criterion 1 runs on the published dataset when `CRACKSEQ_TABLE1_DATA`
//! points at its ingested scenes, and on the bundled synthetic fixture
//! otherwise. Criterion 9 trains six to twelve desk-scale models and takes
//! the better part of an hour on one core.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Display;
use std::io::Write;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use crackseq::datapipe::*;
use crackseq::evalsuite::{confusion, metrics, ConfusionCounts};
use crackseq::imaging::{Mask, RgbImage};
use crackseq::nets::layers::Builder;
use crackseq::nets::swin::{cyclic_shift, window_partition, window_reverse, SwinBlock};
use crackseq::nets::{count_parameters, Mode, Model, ModelSpec, SwinSpec, SwinUnetr, UNetSpec};
use crackseq::seeds;
use crackseq::synthgen::{generate_scene, generate_scenes, DistractorKind, DistractorParams, Frame, FrameSequence, Provenance, SceneSpec};
use crackseq::trainer::*;
use crackseq::{Error, Result};
use crackseq_tensor::{Graph, ParamStore, Tensor};
use proptest::prelude::*;
use proptest::test_runner::{Config, TestCaseError, TestRunner};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Prints the verdict line outside the test harness' capture.
fn verdict(id: &str, ok: bool, detail: impl Display) -> bool {
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "[{}] {id}: {detail}", if ok { "PASS" } else { "FAIL" });
    ok
}

fn random<F: crackseq_tensor::Float>(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<F> {
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| F::lit(rng.random_range(-1.0..1.0))).collect()).unwrap()
}

fn crackseq(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_crackseq")).args(args).output().expect("crackseq binary runs")
}

// ---------------------------------------------------------------- 1

#[test]
fn c1_pipeline_statistics() {
    let mut notes = Vec::new();
    let mut ok = true;

    // the published counts follow from the slab's patch tallies alone
    let m = simulate_table1_counts(0).unwrap();
    let table1 = Expectation::table1();
    let counts: Vec<CheckLine> = table1.check(&m).into_iter().filter(|l| l.name.contains("samples")).collect();
    let bad: Vec<String> = counts.iter().filter(|l| !l.passed()).map(|l| format!("{} {}", l.name, l.actual)).collect();
    ok &= bad.is_empty();
    notes.push(format!("table1 counts from tallies {}/{} exact", counts.len() - bad.len(), counts.len()));

    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures");
    let (data, expect, _tmp) = match std::env::var_os("CRACKSEQ_TABLE1_DATA") {
        Some(real) => (real.into(), "table1".to_string(), None),
        None => {
            let tmp = tempfile::tempdir().unwrap();
            let data = tmp.path().join("fixture");
            let config = fixtures.join("pipeline.toml");
            let out = crackseq(&["--config", config.to_str().unwrap(), "generate", "--out", data.to_str().unwrap()]);
            assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
            (data, fixtures.join("pipeline_golden.json").display().to_string(), Some(tmp))
        }
    };
    let data: std::path::PathBuf = data;
    let mut args = vec!["build", "--data", data.to_str().unwrap(), "--expect", &expect, "--strict"];
    let config = fixtures.join("pipeline.toml");
    if expect != "table1" {
        args = [&["--config", config.to_str().unwrap()][..], &args].concat();
    }
    let out = crackseq(&args);
    let stdout = String::from_utf8_lossy(&out.stdout);
    let lines: Vec<&str> = stdout.lines().filter(|l| l.starts_with("[expect")).collect();
    let mismatches = lines.iter().filter(|l| l.ends_with("MISMATCH")).count();
    ok &= out.status.success() && !lines.is_empty() && mismatches == 0;
    notes.push(format!("build --expect {}: {}/{} checks", if expect == "table1" { "table1" } else { "fixture golden" }, lines.len() - mismatches, lines.len()));
    assert!(verdict("C1 pipeline statistics", ok, notes.join("; ")), "{bad:?}\n{stdout}");
}

// ---------------------------------------------------------------- 2

#[test]
fn c2_parameter_counts() {
    let swin = count_parameters(&Model::new(&ModelSpec::SwinUnetr(SwinSpec::default()), 0).unwrap());
    let unet = count_parameters(&Model::new(&ModelSpec::Unet(UNetSpec::default()), 0).unwrap());
    let within = |n: usize, target: f64| (n as f64 - target).abs() <= 0.1 * target;
    let ok = within(swin, 15.7e6) && within(unet, 31e6);
    assert!(verdict("C2 parameter counts", ok, format!("swin_unetr {swin} (15.7 M ±10%), unet {unet} (31 M ±10%)")));
}

// ---------------------------------------------------------------- 3

#[test]
fn c3_shapes_and_constraints() {
    let swin = Model::new(&ModelSpec::SwinUnetr(SwinSpec::default()), 1).unwrap();
    let unet = Model::new(&ModelSpec::Unet(UNetSpec::default()), 1).unwrap();
    let mut rng = seeds::rng(0);
    let shape_of = |m: &Model, s: &[usize], rng: &mut ChaCha8Rng| -> Result<Vec<usize>> {
        let g = Graph::no_grad();
        let y = m.forward(&g, &g.constant(random::<f32>(s, rng)), &mut Mode::Eval)?;
        assert!(y.value().is_finite());
        Ok(y.shape().to_vec())
    };
    let full = shape_of(&swin, &[1, 3, 32, 128, 128], &mut rng).unwrap();
    let min = shape_of(&swin, &[1, 3, 32, 32, 32], &mut rng).unwrap();
    let small = shape_of(&swin, &[1, 3, 16, 16, 16], &mut rng);
    let flat = shape_of(&unet, &[1, 3, 128, 128], &mut rng).unwrap();
    let ok = full == [1, 1, 32, 128, 128]
        && min == [1, 1, 32, 32, 32]
        && matches!(small, Err(Error::Invalid(_)))
        && flat == [1, 1, 128, 128];
    let detail = format!(
        "swin (1,3,32,128,128)->{full:?}, 32^3->{min:?}, 16^3 {}, unet 128x128->{flat:?}",
        if small.is_err() { "rejected" } else { "ACCEPTED" }
    );
    assert!(verdict("C3 shape/constraint suite", ok, detail));
}

// ---------------------------------------------------------------- 4

/// Dense attention over an `l^3` grid: each token attends to the tokens
/// sharing its window after a cyclic shift by `s`, restricted to those that
/// were contiguous before the shift, plus the relative-position bias.
fn dense_shifted_attention(x: &[f64], l: usize, c: usize, heads: usize, w: usize, s: usize, p: &ParamStore<f64>) -> Vec<f64> {
    let get = |n: &str| p.value(p.find(&format!("blk.{n}")).unwrap()).data().to_vec();
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
    let coord = |t: usize| [t / (l * l), (t / l) % l, t % l];
    let shifted = |t: usize| coord(t).map(|v| (v + l - s) % l);
    let seg = |v: usize| if v < l - w { 0 } else if v < l - s { 1 } else { 2 };
    let mut attended = vec![0.0; n * c];
    for a in 0..n {
        let sa = shifted(a);
        let nbrs: Vec<usize> = (0..n)
            .filter(|&b| {
                let sb = shifted(b);
                (0..3).all(|i| sa[i] / w == sb[i] / w && seg(sa[i]) == seg(sb[i]))
            })
            .collect();
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
fn c4_attention_oracle() {
    let (l, c, heads, w, s) = (8, 8, 2, 4, 2);
    let mut worst: f64 = 0.0;
    for seed in 0..20 {
        let mut rng = seeds::rng(seed);
        let mut store = ParamStore::<f64>::new();
        let block = {
            let mut b = Builder::new(&mut store, &mut rng);
            SwinBlock::new(&mut b.sub("blk"), c, heads, [w; 3], [s; 3], 4.0, 0.0, 0.0, 0.0)
        };
        let tid = store.find("blk.attn.relative_position_bias_table").unwrap();
        let bias = random::<f64>(store.value(tid).shape(), &mut rng);
        store.set(tid, bias);
        let x = random::<f64>(&[1, l, l, l, c], &mut rng);
        let g = Graph::no_grad();
        let got = block.attention(&g, &store, &g.constant(x.clone()), &mut Mode::Eval);
        let want = dense_shifted_attention(x.data(), l, c, heads, w, s, &store);
        let err = got.value().data().iter().zip(&want).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        worst = worst.max(err);
    }
    let ok = worst < 1e-5;
    assert!(verdict("C4 attention oracle", ok, format!("8^3 grid, window 4, shift 2, 20 seeds, max abs diff {worst:.2e} (< 1e-5)")));
}

// ---------------------------------------------------------------- 5

#[test]
fn c5_gradient_check() {
    let spec = SwinSpec { feature_size: 4, depths: vec![2], num_heads: vec![2], window_size: 2, ..SwinSpec::default() };
    let mut rng = seeds::rng(5);
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
    let grads = g.backward(&y.mul(&g.constant(weights.clone())).sum_all()).into_params();

    let ids: Vec<_> = store.ids().collect();
    let (mut worst, mut tiny): (f64, usize) = (0.0, 0);
    let mut failures = Vec::new();
    for k in 0..10 {
        let id = ids[(k * 7 + 3) % ids.len()];
        let i = (k * 131) % store.value(id).len();
        let analytic = grads.iter().find(|(p, _)| *p == id).map_or(0.0, |(_, t)| t.data()[i]);
        let eps = 1e-6;
        let orig = store.value(id).data()[i];
        store.value_mut(id).data_mut()[i] = orig + eps;
        let up = loss(&store);
        store.value_mut(id).data_mut()[i] = orig - eps;
        let down = loss(&store);
        store.value_mut(id).data_mut()[i] = orig;
        let numeric = (up - down) / (2.0 * eps);
        let diff = (analytic - numeric).abs();
        let size = analytic.abs().max(numeric.abs());
        // both essentially zero counts as agreement
        if diff < 1e-8 && size < 1e-6 {
            tiny += 1;
            continue;
        }
        let rel = diff / size;
        worst = worst.max(rel);
        if rel >= 1e-3 {
            failures.push(format!("{}[{i}]", store.get(id).name));
        }
    }
    let ok = failures.is_empty();
    assert!(verdict("C5 gradient check", ok, format!("C=4, one stage, 10 weights, max rel error {worst:.2e} (< 1e-3), {tiny} with |grad| < 1e-6 agree to 1e-8 {failures:?}")));
}

// ---------------------------------------------------------------- 6

struct Scripted {
    iou: fn(usize) -> f64,
    loss: fn(usize) -> f64,
    epoch: usize,
}

impl Learner for Scripted {
    fn train_epoch(&mut self, epoch: usize, _: f64) -> Result<f64> {
        self.epoch = epoch;
        Ok(1.0)
    }
    fn validate(&mut self) -> Result<Validation> {
        Ok(Validation { loss_crack: (self.loss)(self.epoch), iou: (self.iou)(self.epoch) })
    }
    fn save(&self, _: &Path, _: &serde_json::Value) -> Result<()> {
        Ok(())
    }
}

#[test]
fn c6_trainer_semantics() {
    let dir = tempfile::tempdir().unwrap();
    let mut flat_iou = Scripted { iou: |_| 40.0, loss: |e| 1.0 / e as f64, epoch: 0 };
    let stop = fit(&mut flat_iou, &TrainConfig::default(), &dir.path().join("a")).unwrap().epoch;
    let cfg = TrainConfig { initial_lr: 1e-3, max_epochs: 30, ..TrainConfig::default() };
    let mut flat_loss = Scripted { iou: |e| e as f64, loss: |_| 0.3, epoch: 0 };
    let state = fit(&mut flat_loss, &cfg, &dir.path().join("b")).unwrap();
    let decays: Vec<usize> = state.history.windows(2).filter(|w| w[1].lr < w[0].lr).map(|w| w[1].epoch).collect();
    let ok = stop == 21 && decays == [11, 21];
    assert!(verdict("C6 trainer semantics", ok, format!("constant IoU stops at epoch {stop}; constant loss decays lr at epochs {decays:?}")));
}

// ---------------------------------------------------------------- 7

#[test]
fn c7_metric_oracles() {
    let mut rng = seeds::rng(1);
    let mut mismatches = 0;
    for _ in 0..100 {
        let mut mask = |p: f64| Mask::from_raw(16, 16, (0..256).map(|_| rng.random_bool(p) as u8).collect()).unwrap();
        let (p, t) = (mask(0.3), mask(0.2));
        let c = confusion(&p, &t).unwrap();
        let mut o = [0u64; 4];
        for y in 0..16 {
            for x in 0..16 {
                o[match (p.get(x, y), t.get(x, y)) {
                    (true, true) => 0,
                    (true, false) => 1,
                    (false, true) => 2,
                    (false, false) => 3,
                }] += 1;
            }
        }
        let m = metrics(&c);
        let (tp, fp, fn_) = (o[0] as f64, o[1] as f64, o[2] as f64);
        let (prec, rec) = (100.0 * tp / (tp + fp), 100.0 * tp / (tp + fn_));
        let exact = [c.tp, c.fp, c.fn_, c.tn] == o
            && m.iou == 100.0 * tp / (tp + fp + fn_)
            && m.precision == prec
            && m.recall == rec
            && (m.f1 - 2.0 * prec * rec / (prec + rec)).abs() < 1e-9;
        mismatches += !exact as usize;
    }
    let hand = metrics(&ConfusionCounts { tp: 2, fp: 1, fn_: 1, tn: 0 }).iou;
    let ok = mismatches == 0 && hand == 50.0;
    assert!(verdict("C7 metric oracles", ok, format!("{mismatches}/100 random 16x16 cases differ; TP=2 FP=1 FN=1 -> IoU {hand}")));
}

// ---------------------------------------------------------------- 8

fn suite<S: Strategy>(cases: u32, strategy: S, test: impl Fn(S::Value) -> std::result::Result<(), TestCaseError>) -> std::result::Result<(), String> {
    let mut runner = TestRunner::new(Config { cases, failure_persistence: None, ..Config::default() });
    runner.run(&strategy, test).map_err(|e| e.to_string())
}

fn monotone_masks() -> std::result::Result<(), String> {
    suite(24, (any::<u64>(), 0usize..5, 1usize..9), |(seed, n_seeds, n_epochs)| {
        let spec = SceneSpec {
            width_px: 96,
            height_px: 80,
            n_epochs,
            n_crack_seeds: n_seeds,
            rng_seed: seed,
            distractor_params: DistractorParams::default().scaled(0.4),
            ..SceneSpec::default()
        };
        let seq = generate_scene(&spec).unwrap();
        prop_assert_eq!(seq.len(), n_epochs);
        for w in seq.frames.windows(2) {
            prop_assert!(w[0].mask.is_subset_of(&w[1].mask));
        }
        Ok(())
    })
}

fn clean_mask_idempotent() -> std::result::Result<(), String> {
    suite(64, prop::collection::vec(prop::bool::weighted(0.3), 20 * 14), |bits| {
        let once = clean_mask(&Mask::from_raw(20, 14, bits.iter().map(|&b| b as u8).collect()).unwrap());
        prop_assert_eq!(clean_mask(&once), once);
        Ok(())
    })
}

/// Split hygiene and `|mono| = 32 |multi|`.
fn splits_and_counts() -> std::result::Result<(), String> {
    suite(64, (3usize..400, any::<u64>(), 0.0f64..1.0), |(n, seed, crack_frac)| {
        let candidates: Vec<SequenceSample> = (0..n)
            .map(|i| SequenceSample {
                origin: Origin { scene: 0, row: i / 20, col: i % 20 },
                frame_crack_pixels: (0..32).map(|t| ((i as f64) < crack_frac * n as f64 && t > i % 32) as u32 * 3).collect(),
            })
            .collect();
        let scene = SceneSource { dir: "x".into(), frames: 32, width: 1, height: 1, checksum: String::new() };
        let params = BuildParams { balance_seed: seed, split_seed: seed ^ 1, ..BuildParams::default() };
        let Ok(m) = DatasetManifest::assemble(params, vec![scene], candidates.clone()) else {
            prop_assert!(balance(&candidates, 2.0, seed).unwrap().len() < 3);
            return Ok(());
        };
        let k = m.samples.len();
        for (s, want) in Split::ALL.iter().zip(split_sizes(k, (0.6, 0.2, 0.2)).unwrap()) {
            prop_assert_eq!(m.split_of(*s).count(), want);
        }
        let ids: BTreeSet<_> = m.samples.iter().map(|s| s.sample.origin).collect();
        prop_assert_eq!(ids.len(), k);
        let mono = deserialize(&m);
        prop_assert_eq!(mono.len(), 32 * k);
        let split_of: BTreeMap<_, _> = m.samples.iter().map(|s| (s.sample.origin, s.split)).collect();
        for (ms, split) in &mono {
            prop_assert_eq!(split_of[&ms.origin], *split);
        }
        Ok(())
    })
}

fn augmentation_preserves_masks() -> std::result::Result<(), String> {
    suite(64, (any::<u64>(), prop::collection::vec(0u8..2, 48)), |(seed, bits)| {
        let m0 = Mask::from_raw(8, 6, bits.iter().map(|&b| b & (bits[0] ^ 1)).collect()).unwrap();
        let m1 = Mask::from_raw(8, 6, bits.clone()).unwrap();
        let m2 = m1.union(&Mask::from_raw(8, 6, (0..48).map(|i| (i % 7 == 0) as u8).collect()).unwrap());
        let masks = vec![m0, m1, m2];
        let imgs = vec![RgbImage::new(8, 6); 3];
        let draw = AugmentDraw::sample(&AugmentPolicy::default(), &mut seeds::rng(seed));
        let (_, out) = augment_sequence(&imgs, &masks, &draw);
        for t in 0..3 {
            prop_assert!(out[t].data.iter().all(|&v| v <= 1));
            prop_assert_eq!(out[t].count(), masks[t].count());
        }
        prop_assert!(out[0].is_subset_of(&out[1]) && out[1].is_subset_of(&out[2]));
        let photometric_only = AugmentDraw { hflip: false, vflip: false, ..draw };
        prop_assert_eq!(augment_sequence(&imgs, &masks, &photometric_only).1, masks);
        Ok(())
    })
}

fn partition_and_shift_invert() -> std::result::Result<(), String> {
    let dims = proptest::array::uniform3(1usize..9);
    let window = proptest::array::uniform3(1usize..5);
    let shift = proptest::array::uniform3(-4isize..5);
    suite(48, (dims, window, shift, 1usize..4, any::<u64>()), |(dims, window, shift, c, seed)| {
        let g = Graph::<f64>::no_grad();
        let x = g.constant(random(&[2, dims[0], dims[1], dims[2], c], &mut seeds::rng(seed)));
        let (w, rec) = window_partition(&x, window);
        let back = window_reverse(&w, window, &rec, 2);
        prop_assert_eq!(back.value(), x.value());
        let back = cyclic_shift(&cyclic_shift(&x, shift), shift.map(|s| -s));
        prop_assert_eq!(back.value(), x.value());
        Ok(())
    })
}

/// Patches cut on the scene grid reassemble into the scene inside the grid.
fn stitch_exact() -> std::result::Result<(), String> {
    let geometry = (1usize..6).prop_flat_map(|p| (p..40, p..40, Just(p)));
    suite(64, (geometry, 1usize..4, any::<u64>()), |((w, h, patch), t, seed)| {
        let mut rng = seeds::rng(seed);
        let frames = (0..t)
            .map(|_| Frame {
                image: RgbImage::new(w, h),
                mask: Mask::from_raw(w, h, (0..w * h).map(|_| rng.random_bool(0.3) as u8).collect()).unwrap(),
            })
            .collect();
        let seq = FrameSequence { frames, distractors: Default::default(), provenance: Provenance::Real("x".into()) };
        let grid = default_crop(w, h, patch);
        let mut masks = vec![Mask::new(w, h); t];
        for s in extract_patches(&seq, 0, patch, None).unwrap() {
            let cut = cut_patch(&seq, s.origin, patch, grid);
            for f in 0..t {
                prop_assert_eq!(cut.masks[f].count() as u32, s.frame_crack_pixels[f]);
                for y in 0..patch {
                    let at = (s.origin.row * patch + y) * w + s.origin.col * patch;
                    masks[f].data[at..][..patch].copy_from_slice(&cut.masks[f].data[y * patch..][..patch]);
                }
            }
        }
        for f in 0..t {
            for y in 0..h {
                for x in 0..w {
                    let inside = x < grid.width && y < grid.height;
                    prop_assert_eq!(masks[f].get(x, y), inside && seq.frames[f].mask.get(x, y));
                }
            }
        }
        Ok(())
    })
}

#[test]
fn c8_invariant_suites() {
    let suites: [(&str, fn() -> std::result::Result<(), String>); 7] = [
        ("monotone masks", monotone_masks),
        ("clean_mask idempotence", clean_mask_idempotent),
        ("split hygiene + |mono|=32|multi|", splits_and_counts),
        ("augmentation mask preservation", augmentation_preserves_masks),
        ("partition/shift inverses", partition_and_shift_invert),
        ("stitch exactness", stitch_exact),
        ("padding 25->32", || {
            suite(64, 1usize..=32, |n| {
                let labels: Vec<usize> = (0..n).collect();
                let out = pad_sequence(&labels, 32).unwrap();
                prop_assert_eq!(out.len(), 32);
                prop_assert!(out.windows(2).all(|w| w[0] <= w[1] && w[1] - w[0] <= 1));
                prop_assert_eq!(out.iter().collect::<BTreeSet<_>>().len(), n);
                Ok(())
            })
        }),
    ];
    let mut failed = Vec::new();
    for (name, run) in suites {
        if let Err(e) = run() {
            failed.push(format!("{name}: {e}"));
        }
    }
    let detail = format!("{}/{} property suites hold {failed:?}", suites.len() - failed.len(), suites.len());
    assert!(verdict("C8 invariant suites", failed.is_empty(), detail));
}

// ---------------------------------------------------------------- 9

const BENCH_SCENES: usize = 96;
const BENCH_DATA_SEED: u64 = 7;
const BENCH_TRAIN_SEEDS: [u64; 3] = [0, 1, 2];

/// 64x64 scenes over 8 load epochs with distractors shrunk to match.
fn bench_scene() -> SceneSpec {
    SceneSpec {
        width_px: 64,
        height_px: 64,
        n_epochs: 8,
        distractor_counts: [(DistractorKind::PencilDigit, 2), (DistractorKind::Cable, 1), (DistractorKind::Cavity, 2)].into(),
        distractor_params: DistractorParams::default().scaled(0.3),
        ..SceneSpec::default()
    }
}

fn bench_train(seed: u64) -> TrainConfig {
    TrainConfig {
        max_epochs: 60,
        initial_lr: 1e-3,
        early_stop_patience: 10,
        lr_patience: 5,
        seed,
        ..TrainConfig::default()
    }
}

fn bench_models() -> (ModelSpec, ModelSpec) {
    let swin = SwinSpec { feature_size: 12, window_size: 4, depths: vec![2, 2], num_heads: vec![3, 6], ..SwinSpec::default() };
    let unet = UNetSpec { widths: vec![16, 32, 64, 128], ..UNetSpec::default() };
    (ModelSpec::SwinUnetr(swin), ModelSpec::Unet(unet))
}

struct Outcome {
    iou: f64,
    pencil: f64,
    epochs: usize,
}

fn bench_run(exp: Experiment, model: ModelSpec, seed: u64, data: &Dataset, root: &Path, runs: &Path) -> Outcome {
    let setup = ExperimentSetup { experiment: exp, data_root: root.to_path_buf(), model, train: bench_train(seed) };
    let r = run_experiment(&setup, data, &runs.join(format!("{}_{seed}", exp.tag()))).unwrap();
    let pencil = r.report.distractors.get(&DistractorKind::PencilDigit).and_then(|t| t.rate()).unwrap_or(0.0);
    Outcome { iou: r.report.metrics.iou, pencil, epochs: r.state.epoch }
}

#[test]
fn c9_desk_benchmark() {
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).try_init();
    let start = Instant::now();
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path().join("bench");
    generate_scenes(&root, BENCH_SCENES, &bench_scene(), BENCH_DATA_SEED).unwrap();
    let params = BuildParams { patch_size: 64, sequence_length: 8, ..BuildParams::default() };
    build_dataset(&root, &params).unwrap();
    let data = Dataset::open(&root, false).unwrap();
    let (swin, unet) = bench_models();

    let (mut yes, mut no) = (0, 0);
    for seed in BENCH_TRAIN_SEEDS {
        let multi = bench_run(Experiment::BaselineMulti, swin.clone(), seed, &data, &root, &tmp.path().join("runs"));
        let mono = bench_run(Experiment::BaselineMono, unet.clone(), seed, &data, &root, &tmp.path().join("runs"));
        let (a, b) = (multi.iou - mono.iou >= 2.0, multi.pencil <= mono.pencil);
        let _ = writeln!(
            std::io::stdout().lock(),
            "    seed {seed}: IoU multi {:.1} ({} ep) vs mono {:.1} ({} ep) [{}]; pencil hit rate multi {:.2} vs mono {:.2} [{}]",
            multi.iou,
            multi.epochs,
            mono.iou,
            mono.epochs,
            if a { "a ok" } else { "a not met" },
            multi.pencil,
            mono.pencil,
            if b { "b ok" } else { "b not met" },
        );
        if a && b {
            yes += 1;
        } else {
            no += 1;
        }
        // a majority is decided
        if yes * 2 > BENCH_TRAIN_SEEDS.len() || no * 2 > BENCH_TRAIN_SEEDS.len() {
            break;
        }
    }
    let minutes = start.elapsed().as_secs_f64() / 60.0;
    let ok = yes * 2 > BENCH_TRAIN_SEEDS.len();
    let detail = format!("{yes} of {} seeds satisfy (a) and (b), majority needed; {minutes:.1} min", yes + no);
    assert!(verdict("C9 desk-scale directional result", ok, detail));
}
