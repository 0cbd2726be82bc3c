mod common;

use std::path::Path;

use crackseq::datapipe::Split;
use crackseq::imaging::{Mask, RgbImage};
use crackseq::nets::{load_checkpoint, Mode, Model};
use crackseq::seeds;
use crackseq::trainer::*;
use crackseq::{Error, Result};
use crackseq_tensor::{Adam, Graph, Tensor};
use proptest::prelude::*;
use rand::Rng;

/// Plays back fixed validation metrics.
struct Scripted {
    iou: Box<dyn Fn(usize) -> f64>,
    loss: Box<dyn Fn(usize) -> f64>,
    epoch: usize,
    lrs: Vec<f64>,
}

impl Scripted {
    fn new(iou: impl Fn(usize) -> f64 + 'static, loss: impl Fn(usize) -> f64 + 'static) -> Self {
        Self { iou: Box::new(iou), loss: Box::new(loss), epoch: 0, lrs: Vec::new() }
    }
}

impl Learner for Scripted {
    fn train_epoch(&mut self, epoch: usize, lr: f64) -> Result<f64> {
        self.epoch = epoch;
        self.lrs.push(lr);
        Ok(1.0)
    }
    fn validate(&mut self) -> Result<Validation> {
        Ok(Validation { loss_crack: (self.loss)(self.epoch), iou: (self.iou)(self.epoch) })
    }
    fn save(&self, path: &Path, _: &serde_json::Value) -> Result<()> {
        std::fs::write(path, self.epoch.to_string()).unwrap();
        Ok(())
    }
}

#[test]
fn constant_iou_stops_at_epoch_21() {
    let dir = tempfile::tempdir().unwrap();
    let mut stub = Scripted::new(|_| 40.0, |e| 1.0 / e as f64);
    let state = fit(&mut stub, &TrainConfig::default(), dir.path()).unwrap();
    assert_eq!(state.epoch, 21);
    assert_eq!(state.best_epoch, 1);
    assert_eq!(std::fs::read_to_string(dir.path().join(BEST_CKPT)).unwrap(), "1");
    assert_eq!(read_history(&dir.path().join(HISTORY_FILE)).unwrap().len(), 21);
}

#[test]
fn constant_loss_decays_lr_at_11_and_21() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = TrainConfig { initial_lr: 1e-3, max_epochs: 25, ..TrainConfig::default() };
    let mut stub = Scripted::new(|e| e as f64, |_| 0.3);
    let state = fit(&mut stub, &cfg, dir.path()).unwrap();
    let lr = |e: usize| state.history[e - 1].lr;
    assert_eq!(state.epoch, 25);
    assert_eq!(lr(10), 1e-3);
    assert!((lr(11) - 1e-4).abs() < 1e-18 && lr(20) == lr(11));
    assert!((lr(21) - 1e-5).abs() < 1e-18);
    // the reduced rate drives the next epoch
    assert_eq!(stub.lrs[11], lr(11));
}

#[test]
fn nan_loss_aborts_with_state_dump() {
    struct Diverging;
    impl Learner for Diverging {
        fn train_epoch(&mut self, epoch: usize, _: f64) -> Result<f64> {
            Ok(if epoch < 3 { 0.5 } else { f64::NAN })
        }
        fn validate(&mut self) -> Result<Validation> {
            Ok(Validation { loss_crack: 0.5, iou: 1.0 })
        }
        fn save(&self, _: &Path, _: &serde_json::Value) -> Result<()> {
            Ok(())
        }
    }
    let dir = tempfile::tempdir().unwrap();
    let err = fit(&mut Diverging, &TrainConfig::default(), dir.path()).unwrap_err();
    assert!(matches!(err, Error::Runtime(_)));
    let dump: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("state.json")).unwrap()).unwrap();
    assert_eq!(dump["state"]["epoch"], 2);
}

#[test]
fn loss_matches_naive_summation() {
    let mut rng = seeds::rng(5);
    for _ in 0..10 {
        let (n, m) = (3, 50);
        let logits: Vec<f64> = (0..n * m).map(|_| rng.random_range(-6.0..6.0)).collect();
        let mut target: Vec<f64> = (0..n * m).map(|_| rng.random_bool(0.2) as u8 as f64).collect();
        target[m..2 * m].fill(0.0); // one crack-free sample
        let g = Graph::<f64>::new();
        let x = g.constant(Tensor::from_vec(&[n, 1, 5, 10], logits.clone()).unwrap());
        let parts = segmentation_loss(&x, &Tensor::from_vec(&[n, 1, 5, 10], target.clone()).unwrap()).unwrap();

        let mut bce = 0.0;
        for (&z, &t) in logits.iter().zip(&target) {
            let p = 1.0 / (1.0 + (-z).exp());
            bce -= t * p.ln() + (1.0 - t) * (1.0 - p).ln();
        }
        bce /= (n * m) as f64;
        let mut dice = 0.0;
        for i in 0..n {
            let (mut inter, mut ps, mut ts) = (0.0, 0.0, 0.0);
            for j in i * m..(i + 1) * m {
                let p = 1.0 / (1.0 + (-logits[j]).exp());
                inter += p * target[j];
                ps += p;
                ts += target[j];
            }
            if ts > 0.0 {
                dice += 1.0 - (2.0 * inter + 1.0) / (ps + ts + 1.0);
            }
        }
        dice /= n as f64;
        assert!((parts.bce - bce).abs() < 1e-6, "{} vs {bce}", parts.bce);
        assert!((parts.dice - dice).abs() < 1e-6, "{} vs {dice}", parts.dice);
        assert!((parts.total.value().item() - bce - dice).abs() < 1e-6);
    }
}

#[test]
fn one_small_step_lowers_the_batch_loss() {
    for seed in 0..5 {
        let mut model = Model::new(&common::tiny_unet(), seed).unwrap();
        let mut rng = seeds::rng(100 + seed);
        let x = Tensor::from_vec(&[2, 3, 16, 16], (0..2 * 3 * 256).map(|_| rng.random_range(0.0..1.0)).collect()).unwrap();
        let y = Tensor::from_vec(&[2, 1, 16, 16], (0..512).map(|_| rng.random_bool(0.3) as u8 as f32).collect()).unwrap();
        let loss_of = |m: &Model| -> (f32, Vec<_>) {
            let g = Graph::new();
            let logits = m.forward(&g, &g.constant(x.clone()), &mut Mode::Eval).unwrap();
            let l = segmentation_loss(&logits, &y).unwrap().total;
            (l.value().item(), g.backward(&l).into_params())
        };
        let (before, grads) = loss_of(&model);
        let mut opt = Adam::new(model.params(), 1e-5);
        opt.step(model.params_mut(), &grads);
        let (after, _) = loss_of(&model);
        assert!(after < before, "seed {seed}: {after} >= {before}");
    }
}

#[test]
fn sequence_augmentation_is_coherent() {
    let mut rng = seeds::rng(3);
    let frames: Vec<RgbImage> =
        (0..4).map(|_| RgbImage::from_raw(6, 5, (0..90).map(|_| rng.random()).collect()).unwrap()).collect();
    let masks: Vec<Mask> = (0..4).map(|_| Mask::from_raw(6, 5, (0..30).map(|_| rng.random_range(0..2)).collect()).unwrap()).collect();
    let draw = AugmentDraw { hflip: true, ..AugmentDraw::identity() };
    let (imgs, ms) = augment_sequence(&frames, &masks, &draw);
    for t in 0..4 {
        assert_eq!(imgs[t], draw.apply_image(&frames[t]));
        assert_eq!(ms[t], draw.apply_mask(&masks[t]));
        assert_eq!(imgs[t].pixel(0, 2), frames[t].pixel(5, 2));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn augmentation_keeps_masks_monotone_and_binary(seed in any::<u64>(), bits in proptest::collection::vec(0u8..2, 48)) {
        // a monotone 3-frame mask stack: each frame adds pixels
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
    }
}

#[test]
fn short_multi_run_writes_artifacts_and_replays() {
    let data_dir = tempfile::tempdir().unwrap();
    let data = common::tiny_dataset(data_dir.path(), 4, 4);
    let runs = tempfile::tempdir().unwrap();
    let setup = ExperimentSetup {
        experiment: Experiment::AugmentedMulti,
        data_root: data_dir.path().to_path_buf(),
        model: common::tiny_swin(),
        train: TrainConfig { max_epochs: 3, micro_batch: 2, seed: 4, ..TrainConfig::default() },
    };
    let a = run_experiment(&setup, &data, &runs.path().join("a")).unwrap();
    let b = run_experiment(&setup, &data, &runs.path().join("b")).unwrap();
    assert!(a.state.history.len() <= 3);
    assert_eq!(a.state.history, b.state.history);
    let best = a.state.history.iter().map(|r| r.val_iou).fold(f64::NEG_INFINITY, f64::max);
    assert_eq!(a.state.best_iou, Some(best));
    for f in [BEST_CKPT, FINAL_CKPT, HISTORY_FILE, CONFIG_FILE, REPORT_FILE] {
        assert!(runs.path().join("a").join(f).exists(), "{f}");
    }
    let cfg: ExperimentSetup = toml::from_str(&std::fs::read_to_string(runs.path().join("a").join(CONFIG_FILE)).unwrap()).unwrap();
    assert!(cfg.train.augmentation);
    assert_eq!(a.report.samples, data.origins(Split::Test).len());

    // reloading the best checkpoint reproduces its validation IoU exactly
    let model = load_checkpoint(&runs.path().join("a").join(BEST_CKPT)).unwrap().model;
    let (train, val) = experiment_items(Experiment::AugmentedMulti, &data, 4);
    let mut again = ModelLearner::new(model, &data, train, val, &setup.train).unwrap();
    assert_eq!(again.validate().unwrap().iou, best);
}

#[test]
fn experiment_wiring() {
    let data_dir = tempfile::tempdir().unwrap();
    let data = common::tiny_dataset(data_dir.path(), 4, 4);
    let (train, val) = experiment_items(Experiment::Downsampled, &data, 0);
    assert_eq!(train.len(), data.origins(Split::Train).len());
    assert_eq!(val.len(), data.origins(Split::Val).len());
    assert!(train.iter().all(|i| matches!(i, Item::Frame(..))));
    assert_eq!(experiment_items(Experiment::Downsampled, &data, 0).0, train);
    let (full, _) = experiment_items(Experiment::BaselineMono, &data, 0);
    assert_eq!(full.len(), 4 * train.len());
    let (multi, _) = experiment_items(Experiment::BaselineMulti, &data, 0);
    assert!(multi.iter().all(|i| matches!(i, Item::Sequence(_))));

    let wrong = ExperimentSetup {
        experiment: Experiment::BaselineMulti,
        data_root: data_dir.path().to_path_buf(),
        model: common::tiny_unet(),
        train: TrainConfig::default(),
    };
    assert!(matches!(run_experiment(&wrong, &data, &data_dir.path().join("run")), Err(Error::Invalid(_))));
    assert!("9".parse::<Experiment>().unwrap_err().to_string().contains("BL-multi"));
}
