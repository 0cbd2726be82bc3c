//! The epoch loop, the model-backed learner and the experiment runner.

use std::fs;
use std::path::{Path, PathBuf};

use crackseq_tensor::{Adam, Graph, ParamId, Tensor};
use rand::seq::{index, SliceRandom};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::augment::{augment_sequence, AugmentDraw};
use super::config::{Experiment, TrainConfig};
use super::data::{load, logits_to_masks, to_tensors, Item, Loaded};
use super::loss::segmentation_loss;
use super::state::{dump_state, write_history, TrainState};
use crate::datapipe::{Dataset, Split};
use crate::error::{data_err, invalid, Error, Result};
use crate::evalsuite::{self, ConfusionCounts, MetricsReport};
use crate::imaging::Mask;
use crate::nets::{load_checkpoint, save_checkpoint, Mode, Model, ModelSpec};
use crate::seeds;

pub const BEST_CKPT: &str = "best.ckpt";
pub const FINAL_CKPT: &str = "final.ckpt";
pub const HISTORY_FILE: &str = "history.csv";
pub const CONFIG_FILE: &str = "config.toml";
pub const REPORT_FILE: &str = "report.json";

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Validation {
    pub loss_crack: f64,
    /// Crack IoU in percent.
    pub iou: f64,
}

/// What the epoch loop drives. Implemented by [`ModelLearner`] and by
/// scripted stubs in tests.
pub trait Learner {
    /// One pass over the training data at learning rate `lr`; returns the mean loss.
    fn train_epoch(&mut self, epoch: usize, lr: f64) -> Result<f64>;
    fn validate(&mut self) -> Result<Validation>;
    fn save(&self, path: &Path, meta: &serde_json::Value) -> Result<()>;
}

/// Trains until early stop or `max_epochs`, writing `history.csv`,
/// `best.ckpt` (on every new best IoU) and `final.ckpt` into `run_dir`.
pub fn fit(learner: &mut dyn Learner, cfg: &TrainConfig, run_dir: &Path) -> Result<TrainState> {
    cfg.validate()?;
    fs::create_dir_all(run_dir).map_err(|e| Error::io(run_dir, e))?;
    let mut state = TrainState::new(cfg.initial_lr);
    loop {
        let epoch = state.epoch + 1;
        let train_loss = match learner.train_epoch(epoch, state.lr) {
            Ok(l) if l.is_finite() => l,
            Ok(l) => return Err(abort(run_dir, &state, format!("training loss {l} at epoch {epoch}"))),
            Err(Error::Runtime(msg)) => return Err(abort(run_dir, &state, format!("epoch {epoch}: {msg}"))),
            Err(e) => return Err(e),
        };
        let v = learner.validate()?;
        let d = state.observe(train_loss, v.loss_crack, v.iou, cfg);
        log::info!(
            "[epoch] {epoch} train_loss={train_loss:.6} val_loss_crack={:.6} val_iou={:.3} lr={:e}",
            v.loss_crack,
            v.iou,
            state.lr
        );
        if d.lr_reduced {
            log::info!("[lr] reduced to {:e} at epoch {epoch}", state.lr);
        }
        if d.improved {
            learner.save(&run_dir.join(BEST_CKPT), &serde_json::json!({ "epoch": epoch, "val_iou": v.iou }))?;
        }
        write_history(&run_dir.join(HISTORY_FILE), &state.history)?;
        if d.stop {
            log::info!("[stop] epoch {epoch}, best val_iou={:.3} at epoch {}", state.best_iou.unwrap_or(f64::NAN), state.best_epoch);
            break;
        }
    }
    learner.save(&run_dir.join(FINAL_CKPT), &serde_json::json!({ "epoch": state.epoch, "val_iou": state.history.last().map(|r| r.val_iou) }))?;
    Ok(state)
}

fn abort(run_dir: &Path, state: &TrainState, reason: String) -> Error {
    if let Err(e) = dump_state(run_dir, state, &reason) {
        log::error!("could not write state dump: {e}");
    }
    Error::Runtime(format!("{reason}; state written to {}", run_dir.join("state.json").display()))
}

/// Predicted masks for a batch, and its mean crack-class loss.
pub struct Predicted {
    /// `N` lists of `T` masks (one mask per list for frame models).
    pub masks: Vec<Vec<Mask>>,
    pub loss_crack: f64,
}

/// Inference on loaded samples of the model's kind, without gradients.
pub fn predict(model: &Model, samples: &[Loaded], threshold: f64) -> Result<Predicted> {
    let (x, y) = to_tensors(samples, model.is_multi_temporal())?;
    let (w, h) = (samples[0].images[0].width, samples[0].images[0].height);
    let g = Graph::no_grad();
    let logits = model.forward(&g, &g.constant(x), &mut Mode::Eval)?;
    let loss = segmentation_loss(&logits, &y)?;
    Ok(Predicted { masks: logits_to_masks(logits.value(), threshold, w, h), loss_crack: loss.dice })
}

/// Splits a sequence into single-frame samples.
pub fn frames_of(seq: &Loaded) -> Vec<Loaded> {
    seq.images
        .iter()
        .zip(&seq.masks)
        .map(|(i, m)| Loaded { images: vec![i.clone()], masks: vec![m.clone()] })
        .collect()
}

pub fn thread_pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Runtime(format!("thread pool: {e}")))
}

/// Gradient-descent learner over a dataset.
pub struct ModelLearner<'d> {
    pub model: Model,
    opt: Adam<f32>,
    data: &'d Dataset,
    train: Vec<Item>,
    val: Vec<Item>,
    cfg: TrainConfig,
    pool: rayon::ThreadPool,
    /// Extra checkpoint metadata.
    pub meta: serde_json::Value,
}

impl<'d> ModelLearner<'d> {
    pub fn new(model: Model, data: &'d Dataset, train: Vec<Item>, val: Vec<Item>, cfg: &TrainConfig) -> Result<Self> {
        cfg.validate()?;
        if train.is_empty() {
            return Err(data_err!("training split is empty"));
        }
        if val.is_empty() {
            return Err(data_err!("validation split is empty"));
        }
        let multi = model.is_multi_temporal();
        if train.iter().chain(&val).any(|i| matches!(i, Item::Sequence(_)) != multi) {
            return Err(invalid!(
                "{} model needs {} samples",
                if multi { "sequence" } else { "frame" },
                if multi { "sequence" } else { "single-frame" }
            ));
        }
        let f = model.downsample_factor();
        let p = data.patch_size();
        if p % f != 0 || (multi && data.sequence_length() % f != 0) {
            return Err(invalid!(
                "patch {p} and sequence length {} must be multiples of the model's factor {f}",
                data.sequence_length()
            ));
        }
        let opt = Adam::new(model.params(), cfg.initial_lr);
        Ok(Self { model, opt, data, train, val, cfg: cfg.clone(), pool: thread_pool(cfg.workers)?, meta: serde_json::Value::Null })
    }

    /// Loads a batch in parallel; with `augment_epoch`, each sample gets a
    /// draw keyed by its id and the epoch, so results are order independent.
    fn load_batch(&self, items: &[Item], augment_epoch: Option<usize>) -> Result<Vec<Loaded>> {
        let seed = self.cfg.seed;
        let policy = &self.cfg.augment;
        self.pool.install(|| {
            items
                .par_iter()
                .map(|&item| {
                    let mut s = load(self.data, item)?;
                    if let Some(epoch) = augment_epoch {
                        let stream = seeds::keyed_seed(seed, "augment", epoch as u64);
                        let draw = AugmentDraw::sample(policy, &mut seeds::rng(seeds::keyed_seed(stream, "sample", item.key())));
                        (s.images, s.masks) = augment_sequence(&s.images, &s.masks, &draw);
                    }
                    Ok(s)
                })
                .collect()
        })
    }
}

impl Learner for ModelLearner<'_> {
    fn train_epoch(&mut self, epoch: usize, lr: f64) -> Result<f64> {
        self.opt.lr = lr;
        let mut order = self.train.clone();
        order.shuffle(&mut seeds::rng(seeds::keyed_seed(self.cfg.seed, "shuffle", epoch as u64)));
        let ids: Vec<ParamId> = self.model.params().ids().collect();
        let multi = self.model.is_multi_temporal();
        let mut total = 0.0;
        for (b, batch) in order.chunks(self.cfg.batch_size).enumerate() {
            let samples = self.load_batch(batch, self.cfg.augmentation.then_some(epoch))?;
            let mut acc: Vec<Option<Tensor<f32>>> = vec![None; ids.len()];
            let mut batch_loss = 0.0;
            for (k, mb) in samples.chunks(self.cfg.micro_batch).enumerate() {
                let (x, y) = to_tensors(mb, multi)?;
                let g = Graph::new();
                let key = ((epoch as u64) << 32) | ((b as u64) << 8) | k as u64;
                let mut mode = Mode::Train(seeds::rng(seeds::keyed_seed(self.cfg.seed, "dropout", key)));
                let logits = self.model.forward(&g, &g.constant(x), &mut mode)?;
                let parts = segmentation_loss(&logits, &y)?;
                // each micro-batch loss is a mean; weight it by its share of the batch
                let frac = mb.len() as f64 / batch.len() as f64;
                batch_loss += frac * (parts.bce + parts.dice);
                for (pid, grad) in g.backward(&parts.total.scale(frac as f32)).into_params() {
                    match &mut acc[pid.index()] {
                        Some(a) => a.add_assign(&grad),
                        slot => *slot = Some(grad),
                    }
                }
            }
            let grads: Vec<(ParamId, Tensor<f32>)> =
                ids.iter().zip(acc).filter_map(|(&id, g)| g.map(|g| (id, g))).collect();
            if grads.iter().any(|(_, g)| !g.is_finite()) {
                return Err(Error::Runtime("non-finite gradient".into()));
            }
            self.opt.step(self.model.params_mut(), &grads);
            total += batch_loss * batch.len() as f64;
        }
        Ok(total / order.len() as f64)
    }

    fn validate(&mut self) -> Result<Validation> {
        let mut counts = ConfusionCounts::default();
        let mut loss = 0.0;
        for chunk in self.val.chunks(self.cfg.micro_batch) {
            let samples = self.load_batch(chunk, None)?;
            let p = predict(&self.model, &samples, self.cfg.threshold)?;
            loss += p.loss_crack * chunk.len() as f64;
            for (s, preds) in samples.iter().zip(&p.masks) {
                for (pm, tm) in preds.iter().zip(&s.masks) {
                    counts += evalsuite::confusion(pm, tm)?;
                }
            }
        }
        Ok(Validation { loss_crack: loss / self.val.len() as f64, iou: evalsuite::metrics(&counts).iou })
    }

    fn save(&self, path: &Path, meta: &serde_json::Value) -> Result<()> {
        let mut m = meta.clone();
        if let (Some(obj), Some(extra)) = (m.as_object_mut(), self.meta.as_object()) {
            obj.extend(extra.iter().map(|(k, v)| (k.clone(), v.clone())));
        }
        save_checkpoint(path, &self.model, &m)
    }
}

/// Resolved settings of one experiment run, dumped as `config.toml`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSetup {
    pub experiment: Experiment,
    pub data_root: PathBuf,
    pub model: ModelSpec,
    pub train: TrainConfig,
}

impl ExperimentSetup {
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| invalid!("config serialization: {e}"))
    }
}

/// Train/validation items for an experiment.
pub fn experiment_items(exp: Experiment, data: &Dataset, seed: u64) -> (Vec<Item>, Vec<Item>) {
    let pick = |split: Split| -> Vec<Item> {
        if exp.multi_temporal() {
            return data.origins(split).into_iter().map(Item::Sequence).collect();
        }
        let all: Vec<Item> = data.mono_items(split).into_iter().map(|(o, t)| Item::Frame(o, t)).collect();
        if !exp.downsampled() {
            return all;
        }
        let k = data.origins(split).len().min(all.len());
        let mut rng = seeds::rng(seeds::keyed_seed(seed, "downsample", split as u64));
        let mut chosen = index::sample(&mut rng, all.len(), k).into_vec();
        chosen.sort_unstable();
        chosen.into_iter().map(|i| all[i]).collect()
    };
    (pick(Split::Train), pick(Split::Val))
}

#[derive(Clone, Debug)]
pub struct ExperimentResult {
    pub state: TrainState,
    pub report: MetricsReport,
}

/// Trains the model for `setup.experiment` and evaluates its best checkpoint
/// on the untouched test split. The tag decides the model family and whether
/// augmentation is on; the rest of the config is used as given.
pub fn run_experiment(setup: &ExperimentSetup, data: &Dataset, run_dir: &Path) -> Result<ExperimentResult> {
    let exp = setup.experiment;
    if setup.model.is_multi_temporal() != exp.multi_temporal() {
        return Err(invalid!(
            "experiment {exp} needs a {} model",
            if exp.multi_temporal() { "swin_unetr" } else { "unet" }
        ));
    }
    let mut setup = setup.clone();
    if setup.train.augmentation != exp.augmented() {
        log::info!("[train] augmentation set to {} by experiment {exp}", exp.augmented());
        setup.train.augmentation = exp.augmented();
    }
    fs::create_dir_all(run_dir).map_err(|e| Error::io(run_dir, e))?;
    let cfg_path = run_dir.join(CONFIG_FILE);
    fs::write(&cfg_path, setup.to_toml()?).map_err(|e| Error::io(&cfg_path, e))?;

    let (train, val) = experiment_items(exp, data, setup.train.seed);
    log::info!("[train] experiment {exp}: {} train, {} val items", train.len(), val.len());
    let model = Model::new(&setup.model, seeds::sub_seed(setup.train.seed, "init"))?;
    let mut learner = ModelLearner::new(model, data, train, val, &setup.train)?;
    learner.meta = serde_json::json!({ "experiment": exp.tag(), "manifest": evalsuite::manifest_id(&data.manifest) });
    let state = fit(&mut learner, &setup.train, run_dir)?;

    let best = run_dir.join(BEST_CKPT);
    let model = load_checkpoint(&best)?.model;
    let params = evalsuite::EvalParams { threshold: setup.train.threshold, micro_batch: setup.train.micro_batch, ..Default::default() };
    let mut report = evalsuite::evaluate(&model, data, Split::Test, &params)?;
    report.provenance.checkpoint = Some(best.display().to_string());
    report.provenance.experiment = Some(exp.tag().to_string());
    report.write(&run_dir.join(REPORT_FILE))?;
    Ok(ExperimentResult { state, report })
}
