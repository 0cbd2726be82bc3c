use std::fs;
use std::path::{Path, PathBuf};

use clap::ArgMatches;
use crackseq::datapipe::{
    build_dataset, ingest_real_dataset, prepare_scene, read_any_scene, scene_checksum, BuildParams, Dataset,
    DatasetManifest, Expectation, Split,
};
use crackseq::evalsuite::{
    confusion, evaluate, false_positive_mask, load_run, metrics, predict_sequences, render_report, render_strip, scene_distractor_report,
    table_text, temporal_consistency, tile_infer, ConfusionCounts, MetricsReport,
};
use crackseq::nets::{load_checkpoint, ModelSpec};
use crackseq::synthgen::{generate_scenes, write_scene};
use crackseq::trainer::{run_experiment, thread_pool, ExperimentSetup, Loaded, BEST_CKPT, CONFIG_FILE, REPORT_FILE};
use crackseq::{Error, Result};

use crate::config::RunConfig;
use crate::{given, BuildArgs, Cli, Command, EvalArgs, GenerateArgs, InferArgs, IngestArgs, ReportArgs, TrainArgs};

pub fn run(cli: Cli, m: &ArgMatches) -> Result<()> {
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    if given(m, "workers") || cli.config.is_none() {
        cfg.train.workers = cli.workers;
    }
    if cfg.train.workers == 0 {
        return Err(Error::Invalid("--workers must be at least 1".into()));
    }
    let pool = thread_pool(cfg.train.workers)?;
    match cli.command {
        Command::Generate(a) => pool.install(|| generate(a, cfg, m)),
        Command::Ingest(a) => ingest(a),
        Command::Build(a) => pool.install(|| build(a, cfg, m)),
        Command::Train(a) => train(a, cfg, m),
        Command::Eval(a) => eval(a, cfg),
        Command::Infer(a) => infer(a, cfg, m),
        Command::Report(a) => report(a, cfg),
    }
}

/// Copies explicitly given flags over config values.
macro_rules! apply {
    ($m:expr, $($id:literal => $target:expr, $value:expr;)*) => {
        $( if given($m, $id) { $target = $value; } )*
    };
}

fn generate(a: GenerateArgs, mut cfg: RunConfig, m: &ArgMatches) -> Result<()> {
    let g = &mut cfg.generate;
    apply!(m,
        "scenes" => g.scenes, a.scenes;
        "seed" => g.seed, a.seed;
        "width" => g.scene.width_px, a.width;
        "height" => g.scene.height_px, a.height;
        "epochs" => g.scene.n_epochs, a.epochs;
        "crack_seeds" => g.scene.n_crack_seeds, a.crack_seeds;
    );
    if a.distractor_scale != 1.0 {
        if !(a.distractor_scale > 0.0) {
            return Err(Error::Invalid("--distractor-scale must be positive".into()));
        }
        g.scene.distractor_params = g.scene.distractor_params.scaled(a.distractor_scale);
    }
    g.scene.validate()?;
    let dirs = generate_scenes(&a.out, g.scenes, &g.scene, g.seed)?;
    for d in &dirs {
        println!("{}  {}", scene_checksum(d)?, d.display());
    }
    cfg.dump(&a.out, "generate.toml")?;
    log::info!("[generate] {} scenes in {}", dirs.len(), a.out.display());
    Ok(())
}

fn ingest(a: IngestArgs) -> Result<()> {
    let scenes = ingest_real_dataset(&a.src)?;
    for (i, s) in scenes.iter().enumerate() {
        let d = write_scene(&a.out, i, s)?;
        println!("{} frames {}x{}  {}", s.len(), s.width(), s.height(), d.display());
    }
    log::info!("[ingest] {} scenes into {}", scenes.len(), a.out.display());
    Ok(())
}

pub fn stats_block(m: &DatasetManifest) -> String {
    let mut out = format!("{:<16}{:>8}{:>8}{:>8}{:>8}{:>14}{:>13}\n", "", "all", "train", "val", "test", "crack img %", "crack px %");
    for (name, t) in [("multi-temporal", &m.multi_stats), ("mono-temporal", &m.mono_stats)] {
        let n = |g: &str| t.get(g).map_or(0, |s| s.samples);
        let all = t.get("all");
        out += &format!(
            "{name:<16}{:>8}{:>8}{:>8}{:>8}{:>14.1}{:>13.1}\n",
            n("all"),
            n("train"),
            n("val"),
            n("test"),
            all.map_or(0.0, |s| 100.0 * s.crack_image_ratio),
            all.map_or(0.0, |s| 100.0 * s.crack_pixel_ratio)
        );
    }
    out
}

fn build(a: BuildArgs, mut cfg: RunConfig, m: &ArgMatches) -> Result<()> {
    let b = &mut cfg.build;
    apply!(m,
        "patch" => b.patch_size, a.patch;
        "seq_len" => b.sequence_length, a.seq_len;
        "balance_ratio" => b.balance_ratio, a.balance_ratio;
        "seed" => b.balance_seed, a.seed;
        "seed" => b.split_seed, a.seed;
        "materialize" => b.materialize, a.materialize;
    );
    let expectation = match a.expect.as_deref() {
        None => None,
        Some("table1") => Some(Expectation::table1()),
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            Some(serde_json::from_str::<Expectation>(&text)?)
        }
    };
    let manifest = build_dataset(&a.data, &cfg.build)?;
    cfg.dump(&a.data, "build.toml")?;
    print!("{}", stats_block(&manifest));
    if let Some(path) = &a.write_golden {
        let name = path.file_stem().map_or("golden".into(), |s| s.to_string_lossy().into_owned());
        let golden = Expectation::from_manifest(&name, &manifest);
        fs::write(path, serde_json::to_string_pretty(&golden)?).map_err(|e| Error::io(path, e))?;
    }
    if let Some(exp) = expectation {
        let lines = exp.check(&manifest);
        let failed = lines.iter().filter(|l| !l.passed()).count();
        for l in &lines {
            let verdict = if l.passed() { "ok" } else { "MISMATCH" };
            println!("[expect {}] {:<28} expected {:>10} got {:>10.3} (±{}) {verdict}", exp.name, l.name, l.expected, l.actual, l.tolerance);
            if !l.passed() {
                log::warn!("{} differs from {}: expected {}, got {}", l.name, exp.name, l.expected, l.actual);
            }
        }
        if failed > 0 && a.strict {
            return Err(Error::Data(format!("{failed} of {} checks against {} failed", lines.len(), exp.name)));
        }
    }
    Ok(())
}

fn train(a: TrainArgs, mut cfg: RunConfig, m: &ArgMatches) -> Result<()> {
    let t = &mut cfg.train;
    apply!(m,
        "max_epochs" => t.max_epochs, a.max_epochs;
        "lr" => t.initial_lr, a.lr;
        "batch_size" => t.batch_size, a.batch_size;
        "micro_batch" => t.micro_batch, a.micro_batch;
        "patience" => t.early_stop_patience, a.patience;
        "seed" => t.seed, a.seed;
        "feature_size" => cfg.swin.feature_size, a.feature_size;
        "window_size" => cfg.swin.window_size, a.window_size;
        "unet_widths" => cfg.unet.widths, a.unet_widths.clone();
    );
    let model = if a.exp.multi_temporal() { ModelSpec::SwinUnetr(cfg.swin.clone()) } else { ModelSpec::Unet(cfg.unet.clone()) };
    model.validate()?;
    cfg.train.validate()?;
    let run_dir = a.run.clone().unwrap_or_else(|| PathBuf::from("runs").join(a.exp.tag()));
    let data = Dataset::open(&a.data, true)?;
    cfg.dump(&run_dir, "run.toml")?;
    let setup = ExperimentSetup { experiment: a.exp, data_root: a.data.clone(), model, train: cfg.train.clone() };
    let result = run_experiment(&setup, &data, &run_dir)?;
    print_report(&result.report);
    log::info!("[train] run written to {}", run_dir.display());
    Ok(())
}

fn print_report(r: &MetricsReport) {
    let mm = &r.metrics;
    println!("split {}  samples {}  frames {}", r.split.name(), r.samples, r.frames);
    println!("IoU {:.2}  P {:.2}  R {:.2}  F1 {:.2}", mm.iou, mm.precision, mm.recall, mm.f1);
    if let Some(tc) = r.temporal_consistency {
        println!("temporal consistency {tc:.4}");
    }
    for (k, t) in &r.distractors {
        println!("{} hits {}/{}", k.name(), t.hits, t.total);
    }
}

fn parse_split(s: &str) -> Result<Split> {
    Split::ALL
        .into_iter()
        .find(|x| x.name() == s)
        .ok_or_else(|| Error::Invalid(format!("unknown split {s:?}; use train, val or test")))
}

fn eval(a: EvalArgs, cfg: RunConfig) -> Result<()> {
    let split = parse_split(&a.split)?;
    let setup = match &a.run {
        Some(run) => {
            let path = run.join(CONFIG_FILE);
            let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            Some(toml::from_str::<ExperimentSetup>(&text).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?)
        }
        None => None,
    };
    let ckpt = a
        .ckpt
        .clone()
        .or_else(|| a.run.as_ref().map(|r| r.join(BEST_CKPT)))
        .ok_or_else(|| Error::Invalid("give --run or --ckpt".into()))?;
    let data_root = a
        .data
        .clone()
        .or_else(|| setup.as_ref().map(|s| s.data_root.clone()))
        .ok_or_else(|| Error::Invalid("give --data or a --run that records it".into()))?;
    let model = load_checkpoint(&ckpt)?.model;
    let data = Dataset::open(&data_root, true)?;
    let params = crackseq::evalsuite::EvalParams { threshold: a.threshold, ..cfg.eval };
    let mut report = evaluate(&model, &data, split, &params)?;
    report.provenance.checkpoint = Some(ckpt.display().to_string());
    report.provenance.experiment = setup.map(|s| s.experiment.tag().to_string());
    let out = a.out.clone().unwrap_or_else(|| a.run.as_ref().map_or_else(|| PathBuf::from(REPORT_FILE), |r| r.join(REPORT_FILE)));
    report.write(&out)?;
    print_report(&report);
    Ok(())
}

fn infer(a: InferArgs, cfg: RunConfig, m: &ArgMatches) -> Result<()> {
    let model = load_checkpoint(&a.ckpt)?.model;
    let mut seq = read_any_scene(&a.scene)?;
    if model.is_multi_temporal() {
        let mut params = BuildParams { clean_masks: cfg.build.clean_masks, ..BuildParams::default() };
        params.sequence_length = if given(m, "seq_len") { a.seq_len } else { cfg.build.sequence_length };
        seq = prepare_scene(seq, &params)?;
    }
    let threshold = if given(m, "threshold") { a.threshold } else { cfg.eval.threshold };
    let pred = tile_infer(&model, &seq, a.patch, threshold, cfg.eval.micro_batch)?;
    fs::create_dir_all(&a.out).map_err(|e| Error::io(&a.out, e))?;
    let mut counts = ConfusionCounts::default();
    for (t, (p, f)) in pred.masks.iter().zip(&seq.frames).enumerate() {
        p.save_png(&a.out.join(format!("pred_{t:02}.png")))?;
        counts += confusion(p, &f.mask)?;
    }
    let targets: Vec<_> = seq.frames.iter().map(|f| f.mask.clone()).collect();
    let tc = if pred.masks.len() >= 2 { Some(temporal_consistency(&pred.masks, &targets)?) } else { None };
    let last = pred.masks.last().expect("at least one frame");
    let fp = false_positive_mask(last, &seq.frames[seq.len() - 1].mask)?;
    let distractors = match scene_distractor_report(&fp, &seq, cfg.eval.dilation, cfg.eval.hit_fraction) {
        Ok(t) => Some(t),
        Err(e) => {
            log::warn!("no distractor analysis: {e}");
            None
        }
    };
    if pred.has_border() {
        log::warn!("scene border outside the {}x{} tile grid was not predicted", pred.grid.width, pred.grid.height);
    }
    let summary = serde_json::json!({
        "tiles": pred.summary(),
        "counts": counts,
        "metrics": metrics(&counts),
        "temporal_consistency": tc,
        "distractors": distractors,
        "checkpoint": a.ckpt.display().to_string(),
        "threshold": threshold,
    });
    let path = a.out.join("infer.json");
    fs::write(&path, serde_json::to_string_pretty(&summary)?).map_err(|e| Error::io(&path, e))?;
    println!("{}", serde_json::to_string_pretty(&summary["metrics"])?);
    Ok(())
}

fn report(a: ReportArgs, cfg: RunConfig) -> Result<()> {
    let runs = a.runs.iter().map(|r| load_run(r)).collect::<Result<Vec<_>>>()?;
    render_report(&runs, &a.out)?;
    print!("{}", table_text(&runs));
    let Some(data_root) = &a.data else { return Ok(()) };
    let pick = |multi: bool| a.runs.iter().zip(&runs).find(|(_, r)| r.experiment.multi_temporal() == multi).map(|(d, _)| d);
    let (Some(mono_dir), Some(multi_dir)) = (pick(false), pick(true)) else {
        log::info!("[report] strips need one mono and one multi run");
        return Ok(());
    };
    write_strip(data_root, mono_dir, multi_dir, &a.out, &cfg)
}

/// Strip for the test sample with the most crack pixels in its last frame.
fn write_strip(data_root: &Path, mono_dir: &Path, multi_dir: &Path, out: &Path, cfg: &RunConfig) -> Result<()> {
    let data = Dataset::open(data_root, false)?;
    let sample = data
        .manifest
        .split_of(Split::Test)
        .max_by_key(|s| (s.frame_crack_pixels.last().copied().unwrap_or(0), std::cmp::Reverse(s.origin)))
        .ok_or_else(|| Error::Data("test split is empty".into()))?;
    let s = data.sequence(sample.origin)?;
    let seq = Loaded { images: s.images, masks: s.masks };
    let run = |dir: &Path| -> Result<Vec<_>> {
        let model = load_checkpoint(&dir.join(BEST_CKPT))?.model;
        Ok(predict_sequences(&model, std::slice::from_ref(&seq), cfg.eval.threshold, cfg.eval.micro_batch)?.remove(0))
    };
    let (mono, multi) = (run(mono_dir)?, run(multi_dir)?);
    let strip = render_strip(&seq.images, &[&seq.masks, &mono, &multi])?;
    let path = out.join(format!("strip_{}.png", sample.origin.id()));
    strip.save_png(&path)?;
    log::info!("[report] strip (input, target, mono, multi) written to {}", path.display());
    Ok(())
}
