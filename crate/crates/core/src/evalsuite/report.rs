//! Comparison tables, training curves and sequence strips.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::evaluate::MetricsReport;
use crate::error::{data_err, invalid, Error, Result};
use crate::imaging::{Mask, RgbImage};
use crate::synthgen::DistractorKind;
use crate::trainer::{read_history, EpochRecord, Experiment, ExperimentSetup, CONFIG_FILE, HISTORY_FILE, REPORT_FILE};

/// Everything the report needs from one run directory.
#[derive(Clone, Debug, PartialEq)]
pub struct RunSummary {
    pub name: String,
    pub experiment: Experiment,
    pub history: Vec<EpochRecord>,
    pub report: MetricsReport,
}

pub fn load_run(dir: &Path) -> Result<RunSummary> {
    let cfg_path = dir.join(CONFIG_FILE);
    let text = fs::read_to_string(&cfg_path).map_err(|e| Error::io(&cfg_path, e))?;
    let setup: ExperimentSetup = toml::from_str(&text).map_err(|e| data_err!("{}: {e}", cfg_path.display()))?;
    let name = dir.file_name().map_or_else(|| dir.display().to_string(), |n| n.to_string_lossy().into_owned());
    Ok(RunSummary {
        name,
        experiment: setup.experiment,
        history: read_history(&dir.join(HISTORY_FILE))?,
        report: MetricsReport::read(&dir.join(REPORT_FILE))?,
    })
}

pub const TABLE_HEADER: [&str; 13] = [
    "run", "exp", "model", "ds", "da", "iou", "precision", "recall", "f1", "temporal_consistency", "pencil_hits", "pencil_total", "epochs",
];

fn rows(runs: &[RunSummary]) -> Vec<[String; 13]> {
    let mut sorted: Vec<&RunSummary> = runs.iter().collect();
    sorted.sort_by(|a, b| (a.experiment, &a.name).cmp(&(b.experiment, &b.name)));
    sorted
        .into_iter()
        .map(|r| {
            let [exp, model, ds, da] = r.experiment.columns();
            let m = &r.report.metrics;
            let pencil = r.report.distractors.get(&DistractorKind::PencilDigit).copied().unwrap_or_default();
            [
                r.name.clone(),
                exp.into(),
                model.into(),
                ds.into(),
                da.into(),
                format!("{:.1}", m.iou),
                format!("{:.1}", m.precision),
                format!("{:.1}", m.recall),
                format!("{:.1}", m.f1),
                r.report.temporal_consistency.map_or_else(String::new, |t| format!("{t:.4}")),
                pencil.hits.to_string(),
                pencil.total.to_string(),
                r.history.len().to_string(),
            ]
        })
        .collect()
}

/// CSV with one row per run, ordered by experiment tag, then run name.
pub fn table_csv(runs: &[RunSummary]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(TABLE_HEADER)?;
    for r in rows(runs) {
        w.write_record(&r)?;
    }
    let bytes = w.into_inner().map_err(|e| invalid!("csv: {e}"))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Aligned plain-text version of the first nine metric columns.
pub fn table_text(runs: &[RunSummary]) -> String {
    let head = ["Exp", "Model", "DS", "DA", "IoU", "P", "R", "F1", "TC"];
    let body: Vec<Vec<String>> = rows(runs).into_iter().map(|r| r[1..10].to_vec()).collect();
    let widths: Vec<usize> =
        (0..head.len()).map(|i| body.iter().map(|r| r[i].len()).chain([head[i].len()]).max().unwrap_or(0)).collect();
    let line = |cells: &[&str]| {
        let mut s = String::new();
        for (i, c) in cells.iter().enumerate() {
            if i > 0 {
                s.push_str("  ");
            }
            let _ = write!(s, "{c:<w$}", w = widths[i]);
        }
        s.trim_end().to_string() + "\n"
    };
    let mut out = line(&head);
    out.push_str(&line(&widths.iter().map(|&w| "-".repeat(w)).collect::<Vec<_>>().iter().map(String::as_str).collect::<Vec<_>>()));
    for r in &body {
        out.push_str(&line(&r.iter().map(String::as_str).collect::<Vec<_>>()));
    }
    out
}

/// Two-panel SVG: training and validation crack loss, and validation IoU, per epoch.
pub fn curves_svg(history: &[EpochRecord]) -> Result<String> {
    if history.is_empty() {
        return Err(invalid!("empty history"));
    }
    let (pw, ph, pad) = (360.0, 220.0, 40.0);
    let n = history.len().max(2) as f64 - 1.0;
    let x = |i: usize| pad + (pw - 2.0 * pad) * i as f64 / n;
    let panel = |series: &[(&str, &str, Vec<f64>)], title: &str, x0: f64| -> String {
        let finite = series.iter().flat_map(|s| s.2.iter().copied()).filter(|v| v.is_finite());
        let (lo, hi) = finite.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
        let (lo, hi) = if lo < hi { (lo, hi) } else { (lo - 0.5, lo + 0.5) };
        let y = |v: f64| ph - pad - (ph - 2.0 * pad) * (v - lo) / (hi - lo);
        let mut s = format!(
            "<g transform=\"translate({x0},0)\"><text x=\"{pad}\" y=\"20\" font-size=\"12\">{title}</text>\
             <rect x=\"{pad}\" y=\"{pad}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"#999\"/>\
             <text x=\"4\" y=\"{:.1}\" font-size=\"9\">{hi:.3}</text><text x=\"4\" y=\"{:.1}\" font-size=\"9\">{lo:.3}</text>",
            pw - 2.0 * pad,
            ph - 2.0 * pad,
            pad + 4.0,
            ph - pad
        );
        for (k, (label, color, vals)) in series.iter().enumerate() {
            let pts: Vec<String> =
                vals.iter().enumerate().filter(|(_, v)| v.is_finite()).map(|(i, &v)| format!("{:.1},{:.1}", x(i), y(v))).collect();
            let _ = write!(
                s,
                "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"/>\
                 <text x=\"{:.1}\" y=\"{:.1}\" font-size=\"10\" fill=\"{color}\">{label}</text>",
                pts.join(" "),
                pw - pad - 90.0,
                pad + 12.0 + 12.0 * k as f64
            );
        }
        s + "</g>"
    };
    let col = |f: fn(&EpochRecord) -> f64| history.iter().map(f).collect::<Vec<_>>();
    let loss = panel(
        &[("train loss", "#1f77b4", col(|r| r.train_loss)), ("val crack loss", "#d62728", col(|r| r.val_loss_crack))],
        "loss",
        0.0,
    );
    let iou = panel(&[("val IoU", "#2ca02c", col(|r| r.val_iou))], "validation IoU (%)", pw);
    Ok(format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{ph}\">\n{loss}\n{iou}\n</svg>\n",
        2.0 * pw
    ))
}

/// Grid image: the input frames on the first row, then one row per mask
/// list (ground truth, predictions), one column per frame.
pub fn render_strip(images: &[RgbImage], rows: &[&[Mask]]) -> Result<RgbImage> {
    let first = images.first().ok_or_else(|| invalid!("no frames to render"))?;
    let (w, h, gap) = (first.width, first.height, 2);
    if rows.iter().any(|r| r.len() != images.len()) {
        return Err(invalid!("every strip row needs {} masks", images.len()));
    }
    let cols = images.len();
    let mut out = RgbImage::new(cols * (w + gap) - gap, (rows.len() + 1) * (h + gap) - gap);
    out.data.fill(255);
    for (t, img) in images.iter().enumerate() {
        for y in 0..h {
            for x in 0..w {
                out.set_pixel(t * (w + gap) + x, y, img.pixel(x, y));
            }
        }
        for (r, masks) in rows.iter().enumerate() {
            let y0 = (r + 1) * (h + gap);
            for y in 0..h {
                for x in 0..w {
                    let v = if masks[t].get(x, y) { 255 } else { 0 };
                    out.set_pixel(t * (w + gap) + x, y0 + y, [v, v, v]);
                }
            }
        }
    }
    Ok(out)
}

/// Writes `table.csv`, `table.txt` and `curves_<run>.svg` into `out`.
pub fn render_report(runs: &[RunSummary], out: &Path) -> Result<Vec<PathBuf>> {
    if runs.is_empty() {
        return Err(invalid!("no runs to report"));
    }
    if let Some(r) = runs.iter().find(|r| r.history.is_empty()) {
        return Err(invalid!("run {} has an empty history", r.name));
    }
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let mut written = Vec::new();
    let mut put = |name: String, body: String| -> Result<()> {
        let p = out.join(name);
        fs::write(&p, body).map_err(|e| Error::io(&p, e))?;
        written.push(p);
        Ok(())
    };
    put("table.csv".into(), table_csv(runs)?)?;
    put("table.txt".into(), table_text(runs))?;
    for r in runs {
        put(format!("curves_{}.svg", r.name), curves_svg(&r.history)?)?;
    }
    Ok(written)
}
