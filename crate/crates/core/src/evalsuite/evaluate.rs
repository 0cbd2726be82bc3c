//! Split-level evaluation of a trained model.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::distractors::{distractor_report, false_positive_mask, merge_tallies, Tallies, DEFAULT_DILATION, DEFAULT_HIT_FRACTION};
use super::metrics::{confusion, metrics, temporal_consistency, ConfusionCounts, Metrics};
use crate::datapipe::{DatasetManifest, Dataset, Split};
use crate::error::{data_err, Error, Result};
use crate::imaging::Mask;
use crate::nets::Model;
use crate::trainer::{frames_of, load, predict, Item, Loaded};

pub const REPORT_SCHEMA: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalParams {
    /// Sigmoid threshold for a crack pixel.
    pub threshold: f64,
    pub micro_batch: usize,
    /// Dilation of distractor footprints, in px.
    pub dilation: usize,
    /// Share of a dilated footprint that must be predicted crack for a hit.
    pub hit_fraction: f64,
}

impl Default for EvalParams {
    fn default() -> Self {
        Self { threshold: 0.5, micro_batch: 4, dilation: DEFAULT_DILATION, hit_fraction: DEFAULT_HIT_FRACTION }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ReportProvenance {
    pub checkpoint: Option<String>,
    pub experiment: Option<String>,
    pub model: String,
    pub manifest_id: String,
    pub threshold: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub schema_version: u32,
    pub split: Split,
    pub samples: usize,
    pub frames: usize,
    pub counts: ConfusionCounts,
    pub metrics: Metrics,
    /// Mean per-sequence score; absent for single-frame sequences.
    pub temporal_consistency: Option<f64>,
    /// Hits on the last frame of every sample.
    pub distractors: Tallies,
    pub provenance: ReportProvenance,
    /// Choices the results depend on that are defaults rather than measured facts.
    pub assumptions: Vec<String>,
}

impl MetricsReport {
    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)?).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let v: serde_json::Value = serde_json::from_str(&text)?;
        match v.get("schema_version").and_then(|s| s.as_u64()) {
            Some(s) if s == REPORT_SCHEMA as u64 => Ok(serde_json::from_value(v)?),
            other => Err(data_err!("{}: unsupported report schema {other:?}", path.display())),
        }
    }
}

/// Short content hash identifying a dataset manifest.
pub fn manifest_id(m: &DatasetManifest) -> String {
    let bytes = serde_json::to_vec(m).expect("manifest serializes");
    Sha256::digest(&bytes)[..8].iter().map(|b| format!("{b:02x}")).collect()
}

/// Per-frame masks for whole sequences, whatever the model kind.
pub fn predict_sequences(model: &Model, seqs: &[Loaded], threshold: f64, micro_batch: usize) -> Result<Vec<Vec<Mask>>> {
    let micro = micro_batch.max(1);
    if model.is_multi_temporal() {
        let mut out = Vec::with_capacity(seqs.len());
        for chunk in seqs.chunks(micro) {
            out.extend(predict(model, chunk, threshold)?.masks);
        }
        return Ok(out);
    }
    seqs.iter()
        .map(|s| {
            let mut masks = Vec::with_capacity(s.images.len());
            for chunk in frames_of(s).chunks(micro) {
                masks.extend(predict(model, chunk, threshold)?.masks.into_iter().map(|mut m| m.remove(0)));
            }
            Ok(masks)
        })
        .collect()
}

/// Micro-aggregated metrics, temporal consistency and distractor tallies on `split`.
pub fn evaluate(model: &Model, data: &Dataset, split: Split, params: &EvalParams) -> Result<MetricsReport> {
    let origins = data.origins(split);
    if origins.is_empty() {
        return Err(data_err!("{} split is empty", split.name()));
    }
    let mut counts = ConfusionCounts::default();
    let (mut tc_sum, mut tc_n, mut frames) = (0.0, 0usize, 0usize);
    let mut tallies = Tallies::new();
    for chunk in origins.chunks(params.micro_batch.max(1)) {
        let seqs = chunk.iter().map(|&o| load(data, Item::Sequence(o))).collect::<Result<Vec<_>>>()?;
        let preds = predict_sequences(model, &seqs, params.threshold, params.micro_batch)?;
        for ((&o, s), p) in chunk.iter().zip(&seqs).zip(&preds) {
            for (pm, tm) in p.iter().zip(&s.masks) {
                counts += confusion(pm, tm)?;
            }
            frames += p.len();
            if p.len() >= 2 {
                tc_sum += temporal_consistency(p, &s.masks)?;
                tc_n += 1;
            }
            let fp = false_positive_mask(p.last().expect("non-empty sequence"), s.masks.last().expect("same length"))?;
            merge_tallies(&mut tallies, &distractor_report(&fp, &data.distractors(o), params.dilation, params.hit_fraction)?);
        }
    }
    Ok(MetricsReport {
        schema_version: REPORT_SCHEMA,
        split,
        samples: origins.len(),
        frames,
        counts,
        metrics: metrics(&counts),
        temporal_consistency: (tc_n > 0).then(|| tc_sum / tc_n as f64),
        distractors: tallies,
        provenance: ReportProvenance {
            checkpoint: None,
            experiment: None,
            model: if model.is_multi_temporal() { "swin_unetr" } else { "unet" }.into(),
            manifest_id: manifest_id(&data.manifest),
            threshold: params.threshold,
        },
        assumptions: vec![
            "optimizer: adam, default moments, no weight decay".into(),
            "loss: bce + soft dice".into(),
            format!("threshold: sigmoid > {}", params.threshold),
            "aggregation: micro (pixel-pooled)".into(),
        ],
    })
}
