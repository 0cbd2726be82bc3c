//! Metrics, temporal consistency, tiled inference, distractor analysis and reports.

mod distractors;
mod evaluate;
mod metrics;
mod report;
mod tile;

pub use distractors::{
    distractor_report, false_positive_mask, merge_tallies, scene_distractor_report, Tallies, Tally, DEFAULT_DILATION, DEFAULT_HIT_FRACTION,
};
pub use evaluate::{evaluate, manifest_id, predict_sequences, EvalParams, MetricsReport, ReportProvenance, REPORT_SCHEMA};
pub use metrics::{confusion, metrics, temporal_consistency, ConfusionCounts, Metrics};
pub use report::{curves_svg, load_run, render_report, render_strip, table_csv, table_text, RunSummary, TABLE_HEADER};
pub use tile::{tile_infer, TileSummary, TiledPrediction};
