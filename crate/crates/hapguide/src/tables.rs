//! CSV tables: per-trial metrics, condition summaries and comparisons.
//!
//! Floats are written in shortest round-trip form, so reading a table back
//! yields the exact values that were written. Cells that do not apply to a
//! trial are left empty.

use std::io::{Read, Write};

use hapguide_core::devices::Device;
use hapguide_core::engine::SubBlock;
use hapguide_core::metrics::{ConditionSummary, JointMetrics, MetricIndex, MetricRecord, Summary, TrialMetrics};
use hapguide_core::stats::ComparisonRow;
use hapguide_core::{AngleDeg, JointMap, TargetPose};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Failure reading or writing a table.
#[derive(Debug, Error)]
pub enum TableError {
    /// Header is missing required columns, or the table has no rows.
    #[error("schema error: {0}")]
    Schema(String),
    /// A row could not be decoded.
    #[error("line {line}: {reason}")]
    Row {
        /// File line number.
        line: u64,
        /// What is wrong.
        reason: String,
    },
    /// CSV or IO failure.
    #[error(transparent)]
    Csv(#[from] csv::Error),
    /// IO failure.
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Per-trial metrics row. The first twelve columns are the primary table;
/// the rest carry the pooled confusion, path velocity and per-joint values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    /// Simulated subject.
    pub subject_id: u32,
    /// Device name.
    pub device: Device,
    /// Sub-block label.
    pub sub_block: SubBlock,
    /// Position in the session.
    pub trial_index: usize,
    /// Shoulder target, if guided.
    pub target_shoulder_deg: Option<f64>,
    /// Knee target, if guided.
    pub target_knee_deg: Option<f64>,
    /// Goal declared in time.
    pub success: bool,
    /// Confusion index, percent.
    pub confusion_pct: f64,
    /// Reaching time, seconds.
    pub reaching_time_s: Option<f64>,
    /// Angular distance, degrees.
    pub angular_distance_deg: Option<f64>,
    /// Reaching velocity, deg/s.
    pub reaching_velocity_dps: Option<f64>,
    /// Final error, percent.
    pub final_error_pct: Option<f64>,
    /// Confusion with ticks pooled over joints, percent.
    pub confusion_pooled_pct: f64,
    /// Path length over reaching time, deg/s.
    pub path_velocity_dps: Option<f64>,
    /// Shoulder confusion, percent.
    pub shoulder_confusion_pct: Option<f64>,
    /// Shoulder angular distance, degrees.
    pub shoulder_angular_distance_deg: Option<f64>,
    /// Shoulder reaching velocity, deg/s.
    pub shoulder_reaching_velocity_dps: Option<f64>,
    /// Shoulder final error, percent.
    pub shoulder_final_error_pct: Option<f64>,
    /// Knee confusion, percent.
    pub knee_confusion_pct: Option<f64>,
    /// Knee angular distance, degrees.
    pub knee_angular_distance_deg: Option<f64>,
    /// Knee reaching velocity, deg/s.
    pub knee_reaching_velocity_dps: Option<f64>,
    /// Knee final error, percent.
    pub knee_final_error_pct: Option<f64>,
}

/// Columns every metrics table must have.
pub const METRICS_REQUIRED: [&str; 12] = [
    "subject_id",
    "device",
    "sub_block",
    "trial_index",
    "target_shoulder_deg",
    "target_knee_deg",
    "success",
    "confusion_pct",
    "reaching_time_s",
    "angular_distance_deg",
    "reaching_velocity_dps",
    "final_error_pct",
];

impl From<&MetricRecord> for MetricsRow {
    fn from(r: &MetricRecord) -> Self {
        let m = &r.metrics;
        let js = m.per_joint.shoulder;
        let jk = m.per_joint.knee;
        MetricsRow {
            subject_id: r.subject_id,
            device: r.device,
            sub_block: r.sub_block,
            trial_index: r.trial_index,
            target_shoulder_deg: r.targets.as_map().shoulder.map(AngleDeg::degrees),
            target_knee_deg: r.targets.as_map().knee.map(AngleDeg::degrees),
            success: m.success,
            confusion_pct: m.confusion_index,
            reaching_time_s: m.reaching_time,
            angular_distance_deg: m.angular_distance,
            reaching_velocity_dps: m.reaching_velocity,
            final_error_pct: m.final_error,
            confusion_pooled_pct: m.confusion_pooled,
            path_velocity_dps: m.path_velocity,
            shoulder_confusion_pct: js.map(|j| j.confusion_index),
            shoulder_angular_distance_deg: js.and_then(|j| j.angular_distance),
            shoulder_reaching_velocity_dps: js.and_then(|j| j.reaching_velocity),
            shoulder_final_error_pct: js.and_then(|j| j.final_error),
            knee_confusion_pct: jk.map(|j| j.confusion_index),
            knee_angular_distance_deg: jk.and_then(|j| j.angular_distance),
            knee_reaching_velocity_dps: jk.and_then(|j| j.reaching_velocity),
            knee_final_error_pct: jk.and_then(|j| j.final_error),
        }
    }
}

impl MetricsRow {
    /// Rebuilds the record.
    pub fn to_record(&self) -> Result<MetricRecord, String> {
        let angle = |v: Option<f64>| v.map(AngleDeg::new).transpose().map_err(|e| e.to_string());
        let targets = TargetPose::new(JointMap::new(angle(self.target_shoulder_deg)?, angle(self.target_knee_deg)?))
            .map_err(|e| e.to_string())?;
        let joint = |c: Option<f64>, d, v, f| c.map(|confusion_index| JointMetrics { confusion_index, angular_distance: d, reaching_velocity: v, final_error: f });
        Ok(MetricRecord {
            subject_id: self.subject_id,
            device: self.device,
            sub_block: self.sub_block,
            trial_index: self.trial_index,
            targets,
            metrics: TrialMetrics {
                confusion_index: self.confusion_pct,
                confusion_pooled: self.confusion_pooled_pct,
                success: self.success,
                reaching_time: self.reaching_time_s,
                angular_distance: self.angular_distance_deg,
                reaching_velocity: self.reaching_velocity_dps,
                path_velocity: self.path_velocity_dps,
                final_error: self.final_error_pct,
                per_joint: JointMap::new(
                    joint(
                        self.shoulder_confusion_pct,
                        self.shoulder_angular_distance_deg,
                        self.shoulder_reaching_velocity_dps,
                        self.shoulder_final_error_pct,
                    ),
                    joint(
                        self.knee_confusion_pct,
                        self.knee_angular_distance_deg,
                        self.knee_reaching_velocity_dps,
                        self.knee_final_error_pct,
                    ),
                ),
            },
        })
    }
}

fn write_rows<W: Write, T: Serialize>(out: W, rows: impl IntoIterator<Item = T>) -> Result<(), TableError> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn read_rows<R: Read, T: for<'de> Deserialize<'de>>(input: R, required: &[&str]) -> Result<Vec<T>, TableError> {
    let mut rdr = csv::Reader::from_reader(input);
    let headers = rdr.headers()?.clone();
    if headers.is_empty() || (headers.len() == 1 && headers[0].is_empty()) {
        return Err(TableError::Schema("empty table".into()));
    }
    let missing: Vec<&str> = required.iter().copied().filter(|c| !headers.iter().any(|h| h == *c)).collect();
    if !missing.is_empty() {
        return Err(TableError::Schema(format!("missing columns: {}", missing.join(", "))));
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        rows.push(rec.deserialize(Some(&headers)).map_err(|e| TableError::Row { line, reason: e.to_string() })?);
    }
    Ok(rows)
}

/// Writes the per-trial metrics table.
pub fn write_metrics<W: Write>(out: W, records: &[MetricRecord]) -> Result<(), TableError> {
    write_rows(out, records.iter().map(MetricsRow::from))
}

/// Reads a per-trial metrics table. Extra columns may be absent; the
/// primary columns must be present and at least one row must exist.
pub fn read_metrics<R: Read>(input: R) -> Result<Vec<MetricRecord>, TableError> {
    let mut rdr = csv::Reader::from_reader(input);
    let headers = rdr.headers()?.clone();
    let missing: Vec<&str> = METRICS_REQUIRED.iter().copied().filter(|c| !headers.iter().any(|h| h == *c)).collect();
    if !missing.is_empty() {
        return Err(TableError::Schema(format!("missing columns: {}", missing.join(", "))));
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let get = |name: &str| headers.iter().position(|h| h == name).map(|i| rec.get(i).unwrap_or("").trim());
        // Absent optional columns read as empty cells.
        let mut full = csv::StringRecord::new();
        let names = MetricsRow::COLUMNS;
        for n in names {
            full.push_field(get(n).unwrap_or(""));
        }
        let header = csv::StringRecord::from(names.to_vec());
        let row: MetricsRow = full.deserialize(Some(&header)).map_err(|e| TableError::Row { line, reason: e.to_string() })?;
        out.push(row.to_record().map_err(|reason| TableError::Row { line, reason })?);
    }
    if out.is_empty() {
        return Err(TableError::Schema("metrics table has no rows".into()));
    }
    Ok(out)
}

impl MetricsRow {
    /// Column names in file order.
    pub const COLUMNS: [&'static str; 22] = [
        "subject_id",
        "device",
        "sub_block",
        "trial_index",
        "target_shoulder_deg",
        "target_knee_deg",
        "success",
        "confusion_pct",
        "reaching_time_s",
        "angular_distance_deg",
        "reaching_velocity_dps",
        "final_error_pct",
        "confusion_pooled_pct",
        "path_velocity_dps",
        "shoulder_confusion_pct",
        "shoulder_angular_distance_deg",
        "shoulder_reaching_velocity_dps",
        "shoulder_final_error_pct",
        "knee_confusion_pct",
        "knee_angular_distance_deg",
        "knee_reaching_velocity_dps",
        "knee_final_error_pct",
    ];
}

/// One line of the summary table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    /// Device.
    pub device: Device,
    /// Sub-block.
    pub sub_block: SubBlock,
    /// Subject, when summarizing per subject.
    pub subject_id: Option<u32>,
    /// `all` for combined values, otherwise the joint name.
    pub joint: String,
    /// Index name.
    pub index: String,
    /// Trials in the condition.
    pub trials: usize,
    /// Success ratio of the condition, percent.
    pub success_ratio_pct: f64,
    /// Defined values.
    pub n: usize,
    /// Mean.
    pub mean: Option<f64>,
    /// Sample standard deviation.
    pub std: Option<f64>,
    /// Median.
    pub median: Option<f64>,
    /// First quartile.
    pub q1: Option<f64>,
    /// Third quartile.
    pub q3: Option<f64>,
    /// Minimum.
    pub min: Option<f64>,
    /// Maximum.
    pub max: Option<f64>,
}

impl SummaryRow {
    fn new(c: &ConditionSummary, joint: &str, index: MetricIndex, s: Option<&Summary>) -> Self {
        SummaryRow {
            device: c.key.device,
            sub_block: c.key.sub_block,
            subject_id: c.key.subject_id,
            joint: joint.to_string(),
            index: index.name().to_string(),
            trials: c.trials,
            success_ratio_pct: c.success_ratio,
            n: s.map_or(0, |s| s.n),
            mean: s.map(|s| s.mean),
            std: s.map(|s| s.std),
            median: s.map(|s| s.median),
            q1: s.map(|s| s.q1),
            q3: s.map(|s| s.q3),
            min: s.map(|s| s.min),
            max: s.map(|s| s.max),
        }
    }
}

/// Flattens condition summaries into rows: combined values, then each guided joint.
pub fn summary_rows(summaries: &[ConditionSummary]) -> Vec<SummaryRow> {
    let mut rows = Vec::new();
    for c in summaries {
        for (i, s) in &c.indices {
            rows.push(SummaryRow::new(c, "all", *i, s.as_ref()));
        }
        for (j, list) in c.per_joint.iter() {
            for (i, s) in list {
                rows.push(SummaryRow::new(c, j.name(), *i, s.as_ref()));
            }
        }
    }
    rows
}

/// Writes the summary table.
pub fn write_summary<W: Write>(out: W, summaries: &[ConditionSummary]) -> Result<(), TableError> {
    write_rows(out, summary_rows(summaries))
}

/// Reads a summary table.
pub fn read_summary<R: Read>(input: R) -> Result<Vec<SummaryRow>, TableError> {
    read_rows(input, &["device", "sub_block", "joint", "index", "n", "mean"])
}

/// One line of the comparison table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonCsvRow {
    /// Index name.
    pub index: String,
    /// `a vs b`.
    pub pair: String,
    /// `min(W+, W−)`.
    #[serde(rename = "W")]
    pub w: Option<f64>,
    /// Non-zero differences.
    pub n: Option<usize>,
    /// `exact` or `normal`.
    pub method: Option<String>,
    /// Two-sided p-value.
    pub p: Option<f64>,
    /// Significance marker.
    pub stars: Option<String>,
    /// Reason the test could not be run, if any.
    pub note: Option<String>,
}

impl From<&ComparisonRow> for ComparisonCsvRow {
    fn from(r: &ComparisonRow) -> Self {
        let base = ComparisonCsvRow {
            index: r.index.name().to_string(),
            pair: r.pair.label(),
            w: None,
            n: None,
            method: None,
            p: None,
            stars: None,
            note: None,
        };
        match &r.result {
            Ok((w, s)) => ComparisonCsvRow {
                w: Some(w.w_statistic),
                n: Some(w.n_effective),
                method: Some(w.method.name().to_string()),
                p: Some(w.p_value),
                stars: Some(s.stars().to_string()),
                ..base
            },
            Err(note) => ComparisonCsvRow { note: Some(note.clone()), ..base },
        }
    }
}

/// Writes the comparison table.
pub fn write_comparison<W: Write>(out: W, rows: &[ComparisonRow]) -> Result<(), TableError> {
    write_rows(out, rows.iter().map(ComparisonCsvRow::from))
}

/// Reads a comparison table.
pub fn read_comparison<R: Read>(input: R) -> Result<Vec<ComparisonCsvRow>, TableError> {
    read_rows(input, &["index", "pair", "W", "n", "method", "p", "stars"])
}
