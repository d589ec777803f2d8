//! Recorded joint-angle files.
//!
//! ```text
//! t_seconds,shoulder_deg,knee_deg
//! 0.00,0.0,60.0
//! 0.01,0.3,60.0
//! ```

use std::io::Read;

use hapguide_core::JointMap;
use thiserror::Error;

/// Expected header.
pub const MOCAP_HEADER: [&str; 3] = ["t_seconds", "shoulder_deg", "knee_deg"];

/// One recorded sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MocapSample {
    /// Time, seconds.
    pub t: f64,
    /// Joint angles, degrees.
    pub angles: JointMap<f64>,
}

/// Malformed replay file.
#[derive(Debug, Error)]
pub enum MocapError {
    /// Header does not match [`MOCAP_HEADER`].
    #[error("bad header: expected `t_seconds,shoulder_deg,knee_deg`, got `{0}`")]
    Header(String),
    /// Bad data row; `row` counts data rows from 1, `line` is the file line.
    #[error("row {row} (line {line}): {reason}")]
    Row {
        /// Data row number.
        row: usize,
        /// File line number.
        line: u64,
        /// What is wrong.
        reason: String,
    },
    /// No data rows.
    #[error("file has no samples")]
    Empty,
    /// CSV reader failure.
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Parses a replay file.
pub fn read_mocap<R: Read>(input: R) -> Result<Vec<MocapSample>, MocapError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).flexible(true).from_reader(input);
    let header = rdr.headers()?.clone();
    if header.iter().collect::<Vec<_>>() != MOCAP_HEADER {
        return Err(MocapError::Header(header.iter().collect::<Vec<_>>().join(",")));
    }
    let mut out: Vec<MocapSample> = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| MocapError::Row { row, line: e.position().map_or(0, |p| p.line()), reason: e.to_string() })?;
        let line = rec.position().map_or(0, |p| p.line());
        let bad = |reason: String| MocapError::Row { row, line, reason };
        if rec.len() != 3 {
            return Err(bad(format!("expected 3 fields, found {}", rec.len())));
        }
        let mut vals = [0.0; 3];
        for (k, v) in vals.iter_mut().enumerate() {
            *v = rec[k].parse::<f64>().map_err(|_| bad(format!("{}: `{}` is not a number", MOCAP_HEADER[k], &rec[k])))?;
            if !v.is_finite() {
                return Err(bad(format!("{} must be finite", MOCAP_HEADER[k])));
            }
        }
        if let Some(prev) = out.last() {
            if vals[0] <= prev.t {
                return Err(bad(format!("t_seconds {} does not increase (previous {})", vals[0], prev.t)));
            }
        }
        out.push(MocapSample { t: vals[0], angles: JointMap::new(vals[1], vals[2]) });
    }
    if out.is_empty() {
        return Err(MocapError::Empty);
    }
    Ok(out)
}
