//! Performance indices of a trial and per-condition summaries.
//!
//! Indices come in three groups. Confusion and success apply to every trial;
//! reaching time, angular distance and reaching velocity only to successful
//! trials; final error only to failed ones.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::devices::Device;
use crate::engine::{Outcome, SubBlock, TrialLog};
use crate::joint::{JointId, JointMap, TargetPose};
use crate::Error;

/// Per-tick motion below this many degrees does not count as movement.
pub const MOTION_DEADBAND_DEG: f64 = 0.01;

/// Indices restricted to one guided joint.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct JointMetrics {
    /// Percent of guided ticks spent moving against the cue.
    pub confusion_index: f64,
    /// Path length, degrees (success only).
    pub angular_distance: Option<f64>,
    /// `|target − initial| / reaching_time` (success only).
    pub reaching_velocity: Option<f64>,
    /// Remaining share of the initial error, percent (failure only).
    pub final_error: Option<f64>,
}

/// All indices of one trial.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrialMetrics {
    /// Confusion averaged over guided joints, percent.
    pub confusion_index: f64,
    /// Confusion with ticks pooled over guided joints, percent.
    pub confusion_pooled: f64,
    /// Whether the goal was declared within the time limit.
    pub success: bool,
    /// Seconds to declaration (success only).
    pub reaching_time: Option<f64>,
    /// Path length summed over guided joints, degrees (success only).
    pub angular_distance: Option<f64>,
    /// Net displacement over reaching time, deg/s (success only).
    pub reaching_velocity: Option<f64>,
    /// Path length over reaching time, deg/s (success only).
    pub path_velocity: Option<f64>,
    /// Remaining share of the initial error, percent (failure only).
    pub final_error: Option<f64>,
    /// Per guided joint values; `None` for unguided joints.
    pub per_joint: JointMap<Option<JointMetrics>>,
}

fn guided(log: &TrialLog) -> impl Iterator<Item = (JointId, f64)> + '_ {
    log.spec.targets.guided().map(|(j, a)| (j, a.degrees()))
}

fn non_empty(log: &TrialLog) -> Result<(), Error> {
    if log.samples.is_empty() {
        Err(Error::InvalidInput("trial log has no samples"))
    } else {
        Ok(())
    }
}

/// `(opposite_ticks, active_ticks)` for one joint.
///
/// A tick (sample i−1 → i) is active when the cue at i−1 indicates a direction
/// and the error at i−1 exceeds the goal tolerance. It is opposite when the
/// joint moved more than the deadband against the sign of that error.
fn confusion_counts(log: &TrialLog, joint: JointId) -> (usize, usize) {
    let mut opposite = 0;
    let mut active = 0;
    for pair in log.samples.windows(2) {
        let (prev, next) = (&pair[0], &pair[1]);
        let Some(err) = prev.errors[joint] else { continue };
        let cued = prev.cue_for(joint).is_some_and(|c| c.is_active());
        if !cued || libm::fabs(err) <= log.tolerance {
            continue;
        }
        active += 1;
        let delta = next.angles[joint] - prev.angles[joint];
        if libm::fabs(delta) > MOTION_DEADBAND_DEG && (delta > 0.0) != (err > 0.0) {
            opposite += 1;
        }
    }
    (opposite, active)
}

fn percent(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        100.0 * num as f64 / den as f64
    }
}

/// Confusion index of one joint, percent; 0 when the joint was never actively cued.
pub fn joint_confusion_index(log: &TrialLog, joint: JointId) -> Result<f64, Error> {
    non_empty(log)?;
    let (o, a) = confusion_counts(log, joint);
    Ok(percent(o, a))
}

/// Confusion index averaged over guided joints, percent.
pub fn confusion_index(log: &TrialLog) -> Result<f64, Error> {
    non_empty(log)?;
    let per: Vec<f64> = guided(log).map(|(j, _)| {
        let (o, a) = confusion_counts(log, j);
        percent(o, a)
    }).collect();
    Ok(per.iter().sum::<f64>() / per.len() as f64)
}

/// Confusion index with opposite and active ticks pooled over guided joints.
pub fn confusion_pooled(log: &TrialLog) -> Result<f64, Error> {
    non_empty(log)?;
    let (o, a) = guided(log).map(|(j, _)| confusion_counts(log, j)).fold((0, 0), |(o, a), (x, y)| (o + x, a + y));
    Ok(percent(o, a))
}

/// Whether the goal was declared within the time limit.
pub fn success(log: &TrialLog) -> bool {
    matches!(log.outcome, Outcome::Success { .. })
}

/// Seconds from trial start to the declaration.
pub fn reaching_time(log: &TrialLog) -> Result<f64, Error> {
    match log.outcome {
        Outcome::Success { reaching_time } => Ok(reaching_time),
        Outcome::Timeout => Err(Error::NotApplicable("reaching time is defined for successful trials only")),
    }
}

fn path_length(log: &TrialLog, joint: JointId) -> f64 {
    log.samples.windows(2).map(|w| libm::fabs(w[1].angles[joint] - w[0].angles[joint])).sum()
}

fn net_displacement(log: &TrialLog, joint: JointId, target: f64) -> f64 {
    libm::fabs(target - log.samples[0].angles[joint])
}

/// Total travelled angle summed over guided joints, degrees.
pub fn angular_distance(log: &TrialLog) -> Result<f64, Error> {
    reaching_time(log)?;
    non_empty(log)?;
    Ok(guided(log).map(|(j, _)| path_length(log, j)).sum())
}

/// `Σ|target − initial| / reaching_time`; 0 for a zero-length trial.
pub fn reaching_velocity(log: &TrialLog) -> Result<f64, Error> {
    let rt = reaching_time(log)?;
    non_empty(log)?;
    let net: f64 = guided(log).map(|(j, t)| net_displacement(log, j, t)).sum();
    Ok(if rt > 0.0 { net / rt } else { 0.0 })
}

/// `angular_distance / reaching_time`; 0 for a zero-length trial.
pub fn path_velocity(log: &TrialLog) -> Result<f64, Error> {
    let rt = reaching_time(log)?;
    let d = angular_distance(log)?;
    Ok(if rt > 0.0 { d / rt } else { 0.0 })
}

fn remaining_share(remaining: f64, required: f64) -> f64 {
    if required > 0.0 {
        100.0 * remaining / required
    } else if remaining == 0.0 {
        0.0
    } else {
        100.0
    }
}

/// `100 · Σ|final − target| / Σ|initial − target|`, percent.
///
/// When no displacement was required, 0 if the final pose is on target, else 100.
pub fn final_error(log: &TrialLog) -> Result<f64, Error> {
    if success(log) {
        return Err(Error::NotApplicable("final error is defined for failed trials only"));
    }
    non_empty(log)?;
    let last = &log.samples[log.samples.len() - 1];
    let (remaining, required) = guided(log).fold((0.0, 0.0), |(r, q), (j, t)| {
        (r + libm::fabs(last.angles[j] - t), q + net_displacement(log, j, t))
    });
    Ok(remaining_share(remaining, required))
}

fn joint_metrics(log: &TrialLog, joint: JointId, target: f64) -> JointMetrics {
    let (o, a) = confusion_counts(log, joint);
    let last = &log.samples[log.samples.len() - 1];
    match log.outcome {
        Outcome::Success { reaching_time } => JointMetrics {
            confusion_index: percent(o, a),
            angular_distance: Some(path_length(log, joint)),
            reaching_velocity: Some(if reaching_time > 0.0 {
                net_displacement(log, joint, target) / reaching_time
            } else {
                0.0
            }),
            final_error: None,
        },
        Outcome::Timeout => JointMetrics {
            confusion_index: percent(o, a),
            angular_distance: None,
            reaching_velocity: None,
            final_error: Some(remaining_share(libm::fabs(last.angles[joint] - target), net_displacement(log, joint, target))),
        },
    }
}

/// Every index of one trial.
pub fn trial_metrics(log: &TrialLog) -> Result<TrialMetrics, Error> {
    non_empty(log)?;
    let ok = success(log);
    let per_joint = JointMap::from_fn(|j| log.spec.targets.get(j).map(|t| joint_metrics(log, j, t.degrees())));
    Ok(TrialMetrics {
        confusion_index: confusion_index(log)?,
        confusion_pooled: confusion_pooled(log)?,
        success: ok,
        reaching_time: reaching_time(log).ok(),
        angular_distance: angular_distance(log).ok(),
        reaching_velocity: reaching_velocity(log).ok(),
        path_velocity: path_velocity(log).ok(),
        final_error: if ok { None } else { Some(final_error(log)?) },
        per_joint,
    })
}

/// The six reported indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum MetricIndex {
    /// Percent of guided time moving against the cue.
    Confusion,
    /// Success (100 or 0 per trial; averaged it is the success ratio).
    Success,
    /// Seconds to declaration.
    ReachingTime,
    /// Travelled angle, degrees.
    AngularDistance,
    /// Net displacement over reaching time, deg/s.
    ReachingVelocity,
    /// Remaining share of the initial error, percent.
    FinalError,
}

impl MetricIndex {
    /// All indices in report order.
    pub const ALL: [MetricIndex; 6] = [
        MetricIndex::Confusion,
        MetricIndex::Success,
        MetricIndex::ReachingTime,
        MetricIndex::AngularDistance,
        MetricIndex::ReachingVelocity,
        MetricIndex::FinalError,
    ];

    /// Identifier used in files.
    pub const fn name(self) -> &'static str {
        match self {
            MetricIndex::Confusion => "confusion_index",
            MetricIndex::Success => "success_ratio",
            MetricIndex::ReachingTime => "reaching_time",
            MetricIndex::AngularDistance => "angular_distance",
            MetricIndex::ReachingVelocity => "reaching_velocity",
            MetricIndex::FinalError => "final_error",
        }
    }

    /// Unit label.
    pub const fn unit(self) -> &'static str {
        match self {
            MetricIndex::Confusion | MetricIndex::Success | MetricIndex::FinalError => "%",
            MetricIndex::ReachingTime => "s",
            MetricIndex::AngularDistance => "deg",
            MetricIndex::ReachingVelocity => "deg/s",
        }
    }

    /// Value for a trial. With `joint`, the per-joint value (shared indices
    /// such as reaching time are the same for every joint).
    pub fn value(self, m: &TrialMetrics, joint: Option<JointId>) -> Option<f64> {
        let jm = match joint {
            Some(j) => Some(m.per_joint[j]?),
            None => None,
        };
        match self {
            MetricIndex::Confusion => Some(jm.map_or(m.confusion_index, |x| x.confusion_index)),
            MetricIndex::Success => Some(if m.success { 100.0 } else { 0.0 }),
            MetricIndex::ReachingTime => m.reaching_time,
            MetricIndex::AngularDistance => jm.map_or(m.angular_distance, |x| x.angular_distance),
            MetricIndex::ReachingVelocity => jm.map_or(m.reaching_velocity, |x| x.reaching_velocity),
            MetricIndex::FinalError => jm.map_or(m.final_error, |x| x.final_error),
        }
    }
}

impl fmt::Display for MetricIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl core::str::FromStr for MetricIndex {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        MetricIndex::ALL.into_iter().find(|i| i.name() == s).ok_or(Error::InvalidInput("unknown metric index"))
    }
}

/// One trial's metrics with its identity in the session.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MetricRecord {
    /// Simulated subject.
    pub subject_id: u32,
    /// Device of the trial.
    pub device: Device,
    /// Sub-block of the trial.
    pub sub_block: SubBlock,
    /// Position in the subject's session.
    pub trial_index: usize,
    /// Target pose.
    pub targets: TargetPose,
    /// Computed indices.
    pub metrics: TrialMetrics,
}

/// Descriptive statistics of one index in one condition.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Summary {
    /// Number of values.
    pub n: usize,
    /// Arithmetic mean.
    pub mean: f64,
    /// Sample standard deviation (0 for a single value).
    pub std: f64,
    /// Median.
    pub median: f64,
    /// First quartile.
    pub q1: f64,
    /// Third quartile.
    pub q3: f64,
    /// Minimum.
    pub min: f64,
    /// Maximum.
    pub max: f64,
}

/// Quantile `p ∈ [0, 1]` of sorted data, interpolating linearly between order statistics.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = libm::floor(h) as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Summary of `values`; `None` when empty.
pub fn summarize(values: &[f64]) -> Option<Summary> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let mean = sorted.iter().sum::<f64>() / n as f64;
    let std = if n > 1 {
        libm::sqrt(sorted.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64)
    } else {
        0.0
    };
    Some(Summary {
        n,
        mean,
        std,
        median: quantile_sorted(&sorted, 0.5),
        q1: quantile_sorted(&sorted, 0.25),
        q3: quantile_sorted(&sorted, 0.75),
        min: sorted[0],
        max: sorted[n - 1],
    })
}

/// Condition a summary describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ConditionKey {
    /// Device.
    pub device: Device,
    /// Sub-block.
    pub sub_block: SubBlock,
    /// Subject, when grouping per subject.
    pub subject_id: Option<u32>,
}

/// How records are grouped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Grouping {
    /// Also split by simulated subject.
    pub by_subject: bool,
}

/// Summaries of every index for one condition.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ConditionSummary {
    /// Condition.
    pub key: ConditionKey,
    /// Number of trials.
    pub trials: usize,
    /// `100 · successes / trials`.
    pub success_ratio: f64,
    /// Combined-joint summary per index, in [`MetricIndex::ALL`] order.
    pub indices: Vec<(MetricIndex, Option<Summary>)>,
    /// Per-joint summaries per index; empty for joints not guided in the condition.
    pub per_joint: JointMap<Vec<(MetricIndex, Option<Summary>)>>,
}

impl ConditionSummary {
    /// Combined summary of `index`.
    pub fn summary(&self, index: MetricIndex) -> Option<&Summary> {
        self.indices.iter().find(|(i, _)| *i == index).and_then(|(_, s)| s.as_ref())
    }
}

/// Groups records by condition and summarizes every index.
///
/// Returns the summaries in `(device, sub-block, subject)` order plus a
/// warning for every index that had no defined value in a condition.
pub fn aggregate(records: &[MetricRecord], grouping: Grouping) -> Result<(Vec<ConditionSummary>, Vec<String>), Error> {
    if records.is_empty() {
        return Err(Error::InvalidInput("no records to aggregate"));
    }
    let mut groups: BTreeMap<ConditionKey, Vec<&MetricRecord>> = BTreeMap::new();
    for r in records {
        let key = ConditionKey {
            device: r.device,
            sub_block: r.sub_block,
            subject_id: grouping.by_subject.then_some(r.subject_id),
        };
        groups.entry(key).or_default().push(r);
    }
    let mut warnings = Vec::new();
    let summaries = groups
        .into_iter()
        .map(|(key, rs)| {
            let collect = |index: MetricIndex, joint: Option<JointId>| -> Vec<f64> {
                rs.iter().filter_map(|r| index.value(&r.metrics, joint)).collect()
            };
            let indices: Vec<(MetricIndex, Option<Summary>)> = MetricIndex::ALL
                .iter()
                .map(|&i| {
                    let s = summarize(&collect(i, None));
                    if s.is_none() {
                        warnings.push(format!("{} {}: no defined values for {}", key.device, key.sub_block, i));
                    }
                    (i, s)
                })
                .collect();
            let per_joint = JointMap::from_fn(|j| {
                if rs.iter().all(|r| r.metrics.per_joint[j].is_none()) {
                    return Vec::new();
                }
                MetricIndex::ALL.iter().map(|&i| (i, summarize(&collect(i, Some(j))))).collect()
            });
            let successes = rs.iter().filter(|r| r.metrics.success).count();
            ConditionSummary { key, trials: rs.len(), success_ratio: percent(successes, rs.len()), indices, per_joint }
        })
        .collect();
    Ok((summaries, warnings))
}
