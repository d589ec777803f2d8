//! Session configuration file (TOML).
//!
//! Every key is optional. Unknown keys are rejected.
//!
//! ```toml
//! seed = 42
//! output_dir = "out"
//! subjects = 12
//! dt_s = 0.01
//! timeout_s = 90.0
//!
//! [initial_pose]
//! shoulder_deg = 0.0
//! knee_deg = 60.0
//!
//! [device]
//! pulse_period_s = 0.8
//! cuff_tolerance_deg = 5.0
//!
//! [device.spot]
//! tol_deg = 5.0
//! low_hi_deg = 15.0
//! med_hi_deg = 45.0
//!
//! [device.cuff_calibration]
//! gamma0_deg = 0.0
//! k_force = 2.0
//! k_slide = 10.0
//!
//! [subject]
//! reaction_delay_s = 0.3
//! angular_speed_dps = 30.0
//! misread_prob = 0.05
//! declare_tolerance_deg = 5.0
//! hold_time_s = 1.0
//!
//! [[subject_override]]
//! id = 3
//! misread_prob = 0.2
//! ```

use std::path::{Path, PathBuf};

use hapguide_core::devices::{cuff_calibrate, DeviceConfig, SpotThresholds, DEFAULT_PULSE_PERIOD_S};
use hapguide_core::engine::{SessionSettings, DEFAULT_TIMEOUT_S};
use hapguide_core::subject::SubjectParams;
use hapguide_core::{AngleDeg, JointId, JointMap, RngSeed, SimClock};
use serde::Deserialize;
use thiserror::Error;

/// Default number of simulated subjects.
pub const DEFAULT_SUBJECTS: u32 = 12;

/// Invalid configuration.
#[derive(Debug, Error)]
pub enum ConfigError {
    /// TOML syntax or type error; the message carries line and column.
    #[error("{0}")]
    Parse(String),
    /// A value failed validation.
    #[error("invalid value for `{field}`: {reason}")]
    Field {
        /// Dotted key path.
        field: String,
        /// What is wrong.
        reason: String,
    },
    /// The file could not be read.
    #[error("cannot read {path}: {source}")]
    Io {
        /// File path.
        path: PathBuf,
        /// Underlying error.
        source: std::io::Error,
    },
}

fn field(name: impl Into<String>, reason: impl std::fmt::Display) -> ConfigError {
    ConfigError::Field { field: name.into(), reason: reason.to_string() }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    seed: Option<u64>,
    output_dir: Option<PathBuf>,
    subjects: Option<u32>,
    dt_s: Option<f64>,
    timeout_s: Option<f64>,
    #[serde(default)]
    initial_pose: RawPose,
    #[serde(default)]
    device: RawDevice,
    #[serde(default)]
    subject: RawSubject,
    #[serde(default)]
    subject_override: Vec<RawOverride>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPose {
    shoulder_deg: Option<f64>,
    knee_deg: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDevice {
    pulse_period_s: Option<f64>,
    cuff_tolerance_deg: Option<f64>,
    #[serde(default)]
    spot: RawSpot,
    cuff_calibration: Option<RawCalibration>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpot {
    tol_deg: Option<f64>,
    low_hi_deg: Option<f64>,
    med_hi_deg: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCalibration {
    gamma0_deg: f64,
    k_force: f64,
    k_slide: f64,
}

#[derive(Debug, Default, Deserialize, Clone, Copy)]
#[serde(deny_unknown_fields)]
struct RawSubject {
    reaction_delay_s: Option<f64>,
    angular_speed_dps: Option<f64>,
    misread_prob: Option<f64>,
    declare_tolerance_deg: Option<f64>,
    hold_time_s: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOverride {
    id: u32,
    reaction_delay_s: Option<f64>,
    angular_speed_dps: Option<f64>,
    misread_prob: Option<f64>,
    declare_tolerance_deg: Option<f64>,
    hold_time_s: Option<f64>,
}

impl RawSubject {
    fn apply(&self, base: SubjectParams) -> SubjectParams {
        SubjectParams {
            reaction_delay: self.reaction_delay_s.unwrap_or(base.reaction_delay),
            angular_speed: self.angular_speed_dps.unwrap_or(base.angular_speed),
            misread_prob: self.misread_prob.unwrap_or(base.misread_prob),
            declare_tolerance: self.declare_tolerance_deg.unwrap_or(base.declare_tolerance),
            hold_time: self.hold_time_s.unwrap_or(base.hold_time),
            seed: base.seed,
        }
    }
}

/// A fully validated session configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionConfig {
    /// Base seed of the whole run.
    pub seed: RngSeed,
    /// Directory receiving outputs.
    pub output_dir: PathBuf,
    /// Device parameters.
    pub device: DeviceConfig,
    /// Per-trial settings.
    pub settings: SessionSettings,
    /// Behaviour of each subject, ids 1..=n in order. Seeds are filled in by
    /// [`SessionConfig::subject_params`].
    pub subjects: Vec<SubjectParams>,
}

impl Default for SessionConfig {
    fn default() -> Self {
        SessionConfig::from_toml_str("").expect("defaults are valid")
    }
}

impl SessionConfig {
    /// Parses and validates a configuration document.
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        build(raw)
    }

    /// Reads and validates a configuration file.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        Self::from_toml_str(&text).map_err(|e| match e {
            ConfigError::Parse(m) => ConfigError::Parse(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Seed of the protocol ordering for subject `id`.
    pub fn protocol_seed(&self, id: u32) -> RngSeed {
        self.seed.derive(u64::from(id)).derive(0)
    }

    /// Parameters of subject `id` (1-based), with its misread seed.
    pub fn subject_params(&self, id: u32) -> SubjectParams {
        let base = self.subjects[(id - 1) as usize];
        SubjectParams { seed: self.seed.derive(u64::from(id)).derive(1), ..base }
    }

    /// Subject ids in run order.
    pub fn subject_ids(&self) -> impl Iterator<Item = u32> {
        1..=self.subjects.len() as u32
    }
}

fn positive(name: &str, v: f64) -> Result<f64, ConfigError> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(field(name, format!("must be a positive number, got {v}")))
    }
}

fn build(raw: RawConfig) -> Result<SessionConfig, ConfigError> {
    let subjects_n = raw.subjects.unwrap_or(DEFAULT_SUBJECTS);
    if subjects_n == 0 {
        return Err(field("subjects", "must be at least 1"));
    }
    let dt = positive("dt_s", raw.dt_s.unwrap_or(hapguide_core::clock::DEFAULT_DT))?;
    SimClock::new(dt).map_err(|e| field("dt_s", e))?;
    let timeout = positive("timeout_s", raw.timeout_s.unwrap_or(DEFAULT_TIMEOUT_S))?;

    let default_pose = hapguide_core::engine::default_initial_pose();
    let pose_field = |name: &str, joint: JointId, v: Option<f64>| -> Result<AngleDeg, ConfigError> {
        let key = format!("initial_pose.{name}");
        let a = match v {
            Some(v) => AngleDeg::new(v).map_err(|e| field(key.clone(), e))?,
            None => default_pose[joint],
        };
        if !a.within_range(joint) {
            let (lo, hi) = joint.range();
            return Err(field(key, format!("{} outside [{lo}, {hi}]", a.degrees())));
        }
        Ok(a)
    };
    let initial_pose = JointMap::new(
        pose_field("shoulder_deg", JointId::Shoulder, raw.initial_pose.shoulder_deg)?,
        pose_field("knee_deg", JointId::Knee, raw.initial_pose.knee_deg)?,
    );

    let d = SpotThresholds::default();
    let spot = SpotThresholds::new(
        raw.device.spot.tol_deg.unwrap_or(d.tol()),
        raw.device.spot.low_hi_deg.unwrap_or(d.low_hi()),
        raw.device.spot.med_hi_deg.unwrap_or(d.med_hi()),
    )
    .map_err(|e| field("device.spot", e))?;
    let pulse_period_s = positive("device.pulse_period_s", raw.device.pulse_period_s.unwrap_or(DEFAULT_PULSE_PERIOD_S))?;
    let cuff_tolerance = positive(
        "device.cuff_tolerance_deg",
        raw.device.cuff_tolerance_deg.unwrap_or(hapguide_core::devices::DEFAULT_GOAL_TOLERANCE_DEG),
    )?;
    let cal = raw.device.cuff_calibration.unwrap_or(RawCalibration { gamma0_deg: 0.0, k_force: 2.0, k_slide: 10.0 });
    let cuff_calibration =
        Some(cuff_calibrate(cal.gamma0_deg, cal.k_force, cal.k_slide).map_err(|e| field("device.cuff_calibration", e))?);
    let device = DeviceConfig { spot, pulse_period_s, cuff_tolerance, cuff_calibration };

    let base = raw.subject.apply(SubjectParams::default());
    base.validate().map_err(|e| field("subject", e))?;
    let mut subjects = vec![base; subjects_n as usize];
    for (i, o) in raw.subject_override.iter().enumerate() {
        let key = format!("subject_override[{i}]");
        if o.id == 0 || o.id > subjects_n {
            return Err(field(format!("{key}.id"), format!("{} is not a subject id in 1..={subjects_n}", o.id)));
        }
        let over = RawSubject {
            reaction_delay_s: o.reaction_delay_s,
            angular_speed_dps: o.angular_speed_dps,
            misread_prob: o.misread_prob,
            declare_tolerance_deg: o.declare_tolerance_deg,
            hold_time_s: o.hold_time_s,
        };
        let params = over.apply(subjects[(o.id - 1) as usize]);
        params.validate().map_err(|e| field(key, e))?;
        subjects[(o.id - 1) as usize] = params;
    }

    Ok(SessionConfig {
        seed: RngSeed(raw.seed.unwrap_or(0)),
        output_dir: raw.output_dir.unwrap_or_else(|| PathBuf::from("out")),
        device,
        settings: SessionSettings { timeout, initial_pose, dt },
        subjects,
    })
}
