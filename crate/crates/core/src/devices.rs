//! Feedback laws of the two haptic devices.
//!
//! ErgoTac: two vibrotactile units per joint (front and back). The unit on
//! the side opposite to the required movement vibrates (repulsive cue) and
//! the vibration level grows with the error magnitude.
//!
//! CUFF: a fabric band driven by two motors. Common-mode motion slides the
//! band in the direction of the correction, differential motion squeezes
//! the limb with a force that grows with the error.

use core::fmt;

use crate::joint::{JointId, SignedError};
use crate::Error;

/// ErgoTac vibration carrier frequency in hertz. Never varies.
pub const ERGOTAC_CARRIER_HZ: f64 = 121.0;

/// CUFF squeeze force at zero error, newtons.
pub const CUFF_MIN_FORCE_N: f64 = 3.0;
/// CUFF squeeze force at and beyond [`CUFF_SATURATION_DEG`], newtons.
pub const CUFF_MAX_FORCE_N: f64 = 20.0;
/// Error magnitude at which the squeeze force saturates, degrees.
pub const CUFF_SATURATION_DEG: f64 = 90.0;

/// Default ErgoTac pulse period in seconds (50% duty).
pub const DEFAULT_PULSE_PERIOD_S: f64 = 0.8;
/// Default goal tolerance in degrees.
pub const DEFAULT_GOAL_TOLERANCE_DEG: f64 = 5.0;

/// Which side of the limb an ErgoTac unit sits on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Placement {
    /// Front of the limb.
    Front,
    /// Back of the limb.
    Back,
}

/// One ErgoTac unit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ErgoTacUnit {
    /// Joint the unit is strapped to.
    pub joint: JointId,
    /// Side of the limb.
    pub placement: Placement,
}

/// Vibration amplitude level, ordered `Off < Low < Medium < High`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum VibrationLevel {
    /// No vibration.
    Off,
    /// 30% amplitude.
    Low,
    /// 60% amplitude.
    Medium,
    /// 100% amplitude.
    High,
}

impl VibrationLevel {
    /// Every level, ascending.
    pub const ALL: [VibrationLevel; 4] =
        [VibrationLevel::Off, VibrationLevel::Low, VibrationLevel::Medium, VibrationLevel::High];

    /// Drive amplitude in percent.
    pub const fn amplitude_pct(self) -> f64 {
        match self {
            VibrationLevel::Off => 0.0,
            VibrationLevel::Low => 30.0,
            VibrationLevel::Medium => 60.0,
            VibrationLevel::High => 100.0,
        }
    }

    /// Carrier frequency while vibrating; zero when off.
    pub const fn frequency_hz(self) -> f64 {
        match self {
            VibrationLevel::Off => 0.0,
            _ => ERGOTAC_CARRIER_HZ,
        }
    }
}

/// Unit id plus level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ErgoTacCommand {
    /// Addressed unit. For `Off` it only identifies the joint pair being stopped.
    pub unit: ErgoTacUnit,
    /// Vibration level.
    pub level: VibrationLevel,
}

impl ErgoTacCommand {
    /// Stop command for `joint`'s pair.
    pub const fn off(joint: JointId) -> Self {
        ErgoTacCommand { unit: ErgoTacUnit { joint, placement: Placement::Back }, level: VibrationLevel::Off }
    }

    /// Whether a unit is vibrating.
    pub fn is_active(&self) -> bool {
        self.level != VibrationLevel::Off
    }
}

/// Band-slide direction of the CUFF.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Slide {
    /// Clockwise: forward tangential force (increase the angle).
    Forward,
    /// Counter-clockwise: backward tangential force.
    Backward,
    /// No slide; the joint is within tolerance.
    None,
}

impl Slide {
    /// +1, −1 or 0.
    pub const fn sign(self) -> f64 {
        match self {
            Slide::Forward => 1.0,
            Slide::Backward => -1.0,
            Slide::None => 0.0,
        }
    }
}

/// Slide direction and squeeze force for one CUFF.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CuffCommand {
    /// Joint wearing the CUFF.
    pub joint: JointId,
    /// Slide direction.
    pub slide: Slide,
    /// Squeeze force in newtons, always within `[3, 20]`.
    pub squeeze_force: f64,
}

impl CuffCommand {
    /// Whether a direction is being cued.
    pub fn is_active(&self) -> bool {
        self.slide != Slide::None
    }
}

/// A command addressed to one joint's device.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "device", rename_all = "lowercase"))]
pub enum GuidanceCue {
    /// Vibrotactile unit command.
    ErgoTac(ErgoTacCommand),
    /// Slide/squeeze command.
    Cuff(CuffCommand),
}

impl GuidanceCue {
    /// Joint the cue is addressed to.
    pub fn joint(&self) -> JointId {
        match self {
            GuidanceCue::ErgoTac(c) => c.unit.joint,
            GuidanceCue::Cuff(c) => c.joint,
        }
    }

    /// Whether the cue indicates a direction (not Off / None).
    pub fn is_active(&self) -> bool {
        match self {
            GuidanceCue::ErgoTac(c) => c.is_active(),
            GuidanceCue::Cuff(c) => c.is_active(),
        }
    }

    /// Direction the cue asks the joint to move: +1 (increase), −1, or 0.
    ///
    /// ErgoTac cues are repulsive, so a vibrating back unit means "increase".
    pub fn direction(&self) -> i8 {
        match self {
            GuidanceCue::ErgoTac(c) => match (c.level, c.unit.placement) {
                (VibrationLevel::Off, _) => 0,
                (_, Placement::Back) => 1,
                (_, Placement::Front) => -1,
            },
            GuidanceCue::Cuff(c) => match c.slide {
                Slide::Forward => 1,
                Slide::Backward => -1,
                Slide::None => 0,
            },
        }
    }
}

/// Error bands for the ErgoTac SPOT levels, degrees.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SpotThresholds {
    tol: f64,
    low_hi: f64,
    med_hi: f64,
}

impl SpotThresholds {
    /// Requires `0 < tol < low_hi < med_hi`.
    pub fn new(tol: f64, low_hi: f64, med_hi: f64) -> Result<Self, Error> {
        if !(tol.is_finite() && low_hi.is_finite() && med_hi.is_finite()) {
            return Err(Error::InvalidInput("SPOT thresholds must be finite"));
        }
        if !(0.0 < tol && tol < low_hi && low_hi < med_hi) {
            return Err(Error::InvalidInput("SPOT thresholds must satisfy 0 < tol < low_hi < med_hi"));
        }
        Ok(SpotThresholds { tol, low_hi, med_hi })
    }

    /// Goal tolerance.
    pub fn tol(&self) -> f64 {
        self.tol
    }

    /// Upper bound of the Low band.
    pub fn low_hi(&self) -> f64 {
        self.low_hi
    }

    /// Upper bound of the Medium band.
    pub fn med_hi(&self) -> f64 {
        self.med_hi
    }

    /// Level for an error magnitude.
    pub fn level_for(&self, abs_error: f64) -> VibrationLevel {
        if abs_error <= self.tol {
            VibrationLevel::Off
        } else if abs_error <= self.low_hi {
            VibrationLevel::Low
        } else if abs_error <= self.med_hi {
            VibrationLevel::Medium
        } else {
            VibrationLevel::High
        }
    }
}

impl Default for SpotThresholds {
    fn default() -> Self {
        SpotThresholds { tol: DEFAULT_GOAL_TOLERANCE_DEG, low_hi: 15.0, med_hi: 45.0 }
    }
}

/// SPOT mapping of one joint's error to a unit and level.
pub fn ergotac_spot(joint: JointId, error: SignedError, th: &SpotThresholds) -> ErgoTacCommand {
    let level = th.level_for(error.magnitude());
    if level == VibrationLevel::Off {
        return ErgoTacCommand::off(joint);
    }
    // Repulsive: vibrate on the side the limb must move away from.
    let placement = if error.0 > 0.0 { Placement::Back } else { Placement::Front };
    ErgoTacCommand { unit: ErgoTacUnit { joint, placement }, level }
}

/// Instantaneous drive amplitude (percent) of the pulsed vibration at time `t`.
///
/// Square train of period `period_s`: full level amplitude during the first
/// half of each period, zero during the second half.
pub fn ergotac_pulse(level: VibrationLevel, t: f64, period_s: f64) -> f64 {
    if level == VibrationLevel::Off || t < 0.0 || period_s <= 0.0 {
        return 0.0;
    }
    let phase = libm::fmod(t, period_s);
    if phase < period_s / 2.0 {
        level.amplitude_pct()
    } else {
        0.0
    }
}

/// Squeeze force for an error magnitude: affine from 3 N at 0° to 20 N at 90°, flat beyond.
pub fn cuff_squeeze_force(abs_error: f64) -> Result<f64, Error> {
    if !abs_error.is_finite() || abs_error < 0.0 {
        return Err(Error::InvalidInput("error magnitude must be finite and non-negative"));
    }
    let ratio = abs_error.min(CUFF_SATURATION_DEG) / CUFF_SATURATION_DEG;
    Ok(CUFF_MIN_FORCE_N + (CUFF_MAX_FORCE_N - CUFF_MIN_FORCE_N) * ratio)
}

/// Slide and squeeze for one joint. `tol` is the goal tolerance in degrees.
pub fn cuff_command(joint: JointId, error: SignedError, tol: f64) -> CuffCommand {
    let slide = if error.0 > tol {
        Slide::Forward
    } else if error.0 < -tol {
        Slide::Backward
    } else {
        Slide::None
    };
    // |e| is finite and non-negative because SignedError comes from finite angles.
    let squeeze_force = cuff_squeeze_force(error.magnitude()).unwrap_or(CUFF_MAX_FORCE_N);
    CuffCommand { joint, slide, squeeze_force }
}

/// Motor encoder setpoints of a CUFF.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MotorPositions {
    /// First motor, encoder degrees.
    pub gamma1: f64,
    /// Second motor, encoder degrees.
    pub gamma2: f64,
}

impl MotorPositions {
    /// Common-mode offset from the contact baseline: `(γ1 + γ2)/2 − γ0`.
    pub fn slide_offset(&self, gamma0: f64) -> f64 {
        (self.gamma1 + self.gamma2) / 2.0 - gamma0
    }

    /// Differential component: `(γ1 − γ2)/2`.
    pub fn squeeze_offset(&self) -> f64 {
        (self.gamma1 - self.gamma2) / 2.0
    }

    /// Recovers `(slide, squeeze_force)` given the calibration that produced the setpoints.
    pub fn decode(&self, cal: &CuffCalibration) -> (Slide, f64) {
        let slide_units = self.slide_offset(cal.gamma0) / cal.k_slide;
        let slide = if slide_units > 0.5 {
            Slide::Forward
        } else if slide_units < -0.5 {
            Slide::Backward
        } else {
            Slide::None
        };
        (slide, CUFF_MIN_FORCE_N + self.squeeze_offset() / cal.k_force)
    }
}

/// CUFF calibration: contact baseline and linear gains.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CuffCalibration {
    gamma0: f64,
    k_force: f64,
    k_slide: f64,
}

impl CuffCalibration {
    /// Contact baseline, encoder degrees.
    pub fn gamma0(&self) -> f64 {
        self.gamma0
    }

    /// Encoder degrees per newton above the 3 N rest force.
    pub fn k_force(&self) -> f64 {
        self.k_force
    }

    /// Encoder degrees per unit slide cue.
    pub fn k_slide(&self) -> f64 {
        self.k_slide
    }
}

/// Validates and stores CUFF calibration parameters.
pub fn cuff_calibrate(baseline_gamma0: f64, k_force: f64, k_slide: f64) -> Result<CuffCalibration, Error> {
    if !baseline_gamma0.is_finite() {
        return Err(Error::InvalidInput("baseline must be finite"));
    }
    if !(k_force > 0.0 && k_force.is_finite() && k_slide > 0.0 && k_slide.is_finite()) {
        return Err(Error::InvalidInput("CUFF gains must be positive"));
    }
    Ok(CuffCalibration { gamma0: baseline_gamma0, k_force, k_slide })
}

/// Motor setpoints realising `cmd`.
pub fn cuff_motor_positions(cmd: &CuffCommand, cal: Option<&CuffCalibration>) -> Result<MotorPositions, Error> {
    let cal = cal.ok_or(Error::CalibrationRequired)?;
    let squeeze = cal.k_force * (cmd.squeeze_force - CUFF_MIN_FORCE_N);
    let slide = cal.k_slide * cmd.slide.sign();
    Ok(MotorPositions { gamma1: cal.gamma0 + squeeze + slide, gamma2: cal.gamma0 - squeeze + slide })
}

/// Haptic device used in a trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Device {
    /// Vibrotactile units, SPOT modality, one joint at a time.
    ErgoTac,
    /// Slide-and-squeeze band, all joints simultaneously.
    Cuff,
}

impl Device {
    /// Both devices.
    pub const ALL: [Device; 2] = [Device::Cuff, Device::ErgoTac];

    /// Lower-case name used in files.
    pub const fn name(self) -> &'static str {
        match self {
            Device::ErgoTac => "ergotac",
            Device::Cuff => "cuff",
        }
    }
}

impl fmt::Display for Device {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl core::str::FromStr for Device {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "ergotac" => Ok(Device::ErgoTac),
            "cuff" => Ok(Device::Cuff),
            _ => Err(Error::InvalidInput("unknown device name")),
        }
    }
}

/// Device parameters shared by every trial of a session.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DeviceConfig {
    /// ErgoTac level bands; `tol` is the ErgoTac goal tolerance.
    pub spot: SpotThresholds,
    /// ErgoTac pulse period, seconds.
    pub pulse_period_s: f64,
    /// CUFF goal tolerance, degrees.
    pub cuff_tolerance: f64,
    /// CUFF calibration, if performed.
    pub cuff_calibration: Option<CuffCalibration>,
}

impl DeviceConfig {
    /// Goal tolerance of `device`.
    pub fn tolerance(&self, device: Device) -> f64 {
        match device {
            Device::ErgoTac => self.spot.tol(),
            Device::Cuff => self.cuff_tolerance,
        }
    }

    /// Checks the parameters that are not enforced by construction.
    pub fn validate(&self) -> Result<(), Error> {
        if !(self.pulse_period_s > 0.0 && self.pulse_period_s.is_finite()) {
            return Err(Error::InvalidInput("pulse period must be positive"));
        }
        if !(self.cuff_tolerance > 0.0 && self.cuff_tolerance.is_finite()) {
            return Err(Error::InvalidInput("CUFF tolerance must be positive"));
        }
        Ok(())
    }
}

impl Default for DeviceConfig {
    fn default() -> Self {
        DeviceConfig {
            spot: SpotThresholds::default(),
            pulse_period_s: DEFAULT_PULSE_PERIOD_S,
            cuff_tolerance: DEFAULT_GOAL_TOLERANCE_DEG,
            cuff_calibration: None,
        }
    }
}
