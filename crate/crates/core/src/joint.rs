//! Joints, sagittal-plane angles and the signed-error convention.
//!
//! Positive error means the joint has to increase its angle (move forward/up).
//! Every device mapping in [`crate::devices`] is stated relative to this sign.

use core::fmt;
use core::ops::{Index, IndexMut};

use crate::Error;

/// A guided joint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum JointId {
    /// Shoulder flexion/extension.
    Shoulder,
    /// Knee flexion/extension.
    Knee,
}

impl JointId {
    /// All joints in canonical order.
    pub const ALL: [JointId; 2] = [JointId::Shoulder, JointId::Knee];

    /// Inclusive angular range `(min, max)` in degrees.
    pub const fn range(self) -> (f64, f64) {
        match self {
            JointId::Shoulder => (-30.0, 180.0),
            JointId::Knee => (0.0, 150.0),
        }
    }

    /// Lower-case name used in files and on the wire.
    pub const fn name(self) -> &'static str {
        match self {
            JointId::Shoulder => "shoulder",
            JointId::Knee => "knee",
        }
    }
}

impl fmt::Display for JointId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl core::str::FromStr for JointId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "shoulder" => Ok(JointId::Shoulder),
            "knee" => Ok(JointId::Knee),
            _ => Err(Error::InvalidInput("unknown joint name")),
        }
    }
}

/// A value for every joint. Total over [`JointId`].
#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct JointMap<T> {
    /// Shoulder entry.
    pub shoulder: T,
    /// Knee entry.
    pub knee: T,
}

impl<T> JointMap<T> {
    /// Builds a map from the two entries.
    pub const fn new(shoulder: T, knee: T) -> Self {
        JointMap { shoulder, knee }
    }

    /// Builds a map by evaluating `f` on each joint.
    pub fn from_fn(mut f: impl FnMut(JointId) -> T) -> Self {
        JointMap { shoulder: f(JointId::Shoulder), knee: f(JointId::Knee) }
    }

    /// Applies `f` to every entry.
    pub fn map<U>(&self, mut f: impl FnMut(JointId, &T) -> U) -> JointMap<U> {
        JointMap { shoulder: f(JointId::Shoulder, &self.shoulder), knee: f(JointId::Knee, &self.knee) }
    }

    /// Iterates `(joint, &value)` in canonical order.
    pub fn iter(&self) -> impl Iterator<Item = (JointId, &T)> {
        JointId::ALL.into_iter().map(move |j| (j, &self[j]))
    }
}

impl<T> Index<JointId> for JointMap<T> {
    type Output = T;

    fn index(&self, joint: JointId) -> &T {
        match joint {
            JointId::Shoulder => &self.shoulder,
            JointId::Knee => &self.knee,
        }
    }
}

impl<T> IndexMut<JointId> for JointMap<T> {
    fn index_mut(&mut self, joint: JointId) -> &mut T {
        match joint {
            JointId::Shoulder => &mut self.shoulder,
            JointId::Knee => &mut self.knee,
        }
    }
}

/// A finite joint angle in degrees on the sagittal plane.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(try_from = "f64", into = "f64"))]
pub struct AngleDeg(f64);

impl AngleDeg {
    /// Wraps a finite angle.
    pub fn new(degrees: f64) -> Result<Self, Error> {
        if degrees.is_finite() {
            Ok(AngleDeg(degrees))
        } else {
            Err(Error::InvalidInput("angle must be finite"))
        }
    }

    /// Literal angle known to be finite.
    pub(crate) const fn finite(degrees: f64) -> Self {
        AngleDeg(degrees)
    }

    /// The angle in degrees.
    pub const fn degrees(self) -> f64 {
        self.0
    }

    /// Whether the angle lies inside `joint`'s range.
    pub fn within_range(self, joint: JointId) -> bool {
        let (lo, hi) = joint.range();
        (lo..=hi).contains(&self.0)
    }
}

impl TryFrom<f64> for AngleDeg {
    type Error = Error;

    fn try_from(value: f64) -> Result<Self, Error> {
        AngleDeg::new(value)
    }
}

impl From<AngleDeg> for f64 {
    fn from(a: AngleDeg) -> f64 {
        a.0
    }
}

/// `target − current` in degrees.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(transparent))]
pub struct SignedError(pub f64);

impl SignedError {
    /// Error value in degrees.
    pub const fn degrees(self) -> f64 {
        self.0
    }

    /// Magnitude in degrees.
    pub fn magnitude(self) -> f64 {
        libm::fabs(self.0)
    }
}

/// Error between `current` and `target`; positive means the angle must increase.
///
/// Non-finite angles are rejected when the [`AngleDeg`] values are built.
pub fn signed_error(current: AngleDeg, target: AngleDeg) -> SignedError {
    SignedError(target.0 - current.0)
}

/// Clamps `angle` into the declared range of `joint`.
pub fn clamp_to_joint_range(joint: JointId, angle: AngleDeg) -> AngleDeg {
    let (lo, hi) = joint.range();
    AngleDeg(angle.0.clamp(lo, hi))
}

/// Target angles for the guided joints. Unguided joints have no target.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TargetPose(JointMap<Option<AngleDeg>>);

impl TargetPose {
    /// Validates that at least one joint has a target and that every target
    /// lies inside its joint's range.
    pub fn new(targets: JointMap<Option<AngleDeg>>) -> Result<Self, Error> {
        if targets.shoulder.is_none() && targets.knee.is_none() {
            return Err(Error::InvalidInput("target pose needs at least one guided joint"));
        }
        for (joint, target) in targets.iter() {
            if let Some(a) = target {
                if !a.within_range(joint) {
                    return Err(Error::InvalidInput("target outside joint range"));
                }
            }
        }
        Ok(TargetPose(targets))
    }

    /// Single-joint pose.
    pub fn single(joint: JointId, degrees: f64) -> Result<Self, Error> {
        let mut m = JointMap::new(None, None);
        m[joint] = Some(AngleDeg::new(degrees)?);
        TargetPose::new(m)
    }

    /// Shoulder and knee pose.
    pub fn pair(shoulder: f64, knee: f64) -> Result<Self, Error> {
        TargetPose::new(JointMap::new(Some(AngleDeg::new(shoulder)?), Some(AngleDeg::new(knee)?)))
    }

    /// Target of `joint`, if guided.
    pub fn get(&self, joint: JointId) -> Option<AngleDeg> {
        self.0[joint]
    }

    /// The underlying per-joint map.
    pub fn as_map(&self) -> &JointMap<Option<AngleDeg>> {
        &self.0
    }

    /// Guided joints with their targets in canonical order.
    pub fn guided(&self) -> impl Iterator<Item = (JointId, AngleDeg)> + '_ {
        self.0.iter().filter_map(|(j, t)| t.map(|a| (j, a)))
    }

    /// Whether both joints are guided.
    pub fn is_multi_joint(&self) -> bool {
        self.0.shoulder.is_some() && self.0.knee.is_some()
    }
}
