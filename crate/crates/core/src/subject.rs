//! Simulated human subject.
//!
//! The subject reads each joint's cue with a fixed reaction delay, moves the
//! joint at constant angular speed in the perceived direction, and declares
//! the goal reached once every guided joint has stayed inside the declare
//! band for the hold time.
//!
//! A cue is (re)interpreted only when its content changes: a new direction,
//! a new vibration level, or the squeeze force crossing a whole newton. Each
//! interpretation of a directional cue draws once from the seeded stream and
//! is inverted with probability `misread_prob`. A misread therefore persists
//! until the next cue change reaches the subject.

use alloc::collections::VecDeque;

use rand_chacha::ChaCha8Rng;

use crate::clock::{unit_interval, RngSeed, SimClock};
use crate::devices::{GuidanceCue, VibrationLevel};
use crate::joint::{JointId, JointMap, TargetPose};
use crate::Error;

/// What the subject is currently doing with a joint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Intent {
    /// Increase the angle.
    MoveUp,
    /// Decrease the angle.
    MoveDown,
    /// Keep still.
    #[default]
    Hold,
}

impl Intent {
    fn from_direction(direction: i8) -> Intent {
        match direction.signum() {
            1 => Intent::MoveUp,
            -1 => Intent::MoveDown,
            _ => Intent::Hold,
        }
    }

    fn inverted(self) -> Intent {
        match self {
            Intent::MoveUp => Intent::MoveDown,
            Intent::MoveDown => Intent::MoveUp,
            Intent::Hold => Intent::Hold,
        }
    }

    /// +1, −1 or 0.
    pub fn sign(self) -> f64 {
        match self {
            Intent::MoveUp => 1.0,
            Intent::MoveDown => -1.0,
            Intent::Hold => 0.0,
        }
    }
}

/// Behavioural parameters of a simulated subject.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SubjectParams {
    /// Delay between a cue change and the matching change of intent, seconds.
    pub reaction_delay: f64,
    /// Joint speed while moving, degrees per second.
    pub angular_speed: f64,
    /// Probability of reading a directional cue backwards.
    pub misread_prob: f64,
    /// Half-width of the band around the target counted as "in position", degrees.
    pub declare_tolerance: f64,
    /// Time every guided joint must stay in the band before declaring, seconds.
    pub hold_time: f64,
    /// Seed of the misread stream.
    pub seed: RngSeed,
}

impl SubjectParams {
    /// Checks ranges: all values finite and non-negative, speed positive,
    /// probability in `[0, 1]`.
    pub fn validate(&self) -> Result<(), Error> {
        let finite_nonneg = |v: f64| v.is_finite() && v >= 0.0;
        if !finite_nonneg(self.reaction_delay) {
            return Err(Error::InvalidInput("reaction_delay must be non-negative"));
        }
        if !(self.angular_speed.is_finite() && self.angular_speed > 0.0) {
            return Err(Error::InvalidInput("angular_speed must be positive"));
        }
        if !(0.0..=1.0).contains(&self.misread_prob) {
            return Err(Error::InvalidInput("misread_prob must lie in [0, 1]"));
        }
        if !finite_nonneg(self.declare_tolerance) {
            return Err(Error::InvalidInput("declare_tolerance must be non-negative"));
        }
        if !finite_nonneg(self.hold_time) {
            return Err(Error::InvalidInput("hold_time must be non-negative"));
        }
        Ok(())
    }
}

impl Default for SubjectParams {
    fn default() -> Self {
        SubjectParams {
            reaction_delay: 0.3,
            angular_speed: 30.0,
            misread_prob: 0.05,
            declare_tolerance: 5.0,
            hold_time: 1.0,
            seed: RngSeed(0),
        }
    }
}

/// The part of a cue whose change triggers a new interpretation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct CueSignature {
    direction: i8,
    intensity: i64,
}

impl CueSignature {
    fn of(cue: &GuidanceCue) -> Self {
        let intensity = match cue {
            GuidanceCue::ErgoTac(c) => VibrationLevel::ALL.iter().position(|l| *l == c.level).unwrap_or(0) as i64,
            GuidanceCue::Cuff(c) => libm::floor(c.squeeze_force) as i64,
        };
        CueSignature { direction: cue.direction(), intensity }
    }
}

#[derive(Debug, Clone, Copy)]
struct PendingIntent {
    due_tick: u64,
    joint: JointId,
    intent: Intent,
}

/// Mutable state of one simulated subject during one trial.
#[derive(Debug, Clone)]
pub struct Subject {
    params: SubjectParams,
    clock: SimClock,
    delay_ticks: u64,
    hold_ticks: u64,
    angles: JointMap<f64>,
    targets: JointMap<Option<f64>>,
    intents: JointMap<Intent>,
    in_band: JointMap<bool>,
    ticks_in_band: JointMap<u64>,
    last_cue: JointMap<Option<CueSignature>>,
    pending: VecDeque<PendingIntent>,
    rng: ChaCha8Rng,
}

impl Subject {
    /// Subject at `initial` angles (clamped into range), aiming for `targets`.
    pub fn new(params: SubjectParams, targets: &TargetPose, initial: JointMap<f64>, clock: SimClock) -> Result<Self, Error> {
        params.validate()?;
        let angles = initial.map(|j, a| {
            let (lo, hi) = j.range();
            a.clamp(lo, hi)
        });
        let targets = targets.as_map().map(|_, t| t.map(|a| a.degrees()));
        let mut s = Subject {
            params,
            clock,
            delay_ticks: clock.ticks_for(params.reaction_delay),
            hold_ticks: clock.ticks_for(params.hold_time),
            angles,
            targets,
            intents: JointMap::default(),
            in_band: JointMap::default(),
            ticks_in_band: JointMap::default(),
            last_cue: JointMap::new(None, None),
            pending: VecDeque::new(),
            rng: params.seed.rng(),
        };
        s.in_band = JointMap::from_fn(|j| s.within_band(j));
        Ok(s)
    }

    fn within_band(&self, joint: JointId) -> bool {
        match self.targets[joint] {
            Some(t) => libm::fabs(self.angles[joint] - t) <= self.params.declare_tolerance,
            None => false,
        }
    }

    /// Current time of the subject's clock.
    pub fn now(&self) -> f64 {
        self.clock.now()
    }

    /// Current joint angles.
    pub fn angles(&self) -> JointMap<f64> {
        self.angles
    }

    /// Current intents.
    pub fn intents(&self) -> JointMap<Intent> {
        self.intents
    }

    /// Parameters in use.
    pub fn params(&self) -> &SubjectParams {
        &self.params
    }

    /// Seconds each joint has continuously been inside the declare band.
    pub fn time_in_tolerance(&self) -> JointMap<f64> {
        self.ticks_in_band.map(|_, &n| n as f64 * self.clock.dt())
    }

    /// Registers `cue` at the current time.
    ///
    /// If the cue's content differs from the last one seen for its joint, the
    /// interpreted intent takes effect `reaction_delay` later.
    pub fn perceive(&mut self, cue: &GuidanceCue) -> Result<(), Error> {
        let joint = cue.joint();
        if self.targets[joint].is_none() {
            return Err(Error::InvalidInput("cue addressed to a joint without a target"));
        }
        let sig = CueSignature::of(cue);
        if self.last_cue[joint] == Some(sig) {
            return Ok(());
        }
        self.last_cue[joint] = Some(sig);
        let mut intent = Intent::from_direction(sig.direction);
        if intent != Intent::Hold && unit_interval(&mut self.rng) < self.params.misread_prob {
            intent = intent.inverted();
        }
        self.pending.push_back(PendingIntent { due_tick: self.clock.ticks() + self.delay_ticks, joint, intent });
        Ok(())
    }

    /// Applies every perception that is due at the current time.
    pub fn refresh_intents(&mut self) {
        let now = self.clock.ticks();
        while let Some(p) = self.pending.front() {
            if p.due_tick > now {
                break;
            }
            self.intents[p.joint] = p.intent;
            self.pending.pop_front();
        }
    }

    /// Advances one clock step: applies due perceptions, moves the joints and
    /// updates the time spent in the declare band.
    pub fn step(&mut self) {
        self.refresh_intents();
        let travel = self.params.angular_speed * self.clock.dt();
        for joint in JointId::ALL {
            let (lo, hi) = joint.range();
            let sign = self.intents[joint].sign();
            if sign != 0.0 {
                self.angles[joint] = (self.angles[joint] + sign * travel).clamp(lo, hi);
            }
        }
        self.clock.tick();
        for joint in JointId::ALL {
            let inside = self.within_band(joint);
            // Dwell counts from the first sample inside the band.
            self.ticks_in_band[joint] = match (self.in_band[joint], inside) {
                (true, true) => self.ticks_in_band[joint] + 1,
                _ => 0,
            };
            self.in_band[joint] = inside;
        }
    }

    /// True iff every listed joint has a target and has been inside the
    /// declare band for at least `hold_time`.
    pub fn declare_done(&self, joints: &[JointId]) -> bool {
        joints.iter().all(|&j| self.targets[j].is_some() && self.in_band[j] && self.ticks_in_band[j] >= self.hold_ticks)
    }

    /// [`Self::declare_done`] over every guided joint.
    pub fn declared(&self) -> bool {
        JointId::ALL.iter().filter(|j| self.targets[**j].is_some()).all(|&j| self.declare_done(&[j]))
    }
}
