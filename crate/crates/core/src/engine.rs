//! Closed-loop trial execution and the randomized session protocol.

use alloc::vec::Vec;
use core::fmt;

use rand::seq::SliceRandom;

use crate::clock::{RngSeed, SimClock};
use crate::devices::{
    cuff_command, ergotac_spot, CuffCommand, Device, DeviceConfig, ErgoTacCommand, GuidanceCue, SpotThresholds,
};
use crate::joint::{AngleDeg, JointId, JointMap, SignedError, TargetPose};
use crate::subject::{Intent, Subject, SubjectParams};
use crate::Error;

/// Default per-trial time limit, seconds.
pub const DEFAULT_TIMEOUT_S: f64 = 90.0;

/// Protocol sub-block: which joints are guided.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum SubBlock {
    /// Shoulder alone.
    #[cfg_attr(feature = "serde", serde(rename = "sh"))]
    ShoulderOnly,
    /// Knee alone.
    #[cfg_attr(feature = "serde", serde(rename = "kn"))]
    KneeOnly,
    /// Shoulder and knee at once.
    #[cfg_attr(feature = "serde", serde(rename = "sh+kn"))]
    MultiJoint,
}

impl SubBlock {
    /// All sub-blocks in canonical order.
    pub const ALL: [SubBlock; 3] = [SubBlock::ShoulderOnly, SubBlock::KneeOnly, SubBlock::MultiJoint];

    /// Sub-block a pose belongs to.
    pub fn of(targets: &TargetPose) -> SubBlock {
        match (targets.get(JointId::Shoulder).is_some(), targets.get(JointId::Knee).is_some()) {
            (true, true) => SubBlock::MultiJoint,
            (true, false) => SubBlock::ShoulderOnly,
            _ => SubBlock::KneeOnly,
        }
    }

    /// Short label used in files: `sh`, `kn`, `sh+kn`.
    pub const fn label(self) -> &'static str {
        match self {
            SubBlock::ShoulderOnly => "sh",
            SubBlock::KneeOnly => "kn",
            SubBlock::MultiJoint => "sh+kn",
        }
    }

    /// The protocol's target set for this sub-block.
    pub fn protocol_targets(self) -> Vec<TargetPose> {
        // Every value below lies inside the joint ranges, so construction cannot fail.
        let poses: Vec<Result<TargetPose, Error>> = match self {
            SubBlock::ShoulderOnly => SHOULDER_TARGETS.iter().map(|&a| TargetPose::single(JointId::Shoulder, a)).collect(),
            SubBlock::KneeOnly => KNEE_TARGETS.iter().map(|&a| TargetPose::single(JointId::Knee, a)).collect(),
            SubBlock::MultiJoint => PAIR_TARGETS.iter().map(|&(s, k)| TargetPose::pair(s, k)).collect(),
        };
        poses.into_iter().flatten().collect()
    }
}

impl fmt::Display for SubBlock {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl core::str::FromStr for SubBlock {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "sh" => Ok(SubBlock::ShoulderOnly),
            "kn" => Ok(SubBlock::KneeOnly),
            "sh+kn" => Ok(SubBlock::MultiJoint),
            _ => Err(Error::InvalidInput("unknown sub-block label")),
        }
    }
}

/// Shoulder targets, degrees.
pub const SHOULDER_TARGETS: [f64; 3] = [-10.0, 45.0, 90.0];
/// Knee targets, degrees.
pub const KNEE_TARGETS: [f64; 3] = [30.0, 80.0, 115.0];
/// (shoulder, knee) target pairs, degrees.
pub const PAIR_TARGETS: [(f64, f64); 3] = [(20.0, 110.0), (55.0, 70.0), (100.0, 40.0)];

/// Default starting posture: shoulder 0°, knee 60°.
pub fn default_initial_pose() -> JointMap<AngleDeg> {
    JointMap::new(AngleDeg::finite(0.0), AngleDeg::finite(60.0))
}

/// One trial to run.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrialSpec {
    /// Device providing the guidance.
    pub device: Device,
    /// Target angles of the guided joints.
    pub targets: TargetPose,
    /// Time limit, seconds.
    pub timeout: f64,
    /// Starting angles.
    pub initial_pose: JointMap<AngleDeg>,
}

impl TrialSpec {
    /// Spec with the default timeout and starting posture.
    pub fn new(device: Device, targets: TargetPose) -> Self {
        TrialSpec { device, targets, timeout: DEFAULT_TIMEOUT_S, initial_pose: default_initial_pose() }
    }

    /// Sub-block the trial belongs to.
    pub fn sub_block(&self) -> SubBlock {
        SubBlock::of(&self.targets)
    }

    /// Checks the timeout and the starting posture.
    pub fn validate(&self) -> Result<(), Error> {
        if !(self.timeout > 0.0 && self.timeout.is_finite()) {
            return Err(Error::InvalidInput("timeout must be positive"));
        }
        for (joint, angle) in self.initial_pose.iter() {
            if !angle.within_range(joint) {
                return Err(Error::InvalidInput("initial pose outside joint range"));
            }
        }
        Ok(())
    }
}

/// One logged tick.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Sample {
    /// Time since trial start, seconds.
    pub t: f64,
    /// Joint angles, degrees.
    pub angles: JointMap<f64>,
    /// `target − angle` for guided joints.
    pub errors: JointMap<Option<f64>>,
    /// Cues emitted at this tick, one per guided joint.
    pub cues: Vec<GuidanceCue>,
    /// Subject intents driving the motion out of this sample.
    pub intents: JointMap<Intent>,
}

impl Sample {
    /// Cue addressed to `joint`, if any.
    pub fn cue_for(&self, joint: JointId) -> Option<&GuidanceCue> {
        self.cues.iter().find(|c| c.joint() == joint)
    }
}

/// How a trial ended.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "snake_case"))]
pub enum Outcome {
    /// The subject declared the goal reached.
    Success {
        /// Time of the declaration since trial start, seconds.
        reaching_time: f64,
    },
    /// The time limit expired.
    Timeout,
}

/// Full record of one trial.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrialLog {
    /// What was run.
    pub spec: TrialSpec,
    /// Subject parameters, including the misread seed.
    pub subject: SubjectParams,
    /// Simulation step, seconds.
    pub dt: f64,
    /// Goal tolerance used by the device policy, degrees.
    pub tolerance: f64,
    /// Samples in time order.
    pub samples: Vec<Sample>,
    /// How the trial ended.
    pub outcome: Outcome,
}

impl TrialLog {
    /// Whether the trial succeeded.
    pub fn succeeded(&self) -> bool {
        matches!(self.outcome, Outcome::Success { .. })
    }
}

/// ErgoTac arbitration: at most one joint is guided at a time.
///
/// Joints within `th.tol` are ignored. The previously active joint keeps the
/// guidance until it enters tolerance; otherwise the largest |error| wins.
pub fn ergotac_schedule(
    errors: &JointMap<Option<SignedError>>,
    th: &SpotThresholds,
    previous_active: Option<JointId>,
) -> Option<ErgoTacCommand> {
    let needs_guidance = |j: JointId| errors[j].filter(|e| e.magnitude() > th.tol());
    let keep = previous_active.and_then(|j| needs_guidance(j).map(|e| (j, e)));
    let chosen = keep.or_else(|| {
        JointId::ALL.iter().filter_map(|&j| needs_guidance(j).map(|e| (j, e))).fold(None, |best, (j, e)| match best {
            Some((_, b)) if SignedError::magnitude(b) >= e.magnitude() => best,
            _ => Some((j, e)),
        })
    });
    chosen.map(|(j, e)| ergotac_spot(j, e, th))
}

/// CUFF scheduling: one independent command per guided joint.
pub fn cuff_schedule(errors: &JointMap<Option<SignedError>>, tol: f64) -> Vec<CuffCommand> {
    errors.iter().filter_map(|(j, e)| e.map(|e| cuff_command(j, e, tol))).collect()
}

/// Processor side of the loop: turns joint angles into device cues.
#[derive(Debug, Clone)]
pub struct GuidancePolicy {
    device: Device,
    config: DeviceConfig,
    targets: TargetPose,
    active: Option<JointId>,
}

impl GuidancePolicy {
    /// Policy for one trial.
    pub fn new(device: Device, config: DeviceConfig, targets: TargetPose) -> Self {
        GuidancePolicy { device, config, targets, active: None }
    }

    /// Signed errors of the guided joints at `angles`.
    pub fn errors(&self, angles: &JointMap<f64>) -> JointMap<Option<SignedError>> {
        JointMap::from_fn(|j| self.targets.get(j).map(|t| SignedError(t.degrees() - angles[j])))
    }

    /// Cues for this tick, one per guided joint in canonical order.
    pub fn cues(&mut self, angles: &JointMap<f64>) -> Vec<GuidanceCue> {
        let errors = self.errors(angles);
        match self.device {
            Device::Cuff => cuff_schedule(&errors, self.config.cuff_tolerance).into_iter().map(GuidanceCue::Cuff).collect(),
            Device::ErgoTac => {
                let cmd = ergotac_schedule(&errors, &self.config.spot, self.active);
                self.active = cmd.map(|c| c.unit.joint);
                self.targets
                    .guided()
                    .map(|(j, _)| match cmd {
                        Some(c) if c.unit.joint == j => GuidanceCue::ErgoTac(c),
                        _ => GuidanceCue::ErgoTac(ErgoTacCommand::off(j)),
                    })
                    .collect()
            }
        }
    }
}

/// Transport between the sensing side (subject angles) and the processor.
///
/// Direct wiring calls the processor in place; other transports can carry
/// the angles and cues through a message layer, which must hand back the
/// cues unchanged for the log to match.
pub trait GuidanceLink {
    /// Transport error.
    type Error: From<Error>;

    /// Carries one tick's angles to `processor` and returns the cues it emitted.
    fn exchange(
        &mut self,
        t: f64,
        angles: &JointMap<f64>,
        processor: &mut dyn FnMut(&JointMap<f64>) -> Vec<GuidanceCue>,
    ) -> Result<Vec<GuidanceCue>, Self::Error>;
}

/// In-place wiring.
#[derive(Debug, Clone, Copy, Default)]
pub struct DirectLink;

impl GuidanceLink for DirectLink {
    type Error = Error;

    fn exchange(
        &mut self,
        _t: f64,
        angles: &JointMap<f64>,
        processor: &mut dyn FnMut(&JointMap<f64>) -> Vec<GuidanceCue>,
    ) -> Result<Vec<GuidanceCue>, Error> {
        Ok(processor(angles))
    }
}

/// Runs one trial with direct wiring.
pub fn run_trial(spec: &TrialSpec, subject: &SubjectParams, config: &DeviceConfig, clock: SimClock) -> Result<TrialLog, Error> {
    run_trial_with(spec, subject, config, clock, &mut DirectLink)
}

/// Runs one trial, carrying every tick through `link`.
///
/// Per tick: read angles, compute cues, let the subject perceive them, log
/// the sample, stop on declaration or timeout, otherwise step the subject.
pub fn run_trial_with<L: GuidanceLink>(
    spec: &TrialSpec,
    subject_params: &SubjectParams,
    config: &DeviceConfig,
    mut clock: SimClock,
    link: &mut L,
) -> Result<TrialLog, L::Error> {
    spec.validate()?;
    config.validate()?;
    let start = clock.ticks();
    let timeout_ticks = start + clock.ticks_for(spec.timeout);
    let initial = spec.initial_pose.map(|_, a| a.degrees());
    let mut subject = Subject::new(*subject_params, &spec.targets, initial, clock)?;
    let mut policy = GuidancePolicy::new(spec.device, *config, spec.targets);
    let t0 = clock.now();
    let mut samples = Vec::new();

    let outcome = loop {
        let t = clock.now() - t0;
        let angles = subject.angles();
        let cues = link.exchange(t, &angles, &mut |a| policy.cues(a))?;
        for cue in &cues {
            subject.perceive(cue)?;
        }
        subject.refresh_intents();
        let errors = policy.errors(&angles).map(|_, e| e.map(SignedError::degrees));
        samples.push(Sample { t, angles, errors, cues, intents: subject.intents() });
        if subject.declared() {
            break Outcome::Success { reaching_time: t };
        }
        if clock.ticks() >= timeout_ticks {
            break Outcome::Timeout;
        }
        subject.step();
        clock.tick();
    };

    Ok(TrialLog {
        spec: *spec,
        subject: *subject_params,
        dt: clock.dt(),
        tolerance: config.tolerance(spec.device),
        samples,
        outcome,
    })
}

/// One device block: its sub-blocks in run order, each with its targets in run order.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DeviceBlock {
    /// Device of the block.
    pub device: Device,
    /// `(sub-block, ordered targets)` in run order.
    pub sub_blocks: Vec<(SubBlock, Vec<TargetPose>)>,
}

/// Ordered protocol for one subject.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SessionSpec {
    /// Device blocks in run order.
    pub blocks: Vec<DeviceBlock>,
    /// Seed that produced the ordering.
    pub seed: RngSeed,
}

impl SessionSpec {
    /// Protocol with block order, sub-block order and target order each
    /// shuffled by `seed`.
    pub fn randomized(seed: RngSeed) -> Self {
        let mut rng = seed.rng();
        let mut devices = Device::ALL;
        devices.shuffle(&mut rng);
        let blocks = devices
            .iter()
            .map(|&device| {
                let mut kinds = SubBlock::ALL;
                kinds.shuffle(&mut rng);
                let sub_blocks = kinds
                    .iter()
                    .map(|&kind| {
                        let mut targets = kind.protocol_targets();
                        targets.shuffle(&mut rng);
                        (kind, targets)
                    })
                    .collect();
                DeviceBlock { device, sub_blocks }
            })
            .collect();
        SessionSpec { blocks, seed }
    }

    /// `(device, targets)` for every trial in run order.
    pub fn trials(&self) -> impl Iterator<Item = (Device, TargetPose)> + '_ {
        self.blocks
            .iter()
            .flat_map(|b| b.sub_blocks.iter().flat_map(move |(_, ts)| ts.iter().map(move |t| (b.device, *t))))
    }
}

/// Settings applied to every trial of a session.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SessionSettings {
    /// Per-trial time limit, seconds.
    pub timeout: f64,
    /// Starting posture of every trial.
    pub initial_pose: JointMap<AngleDeg>,
    /// Simulation step, seconds.
    pub dt: f64,
}

impl Default for SessionSettings {
    fn default() -> Self {
        SessionSettings { timeout: DEFAULT_TIMEOUT_S, initial_pose: default_initial_pose(), dt: crate::clock::DEFAULT_DT }
    }
}

/// Subject parameters used for the `index`-th trial of a session: same
/// behaviour, independent misread stream.
pub fn trial_subject(params: &SubjectParams, index: usize) -> SubjectParams {
    SubjectParams { seed: params.seed.derive(index as u64), ..*params }
}

/// Runs every trial of `session` in order.
pub fn run_session(
    session: &SessionSpec,
    subject: &SubjectParams,
    config: &DeviceConfig,
    settings: &SessionSettings,
) -> Result<Vec<TrialLog>, Error> {
    let clock = SimClock::new(settings.dt)?;
    session
        .trials()
        .enumerate()
        .map(|(i, (device, targets))| {
            let spec = TrialSpec { device, targets, timeout: settings.timeout, initial_pose: settings.initial_pose };
            run_trial(&spec, &trial_subject(subject, i), config, clock)
        })
        .collect()
}
