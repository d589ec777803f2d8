//! Trial wiring through the message bus.

use hapguide_core::devices::GuidanceCue;
use hapguide_core::engine::GuidanceLink;
use hapguide_core::{Error, JointMap, TargetPose};
use thiserror::Error as ThisError;

use crate::bus::{Bus, BusError, Message, Subscription, CUFF_CMD, ERGOTAC_CMD, JOINT_STATES};

/// Failure while carrying a tick through the bus.
#[derive(Debug, ThisError)]
pub enum LinkError {
    /// Simulation error.
    #[error(transparent)]
    Core(#[from] Error),
    /// Bus error.
    #[error(transparent)]
    Bus(#[from] BusError),
    /// A published message never reached its subscriber.
    #[error("message lost on {0}")]
    Lost(&'static str),
}

/// Sensor → processor → device pipeline over a [`Bus`].
///
/// Angles go out on the joint-state topic, the processor reads them from
/// its own subscription, and the resulting commands come back on the device
/// topics to the subject side.
#[derive(Debug)]
pub struct BusLink {
    bus: Bus,
    targets: TargetPose,
    processor_in: Subscription,
    device_in: Subscription,
}

impl BusLink {
    /// Subscribes both ends on `bus`. `targets` is used only to attach the
    /// raw signed error to each command for logging.
    pub fn new(bus: &Bus, targets: TargetPose) -> Result<Self, BusError> {
        Ok(BusLink {
            bus: bus.clone(),
            targets,
            processor_in: bus.subscribe(JOINT_STATES)?,
            device_in: bus.subscribe_many(&[ERGOTAC_CMD, CUFF_CMD])?,
        })
    }
}

impl GuidanceLink for BusLink {
    type Error = LinkError;

    fn exchange(
        &mut self,
        t: f64,
        angles: &JointMap<f64>,
        processor: &mut dyn FnMut(&JointMap<f64>) -> Vec<GuidanceCue>,
    ) -> Result<Vec<GuidanceCue>, LinkError> {
        self.bus.publish(JOINT_STATES, Message::JointStates { shoulder_deg: angles.shoulder, knee_deg: angles.knee }, t)?;
        let sensed = match self.processor_in.try_recv().map(|e| e.payload) {
            Some(Message::JointStates { shoulder_deg, knee_deg }) => JointMap::new(shoulder_deg, knee_deg),
            _ => return Err(LinkError::Lost(JOINT_STATES)),
        };
        let cues = processor(&sensed);
        for cue in &cues {
            let joint = cue.joint();
            let err = self.targets.get(joint).map(|target| target.degrees() - sensed[joint]);
            let topic = match cue {
                GuidanceCue::ErgoTac(_) => ERGOTAC_CMD,
                GuidanceCue::Cuff(_) => CUFF_CMD,
            };
            self.bus.publish(topic, Message::from_cue(cue, err), t)?;
        }
        let received: Vec<GuidanceCue> = self.device_in.drain().iter().filter_map(|e| e.payload.to_cue()).collect();
        if received.len() != cues.len() {
            return Err(LinkError::Lost("device command topics"));
        }
        Ok(received)
    }
}
