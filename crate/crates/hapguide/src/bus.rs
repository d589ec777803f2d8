//! In-process publish/subscribe and request/reply message bus.
//!
//! Topics carry schema-tagged [`Message`]s in timestamped, sequenced
//! [`Envelope`]s. Delivery is per-topic FIFO and exactly-once per
//! subscriber; late subscribers do not see earlier messages.

use std::collections::HashMap;
use std::fmt;
use std::sync::mpsc::{self, Receiver, Sender};
use std::sync::{Arc, Mutex, MutexGuard};
use std::time::Duration;

use hapguide_core::devices::{
    cuff_calibrate, CuffCalibration, CuffCommand, ErgoTacCommand, ErgoTacUnit, GuidanceCue, Placement, Slide,
    VibrationLevel,
};
use hapguide_core::JointId;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

/// Joint angle stream from the sensing side.
pub const JOINT_STATES: &str = "/human/joint_states";
/// ErgoTac unit commands.
pub const ERGOTAC_CMD: &str = "/feedback/ergotac/cmd";
/// CUFF slide/squeeze commands.
pub const CUFF_CMD: &str = "/feedback/cuff/cmd";
/// CUFF calibration service.
pub const CUFF_CALIBRATE: &str = "/cuff/calibrate";

/// Bus failures.
#[derive(Debug, Error, PartialEq)]
pub enum BusError {
    /// Topic path is not registered.
    #[error("topic `{0}` is not registered")]
    UnknownTopic(String),
    /// Topic path is malformed or already registered.
    #[error("invalid topic `{0}`: {1}")]
    InvalidTopic(String, &'static str),
    /// Payload or request does not match the schema.
    #[error("schema mismatch on `{topic}`: expected {expected}")]
    Schema {
        /// Topic or endpoint path.
        topic: String,
        /// Expected schema.
        expected: String,
    },
    /// No handler for the endpoint.
    #[error("service `{0}` is unavailable")]
    Unavailable(String),
    /// The handler rejected the request.
    #[error("service `{path}` failed: {reason}")]
    Service {
        /// Endpoint path.
        path: String,
        /// Handler message.
        reason: String,
    },
    /// A republished envelope would break per-topic ordering.
    #[error("out-of-order envelope on `{topic}`: seq {seq} after {last}")]
    OutOfOrder {
        /// Topic.
        topic: String,
        /// Offending sequence number.
        seq: u64,
        /// Last sequence number delivered.
        last: u64,
    },
}

/// A registered topic path: non-empty, `/`-separated, no empty segments.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct TopicName(String);

impl TopicName {
    /// Validates a path such as `/human/joint_states`.
    pub fn new(path: &str) -> Result<Self, BusError> {
        let ok = path.starts_with('/')
            && path.len() > 1
            && path[1..].split('/').all(|seg| !seg.is_empty() && seg.chars().all(|c| c.is_ascii_alphanumeric() || c == '_'));
        if ok {
            Ok(TopicName(path.to_string()))
        } else {
            Err(BusError::InvalidTopic(path.to_string(), "expected /segment[/segment...] with [A-Za-z0-9_] segments"))
        }
    }

    /// The path.
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for TopicName {
    type Error = BusError;

    fn try_from(s: String) -> Result<Self, BusError> {
        TopicName::new(&s)
    }
}

impl From<TopicName> for String {
    fn from(t: TopicName) -> String {
        t.0
    }
}

impl fmt::Display for TopicName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Payload schemas.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Schema {
    /// [`Message::JointStates`].
    JointStates,
    /// [`Message::ErgotacCmd`].
    ErgotacCmd,
    /// [`Message::CuffCmd`].
    CuffCmd,
}

impl fmt::Display for Schema {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Schema::JointStates => "joint_states",
            Schema::ErgotacCmd => "ergotac_cmd",
            Schema::CuffCmd => "cuff_cmd",
        })
    }
}

/// Schema-tagged payload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Message {
    /// Joint angles, degrees.
    JointStates {
        /// Shoulder angle.
        shoulder_deg: f64,
        /// Knee angle.
        knee_deg: f64,
    },
    /// ErgoTac unit id and level.
    ErgotacCmd {
        /// Joint pair addressed.
        joint: JointId,
        /// Unit side.
        unit_placement: Placement,
        /// Vibration level.
        level: VibrationLevel,
        /// Raw signed error the command was computed from, for logging.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        error_deg: Option<f64>,
    },
    /// CUFF slide and squeeze.
    CuffCmd {
        /// Joint wearing the CUFF.
        joint: JointId,
        /// Slide direction.
        slide: Slide,
        /// Squeeze force, newtons.
        squeeze_force_n: f64,
        /// Raw signed error the command was computed from, for logging.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        error_deg: Option<f64>,
    },
}

impl Message {
    /// Schema of this payload.
    pub fn schema(&self) -> Schema {
        match self {
            Message::JointStates { .. } => Schema::JointStates,
            Message::ErgotacCmd { .. } => Schema::ErgotacCmd,
            Message::CuffCmd { .. } => Schema::CuffCmd,
        }
    }

    /// Command message for a cue, with the raw error attached.
    pub fn from_cue(cue: &GuidanceCue, error_deg: Option<f64>) -> Message {
        match cue {
            GuidanceCue::ErgoTac(c) => {
                Message::ErgotacCmd { joint: c.unit.joint, unit_placement: c.unit.placement, level: c.level, error_deg }
            }
            GuidanceCue::Cuff(c) => {
                Message::CuffCmd { joint: c.joint, slide: c.slide, squeeze_force_n: c.squeeze_force, error_deg }
            }
        }
    }

    /// The cue carried by a command message.
    pub fn to_cue(&self) -> Option<GuidanceCue> {
        match *self {
            Message::ErgotacCmd { joint, unit_placement, level, .. } => {
                Some(GuidanceCue::ErgoTac(ErgoTacCommand { unit: ErgoTacUnit { joint, placement: unit_placement }, level }))
            }
            Message::CuffCmd { joint, slide, squeeze_force_n, .. } => {
                Some(GuidanceCue::Cuff(CuffCommand { joint, slide, squeeze_force: squeeze_force_n }))
            }
            Message::JointStates { .. } => None,
        }
    }
}

/// A delivered message.
#[derive(Debug, Clone, PartialEq)]
pub struct Envelope {
    /// Topic.
    pub topic: TopicName,
    /// Time stamp, seconds, quantized to microseconds.
    pub stamp: f64,
    /// Per-topic sequence number, strictly increasing.
    pub sequence: u64,
    /// Payload.
    pub payload: Message,
}

/// Rounds a stamp to the wire resolution (1 µs).
pub fn quantize_stamp(stamp: f64) -> f64 {
    (stamp * 1e6).round() / 1e6
}

struct TopicState {
    schema: Schema,
    next_seq: u64,
    subscribers: Vec<Sender<Envelope>>,
}

type Handler = Box<dyn Fn(&Value) -> Result<Value, BusError> + Send + Sync>;

#[derive(Default)]
struct Inner {
    topics: Mutex<HashMap<TopicName, TopicState>>,
    services: Mutex<HashMap<String, Arc<Handler>>>,
}

/// Shared handle to one bus. Cloning shares the bus.
#[derive(Clone, Default)]
pub struct Bus {
    inner: Arc<Inner>,
}

impl fmt::Debug for Bus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Bus").finish_non_exhaustive()
    }
}

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|poisoned| poisoned.into_inner())
}

impl Bus {
    /// Empty bus.
    pub fn new() -> Self {
        Bus::default()
    }

    /// Bus with the joint-state and device-command topics registered.
    pub fn with_default_topics() -> Self {
        let bus = Bus::new();
        for (path, schema) in
            [(JOINT_STATES, Schema::JointStates), (ERGOTAC_CMD, Schema::ErgotacCmd), (CUFF_CMD, Schema::CuffCmd)]
        {
            // Static paths are valid and distinct.
            bus.register_topic(path, schema).expect("default topics register");
        }
        bus
    }

    /// Registers `path` with a fixed payload schema.
    pub fn register_topic(&self, path: &str, schema: Schema) -> Result<TopicName, BusError> {
        let name = TopicName::new(path)?;
        let mut topics = lock(&self.inner.topics);
        if topics.contains_key(&name) {
            return Err(BusError::InvalidTopic(path.to_string(), "already registered"));
        }
        topics.insert(
            name.clone(),
            TopicState { schema, next_seq: 0, subscribers: Vec::new() },
        );
        Ok(name)
    }

    /// Schema registered for `path`.
    pub fn schema_of(&self, path: &str) -> Option<Schema> {
        let name = TopicName::new(path).ok()?;
        lock(&self.inner.topics).get(&name).map(|t| t.schema)
    }

    /// Publishes `payload` on `path` and returns the delivered envelope.
    pub fn publish(&self, path: &str, payload: Message, stamp: f64) -> Result<Envelope, BusError> {
        let name = TopicName::new(path)?;
        let mut topics = lock(&self.inner.topics);
        let state = topics.get_mut(&name).ok_or_else(|| BusError::UnknownTopic(path.to_string()))?;
        check_schema(state, &name, &payload)?;
        let env = Envelope { topic: name, stamp: quantize_stamp(stamp), sequence: state.next_seq, payload };
        deliver(state, &env);
        Ok(env)
    }

    /// Republishes a recorded envelope, keeping its stamp and sequence number.
    pub fn republish(&self, env: &Envelope) -> Result<(), BusError> {
        let mut topics = lock(&self.inner.topics);
        let state = topics.get_mut(&env.topic).ok_or_else(|| BusError::UnknownTopic(env.topic.to_string()))?;
        check_schema(state, &env.topic, &env.payload)?;
        if env.sequence < state.next_seq {
            return Err(BusError::OutOfOrder {
                topic: env.topic.to_string(),
                seq: env.sequence,
                last: state.next_seq.saturating_sub(1),
            });
        }
        state.next_seq = env.sequence;
        deliver(state, env);
        Ok(())
    }

    /// Subscribes to one topic.
    pub fn subscribe(&self, path: &str) -> Result<Subscription, BusError> {
        self.subscribe_many(&[path])
    }

    /// One subscription fed by several topics. Envelopes arrive in publish order.
    pub fn subscribe_many(&self, paths: &[&str]) -> Result<Subscription, BusError> {
        let mut topics = lock(&self.inner.topics);
        let names = paths.iter().map(|p| TopicName::new(p)).collect::<Result<Vec<_>, _>>()?;
        if let Some(missing) = names.iter().find(|n| !topics.contains_key(*n)) {
            return Err(BusError::UnknownTopic(missing.to_string()));
        }
        let (tx, rx) = mpsc::channel();
        for n in &names {
            if let Some(state) = topics.get_mut(n) {
                state.subscribers.push(tx.clone());
            }
        }
        Ok(Subscription { rx })
    }

    /// Registers the handler of a request/reply endpoint.
    pub fn register_service<F>(&self, path: &str, handler: F) -> Result<(), BusError>
    where
        F: Fn(&Value) -> Result<Value, BusError> + Send + Sync + 'static,
    {
        TopicName::new(path)?;
        let mut services = lock(&self.inner.services);
        if services.contains_key(path) {
            return Err(BusError::InvalidTopic(path.to_string(), "service already registered"));
        }
        services.insert(path.to_string(), Arc::new(Box::new(handler)));
        Ok(())
    }

    /// Synchronous request/reply call.
    pub fn call_service(&self, path: &str, request: &Value) -> Result<Value, BusError> {
        let handler = lock(&self.inner.services).get(path).cloned().ok_or_else(|| BusError::Unavailable(path.to_string()))?;
        handler(request)
    }
}

fn check_schema(state: &TopicState, name: &TopicName, payload: &Message) -> Result<(), BusError> {
    if payload.schema() == state.schema {
        Ok(())
    } else {
        Err(BusError::Schema { topic: name.to_string(), expected: state.schema.to_string() })
    }
}

fn deliver(state: &mut TopicState, env: &Envelope) {
    state.next_seq = env.sequence + 1;
    state.subscribers.retain(|tx| tx.send(env.clone()).is_ok());
}

/// Receiving end of a subscription.
#[derive(Debug)]
pub struct Subscription {
    rx: Receiver<Envelope>,
}

impl Subscription {
    /// Next envelope if one is queued.
    pub fn try_recv(&self) -> Option<Envelope> {
        self.rx.try_recv().ok()
    }

    /// Waits up to `timeout` for the next envelope.
    pub fn recv_timeout(&self, timeout: Duration) -> Option<Envelope> {
        self.rx.recv_timeout(timeout).ok()
    }

    /// Everything queued right now.
    pub fn drain(&self) -> Vec<Envelope> {
        std::iter::from_fn(|| self.try_recv()).collect()
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CalibrateRequest {
    gamma0_deg: f64,
    k_force: f64,
    k_slide: f64,
}

/// Shared slot holding the most recent CUFF calibration.
pub type CalibrationSlot = Arc<Mutex<Option<CuffCalibration>>>;

/// Registers the CUFF calibration service; successful calls store into the returned slot.
///
/// Request: `{"gamma0_deg": .., "k_force": .., "k_slide": ..}`.
/// Response: `{"ok": true, "gamma0_deg": .., "k_force": .., "k_slide": ..}`.
pub fn register_cuff_calibration(bus: &Bus) -> Result<CalibrationSlot, BusError> {
    let slot: CalibrationSlot = Arc::new(Mutex::new(None));
    let store = Arc::clone(&slot);
    bus.register_service(CUFF_CALIBRATE, move |req| {
        let r: CalibrateRequest = serde_json::from_value(req.clone()).map_err(|_| BusError::Schema {
            topic: CUFF_CALIBRATE.to_string(),
            expected: "{gamma0_deg, k_force, k_slide}".to_string(),
        })?;
        let cal = cuff_calibrate(r.gamma0_deg, r.k_force, r.k_slide)
            .map_err(|e| BusError::Service { path: CUFF_CALIBRATE.to_string(), reason: e.to_string() })?;
        *lock(&store) = Some(cal);
        Ok(serde_json::json!({
            "ok": true,
            "gamma0_deg": cal.gamma0(),
            "k_force": cal.k_force(),
            "k_slide": cal.k_slide(),
        }))
    })?;
    Ok(slot)
}
