//! Line-oriented envelope encoding, recordings, replay and the stream bridge.
//!
//! One envelope per line, UTF-8:
//!
//! ```text
//! {"topic":"/human/joint_states","stamp":0.010000,"seq":1,"payload":{"type":"joint_states","shoulder_deg":0.3,"knee_deg":60.0}}
//! ```
//!
//! `stamp` always carries six decimals. Recordings on disk use the same format.

use std::io::{self, BufRead, BufWriter, Write};
use std::net::{TcpListener, TcpStream};
use std::time::Duration;

use serde::Deserialize;
use thiserror::Error;

use crate::bus::{Bus, BusError, Envelope, Message, Subscription, TopicName};

/// Failures reading or replaying a recording.
#[derive(Debug, Error)]
pub enum WireError {
    /// A line could not be decoded.
    #[error("line {line}: {reason}")]
    Parse {
        /// 1-based line number.
        line: usize,
        /// Decoder message.
        reason: String,
    },
    /// IO failure.
    #[error(transparent)]
    Io(#[from] io::Error),
    /// The bus rejected a republished envelope.
    #[error(transparent)]
    Bus(#[from] BusError),
}

/// Encodes one envelope as a single line without the trailing newline.
pub fn encode_line(env: &Envelope) -> String {
    let topic = serde_json::to_string(env.topic.as_str()).expect("string serializes");
    let payload = serde_json::to_string(&env.payload).expect("payload serializes");
    format!("{{\"topic\":{topic},\"stamp\":{:.6},\"seq\":{},\"payload\":{payload}}}", env.stamp, env.sequence)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct WireEnvelope {
    topic: TopicName,
    stamp: f64,
    seq: u64,
    payload: Message,
}

/// Decodes one line.
pub fn decode_line(line: &str) -> Result<Envelope, String> {
    let w: WireEnvelope = serde_json::from_str(line).map_err(|e| e.to_string())?;
    if !w.stamp.is_finite() {
        return Err("stamp must be finite".into());
    }
    Ok(Envelope { topic: w.topic, stamp: w.stamp, sequence: w.seq, payload: w.payload })
}

/// An ordered list of envelopes.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Recording {
    /// Envelopes in capture order.
    pub envelopes: Vec<Envelope>,
}

impl Recording {
    /// Writes one line per envelope.
    pub fn write_to<W: Write>(&self, w: W) -> io::Result<()> {
        let mut w = BufWriter::new(w);
        for e in &self.envelopes {
            writeln!(w, "{}", encode_line(e))?;
        }
        w.flush()
    }

    /// Encoded text of the whole recording.
    pub fn to_text(&self) -> String {
        self.envelopes.iter().map(|e| encode_line(e) + "\n").collect()
    }

    /// Reads a recording; blank lines are skipped, anything else must decode.
    pub fn read_from<R: BufRead>(r: R) -> Result<Recording, WireError> {
        let mut envelopes = Vec::new();
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            envelopes.push(decode_line(&line).map_err(|reason| WireError::Parse { line: i + 1, reason })?);
        }
        Ok(Recording { envelopes })
    }
}

/// Captures every envelope published on a set of topics.
#[derive(Debug)]
pub struct Recorder {
    sub: Subscription,
    captured: Vec<Envelope>,
}

impl Recorder {
    /// Starts capturing `topics` on `bus`.
    pub fn start(bus: &Bus, topics: &[&str]) -> Result<Recorder, BusError> {
        Ok(Recorder { sub: bus.subscribe_many(topics)?, captured: Vec::new() })
    }

    /// Moves queued envelopes into the capture buffer.
    pub fn poll(&mut self) {
        self.captured.extend(self.sub.drain());
    }

    /// Stops capturing and returns the recording.
    pub fn finish(mut self) -> Recording {
        self.poll();
        Recording { envelopes: self.captured }
    }
}

/// Waits between replayed envelopes.
pub trait Pacer {
    /// Blocks for `wall` before the next envelope.
    fn wait(&mut self, wall: Duration);
}

/// Sleeps for real.
#[derive(Debug, Default, Clone, Copy)]
pub struct SleepPacer;

impl Pacer for SleepPacer {
    fn wait(&mut self, wall: Duration) {
        if !wall.is_zero() {
            std::thread::sleep(wall);
        }
    }
}

/// Republishes `recording` on `bus` with its original stamps and sequence
/// numbers. Inter-message waits are the stamp gaps divided by `speed`;
/// a non-finite or non-positive speed replays without waiting.
pub fn replay(recording: &Recording, bus: &Bus, speed: f64, pacer: &mut dyn Pacer) -> Result<usize, WireError> {
    let mut prev: Option<f64> = None;
    for env in &recording.envelopes {
        if let Some(p) = prev {
            let gap = (env.stamp - p).max(0.0);
            if speed.is_finite() && speed > 0.0 {
                pacer.wait(Duration::from_secs_f64(gap / speed));
            }
        }
        prev = Some(env.stamp);
        bus.republish(env)?;
    }
    Ok(recording.envelopes.len())
}

/// Writes every envelope from `sub` to `out` as lines until `stop` returns
/// true after an idle poll or the writer fails.
pub fn forward<W: Write>(sub: &Subscription, out: W, mut stop: impl FnMut() -> bool) -> io::Result<usize> {
    let mut out = BufWriter::new(out);
    let mut n = 0;
    loop {
        match sub.recv_timeout(Duration::from_millis(20)) {
            Some(env) => {
                writeln!(out, "{}", encode_line(&env))?;
                n += 1;
            }
            None => {
                out.flush()?;
                if stop() {
                    return Ok(n);
                }
            }
        }
    }
}

/// Reads envelope lines from `input` and republishes them on `bus`.
pub fn ingest<R: BufRead>(input: R, bus: &Bus) -> Result<usize, WireError> {
    let rec = Recording::read_from(input)?;
    for env in &rec.envelopes {
        bus.republish(env)?;
    }
    Ok(rec.envelopes.len())
}

/// Accepts one client on `listener` and streams `topics` to it until `stop`.
pub fn serve_one(listener: &TcpListener, bus: &Bus, topics: &[&str], stop: impl FnMut() -> bool) -> Result<usize, WireError> {
    let sub = bus.subscribe_many(topics)?;
    let (stream, _) = listener.accept()?;
    Ok(forward(&sub, stream, stop)?)
}

/// Connects to a stream server and republishes everything it sends until EOF.
pub fn connect_and_ingest(addr: &str, bus: &Bus) -> Result<usize, WireError> {
    let stream = TcpStream::connect(addr)?;
    ingest(io::BufReader::new(stream), bus)
}
