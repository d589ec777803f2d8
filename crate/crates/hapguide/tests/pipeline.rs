use std::time::Duration;

use hapguide::app;
use hapguide::bus::{register_cuff_calibration, Bus, Message, JOINT_STATES};
use hapguide::config::SessionConfig;
use hapguide::mocap::read_mocap;
use hapguide::tables::{read_comparison, read_metrics, read_summary, summary_rows, write_comparison, write_metrics, write_summary};
use hapguide::wire::{replay, Pacer, Recorder, Recording};
use hapguide_core::devices::{Device, DeviceConfig};
use hapguide_core::engine::Outcome;
use hapguide_core::metrics::{aggregate, Grouping, MetricRecord};
use hapguide_core::stats::{compare_conditions, default_plan};
use hapguide_core::{JointId, RngSeed, TargetPose};
use serde_json::json;

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0)
}

fn close_opt(a: Option<f64>, b: Option<f64>) -> bool {
    match (a, b) {
        (None, None) => true,
        (Some(a), Some(b)) => close(a, b),
        _ => false,
    }
}

fn small_run() -> Vec<MetricRecord> {
    let config = SessionConfig::from_toml_str("seed = 99\nsubjects = 4\n").unwrap();
    app::run_simulation(&config).unwrap().records
}

#[test]
fn metrics_table_round_trips() {
    let records = small_run();
    let mut buf = Vec::new();
    write_metrics(&mut buf, &records).unwrap();
    let back = read_metrics(buf.as_slice()).unwrap();
    assert_eq!(back.len(), records.len());
    for (a, b) in records.iter().zip(&back) {
        assert_eq!((a.subject_id, a.device, a.sub_block, a.trial_index), (b.subject_id, b.device, b.sub_block, b.trial_index));
        assert_eq!(a.targets, b.targets);
        let (m, n) = (&a.metrics, &b.metrics);
        assert_eq!(m.success, n.success);
        assert!(close(m.confusion_index, n.confusion_index));
        for (x, y) in [
            (m.reaching_time, n.reaching_time),
            (m.angular_distance, n.angular_distance),
            (m.reaching_velocity, n.reaching_velocity),
            (m.final_error, n.final_error),
        ] {
            assert!(close_opt(x, y), "{x:?} vs {y:?}");
        }
    }
}

#[test]
fn summary_and_comparison_tables_round_trip() {
    let records = small_run();
    let (summaries, _) = aggregate(&records, Grouping::default()).unwrap();
    let mut buf = Vec::new();
    write_summary(&mut buf, &summaries).unwrap();
    let back = read_summary(buf.as_slice()).unwrap();
    let rows = summary_rows(&summaries);
    assert_eq!(back.len(), rows.len());
    for (a, b) in rows.iter().zip(&back) {
        assert_eq!((a.device, a.sub_block, &a.joint, &a.index, a.n, a.trials), (b.device, b.sub_block, &b.joint, &b.index, b.n, b.trials));
        assert!(close(a.success_ratio_pct, b.success_ratio_pct));
        for (x, y) in [(a.mean, b.mean), (a.std, b.std), (a.median, b.median), (a.q1, b.q1), (a.q3, b.q3), (a.min, b.min), (a.max, b.max)] {
            assert!(close_opt(x, y));
        }
    }

    let comparisons = compare_conditions(&records, &default_plan());
    let mut buf = Vec::new();
    write_comparison(&mut buf, &comparisons).unwrap();
    let back = read_comparison(buf.as_slice()).unwrap();
    assert_eq!(back.len(), comparisons.len());
    for (row, csv) in comparisons.iter().zip(&back) {
        assert_eq!(csv.index, row.index.name());
        match &row.result {
            Ok((w, s)) => {
                assert!(close_opt(csv.p, Some(w.p_value)) && close_opt(csv.w, Some(w.w_statistic)));
                assert_eq!(csv.stars.as_deref(), Some(s.stars()));
                assert_eq!(csv.n, Some(w.n_effective));
            }
            Err(note) => assert_eq!(csv.note.as_deref(), Some(note.as_str())),
        }
    }
}

#[derive(Default)]
struct MockPacer(Vec<Duration>);

impl Pacer for MockPacer {
    fn wait(&mut self, wall: Duration) {
        self.0.push(wall);
    }
}

fn joint_recording(stamps: &[f64]) -> Recording {
    let bus = Bus::with_default_topics();
    let rec = Recorder::start(&bus, &[JOINT_STATES]).unwrap();
    for (i, &t) in stamps.iter().enumerate() {
        bus.publish(JOINT_STATES, Message::JointStates { shoulder_deg: i as f64, knee_deg: 60.0 }, t).unwrap();
    }
    rec.finish()
}

#[test]
fn replay_speed_scales_waits() {
    let rec = joint_recording(&[0.0, 0.1, 0.3, 0.6]);
    let mut normal = MockPacer::default();
    let mut fast = MockPacer::default();
    assert_eq!(replay(&rec, &Bus::with_default_topics(), 1.0, &mut normal).unwrap(), 4);
    assert_eq!(replay(&rec, &Bus::with_default_topics(), 2.0, &mut fast).unwrap(), 4);
    let total = |p: &MockPacer| p.0.iter().map(Duration::as_secs_f64).sum::<f64>();
    assert!((total(&normal) - 0.6).abs() < 1e-6);
    assert!((total(&fast) - 0.3).abs() < 1e-6);
    for (a, b) in normal.0.iter().zip(&fast.0) {
        assert!((a.as_secs_f64() / 2.0 - b.as_secs_f64()).abs() < 1e-6);
    }
}

#[test]
fn replay_into_bus_with_history_is_rejected() {
    let rec = joint_recording(&[0.0, 0.01]);
    let bus = Bus::with_default_topics();
    for _ in 0..5 {
        bus.publish(JOINT_STATES, Message::JointStates { shoulder_deg: 0.0, knee_deg: 0.0 }, 0.0).unwrap();
    }
    assert!(replay(&rec, &bus, 1.0, &mut MockPacer::default()).is_err());
}

#[test]
fn recording_file_round_trip() {
    let rec = joint_recording(&[0.0, 0.013_333_3, 0.5]);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r.ndjson");
    rec.write_to(std::fs::File::create(&path).unwrap()).unwrap();
    let back = Recording::read_from(std::io::BufReader::new(std::fs::File::open(&path).unwrap())).unwrap();
    assert_eq!(back, rec);
}

#[test]
fn calibration_service_validates() {
    let bus = Bus::with_default_topics();
    let slot = register_cuff_calibration(&bus).unwrap();
    let ok = bus.call_service("/cuff/calibrate", &json!({"gamma0_deg": 1.0, "k_force": 2.0, "k_slide": 10.0})).unwrap();
    assert_eq!(ok["ok"], json!(true));
    assert!(slot.lock().unwrap().is_some());
    assert!(bus.call_service("/cuff/calibrate", &json!({"gamma0_deg": 1.0})).is_err());
    assert!(bus.call_service("/cuff/calibrate", &json!({"gamma0_deg": 0.0, "k_force": -1.0, "k_slide": 10.0})).is_err());
    assert!(bus.call_service("/nope", &json!({})).is_err());
}

#[test]
fn motion_replay_detects_late_settling() {
    // Reaches the knee target at 2 s, drifts out at 3 s, returns at 4 s.
    let mut text = String::from("t_seconds,shoulder_deg,knee_deg\n");
    for i in 0..=500 {
        let t = i as f64 * 0.01;
        let knee = match t {
            t if t < 2.0 => 60.0 + 10.0 * t,
            t if (3.0..4.0).contains(&t) => 90.0,
            _ => 80.0,
        };
        text.push_str(&format!("{t:.2},0.0,{knee}\n"));
    }
    let samples = read_mocap(text.as_bytes()).unwrap();
    let targets = TargetPose::single(JointId::Knee, 80.0).unwrap();
    let (log, _, envelopes) = app::replay_motion(&samples, Device::ErgoTac, targets, &DeviceConfig::default()).unwrap();
    assert_eq!(log.samples.len(), 501);
    match log.outcome {
        Outcome::Success { reaching_time } => assert!((reaching_time - 4.0).abs() < 1e-9, "{reaching_time}"),
        Outcome::Timeout => panic!("expected success"),
    }
    // One joint-state and one command per sample.
    assert_eq!(envelopes.len(), 2 * 501);
}

#[test]
fn simulate_uses_config_seed() {
    let a = SessionConfig { seed: RngSeed(3), ..SessionConfig::from_toml_str("subjects = 1\n").unwrap() };
    let b = SessionConfig { seed: RngSeed(4), ..a.clone() };
    let ra = app::run_simulation(&a).unwrap();
    let rb = app::run_simulation(&b).unwrap();
    assert_eq!(ra.logs.len(), 18);
    assert_ne!(
        ra.logs.iter().map(|l| l.log.spec.targets).collect::<Vec<_>>(),
        rb.logs.iter().map(|l| l.log.spec.targets).collect::<Vec<_>>()
    );
}
