//! Acceptance gate. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

use std::collections::BTreeMap;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use hapguide::app;
use hapguide::bus::{Bus, CUFF_CMD, ERGOTAC_CMD, JOINT_STATES};
use hapguide::config::SessionConfig;
use hapguide::link::BusLink;
use hapguide::wire::{replay, Pacer, Recorder, Recording};
use hapguide_core::devices::{
    cuff_squeeze_force, ergotac_spot, Device, DeviceConfig, GuidanceCue, Placement, Slide, SpotThresholds, VibrationLevel,
};
use hapguide_core::engine::{
    run_session, run_trial, run_trial_with, trial_subject, GuidancePolicy, Outcome, Sample, SessionSettings, SessionSpec,
    SubBlock, TrialLog, TrialSpec,
};
use hapguide_core::metrics::trial_metrics;
use hapguide_core::stats::{significance_stars, wilcoxon_differences, PValueMethod};
use hapguide_core::subject::{Intent, SubjectParams};
use hapguide_core::{AngleDeg, JointId, JointMap, RngSeed, SignedError, SimClock, TargetPose};
use proptest::strategy::{Strategy, ValueTree};
use proptest::test_runner::TestRunner;

const DT: f64 = 0.01;

type Check = Result<String, String>;
type TrialKey = (Device, SubBlock, Vec<(JointId, f64)>);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

// ---------------------------------------------------------------- 1

fn criterion_1() -> Check {
    ensure(cuff_squeeze_force(0.0) == Ok(3.0), || "F(0) != 3.0".into())?;
    for e in [90.0, 90.0 + 1e-9, 95.0, 120.5, 180.0, 1e6] {
        ensure(cuff_squeeze_force(e) == Ok(20.0), || format!("F({e}) != 20.0"))?;
    }
    let mut prev = f64::NEG_INFINITY;
    for i in 0..=1800 {
        let e = i as f64 * 0.1;
        let f = cuff_squeeze_force(e).map_err(|x| x.to_string())?;
        ensure((3.0..=20.0).contains(&f), || format!("F({e}) = {f} out of [3, 20]"))?;
        ensure(f >= prev, || format!("F not monotone at {e}"))?;
        prev = f;
    }
    Ok("F(0)=3, F(>=90)=20, 1801-point sweep monotone and bounded".into())
}

// ---------------------------------------------------------------- 2

fn criterion_2() -> Check {
    let amps: Vec<f64> = VibrationLevel::ALL.iter().map(|l| l.amplitude_pct()).collect();
    ensure(amps == [0.0, 30.0, 60.0, 100.0], || format!("levels {amps:?}"))?;
    for l in VibrationLevel::ALL.into_iter().filter(|l| *l != VibrationLevel::Off) {
        ensure(l.frequency_hz() == 121.0, || format!("{l:?} at {} Hz", l.frequency_hz()))?;
    }
    let th = SpotThresholds::default();
    let mut checked = 0;
    for joint in JointId::ALL {
        for e in -180..=180 {
            let cmd = ergotac_spot(joint, SignedError(e as f64), &th);
            ensure(amps.contains(&cmd.level.amplitude_pct()), || format!("level {:?}", cmd.level))?;
            if (e as f64).abs() <= th.tol() {
                ensure(!cmd.is_active(), || format!("active inside tolerance at {e}"))?;
                continue;
            }
            // Positive error: movement toward the front, so the back unit pushes.
            let opposite = if e > 0 { Placement::Back } else { Placement::Front };
            ensure(cmd.is_active() && cmd.unit.placement == opposite && cmd.unit.joint == joint, || {
                format!("{joint} e={e}: {cmd:?}")
            })?;
            checked += 1;
        }
    }
    Ok(format!("levels {{0,30,60,100}}%, 121 Hz, {checked} out-of-tolerance errors repulsive"))
}

// ---------------------------------------------------------------- 3

fn criterion_3() -> Check {
    let subject = SubjectParams { seed: RngSeed(17), ..SubjectParams::default() };
    let logs = run_session(&SessionSpec::randomized(RngSeed(4)), &subject, &DeviceConfig::default(), &SessionSettings::default())
        .map_err(|e| e.to_string())?;
    let mut ergotac_ticks = 0;
    let mut simultaneous = 0;
    for log in &logs {
        for s in &log.samples {
            match log.spec.device {
                Device::ErgoTac => {
                    let active = s.cues.iter().filter(|c| c.is_active()).count();
                    ensure(active <= 1, || format!("{active} ErgoTac units active at t={}", s.t))?;
                    ergotac_ticks += 1;
                }
                Device::Cuff if log.spec.targets.is_multi_joint() => {
                    let sliding =
                        s.cues.iter().filter(|c| matches!(c, GuidanceCue::Cuff(c) if c.slide != Slide::None)).count();
                    if sliding == 2 {
                        simultaneous += 1;
                    }
                }
                Device::Cuff => {}
            }
        }
    }
    ensure(simultaneous > 0, || "no tick with two CUFF slide cues".into())?;
    Ok(format!("{ergotac_ticks} ErgoTac ticks with <=1 active unit; {simultaneous} CUFF ticks with two cues"))
}

// ---------------------------------------------------------------- 4

fn criterion_4() -> Check {
    let mut expected: Vec<TrialKey> = Vec::new();
    for d in [Device::Cuff, Device::ErgoTac] {
        for s in [-10.0, 45.0, 90.0] {
            expected.push((d, SubBlock::ShoulderOnly, vec![(JointId::Shoulder, s)]));
        }
        for k in [30.0, 80.0, 115.0] {
            expected.push((d, SubBlock::KneeOnly, vec![(JointId::Knee, k)]));
        }
        for (s, k) in [(20.0, 110.0), (55.0, 70.0), (100.0, 40.0)] {
            expected.push((d, SubBlock::MultiJoint, vec![(JointId::Shoulder, s), (JointId::Knee, k)]));
        }
    }
    let key = |x: &TrialKey| format!("{x:?}");
    expected.sort_by_key(key);
    let mut orders = std::collections::HashSet::new();
    for seed in 0..50 {
        let spec = SessionSpec::randomized(RngSeed(seed));
        ensure(spec.blocks.len() == 2 && spec.blocks[0].device != spec.blocks[1].device, || "two device blocks".into())?;
        let mut got: Vec<_> = spec
            .blocks
            .iter()
            .flat_map(|b| {
                b.sub_blocks.iter().flat_map(move |(sb, ts)| {
                    ts.iter().map(move |t| (b.device, *sb, t.guided().map(|(j, a)| (j, a.degrees())).collect::<Vec<_>>()))
                })
            })
            .collect();
        ensure(got.len() == 18, || format!("{} trials", got.len()))?;
        got.sort_by_key(key);
        ensure(got == expected, || format!("seed {seed}: trial multiset differs"))?;
        orders.insert(format!("{:?}", spec.trials().collect::<Vec<_>>()));
    }
    ensure(orders.len() > 1, || "ordering ignores the seed".into())?;

    // Every trial of an always-misreading subject runs into the cap.
    let subject = SubjectParams { misread_prob: 1.0, ..SubjectParams::default() };
    let logs = run_session(&SessionSpec::randomized(RngSeed(1)), &subject, &DeviceConfig::default(), &SessionSettings::default())
        .map_err(|e| e.to_string())?;
    let mut latest: f64 = 0.0;
    for log in &logs {
        let last = log.samples.last().map_or(0.0, |s| s.t);
        latest = latest.max(last);
        ensure(log.samples.iter().all(|s| s.t <= 90.0 + 1e-9), || "sample beyond 90 s".into())?;
        if log.outcome == Outcome::Timeout {
            ensure((last - 90.0).abs() <= DT, || format!("timeout logged at {last}"))?;
        }
    }
    Ok(format!("50 seeds: 18 trials, exact target sets, {} distinct orders; latest sample {latest} s", orders.len()))
}

// ---------------------------------------------------------------- 5

fn analytic_time(device: Device, targets: &TargetPose, start: &JointMap<AngleDeg>, p: &SubjectParams) -> f64 {
    let d: Vec<f64> = targets.guided().map(|(j, a)| (a.degrees() - start[j].degrees()).abs()).collect();
    // ErgoTac guides one joint after the other; both CUFFs act together.
    let net = match device {
        Device::ErgoTac => d.iter().sum(),
        Device::Cuff => d.iter().copied().fold(0.0, f64::max),
    };
    p.reaction_delay + net / p.angular_speed + p.hold_time
}

fn criterion_5() -> Check {
    let subject = SubjectParams { misread_prob: 0.0, angular_speed: 30.0, ..SubjectParams::default() };
    // Tolerance = speed · delay: the cue turns off exactly when the subject,
    // reacting one delay later, stands on target.
    let precise = DeviceConfig {
        spot: SpotThresholds::new(9.0, 15.0, 45.0).map_err(|e| e.to_string())?,
        cuff_tolerance: 9.0,
        ..DeviceConfig::default()
    };
    let precise_subject = SubjectParams { declare_tolerance: 0.3, ..subject };
    let mut worst: f64 = 0.0;
    let mut default_worst_early: f64 = 0.0;
    let session = SessionSpec::randomized(RngSeed(0));
    for (device, targets) in session.trials() {
        let spec = TrialSpec::new(device, targets);
        let log = run_trial(&spec, &precise_subject, &precise, SimClock::default()).map_err(|e| e.to_string())?;
        let m = trial_metrics(&log).map_err(|e| e.to_string())?;
        ensure(m.success, || format!("{device} {targets:?}: not successful"))?;
        ensure(m.confusion_index == 0.0, || format!("{device} {targets:?}: confusion {}", m.confusion_index))?;
        let analytic = analytic_time(device, &targets, &spec.initial_pose, &precise_subject);
        let rt = m.reaching_time.unwrap_or(f64::NAN);
        ensure((rt - analytic).abs() <= 2.0 * DT, || format!("{device} {targets:?}: {rt} vs analytic {analytic}"))?;
        worst = worst.max((rt - analytic).abs());

        // Default tolerances: still all successful and confusion-free; the
        // cue stops tol/speed early so the declaration comes at most that much sooner.
        let log = run_trial(&spec, &subject, &DeviceConfig::default(), SimClock::default()).map_err(|e| e.to_string())?;
        let m = trial_metrics(&log).map_err(|e| e.to_string())?;
        ensure(m.success && m.confusion_index == 0.0, || format!("default config {device} {targets:?}"))?;
        let analytic = analytic_time(device, &targets, &spec.initial_pose, &subject);
        let rt = m.reaching_time.unwrap_or(f64::NAN);
        ensure(rt <= analytic + 2.0 * DT, || format!("default config {device} {targets:?}: {rt} > {analytic}"))?;
        default_worst_early = default_worst_early.max(analytic - rt);
    }

    let flee = SubjectParams { misread_prob: 1.0, ..subject };
    let mut timeouts = 0;
    for (device, targets) in session.trials() {
        let log = run_trial(&TrialSpec::new(device, targets), &flee, &DeviceConfig::default(), SimClock::default())
            .map_err(|e| e.to_string())?;
        ensure(log.outcome == Outcome::Timeout, || format!("misread 1: {device} {targets:?} succeeded"))?;
        timeouts += 1;
    }
    Ok(format!(
        "18/18 success, 0% confusion, max |rt - analytic| = {worst:.4} s (tolerance 9 deg = speed x delay); \
         default tolerances: 18/18 success, at most {default_worst_early:.3} s early; misread 1: {timeouts}/18 timeouts"
    ))
}

// ---------------------------------------------------------------- 6

/// Independent recomputation of the six indices from raw samples.
#[derive(Debug)]
struct OracleMetrics {
    confusion: f64,
    success: f64,
    reaching_time: Option<f64>,
    angular_distance: Option<f64>,
    reaching_velocity: Option<f64>,
    final_error: Option<f64>,
}

fn oracle(log: &TrialLog) -> OracleMetrics {
    let joints: Vec<(JointId, f64)> = [JointId::Shoulder, JointId::Knee]
        .into_iter()
        .filter_map(|j| log.spec.targets.as_map()[j].map(|a| (j, a.degrees())))
        .collect();
    let n = log.samples.len();
    let mut confusion_sum = 0.0;
    for &(j, _) in &joints {
        let (mut active, mut opposite) = (0u32, 0u32);
        for i in 1..n {
            let before = &log.samples[i - 1];
            let err = before.errors[j].unwrap();
            let cue_on = before.cues.iter().any(|c| {
                c.joint() == j
                    && match c {
                        GuidanceCue::ErgoTac(e) => e.level != VibrationLevel::Off,
                        GuidanceCue::Cuff(c) => c.slide != Slide::None,
                    }
            });
            if !cue_on || err.abs() <= log.tolerance {
                continue;
            }
            active += 1;
            let moved = log.samples[i].angles[j] - before.angles[j];
            if moved.abs() > 0.01 && moved * err < 0.0 {
                opposite += 1;
            }
        }
        confusion_sum += if active == 0 { 0.0 } else { opposite as f64 * 100.0 / active as f64 };
    }
    let confusion = confusion_sum / joints.len() as f64;
    let initial = |j: JointId| log.spec.initial_pose[j].degrees();
    match log.outcome {
        Outcome::Success { reaching_time } => {
            let mut path = 0.0;
            let mut net = 0.0;
            for &(j, target) in &joints {
                for i in 1..n {
                    path += (log.samples[i].angles[j] - log.samples[i - 1].angles[j]).abs();
                }
                net += (target - initial(j)).abs();
            }
            OracleMetrics {
                confusion,
                success: 100.0,
                reaching_time: Some(reaching_time),
                angular_distance: Some(path),
                reaching_velocity: Some(if reaching_time == 0.0 { 0.0 } else { net / reaching_time }),
                final_error: None,
            }
        }
        Outcome::Timeout => {
            let last = &log.samples[n - 1];
            let left: f64 = joints.iter().map(|&(j, t)| (last.angles[j] - t).abs()).sum();
            let needed: f64 = joints.iter().map(|&(j, t)| (initial(j) - t).abs()).sum();
            let fe = if needed == 0.0 {
                if left == 0.0 {
                    0.0
                } else {
                    100.0
                }
            } else {
                left / needed * 100.0
            };
            OracleMetrics {
                confusion,
                success: 0.0,
                reaching_time: None,
                angular_distance: None,
                reaching_velocity: None,
                final_error: Some(fe),
            }
        }
    }
}

/// Motion segment: `ticks` steps of `(d_shoulder, d_knee)` degrees per tick.
type Seg = (usize, f64, f64);

fn fixture(device: Device, targets: TargetPose, start: (f64, f64), segs: &[Seg], ok: bool) -> TrialLog {
    let mut policy = GuidancePolicy::new(device, DeviceConfig::default(), targets);
    let mut angles = JointMap::new(start.0, start.1);
    let mut steps: Vec<(f64, f64)> = Vec::new();
    for &(n, ds, dk) in segs {
        steps.extend(std::iter::repeat_n((ds, dk), n));
    }
    let mut samples = Vec::new();
    for i in 0..=steps.len() {
        let errors = JointMap::from_fn(|j| targets.get(j).map(|t| t.degrees() - angles[j]));
        let cues = policy.cues(&angles);
        samples.push(Sample { t: i as f64 * DT, angles, errors, cues, intents: JointMap::new(Intent::Hold, Intent::Hold) });
        if let Some(&(ds, dk)) = steps.get(i) {
            angles = JointMap::new((angles.shoulder + ds).clamp(-30.0, 180.0), (angles.knee + dk).clamp(0.0, 150.0));
        }
    }
    let last_t = samples.last().map_or(0.0, |s| s.t);
    let mut spec = TrialSpec::new(device, targets);
    spec.initial_pose = JointMap::new(AngleDeg::new(start.0).unwrap(), AngleDeg::new(start.1).unwrap());
    let outcome = if ok { Outcome::Success { reaching_time: last_t } } else { Outcome::Timeout };
    TrialLog { spec, subject: SubjectParams::default(), dt: DT, tolerance: 5.0, samples, outcome }
}

fn fixtures() -> Vec<(&'static str, TrialLog)> {
    use Device::{Cuff, ErgoTac};
    let sh = |a: f64| TargetPose::single(JointId::Shoulder, a).unwrap();
    let kn = |a: f64| TargetPose::single(JointId::Knee, a).unwrap();
    let pr = |s: f64, k: f64| TargetPose::pair(s, k).unwrap();
    vec![
        ("cuff sh monotone", fixture(Cuff, sh(90.0), (0.0, 60.0), &[(300, 0.3, 0.0), (100, 0.0, 0.0)], true)),
        ("cuff sh overshoot", fixture(Cuff, sh(45.0), (0.0, 60.0), &[(55, 1.0, 0.0), (10, -1.0, 0.0), (100, 0.0, 0.0)], true)),
        ("cuff sh wrong way first", fixture(Cuff, sh(-10.0), (0.0, 60.0), &[(10, 0.3, 0.0), (43, -0.3, 0.0), (100, 0.0, 0.0)], true)),
        ("cuff sh halfway timeout", fixture(Cuff, sh(90.0), (-10.0, 60.0), &[(100, 0.5, 0.0), (200, 0.0, 0.0)], false)),
        ("cuff sh frozen timeout", fixture(Cuff, sh(45.0), (0.0, 60.0), &[(500, 0.0, 0.0)], false)),
        ("cuff kn monotone", fixture(Cuff, kn(115.0), (0.0, 60.0), &[(183, 0.0, 0.3), (100, 0.0, 0.0)], true)),
        ("cuff kn wobble", fixture(Cuff, kn(30.0), (0.0, 60.0), &[(20, 0.0, -0.5), (5, 0.0, 0.4), (20, 0.0, -0.5), (5, 0.0, 0.4), (30, 0.0, -0.5)], true)),
        ("cuff kn flee timeout", fixture(Cuff, kn(80.0), (0.0, 60.0), &[(150, 0.0, -0.3), (50, 0.0, 0.0)], false)),
        ("cuff pair together", fixture(Cuff, pr(20.0, 110.0), (0.0, 60.0), &[(67, 0.3, 0.3), (100, 0.0, 0.3), (100, 0.0, 0.0)], true)),
        ("cuff pair knee confused", fixture(Cuff, pr(55.0, 70.0), (0.0, 60.0), &[(30, 0.3, -0.3), (30, 0.3, 0.3), (160, 0.3, 0.1), (100, 0.0, 0.0)], true)),
        ("cuff pair partial timeout", fixture(Cuff, pr(100.0, 40.0), (0.0, 60.0), &[(200, 0.2, -0.05), (100, 0.0, 0.0)], false)),
        ("ergotac sh monotone", fixture(ErgoTac, sh(90.0), (0.0, 60.0), &[(300, 0.3, 0.0), (100, 0.0, 0.0)], true)),
        ("ergotac sh misread phase", fixture(ErgoTac, sh(45.0), (0.0, 60.0), &[(30, 0.0, 0.0), (20, -0.3, 0.0), (170, 0.3, 0.0), (100, 0.0, 0.0)], true)),
        ("ergotac kn sub-deadband jitter", fixture(ErgoTac, kn(80.0), (0.0, 60.0), &[(40, 0.0, 0.005), (40, 0.0, -0.005), (66, 0.0, 0.3), (100, 0.0, 0.0)], true)),
        ("ergotac kn partial timeout", fixture(ErgoTac, kn(115.0), (0.0, 60.0), &[(100, 0.0, 0.3), (300, 0.0, 0.0)], false)),
        ("ergotac pair sequential", fixture(ErgoTac, pr(20.0, 110.0), (0.0, 60.0), &[(167, 0.0, 0.3), (67, 0.3, 0.0), (100, 0.0, 0.0)], true)),
        ("ergotac pair simultaneous", fixture(ErgoTac, pr(55.0, 70.0), (0.0, 60.0), &[(33, 0.3, 0.3), (150, 0.3, 0.0), (100, 0.0, 0.0)], true)),
        ("ergotac pair stuck timeout", fixture(ErgoTac, pr(100.0, 40.0), (0.0, 60.0), &[(10, 0.1, 0.0), (600, 0.0, 0.0)], false)),
        ("cuff sh at target", fixture(Cuff, sh(45.0), (45.0, 60.0), &[(100, 0.0, 0.0)], true)),
        ("cuff sh at target drift timeout", fixture(Cuff, sh(45.0), (45.0, 60.0), &[(50, 0.2, 0.0)], false)),
        ("ergotac pair at target timeout", fixture(ErgoTac, pr(0.0, 60.0), (0.0, 60.0), &[(100, 0.0, 0.0)], false)),
        ("cuff kn single sample", fixture(Cuff, kn(60.0), (0.0, 60.0), &[], true)),
        ("ergotac sh oscillation", fixture(ErgoTac, sh(90.0), (0.0, 60.0), &[(320, 0.3, 0.0), (20, -0.3, 0.0), (20, 0.3, 0.0), (10, -0.2, 0.0), (100, 0.0, 0.0)], true)),
        ("cuff kn from range edge", fixture(Cuff, kn(115.0), (0.0, 150.0), &[(20, 0.0, 0.5), (117, 0.0, -0.3), (100, 0.0, 0.0)], true)),
        ("ergotac sh clamped flee timeout", fixture(ErgoTac, sh(90.0), (0.0, 60.0), &[(200, -0.3, 0.0), (100, 0.0, 0.0)], false)),
    ]
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1e-3)
}

fn same(name: &str, what: &str, got: Option<f64>, want: Option<f64>) -> Result<(), String> {
    match (got, want) {
        (None, None) => Ok(()),
        (Some(g), Some(w)) if close(g, w) => Ok(()),
        _ => Err(format!("{name}: {what} {got:?} vs oracle {want:?}")),
    }
}

fn criterion_6() -> Check {
    let fx = fixtures();
    ensure(fx.len() >= 20, || "fewer than 20 fixtures".into())?;
    let (mut ok, mut failed) = (0, 0);
    for (name, log) in &fx {
        let m = trial_metrics(log).map_err(|e| format!("{name}: {e}"))?;
        let o = oracle(log);
        same(name, "confusion", Some(m.confusion_index), Some(o.confusion))?;
        same(name, "success", Some(if m.success { 100.0 } else { 0.0 }), Some(o.success))?;
        same(name, "reaching_time", m.reaching_time, o.reaching_time)?;
        same(name, "angular_distance", m.angular_distance, o.angular_distance)?;
        same(name, "reaching_velocity", m.reaching_velocity, o.reaching_velocity)?;
        same(name, "final_error", m.final_error, o.final_error)?;
        if m.success {
            ok += 1;
        } else {
            failed += 1;
        }
    }
    Ok(format!("{} fixtures ({ok} success, {failed} failed) match the oracle to 1e-9", fx.len()))
}

// ---------------------------------------------------------------- 7

fn brute_force_p(diffs: &[f64]) -> f64 {
    let d: Vec<f64> = diffs.iter().copied().filter(|x| *x != 0.0).collect();
    let n = d.len();
    let ranks: Vec<u64> = d
        .iter()
        .map(|x| {
            let below = d.iter().filter(|y| y.abs() < x.abs()).count() as u64;
            let tied = d.iter().filter(|y| y.abs() == x.abs()).count() as u64;
            2 * below + tied + 1
        })
        .collect();
    let total: u64 = ranks.iter().sum();
    let plus: u64 = d.iter().zip(&ranks).filter(|(x, _)| **x > 0.0).map(|(_, r)| r).sum();
    let w = plus.min(total - plus);
    let hits = (0u64..1 << n)
        .filter(|mask| {
            let s: u64 = (0..n).filter(|i| mask >> i & 1 == 1).map(|i| ranks[i]).sum();
            s.min(total - s) <= w
        })
        .count();
    hits as f64 / (1u64 << n) as f64
}

fn criterion_7() -> Check {
    let r = wilcoxon_differences(&[1.0, 2.0, 3.0, 4.0, 5.0], None).map_err(|e| e.to_string())?;
    ensure(r.p_value == 0.0625, || format!("p(1..5) = {}", r.p_value))?;
    let mut runner = TestRunner::deterministic();
    let strat = proptest::collection::vec((-6i32..=6).prop_map(|v| v as f64 * 0.25), 1..=10);
    let mut compared = 0;
    while compared < 100 {
        let d = strat.new_tree(&mut runner).map_err(|e| e.to_string())?.current();
        if d.iter().all(|x| *x == 0.0) {
            continue;
        }
        let got = wilcoxon_differences(&d, Some(PValueMethod::Exact)).map_err(|e| e.to_string())?.p_value;
        let want = brute_force_p(&d);
        ensure(got == want, || format!("{d:?}: exact {got} vs enumeration {want}"))?;
        compared += 1;
    }
    for (p, s) in [(0.2, "ns"), (0.05, "ns"), (0.049, "*"), (0.01, "*"), (0.0099, "**"), (0.001, "**"), (0.00099, "***")] {
        let got = significance_stars(p).map_err(|e| e.to_string())?.stars();
        ensure(got == s, || format!("stars({p}) = {got}, want {s}"))?;
    }
    Ok("p(1..5)=0.0625; 100 random samples identical to 2^n enumeration; star thresholds 0.05/0.01/0.001".into())
}

// ---------------------------------------------------------------- 8

fn dir_bytes(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(root).unwrap().display().to_string(), fs::read(&p).unwrap());
            }
        }
    }
    out
}

#[derive(Default)]
struct RecordingPacer(Vec<Duration>);

impl Pacer for RecordingPacer {
    fn wait(&mut self, wall: Duration) {
        self.0.push(wall);
    }
}

fn criterion_8() -> Check {
    // Byte-identical outputs.
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let config = SessionConfig { seed: RngSeed(2024), ..SessionConfig::default() };
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    app::simulate(&config, &a).map_err(|e| e.to_string())?;
    app::simulate(&config, &b).map_err(|e| e.to_string())?;
    let (fa, fb) = (dir_bytes(&a), dir_bytes(&b));
    ensure(fa.len() == 12 * 18 + 3, || format!("{} output files", fa.len()))?;
    ensure(fa == fb, || "outputs differ between identical runs".into())?;

    // Bus vs direct wiring.
    let device = DeviceConfig::default();
    let mut bus_trials = 0;
    for id in 1..=2 {
        let session = SessionSpec::randomized(config.protocol_seed(id));
        let params = config.subject_params(id);
        let direct = run_session(&session, &params, &device, &config.settings).map_err(|e| e.to_string())?;
        for (i, (dev, targets)) in session.trials().enumerate() {
            let bus = Bus::with_default_topics();
            let mut link = BusLink::new(&bus, targets).map_err(|e| e.to_string())?;
            let spec = TrialSpec { device: dev, targets, timeout: config.settings.timeout, initial_pose: config.settings.initial_pose };
            let via_bus = run_trial_with(&spec, &trial_subject(&params, i), &device, SimClock::default(), &mut link)
                .map_err(|e| e.to_string())?;
            ensure(via_bus == direct[i], || format!("subject {id} trial {i}: bus log differs"))?;
            bus_trials += 1;
        }
    }

    // record -> replay -> record.
    let mut envelopes = 0;
    for (dev, targets) in [(Device::ErgoTac, TargetPose::pair(100.0, 40.0).unwrap()), (Device::Cuff, TargetPose::pair(20.0, 110.0).unwrap())] {
        let topics = [JOINT_STATES, ERGOTAC_CMD, CUFF_CMD];
        let bus = Bus::with_default_topics();
        let recorder = Recorder::start(&bus, &topics).map_err(|e| e.to_string())?;
        let mut link = BusLink::new(&bus, targets).map_err(|e| e.to_string())?;
        let subject = SubjectParams { seed: RngSeed(5), ..SubjectParams::default() };
        run_trial_with(&TrialSpec::new(dev, targets), &subject, &device, SimClock::default(), &mut link).map_err(|e| e.to_string())?;
        let first = recorder.finish();
        let text = first.to_text();
        let parsed = Recording::read_from(text.as_bytes()).map_err(|e| e.to_string())?;
        ensure(parsed == first, || "parsed recording differs".into())?;

        let bus2 = Bus::with_default_topics();
        let again = Recorder::start(&bus2, &topics).map_err(|e| e.to_string())?;
        let mut pacer = RecordingPacer::default();
        replay(&parsed, &bus2, 0.0, &mut pacer).map_err(|e| e.to_string())?;
        let second = again.finish();
        ensure(second == first, || "re-recorded envelopes differ".into())?;
        ensure(second.to_text() == text, || "re-recorded text differs".into())?;
        envelopes += first.envelopes.len();
    }
    Ok(format!(
        "{} files byte-identical across runs; {bus_trials} bus trials identical to direct; {envelopes} envelopes survive record/replay/record",
        fa.len()
    ))
}

// ----------------------------------------------------------------

fn main() {
    type Criterion = (&'static str, fn() -> Check, u64);
    let criteria: [Criterion; 8] = [
        ("1 CUFF force law", criterion_1, 1),
        ("2 ErgoTac constants and repulsion", criterion_2, 1),
        ("3 exclusivity vs simultaneity", criterion_3, 10),
        ("4 protocol fidelity", criterion_4, 10),
        ("5 closed-loop sanity", criterion_5, 10),
        ("6 metric oracle equivalence", criterion_6, 5),
        ("7 Wilcoxon exactness", criterion_7, 30),
        ("8 determinism and bus transparency", criterion_8, 30),
    ];
    let mut failures = 0;
    for (name, f, limit) in criteria {
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| Err("panicked".into()));
        let elapsed = start.elapsed();
        let within = elapsed <= Duration::from_secs(limit);
        match (&result, within) {
            (Ok(detail), true) => println!("PASS criterion {name} ({:.2} s < {limit} s): {detail}", elapsed.as_secs_f64()),
            (Ok(detail), false) => {
                failures += 1;
                println!("FAIL criterion {name}: took {:.2} s, limit {limit} s ({detail})", elapsed.as_secs_f64());
            }
            (Err(why), _) => {
                failures += 1;
                println!("FAIL criterion {name} ({:.2} s): {why}", elapsed.as_secs_f64());
            }
        }
    }
    if failures > 0 {
        println!("{failures} acceptance criteria failed");
        std::process::exit(1);
    }
    println!("all 8 acceptance criteria passed");
}
