//! Subcommand implementations.

use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use hapguide_core::devices::{CuffCalibration, Device, DeviceConfig, GuidanceCue, Placement};
use hapguide_core::engine::{
    run_session, GuidancePolicy, Outcome, Sample, SessionSpec, SubBlock, TrialLog, TrialSpec,
};
use hapguide_core::metrics::{aggregate, trial_metrics, Grouping, MetricIndex, MetricRecord};
use hapguide_core::stats::{compare_conditions, default_plan, ComparisonRow};
use hapguide_core::subject::{Intent, SubjectParams};
use hapguide_core::{clamp_to_joint_range, AngleDeg, JointId, JointMap, TargetPose};
use serde::{Deserialize, Serialize};

use crate::bus::{register_cuff_calibration, Bus, Message, CUFF_CALIBRATE, CUFF_CMD, ERGOTAC_CMD, JOINT_STATES};
use crate::config::SessionConfig;
use crate::mocap::{read_mocap, MocapSample};
use crate::plot::{brackets_for, groups_for, render_boxplot};
use crate::tables::{read_comparison, read_metrics, write_comparison, write_metrics, write_summary, ComparisonCsvRow};
use crate::wire::Recorder;

/// One trial log file: the log and its place in the run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialLogFile {
    /// Simulated subject.
    pub subject_id: u32,
    /// Position in the subject's session.
    pub trial_index: usize,
    /// Protocol seed of the subject's session.
    pub protocol_seed: u64,
    /// The log.
    pub log: TrialLog,
}

/// File name of a trial log.
pub fn log_file_name(subject_id: u32, trial_index: usize) -> String {
    format!("s{subject_id:02}_t{trial_index:02}.json")
}

/// What `simulate` produced.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulateOutput {
    /// Every trial, subject-major.
    pub logs: Vec<TrialLogFile>,
    /// Metrics of every trial, same order.
    pub records: Vec<MetricRecord>,
    /// Comparison rows.
    pub comparisons: Vec<ComparisonRow>,
    /// Indices that were undefined in some condition.
    pub warnings: Vec<String>,
}

/// Stores the configured CUFF calibration through the calibration service.
pub fn calibrate_via_bus(bus: &Bus, cal: &CuffCalibration) -> Result<CuffCalibration> {
    let slot = register_cuff_calibration(bus)?;
    let req = serde_json::json!({ "gamma0_deg": cal.gamma0(), "k_force": cal.k_force(), "k_slide": cal.k_slide() });
    bus.call_service(CUFF_CALIBRATE, &req)?;
    let stored = *slot.lock().map_err(|_| anyhow::anyhow!("calibration slot poisoned"))?;
    stored.context("calibration service stored nothing")
}

/// Runs every subject's session. Subjects run on separate threads; results
/// are collected in subject order.
pub fn run_simulation(config: &SessionConfig) -> Result<SimulateOutput> {
    let mut device = config.device;
    if let Some(cal) = device.cuff_calibration {
        device.cuff_calibration = Some(calibrate_via_bus(&Bus::with_default_topics(), &cal)?);
    }
    let per_subject: Vec<Result<Vec<TrialLogFile>>> = std::thread::scope(|s| {
        let handles: Vec<_> = config
            .subject_ids()
            .map(|id| {
                s.spawn(move || -> Result<Vec<TrialLogFile>> {
                    let seed = config.protocol_seed(id);
                    let session = SessionSpec::randomized(seed);
                    let logs = run_session(&session, &config.subject_params(id), &device, &config.settings)
                        .with_context(|| format!("subject {id}"))?;
                    Ok(logs
                        .into_iter()
                        .enumerate()
                        .map(|(trial_index, log)| TrialLogFile { subject_id: id, trial_index, protocol_seed: seed.0, log })
                        .collect())
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().unwrap_or_else(|_| bail!("simulation thread panicked"))).collect()
    });
    let mut logs = Vec::new();
    for r in per_subject {
        logs.extend(r?);
    }
    let records = records_from_logs(&logs)?;
    let (_, warnings) = aggregate(&records, Grouping::default())?;
    let comparisons = compare_conditions(&records, &default_plan());
    Ok(SimulateOutput { logs, records, comparisons, warnings })
}

/// Metrics of every log.
pub fn records_from_logs(logs: &[TrialLogFile]) -> Result<Vec<MetricRecord>> {
    logs.iter()
        .map(|f| {
            let metrics = trial_metrics(&f.log)
                .with_context(|| format!("metrics of {}", log_file_name(f.subject_id, f.trial_index)))?;
            Ok(MetricRecord {
                subject_id: f.subject_id,
                device: f.log.spec.device,
                sub_block: f.log.spec.sub_block(),
                trial_index: f.trial_index,
                targets: f.log.spec.targets,
                metrics,
            })
        })
        .collect()
}

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    Ok(BufWriter::new(fs::File::create(path).with_context(|| format!("cannot create {}", path.display()))?))
}

/// Writes `metrics.csv`, `summary.csv` and `comparison.csv` into `out`.
pub fn write_tables(out: &Path, records: &[MetricRecord], comparisons: &[ComparisonRow]) -> Result<()> {
    fs::create_dir_all(out)?;
    write_metrics(create(&out.join("metrics.csv"))?, records)?;
    let (summaries, _) = aggregate(records, Grouping::default())?;
    write_summary(create(&out.join("summary.csv"))?, &summaries)?;
    write_comparison(create(&out.join("comparison.csv"))?, comparisons)?;
    Ok(())
}

/// `simulate`: runs the configured sessions and writes logs and tables.
pub fn simulate(config: &SessionConfig, out: &Path) -> Result<SimulateOutput> {
    let result = run_simulation(config)?;
    let log_dir = out.join("logs");
    fs::create_dir_all(&log_dir).with_context(|| format!("cannot create {}", log_dir.display()))?;
    for f in &result.logs {
        let mut w = create(&log_dir.join(log_file_name(f.subject_id, f.trial_index)))?;
        serde_json::to_writer(&mut w, f)?;
        w.write_all(b"\n")?;
        w.flush()?;
    }
    write_tables(out, &result.records, &result.comparisons)?;
    Ok(result)
}

/// Reads trial logs from a file or from every `.json` file of a directory, in name order.
pub fn read_logs(input: &Path) -> Result<Vec<TrialLogFile>> {
    let mut paths: Vec<PathBuf> = if input.is_dir() {
        fs::read_dir(input)?
            .map(|e| e.map(|e| e.path()))
            .collect::<std::io::Result<Vec<_>>>()?
            .into_iter()
            .filter(|p| p.extension().is_some_and(|e| e == "json"))
            .collect()
    } else {
        vec![input.to_path_buf()]
    };
    paths.sort();
    if paths.is_empty() {
        bail!("no trial logs in {}", input.display());
    }
    paths
        .iter()
        .map(|p| {
            let f = fs::File::open(p).with_context(|| format!("cannot open {}", p.display()))?;
            serde_json::from_reader(BufReader::new(f)).with_context(|| format!("cannot parse {}", p.display()))
        })
        .collect()
}

/// `metrics`: recomputes the tables from trial logs.
pub fn metrics(input: &Path, out: &Path) -> Result<Vec<MetricRecord>> {
    let logs = read_logs(input)?;
    let records = records_from_logs(&logs)?;
    write_tables(out, &records, &compare_conditions(&records, &default_plan()))?;
    Ok(records)
}

fn open_metrics(input: &Path) -> Result<Vec<MetricRecord>> {
    let f = fs::File::open(input).with_context(|| format!("cannot open {}", input.display()))?;
    read_metrics(BufReader::new(f)).with_context(|| format!("{}", input.display()))
}

/// `compare`: runs the comparison plan on a metrics table.
pub fn compare(input: &Path, out: &Path) -> Result<Vec<ComparisonRow>> {
    let records = open_metrics(input)?;
    let rows = compare_conditions(&records, &default_plan());
    fs::create_dir_all(out)?;
    write_comparison(create(&out.join("comparison.csv"))?, &rows)?;
    Ok(rows)
}

/// `report`: one SVG boxplot per index. Significance markers come from
/// `comparison.csv` next to the input when present, otherwise from a fresh
/// comparison of the input.
pub fn report(input: &Path, out: &Path) -> Result<Vec<PathBuf>> {
    let records = open_metrics(input)?;
    let sibling = input.with_file_name("comparison.csv");
    let comparisons: Vec<ComparisonCsvRow> = if sibling.is_file() {
        read_comparison(BufReader::new(fs::File::open(&sibling)?)).with_context(|| format!("{}", sibling.display()))?
    } else {
        compare_conditions(&records, &default_plan()).iter().map(ComparisonCsvRow::from).collect()
    };
    fs::create_dir_all(out)?;
    let mut written = Vec::new();
    for index in MetricIndex::ALL {
        let groups = groups_for(&records, index);
        let brackets = brackets_for(&groups, &comparisons, index);
        let svg = render_boxplot(index.name(), index.unit(), &groups, &brackets);
        let path = out.join(format!("{}.svg", index.name()));
        fs::write(&path, svg).with_context(|| format!("cannot write {}", path.display()))?;
        written.push(path);
    }
    Ok(written)
}

/// Result of replaying a recorded motion.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplayOutput {
    /// Open-loop log: recorded angles and the cues they would have produced.
    pub log: TrialLog,
    /// Metrics of the log.
    pub record: MetricRecord,
}

/// Outcome of recorded motion: success at the first sample from which every
/// guided joint stays within `tol` to the end of the file.
pub fn replay_outcome(samples: &[Sample], tol: f64) -> Outcome {
    let within = |s: &Sample| s.errors.iter().all(|(_, e)| e.is_none_or(|e| e.abs() <= tol));
    let tail = samples.iter().rev().take_while(|s| within(s)).count();
    if tail == 0 {
        Outcome::Timeout
    } else {
        Outcome::Success { reaching_time: samples[samples.len() - tail].t }
    }
}

/// Streams recorded samples through the bus and logs the cues `device` would emit.
pub fn replay_motion(samples: &[MocapSample], device: Device, targets: TargetPose, config: &DeviceConfig) -> Result<(TrialLog, Bus, Vec<crate::bus::Envelope>)> {
    let first = samples.first().context("no samples")?;
    let bus = Bus::with_default_topics();
    let recorder = Recorder::start(&bus, &[JOINT_STATES, ERGOTAC_CMD, CUFF_CMD])?;
    let processor_in = bus.subscribe(JOINT_STATES)?;
    let device_in = bus.subscribe_many(&[ERGOTAC_CMD, CUFF_CMD])?;
    let mut policy = GuidancePolicy::new(device, *config, targets);
    let t0 = first.t;
    let mut out = Vec::with_capacity(samples.len());
    for s in samples {
        let t = s.t - t0;
        bus.publish(JOINT_STATES, Message::JointStates { shoulder_deg: s.angles.shoulder, knee_deg: s.angles.knee }, t)?;
        for env in processor_in.drain() {
            let Message::JointStates { shoulder_deg, knee_deg } = env.payload else { continue };
            let angles = JointMap::new(shoulder_deg, knee_deg);
            let errors = policy.errors(&angles).map(|_, e| e.map(|e| e.degrees()));
            for cue in policy.cues(&angles) {
                let topic = match cue {
                    GuidanceCue::ErgoTac(_) => ERGOTAC_CMD,
                    GuidanceCue::Cuff(_) => CUFF_CMD,
                };
                bus.publish(topic, Message::from_cue(&cue, errors[cue.joint()]), env.stamp)?;
            }
        }
        let cues: Vec<GuidanceCue> = device_in.drain().iter().filter_map(|e| e.payload.to_cue()).collect();
        let errors = JointMap::from_fn(|j| targets.get(j).map(|a| a.degrees() - s.angles[j]));
        out.push(Sample { t, angles: s.angles, errors, cues, intents: JointMap::new(Intent::Hold, Intent::Hold) });
    }
    let tol = config.tolerance(device);
    let outcome = replay_outcome(&out, tol);
    let dt = if samples.len() > 1 { samples[1].t - samples[0].t } else { hapguide_core::clock::DEFAULT_DT };
    let start = JointMap::new(
        clamp_to_joint_range(JointId::Shoulder, AngleDeg::new(first.angles.shoulder)?),
        clamp_to_joint_range(JointId::Knee, AngleDeg::new(first.angles.knee)?),
    );
    let spec = TrialSpec { device, targets, timeout: out.last().map_or(0.0, |s| s.t), initial_pose: start };
    let log = TrialLog { spec, subject: SubjectParams::default(), dt, tolerance: tol, samples: out, outcome };
    let recorded = recorder.finish().envelopes;
    Ok((log, bus, recorded))
}

/// `replay`: reads a motion file, writes `cues.csv`, `bus.ndjson` and `metrics.csv`.
pub fn replay(input: &Path, device: Device, targets: TargetPose, config: &DeviceConfig, out: &Path) -> Result<ReplayOutput> {
    let f = fs::File::open(input).with_context(|| format!("cannot open {}", input.display()))?;
    let samples = read_mocap(BufReader::new(f)).with_context(|| format!("{}", input.display()))?;
    let (log, _bus, envelopes) = replay_motion(&samples, device, targets, config)?;
    let metrics = trial_metrics(&log)?;
    let record = MetricRecord {
        subject_id: 0,
        device,
        sub_block: SubBlock::of(&targets),
        trial_index: 0,
        targets,
        metrics,
    };
    fs::create_dir_all(out)?;
    write_cue_log(create(&out.join("cues.csv"))?, &log)?;
    crate::wire::Recording { envelopes }.write_to(create(&out.join("bus.ndjson"))?)?;
    write_metrics(create(&out.join("metrics.csv"))?, std::slice::from_ref(&record))?;
    Ok(ReplayOutput { log, record })
}

/// One row per (sample, cue).
pub fn write_cue_log<W: Write>(out: W, log: &TrialLog) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "t_seconds",
        "shoulder_deg",
        "knee_deg",
        "joint",
        "error_deg",
        "active",
        "direction",
        "ergotac_unit",
        "ergotac_level",
        "cuff_slide",
        "cuff_force_n",
    ])?;
    for s in &log.samples {
        for cue in &s.cues {
            let j = cue.joint();
            let err = s.errors[j].map(|e| e.to_string()).unwrap_or_default();
            let (unit, level, slide, force) = match cue {
                GuidanceCue::ErgoTac(c) => {
                    let unit = match c.unit.placement {
                        Placement::Front => "front",
                        Placement::Back => "back",
                    };
                    (unit.to_string(), format!("{:?}", c.level).to_lowercase(), String::new(), String::new())
                }
                GuidanceCue::Cuff(c) => (String::new(), String::new(), format!("{:?}", c.slide).to_lowercase(), c.squeeze_force.to_string()),
            };
            w.write_record([
                s.t.to_string(),
                s.angles.shoulder.to_string(),
                s.angles.knee.to_string(),
                j.name().to_string(),
                err,
                cue.is_active().to_string(),
                cue.direction().to_string(),
                unit,
                level,
                slide,
                force,
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Parses `joint=degrees` target arguments into a pose.
pub fn parse_targets(args: &[String]) -> Result<TargetPose> {
    let mut map: JointMap<Option<AngleDeg>> = JointMap::default();
    for a in args {
        let (j, v) = a.split_once('=').with_context(|| format!("target `{a}` is not joint=degrees"))?;
        let joint: JointId = j.trim().parse().map_err(|e| anyhow::anyhow!("target `{a}`: {e}"))?;
        let deg: f64 = v.trim().parse().with_context(|| format!("target `{a}`: bad angle"))?;
        if map[joint].is_some() {
            bail!("target for {joint} given twice");
        }
        map[joint] = Some(AngleDeg::new(deg).map_err(|e| anyhow::anyhow!("target `{a}`: {e}"))?);
    }
    TargetPose::new(map).map_err(|e| anyhow::anyhow!("targets: {e}"))
}
