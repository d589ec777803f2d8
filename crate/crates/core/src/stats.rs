//! Wilcoxon signed-rank test for paired conditions and significance flags.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::devices::Device;
use crate::engine::SubBlock;
use crate::joint::JointId;
use crate::metrics::{MetricIndex, MetricRecord};
use crate::Error;

/// Largest effective sample size for which p is computed exactly.
pub const EXACT_MAX_N: usize = 20;

/// Paired observations of two conditions, one pair per subject.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PairedSample {
    /// `(value_a, value_b)` pairs.
    pub pairs: Vec<(f64, f64)>,
    /// Name of condition a.
    pub label_a: String,
    /// Name of condition b.
    pub label_b: String,
}

impl PairedSample {
    /// Unlabelled sample.
    pub fn new(pairs: Vec<(f64, f64)>) -> Self {
        PairedSample { pairs, ..Default::default() }
    }

    /// `a − b` for every pair.
    pub fn differences(&self) -> Vec<f64> {
        self.pairs.iter().map(|(a, b)| a - b).collect()
    }
}

/// How the p-value was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum PValueMethod {
    /// Full null distribution over all sign assignments.
    Exact,
    /// Normal approximation with continuity and tie correction.
    NormalApprox,
}

impl PValueMethod {
    /// Identifier used in files.
    pub const fn name(self) -> &'static str {
        match self {
            PValueMethod::Exact => "exact",
            PValueMethod::NormalApprox => "normal",
        }
    }
}

/// Outcome of a signed-rank test.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct WilcoxonResult {
    /// `min(W+, W−)`.
    pub w_statistic: f64,
    /// Sum of ranks of positive differences.
    pub w_plus: f64,
    /// Sum of ranks of negative differences.
    pub w_minus: f64,
    /// Number of non-zero differences.
    pub n_effective: usize,
    /// Two-sided p-value in `(0, 1]`.
    pub p_value: f64,
    /// Method used for `p_value`.
    pub method: PValueMethod,
}

/// Mid-ranks of `|d|` for the non-zero differences, doubled so they are integers.
///
/// Returns `(doubled_ranks, is_positive)` in the input order of non-zero entries.
fn doubled_signed_ranks(diffs: &[f64]) -> (Vec<u64>, Vec<bool>) {
    let nz: Vec<f64> = diffs.iter().copied().filter(|d| *d != 0.0).collect();
    let mut order: Vec<usize> = (0..nz.len()).collect();
    order.sort_by(|&a, &b| libm::fabs(nz[a]).total_cmp(&libm::fabs(nz[b])));
    let mut ranks = vec![0u64; nz.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && libm::fabs(nz[order[j + 1]]) == libm::fabs(nz[order[i]]) {
            j += 1;
        }
        // Positions i..=j (0-based) share the mid-rank ((i+1)+(j+1))/2.
        let doubled = (i + 1 + j + 1) as u64;
        for &k in &order[i..=j] {
            ranks[k] = doubled;
        }
        i = j + 1;
    }
    let positive = nz.iter().map(|d| *d > 0.0).collect();
    (ranks, positive)
}

/// Exact two-sided p: share of the 2^n sign assignments whose
/// `min(W+, W−)` does not exceed the observed one. Works on doubled ranks.
fn exact_p(doubled_ranks: &[u64], w_doubled: u64) -> f64 {
    let total: u64 = doubled_ranks.iter().sum();
    // counts[s] = number of sign assignments with doubled W+ = s.
    let mut counts = vec![0u64; total as usize + 1];
    counts[0] = 1;
    let mut reach = 0usize;
    for &r in doubled_ranks {
        let r = r as usize;
        for s in (0..=reach).rev() {
            if counts[s] != 0 {
                counts[s + r] += counts[s];
            }
        }
        reach += r;
    }
    let extreme: u64 = counts
        .iter()
        .enumerate()
        .filter(|(s, _)| (*s as u64).min(total - *s as u64) <= w_doubled)
        .map(|(_, c)| *c)
        .sum();
    let p = extreme as f64 / libm::exp2(doubled_ranks.len() as f64);
    p.min(1.0)
}

fn normal_p(doubled_ranks: &[u64], w: f64) -> f64 {
    let n = doubled_ranks.len() as f64;
    let mean = n * (n + 1.0) / 4.0;
    let mut sorted = doubled_ranks.to_vec();
    sorted.sort_unstable();
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let j = sorted[i..].iter().take_while(|r| **r == sorted[i]).count();
        let t = j as f64;
        tie_term += t * t * t - t;
        i += j;
    }
    let var = n * (n + 1.0) * (2.0 * n + 1.0) / 24.0 - tie_term / 48.0;
    if var <= 0.0 {
        return 1.0;
    }
    let z = ((libm::fabs(w - mean) - 0.5).max(0.0)) / libm::sqrt(var);
    libm::erfc(z / core::f64::consts::SQRT_2).min(1.0)
}

/// Signed-rank test on raw differences with an explicit p-value method.
///
/// `None` picks exact for `n ≤ 20`, normal otherwise.
pub fn wilcoxon_differences(diffs: &[f64], method: Option<PValueMethod>) -> Result<WilcoxonResult, Error> {
    if diffs.iter().any(|d| !d.is_finite()) {
        return Err(Error::InvalidInput("differences must be finite"));
    }
    let (ranks, positive) = doubled_signed_ranks(diffs);
    if ranks.is_empty() {
        return Err(Error::DegenerateSample);
    }
    let plus2: u64 = ranks.iter().zip(&positive).filter(|(_, p)| **p).map(|(r, _)| *r).sum();
    let total2: u64 = ranks.iter().sum();
    let minus2 = total2 - plus2;
    let w2 = plus2.min(minus2);
    let n = ranks.len();
    let method = method.unwrap_or(if n <= EXACT_MAX_N { PValueMethod::Exact } else { PValueMethod::NormalApprox });
    let w = w2 as f64 / 2.0;
    let p_value = match method {
        PValueMethod::Exact => exact_p(&ranks, w2),
        PValueMethod::NormalApprox => normal_p(&ranks, w),
    };
    Ok(WilcoxonResult {
        w_statistic: w,
        w_plus: plus2 as f64 / 2.0,
        w_minus: minus2 as f64 / 2.0,
        n_effective: n,
        p_value,
        method,
    })
}

/// Two-sided Wilcoxon signed-rank test of `a − b`.
///
/// Zero differences are dropped; tied magnitudes get mid-ranks.
pub fn wilcoxon_signed_rank(sample: &PairedSample) -> Result<WilcoxonResult, Error> {
    wilcoxon_differences(&sample.differences(), None)
}

/// Significance flag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Significance {
    /// p ≥ 0.05.
    NotSignificant,
    /// p < 0.05.
    P05,
    /// p < 0.01.
    P01,
    /// p < 0.001.
    P001,
}

impl Significance {
    /// `ns`, `*`, `**` or `***`.
    pub const fn stars(self) -> &'static str {
        match self {
            Significance::NotSignificant => "ns",
            Significance::P05 => "*",
            Significance::P01 => "**",
            Significance::P001 => "***",
        }
    }
}

impl fmt::Display for Significance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.stars())
    }
}

/// Flags `p` at the 0.05 / 0.01 / 0.001 thresholds.
pub fn significance_stars(p: f64) -> Result<Significance, Error> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::InvalidInput("p-value must lie in (0, 1]"));
    }
    Ok(if p < 0.001 {
        Significance::P001
    } else if p < 0.01 {
        Significance::P01
    } else if p < 0.05 {
        Significance::P05
    } else {
        Significance::NotSignificant
    })
}

/// One side of a comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Condition {
    /// Device.
    pub device: Device,
    /// Sub-block.
    pub sub_block: SubBlock,
    /// Restrict to one joint's per-joint values.
    pub joint: Option<JointId>,
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.device, self.sub_block)?;
        if let Some(j) = self.joint {
            write!(f, ":{j}")?;
        }
        Ok(())
    }
}

/// A planned comparison `a` vs `b`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ComparisonPair {
    /// First condition.
    pub a: Condition,
    /// Second condition.
    pub b: Condition,
}

impl ComparisonPair {
    /// `a vs b` label.
    pub fn label(&self) -> String {
        format!("{} vs {}", self.a, self.b)
    }
}

/// CUFF vs ErgoTac per sub-block, then single joint vs the same joint in the
/// multi-joint sub-block for each device.
pub fn default_plan() -> Vec<ComparisonPair> {
    let mut plan = Vec::new();
    for sb in SubBlock::ALL {
        plan.push(ComparisonPair {
            a: Condition { device: Device::Cuff, sub_block: sb, joint: None },
            b: Condition { device: Device::ErgoTac, sub_block: sb, joint: None },
        });
    }
    for device in Device::ALL {
        for (joint, single) in [(JointId::Shoulder, SubBlock::ShoulderOnly), (JointId::Knee, SubBlock::KneeOnly)] {
            plan.push(ComparisonPair {
                a: Condition { device, sub_block: single, joint: Some(joint) },
                b: Condition { device, sub_block: SubBlock::MultiJoint, joint: Some(joint) },
            });
        }
    }
    plan
}

/// One row of a comparison table.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    /// Index compared.
    pub index: MetricIndex,
    /// Conditions compared.
    pub pair: ComparisonPair,
    /// Test result, or why the pair could not be tested.
    pub result: Result<(WilcoxonResult, Significance), String>,
}

/// Per-subject mean of `index` in `cond`; subjects with no defined value are absent.
fn subject_means(records: &[MetricRecord], cond: &Condition, index: MetricIndex) -> BTreeMap<u32, f64> {
    let mut acc: BTreeMap<u32, (f64, usize)> = BTreeMap::new();
    for r in records.iter().filter(|r| r.device == cond.device && r.sub_block == cond.sub_block) {
        if let Some(v) = index.value(&r.metrics, cond.joint) {
            let e = acc.entry(r.subject_id).or_insert((0.0, 0));
            e.0 += v;
            e.1 += 1;
        }
    }
    acc.into_iter().map(|(k, (s, n))| (k, s / n as f64)).collect()
}

/// Paired sample of subject means for `pair` on `index`.
pub fn paired_sample(records: &[MetricRecord], pair: &ComparisonPair, index: MetricIndex) -> PairedSample {
    let a = subject_means(records, &pair.a, index);
    let b = subject_means(records, &pair.b, index);
    let pairs = a.iter().filter_map(|(s, va)| b.get(s).map(|vb| (*va, *vb))).collect();
    PairedSample { pairs, label_a: format!("{}", pair.a), label_b: format!("{}", pair.b) }
}

/// Runs every planned pair on every index. Rows are ordered index-major.
///
/// Missing conditions and degenerate samples become untestable rows.
pub fn compare_conditions(records: &[MetricRecord], plan: &[ComparisonPair]) -> Vec<ComparisonRow> {
    let mut rows = Vec::with_capacity(plan.len() * MetricIndex::ALL.len());
    for index in MetricIndex::ALL {
        for pair in plan {
            let sample = paired_sample(records, pair, index);
            let result = if sample.pairs.is_empty() {
                Err(String::from("untestable: no subject has values in both conditions"))
            } else {
                match wilcoxon_signed_rank(&sample) {
                    Ok(w) => significance_stars(w.p_value).map(|s| (w, s)).map_err(|e| format!("untestable: {e}")),
                    Err(e) => Err(format!("untestable: {e}")),
                }
            };
            rows.push(ComparisonRow { index, pair: *pair, result });
        }
    }
    rows
}
