//! Static SVG boxplots.

use std::fmt::Write as _;

use hapguide_core::devices::Device;
use hapguide_core::engine::SubBlock;
use hapguide_core::metrics::{quantile_sorted, MetricIndex, MetricRecord};

use crate::tables::ComparisonCsvRow;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 440.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 60.0;
const BOTTOM: f64 = 70.0;

/// One box: label and the values it summarizes.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxGroup {
    /// Device of the box.
    pub device: Device,
    /// Sub-block of the box.
    pub sub_block: SubBlock,
    /// Values, any order.
    pub values: Vec<f64>,
}

/// A significance bracket between two boxes.
#[derive(Debug, Clone, PartialEq)]
pub struct Bracket {
    /// Left box position in the group list.
    pub from: usize,
    /// Right box position in the group list.
    pub to: usize,
    /// Marker text, e.g. `**` or `ns`.
    pub text: String,
}

/// Boxes per (device, sub-block) in `Device::ALL × SubBlock::ALL` order.
pub fn groups_for(records: &[MetricRecord], index: MetricIndex) -> Vec<BoxGroup> {
    let mut out = Vec::new();
    for device in Device::ALL {
        for sub_block in SubBlock::ALL {
            let values = records
                .iter()
                .filter(|r| r.device == device && r.sub_block == sub_block)
                .filter_map(|r| index.value(&r.metrics, None))
                .collect();
            out.push(BoxGroup { device, sub_block, values });
        }
    }
    out
}

fn parse_condition(s: &str) -> Option<(Device, SubBlock, Option<&str>)> {
    let mut it = s.splitn(3, ':');
    let device = it.next()?.parse().ok()?;
    let sub_block = it.next()?.parse().ok()?;
    Some((device, sub_block, it.next()))
}

/// Brackets for the comparison rows of `index` whose conditions map to boxes.
pub fn brackets_for(groups: &[BoxGroup], rows: &[ComparisonCsvRow], index: MetricIndex) -> Vec<Bracket> {
    let find = |d: Device, sb: SubBlock| groups.iter().position(|g| g.device == d && g.sub_block == sb);
    rows.iter()
        .filter(|r| r.index == index.name())
        .filter_map(|r| {
            let (a, b) = r.pair.split_once(" vs ")?;
            let (da, sa, ja) = parse_condition(a)?;
            let (db, sb, _) = parse_condition(b)?;
            let (i, k) = (find(da, sa)?, find(db, sb)?);
            let marker = r.stars.clone().unwrap_or_else(|| "n/a".to_string());
            let text = match ja {
                Some(j) => format!("{marker} ({j})"),
                None => marker,
            };
            Some(Bracket { from: i.min(k), to: i.max(k), text })
        })
        .collect()
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Renders one boxplot. Empty groups get a label and no box; constant data
/// draws a flat box.
pub fn render_boxplot(title: &str, unit: &str, groups: &[BoxGroup], brackets: &[Bracket]) -> String {
    let all: Vec<f64> = groups.iter().flat_map(|g| g.values.iter().copied()).filter(|v| v.is_finite()).collect();
    let (mut lo, mut hi) = all.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    if all.is_empty() {
        (lo, hi) = (0.0, 1.0);
    }
    if hi - lo < 1e-9 {
        let pad = if lo.abs() > 1e-9 { lo.abs() * 0.1 } else { 1.0 };
        lo -= pad;
        hi += pad;
    }
    let span = hi - lo;
    let (lo, hi) = (lo - 0.05 * span, hi + 0.05 * span);
    let plot_h = HEIGHT - TOP - BOTTOM;
    let y = |v: f64| TOP + plot_h * (1.0 - (v - lo) / (hi - lo));
    let n = groups.len().max(1) as f64;
    let slot = (WIDTH - LEFT - RIGHT) / n;
    let cx = |i: usize| LEFT + slot * (i as f64 + 0.5);
    let half = slot * 0.3;

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{:.1}" y="20" text-anchor="middle" font-size="15">{}</text>"#, WIDTH / 2.0, esc(title));
    let _ = writeln!(
        s,
        r#"<text x="16" y="{:.1}" transform="rotate(-90 16 {:.1})" text-anchor="middle">{}</text>"#,
        TOP + plot_h / 2.0,
        TOP + plot_h / 2.0,
        esc(unit)
    );
    let _ = writeln!(s, r#"<line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{:.1}" stroke="black"/>"#, TOP + plot_h);
    for k in 0..=4 {
        let v = lo + (hi - lo) * k as f64 / 4.0;
        let _ = writeln!(s, r#"<line x1="{:.1}" y1="{:.1}" x2="{LEFT}" y2="{:.1}" stroke="black"/>"#, LEFT - 4.0, y(v), y(v));
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{v:.2}</text>"#, LEFT - 6.0, y(v) + 4.0);
    }

    for (i, g) in groups.iter().enumerate() {
        let x = cx(i);
        let color = match g.device {
            Device::Cuff => "#9ecae1",
            Device::ErgoTac => "#fdae6b",
        };
        let _ = writeln!(s, r#"<text x="{x:.1}" y="{:.1}" text-anchor="middle">{}</text>"#, TOP + plot_h + 18.0, g.device);
        let _ = writeln!(s, r#"<text x="{x:.1}" y="{:.1}" text-anchor="middle">{}</text>"#, TOP + plot_h + 34.0, esc(g.sub_block.label()));
        let mut v: Vec<f64> = g.values.iter().copied().filter(|v| v.is_finite()).collect();
        if v.is_empty() {
            let _ = writeln!(s, r#"<text x="{x:.1}" y="{:.1}" text-anchor="middle" fill="gray">n/a</text>"#, TOP + plot_h / 2.0);
            continue;
        }
        v.sort_by(f64::total_cmp);
        let (q1, med, q3) = (quantile_sorted(&v, 0.25), quantile_sorted(&v, 0.5), quantile_sorted(&v, 0.75));
        let (mn, mx) = (v[0], v[v.len() - 1]);
        let _ = writeln!(s, r#"<line x1="{x:.1}" y1="{:.1}" x2="{x:.1}" y2="{:.1}" stroke="black"/>"#, y(mx), y(q3));
        let _ = writeln!(s, r#"<line x1="{x:.1}" y1="{:.1}" x2="{x:.1}" y2="{:.1}" stroke="black"/>"#, y(q1), y(mn));
        for w in [mn, mx] {
            let _ = writeln!(s, r#"<line x1="{:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="black"/>"#, x - half / 2.0, y(w), x + half / 2.0, y(w));
        }
        let _ = writeln!(
            s,
            r#"<rect x="{:.1}" y="{:.1}" width="{:.1}" height="{:.1}" fill="{color}" stroke="black"/>"#,
            x - half,
            y(q3),
            2.0 * half,
            (y(q1) - y(q3)).max(0.0)
        );
        let _ = writeln!(s, r#"<line x1="{:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="black" stroke-width="2"/>"#, x - half, y(med), x + half, y(med));
    }

    for (k, b) in brackets.iter().enumerate() {
        let yb = TOP - 8.0 - 10.0 * (k % 4) as f64;
        let (x1, x2) = (cx(b.from), cx(b.to));
        let _ = writeln!(
            s,
            r#"<path d="M{x1:.1} {:.1} V{yb:.1} H{x2:.1} V{:.1}" fill="none" stroke="black"/>"#,
            yb + 4.0,
            yb + 4.0
        );
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" font-size="10">{}</text>"#, (x1 + x2) / 2.0, yb - 2.0, esc(&b.text));
    }
    s.push_str("</svg>\n");
    s
}
