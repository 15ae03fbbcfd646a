//! Static SVG regret curves from benchmark CSV rows.

use std::collections::BTreeMap;
use std::fmt::Write;

use crate::bench::CsvRow;
use crate::{BenchError, Result};

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 440.0;
const MARGIN: f64 = 60.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

/// One curve: mean log10 regret and half-width per query index.
#[derive(Debug, Clone, PartialEq)]
pub struct Curve {
    pub label: String,
    pub mean: Vec<f64>,
    pub half_width: Vec<f64>,
}

/// Groups rows by (problem, algo, q, noise) and averages over seeds.
pub fn curves(rows: &[CsvRow]) -> Result<Vec<Curve>> {
    let mut groups: BTreeMap<String, BTreeMap<usize, Vec<f64>>> = BTreeMap::new();
    for r in rows {
        let label = format!("{} {} q={} noise={}", r.problem, r.algo, r.q, r.noise);
        groups
            .entry(label)
            .or_default()
            .entry(r.query_index)
            .or_default()
            .push(r.log10_regret);
    }
    if groups.is_empty() {
        return Err(BenchError::NoTraces);
    }
    Ok(groups
        .into_iter()
        .map(|(label, by_index)| {
            let (mut mean, mut half_width) = (Vec::new(), Vec::new());
            for v in by_index.values() {
                let n = v.len() as f64;
                let m = v.iter().sum::<f64>() / n;
                let sd = if v.len() > 1 {
                    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
                } else {
                    0.0
                };
                mean.push(m);
                half_width.push(1.96 * sd / n.sqrt());
            }
            Curve { label, mean, half_width }
        })
        .collect())
}

/// Regret-vs-query figure with shaded 1.96-standard-error bands.
pub fn render_svg(curves: &[Curve]) -> String {
    let n = curves.iter().map(|c| c.mean.len()).max().unwrap_or(1).max(2);
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for c in curves {
        for (m, h) in c.mean.iter().zip(&c.half_width) {
            lo = lo.min(m - h);
            hi = hi.max(m + h);
        }
    }
    if !(hi > lo) {
        lo -= 0.5;
        hi += 0.5;
    }
    let px = |i: usize| MARGIN + (WIDTH - 2.0 * MARGIN) * i as f64 / (n - 1) as f64;
    let py = |v: f64| HEIGHT - MARGIN - (HEIGHT - 2.0 * MARGIN) * (v - lo) / (hi - lo);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let (x0, x1, y0, y1) = (MARGIN, WIDTH - MARGIN, MARGIN, HEIGHT - MARGIN);
    let _ = writeln!(s, r#"<path d="M{x0},{y0} L{x0},{y1} L{x1},{y1}" stroke="black" fill="none"/>"#);
    for k in 0..=4 {
        let v = lo + (hi - lo) * k as f64 / 4.0;
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{:.1}" text-anchor="end">{v:.2}</text>"#,
            x0 - 6.0,
            py(v) + 4.0
        );
        let i = (n - 1) * k / 4;
        let _ = writeln!(s, r#"<text x="{:.1}" y="{}" text-anchor="middle">{i}</text>"#, px(i), y1 + 18.0);
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">queries</text>"#,
        WIDTH / 2.0,
        HEIGHT - 15.0
    );
    let _ = writeln!(
        s,
        r#"<text x="15" y="{}" transform="rotate(-90 15 {})" text-anchor="middle">log10 simple regret</text>"#,
        HEIGHT / 2.0,
        HEIGHT / 2.0
    );
    for (ci, c) in curves.iter().enumerate() {
        let color = COLORS[ci % COLORS.len()];
        let upper: Vec<String> = (0..c.mean.len())
            .map(|i| format!("{:.1},{:.1}", px(i), py(c.mean[i] + c.half_width[i])))
            .collect();
        let lower: Vec<String> = (0..c.mean.len())
            .rev()
            .map(|i| format!("{:.1},{:.1}", px(i), py(c.mean[i] - c.half_width[i])))
            .collect();
        let _ = writeln!(
            s,
            r#"<polygon points="{} {}" fill="{color}" fill-opacity="0.15" stroke="none"/>"#,
            upper.join(" "),
            lower.join(" ")
        );
        let line: Vec<String> = (0..c.mean.len())
            .map(|i| format!("{:.1},{:.1}", px(i), py(c.mean[i])))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
            line.join(" ")
        );
        let ly = y0 + 16.0 * ci as f64;
        let _ = writeln!(
            s,
            r#"<line x1="{}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/><text x="{}" y="{}">{}</text>"#,
            x1 - 200.0,
            x1 - 180.0,
            x1 - 175.0,
            ly + 4.0,
            escape(&c.label)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn escape(t: &str) -> String {
    t.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
