//! Self-contained SVG charts for the aggregate CSVs.

use std::fmt::Write;

use anyhow::{bail, Result};

use crate::output::Table;

const W: f64 = 720.0;
const H: f64 = 440.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 170.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 55.0;
const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotKind {
    /// Evaluation metric against training iteration, CI band per algorithm.
    Curve,
    /// Grouped bars of final score per task bin.
    PerTaskBar,
    /// Sampler parameters against training iteration.
    SamplerTrace,
}

impl std::str::FromStr for PlotKind {
    type Err = anyhow::Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "curve" => Ok(PlotKind::Curve),
            "per-task-bar" => Ok(PlotKind::PerTaskBar),
            "sampler-trace" => Ok(PlotKind::SamplerTrace),
            _ => bail!("unknown plot kind {s:?}; expected curve, per-task-bar or sampler-trace"),
        }
    }
}

/// One line with an optional confidence band.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    /// `(x, y, lo, hi)`.
    pub points: Vec<(f64, f64, f64, f64)>,
}

/// Renders `table` as the chart `kind`. `metric` selects the curve metric.
pub fn render(kind: PlotKind, table: &Table, metric: &str) -> Result<String> {
    match kind {
        PlotKind::Curve => {
            let cols = table.require(&["algorithm", "iteration", "metric", "mean", "lo", "hi"])?;
            let series = collect_series(table, &cols, |row| (row[cols[2]] == metric).then(|| row[cols[0]].clone()))?;
            if series.is_empty() {
                bail!("no rows with metric {metric:?}");
            }
            Ok(line_chart(&series, &format!("test {metric} during training"), "iteration", metric))
        }
        PlotKind::SamplerTrace => {
            let cols = table.require(&["algorithm", "iteration", "param", "mean", "lo", "hi"])?;
            let series =
                collect_series(table, &cols, |row| Some(format!("{} {}", row[cols[0]], row[cols[2]])))?;
            Ok(line_chart(&series, "sampler parameters", "iteration", "phi"))
        }
        PlotKind::PerTaskBar => {
            let cols = table.require(&["algorithm", "bin", "bin_lo", "bin_hi", "mean", "lo", "hi"])?;
            let mut groups: Vec<String> = Vec::new();
            let mut names: Vec<String> = Vec::new();
            let mut cells = Vec::new();
            for (i, row) in table.rows.iter().enumerate() {
                let g = format!("{:.3}-{:.3}", table.f64_at(i, cols[2])?, table.f64_at(i, cols[3])?);
                if !groups.contains(&g) {
                    groups.push(g.clone());
                }
                if !names.contains(&row[cols[0]]) {
                    names.push(row[cols[0]].clone());
                }
                cells.push((row[cols[0]].clone(), g, table.f64_at(i, cols[4])?, table.f64_at(i, cols[5])?, table.f64_at(i, cols[6])?));
            }
            Ok(bar_chart(&groups, &names, &cells))
        }
    }
}

fn collect_series(
    table: &Table,
    cols: &[usize],
    key: impl Fn(&[String]) -> Option<String>,
) -> Result<Vec<Series>> {
    let mut out: Vec<Series> = Vec::new();
    for (i, row) in table.rows.iter().enumerate() {
        let Some(name) = key(row) else { continue };
        let p = (table.f64_at(i, cols[1])?, table.f64_at(i, cols[3])?, table.f64_at(i, cols[4])?, table.f64_at(i, cols[5])?);
        match out.iter_mut().find(|s| s.name == name) {
            Some(s) => s.points.push(p),
            None => out.push(Series { name, points: vec![p] }),
        }
    }
    Ok(out)
}

/// Round tick positions covering `[lo, hi]`.
pub fn nice_ticks(lo: f64, hi: f64, target: usize) -> Vec<f64> {
    let (lo, hi) = if hi > lo { (lo, hi) } else { (lo - 0.5, lo + 0.5) };
    let raw = (hi - lo) / target.max(1) as f64;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 2.5, 5.0, 10.0].iter().map(|m| m * mag).find(|s| *s >= raw).unwrap_or(10.0 * mag);
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    // divide by an exact power of ten so 3 * 0.2 prints as 0.6
    let scale = if mag < 1.0 { (10.0 / mag).round() } else { 1.0 };
    let units = (step * scale).round();
    (first..=last).map(|k| k as f64 * units / scale).collect()
}

fn label(v: f64) -> String {
    let s = format!("{v:.4}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" { "0".into() } else { s.into() }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn px(&self, x: f64) -> f64 {
        LEFT + (x - self.x0) / (self.x1 - self.x0) * (W - LEFT - RIGHT)
    }
    fn py(&self, y: f64) -> f64 {
        H - BOTTOM - (y - self.y0) / (self.y1 - self.y0) * (H - TOP - BOTTOM)
    }
}

fn header(svg: &mut String, title: &str) {
    let _ = write!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">
<rect width="{W}" height="{H}" fill="white"/>
<text x="{}" y="22" text-anchor="middle" font-size="15">{}</text>
"#,
        (LEFT + W - RIGHT) / 2.0,
        escape(title)
    );
}

fn axes(svg: &mut String, f: &Frame, xticks: &[(f64, String)], yticks: &[f64], xlabel: &str, ylabel: &str) {
    let (l, r, t, b) = (LEFT, W - RIGHT, TOP, H - BOTTOM);
    let _ = writeln!(svg, r#"<rect x="{l}" y="{t}" width="{}" height="{}" fill="none" stroke="black"/>"#, r - l, b - t);
    for (x, text) in xticks {
        let px = f.px(*x);
        let _ = writeln!(svg, r#"<line x1="{px:.1}" y1="{b}" x2="{px:.1}" y2="{}" stroke="black"/>"#, b + 5.0);
        let _ = writeln!(svg, r#"<text x="{px:.1}" y="{}" text-anchor="middle">{}</text>"#, b + 18.0, escape(text));
    }
    for &y in yticks {
        let py = f.py(y);
        let _ = writeln!(svg, r##"<line x1="{l}" y1="{py:.1}" x2="{r}" y2="{py:.1}" stroke="#dddddd"/>"##);
        let _ = writeln!(svg, r#"<text x="{}" y="{:.1}" text-anchor="end">{}</text>"#, l - 6.0, py + 4.0, label(y));
    }
    let _ = writeln!(svg, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, (l + r) / 2.0, H - 12.0, escape(xlabel));
    let _ = writeln!(
        svg,
        r#"<text x="16" y="{0}" text-anchor="middle" transform="rotate(-90 16 {0})">{1}</text>"#,
        (t + b) / 2.0,
        escape(ylabel)
    );
}

fn legend(svg: &mut String, names: &[String]) {
    for (k, name) in names.iter().enumerate() {
        let y = TOP + 10.0 + 20.0 * k as f64;
        let x = W - RIGHT + 15.0;
        let c = PALETTE[k % PALETTE.len()];
        let _ = writeln!(svg, r#"<rect x="{x}" y="{}" width="14" height="10" fill="{c}"/>"#, y - 9.0);
        let _ = writeln!(svg, r#"<text x="{}" y="{y}">{}</text>"#, x + 20.0, escape(name));
    }
}

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.filter(|v| v.is_finite()).fold((f64::MAX, f64::MIN), |(a, b), v| (a.min(v), b.max(v)));
    if lo > hi {
        (0.0, 1.0)
    } else if lo == hi {
        (lo - 0.5, hi + 0.5)
    } else {
        let pad = 0.05 * (hi - lo);
        (lo - pad, hi + pad)
    }
}

pub fn line_chart(series: &[Series], title: &str, xlabel: &str, ylabel: &str) -> String {
    let pts = || series.iter().flat_map(|s| s.points.iter());
    let (x0, x1) = bounds(pts().map(|p| p.0));
    let (y0, y1) = bounds(pts().flat_map(|p| [p.1, p.2, p.3]));
    let f = Frame { x0, x1, y0, y1 };
    let mut svg = String::new();
    header(&mut svg, title);
    let xt: Vec<(f64, String)> = nice_ticks(x0, x1, 6).into_iter().map(|x| (x, label(x))).collect();
    axes(&mut svg, &f, &xt, &nice_ticks(y0, y1, 6), xlabel, ylabel);
    for (k, s) in series.iter().enumerate() {
        let c = PALETTE[k % PALETTE.len()];
        let has_band = s.points.iter().any(|p| p.2 != p.1 || p.3 != p.1);
        if has_band {
            let upper = s.points.iter().map(|p| format!("{:.1},{:.1}", f.px(p.0), f.py(p.3)));
            let lower = s.points.iter().rev().map(|p| format!("{:.1},{:.1}", f.px(p.0), f.py(p.2)));
            let poly: Vec<String> = upper.chain(lower).collect();
            let _ = writeln!(svg, r#"<polygon points="{}" fill="{c}" fill-opacity="0.2" stroke="none"/>"#, poly.join(" "));
        }
        let line: Vec<String> = s.points.iter().map(|p| format!("{:.1},{:.1}", f.px(p.0), f.py(p.1))).collect();
        let _ = writeln!(svg, r#"<polyline points="{}" fill="none" stroke="{c}" stroke-width="2"/>"#, line.join(" "));
    }
    legend(&mut svg, &series.iter().map(|s| s.name.clone()).collect::<Vec<_>>());
    svg.push_str("</svg>\n");
    svg
}

/// `cells` are `(series, group, mean, lo, hi)`.
pub fn bar_chart(groups: &[String], names: &[String], cells: &[(String, String, f64, f64, f64)]) -> String {
    let (y0, y1) = bounds(cells.iter().flat_map(|c| [c.2, c.3, c.4]).chain([0.0]));
    let f = Frame { x0: 0.0, x1: groups.len().max(1) as f64, y0, y1 };
    let mut svg = String::new();
    header(&mut svg, "final score by task bin");
    let xt: Vec<(f64, String)> = groups.iter().enumerate().map(|(i, g)| (i as f64 + 0.5, g.clone())).collect();
    axes(&mut svg, &f, &xt, &nice_ticks(y0, y1, 6), "task bin (first coordinate)", "score");
    let slot = (f.px(1.0) - f.px(0.0)) * 0.8 / names.len().max(1) as f64;
    for (name, group, mean, lo, hi) in cells {
        let (Some(g), Some(k)) = (groups.iter().position(|x| x == group), names.iter().position(|x| x == name)) else {
            continue;
        };
        let c = PALETTE[k % PALETTE.len()];
        let x = f.px(g as f64) + (f.px(1.0) - f.px(0.0)) * 0.1 + slot * k as f64;
        let (top, base) = (f.py(mean.max(0.0)), f.py(mean.min(0.0)));
        let _ = writeln!(svg, r#"<rect x="{x:.1}" y="{top:.1}" width="{:.1}" height="{:.1}" fill="{c}"/>"#, slot * 0.9, base - top);
        let cx = x + slot * 0.45;
        let _ = writeln!(svg, r#"<line x1="{cx:.1}" y1="{:.1}" x2="{cx:.1}" y2="{:.1}" stroke="black"/>"#, f.py(*lo), f.py(*hi));
    }
    legend(&mut svg, names);
    svg.push_str("</svg>\n");
    svg
}
