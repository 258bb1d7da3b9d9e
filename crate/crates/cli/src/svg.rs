//! Fixed-size SVG line plots. Output depends only on the data, so plots can
//! be compared byte for byte.

use std::fmt::Write;

use crate::error::{CliError, Result};

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 450.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 24.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 56.0;
const PALETTE: [&str; 6] = ["#1f5fa8", "#c2410c", "#15803d", "#7e22ce", "#a16207", "#0f766e"];

#[derive(Clone, Debug)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

#[derive(Clone, Debug, Default)]
pub struct PlotSpec {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub log_x: bool,
    pub log_y: bool,
    /// x-intervals drawn as grey bands (flagged radii).
    pub shaded: Vec<(f64, f64)>,
    /// Horizontal reference line.
    pub reference: Option<f64>,
}

struct Axis {
    lo: f64,
    hi: f64,
    log: bool,
}

impl Axis {
    fn fit(values: impl Iterator<Item = f64>, log: bool) -> Option<Self> {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for v in values {
            let v = if log { v.log10() } else { v };
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if !lo.is_finite() || !hi.is_finite() {
            return None;
        }
        if hi - lo < 1e-12 * hi.abs().max(1.0) {
            let pad = if log { 0.5 } else { 0.5 * lo.abs().max(1.0) };
            lo -= pad;
            hi += pad;
        } else {
            let pad = 0.04 * (hi - lo);
            lo -= pad;
            hi += pad;
        }
        Some(Self { lo, hi, log })
    }

    fn usable(&self, v: f64) -> bool {
        v.is_finite() && (!self.log || v > 0.0)
    }

    /// Position in [0, 1].
    fn unit(&self, v: f64) -> f64 {
        let v = if self.log { v.log10() } else { v };
        (v - self.lo) / (self.hi - self.lo)
    }

    fn ticks(&self) -> Vec<f64> {
        if self.log {
            let ticks: Vec<f64> = (self.lo.ceil() as i32..=self.hi.floor() as i32).map(|k| 10f64.powi(k)).collect();
            if ticks.len() >= 2 {
                return ticks;
            }
            return linear_ticks(10f64.powf(self.lo), 10f64.powf(self.hi));
        }
        linear_ticks(self.lo, self.hi)
    }
}

fn linear_ticks(lo: f64, hi: f64) -> Vec<f64> {
    let raw = (hi - lo) / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0].iter().map(|m| m * mag).find(|s| *s >= raw).unwrap_or(10.0 * mag);
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    (first..=last).map(|i| i as f64 * step).map(|v| if v.abs() < 1e-9 * step { 0.0 } else { v }).collect()
}

/// Short label for a tick value.
pub fn format_number(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let a = v.abs();
    if (1e-3..1e5).contains(&a) {
        let s = format!("{v:.6}");
        let s = s.trim_end_matches('0').trim_end_matches('.');
        s.to_string()
    } else {
        format!("{v:.2e}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Intervals around flagged x values, reaching halfway to the neighbours.
pub fn flag_intervals(xs: &[f64], flagged: &[bool], log_x: bool) -> Vec<(f64, f64)> {
    let t = |x: f64| if log_x { x.log10() } else { x };
    let inv = |x: f64| if log_x { 10f64.powf(x) } else { x };
    let mut out: Vec<(f64, f64)> = Vec::new();
    for i in 0..xs.len() {
        if !flagged.get(i).copied().unwrap_or(false) {
            continue;
        }
        let c = t(xs[i]);
        let left = if i > 0 { 0.5 * (c + t(xs[i - 1])) } else { c };
        let right = if i + 1 < xs.len() { 0.5 * (c + t(xs[i + 1])) } else { c };
        let (a, b) = (inv(left), inv(right));
        match out.last_mut() {
            Some(last) if (last.1 - a).abs() <= 1e-12 * a.abs().max(1.0) => last.1 = b,
            _ => out.push((a, b)),
        }
    }
    out
}

pub fn render(spec: &PlotSpec, series: &[Series]) -> Result<String> {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let probe_x = Axis { lo: 0.0, hi: 1.0, log: spec.log_x };
    let probe_y = Axis { lo: 0.0, hi: 1.0, log: spec.log_y };
    for s in series {
        for &(x, y) in &s.points {
            if probe_x.usable(x) && probe_y.usable(y) {
                xs.push(x);
                ys.push(y);
            }
        }
    }
    if let Some(r) = spec.reference.filter(|r| probe_y.usable(*r)) {
        ys.push(r);
    }
    let xa = Axis::fit(xs.iter().copied(), spec.log_x).ok_or_else(|| CliError::Plot("no plottable x values".into()))?;
    let ya = Axis::fit(ys.iter().copied(), spec.log_y).ok_or_else(|| CliError::Plot("no plottable y values".into()))?;
    let pw = WIDTH - LEFT - RIGHT;
    let ph = HEIGHT - TOP - BOTTOM;
    let px = |x: f64| LEFT + pw * xa.unit(x);
    let py = |y: f64| TOP + ph * (1.0 - ya.unit(y));

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    for &(a, b) in &spec.shaded {
        if !(xa.usable(a) && xa.usable(b)) {
            continue;
        }
        let (x0, x1) = (px(a).clamp(LEFT, LEFT + pw), px(b).clamp(LEFT, LEFT + pw));
        let w = (x1 - x0).max(2.0);
        let _ = writeln!(
            out,
            r##"<rect class="flagged" x="{:.2}" y="{TOP:.2}" width="{w:.2}" height="{ph:.2}" fill="#9ca3af" fill-opacity="0.35"/>"##,
            x0 - if x1 - x0 < 2.0 { 1.0 } else { 0.0 }
        );
    }
    for t in xa.ticks() {
        let x = px(t);
        let _ = writeln!(out, r##"<line x1="{x:.2}" y1="{TOP:.2}" x2="{x:.2}" y2="{:.2}" stroke="#e5e7eb"/>"##, TOP + ph);
        let _ = writeln!(out, r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, TOP + ph + 18.0, format_number(t));
    }
    for t in ya.ticks() {
        let y = py(t);
        let _ = writeln!(out, r##"<line x1="{LEFT:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#e5e7eb"/>"##, LEFT + pw);
        let _ = writeln!(out, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#, LEFT - 6.0, y + 4.0, format_number(t));
    }
    let _ = writeln!(out, r##"<rect x="{LEFT:.2}" y="{TOP:.2}" width="{pw:.2}" height="{ph:.2}" fill="none" stroke="#111827"/>"##);
    if let Some(r) = spec.reference.filter(|r| ya.usable(*r)) {
        let y = py(r);
        let _ = writeln!(
            out,
            r##"<line class="reference" x1="{LEFT:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#6b7280" stroke-dasharray="6 4"/>"##,
            LEFT + pw
        );
    }
    for (i, s) in series.iter().enumerate() {
        let colour = PALETTE[i % PALETTE.len()];
        let mut segments: Vec<Vec<(f64, f64)>> = vec![Vec::new()];
        for &(x, y) in &s.points {
            if xa.usable(x) && ya.usable(y) {
                segments.last_mut().expect("nonempty").push((px(x), py(y)));
            } else if !segments.last().expect("nonempty").is_empty() {
                segments.push(Vec::new());
            }
        }
        for seg in segments.iter().filter(|s| !s.is_empty()) {
            let pts: Vec<String> = seg.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
            let _ = writeln!(
                out,
                r#"<polyline fill="none" stroke="{colour}" stroke-width="1.8" points="{}"/>"#,
                pts.join(" ")
            );
            for (x, y) in seg {
                let _ = writeln!(out, r#"<circle cx="{x:.2}" cy="{y:.2}" r="2.5" fill="{colour}"/>"#);
            }
        }
    }
    if series.len() > 1 {
        for (i, s) in series.iter().enumerate() {
            let y = TOP + 14.0 + 16.0 * i as f64;
            let x = LEFT + pw - 150.0;
            let colour = PALETTE[i % PALETTE.len()];
            let _ = writeln!(out, r#"<line x1="{x:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="{colour}" stroke-width="2"/>"#, x + 20.0);
            let _ = writeln!(out, r#"<text x="{:.2}" y="{:.2}">{}</text>"#, x + 26.0, y + 4.0, escape(&s.label));
        }
    }
    let _ = writeln!(out, r#"<text x="{:.2}" y="24" text-anchor="middle" font-size="14">{}</text>"#, WIDTH / 2.0, escape(&spec.title));
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        LEFT + pw / 2.0,
        HEIGHT - 12.0,
        escape(&spec.x_label)
    );
    let _ = writeln!(
        out,
        r#"<text x="18" y="{:.2}" text-anchor="middle" transform="rotate(-90 18 {:.2})">{}</text>"#,
        TOP + ph / 2.0,
        TOP + ph / 2.0,
        escape(&spec.y_label)
    );
    out.push_str("</svg>\n");
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line() -> Vec<Series> {
        vec![Series { label: "y".into(), points: (1..=10).map(|i| (i as f64, (i * i) as f64)).collect() }]
    }

    #[test]
    fn output_is_deterministic() {
        let spec = PlotSpec { title: "t".into(), ..PlotSpec::default() };
        assert_eq!(render(&spec, &line()).unwrap(), render(&spec, &line()).unwrap());
    }

    #[test]
    fn shading_and_log_axes() {
        let xs: Vec<f64> = (1..=5).map(|i| i as f64).collect();
        let iv = flag_intervals(&xs, &[true, true, false, false, true], false);
        assert_eq!(iv, vec![(1.0, 2.5), (4.5, 5.0)]);
        let spec = PlotSpec { log_x: true, log_y: true, shaded: iv, ..PlotSpec::default() };
        let svg = render(&spec, &line()).unwrap();
        assert_eq!(svg.matches("class=\"flagged\"").count(), 2);
        assert!(svg.starts_with("<svg") && svg.ends_with("</svg>\n"));
    }

    #[test]
    fn gaps_split_the_line() {
        let s = vec![Series { label: "y".into(), points: vec![(1.0, 1.0), (2.0, f64::NAN), (3.0, 2.0), (4.0, 3.0)] }];
        let svg = render(&PlotSpec::default(), &s).unwrap();
        assert_eq!(svg.matches("<polyline").count(), 2);
        let empty = vec![Series { label: "y".into(), points: vec![(1.0, f64::NAN)] }];
        assert!(render(&PlotSpec::default(), &empty).is_err());
    }

    #[test]
    fn tick_labels() {
        assert_eq!(format_number(0.25), "0.25");
        assert_eq!(format_number(20.0), "20");
        assert_eq!(format_number(1e-7), "1.00e-7");
        let labels: Vec<String> = linear_ticks(0.0, 1.0).into_iter().map(format_number).collect();
        assert_eq!(labels, ["0", "0.2", "0.4", "0.6", "0.8", "1"]);
    }
}
