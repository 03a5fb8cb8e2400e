// SPDX-License-Identifier: Apache-2.0

//! Self-contained SVG figures: BER profiles, CDFs, shift/spread bars,
//! correlation versus distance, and correlation heatmaps.

use std::fmt::Write;

use thiserror::Error;

use crate::diagnosis::{CorrelationCurve, HeatmapGrid};
use crate::report::Report;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RenderError {
    #[error("nothing to render: {0}")]
    EmptyGrid(&'static str),
}

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 440.0;
const LEFT: f64 = 70.0;
const TOP: f64 = 40.0;
const PLOT_W: f64 = 470.0;
const PLOT_H: f64 = 330.0;

const PALETTE: [&str; 10] =
    ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn header(out: &mut String, w: f64, h: f64, title: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect x="0" y="0" width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="22" text-anchor="middle" font-size="15">{}</text>"#,
        w / 2.0,
        escape(title)
    );
}

/// Maps `r` in [-1, 1] onto blue, white, red.
pub fn diverging_color(r: f64) -> String {
    let t = r.clamp(-1.0, 1.0);
    let (red, green, blue) = if t < 0.0 {
        let a = 1.0 + t;
        (a, a, 1.0)
    } else {
        (1.0, 1.0 - t, 1.0 - t)
    };
    let c = |v: f64| (v * 255.0).round() as u8;
    format!("#{:02x}{:02x}{:02x}", c(red), c(green), c(blue))
}

struct Frame {
    x: (f64, f64),
    y: (f64, f64),
}

impl Frame {
    fn new(x: (f64, f64), y: (f64, f64)) -> Self {
        let widen = |(a, b): (f64, f64)| if b > a { (a, b) } else { (a - 0.5, a + 0.5) };
        Frame { x: widen(x), y: widen(y) }
    }

    fn px(&self, v: f64) -> f64 {
        LEFT + (v - self.x.0) / (self.x.1 - self.x.0) * PLOT_W
    }

    fn py(&self, v: f64) -> f64 {
        TOP + PLOT_H - (v - self.y.0) / (self.y.1 - self.y.0) * PLOT_H
    }

    fn axes(&self, out: &mut String, xlabel: &str, ylabel: &str) {
        let (x0, y0, x1, y1) = (LEFT, TOP + PLOT_H, LEFT + PLOT_W, TOP);
        let _ = writeln!(out, r##"<rect x="{x0}" y="{y1}" width="{PLOT_W}" height="{PLOT_H}" fill="none" stroke="#333"/>"##);
        for i in 0..=5 {
            let f = i as f64 / 5.0;
            let xv = self.x.0 + f * (self.x.1 - self.x.0);
            let yv = self.y.0 + f * (self.y.1 - self.y.0);
            let (xp, yp) = (self.px(xv), self.py(yv));
            let _ = writeln!(
                out,
                r##"<line x1="{xp:.1}" y1="{y0}" x2="{xp:.1}" y2="{:.1}" stroke="#333"/><text x="{xp:.1}" y="{:.1}" text-anchor="middle">{}</text>"##,
                y0 + 5.0,
                y0 + 18.0,
                tick(xv)
            );
            let _ = writeln!(
                out,
                r##"<line x1="{:.1}" y1="{yp:.1}" x2="{x0}" y2="{yp:.1}" stroke="#333"/><text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"##,
                x0 - 5.0,
                x0 - 8.0,
                yp + 4.0,
                tick(yv)
            );
        }
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            (x0 + x1) / 2.0,
            y0 + 38.0,
            escape(xlabel)
        );
        let _ = writeln!(
            out,
            r#"<text x="18" y="{:.1}" text-anchor="middle" transform="rotate(-90 18 {:.1})">{}</text>"#,
            (y0 + y1) / 2.0,
            (y0 + y1) / 2.0,
            escape(ylabel)
        );
    }

    fn polyline(&self, out: &mut String, pts: &[(f64, f64)], color: &str, dashed: bool) {
        let d: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.2},{:.2}", self.px(x), self.py(y))).collect();
        let dash = if dashed { r#" stroke-dasharray="5,3""# } else { "" };
        let _ = writeln!(
            out,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"{dash}/>"#,
            d.join(" ")
        );
    }
}

fn tick(v: f64) -> String {
    let s = format!("{v:.2}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" { "0".into() } else { s.into() }
}

fn legend(out: &mut String, entries: &[(String, String, bool)]) {
    let x = LEFT + PLOT_W + 20.0;
    for (i, (label, color, dashed)) in entries.iter().enumerate().take(24) {
        let y = TOP + 10.0 + i as f64 * 16.0;
        let dash = if *dashed { r#" stroke-dasharray="5,3""# } else { "" };
        let _ = writeln!(
            out,
            r#"<line x1="{x}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="{color}" stroke-width="2"{dash}/><text x="{:.1}" y="{:.1}">{}</text>"#,
            x + 20.0,
            x + 26.0,
            y + 4.0,
            escape(label)
        );
    }
}

/// One curve of a line chart; dashed curves are drawn as references.
#[derive(Clone, Debug, PartialEq)]
pub struct Series {
    pub label: String,
    pub values: Vec<f64>,
    pub dashed: bool,
}

fn line_chart(title: &str, xlabel: &str, ylabel: &str, xs: &[f64], series: &[Series]) -> Result<String, RenderError> {
    let series: Vec<&Series> = series.iter().filter(|s| !s.values.is_empty()).collect();
    if xs.is_empty() || series.is_empty() {
        return Err(RenderError::EmptyGrid("line chart has no points"));
    }
    let frame = Frame::new((xs[0], xs[xs.len() - 1]), (0.0, 1.0));
    let mut out = String::new();
    header(&mut out, WIDTH, HEIGHT, title);
    frame.axes(&mut out, xlabel, ylabel);
    let mut entries = Vec::new();
    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<(f64, f64)> = xs.iter().copied().zip(s.values.iter().copied()).collect();
        frame.polyline(&mut out, &pts, color, s.dashed);
        entries.push((s.label.clone(), color.to_string(), s.dashed));
    }
    legend(&mut out, &entries);
    out.push_str("</svg>\n");
    Ok(out)
}

/// BER versus sampling phase.
pub fn render_profiles_svg(title: &str, phases: &[f64], series: &[Series]) -> Result<String, RenderError> {
    line_chart(title, "sampling phase (ps)", "BER", phases, series)
}

/// Empirical CDF `F = 1 - BER` versus sampling phase; takes BER series.
pub fn render_cdf_svg(title: &str, phases: &[f64], ber_series: &[Series]) -> Result<String, RenderError> {
    let cdfs: Vec<Series> = ber_series
        .iter()
        .map(|s| Series { values: s.values.iter().map(|b| (1.0 - b).clamp(0.0, 1.0)).collect(), ..s.clone() })
        .collect();
    line_chart(title, "delay (ps)", "F(t)", phases, &cdfs)
}

/// Per-tap mean shift and spread change, both in picoseconds.
pub fn render_delta_chart_svg(
    title: &str,
    labels: &[String],
    delta_mu: &[f64],
    delta_sigma: &[f64],
) -> Result<String, RenderError> {
    let n = labels.len().min(delta_mu.len()).min(delta_sigma.len());
    if n == 0 {
        return Err(RenderError::EmptyGrid("no taps with deltas"));
    }
    let all = delta_mu[..n].iter().chain(&delta_sigma[..n]);
    let lo = all.clone().copied().fold(0.0, f64::min);
    let hi = all.copied().fold(0.0, f64::max);
    let frame = Frame::new((0.0, n as f64), (lo, if hi > lo { hi } else { lo + 1.0 }));
    let mut out = String::new();
    header(&mut out, WIDTH, HEIGHT, title);
    frame.axes(&mut out, "tap", "ps");
    let zero = frame.py(0.0);
    let _ = writeln!(out, r##"<line x1="{LEFT}" y1="{zero:.1}" x2="{:.1}" y2="{zero:.1}" stroke="#999"/>"##, LEFT + PLOT_W);
    let slot = PLOT_W / n as f64;
    let bar = slot * 0.35;
    for i in 0..n {
        let x = frame.px(i as f64) + slot * 0.15;
        for (j, (v, color)) in [(delta_mu[i], PALETTE[0]), (delta_sigma[i], PALETTE[1])].into_iter().enumerate() {
            let y = frame.py(v);
            let _ = writeln!(
                out,
                r#"<rect x="{:.2}" y="{:.2}" width="{bar:.2}" height="{:.2}" fill="{color}"/>"#,
                x + j as f64 * bar,
                y.min(zero),
                (y - zero).abs()
            );
        }
        if n <= 40 {
            let _ = writeln!(
                out,
                r#"<text x="{:.2}" y="{:.1}" text-anchor="middle" font-size="9">{}</text>"#,
                x + bar,
                TOP + PLOT_H + 30.0,
                escape(&labels[i])
            );
        }
    }
    legend(
        &mut out,
        &[("delta mu".into(), PALETTE[0].into(), false), ("delta sigma".into(), PALETTE[1].into(), false)],
    );
    out.push_str("</svg>\n");
    Ok(out)
}

/// Pairwise correlation versus distance with binned means and the fitted decay.
pub fn render_correlation_svg(title: &str, curve: &CorrelationCurve) -> Result<String, RenderError> {
    if curve.pairs.is_empty() {
        return Err(RenderError::EmptyGrid("no correlation pairs"));
    }
    let dmax = curve.pairs.iter().map(|p| p.distance).fold(0.0, f64::max).ceil().max(1.0);
    let frame = Frame::new((0.0, dmax), (-1.0, 1.0));
    let mut out = String::new();
    header(&mut out, WIDTH, HEIGHT, title);
    frame.axes(&mut out, "distance (CLB)", "Pearson r");
    for p in &curve.pairs {
        let _ = writeln!(
            out,
            r##"<circle cx="{:.2}" cy="{:.2}" r="2" fill="#7f7f7f" fill-opacity="0.6"/>"##,
            frame.px(p.distance),
            frame.py(p.r)
        );
    }
    let binned: Vec<(f64, f64)> =
        curve.bins.iter().map(|b| ((b.distance_lo + b.distance_hi) / 2.0, b.mean_r)).collect();
    frame.polyline(&mut out, &binned, PALETTE[0], false);
    let fit: Vec<(f64, f64)> = (0..=100)
        .map(|i| {
            let d = dmax * i as f64 / 100.0;
            (d, (-d / curve.decay_length).exp())
        })
        .collect();
    frame.polyline(&mut out, &fit, PALETTE[3], true);
    legend(
        &mut out,
        &[
            ("binned mean".into(), PALETTE[0].into(), false),
            (format!("exp(-d/{:.2})", curve.decay_length), PALETTE[3].into(), true),
        ],
    );
    out.push_str("</svg>\n");
    Ok(out)
}

/// Correlation of every instrumented site against the reference monitor.
pub fn render_heatmap_svg(title: &str, grid: &HeatmapGrid) -> Result<String, RenderError> {
    if grid.cells.is_empty() || grid.width == 0 || grid.height == 0 {
        return Err(RenderError::EmptyGrid("heatmap has no instrumented cells"));
    }
    let cell = (460.0 / grid.width as f64).min(330.0 / grid.height as f64).min(60.0);
    let (ox, oy) = (40.0, 50.0);
    let w = ox + cell * grid.width as f64 + 140.0;
    let h = (oy + cell * grid.height as f64 + 40.0).max(300.0);
    let mut out = String::new();
    header(&mut out, w, h, title);
    let _ = writeln!(
        out,
        r##"<rect x="{ox}" y="{oy}" width="{:.2}" height="{:.2}" fill="#eeeeee" stroke="#333"/>"##,
        cell * grid.width as f64,
        cell * grid.height as f64
    );
    // Row 0 is drawn at the bottom.
    let y_of = |row: u32| oy + cell * (grid.height - 1 - row) as f64;
    for c in &grid.cells {
        let (x, y) = (ox + cell * c.position.col as f64, y_of(c.position.row));
        let (fill, text) = match c.r {
            Some(r) => (diverging_color(r), format!("{r:.2}")),
            None => ("#bbbbbb".to_string(), "n/a".to_string()),
        };
        let _ = writeln!(
            out,
            r##"<rect x="{x:.2}" y="{y:.2}" width="{cell:.2}" height="{cell:.2}" fill="{fill}" stroke="#666"><title>{} r={text}</title></rect>"##,
            c.dme_id
        );
        if cell >= 28.0 {
            let _ = writeln!(
                out,
                r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" font-size="10">{text}</text>"#,
                x + cell / 2.0,
                y + cell / 2.0 + 4.0
            );
        }
    }
    let (rx, ry) = (ox + cell * grid.reference_position.col as f64, y_of(grid.reference_position.row));
    let _ = writeln!(
        out,
        r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="none" stroke="black" stroke-width="3"><title>reference {}</title></rect>"#,
        rx + 1.5,
        ry + 1.5,
        cell - 3.0,
        cell - 3.0,
        grid.reference
    );

    // Vertical colour bar from r = 1 (top) to r = -1 (bottom).
    let bx = ox + cell * grid.width as f64 + 40.0;
    let (by, bh) = (oy, 200.0);
    let _ = writeln!(
        out,
        r#"<defs><linearGradient id="scale" x1="0" y1="0" x2="0" y2="1"><stop offset="0" stop-color="{}"/><stop offset="0.5" stop-color="{}"/><stop offset="1" stop-color="{}"/></linearGradient></defs>"#,
        diverging_color(1.0),
        diverging_color(0.0),
        diverging_color(-1.0)
    );
    let _ = writeln!(out, r##"<rect x="{bx:.2}" y="{by}" width="18" height="{bh}" fill="url(#scale)" stroke="#333"/>"##);
    for (v, frac) in [(1.0, 0.0), (0.5, 0.25), (0.0, 0.5), (-0.5, 0.75), (-1.0, 1.0)] {
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}">{}</text>"#,
            bx + 24.0,
            by + frac * bh + 4.0,
            tick(v)
        );
    }
    let _ = writeln!(out, r#"<text x="{bx:.2}" y="{:.2}">Pearson r</text>"#, by + bh + 20.0);
    out.push_str("</svg>\n");
    Ok(out)
}

fn file_stem(name: &str) -> String {
    name.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).collect()
}

/// Every figure a report supports, as (file name, document).
pub fn render_report(report: &Report) -> Vec<(String, Result<String, RenderError>)> {
    let phases = report.phase_grid.times();
    let reference = report.conditions.first();
    let mut out = Vec::new();
    for c in &report.conditions {
        let stem = file_stem(&c.name);
        let series: Vec<Series> = c
            .taps
            .iter()
            .filter(|t| !t.ber.is_empty())
            .map(|t| Series { label: t.label.clone(), values: t.ber.clone(), dashed: false })
            .collect();
        if series.is_empty() {
            continue;
        }
        out.push((format!("profiles_{stem}.svg"), render_profiles_svg(&format!("BER profiles: {}", c.name), &phases, &series)));
        let mut cdf = series.clone();
        if let Some(r) = reference.filter(|r| r.config_state_id != c.config_state_id) {
            cdf.extend(r.taps.iter().filter(|t| !t.ber.is_empty()).map(|t| Series {
                label: format!("{} {}", t.label, r.name),
                values: t.ber.clone(),
                dashed: true,
            }));
        }
        out.push((format!("cdf_{stem}.svg"), render_cdf_svg(&format!("CDF: {}", c.name), &phases, &cdf)));
        let with_delta: Vec<_> = c.taps.iter().filter_map(|t| t.delta.map(|d| (t.label.clone(), d))).collect();
        if !with_delta.is_empty() {
            let labels: Vec<String> = with_delta.iter().map(|(l, _)| l.clone()).collect();
            let mu: Vec<f64> = with_delta.iter().map(|(_, d)| d.delta_mu).collect();
            let sigma: Vec<f64> = with_delta.iter().map(|(_, d)| d.delta_sigma).collect();
            out.push((
                format!("delta_{stem}.svg"),
                render_delta_chart_svg(&format!("Shift and spread: {}", c.name), &labels, &mu, &sigma),
            ));
        }
        if let Some(curve) = &c.spatial.curve {
            out.push((
                format!("correlation_{stem}.svg"),
                render_correlation_svg(&format!("Correlation vs distance: {}", c.name), curve),
            ));
        }
        if let Some(h) = &c.spatial.heatmap {
            out.push((format!("heatmap_{stem}.svg"), render_heatmap_svg(&format!("Correlation heatmap: {}", c.name), h)));
        }
    }
    out
}
