//! Minimal SVG figures: spectra with thresholds, SSO diagrams and SNR curves.

use std::f64::consts::PI;
use std::fmt::Write;

use num_complex::Complex64;

use crate::chirpsep::{ChirpEstimate, EstimateStatus, SsoDiagram};
use crate::error::Result;
use crate::filters::KernelConfig;
use crate::synth::SampleSeries;
use crate::unirec::SpectrumOperator;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 440.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 36.0;
const BOTTOM: f64 = 50.0;

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

/// A plot area mapping data coordinates to pixels.
#[derive(Debug, Clone)]
pub struct Figure {
    pub x_range: (f64, f64),
    pub y_range: (f64, f64),
    pub log_y: bool,
    body: String,
    title: String,
    x_label: String,
    y_label: String,
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn padded(lo: f64, hi: f64) -> (f64, f64) {
    if hi > lo {
        (lo, hi)
    } else {
        (lo - 0.5, lo + 0.5)
    }
}

impl Figure {
    pub fn new(title: &str, x_label: &str, y_label: &str, x_range: (f64, f64), y_range: (f64, f64)) -> Self {
        Figure {
            x_range: padded(x_range.0, x_range.1),
            y_range: padded(y_range.0, y_range.1),
            log_y: false,
            body: String::new(),
            title: title.into(),
            x_label: x_label.into(),
            y_label: y_label.into(),
        }
    }

    /// Log-scaled y axis; the range is given in data units and must be positive.
    pub fn with_log_y(mut self) -> Self {
        self.log_y = true;
        let lo = self.y_range.0.max(1e-300).log10();
        let hi = self.y_range.1.max(1e-300).log10();
        self.y_range = padded(lo.floor(), hi.ceil());
        self
    }

    /// Pixel position of a data point.
    pub fn map(&self, x: f64, y: f64) -> (f64, f64) {
        let y = if self.log_y { y.max(1e-300).log10() } else { y };
        let fx = (x - self.x_range.0) / (self.x_range.1 - self.x_range.0);
        let fy = (y - self.y_range.0) / (self.y_range.1 - self.y_range.0);
        (LEFT + fx * (WIDTH - LEFT - RIGHT), HEIGHT - BOTTOM - fy * (HEIGHT - TOP - BOTTOM))
    }

    pub fn polyline(&mut self, pts: &[(f64, f64)], color: &str, width: f64, dashed: bool) {
        if pts.is_empty() {
            return;
        }
        let mut d = String::new();
        for (k, &(x, y)) in pts.iter().enumerate() {
            let (px, py) = self.map(x, y);
            let _ = write!(d, "{}{px:.2},{py:.2}", if k == 0 { "M" } else { " L" });
        }
        let dash = if dashed { r#" stroke-dasharray="6 4""# } else { "" };
        let _ = writeln!(self.body, r#"<path d="{d}" fill="none" stroke="{color}" stroke-width="{width}"{dash}/>"#);
    }

    pub fn marker(&mut self, x: f64, y: f64, r: f64, color: &str) {
        let (px, py) = self.map(x, y);
        let _ = writeln!(self.body, r#"<circle cx="{px:.2}" cy="{py:.2}" r="{r}" fill="{color}"/>"#);
    }

    pub fn legend(&mut self, row: usize, label: &str, color: &str) {
        let x = WIDTH - RIGHT - 170.0;
        let y = TOP + 14.0 + 16.0 * row as f64;
        let _ = writeln!(
            self.body,
            r#"<line x1="{x}" y1="{y}" x2="{}" y2="{y}" stroke="{color}" stroke-width="2"/><text x="{}" y="{}" font-size="11">{}</text>"#,
            x + 18.0,
            x + 24.0,
            y + 4.0,
            esc(label)
        );
    }

    fn ticks(lo: f64, hi: f64) -> Vec<f64> {
        let span = hi - lo;
        let raw = span / 5.0;
        let mag = 10f64.powf(raw.log10().floor());
        let step = [1.0, 2.0, 5.0, 10.0].iter().map(|m| m * mag).find(|s| span / s <= 6.0).unwrap_or(10.0 * mag);
        let mut v = Vec::new();
        let mut t = (lo / step).ceil() * step;
        while t <= hi + 1e-9 * step {
            v.push(t);
            t += step;
        }
        v
    }

    pub fn finish(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif">"#
        );
        let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
        let (right, bottom) = (WIDTH - RIGHT, HEIGHT - BOTTOM);
        let _ = writeln!(
            s,
            r#"<rect x="{LEFT}" y="{TOP}" width="{}" height="{}" fill="none" stroke="black"/>"#,
            right - LEFT,
            bottom - TOP
        );
        for t in Self::ticks(self.x_range.0, self.x_range.1) {
            let px = self.map(t, 0.0).0;
            let _ = writeln!(
                s,
                r#"<line x1="{px:.2}" y1="{bottom}" x2="{px:.2}" y2="{}" stroke="black"/><text x="{px:.2}" y="{}" font-size="11" text-anchor="middle">{}</text>"#,
                bottom + 5.0,
                bottom + 18.0,
                tick_label(t)
            );
        }
        for t in Self::ticks(self.y_range.0, self.y_range.1) {
            let py = HEIGHT - BOTTOM - (t - self.y_range.0) / (self.y_range.1 - self.y_range.0) * (HEIGHT - TOP - BOTTOM);
            let label = if self.log_y { format!("1e{}", t.round() as i64) } else { tick_label(t) };
            let _ = writeln!(
                s,
                r#"<line x1="{}" y1="{py:.2}" x2="{LEFT}" y2="{py:.2}" stroke="black"/><text x="{}" y="{:.2}" font-size="11" text-anchor="end">{label}</text>"#,
                LEFT - 5.0,
                LEFT - 8.0,
                py + 4.0
            );
        }
        let _ = writeln!(s, r#"<clipPath id="area"><rect x="{LEFT}" y="{TOP}" width="{}" height="{}"/></clipPath>"#, right - LEFT, bottom - TOP);
        let _ = writeln!(s, r#"<g clip-path="url(#area)">"#);
        s.push_str(&self.body);
        s.push_str("</g>\n");
        let _ = writeln!(s, r#"<text x="{}" y="22" font-size="14" text-anchor="middle">{}</text>"#, WIDTH / 2.0, esc(&self.title));
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" font-size="12" text-anchor="middle">{}</text>"#,
            (LEFT + right) / 2.0,
            HEIGHT - 12.0,
            esc(&self.x_label)
        );
        let _ = writeln!(
            s,
            r#"<text x="16" y="{0}" font-size="12" text-anchor="middle" transform="rotate(-90 16 {0})">{1}</text>"#,
            (TOP + bottom) / 2.0,
            esc(&self.y_label)
        );
        s.push_str("</svg>\n");
        s
    }
}

fn tick_label(t: f64) -> String {
    if t == 0.0 {
        return "0".into();
    }
    let a = t.abs();
    if (1e-3..1e4).contains(&a) {
        let s = format!("{t:.3}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        format!("{t:.1e}")
    }
}

/// Keeps the min and max of each of `buckets` consecutive runs so long
/// curves stay visually exact with bounded output size.
fn decimate(x: &[f64], y: &[f64], buckets: usize) -> Vec<(f64, f64)> {
    if x.len() <= 2 * buckets {
        return x.iter().copied().zip(y.iter().copied()).collect();
    }
    let per = x.len().div_ceil(buckets);
    let mut out = Vec::with_capacity(2 * buckets);
    for start in (0..x.len()).step_by(per) {
        let end = (start + per).min(x.len());
        let (mut lo, mut hi) = (start, start);
        for j in start..end {
            if y[j] < y[lo] {
                lo = j;
            }
            if y[j] > y[hi] {
                hi = j;
            }
        }
        let (a, b) = if lo <= hi { (lo, hi) } else { (hi, lo) };
        out.push((x[a], y[a]));
        if b != a {
            out.push((x[b], y[b]));
        }
    }
    out
}

/// `|sigma|` over `x`, the threshold line and markers at `peaks` (x, height).
pub fn spectrum_figure(x: &[f64], magnitudes: &[f64], tau: Option<f64>, peaks: &[(f64, f64)], title: &str) -> Figure {
    let top = magnitudes.iter().cloned().fold(0.0, f64::max).max(tau.unwrap_or(0.0)) * 1.05;
    let lo = x.first().copied().unwrap_or(-PI);
    let mut hi = x.last().copied().unwrap_or(PI);
    if x.len() > 1 {
        // a full circular grid stops one step short of pi
        let step = (hi - lo) / (x.len() - 1) as f64;
        if (hi + step - lo - 2.0 * PI).abs() < 1e-9 {
            hi += step;
        }
    }
    let mut fig = Figure::new(title, "x", "|sigma|", (lo, hi), (0.0, top.max(1e-12)));
    fig.polyline(&decimate(x, magnitudes, 1500), PALETTE[0], 1.2, false);
    if let Some(t) = tau {
        fig.polyline(&[(lo, t), (hi, t)], PALETTE[1], 1.0, true);
        fig.legend(1, "threshold", PALETTE[1]);
    }
    for &(px, py) in peaks {
        fig.marker(px, py, 3.5, PALETTE[1]);
    }
    fig.legend(0, "|sigma|", PALETTE[0]);
    fig
}

pub fn spectrum_svg(x: &[f64], magnitudes: &[f64], tau: Option<f64>, peaks: &[(f64, f64)], title: &str) -> String {
    spectrum_figure(x, magnitudes, tau, peaks, title).finish()
}

/// Spectrum of a unit tone at 0, i.e. the kernel itself, with its peak marked.
pub fn kernel_figure(kernel: &KernelConfig) -> Result<Figure> {
    let n = kernel.n();
    let series = SampleSeries::moments(n, vec![Complex64::new(1.0, 0.0); 2 * n - 1])?;
    let ps = SpectrumOperator::new(kernel.clone()).apply(&series)?;
    let mags = ps.magnitudes();
    let peak = mags[ps.grid_size() / 2];
    Ok(spectrum_figure(&ps.grid(), &mags, None, &[(0.0, peak)], &format!("kernel, n = {n}")))
}

/// Diagram scatter with fitted lines over their active intervals.
pub fn diagram_svg(diagram: &SsoDiagram, estimates: &[ChirpEstimate], window: f64) -> String {
    let lam = diagram.points.iter().map(|p| p.lambda);
    let (mut lo, mut hi) = lam.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    for e in estimates {
        lo = lo.min(e.omega.min(e.inst_freq(e.end())));
        hi = hi.max(e.omega.max(e.inst_freq(e.end())));
    }
    if !lo.is_finite() {
        (lo, hi) = (0.0, 1.0);
    }
    let pad = 0.05 * (hi - lo).max(1.0);
    let mut fig = Figure::new("SSO diagram", "t (s)", "Lambda (rad/s)", (0.0, window), (lo - pad, hi + pad));
    let wmax = diagram.points.iter().map(|p| p.weight).fold(0.0, f64::max);
    let mut dots = String::new();
    for p in &diagram.points {
        let (px, py) = fig.map(p.t, p.lambda);
        let a = if wmax > 0.0 { 0.15 + 0.85 * p.weight / wmax } else { 1.0 };
        let _ = writeln!(dots, r##"<circle cx="{px:.2}" cy="{py:.2}" r="1.2" fill="#555" fill-opacity="{a:.2}"/>"##);
    }
    fig.body.push_str(&dots);
    for (k, e) in estimates.iter().enumerate() {
        if e.status == EstimateStatus::Rejected {
            continue;
        }
        let color = PALETTE[1 + k % (PALETTE.len() - 1)];
        fig.polyline(&[(e.gamma, e.omega), (e.end(), e.inst_freq(e.end()))], color, 2.0, false);
    }
    fig.finish()
}

/// One labeled curve of (SNR, RMSE) points.
#[derive(Debug, Clone)]
pub struct Curve {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

/// RMSE against SNR, log-scaled when every value is positive.
pub fn curves_svg(curves: &[Curve], title: &str) -> String {
    let all: Vec<(f64, f64)> = curves.iter().flat_map(|c| c.points.iter().copied()).filter(|p| p.1.is_finite()).collect();
    let xr = all.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.0), b.max(p.0)));
    let yr = all.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.1), b.max(p.1)));
    let (xr, yr) = if all.is_empty() { ((0.0, 1.0), (0.0, 1.0)) } else { (xr, yr) };
    let mut fig = Figure::new(title, "SNR (dB)", "RMSE", xr, yr);
    if yr.0 > 0.0 {
        fig = fig.with_log_y();
    }
    for (k, c) in curves.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let pts: Vec<(f64, f64)> = c.points.iter().copied().filter(|p| p.1.is_finite()).collect();
        fig.polyline(&pts, color, 1.8, false);
        for &(x, y) in &pts {
            fig.marker(x, y, 3.0, color);
        }
        fig.legend(k, &c.label, color);
    }
    fig.finish()
}
