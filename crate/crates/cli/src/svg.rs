//! Self-contained SVG plots with deterministic output.

use std::fmt::Write;

/// Fixed 20-color cycle for group colors.
pub const PALETTE: [&str; 20] = [
    "#1f77b4", "#aec7e8", "#ff7f0e", "#ffbb78", "#2ca02c", "#98df8a", "#d62728", "#ff9896",
    "#9467bd", "#c5b0d5", "#8c564b", "#c49c94", "#e377c2", "#f7b6d2", "#7f7f7f", "#c7c7c7",
    "#bcbd22", "#dbdb8d", "#17becf", "#9edae5",
];

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 540.0;
const MARGIN: f64 = 60.0;
const LEGEND_WIDTH: f64 = 150.0;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn header(out: &mut String, title: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="24" text-anchor="middle" font-size="15">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
}

/// Linear map from a data interval onto a pixel interval; flat data is centered.
struct Axis {
    lo: f64,
    hi: f64,
    p0: f64,
    p1: f64,
}

impl Axis {
    fn new(values: impl Iterator<Item = f64>, p0: f64, p1: f64) -> Self {
        let (mut lo, mut hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| {
            (l.min(v), h.max(v))
        });
        if !lo.is_finite() {
            (lo, hi) = (0.0, 1.0);
        }
        if hi - lo < 1e-12 {
            lo -= 0.5;
            hi += 0.5;
        }
        let pad = 0.05 * (hi - lo);
        Self {
            lo: lo - pad,
            hi: hi + pad,
            p0,
            p1,
        }
    }

    fn map(&self, v: f64) -> f64 {
        self.p0 + (v - self.lo) / (self.hi - self.lo) * (self.p1 - self.p0)
    }

    /// About five round tick values inside the range.
    fn ticks(&self) -> Vec<f64> {
        let raw = (self.hi - self.lo) / 5.0;
        let mag = 10f64.powf(raw.log10().floor());
        let step = [1.0, 2.0, 5.0, 10.0]
            .iter()
            .map(|m| m * mag)
            .find(|s| *s >= raw)
            .unwrap_or(10.0 * mag);
        let mut t = (self.lo / step).ceil() * step;
        let mut out = Vec::new();
        while t <= self.hi + 1e-12 {
            out.push(if t.abs() < step * 1e-9 { 0.0 } else { t });
            t += step;
        }
        out
    }
}

fn tick_label(v: f64) -> String {
    let s = format!("{v:.3}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" { "0".into() } else { s.to_string() }
}

fn frame(out: &mut String, x: &Axis, y: &Axis, x_label: &str, y_label: &str, x_ticks: &[(f64, String)]) {
    let (left, right, top, bottom) = (x.p0, x.p1, y.p1, y.p0);
    let _ = writeln!(
        out,
        r##"<rect x="{left:.1}" y="{top:.1}" width="{:.1}" height="{:.1}" fill="none" stroke="#333"/>"##,
        right - left,
        bottom - top
    );
    for t in y.ticks() {
        let py = y.map(t);
        let _ = writeln!(
            out,
            r##"<line x1="{:.1}" y1="{py:.1}" x2="{left:.1}" y2="{py:.1}" stroke="#333"/><text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"##,
            left - 5.0,
            left - 8.0,
            py + 4.0,
            tick_label(t)
        );
    }
    for (t, label) in x_ticks {
        let px = x.map(*t);
        let _ = writeln!(
            out,
            r##"<line x1="{px:.1}" y1="{bottom:.1}" x2="{px:.1}" y2="{:.1}" stroke="#333"/><text x="{px:.1}" y="{:.1}" text-anchor="middle">{}</text>"##,
            bottom + 5.0,
            bottom + 18.0,
            escape(label)
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
        (left + right) / 2.0,
        bottom + 38.0,
        escape(x_label)
    );
    let cy = (top + bottom) / 2.0;
    let _ = writeln!(
        out,
        r#"<text x="16" y="{cy:.1}" text-anchor="middle" transform="rotate(-90 16 {cy:.1})">{}</text>"#,
        escape(y_label)
    );
}

fn legend_entry(out: &mut String, row: usize, swatch: &str, label: &str) {
    let _ = writeln!(
        out,
        r#"<g class="legend">{swatch}<text x="{:.1}" y="{:.1}">{}</text></g>"#,
        WIDTH - LEGEND_WIDTH + 28.0,
        MARGIN + 16.0 * row as f64 + 4.0,
        escape(label)
    );
}

fn circle_swatch(row: usize, color: &str) -> String {
    let x = WIDTH - LEGEND_WIDTH + 14.0;
    let y = MARGIN + 16.0 * row as f64;
    format!(r#"<circle cx="{x:.1}" cy="{y:.1}" r="5" fill="{color}"/>"#)
}

fn line_swatch(row: usize, color: &str, dash: &str) -> String {
    let x = WIDTH - LEGEND_WIDTH + 6.0;
    let y = MARGIN + 16.0 * row as f64;
    format!(
        r#"<line x1="{x:.1}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="{color}" stroke-width="2"{dash}/>"#,
        x + 16.0
    )
}

fn rect_swatch(row: usize, color: &str) -> String {
    let x = WIDTH - LEGEND_WIDTH + 9.0;
    let y = MARGIN + 16.0 * row as f64 - 5.0;
    format!(r#"<rect x="{x:.1}" y="{y:.1}" width="10" height="10" fill="{color}"/>"#)
}

/// One point per company. `groups` gives a color index per point and the
/// legend label of each index; without groups every point is drawn in the
/// first palette color.
pub fn scatter(title: &str, points: &[(f64, f64)], groups: Option<(&[usize], &[String])>) -> String {
    let mut out = String::new();
    header(&mut out, title);
    let x = Axis::new(points.iter().map(|p| p.0), MARGIN, WIDTH - LEGEND_WIDTH - 10.0);
    let y = Axis::new(points.iter().map(|p| p.1), HEIGHT - MARGIN, MARGIN);
    let x_ticks: Vec<(f64, String)> = x.ticks().into_iter().map(|t| (t, tick_label(t))).collect();
    frame(&mut out, &x, &y, "dimension 1", "dimension 2", &x_ticks);
    for (i, &(px, py)) in points.iter().enumerate() {
        let color = groups.map_or(PALETTE[0], |(labels, _)| PALETTE[labels[i] % PALETTE.len()]);
        let _ = writeln!(
            out,
            r#"<circle cx="{:.2}" cy="{:.2}" r="3.5" fill="{color}" fill-opacity="0.85"/>"#,
            x.map(px),
            y.map(py)
        );
    }
    if let Some((_, names)) = groups {
        for (row, name) in names.iter().enumerate() {
            legend_entry(&mut out, row, &circle_swatch(row, PALETTE[row % PALETTE.len()]), name);
        }
    }
    out.push_str("</svg>\n");
    out
}

/// Values for the Sharpe-versus-group-count chart.
#[derive(Debug, Clone, Default)]
pub struct SharpeChart {
    /// (g, TS_g Sharpe, RND_g Sharpe) per group count; either may be absent.
    pub by_g: Vec<(usize, Option<f64>, Option<f64>)>,
    pub mw_full: Option<f64>,
    pub n_full: Option<f64>,
    pub tr2: Option<f64>,
    pub tr4: Option<f64>,
}

/// Dots for TS_g (orange) and RND_g (gray), bars for TS_g minus RND_g (blue
/// when positive, red when negative) and horizontal benchmark lines.
pub fn sharpe_chart(title: &str, data: &SharpeChart) -> String {
    let mut out = String::new();
    header(&mut out, title);
    let benchmarks = [
        ("MW_full", data.mw_full, "#d62728", r#" stroke-dasharray="6 4""#),
        ("N_full", data.n_full, "#fa8072", ""),
        ("TR2", data.tr2, "#1f77b4", ""),
        ("TR4", data.tr4, "#2ca02c", ""),
    ];
    let diffs: Vec<f64> = data
        .by_g
        .iter()
        .filter_map(|(_, ts, rnd)| Some(ts.as_ref()? - rnd.as_ref()?))
        .collect();
    let values = data
        .by_g
        .iter()
        .flat_map(|(_, ts, rnd)| [*ts, *rnd])
        .chain(benchmarks.iter().map(|b| b.1))
        .flatten()
        .chain(diffs.iter().copied())
        .chain(std::iter::once(0.0));
    let y = Axis::new(values, HEIGHT - MARGIN, MARGIN);
    let gs: Vec<f64> = data.by_g.iter().map(|(g, _, _)| *g as f64).collect();
    let x = Axis::new(gs.iter().copied(), MARGIN, WIDTH - LEGEND_WIDTH - 10.0);
    let x_ticks: Vec<(f64, String)> = data
        .by_g
        .iter()
        .map(|(g, _, _)| (*g as f64, g.to_string()))
        .collect();
    frame(&mut out, &x, &y, "number of groups g", "annualized Sharpe ratio", &x_ticks);

    let zero = y.map(0.0);
    let spacing = if gs.len() > 1 {
        (x.map(gs[1]) - x.map(gs[0])).abs()
    } else {
        40.0
    };
    let bar = (spacing * 0.5).min(24.0);
    for (g, ts, rnd) in &data.by_g {
        let px = x.map(*g as f64);
        if let (Some(t), Some(r)) = (ts, rnd) {
            let d = t - r;
            let color = if d >= 0.0 { "#1f77b4" } else { "#d62728" };
            let top = y.map(d).min(zero);
            let h = (y.map(d) - zero).abs();
            let _ = writeln!(
                out,
                r#"<rect class="diff" x="{:.2}" y="{top:.2}" width="{bar:.2}" height="{h:.2}" fill="{color}" fill-opacity="0.5"/>"#,
                px - bar / 2.0
            );
        }
    }
    let _ = writeln!(
        out,
        r##"<line x1="{:.1}" y1="{zero:.2}" x2="{:.1}" y2="{zero:.2}" stroke="#333" stroke-width="0.5"/>"##,
        x.p0, x.p1
    );
    for (label, value, color, dash) in &benchmarks {
        if let Some(v) = value {
            let py = y.map(*v);
            let _ = writeln!(
                out,
                r#"<line class="{label}" x1="{:.1}" y1="{py:.2}" x2="{:.1}" y2="{py:.2}" stroke="{color}" stroke-width="1.5"{dash}/>"#,
                x.p0, x.p1
            );
        }
    }
    for (g, ts, rnd) in &data.by_g {
        let px = x.map(*g as f64);
        if let Some(r) = rnd {
            let _ = writeln!(
                out,
                r##"<circle class="RND" cx="{px:.2}" cy="{:.2}" r="4.5" fill="#7f7f7f"/>"##,
                y.map(*r)
            );
        }
        if let Some(t) = ts {
            let _ = writeln!(
                out,
                r##"<circle class="TS" cx="{px:.2}" cy="{:.2}" r="4.5" fill="#ff7f0e"/>"##,
                y.map(*t)
            );
        }
    }

    legend_entry(&mut out, 0, &circle_swatch(0, "#ff7f0e"), "TS_g");
    legend_entry(&mut out, 1, &circle_swatch(1, "#7f7f7f"), "RND_g");
    legend_entry(&mut out, 2, &rect_swatch(2, "#1f77b4"), "TS_g - RND_g > 0");
    legend_entry(&mut out, 3, &rect_swatch(3, "#d62728"), "TS_g - RND_g < 0");
    let mut row = 4;
    for (label, value, color, dash) in &benchmarks {
        if value.is_some() {
            legend_entry(&mut out, row, &line_swatch(row, color, dash), label);
            row += 1;
        }
    }
    out.push_str("</svg>\n");
    out
}
