//! Minimal self-contained SVG line plots for the aggregate results; no
//! external renderer.

use std::fmt::Write as _;

use crate::run::AggregateRow;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 150.0;
const MARGIN_T: f64 = 40.0;
const MARGIN_B: f64 = 50.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

/// One polyline: (x, y) points in data coordinates.
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

/// Build the per-metric series from aggregate rows. The x axis is M/N for
/// ratio sweeps and N for length sweeps.
pub fn series_for_metric(rows: &[AggregateRow], metric: &str) -> (String, Vec<Series>) {
    let filtered: Vec<&AggregateRow> = rows
        .iter()
        .filter(|r| r.metric == metric && r.mean_error.is_finite())
        .collect();
    let n_values: std::collections::BTreeSet<usize> = filtered.iter().map(|r| r.n).collect();
    let sweep_n = n_values.len() > 1;
    let x_label = if sweep_n { "N" } else { "M/N" };
    let mut names: Vec<String> = Vec::new();
    for r in &filtered {
        if !names.contains(&r.estimator) {
            names.push(r.estimator.clone());
        }
    }
    let mut series = Vec::new();
    for name in names {
        let mut points: Vec<(f64, f64)> = filtered
            .iter()
            .filter(|r| r.estimator == name)
            .map(|r| {
                let x = if sweep_n { r.n as f64 } else { r.ratio };
                (x, r.mean_error)
            })
            .collect();
        points.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        series.push(Series { name, points });
    }
    // A theoretical-limit line rides along when the preset computed one.
    let mut limit_points: Vec<(f64, f64)> = filtered
        .iter()
        .filter_map(|r| {
            r.limit_value
                .map(|v| (if sweep_n { r.n as f64 } else { r.ratio }, v))
        })
        .collect();
    limit_points.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    limit_points.dedup_by(|a, b| a.0 == b.0);
    if !limit_points.is_empty() {
        series.push(Series {
            name: "limit".into(),
            points: limit_points,
        });
    }
    (x_label.to_string(), series)
}

/// Render a line plot to an SVG string.
pub fn render(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let all: Vec<(f64, f64)> = series.iter().flat_map(|s| s.points.iter().copied()).collect();
    let (mut x_lo, mut x_hi) = bounds(all.iter().map(|p| p.0));
    let (mut y_lo, mut y_hi) = bounds(all.iter().map(|p| p.1));
    if x_hi <= x_lo {
        x_hi = x_lo + 1.0;
    }
    if y_hi <= y_lo {
        y_hi = y_lo + 1.0;
    }
    let y_pad = 0.05 * (y_hi - y_lo);
    y_lo = (y_lo - y_pad).min(y_lo * 0.95);
    y_hi += y_pad;
    if y_lo > 0.0 && y_lo < 0.2 * y_hi {
        y_lo = 0.0;
    }
    let x_pad = 0.02 * (x_hi - x_lo);
    x_lo -= x_pad;
    x_hi += x_pad;

    let px = |x: f64| MARGIN_L + (x - x_lo) / (x_hi - x_lo) * (WIDTH - MARGIN_L - MARGIN_R);
    let py = |y: f64| HEIGHT - MARGIN_B - (y - y_lo) / (y_hi - y_lo) * (HEIGHT - MARGIN_T - MARGIN_B);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="22" font-family="sans-serif" font-size="15" text-anchor="middle">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );

    // Axes and ticks.
    let _ = writeln!(
        svg,
        r#"<line x1="{l}" y1="{b}" x2="{r}" y2="{b}" stroke="black"/><line x1="{l}" y1="{t}" x2="{l}" y2="{b}" stroke="black"/>"#,
        l = MARGIN_L,
        r = WIDTH - MARGIN_R,
        t = MARGIN_T,
        b = HEIGHT - MARGIN_B
    );
    for k in 0..=4 {
        let fx = x_lo + (x_hi - x_lo) * k as f64 / 4.0;
        let fy = y_lo + (y_hi - y_lo) * k as f64 / 4.0;
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" font-family="sans-serif" font-size="11" text-anchor="middle">{}</text>"#,
            px(fx),
            HEIGHT - MARGIN_B + 18.0,
            format_tick(fx)
        );
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" font-family="sans-serif" font-size="11" text-anchor="end">{}</text>"#,
            MARGIN_L - 6.0,
            py(fy) + 4.0,
            format_tick(fy)
        );
        let _ = writeln!(
            svg,
            r##"<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="#dddddd"/>"##,
            MARGIN_L,
            py(fy),
            WIDTH - MARGIN_R,
            py(fy)
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" font-family="sans-serif" font-size="12" text-anchor="middle">{}</text>"#,
        (MARGIN_L + WIDTH - MARGIN_R) / 2.0,
        HEIGHT - 12.0,
        escape(x_label)
    );
    let _ = writeln!(
        svg,
        r#"<text x="16" y="{}" font-family="sans-serif" font-size="12" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#,
        (MARGIN_T + HEIGHT - MARGIN_B) / 2.0,
        (MARGIN_T + HEIGHT - MARGIN_B) / 2.0,
        escape(y_label)
    );

    for (idx, s) in series.iter().enumerate() {
        let color = PALETTE[idx % PALETTE.len()];
        let path: Vec<String> = s
            .points
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y)))
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.8" points="{}"/>"#,
            path.join(" ")
        );
        for &(x, y) in &s.points {
            let _ = writeln!(
                svg,
                r#"<circle cx="{:.2}" cy="{:.2}" r="2.6" fill="{color}"/>"#,
                px(x),
                py(y)
            );
        }
        let ly = MARGIN_T + 16.0 * idx as f64;
        let _ = writeln!(
            svg,
            r#"<line x1="{x}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/><text x="{}" y="{}" font-family="sans-serif" font-size="11">{}</text>"#,
            WIDTH - MARGIN_R + 28.0,
            WIDTH - MARGIN_R + 34.0,
            ly + 4.0,
            escape(&s.name),
            x = WIDTH - MARGIN_R + 8.0,
        );
    }
    svg.push_str("</svg>\n");
    svg
}

fn bounds<I: Iterator<Item = f64>>(values: I) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for v in values {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !lo.is_finite() {
        (0.0, 1.0)
    } else {
        (lo, hi)
    }
}

fn format_tick(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else if v.abs() >= 1000.0 || v.abs() < 0.01 {
        format!("{v:.1e}")
    } else {
        format!("{v:.3}")
            .trim_end_matches('0')
            .trim_end_matches('.')
            .to_string()
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
