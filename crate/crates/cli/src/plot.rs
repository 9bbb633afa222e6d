//! Static SVG line plots for sweep results. No display server involved; the
//! files are written for later inspection.

use std::fmt::Write as _;

pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    pub color: &'static str,
}

pub const COLORS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

const W: f64 = 640.0;
const H: f64 = 420.0;
const MARGIN_L: f64 = 64.0;
const MARGIN_R: f64 = 24.0;
const MARGIN_T: f64 = 40.0;
const MARGIN_B: f64 = 56.0;

/// Renders series as an SVG line chart with axis ticks and a legend.
pub fn line_chart(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let (mut x_min, mut x_max) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut y_min, mut y_max) = (f64::INFINITY, f64::NEG_INFINITY);
    for s in series {
        for &(x, y) in &s.points {
            x_min = x_min.min(x);
            x_max = x_max.max(x);
            y_min = y_min.min(y);
            y_max = y_max.max(y);
        }
    }
    if !x_min.is_finite() {
        (x_min, x_max, y_min, y_max) = (0.0, 1.0, 0.0, 1.0);
    }
    if (x_max - x_min).abs() < 1e-12 {
        x_max = x_min + 1.0;
    }
    let y_pad = ((y_max - y_min) * 0.1).max(0.02);
    y_min = (y_min - y_pad).max(0.0);
    y_max += y_pad;

    let px = |x: f64| MARGIN_L + (x - x_min) / (x_max - x_min) * (W - MARGIN_L - MARGIN_R);
    let py = |y: f64| H - MARGIN_B - (y - y_min) / (y_max - y_min) * (H - MARGIN_T - MARGIN_B);

    let mut svg = String::new();
    let _ = write!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">
<rect width="{W}" height="{H}" fill="white"/>
<text x="{}" y="24" text-anchor="middle" font-family="sans-serif" font-size="16">{}</text>
"#,
        W / 2.0,
        xml_escape(title)
    );

    // axes
    let _ = write!(
        svg,
        r#"<line x1="{l}" y1="{b}" x2="{r}" y2="{b}" stroke="black"/>
<line x1="{l}" y1="{t}" x2="{l}" y2="{b}" stroke="black"/>
"#,
        l = MARGIN_L,
        r = W - MARGIN_R,
        t = MARGIN_T,
        b = H - MARGIN_B
    );

    // ticks: 5 on each axis
    for i in 0..=4 {
        let fx = x_min + (x_max - x_min) * i as f64 / 4.0;
        let fy = y_min + (y_max - y_min) * i as f64 / 4.0;
        let _ = write!(
            svg,
            r#"<line x1="{x}" y1="{b}" x2="{x}" y2="{b2}" stroke="black"/>
<text x="{x}" y="{ty}" text-anchor="middle" font-family="sans-serif" font-size="11">{xv}</text>
<line x1="{l}" y1="{y}" x2="{l2}" y2="{y}" stroke="black"/>
<text x="{tx}" y="{y2}" text-anchor="end" font-family="sans-serif" font-size="11">{yv}</text>
"#,
            x = px(fx),
            b = H - MARGIN_B,
            b2 = H - MARGIN_B + 5.0,
            ty = H - MARGIN_B + 18.0,
            xv = trim_float(fx),
            l = MARGIN_L,
            l2 = MARGIN_L - 5.0,
            y = py(fy),
            tx = MARGIN_L - 8.0,
            y2 = py(fy) + 4.0,
            yv = trim_float(fy),
        );
    }
    let _ = write!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle" font-family="sans-serif" font-size="13">{}</text>
<text x="16" y="{}" text-anchor="middle" font-family="sans-serif" font-size="13" transform="rotate(-90 16 {apex})">{}</text>
"#,
        (MARGIN_L + W - MARGIN_R) / 2.0,
        H - 16.0,
        xml_escape(x_label),
        (MARGIN_T + H - MARGIN_B) / 2.0,
        xml_escape(y_label),
        apex = (MARGIN_T + H - MARGIN_B) / 2.0,
    );

    for s in series {
        let mut sorted = s.points.clone();
        sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
        let path: Vec<String> = sorted
            .iter()
            .enumerate()
            .map(|(i, &(x, y))| {
                format!("{}{:.2},{:.2}", if i == 0 { "M" } else { "L" }, px(x), py(y))
            })
            .collect();
        let _ = write!(
            svg,
            r#"<path d="{}" fill="none" stroke="{}" stroke-width="2"/>
"#,
            path.join(" "),
            s.color
        );
        for &(x, y) in &sorted {
            let _ = write!(
                svg,
                r#"<circle cx="{:.2}" cy="{:.2}" r="3.5" fill="{}"/>
"#,
                px(x),
                py(y),
                s.color
            );
        }
    }

    // legend
    for (i, s) in series.iter().enumerate() {
        let y = MARGIN_T + 8.0 + i as f64 * 18.0;
        let _ = write!(
            svg,
            r#"<line x1="{x1}" y1="{y}" x2="{x2}" y2="{y}" stroke="{c}" stroke-width="2"/>
<text x="{tx}" y="{ty}" font-family="sans-serif" font-size="12">{label}</text>
"#,
            x1 = W - MARGIN_R - 150.0,
            x2 = W - MARGIN_R - 124.0,
            y = y,
            c = s.color,
            tx = W - MARGIN_R - 118.0,
            ty = y + 4.0,
            label = xml_escape(&s.label),
        );
    }
    svg.push_str("</svg>\n");
    svg
}

fn trim_float(v: f64) -> String {
    let s = format!("{v:.3}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s.is_empty() {
        "0".to_string()
    } else {
        s.to_string()
    }
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chart_contains_series_and_axes() {
        let svg = line_chart(
            "accuracy vs K",
            "K",
            "accuracy",
            &[Series {
                label: "aug".into(),
                points: vec![(5.0, 0.6), (10.0, 0.7)],
                color: COLORS[0],
            }],
        );
        assert!(svg.starts_with("<svg"));
        assert!(svg.contains("accuracy vs K"));
        assert!(svg.contains("circle"));
        assert!(svg.ends_with("</svg>\n"));
    }
}
