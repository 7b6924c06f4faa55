//! Minimal deterministic SVG charts: scatter markers, lines and bars on
//! linear axes.

use std::fmt::Write;

const W: f64 = 640.0;
const H: f64 = 420.0;
const LEFT: f64 = 72.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 56.0;
const PALETTE: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Style {
    Markers,
    Line,
    Bars,
}

#[derive(Debug, Clone)]
pub struct Series {
    pub label: String,
    pub style: Style,
    pub points: Vec<(f64, f64)>,
}

impl Series {
    pub fn new(label: impl Into<String>, style: Style, points: Vec<(f64, f64)>) -> Self {
        Self { label: label.into(), style, points }
    }
}

#[derive(Debug, Clone)]
pub struct Chart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
}

/// Shortest decimal that round-trips at four significant digits.
pub fn num(x: f64) -> String {
    if !x.is_finite() {
        return "NaN".into();
    }
    if x == 0.0 {
        return "0".into();
    }
    let digits = (3 - x.abs().log10().floor() as i32).clamp(0, 12) as usize;
    let s = format!("{x:.digits$}");
    let s = if s.contains('.') { s.trim_end_matches('0').trim_end_matches('.').to_string() } else { s };
    if s == "-0" {
        "0".into()
    } else {
        s
    }
}

fn nice_step(span: f64) -> f64 {
    let raw = span / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let f = raw / mag;
    let n = if f < 1.5 {
        1.0
    } else if f < 3.5 {
        2.0
    } else if f < 7.5 {
        5.0
    } else {
        10.0
    };
    n * mag
}

fn bounds(vals: impl Iterator<Item = f64>, include_zero: bool) -> (f64, f64) {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for v in vals.filter(|v| v.is_finite()) {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if include_zero {
        lo = lo.min(0.0);
        hi = hi.max(0.0);
    }
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        let pad = if lo == 0.0 { 1.0 } else { lo.abs() * 0.1 };
        return (lo - pad, hi + pad);
    }
    (lo, hi)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

pub fn render(chart: &Chart) -> String {
    let pts = || chart.series.iter().flat_map(|s| s.points.iter());
    let bars = chart.series.iter().any(|s| s.style == Style::Bars);
    let bar_w = chart
        .series
        .iter()
        .filter(|s| s.style == Style::Bars)
        .flat_map(|s| s.points.windows(2).map(|w| (w[1].0 - w[0].0).abs()))
        .filter(|d| *d > 0.0)
        .fold(f64::INFINITY, f64::min);
    let bar_w = if bar_w.is_finite() { bar_w } else { 1.0 };
    let (mut x0, mut x1) = bounds(pts().map(|p| p.0), false);
    if bars {
        x0 -= bar_w / 2.0;
        x1 += bar_w / 2.0;
    }
    let (y0, y1) = bounds(pts().map(|p| p.1), bars);
    let pw = W - LEFT - RIGHT;
    let ph = H - TOP - BOTTOM;
    let sx = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| TOP + ph - (y - y0) / (y1 - y0) * ph;

    let mut o = String::new();
    let _ = writeln!(o, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(o, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(o, r#"<text x="{}" y="22" text-anchor="middle" font-size="15">{}</text>"#, W / 2.0, escape(&chart.title));
    let _ = writeln!(o, r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#);
    for (lo, hi, horizontal) in [(x0, x1, true), (y0, y1, false)] {
        let step = nice_step(hi - lo);
        let mut v = (lo / step).ceil() * step;
        while v <= hi + step * 1e-9 {
            if horizontal {
                let x = sx(v);
                let _ = writeln!(o, r#"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="black"/>"#, TOP + ph, TOP + ph + 5.0);
                let _ = writeln!(o, r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, TOP + ph + 18.0, num(v));
            } else {
                let y = sy(v);
                let _ = writeln!(o, r##"<line x1="{LEFT}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#dddddd"/>"##, LEFT + pw);
                let _ = writeln!(o, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#, LEFT - 6.0, y + 4.0, num(v));
            }
            v += step;
        }
    }
    let _ = writeln!(o, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, LEFT + pw / 2.0, H - 12.0, escape(&chart.x_label));
    let _ = writeln!(
        o,
        r#"<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">{}</text>"#,
        TOP + ph / 2.0,
        TOP + ph / 2.0,
        escape(&chart.y_label)
    );
    for (i, s) in chart.series.iter().enumerate() {
        let c = PALETTE[i % PALETTE.len()];
        let finite = s.points.iter().filter(|p| p.0.is_finite() && p.1.is_finite());
        match s.style {
            Style::Markers => {
                for &(x, y) in finite {
                    let _ = writeln!(o, r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{c}"/>"#, sx(x), sy(y));
                }
            }
            Style::Line => {
                let d: Vec<String> = finite.map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
                let _ = writeln!(o, r#"<polyline points="{}" fill="none" stroke="{c}" stroke-width="2"/>"#, d.join(" "));
            }
            Style::Bars => {
                let w = (sx(bar_w) - sx(0.0)) * 0.8;
                for &(x, y) in finite {
                    let (top, bottom) = (sy(y.max(0.0)), sy(y.min(0.0)));
                    let _ = writeln!(
                        o,
                        r#"<rect x="{:.2}" y="{top:.2}" width="{w:.2}" height="{:.2}" fill="{c}"/>"#,
                        sx(x) - w / 2.0,
                        bottom - top
                    );
                }
            }
        }
        let ly = TOP + 16.0 + 16.0 * i as f64;
        let _ = writeln!(o, r#"<rect x="{:.2}" y="{:.2}" width="10" height="10" fill="{c}"/>"#, LEFT + 10.0, ly - 9.0);
        let _ = writeln!(o, r#"<text x="{:.2}" y="{ly:.2}">{}</text>"#, LEFT + 26.0, escape(&s.label));
    }
    o.push_str("</svg>\n");
    o
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_are_compact() {
        assert_eq!(num(0.0), "0");
        assert_eq!(num(1.0), "1");
        assert_eq!(num(0.25), "0.25");
        assert_eq!(num(1234.5678), "1235");
        assert_eq!(num(-0.0001234), "-0.0001234");
        assert_eq!(num(f64::NAN), "NaN");
    }

    #[test]
    fn nice_steps() {
        assert_eq!(nice_step(10.0), 2.0);
        assert_eq!(nice_step(1.0), 0.2);
        assert_eq!(nice_step(300.0), 50.0);
    }

    #[test]
    fn render_is_deterministic_and_well_formed() {
        let chart = Chart {
            title: "a < b".into(),
            x_label: "x".into(),
            y_label: "y".into(),
            series: vec![
                Series::new("pts", Style::Markers, vec![(1.0, 2.0), (2.0, 3.0), (3.0, f64::NAN)]),
                Series::new("fit", Style::Line, vec![(1.0, 2.0), (3.0, 4.0)]),
                Series::new("bars", Style::Bars, vec![(1.0, -1.0), (2.0, 5.0)]),
            ],
        };
        let a = render(&chart);
        assert_eq!(a, render(&chart));
        assert!(a.starts_with("<svg") && a.ends_with("</svg>\n"));
        assert!(a.contains("a &lt; b"));
        assert_eq!(a.matches("<circle").count(), 2);
        assert_eq!(a.matches("<polyline").count(), 1);
    }
}
