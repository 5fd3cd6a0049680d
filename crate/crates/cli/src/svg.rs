//! Envelope plot as a standalone SVG document.

use std::fmt::Write as _;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 440.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 20.0;
const BOTTOM: f64 = 50.0;
const TICKS: usize = 5;

pub struct Plot<'a> {
    pub r: &'a [f64],
    pub lower: &'a [f64],
    pub upper: &'a [f64],
    pub central: Option<&'a [f64]>,
    pub observed: &'a [f64],
    pub y_label: &'a str,
}

fn span(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if hi > lo {
        let pad = 0.05 * (hi - lo);
        (lo - pad, hi + pad)
    } else {
        (lo - 0.5, hi + 0.5)
    }
}

fn tick_label(v: f64) -> String {
    let s = format!("{v:.4}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" { "0".into() } else { s.into() }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Grey band between the bounds, dashed central curve, solid observed curve.
pub fn render(plot: &Plot<'_>) -> String {
    let (x0, x1) = span(plot.r.iter().copied());
    let ys = plot
        .lower
        .iter()
        .chain(plot.upper)
        .chain(plot.observed)
        .chain(plot.central.unwrap_or(&[]))
        .copied();
    let (y0, y1) = span(ys);
    let (pw, ph) = (WIDTH - LEFT - RIGHT, HEIGHT - TOP - BOTTOM);
    let sx = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| TOP + (y1 - y) / (y1 - y0) * ph;
    let path = |ys: &[f64]| {
        let mut d = String::new();
        for (i, (&x, &y)) in plot.r.iter().zip(ys).enumerate() {
            let _ = write!(d, "{}{:.2},{:.2}", if i == 0 { "M" } else { " L" }, sx(x), sy(y));
        }
        d
    };

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);

    let mut band = String::new();
    for (&x, &y) in plot.r.iter().zip(plot.upper) {
        let _ = write!(band, "{:.2},{:.2} ", sx(x), sy(y));
    }
    for (&x, &y) in plot.r.iter().zip(plot.lower).rev() {
        let _ = write!(band, "{:.2},{:.2} ", sx(x), sy(y));
    }
    let _ = writeln!(out, r##"<polygon points="{}" fill="#c8c8c8" stroke="none"/>"##, band.trim_end());
    if let Some(c) = plot.central {
        let _ = writeln!(out, r#"<path d="{}" fill="none" stroke="black" stroke-width="1" stroke-dasharray="6 4"/>"#, path(c));
    }
    let _ = writeln!(out, r#"<path d="{}" fill="none" stroke="black" stroke-width="1.6"/>"#, path(plot.observed));

    let (bx, by) = (LEFT, TOP + ph);
    let _ = writeln!(out, r#"<path d="M{bx},{TOP} L{bx},{by} L{},{by}" fill="none" stroke="black"/>"#, LEFT + pw);
    for i in 0..=TICKS {
        let t = i as f64 / TICKS as f64;
        let (xv, yv) = (x0 + t * (x1 - x0), y0 + t * (y1 - y0));
        let (px, py) = (sx(xv), sy(yv));
        let _ = writeln!(out, r#"<line x1="{px:.2}" y1="{by}" x2="{px:.2}" y2="{}" stroke="black"/>"#, by + 5.0);
        let _ = writeln!(out, r#"<text x="{px:.2}" y="{}" text-anchor="middle">{}</text>"#, by + 20.0, tick_label(xv));
        let _ = writeln!(out, r#"<line x1="{}" y1="{py:.2}" x2="{bx}" y2="{py:.2}" stroke="black"/>"#, bx - 5.0);
        let _ = writeln!(out, r#"<text x="{}" y="{:.2}" text-anchor="end">{}</text>"#, bx - 8.0, py + 4.0, tick_label(yv));
    }
    let _ = writeln!(out, r#"<text x="{:.2}" y="{}" text-anchor="middle">r</text>"#, LEFT + pw / 2.0, HEIGHT - 10.0);
    let _ = writeln!(
        out,
        r#"<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">{}</text>"#,
        TOP + ph / 2.0,
        TOP + ph / 2.0,
        escape(plot.y_label)
    );
    out.push_str("</svg>\n");
    out
}
