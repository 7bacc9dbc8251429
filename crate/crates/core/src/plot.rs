//! Bland-Altman scatter as a self-contained SVG.
//!
//! The x axis spans `[0, range_max]` and the y axis `[-range_max, range_max]`,
//! so plots of one model family are directly comparable. Coordinates are
//! printed with three decimals.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::repeatability::{LimitsOfAgreement, PatientPairDifference};

pub const WIDTH: f64 = 640.0;
pub const HEIGHT: f64 = 480.0;
const LEFT: f64 = 72.0;
const RIGHT: f64 = 24.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 56.0;
const TICKS: usize = 4;

/// Plot-area mapping from data to pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Axes {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Axes {
    pub fn for_range(range_max: f64) -> Self {
        Axes {
            x_min: 0.0,
            x_max: range_max,
            y_min: -range_max,
            y_max: range_max,
        }
    }

    pub fn px(&self, x: f64) -> f64 {
        LEFT + (x - self.x_min) / (self.x_max - self.x_min) * (WIDTH - LEFT - RIGHT)
    }

    pub fn py(&self, y: f64) -> f64 {
        TOP + (self.y_max - y) / (self.y_max - self.y_min) * (HEIGHT - TOP - BOTTOM)
    }

    /// Pixel bounds of the plot area, `(left, top, right, bottom)`.
    pub fn frame() -> (f64, f64, f64, f64) {
        (LEFT, TOP, WIDTH - RIGHT, HEIGHT - BOTTOM)
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// SVG text of the Bland-Altman plot.
pub fn bland_altman_svg(
    diffs: &[PatientPairDifference],
    loa: &LimitsOfAgreement,
    title: &str,
) -> Result<String> {
    if diffs.is_empty() {
        return Err(Error::Evaluate("nothing to plot: no patient pairs".into()));
    }
    if !loa.range_max.is_finite() || loa.range_max <= 0.0 {
        return Err(Error::Evaluate(format!(
            "invalid score range {}",
            loa.range_max
        )));
    }
    let axes = Axes::for_range(loa.range_max);
    let (l, t, r, b) = Axes::frame();
    let mut s = String::new();
    let w = &mut s;
    writeln!(
        w,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    )
    .unwrap();
    writeln!(
        w,
        r##"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="#ffffff"/>"##
    )
    .unwrap();
    writeln!(
        w,
        r##"<text x="{:.3}" y="24" text-anchor="middle" font-size="14">{}</text>"##,
        (l + r) / 2.0,
        escape(title)
    )
    .unwrap();
    writeln!(
        w,
        r##"<rect class="frame" x="{l:.3}" y="{t:.3}" width="{:.3}" height="{:.3}" fill="none" stroke="#000000"/>"##,
        r - l,
        b - t
    )
    .unwrap();

    let mut ticks = String::new();
    let mut labels = String::new();
    for i in 0..=TICKS {
        let f = i as f64 / TICKS as f64;
        let xv = axes.x_min + f * (axes.x_max - axes.x_min);
        let yv = axes.y_min + f * (axes.y_max - axes.y_min);
        let (x, y) = (axes.px(xv), axes.py(yv));
        write!(
            ticks,
            "M{x:.3} {b:.3}V{:.3}M{l:.3} {y:.3}H{:.3}",
            b + 5.0,
            l - 5.0
        )
        .unwrap();
        writeln!(
            labels,
            r#"<text x="{x:.3}" y="{:.3}" text-anchor="middle">{xv:.2}</text>"#,
            b + 18.0
        )
        .unwrap();
        writeln!(
            labels,
            r#"<text x="{:.3}" y="{:.3}" text-anchor="end">{yv:.2}</text>"#,
            l - 8.0,
            y + 4.0
        )
        .unwrap();
    }
    writeln!(w, r##"<path class="ticks" d="{ticks}" stroke="#000000"/>"##).unwrap();
    w.push_str(&labels);
    writeln!(
        w,
        r#"<text class="x-label" x="{:.3}" y="{:.3}" text-anchor="middle">mean of predicted scores</text>"#,
        (l + r) / 2.0,
        HEIGHT - 12.0
    )
    .unwrap();
    writeln!(
        w,
        r#"<text class="y-label" x="18" y="{0:.3}" text-anchor="middle" transform="rotate(-90 18 {0:.3})">difference</text>"#,
        (t + b) / 2.0
    )
    .unwrap();

    let zero = axes.py(0.0);
    writeln!(
        w,
        r##"<line class="zero" x1="{l:.3}" y1="{zero:.3}" x2="{r:.3}" y2="{zero:.3}" stroke="#000000"/>"##
    )
    .unwrap();
    for (class, v) in [("loa-lower", loa.lower), ("loa-upper", loa.upper)] {
        let y = axes.py(v);
        writeln!(
            w,
            r##"<line class="{class}" x1="{l:.3}" y1="{y:.3}" x2="{r:.3}" y2="{y:.3}" stroke="#c0392b" stroke-dasharray="6 4"/>"##
        )
        .unwrap();
    }
    writeln!(
        w,
        r##"<g class="points" fill="#1f4e79" fill-opacity="0.6">"##
    )
    .unwrap();
    for d in diffs {
        writeln!(
            w,
            r#"<circle cx="{:.3}" cy="{:.3}" r="3"/>"#,
            axes.px(d.pair_mean),
            axes.py(d.difference)
        )
        .unwrap();
    }
    w.push_str("</g>\n</svg>\n");
    Ok(s)
}

pub fn write_bland_altman(
    path: &std::path::Path,
    diffs: &[PatientPairDifference],
    loa: &LimitsOfAgreement,
    title: &str,
) -> Result<()> {
    let svg = bland_altman_svg(diffs, loa, title)?;
    std::fs::write(path, svg).map_err(|source| {
        crate::io::IoError::Write {
            path: path.to_path_buf(),
            source,
        }
        .into()
    })
}
