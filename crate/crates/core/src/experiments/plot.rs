//! Hand-written SVG scatter plots. All coordinates are printed with fixed
//! precision, so a given record always renders to the same bytes.

use std::fmt::Write as _;
use std::path::Path;

use super::{ExperimentKind, ExperimentRecord};
use crate::error::{invalid, Result};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 50.0;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf",
];

/// What to draw for each experiment: x source, y value key, axis scales.
struct Layout {
    x_key: Option<&'static str>,
    y_key: &'static str,
    x_label: &'static str,
    y_label: &'static str,
    log_x: bool,
    log_y: bool,
    title: &'static str,
}

fn layout(kind: ExperimentKind) -> Layout {
    match kind {
        ExperimentKind::LpScaling => Layout {
            x_key: None,
            y_key: "kmax",
            x_label: "n",
            y_label: "kmax",
            log_x: true,
            log_y: true,
            title: "largest (1+eps)-Euclidean random section",
        },
        ExperimentKind::LinfLogn => Layout {
            x_key: None,
            y_key: "kmax",
            x_label: "n (log scale)",
            y_label: "kmax",
            log_x: true,
            log_y: false,
            title: "l_inf: kmax against log n",
        },
        ExperimentKind::Figiel => Layout {
            x_key: Some("k"),
            y_key: "min_distortion",
            x_label: "k",
            y_label: "min distortion",
            log_x: true,
            log_y: false,
            title: "Figiel norm: best random section distortion",
        },
        ExperimentKind::Concentration => Layout {
            x_key: Some("eps"),
            y_key: "empirical",
            x_label: "t (threshold = t E)",
            y_label: "tail fraction",
            log_x: false,
            log_y: false,
            title: "empirical tails (dots) and Levy bounds (crosses)",
        },
        ExperimentKind::JamesDemo => Layout {
            x_key: Some("level"),
            y_key: "constant",
            x_label: "level",
            y_label: "basis constant",
            log_x: false,
            log_y: true,
            title: "James iteration",
        },
    }
}

struct Point {
    series: usize,
    x: f64,
    y: f64,
    cross: bool,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn tick_label(v: f64) -> String {
    if v != 0.0 && (v.abs() >= 1e4 || v.abs() < 1e-2) {
        format!("{v:.1e}")
    } else if (v - v.round()).abs() < 1e-9 {
        format!("{v:.0}")
    } else {
        format!("{v:.3}")
    }
}

/// Render the record as an SVG scatter plot with fitted lines and an
/// `α = slope ± stderr` annotation per fit.
pub fn render_svg(record: &ExperimentRecord) -> Result<String> {
    let lay = layout(record.config.experiment);
    let t = |v: f64, log: bool| if log { v.ln() } else { v };
    let mut series: Vec<String> = Vec::new();
    let mut points: Vec<Point> = Vec::new();
    for row in record.rows.iter().filter(|r| r.is_ok()) {
        let x = match lay.x_key {
            None => Some(row.n as f64),
            Some("k") => row.k.map(|k| k as f64),
            Some("eps") => Some(row.eps),
            Some(key) => row.value(key),
        };
        let mut push = |y: Option<f64>, name: String, cross: bool| {
            let (Some(x), Some(y)) = (x, y) else { return };
            if (lay.log_x && x <= 0.0) || (lay.log_y && y <= 0.0) || !x.is_finite() || !y.is_finite() {
                return;
            }
            let idx = series.iter().position(|s| *s == name).unwrap_or_else(|| {
                series.push(name);
                series.len() - 1
            });
            points.push(Point {
                series: idx,
                x: t(x, lay.log_x),
                y: t(y, lay.log_y),
                cross,
            });
        };
        let name = if record.config.experiment == ExperimentKind::Concentration {
            format!("{} n={}", row.label, row.n)
        } else {
            row.label.clone()
        };
        push(row.value(lay.y_key), name.clone(), false);
        if record.config.experiment == ExperimentKind::Concentration {
            push(row.value("levy_bound").map(|b| b.min(1.0)), name, true);
        }
    }
    if points.len() < 2 {
        return Err(invalid(format!(
            "a plot needs at least 2 points, the record has {}",
            points.len()
        )));
    }

    let (mut x0, mut x1, mut y0, mut y1) = points.iter().fold(
        (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY),
        |(a, b, c, d), p| (a.min(p.x), b.max(p.x), c.min(p.y), d.max(p.y)),
    );
    if x1 - x0 < 1e-12 {
        x0 -= 0.5;
        x1 += 0.5;
    }
    if y1 - y0 < 1e-12 {
        y0 -= 0.5;
        y1 += 0.5;
    }
    let (px, py) = (0.05 * (x1 - x0), 0.05 * (y1 - y0));
    let (x0, x1, y0, y1) = (x0 - px, x1 + px, y0 - py, y1 + py);
    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let sx = |x: f64| LEFT + (x - x0) / (x1 - x0) * plot_w;
    let sy = |y: f64| TOP + (y1 - y) / (y1 - y0) * plot_h;

    let mut svg = String::new();
    let w = &mut svg;
    let _ = writeln!(
        w,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH:.0}" height="{HEIGHT:.0}" viewBox="0 0 {WIDTH:.0} {HEIGHT:.0}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(w, r##"<rect width="100%" height="100%" fill="#ffffff"/>"##);
    let _ = writeln!(
        w,
        r#"<text x="{:.2}" y="18" text-anchor="middle" font-size="13">{} ({})</text>"#,
        WIDTH / 2.0,
        escape(lay.title),
        record.config.experiment
    );
    let _ = writeln!(
        w,
        r##"<rect x="{LEFT:.2}" y="{TOP:.2}" width="{plot_w:.2}" height="{plot_h:.2}" fill="none" stroke="#333333"/>"##
    );
    for i in 0..=4 {
        let f = i as f64 / 4.0;
        let (tx, ty) = (x0 + f * (x1 - x0), y0 + f * (y1 - y0));
        let xv = if lay.log_x { tx.exp() } else { tx };
        let yv = if lay.log_y { ty.exp() } else { ty };
        let _ = writeln!(
            w,
            r##"<line x1="{0:.2}" y1="{1:.2}" x2="{0:.2}" y2="{2:.2}" stroke="#333333"/><text x="{0:.2}" y="{3:.2}" text-anchor="middle">{4}</text>"##,
            sx(tx),
            TOP + plot_h,
            TOP + plot_h + 5.0,
            TOP + plot_h + 18.0,
            tick_label(xv)
        );
        let _ = writeln!(
            w,
            r##"<line x1="{0:.2}" y1="{1:.2}" x2="{2:.2}" y2="{1:.2}" stroke="#333333"/><text x="{3:.2}" y="{4:.2}" text-anchor="end">{5}</text>"##,
            LEFT - 5.0,
            sy(ty),
            LEFT,
            LEFT - 8.0,
            sy(ty) + 4.0,
            tick_label(yv)
        );
    }
    let _ = writeln!(
        w,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        LEFT + plot_w / 2.0,
        HEIGHT - 12.0,
        escape(lay.x_label)
    );
    let _ = writeln!(
        w,
        r#"<text x="16" y="{0:.2}" text-anchor="middle" transform="rotate(-90 16 {0:.2})">{1}</text>"#,
        TOP + plot_h / 2.0,
        escape(lay.y_label)
    );

    for p in &points {
        let color = PALETTE[p.series % PALETTE.len()];
        let (cx, cy) = (sx(p.x), sy(p.y));
        if p.cross {
            let _ = writeln!(
                w,
                r#"<path d="M{:.2} {:.2}L{:.2} {:.2}M{:.2} {:.2}L{:.2} {:.2}" stroke="{color}"/>"#,
                cx - 4.0,
                cy - 4.0,
                cx + 4.0,
                cy + 4.0,
                cx - 4.0,
                cy + 4.0,
                cx + 4.0,
                cy - 4.0
            );
        } else {
            let _ = writeln!(w, r#"<circle cx="{cx:.2}" cy="{cy:.2}" r="3.5" fill="{color}"/>"#);
        }
    }

    let mut note_y = TOP + 16.0;
    for fit in &record.fits {
        let Some(idx) = series.iter().position(|s| *s == fit.series) else { continue };
        if fit.log_x != lay.log_x || fit.log_y != lay.log_y {
            continue;
        }
        let color = PALETTE[idx % PALETTE.len()];
        let xs: Vec<f64> = points.iter().filter(|p| p.series == idx).map(|p| p.x).collect();
        let (a, b) = xs
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
        let line = |x: f64| fit.slope * x + fit.intercept;
        let _ = writeln!(
            w,
            r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="{color}" stroke-dasharray="5 3"/>"#,
            sx(a),
            sy(line(a)),
            sx(b),
            sy(line(b))
        );
        let _ = writeln!(
            w,
            r#"<text x="{:.2}" y="{note_y:.2}" fill="{color}">{}: α = {:.3} ± {:.3}</text>"#,
            LEFT + 8.0,
            escape(&fit.series),
            fit.slope,
            fit.slope_stderr
        );
        note_y += 14.0;
    }

    let mut legend_y = TOP + 16.0;
    for (i, name) in series.iter().enumerate() {
        let _ = writeln!(
            w,
            r#"<circle cx="{:.2}" cy="{:.2}" r="3.5" fill="{}"/><text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            WIDTH - RIGHT - 10.0,
            legend_y - 4.0,
            PALETTE[i % PALETTE.len()],
            WIDTH - RIGHT - 18.0,
            legend_y,
            escape(name)
        );
        legend_y += 14.0;
    }
    let _ = writeln!(w, "</svg>");
    Ok(svg)
}

/// Write [`render_svg`] output to `path`.
pub fn emit_plot(record: &ExperimentRecord, path: &Path) -> Result<()> {
    std::fs::write(path, render_svg(record)?)?;
    Ok(())
}
