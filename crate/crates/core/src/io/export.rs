//! CSV and SVG writers. Every writer is a pure function of its input, so
//! identical inputs give byte-identical files.

use std::fmt::Write as _;

use nalgebra::DMatrix;

use crate::analysis::{CovisibilityGraph, TrendSeries};
use crate::graph::Values;

pub fn poses_csv(values: &Values) -> String {
    let mut out = String::from("keyframe,qw,qx,qy,qz,tx,ty,tz\n");
    for (id, pose) in &values.poses {
        let a = pose.to_array7();
        let _ = writeln!(out, "{id},{},{},{},{},{},{},{}", a[0], a[1], a[2], a[3], a[4], a[5], a[6]);
    }
    out
}

/// One row per keyframe: id, the 21 upper-triangular entries of the 6×6
/// marginal (row-major), and its log-determinant.
pub fn marginals_csv(rows: &[(usize, DMatrix<f64>, f64)]) -> String {
    let mut out = String::from("keyframe");
    for i in 0..6 {
        for j in i..6 {
            let _ = write!(out, ",c{i}{j}");
        }
    }
    out.push_str(",logdet\n");
    for (id, cov, logdet) in rows {
        let _ = write!(out, "{id}");
        for i in 0..cov.nrows() {
            for j in i..cov.ncols() {
                let _ = write!(out, ",{:e}", cov[(i, j)]);
            }
        }
        let _ = writeln!(out, ",{logdet}");
    }
    out
}

pub fn trend_csv(series: &TrendSeries) -> String {
    let mut out = String::from("keyframe,logdet,num_edges,max_backlink_span\n");
    for e in &series.entries {
        let _ = writeln!(out, "{},{},{},{}", e.keyframe, e.logdet, e.num_edges, e.max_backlink_span);
    }
    out
}

/// Square adjacency matrix, one CSV row per keyframe.
pub fn adjacency_csv(c: &CovisibilityGraph) -> String {
    let mut out = String::new();
    for i in 0..c.len() {
        let row: Vec<String> = (0..c.len()).map(|j| c.get(i, j).to_string()).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

/// Standalone SVG: D-opt trend on the left, upper-triangular co-visibility
/// heat map on the right.
pub fn trend_svg(series: &TrendSeries, adjacency: &CovisibilityGraph) -> String {
    const W: f64 = 900.0;
    const H: f64 = 420.0;
    const PAD: f64 = 50.0;
    let plot_w = W * 0.55 - 2.0 * PAD;
    let plot_h = H - 2.0 * PAD;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="{W}" height="{H}" fill="white"/>"#);

    let pts: Vec<(f64, f64)> = series.entries.iter().map(|e| (e.keyframe as f64, e.logdet)).collect();
    if !pts.is_empty() {
        let (xmin, xmax) = (pts[0].0, pts[pts.len() - 1].0.max(pts[0].0 + 1.0));
        let ymin = pts.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
        let ymax = pts.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
        let yspan = if ymax > ymin { ymax - ymin } else { 1.0 };
        let sx = |x: f64| PAD + (x - xmin) / (xmax - xmin) * plot_w;
        let sy = |y: f64| PAD + plot_h - (y - ymin) / yspan * plot_h;

        let _ = writeln!(
            svg,
            r#"<rect x="{PAD}" y="{PAD}" width="{plot_w}" height="{plot_h}" fill="none" stroke="black"/>"#
        );
        let path: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
        let _ =
            writeln!(svg, r#"<polyline fill="none" stroke="steelblue" stroke-width="2" points="{}"/>"#, path.join(" "));
        for e in &series.entries {
            let color = if e.max_backlink_span > 0 && e.num_edges > 0 && is_loop(e.max_backlink_span, series) {
                "crimson"
            } else {
                "steelblue"
            };
            let _ = writeln!(
                svg,
                r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#,
                sx(e.keyframe as f64),
                sy(e.logdet)
            );
        }
        let _ = writeln!(svg, r#"<text x="{PAD}" y="{}">keyframe</text>"#, H - 15.0);
        let _ = writeln!(svg, r#"<text x="{PAD}" y="30">log det of newest pose covariance</text>"#);
        let _ = writeln!(svg, r#"<text x="5" y="{:.2}">{ymax:.2}</text>"#, PAD + 4.0);
        let _ = writeln!(svg, r#"<text x="5" y="{:.2}">{ymin:.2}</text>"#, PAD + plot_h);
    }

    let n = adjacency.len();
    if n > 0 {
        let size = (H - 2.0 * PAD).min(W * 0.45 - PAD);
        let cell = size / n as f64;
        let x0 = W * 0.55;
        let maxc = (0..n)
            .flat_map(|i| (i..n).map(move |j| (i, j)))
            .map(|(i, j)| adjacency.symmetric(i, j))
            .max()
            .unwrap_or(0)
            .max(1);
        let _ = writeln!(svg, r#"<text x="{x0}" y="30">co-visibility</text>"#);
        for i in 0..n {
            for j in i + 1..n {
                let c = adjacency.symmetric(i, j);
                if c == 0 {
                    continue;
                }
                let shade = 230 - (200 * c / maxc) as i32;
                let _ = writeln!(
                    svg,
                    r#"<rect x="{:.2}" y="{:.2}" width="{cell:.2}" height="{cell:.2}" fill="rgb({shade},{shade},255)"/>"#,
                    x0 + j as f64 * cell,
                    PAD + i as f64 * cell
                );
            }
        }
        let _ = writeln!(
            svg,
            r#"<rect x="{x0}" y="{PAD}" width="{size:.2}" height="{size:.2}" fill="none" stroke="black"/>"#
        );
    }
    svg.push_str("</svg>\n");
    svg
}

// Registrations further back than the usual sequential band.
fn is_loop(span: usize, series: &TrendSeries) -> bool {
    let mut spans: Vec<usize> = series.entries.iter().map(|e| e.max_backlink_span).collect();
    spans.sort_unstable();
    span > spans[spans.len() / 2]
}
