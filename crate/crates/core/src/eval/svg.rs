//! SVG overlay of a map, trajectories and high-resistance points, with
//! per-axis histograms of visited positions.

use crate::world::{OccupancyGrid, Pose};
use std::fmt::Write;

const PX_PER_M: f64 = 40.0;
const HIST_PX: f64 = 60.0;
const BIN_M: f64 = 0.25;

#[derive(Debug, Clone, Default)]
pub struct SvgLayers<'a> {
    pub trajectories: &'a [Vec<Pose>],
    pub hr_points: &'a [Pose],
    pub title: &'a str,
    pub config_hash: &'a str,
}

fn histogram(values: impl Iterator<Item = f64>, extent: f64) -> Vec<usize> {
    let bins = (extent / BIN_M).ceil().max(1.0) as usize;
    let mut h = vec![0usize; bins];
    for v in values {
        let i = ((v / BIN_M).floor().max(0.0) as usize).min(bins - 1);
        h[i] += 1;
    }
    h
}

/// Renders the grid (y up), trajectories as polylines, H as red circles,
/// an x-position histogram below the map and a y-position one to its right.
pub fn render_svg(grid: &OccupancyGrid, layers: &SvgLayers<'_>) -> String {
    let res = grid.resolution();
    let wm = grid.width as f64 * res;
    let hm = grid.height as f64 * res;
    let (w, h) = (wm * PX_PER_M, hm * PX_PER_M);
    let sx = |x: f64| x * PX_PER_M;
    let sy = |y: f64| h - y * PX_PER_M;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{:.0}" height="{:.0}" viewBox="0 0 {:.0} {:.0}">"#,
        w + HIST_PX + 10.0,
        h + HIST_PX + 30.0,
        w + HIST_PX + 10.0,
        h + HIST_PX + 30.0
    );
    let _ = writeln!(s, "<!-- config_hash={} -->", layers.config_hash);
    let _ = writeln!(s, "<title>{}</title>", layers.title.replace('<', "&lt;").replace('&', "&amp;"));
    let _ = writeln!(s, r##"<rect x="0" y="0" width="{w:.1}" height="{h:.1}" fill="#ffffff" stroke="#000000"/>"##);
    let cell = res * PX_PER_M;
    for row in 0..grid.height {
        let mut col = 0;
        while col < grid.width {
            if !grid.is_occupied((col, row)) {
                col += 1;
                continue;
            }
            let start = col;
            while col < grid.width && grid.is_occupied((col, row)) {
                col += 1;
            }
            let _ = writeln!(
                s,
                r##"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="#404040"/>"##,
                start as f64 * cell,
                h - (row + 1) as f64 * cell,
                (col - start) as f64 * cell,
                cell
            );
        }
    }
    let (gx, gy) = grid.cell_center(grid.goal);
    let (stx, sty) = grid.cell_center(grid.start);
    let _ = writeln!(s, r##"<circle cx="{:.2}" cy="{:.2}" r="6" fill="#2a9d2a"/>"##, sx(stx), sy(sty));
    let _ = writeln!(s, r##"<circle cx="{:.2}" cy="{:.2}" r="6" fill="#1f5fbf"/>"##, sx(gx), sy(gy));
    for traj in layers.trajectories {
        let pts: Vec<String> = traj.iter().map(|p| format!("{:.2},{:.2}", sx(p.x), sy(p.y))).collect();
        let _ = writeln!(
            s,
            r##"<polyline points="{}" fill="none" stroke="#e07b00" stroke-opacity="0.5" stroke-width="1.5"/>"##,
            pts.join(" ")
        );
    }
    for p in layers.hr_points {
        let _ = writeln!(s, r##"<circle cx="{:.2}" cy="{:.2}" r="4" fill="#d62828"/>"##, sx(p.x), sy(p.y));
    }

    let all = || layers.trajectories.iter().flatten();
    let hx = histogram(all().map(|p| p.x), wm);
    let hy = histogram(all().map(|p| p.y), hm);
    let peak = hx.iter().chain(hy.iter()).copied().max().unwrap_or(0).max(1) as f64;
    let bin_px = BIN_M * PX_PER_M;
    for (i, &c) in hx.iter().enumerate() {
        let len = c as f64 / peak * HIST_PX;
        let _ = writeln!(
            s,
            r##"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="#6c757d"/>"##,
            i as f64 * bin_px,
            h + 5.0,
            bin_px,
            len
        );
    }
    for (i, &c) in hy.iter().enumerate() {
        let len = c as f64 / peak * HIST_PX;
        let _ = writeln!(
            s,
            r##"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="#6c757d"/>"##,
            w + 5.0,
            h - (i + 1) as f64 * bin_px,
            len,
            bin_px
        );
    }
    let _ = writeln!(s, "</svg>");
    s
}
