//! Minimal SVG line plots and boolean rasters.

use std::fmt::Write;

use mpark::stability::StabilityGrid;

const W: f64 = 640.0;
const H: f64 = 480.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 170.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;
const COLORS: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf"];

pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

pub struct Axes<'a> {
    pub title: &'a str,
    pub x_label: &'a str,
    pub y_label: &'a str,
    pub log_x: bool,
    pub log_y: bool,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn fmt_tick(v: f64, log: bool) -> String {
    if log {
        format!("1e{}", v.round() as i64)
    } else if v != 0.0 && (v.abs() >= 1e4 || v.abs() < 1e-2) {
        format!("{v:.1e}")
    } else {
        format!("{}", (v * 1e3).round() / 1e3)
    }
}

/// Line plot of every series; points that cannot be drawn on a log axis
/// (non-positive or non-finite) are skipped.
pub fn line_plot(axes: &Axes, series: &[Series]) -> String {
    let tx = |v: f64| if axes.log_x { v.log10() } else { v };
    let ty = |v: f64| if axes.log_y { v.log10() } else { v };
    let drawn: Vec<Vec<(f64, f64)>> = series
        .iter()
        .map(|s| {
            s.points
                .iter()
                .map(|&(x, y)| (tx(x), ty(y)))
                .filter(|(x, y)| x.is_finite() && y.is_finite())
                .collect()
        })
        .collect();
    let all = drawn.iter().flatten();
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in all {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if axes.log_x {
        (x0, x1) = (x0.floor(), x1.ceil());
    }
    if axes.log_y {
        (y0, y1) = (y0.floor(), y1.ceil());
    }
    if x1 <= x0 {
        x1 = x0 + 1.0;
    }
    if y1 <= y0 {
        y1 = y0 + 1.0;
    }
    let pw = W - LEFT - RIGHT;
    let ph = H - TOP - BOTTOM;
    let px = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
    let py = |y: f64| TOP + (1.0 - (y - y0) / (y1 - y0)) * ph;

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#, LEFT + pw / 2.0, escape(axes.title));
    let _ = writeln!(s, r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#);
    for k in 0..=5 {
        let f = k as f64 / 5.0;
        let (xv, yv) = (x0 + f * (x1 - x0), y0 + f * (y1 - y0));
        let (gx, gy) = (px(xv), py(yv));
        let _ = writeln!(s, r##"<line x1="{gx}" y1="{TOP}" x2="{gx}" y2="{}" stroke="#ddd"/>"##, TOP + ph);
        let _ = writeln!(s, r##"<line x1="{LEFT}" y1="{gy}" x2="{}" y2="{gy}" stroke="#ddd"/>"##, LEFT + pw);
        let _ = writeln!(s, r#"<text x="{gx}" y="{}" text-anchor="middle">{}</text>"#, TOP + ph + 18.0, fmt_tick(xv, axes.log_x));
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#, LEFT - 6.0, gy + 4.0, fmt_tick(yv, axes.log_y));
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, LEFT + pw / 2.0, H - 15.0, escape(axes.x_label));
    let _ = writeln!(
        s,
        r#"<text x="20" y="{}" text-anchor="middle" transform="rotate(-90 20 {})">{}</text>"#,
        TOP + ph / 2.0,
        TOP + ph / 2.0,
        escape(axes.y_label)
    );
    for (k, (ser, pts)) in series.iter().zip(&drawn).enumerate() {
        let color = COLORS[k % COLORS.len()];
        let path: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y))).collect();
        if path.len() > 1 {
            let _ = writeln!(s, r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#, path.join(" "));
        }
        if pts.len() <= 64 {
            for &(x, y) in pts {
                let _ = writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="2.5" fill="{color}"/>"#, px(x), py(y));
            }
        }
        let ly = TOP + 14.0 + 18.0 * k as f64;
        let lx = LEFT + pw + 10.0;
        let _ = writeln!(s, r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/>"#, lx + 20.0);
        let _ = writeln!(s, r#"<text x="{}" y="{}">{}</text>"#, lx + 25.0, ly + 4.0, escape(&ser.label));
    }
    s.push_str("</svg>\n");
    s
}

/// Stable cells in black on white, real axis horizontal, imaginary axis up.
pub fn stability_raster(grid: &StabilityGrid, title: &str) -> String {
    let (nx, ny) = grid.spec.resolution;
    let size = 480.0;
    let (cw, ch) = (size / nx as f64, size / ny as f64);
    let (ox, oy) = (60.0, 40.0);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{}" font-family="sans-serif" font-size="12">"#,
        size + 100.0,
        size + 90.0
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#, ox + size / 2.0, escape(title));
    // merge horizontal runs of stable cells into single rectangles
    for (j, row) in grid.cells.iter().enumerate() {
        let y = oy + (ny - 1 - j) as f64 * ch;
        let mut i = 0;
        while i < nx {
            if row[i] {
                let start = i;
                while i < nx && row[i] {
                    i += 1;
                }
                let _ = writeln!(
                    s,
                    r#"<rect x="{:.3}" y="{:.3}" width="{:.3}" height="{:.3}" fill="black"/>"#,
                    ox + start as f64 * cw,
                    y,
                    (i - start) as f64 * cw,
                    ch
                );
            } else {
                i += 1;
            }
        }
    }
    let _ = writeln!(s, r#"<rect x="{ox}" y="{oy}" width="{size}" height="{size}" fill="none" stroke="gray"/>"#);
    let (r0, r1) = grid.spec.re_range;
    let (i0, i1) = grid.spec.im_range;
    let _ = writeln!(s, r#"<text x="{ox}" y="{}" text-anchor="middle">{r0}</text>"#, oy + size + 16.0);
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{r1}</text>"#, ox + size, oy + size + 16.0);
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">Re z</text>"#, ox + size / 2.0, oy + size + 36.0);
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{i0}</text>"#, ox - 4.0, oy + size);
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{i1}</text>"#, ox - 4.0, oy + 10.0);
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">Im z</text>"#, ox - 4.0, oy + size / 2.0);
    s.push_str("</svg>\n");
    s
}
