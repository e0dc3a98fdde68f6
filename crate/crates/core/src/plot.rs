//! Self-contained SVG figures. Output is a pure function of the inputs and
//! uses fixed-precision coordinates, so identical data gives identical bytes.

use std::fmt::Write as _;

const W: f64 = 640.0;
const H: f64 = 420.0;
const MARGIN: (f64, f64, f64, f64) = (60.0, 20.0, 40.0, 50.0); // left, right, top, bottom
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

#[derive(Clone, Copy, Debug)]
struct Frame {
    x0: f64,
    y0: f64,
    w: f64,
    h: f64,
    xr: (f64, f64),
    yr: (f64, f64),
}

impl Frame {
    fn new(x0: f64, y0: f64, w: f64, h: f64, xr: (f64, f64), yr: (f64, f64)) -> Self {
        Self { x0, y0, w, h, xr: pad(xr), yr: pad(yr) }
    }

    fn sx(&self, x: f64) -> f64 {
        self.x0 + (x - self.xr.0) / (self.xr.1 - self.xr.0) * self.w
    }

    fn sy(&self, y: f64) -> f64 {
        self.y0 + self.h - (y - self.yr.0) / (self.yr.1 - self.yr.0) * self.h
    }
}

fn pad(r: (f64, f64)) -> (f64, f64) {
    if !(r.1 > r.0) || !r.0.is_finite() || !r.1.is_finite() {
        let c = if r.0.is_finite() { r.0 } else { 0.0 };
        return (c - 1.0, c + 1.0);
    }
    let p = 0.05 * (r.1 - r.0);
    (r.0 - p, r.1 + p)
}

fn range<'a>(vals: impl IntoIterator<Item = &'a f64>) -> (f64, f64) {
    vals.into_iter()
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn header(out: &mut String, w: f64, h: f64, title: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w:.0}" height="{h:.0}" viewBox="0 0 {w:.0} {h:.0}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(out, r#"<text x="{:.1}" y="22" text-anchor="middle" font-size="14">{}</text>"#, w / 2.0, esc(title));
}

fn axes(out: &mut String, f: &Frame, xlabel: &str, ylabel: &str) {
    let _ = writeln!(
        out,
        r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="none" stroke="black"/>"#,
        f.x0, f.y0, f.w, f.h
    );
    for i in 0..=4 {
        let t = i as f64 / 4.0;
        let xv = f.xr.0 + t * (f.xr.1 - f.xr.0);
        let yv = f.yr.0 + t * (f.yr.1 - f.yr.0);
        let (px, py) = (f.sx(xv), f.sy(yv));
        let _ = writeln!(out, r#"<text x="{px:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, f.y0 + f.h + 16.0, tick(xv));
        let _ = writeln!(out, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#, f.x0 - 4.0, py + 4.0, tick(yv));
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        f.x0 + f.w / 2.0,
        f.y0 + f.h + 34.0,
        esc(xlabel)
    );
    let (lx, ly) = (f.x0 - 46.0, f.y0 + f.h / 2.0);
    let _ = writeln!(
        out,
        r#"<text x="{lx:.2}" y="{ly:.2}" text-anchor="middle" transform="rotate(-90 {lx:.2} {ly:.2})">{}</text>"#,
        esc(ylabel)
    );
}

fn tick(v: f64) -> String {
    if v.abs() >= 1000.0 {
        format!("{v:.0}")
    } else if v.abs() >= 10.0 {
        format!("{v:.1}")
    } else {
        format!("{v:.2}")
    }
}

fn polyline(out: &mut String, f: &Frame, xs: &[f64], ys: &[f64], colour: &str) {
    let pts: Vec<String> =
        xs.iter().zip(ys).filter(|(_, y)| y.is_finite()).map(|(&x, &y)| format!("{:.2},{:.2}", f.sx(x), f.sy(y))).collect();
    let _ = writeln!(out, r#"<polyline points="{}" fill="none" stroke="{colour}" stroke-width="1.5"/>"#, pts.join(" "));
}

/// Predictive mean with a ±2σ band over a 1D grid, plus the training points.
pub fn band_plot(title: &str, grid: &[f64], mean: &[f64], std: &[f64], data: (&[f64], &[f64])) -> String {
    let upper: Vec<f64> = mean.iter().zip(std).map(|(m, s)| m + 2.0 * s).collect();
    let lower: Vec<f64> = mean.iter().zip(std).map(|(m, s)| m - 2.0 * s).collect();
    let yr = range(upper.iter().chain(&lower).chain(data.1));
    let xr = range(grid.iter().chain(data.0));
    let (l, r, t, b) = MARGIN;
    let f = Frame::new(l, t, W - l - r, H - t - b, xr, yr);
    let mut out = String::new();
    header(&mut out, W, H, title);
    let mut pts: Vec<String> = grid.iter().zip(&upper).map(|(&x, &y)| format!("{:.2},{:.2}", f.sx(x), f.sy(y))).collect();
    pts.extend(grid.iter().zip(&lower).rev().map(|(&x, &y)| format!("{:.2},{:.2}", f.sx(x), f.sy(y))));
    let _ = writeln!(out, r#"<polygon points="{}" fill="{}" fill-opacity="0.25" stroke="none"/>"#, pts.join(" "), PALETTE[0]);
    polyline(&mut out, &f, grid, mean, PALETTE[0]);
    for (&x, &y) in data.0.iter().zip(data.1) {
        let _ = writeln!(out, r#"<circle cx="{:.2}" cy="{:.2}" r="2.5" fill="black"/>"#, f.sx(x), f.sy(y));
    }
    axes(&mut out, &f, "x", "y");
    out.push_str("</svg>\n");
    out
}

/// Per-split scatter of two methods' scores with the `y = x` line, and a
/// histogram of the differences `b − a` beside it.
pub fn pairwise_plot(title: &str, label_a: &str, label_b: &str, a: &[f64], b: &[f64], bins: usize) -> String {
    let w = 2.0 * W;
    let (l, r, t, bm) = MARGIN;
    let lim = range(a.iter().chain(b));
    let f = Frame::new(l, t, W - l - r, H - t - bm, lim, lim);
    let mut out = String::new();
    header(&mut out, w, H, title);
    let _ = writeln!(
        out,
        r##"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="#888" stroke-dasharray="4 3"/>"##,
        f.sx(f.xr.0),
        f.sy(f.yr.0),
        f.sx(f.xr.1),
        f.sy(f.yr.1)
    );
    for (&x, &y) in a.iter().zip(b) {
        if x.is_finite() && y.is_finite() {
            let _ = writeln!(out, r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{}"/>"#, f.sx(x), f.sy(y), PALETTE[0]);
        }
    }
    axes(&mut out, &f, label_a, label_b);

    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| y - x).filter(|d| d.is_finite()).collect();
    let dr = pad(range(&diffs));
    let bins = bins.max(1);
    let mut counts = vec![0usize; bins];
    for d in &diffs {
        let k = (((d - dr.0) / (dr.1 - dr.0)) * bins as f64).floor() as usize;
        counts[k.min(bins - 1)] += 1;
    }
    let top = counts.iter().copied().max().unwrap_or(0).max(1) as f64;
    let g = Frame { x0: W + l, y0: t, w: W - l - r, h: H - t - bm, xr: dr, yr: (0.0, top) };
    let bw = g.w / bins as f64;
    for (k, &c) in counts.iter().enumerate() {
        let y = g.sy(c as f64);
        let _ = writeln!(
            out,
            r#"<rect x="{:.2}" y="{y:.2}" width="{:.2}" height="{:.2}" fill="{}" stroke="white"/>"#,
            g.x0 + k as f64 * bw,
            bw,
            g.y0 + g.h - y,
            PALETTE[1]
        );
    }
    if dr.0 < 0.0 && dr.1 > 0.0 {
        let x = g.sx(0.0);
        let _ = writeln!(out, r#"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="black"/>"#, g.y0, g.y0 + g.h);
    }
    axes(&mut out, &g, &format!("{label_b} − {label_a}"), "count");
    out.push_str("</svg>\n");
    out
}

/// One bar series with standard-error whiskers.
#[derive(Clone, Debug, PartialEq)]
pub struct BarSeries {
    pub label: String,
    /// `(mean, se)` per category; NaN means missing.
    pub values: Vec<(f64, f64)>,
}

/// Grouped bar chart: one group per category, one bar per series.
pub fn bar_chart(title: &str, categories: &[String], series: &[BarSeries], ylabel: &str) -> String {
    let w = (W).max(120.0 * categories.len() as f64 + 120.0);
    let (l, r, t, b) = MARGIN;
    let ends = series.iter().flat_map(|s| s.values.iter().flat_map(|&(m, e)| [m - e, m + e, 0.0]));
    let ends: Vec<f64> = ends.collect();
    let f = Frame::new(l, t, w - l - r - 120.0, H - t - b, (0.0, categories.len().max(1) as f64), range(&ends));
    let mut out = String::new();
    header(&mut out, w, H, title);
    let group = f.w / categories.len().max(1) as f64;
    let bw = 0.8 * group / series.len().max(1) as f64;
    let zero = f.sy(0.0_f64.clamp(f.yr.0, f.yr.1));
    for (si, s) in series.iter().enumerate() {
        let colour = PALETTE[si % PALETTE.len()];
        for (ci, &(m, e)) in s.values.iter().enumerate() {
            if !m.is_finite() {
                continue;
            }
            let x = f.x0 + ci as f64 * group + 0.1 * group + si as f64 * bw;
            let y = f.sy(m);
            let _ = writeln!(
                out,
                r#"<rect x="{x:.2}" y="{:.2}" width="{bw:.2}" height="{:.2}" fill="{colour}"/>"#,
                y.min(zero),
                (y - zero).abs()
            );
            if e.is_finite() && e > 0.0 {
                let cx = x + bw / 2.0;
                let _ = writeln!(
                    out,
                    r#"<line x1="{cx:.2}" y1="{:.2}" x2="{cx:.2}" y2="{:.2}" stroke="black"/>"#,
                    f.sy(m - e),
                    f.sy(m + e)
                );
            }
        }
        let ly = f.y0 + 16.0 * si as f64 + 8.0;
        let lx = f.x0 + f.w + 12.0;
        let _ = writeln!(out, r#"<rect x="{lx:.2}" y="{:.2}" width="10" height="10" fill="{colour}"/>"#, ly - 8.0);
        let _ = writeln!(out, r#"<text x="{:.2}" y="{ly:.2}">{}</text>"#, lx + 14.0, esc(&s.label));
    }
    let _ = writeln!(out, r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="none" stroke="black"/>"#, f.x0, f.y0, f.w, f.h);
    for (ci, c) in categories.iter().enumerate() {
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            f.x0 + (ci as f64 + 0.5) * group,
            f.y0 + f.h + 16.0,
            esc(c)
        );
    }
    for i in 0..=4 {
        let yv = f.yr.0 + i as f64 / 4.0 * (f.yr.1 - f.yr.0);
        let _ = writeln!(out, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#, f.x0 - 4.0, f.sy(yv) + 4.0, tick(yv));
    }
    let (lx, ly) = (f.x0 - 46.0, f.y0 + f.h / 2.0);
    let _ = writeln!(
        out,
        r#"<text x="{lx:.2}" y="{ly:.2}" text-anchor="middle" transform="rotate(-90 {lx:.2} {ly:.2})">{}</text>"#,
        esc(ylabel)
    );
    out.push_str("</svg>\n");
    out
}
