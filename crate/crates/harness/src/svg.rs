//! Small deterministic SVG plots: traces, rasters and log-log scatter.
//!
//! Output depends only on the input data; coordinates are printed with a
//! fixed number of decimals and nothing time- or host-dependent is embedded.

use std::fmt::Write;

const W: f64 = 800.0;
const H: f64 = 400.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 50.0;
const COLORS: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf",
];
/// Longest polyline emitted per series; longer traces are min/max decimated.
const MAX_POINTS: usize = 4000;

pub struct Series<'a> {
    pub name: &'a str,
    pub xs: &'a [f64],
    pub ys: &'a [f64],
}

pub struct RasterRow<'a> {
    pub label: &'a str,
    pub times: &'a [f64],
}

pub struct Point<'a> {
    pub label: &'a str,
    pub x: f64,
    pub y: f64,
}

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn new(x0: f64, x1: f64, y0: f64, y1: f64) -> Self {
        let fix = |a: f64, b: f64| {
            if !(a.is_finite() && b.is_finite()) {
                (0.0, 1.0)
            } else if b > a {
                (a, b)
            } else {
                (a - 0.5, a + 0.5)
            }
        };
        let (x0, x1) = fix(x0, x1);
        let (y0, y1) = fix(y0, y1);
        Self { x0, x1, y0, y1 }
    }

    fn px(&self, x: f64) -> f64 {
        LEFT + (x - self.x0) / (self.x1 - self.x0) * (W - LEFT - RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        H - BOTTOM - (y - self.y0) / (self.y1 - self.y0) * (H - TOP - BOTTOM)
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

fn header(out: &mut String, title: &str) {
    let _ = write!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\">\n\
         <rect width=\"{W}\" height=\"{H}\" fill=\"white\"/>\n\
         <text x=\"{:.1}\" y=\"18\" font-size=\"14\" text-anchor=\"middle\">{}</text>\n",
        W / 2.0,
        escape(title)
    );
}

fn tick_label(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else if v.abs() >= 1e4 || v.abs() < 1e-2 {
        format!("{v:.2e}")
    } else {
        format!("{v:.3}")
            .trim_end_matches('0')
            .trim_end_matches('.')
            .to_string()
    }
}

fn axes(out: &mut String, f: &Frame, x_label: &str, y_label: &str, log: bool) {
    let (xa, xb, ya, yb) = (LEFT, W - RIGHT, TOP, H - BOTTOM);
    let _ = writeln!(
        out,
        "<g class=\"axes\" stroke=\"black\" stroke-width=\"1\">\
         <line x1=\"{xa:.1}\" y1=\"{yb:.1}\" x2=\"{xb:.1}\" y2=\"{yb:.1}\"/>\
         <line x1=\"{xa:.1}\" y1=\"{ya:.1}\" x2=\"{xa:.1}\" y2=\"{yb:.1}\"/></g>"
    );
    for k in 0..=4 {
        let fx = f.x0 + (f.x1 - f.x0) * k as f64 / 4.0;
        let fy = f.y0 + (f.y1 - f.y0) * k as f64 / 4.0;
        let (lx, ly) = if log {
            (tick_label(10f64.powf(fx)), tick_label(10f64.powf(fy)))
        } else {
            (tick_label(fx), tick_label(fy))
        };
        let _ = writeln!(
            out,
            "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"10\" text-anchor=\"middle\">{lx}</text>\
             <text x=\"{:.1}\" y=\"{:.1}\" font-size=\"10\" text-anchor=\"end\">{ly}</text>",
            f.px(fx),
            yb + 14.0,
            xa - 4.0,
            f.py(fy) + 3.0
        );
    }
    let _ = writeln!(
        out,
        "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"12\" text-anchor=\"middle\">{}</text>\
         <text x=\"14\" y=\"{:.1}\" font-size=\"12\" text-anchor=\"middle\" transform=\"rotate(-90 14 {:.1})\">{}</text>",
        (xa + xb) / 2.0,
        H - 12.0,
        escape(x_label),
        (ya + yb) / 2.0,
        (ya + yb) / 2.0,
        escape(y_label)
    );
}

/// Indices kept when drawing `n` points: all of them, or the first, the
/// minimum, the maximum and the last of each bucket.
fn decimate(ys: &[f64]) -> Vec<usize> {
    let n = ys.len();
    if n <= MAX_POINTS {
        return (0..n).collect();
    }
    let buckets = MAX_POINTS / 4;
    let mut keep = Vec::with_capacity(MAX_POINTS);
    for b in 0..buckets {
        let (a, z) = (b * n / buckets, (b + 1) * n / buckets);
        if a >= z {
            continue;
        }
        let mut lo = a;
        let mut hi = a;
        for i in a..z {
            if ys[i] < ys[lo] {
                lo = i;
            }
            if ys[i] > ys[hi] {
                hi = i;
            }
        }
        let mut idx = [a, lo, hi, z - 1];
        idx.sort_unstable();
        for i in idx {
            if keep.last() != Some(&i) {
                keep.push(i);
            }
        }
    }
    keep
}

pub fn line_plot(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let finite = |v: &&f64| v.is_finite();
    let xs = series.iter().flat_map(|s| s.xs.iter()).filter(finite);
    let ys = series.iter().flat_map(|s| s.ys.iter()).filter(finite);
    let (x0, x1) = xs.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| {
        (a.min(v), b.max(v))
    });
    let (y0, y1) = ys.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| {
        (a.min(v), b.max(v))
    });
    let f = Frame::new(x0, x1, y0.min(0.0), y1);
    let mut out = String::new();
    header(&mut out, title);
    axes(&mut out, &f, x_label, y_label, false);
    for (k, s) in series.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let n = s.xs.len().min(s.ys.len());
        let pts: Vec<String> = decimate(&s.ys[..n])
            .into_iter()
            .map(|i| format!("{:.2},{:.2}", f.px(s.xs[i]), f.py(s.ys[i])))
            .collect();
        let _ = writeln!(
            out,
            "<polyline class=\"series\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1\" points=\"{}\"/>\
             <text x=\"{:.1}\" y=\"{:.1}\" font-size=\"11\" fill=\"{color}\" text-anchor=\"end\">{}</text>",
            pts.join(" "),
            W - RIGHT - 4.0,
            TOP + 14.0 * (k + 1) as f64,
            escape(s.name)
        );
    }
    out.push_str("</svg>\n");
    out
}

/// One row per train; every event is a `<line class="spike">`.
pub fn raster_plot(title: &str, rows: &[RasterRow], t_end: f64) -> String {
    let n = rows.len().max(1) as f64;
    let f = Frame::new(0.0, t_end, 0.0, n);
    let mut out = String::new();
    header(&mut out, title);
    axes(&mut out, &f, "time (s)", "channel", false);
    for (r, row) in rows.iter().enumerate() {
        let color = COLORS[r % COLORS.len()];
        let (ya, yb) = (f.py(r as f64 + 0.1), f.py(r as f64 + 0.9));
        let _ = writeln!(
            out,
            "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"10\">{}</text>",
            LEFT + 4.0,
            yb - 2.0,
            escape(row.label)
        );
        for &t in row.times {
            let x = f.px(t);
            let _ = writeln!(
                out,
                "<line class=\"spike\" x1=\"{x:.2}\" y1=\"{ya:.2}\" x2=\"{x:.2}\" y2=\"{yb:.2}\" stroke=\"{color}\"/>"
            );
        }
    }
    out.push_str("</svg>\n");
    out
}

/// Scatter on log10 axes; non-positive values are skipped.
pub fn log_scatter(title: &str, x_label: &str, y_label: &str, points: &[Point]) -> String {
    let pts: Vec<&Point> = points.iter().filter(|p| p.x > 0.0 && p.y > 0.0).collect();
    let lx: Vec<f64> = pts.iter().map(|p| p.x.log10()).collect();
    let ly: Vec<f64> = pts.iter().map(|p| p.y.log10()).collect();
    let (x0, x1) = lx
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| {
            (a.min(v), b.max(v))
        });
    let (y0, y1) = ly
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| {
            (a.min(v), b.max(v))
        });
    let f = Frame::new(
        x0.floor() - 1.0,
        x1.ceil() + 1.0,
        y0.floor() - 1.0,
        y1.ceil() + 1.0,
    );
    let mut out = String::new();
    header(&mut out, title);
    axes(&mut out, &f, x_label, y_label, true);
    for (k, p) in pts.iter().enumerate() {
        let (x, y) = (f.px(lx[k]), f.py(ly[k]));
        let _ = writeln!(
            out,
            "<circle class=\"point\" cx=\"{x:.2}\" cy=\"{y:.2}\" r=\"4\" fill=\"{}\"/>\
             <text x=\"{:.2}\" y=\"{:.2}\" font-size=\"10\">{}</text>",
            COLORS[k % COLORS.len()],
            x + 6.0,
            y - 6.0,
            escape(p.label)
        );
    }
    out.push_str("</svg>\n");
    out
}
