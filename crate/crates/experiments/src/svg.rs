//! Minimal static SVG plots: line/scatter charts and cell grids.

use std::fmt::Write;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 480.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 160.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;
/// Points per series beyond which a series is thinned evenly.
pub const MAX_POINTS: usize = 20_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Style {
    Line,
    Dots,
}

#[derive(Debug, Clone)]
pub struct Series {
    pub label: String,
    pub color: &'static str,
    pub style: Style,
    pub points: Vec<(f64, f64)>,
}

impl Series {
    pub fn new(label: &str, color: &'static str, style: Style, points: Vec<(f64, f64)>) -> Self {
        Self { label: label.into(), color, style, points }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Chart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub log_y: bool,
    pub series: Vec<Series>,
    /// Horizontal reference lines `(y, label)`.
    pub hlines: Vec<(f64, String)>,
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn thin(points: &[(f64, f64)]) -> impl Iterator<Item = &(f64, f64)> {
    let step = points.len().div_ceil(MAX_POINTS).max(1);
    points.iter().step_by(step)
}

struct Frame {
    x: (f64, f64),
    y: (f64, f64),
}

impl Frame {
    fn fit(xs: impl Iterator<Item = f64>, ys: impl Iterator<Item = f64>) -> Self {
        let span = |it: &mut dyn Iterator<Item = f64>| {
            let (lo, hi) = it
                .filter(|v| v.is_finite())
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
            if !lo.is_finite() {
                (0.0, 1.0)
            } else if lo == hi {
                (lo - 0.5, hi + 0.5)
            } else {
                (lo, hi)
            }
        };
        let mut xs = xs;
        let mut ys = ys;
        Self { x: span(&mut xs), y: span(&mut ys) }
    }

    fn px(&self, x: f64) -> f64 {
        LEFT + (x - self.x.0) / (self.x.1 - self.x.0) * (WIDTH - LEFT - RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        HEIGHT - BOTTOM - (y - self.y.0) / (self.y.1 - self.y.0) * (HEIGHT - TOP - BOTTOM)
    }
}

fn open(out: &mut String, title: &str) {
    let _ = write!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
         font-family=\"sans-serif\" font-size=\"12\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <text x=\"{}\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">{}</text>\n",
        WIDTH / 2.0,
        esc(title)
    );
}

fn axes(out: &mut String, f: &Frame, x_label: &str, y_label: &str, log_y: bool) {
    let (x0, x1) = (LEFT, WIDTH - RIGHT);
    let (y0, y1) = (HEIGHT - BOTTOM, TOP);
    let _ = writeln!(
        out,
        "<rect x=\"{x0}\" y=\"{y1}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"black\"/>",
        x1 - x0,
        y0 - y1
    );
    for i in 0..=4 {
        let fx = f.x.0 + (f.x.1 - f.x.0) * i as f64 / 4.0;
        let fy = f.y.0 + (f.y.1 - f.y.0) * i as f64 / 4.0;
        let ylab = if log_y { format!("1e{fy:.1}") } else { tick(fy) };
        let _ = writeln!(
            out,
            "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\">{}</text>\n\
             <text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"end\">{}</text>",
            f.px(fx),
            y0 + 16.0,
            tick(fx),
            x0 - 6.0,
            f.py(fy) + 4.0,
            ylab
        );
    }
    let _ = writeln!(
        out,
        "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\">{}</text>\n\
         <text x=\"16\" y=\"{:.2}\" text-anchor=\"middle\" transform=\"rotate(-90 16 {:.2})\">{}</text>",
        (x0 + x1) / 2.0,
        HEIGHT - 18.0,
        esc(x_label),
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0,
        esc(y_label)
    );
}

fn tick(v: f64) -> String {
    if v != 0.0 && (v.abs() >= 1e4 || v.abs() < 1e-2) {
        format!("{v:.2e}")
    } else {
        format!("{v:.3}")
    }
}

fn legend(out: &mut String, entries: &[(String, &str)]) {
    for (i, (label, color)) in entries.iter().enumerate() {
        let y = TOP + 10.0 + 18.0 * i as f64;
        let x = WIDTH - RIGHT + 12.0;
        let _ = writeln!(
            out,
            "<rect x=\"{x}\" y=\"{}\" width=\"12\" height=\"12\" fill=\"{color}\"/>\
             <text x=\"{}\" y=\"{}\">{}</text>",
            y - 10.0,
            x + 18.0,
            y,
            esc(label)
        );
    }
}

impl Chart {
    pub fn render(&self) -> String {
        let tf = |y: f64| if self.log_y { if y > 0.0 { y.log10() } else { f64::NAN } } else { y };
        let frame = Frame::fit(
            self.series.iter().flat_map(|s| s.points.iter().map(|p| p.0)),
            self.series
                .iter()
                .flat_map(|s| s.points.iter().map(|p| tf(p.1)))
                .chain(self.hlines.iter().map(|h| tf(h.0))),
        );
        let mut out = String::new();
        open(&mut out, &self.title);
        axes(&mut out, &frame, &self.x_label, &self.y_label, self.log_y);
        for (y, _) in &self.hlines {
            let py = frame.py(tf(*y));
            if py.is_finite() {
                let _ = writeln!(
                    out,
                    "<line x1=\"{LEFT}\" x2=\"{}\" y1=\"{py:.2}\" y2=\"{py:.2}\" stroke=\"gray\" stroke-dasharray=\"6 4\"/>",
                    WIDTH - RIGHT
                );
            }
        }
        for s in &self.series {
            let pts: Vec<(f64, f64)> = thin(&s.points)
                .map(|&(x, y)| (frame.px(x), frame.py(tf(y))))
                .filter(|(x, y)| x.is_finite() && y.is_finite())
                .collect();
            match s.style {
                Style::Line => {
                    let mut d = String::new();
                    for (i, (x, y)) in pts.iter().enumerate() {
                        let _ = write!(d, "{}{x:.2},{y:.2}", if i == 0 { "M" } else { " L" });
                    }
                    let _ = writeln!(out, "<path d=\"{d}\" fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\"/>", s.color);
                }
                Style::Dots => {
                    let _ = writeln!(out, "<g fill=\"{}\">", s.color);
                    for (x, y) in pts {
                        let _ = writeln!(out, "<circle cx=\"{x:.2}\" cy=\"{y:.2}\" r=\"1.2\"/>");
                    }
                    out.push_str("</g>\n");
                }
            }
        }
        let mut entries: Vec<(String, &str)> = self.series.iter().map(|s| (s.label.clone(), s.color)).collect();
        entries.extend(self.hlines.iter().map(|h| (h.1.clone(), "gray")));
        legend(&mut out, &entries);
        out.push_str("</svg>\n");
        out
    }
}

/// Colour per cell on a regular grid; `cells[j][i]` is column `i` of row `j`.
#[derive(Debug, Clone)]
pub struct Grid {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    pub cells: Vec<Vec<String>>,
    pub legend: Vec<(String, &'static str)>,
}

impl Grid {
    pub fn render(&self) -> String {
        let frame = Frame::fit(self.xs.iter().copied(), self.ys.iter().copied());
        let mut out = String::new();
        open(&mut out, &self.title);
        let cw = (WIDTH - LEFT - RIGHT) / self.xs.len() as f64;
        let ch = (HEIGHT - TOP - BOTTOM) / self.ys.len() as f64;
        for (j, row) in self.cells.iter().enumerate() {
            for (i, color) in row.iter().enumerate() {
                let _ = writeln!(
                    out,
                    "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"{color}\"/>",
                    LEFT + cw * i as f64,
                    HEIGHT - BOTTOM - ch * (j + 1) as f64,
                    cw + 0.05,
                    ch + 0.05
                );
            }
        }
        axes(&mut out, &frame, &self.x_label, &self.y_label, false);
        legend(&mut out, &self.legend.iter().map(|(l, c)| (l.clone(), *c)).collect::<Vec<_>>());
        out.push_str("</svg>\n");
        out
    }
}

/// Blue-to-yellow ramp for `t ∈ [0, 1]`; grey for non-finite input.
pub fn ramp(t: f64) -> String {
    if !t.is_finite() {
        return "#bbbbbb".into();
    }
    let t = t.clamp(0.0, 1.0);
    let lerp = |a: f64, b: f64| (a + (b - a) * t).round() as u8;
    format!("#{:02x}{:02x}{:02x}", lerp(68.0, 253.0), lerp(1.0, 231.0), lerp(84.0, 37.0))
}
