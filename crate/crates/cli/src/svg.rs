//! Minimal SVG charts: axes, polylines, markers, segments and cells.

use std::fmt::Write as _;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 55.0;
const TICKS: usize = 5;

/// Data extent of `values` padded by 5% on each side; a degenerate range is
/// widened to ±1 around its value.
pub fn extent(values: impl IntoIterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values
        .into_iter()
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo <= f64::EPSILON * lo.abs().max(1.0) {
        return (lo - 1.0, hi + 1.0);
    }
    let pad = 0.05 * (hi - lo);
    (lo - pad, hi + pad)
}

/// Equal-aspect ranges for maps: the shorter side is widened about its centre.
pub fn square_extent(x: (f64, f64), y: (f64, f64)) -> ((f64, f64), (f64, f64)) {
    let aspect = (HEIGHT - TOP - BOTTOM) / (WIDTH - LEFT - RIGHT);
    let (w, h) = (x.1 - x.0, y.1 - y.0);
    if h / w > aspect {
        let half = h / aspect / 2.0;
        let c = (x.0 + x.1) / 2.0;
        ((c - half, c + half), y)
    } else {
        let half = w * aspect / 2.0;
        let c = (y.0 + y.1) / 2.0;
        (x, (c - half, c + half))
    }
}

/// Stroke style for lines and segments.
#[derive(Debug, Clone, Copy)]
pub struct Stroke<'a> {
    pub colour: &'a str,
    pub width: f64,
    pub dash: Option<&'a str>,
}

impl<'a> Stroke<'a> {
    pub fn solid(colour: &'a str, width: f64) -> Self {
        Self {
            colour,
            width,
            dash: None,
        }
    }

    pub fn dashed(colour: &'a str, width: f64, dash: &'a str) -> Self {
        Self {
            colour,
            width,
            dash: Some(dash),
        }
    }

    fn attrs(&self) -> String {
        let mut s = format!(
            "stroke=\"{}\" stroke-width=\"{}\" fill=\"none\"",
            self.colour, self.width
        );
        if let Some(d) = self.dash {
            let _ = write!(s, " stroke-dasharray=\"{d}\"");
        }
        s
    }
}

pub struct Figure {
    title: String,
    x_label: String,
    y_label: String,
    x: (f64, f64),
    y: (f64, f64),
    body: String,
    legend: Vec<(String, String)>,
}

impl Figure {
    pub fn new(title: &str, x_label: &str, y_label: &str, x: (f64, f64), y: (f64, f64)) -> Self {
        Self {
            title: title.into(),
            x_label: x_label.into(),
            y_label: y_label.into(),
            x,
            y,
            body: String::new(),
            legend: Vec::new(),
        }
    }

    fn sx(&self, v: f64) -> f64 {
        LEFT + (v - self.x.0) / (self.x.1 - self.x.0) * (WIDTH - LEFT - RIGHT)
    }

    fn sy(&self, v: f64) -> f64 {
        HEIGHT - BOTTOM - (v - self.y.0) / (self.y.1 - self.y.0) * (HEIGHT - TOP - BOTTOM)
    }

    pub fn legend(&mut self, colour: &str, label: &str) {
        self.legend.push((colour.into(), label.into()));
    }

    pub fn polyline(&mut self, pts: &[(f64, f64)], stroke: Stroke<'_>) {
        let coords: Vec<String> = pts
            .iter()
            .filter(|(a, b)| a.is_finite() && b.is_finite())
            .map(|&(a, b)| format!("{:.2},{:.2}", self.sx(a), self.sy(b)))
            .collect();
        if coords.len() < 2 {
            return;
        }
        let _ = writeln!(
            self.body,
            "<polyline points=\"{}\" {}/>",
            coords.join(" "),
            stroke.attrs()
        );
    }

    pub fn segment(&mut self, a: (f64, f64), b: (f64, f64), stroke: Stroke<'_>) {
        let _ = writeln!(
            self.body,
            "<line x1=\"{:.2}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\" {}/>",
            self.sx(a.0),
            self.sy(a.1),
            self.sx(b.0),
            self.sy(b.1),
            stroke.attrs()
        );
    }

    pub fn points(&mut self, pts: &[(f64, f64)], colour: &str, radius: f64) {
        for &(a, b) in pts.iter().filter(|(a, b)| a.is_finite() && b.is_finite()) {
            let _ = writeln!(
                self.body,
                "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"{radius}\" fill=\"{colour}\"/>",
                self.sx(a),
                self.sy(b)
            );
        }
    }

    pub fn label(&mut self, at: (f64, f64), text: &str) {
        let _ = writeln!(
            self.body,
            "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"8\">{}</text>",
            self.sx(at.0) + 3.0,
            self.sy(at.1) - 3.0,
            xml_escape(text)
        );
    }

    /// Filled axis-aligned rectangle between two data corners.
    pub fn cell(&mut self, a: (f64, f64), b: (f64, f64), fill: &str) {
        let (x0, x1) = (self.sx(a.0).min(self.sx(b.0)), self.sx(a.0).max(self.sx(b.0)));
        let (y0, y1) = (self.sy(a.1).min(self.sy(b.1)), self.sy(a.1).max(self.sy(b.1)));
        let _ = writeln!(
            self.body,
            "<rect x=\"{x0:.2}\" y=\"{y0:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"{fill}\"/>",
            x1 - x0,
            y1 - y0
        );
    }

    pub fn finish(self, header: &str) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "<?xml version=\"1.0\" encoding=\"UTF-8\"?>");
        out.push_str(header);
        let _ = writeln!(
            out,
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\" font-family=\"sans-serif\">"
        );
        let _ = writeln!(out, "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>");
        let _ = writeln!(
            out,
            "<text x=\"{}\" y=\"22\" font-size=\"14\" text-anchor=\"middle\">{}</text>",
            WIDTH / 2.0,
            xml_escape(&self.title)
        );
        out.push_str(&self.body);
        let (x0, y0, x1, y1) = (LEFT, TOP, WIDTH - RIGHT, HEIGHT - BOTTOM);
        let _ = writeln!(
            out,
            "<rect x=\"{x0}\" y=\"{y0}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"black\"/>",
            x1 - x0,
            y1 - y0
        );
        for i in 0..=TICKS {
            let f = i as f64 / TICKS as f64;
            let xv = self.x.0 + f * (self.x.1 - self.x.0);
            let yv = self.y.0 + f * (self.y.1 - self.y.0);
            let px = self.sx(xv);
            let py = self.sy(yv);
            let _ = writeln!(
                out,
                "<line x1=\"{px:.2}\" y1=\"{y1}\" x2=\"{px:.2}\" y2=\"{}\" stroke=\"black\"/>",
                y1 + 5.0
            );
            let _ = writeln!(
                out,
                "<text x=\"{px:.2}\" y=\"{}\" font-size=\"10\" text-anchor=\"middle\">{}</text>",
                y1 + 17.0,
                tick(xv)
            );
            let _ = writeln!(
                out,
                "<line x1=\"{}\" y1=\"{py:.2}\" x2=\"{x0}\" y2=\"{py:.2}\" stroke=\"black\"/>",
                x0 - 5.0
            );
            let _ = writeln!(
                out,
                "<text x=\"{}\" y=\"{:.2}\" font-size=\"10\" text-anchor=\"end\">{}</text>",
                x0 - 8.0,
                py + 3.5,
                tick(yv)
            );
        }
        let _ = writeln!(
            out,
            "<text x=\"{}\" y=\"{}\" font-size=\"12\" text-anchor=\"middle\">{}</text>",
            (x0 + x1) / 2.0,
            HEIGHT - 12.0,
            xml_escape(&self.x_label)
        );
        let _ = writeln!(
            out,
            "<text x=\"16\" y=\"{0}\" font-size=\"12\" text-anchor=\"middle\" transform=\"rotate(-90 16 {0})\">{1}</text>",
            (y0 + y1) / 2.0,
            xml_escape(&self.y_label)
        );
        for (i, (colour, label)) in self.legend.iter().enumerate() {
            let ly = y0 + 14.0 + 14.0 * i as f64;
            let _ = writeln!(
                out,
                "<rect x=\"{}\" y=\"{}\" width=\"10\" height=\"10\" fill=\"{colour}\"/>",
                x1 - 150.0,
                ly - 9.0
            );
            let _ = writeln!(
                out,
                "<text x=\"{}\" y=\"{ly}\" font-size=\"10\">{}</text>",
                x1 - 135.0,
                xml_escape(label)
            );
        }
        out.push_str("</svg>\n");
        out
    }
}

fn tick(v: f64) -> String {
    let a = v.abs();
    if a == 0.0 || (1e-2..1e4).contains(&a) {
        let s = format!("{v:.2}");
        let s = s.trim_end_matches('0').trim_end_matches('.');
        if s == "-0" {
            "0".into()
        } else {
            s.to_string()
        }
    } else {
        format!("{v:.1e}")
    }
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Blue (low) to red (high) through white.
pub fn diverging(t: f64) -> String {
    let t = t.clamp(0.0, 1.0);
    let (r, g, b) = if t < 0.5 {
        let u = t / 0.5;
        (40.0 + u * 215.0, 90.0 + u * 165.0, 200.0 + u * 55.0)
    } else {
        let u = (t - 0.5) / 0.5;
        (255.0 - u * 35.0, 255.0 - u * 205.0, 255.0 - u * 215.0)
    };
    format!("#{:02x}{:02x}{:02x}", r.round() as u8, g.round() as u8, b.round() as u8)
}
