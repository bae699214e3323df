//! Minimal static line charts.

use std::fmt::Write;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN: f64 = 50.0;
const COLORS: [&str; 6] = ["#1f4e79", "#b22222", "#2e7d32", "#6a1b9a", "#ef6c00", "#455a64"];

pub struct Line {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    pub dashed: bool,
}

impl Line {
    pub fn new(label: impl Into<String>, points: Vec<(f64, f64)>) -> Self {
        Self {
            label: label.into(),
            points,
            dashed: false,
        }
    }

    pub fn dashed(mut self) -> Self {
        self.dashed = true;
        self
    }
}

pub struct Chart {
    pub title: String,
    pub x_label: String,
    pub lines: Vec<Line>,
    /// `(x, lo, hi)` shaded as one polygon.
    pub band: Vec<(f64, f64, f64)>,
    pub vline: Option<f64>,
    pub hline: Option<f64>,
}

impl Chart {
    pub fn new(title: impl Into<String>, x_label: impl Into<String>) -> Self {
        Self {
            title: title.into(),
            x_label: x_label.into(),
            lines: Vec::new(),
            band: Vec::new(),
            vline: None,
            hline: None,
        }
    }

    fn bounds(&self) -> (f64, f64, f64, f64) {
        let xs = self
            .lines
            .iter()
            .flat_map(|l| l.points.iter().map(|p| p.0))
            .chain(self.band.iter().map(|b| b.0));
        let ys = self
            .lines
            .iter()
            .flat_map(|l| l.points.iter().map(|p| p.1))
            .chain(self.band.iter().flat_map(|b| [b.1, b.2]))
            .chain(self.hline);
        let (mut x0, mut x1) = xs.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
        let (mut y0, mut y1) = ys
            .filter(|y| y.is_finite())
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), y| (a.min(y), b.max(y)));
        if !x0.is_finite() {
            (x0, x1) = (0.0, 1.0);
        }
        if !y0.is_finite() {
            (y0, y1) = (0.0, 1.0);
        }
        if x1 - x0 <= 0.0 {
            x1 = x0 + 1.0;
        }
        if y1 - y0 <= 0.0 {
            (y0, y1) = (y0 - 0.5, y1 + 0.5);
        }
        let pad = 0.05 * (y1 - y0);
        (x0, x1, y0 - pad, y1 + pad)
    }

    pub fn render(&self) -> String {
        let (x0, x1, y0, y1) = self.bounds();
        let sx = |x: f64| MARGIN + (x - x0) / (x1 - x0) * (WIDTH - 2.0 * MARGIN);
        let sy = |y: f64| HEIGHT - MARGIN - (y - y0) / (y1 - y0) * (HEIGHT - 2.0 * MARGIN);
        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
        let _ = writeln!(
            s,
            r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#,
            WIDTH / 2.0,
            escape(&self.title)
        );
        if !self.band.is_empty() {
            let mut pts: Vec<String> = self
                .band
                .iter()
                .map(|b| format!("{:.2},{:.2}", sx(b.0), sy(b.2)))
                .collect();
            pts.extend(self.band.iter().rev().map(|b| format!("{:.2},{:.2}", sx(b.0), sy(b.1))));
            let _ = writeln!(
                s,
                r##"<polygon points="{}" fill="#9e9e9e" fill-opacity="0.35" stroke="none"/>"##,
                pts.join(" ")
            );
        }
        let _ = writeln!(
            s,
            r#"<rect x="{MARGIN}" y="{MARGIN}" width="{}" height="{}" fill="none" stroke="black"/>"#,
            WIDTH - 2.0 * MARGIN,
            HEIGHT - 2.0 * MARGIN
        );
        if let Some(y) = self.hline.filter(|y| *y >= y0 && *y <= y1) {
            let _ = writeln!(
                s,
                r#"<line x1="{MARGIN}" x2="{}" y1="{1:.2}" y2="{1:.2}" stroke="gray"/>"#,
                WIDTH - MARGIN,
                sy(y)
            );
        }
        if let Some(x) = self.vline.filter(|x| *x >= x0 && *x <= x1) {
            let _ = writeln!(
                s,
                r#"<line x1="{0:.2}" x2="{0:.2}" y1="{MARGIN}" y2="{1}" stroke="gray" stroke-dasharray="4 3"/>"#,
                sx(x),
                HEIGHT - MARGIN
            );
        }
        for (i, line) in self.lines.iter().enumerate() {
            let color = COLORS[i % COLORS.len()];
            let pts: Vec<String> = line
                .points
                .iter()
                .filter(|p| p.1.is_finite())
                .map(|p| format!("{:.2},{:.2}", sx(p.0), sy(p.1)))
                .collect();
            let dash = if line.dashed { r#" stroke-dasharray="6 4""# } else { "" };
            let _ = writeln!(
                s,
                r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"{dash}/>"#,
                pts.join(" ")
            );
            let _ = writeln!(
                s,
                r#"<text x="{}" y="{}" fill="{color}">{}</text>"#,
                MARGIN + 8.0,
                MARGIN + 16.0 + 14.0 * i as f64,
                escape(&line.label)
            );
        }
        for (v, anchor, x, y) in [
            (x0, "start", MARGIN, HEIGHT - MARGIN + 16.0),
            (x1, "end", WIDTH - MARGIN, HEIGHT - MARGIN + 16.0),
        ] {
            let _ = writeln!(
                s,
                r#"<text x="{x}" y="{y}" text-anchor="{anchor}">{}</text>"#,
                fmt_tick(v)
            );
        }
        for (v, y) in [(y0, HEIGHT - MARGIN), (y1, MARGIN + 10.0)] {
            let _ = writeln!(
                s,
                r#"<text x="{}" y="{y}" text-anchor="end">{}</text>"#,
                MARGIN - 4.0,
                fmt_tick(v)
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
            WIDTH / 2.0,
            HEIGHT - 12.0,
            escape(&self.x_label)
        );
        s.push_str("</svg>\n");
        s
    }
}

fn fmt_tick(v: f64) -> String {
    if v.abs() >= 100.0 || v == v.round() {
        format!("{v:.0}")
    } else {
        format!("{v:.3}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_band_and_lines() {
        let mut c = Chart::new("effect <UG>", "period");
        c.lines
            .push(Line::new("effect", vec![(-1.0, 0.0), (0.0, -0.1), (1.0, -0.2)]));
        c.band = vec![(-1.0, -0.05, 0.05), (0.0, -0.05, 0.05), (1.0, -0.06, 0.06)];
        c.vline = Some(-0.5);
        c.hline = Some(0.0);
        let s = c.render();
        assert!(s.starts_with("<svg"));
        assert!(s.contains("<polygon"));
        assert!(s.contains("<polyline"));
        assert!(s.contains("effect &lt;UG&gt;"));
        assert_eq!(s, c.render());
    }

    #[test]
    fn empty_chart_is_valid() {
        assert!(Chart::new("", "").render().ends_with("</svg>\n"));
    }
}
