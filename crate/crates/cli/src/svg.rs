//! Minimal SVG plotting: framed axes with ticks, bars, lines, error bars and
//! colored rectangles.

use std::fmt::Write;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Axis {
    pub lo: f64,
    pub hi: f64,
    pub log: bool,
}

impl Axis {
    pub fn linear(lo: f64, hi: f64) -> Self {
        let (lo, hi) = widen(lo, hi);
        Self { lo, hi, log: false }
    }

    /// Log axis padded out to whole decades.
    pub fn log(lo: f64, hi: f64) -> Self {
        let lo = 10f64.powf(lo.log10().floor());
        let mut hi = 10f64.powf(hi.log10().ceil());
        if hi <= lo {
            hi = lo * 10.0;
        }
        Self { lo, hi, log: true }
    }

    /// Linear axis covering finite `values`, or [0, 1] when there are none.
    pub fn fit(values: impl IntoIterator<Item = f64>) -> Self {
        let (lo, hi) = finite_range(values).unwrap_or((0.0, 1.0));
        Self::linear(lo, hi)
    }

    fn frac(&self, v: f64) -> f64 {
        if self.log {
            (v.log10() - self.lo.log10()) / (self.hi.log10() - self.lo.log10())
        } else {
            (v - self.lo) / (self.hi - self.lo)
        }
    }

    pub fn ticks(&self) -> Vec<f64> {
        if self.log {
            let (a, b) = (
                self.lo.log10().round() as i32,
                self.hi.log10().round() as i32,
            );
            return (a..=b).map(|e| 10f64.powi(e)).collect();
        }
        let step = nice_step((self.hi - self.lo) / 5.0);
        let first = (self.lo / step).ceil() as i64;
        let last = (self.hi / step).floor() as i64;
        (first..=last).map(|k| k as f64 * step).collect()
    }
}

fn widen(lo: f64, hi: f64) -> (f64, f64) {
    if hi > lo {
        (lo, hi)
    } else {
        let pad = if lo == 0.0 { 1.0 } else { 0.5 * lo.abs() };
        (lo - pad, hi + pad)
    }
}

pub fn finite_range(values: impl IntoIterator<Item = f64>) -> Option<(f64, f64)> {
    values
        .into_iter()
        .filter(|v| v.is_finite())
        .fold(None, |acc, v| match acc {
            None => Some((v, v)),
            Some((a, b)) => Some((a.min(v), b.max(v))),
        })
}

fn nice_step(raw: f64) -> f64 {
    let mag = 10f64.powf(raw.log10().floor());
    let f = raw / mag;
    let m = if f <= 1.0 {
        1.0
    } else if f <= 2.0 {
        2.0
    } else if f <= 5.0 {
        5.0
    } else {
        10.0
    };
    m * mag
}

fn label(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let a = v.abs();
    if !(1e-3..1e4).contains(&a) {
        return format!("{v:.0e}");
    }
    let s = format!("{v:.4}");
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

pub fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

pub const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#7f7f7f",
];

/// One figure with a single pair of axes.
pub struct Plot {
    width: f64,
    height: f64,
    margin: [f64; 4],
    pub x: Axis,
    pub y: Axis,
    title: String,
    xlabel: String,
    ylabel: String,
    body: String,
    legend: Vec<(String, String)>,
    extra_right: f64,
}

impl Plot {
    pub fn new(title: &str, xlabel: &str, ylabel: &str, x: Axis, y: Axis) -> Self {
        Self {
            width: 640.0,
            height: 420.0,
            margin: [40.0, 30.0, 55.0, 70.0],
            x,
            y,
            title: title.into(),
            xlabel: xlabel.into(),
            ylabel: ylabel.into(),
            body: String::new(),
            legend: Vec::new(),
            extra_right: 0.0,
        }
    }

    /// Reserves room on the right for a color bar.
    pub fn with_colorbar(mut self) -> Self {
        self.extra_right = 70.0;
        self.width += 70.0;
        self
    }

    fn inner(&self) -> (f64, f64, f64, f64) {
        let [top, right, bottom, left] = self.margin;
        (
            left,
            top,
            self.width - right - left - self.extra_right,
            self.height - top - bottom,
        )
    }

    pub fn px(&self, v: f64) -> f64 {
        let (l, _, w, _) = self.inner();
        l + self.x.frac(v) * w
    }

    pub fn py(&self, v: f64) -> f64 {
        let (_, t, _, h) = self.inner();
        t + (1.0 - self.y.frac(v)) * h
    }

    fn visible(&self, x: f64, y: f64) -> bool {
        x.is_finite() && y.is_finite() && (!self.x.log || x > 0.0) && (!self.y.log || y > 0.0)
    }

    /// Bars spanning [x0, x1] from the bottom of the axis up to `v`.
    pub fn bars(&mut self, bars: &[(f64, f64, f64)], color: &str) {
        let base = self.py(self.y.lo);
        for &(x0, x1, v) in bars {
            if !v.is_finite() {
                continue;
            }
            let (a, b) = (self.px(x0), self.px(x1));
            let top = self.py(v);
            let _ = writeln!(
                self.body,
                r#"<rect class="bar" x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{color}"/>"#,
                a.min(b),
                top.min(base),
                (b - a).abs(),
                (base - top).abs()
            );
        }
    }

    /// Polyline through `pts`, broken at non-finite points and wherever
    /// `break_if` says consecutive points must not be joined.
    pub fn line_broken(
        &mut self,
        pts: &[(f64, f64)],
        color: &str,
        name: Option<&str>,
        break_if: impl Fn(f64, f64) -> bool,
    ) {
        let mut seg: Vec<(f64, f64)> = Vec::new();
        let mut prev: Option<f64> = None;
        let flush = |seg: &mut Vec<(f64, f64)>, body: &mut String| {
            if seg.len() >= 2 {
                let d: Vec<String> = seg.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
                let _ = writeln!(
                    body,
                    r#"<polyline class="line" fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
                    d.join(" ")
                );
            }
            seg.clear();
        };
        for &(x, y) in pts {
            if !self.visible(x, y) {
                flush(&mut seg, &mut self.body);
                prev = None;
                continue;
            }
            if let Some(p) = prev {
                if break_if(p, y) {
                    flush(&mut seg, &mut self.body);
                }
            }
            seg.push((self.px(x), self.py(y)));
            prev = Some(y);
        }
        flush(&mut seg, &mut self.body);
        if let Some(n) = name {
            self.legend.push((n.into(), color.into()));
        }
    }

    pub fn line(&mut self, pts: &[(f64, f64)], color: &str, name: Option<&str>) {
        self.line_broken(pts, color, name, |_, _| false);
    }

    /// Markers with vertical error bars of half-length `err`.
    pub fn points(&mut self, pts: &[(f64, f64, f64)], color: &str) {
        for &(x, y, e) in pts {
            if !self.visible(x, y) {
                continue;
            }
            let (cx, cy) = (self.px(x), self.py(y));
            if e.is_finite() && e > 0.0 {
                let lo = if self.y.log {
                    (y - e).max(self.y.lo)
                } else {
                    y - e
                };
                let _ = writeln!(
                    self.body,
                    r#"<line class="err" x1="{cx:.2}" y1="{:.2}" x2="{cx:.2}" y2="{:.2}" stroke="{color}"/>"#,
                    self.py(lo),
                    self.py(y + e)
                );
            }
            let _ = writeln!(
                self.body,
                r#"<circle class="pt" cx="{cx:.2}" cy="{cy:.2}" r="3" fill="{color}"/>"#
            );
        }
    }

    /// Filled rectangle in data coordinates.
    pub fn rect(&mut self, x0: f64, x1: f64, y0: f64, y1: f64, fill: &str, tooltip: &str) {
        let (a, b) = (self.px(x0), self.px(x1));
        let (c, d) = (self.py(y0), self.py(y1));
        let _ = writeln!(
            self.body,
            r#"<rect class="cell" x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{fill}"><title>{}</title></rect>"#,
            a.min(b),
            c.min(d),
            (b - a).abs(),
            (d - c).abs(),
            escape(tooltip)
        );
    }

    /// Vertical color bar for a continuous scale over [lo, hi].
    pub fn colorbar(&mut self, lo: f64, hi: f64, color: impl Fn(f64) -> String) {
        let (l, t, w, h) = self.inner();
        let x = l + w + 25.0;
        let steps = 50;
        for k in 0..steps {
            let f = (k as f64 + 0.5) / steps as f64;
            let _ = writeln!(
                self.body,
                r#"<rect x="{x:.2}" y="{:.2}" width="15" height="{:.2}" fill="{}"/>"#,
                t + h * (1.0 - (k + 1) as f64 / steps as f64),
                h / steps as f64 + 0.5,
                color(lo + f * (hi - lo))
            );
        }
        for (v, y) in [(hi, t), (lo, t + h)] {
            let _ = writeln!(
                self.body,
                r#"<text x="{:.2}" y="{:.2}" font-size="11">{}</text>"#,
                x + 20.0,
                y + 4.0,
                label(v)
            );
        }
    }

    /// Swatches for categorical colors.
    pub fn key(&mut self, entries: &[(&str, &str)]) {
        for (name, color) in entries {
            self.legend.push((name.to_string(), color.to_string()));
        }
    }

    pub fn finish(self) -> String {
        let (l, t, w, h) = self.inner();
        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{}" viewBox="0 0 {} {}" font-family="sans-serif">"#,
            self.width, self.height, self.width, self.height
        );
        let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="22" font-size="15" text-anchor="middle">{}</text>"#,
            l + w / 2.0,
            escape(&self.title)
        );
        s.push_str(&self.body);
        let _ = writeln!(
            s,
            r#"<rect x="{l:.2}" y="{t:.2}" width="{w:.2}" height="{h:.2}" fill="none" stroke="black"/>"#
        );
        for v in self.x.ticks() {
            let x = self.px(v);
            let _ = writeln!(
                s,
                r#"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="black"/>"#,
                t + h,
                t + h + 5.0
            );
            let _ = writeln!(
                s,
                r#"<text x="{x:.2}" y="{:.2}" font-size="11" text-anchor="middle">{}</text>"#,
                t + h + 18.0,
                label(v)
            );
        }
        for v in self.y.ticks() {
            let y = self.py(v);
            let _ = writeln!(
                s,
                r#"<line x1="{:.2}" y1="{y:.2}" x2="{l:.2}" y2="{y:.2}" stroke="black"/>"#,
                l - 5.0
            );
            let _ = writeln!(
                s,
                r#"<text x="{:.2}" y="{:.2}" font-size="11" text-anchor="end">{}</text>"#,
                l - 8.0,
                y + 4.0,
                label(v)
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" font-size="13" text-anchor="middle">{}</text>"#,
            l + w / 2.0,
            self.height - 12.0,
            escape(&self.xlabel)
        );
        let _ = writeln!(
            s,
            r#"<text x="16" y="{:.1}" font-size="13" text-anchor="middle" transform="rotate(-90 16 {:.1})">{}</text>"#,
            t + h / 2.0,
            t + h / 2.0,
            escape(&self.ylabel)
        );
        for (k, (name, color)) in self.legend.iter().enumerate() {
            let y = t + 12.0 + 16.0 * k as f64;
            let _ = writeln!(
                s,
                r#"<rect class="legend" x="{:.2}" y="{:.2}" width="10" height="10" fill="{color}"/><text x="{:.2}" y="{:.2}" font-size="11">{}</text>"#,
                l + w - 120.0,
                y - 9.0,
                l + w - 105.0,
                y,
                escape(name)
            );
        }
        s.push_str("</svg>\n");
        s
    }
}

/// Blue (−1) through white (0) to red (+1).
pub fn diverging(v: f64) -> String {
    if !v.is_finite() {
        return "#bdbdbd".into();
    }
    let f = v.clamp(-1.0, 1.0);
    let (r, g, b) = if f < 0.0 {
        let a = -f;
        (
            255.0 * (1.0 - a) + 33.0 * a,
            255.0 * (1.0 - a) + 102.0 * a,
            255.0 * (1.0 - a) + 172.0 * a,
        )
    } else {
        (
            255.0 * (1.0 - f) + 178.0 * f,
            255.0 * (1.0 - f) + 24.0 * f,
            255.0 * (1.0 - f) + 43.0 * f,
        )
    };
    format!(
        "#{:02x}{:02x}{:02x}",
        r.round() as u8,
        g.round() as u8,
        b.round() as u8
    )
}

/// White to dark green over [0, 1].
pub fn sequential(f: f64) -> String {
    if !f.is_finite() {
        return "#bdbdbd".into();
    }
    let f = f.clamp(0.0, 1.0);
    let c = |a: f64, b: f64| (a * (1.0 - f) + b * f).round() as u8;
    format!(
        "#{:02x}{:02x}{:02x}",
        c(247.0, 0.0),
        c(252.0, 109.0),
        c(245.0, 44.0)
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ticks_cover_range() {
        let t = Axis::linear(0.0, 1.0).ticks();
        assert_eq!(t.first(), Some(&0.0));
        assert!((t.last().unwrap() - 1.0).abs() < 1e-12);
        let l = Axis::log(3.0, 2000.0);
        assert_eq!(l.ticks(), vec![1.0, 10.0, 100.0, 1000.0, 10000.0]);
    }

    #[test]
    fn degenerate_range_is_widened() {
        let a = Axis::linear(0.3, 0.3);
        assert!(a.hi > a.lo);
        assert!(a.frac(0.3) > 0.0 && a.frac(0.3) < 1.0);
    }

    #[test]
    fn colors() {
        assert_eq!(diverging(0.0), "#ffffff");
        assert_eq!(diverging(1.0), "#b2182b");
        assert_eq!(diverging(-1.0), "#2166ac");
        assert_eq!(diverging(f64::NAN), "#bdbdbd");
    }

    #[test]
    fn lines_break_on_gaps() {
        let mut p = Plot::new(
            "t",
            "x",
            "y",
            Axis::linear(0.0, 3.0),
            Axis::linear(0.0, 1.0),
        );
        p.line(
            &[
                (0.0, 0.0),
                (1.0, 1.0),
                (1.5, f64::NAN),
                (2.0, 0.5),
                (3.0, 0.2),
            ],
            "red",
            None,
        );
        let s = p.finish();
        assert_eq!(s.matches("<polyline").count(), 2);
        assert!(s.starts_with("<svg") && s.trim_end().ends_with("</svg>"));
    }
}
