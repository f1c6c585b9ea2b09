//! Minimal SVG charts: lines with optional sleeves, scatter points and box
//! plots on linear axes.

use std::fmt::Write as _;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 170.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 55.0;
const PALETTE: [&str; 10] =
    ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mark {
    Line,
    Scatter,
    Dashed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
    pub mark: Mark,
    /// `(x, lo, hi)` sleeve drawn behind the line.
    pub band: Vec<(f64, f64, f64)>,
}

impl Series {
    pub fn line(name: impl Into<String>, points: Vec<(f64, f64)>) -> Self {
        Series { name: name.into(), points, mark: Mark::Line, band: Vec::new() }
    }

    pub fn scatter(name: impl Into<String>, points: Vec<(f64, f64)>) -> Self {
        Series { name: name.into(), points, mark: Mark::Scatter, band: Vec::new() }
    }

    pub fn with_band(mut self, band: Vec<(f64, f64, f64)>) -> Self {
        self.band = band;
        self
    }
}

/// Five-number summary of one category.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxStat {
    pub label: String,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

impl BoxStat {
    /// Linear-interpolation quartiles; `None` for no values.
    pub fn from_values(label: impl Into<String>, values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let q = |p: f64| {
            let pos = p * (v.len() - 1) as f64;
            let (i, frac) = (pos.floor() as usize, pos.fract());
            if i + 1 < v.len() {
                v[i] + frac * (v[i + 1] - v[i])
            } else {
                v[i]
            }
        };
        Some(BoxStat { label: label.into(), min: v[0], q1: q(0.25), median: q(0.5), q3: q(0.75), max: v[v.len() - 1] })
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Chart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
    pub boxes: Vec<BoxStat>,
    pub x_range: Option<(f64, f64)>,
    pub y_range: Option<(f64, f64)>,
}

struct Frame {
    x: (f64, f64),
    y: (f64, f64),
}

impl Frame {
    fn px(&self, x: f64) -> f64 {
        LEFT + (x - self.x.0) / (self.x.1 - self.x.0) * (WIDTH - LEFT - RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        HEIGHT - BOTTOM - (y - self.y.0) / (self.y.1 - self.y.0) * (HEIGHT - TOP - BOTTOM)
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn tick_label(v: f64) -> String {
    if v == 0.0 {
        return String::from("0");
    }
    let s = format!("{v:.3}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if v.abs() >= 1e4 || v.abs() < 1e-3 {
        format!("{v:.2e}")
    } else {
        s.to_string()
    }
}

fn padded(lo: f64, hi: f64) -> (f64, f64) {
    if !(lo.is_finite() && hi.is_finite()) {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        return (lo - 0.5, hi + 0.5);
    }
    let pad = 0.05 * (hi - lo);
    (lo - pad, hi + pad)
}

impl Chart {
    pub fn new(title: impl Into<String>, x_label: impl Into<String>, y_label: impl Into<String>) -> Self {
        Chart { title: title.into(), x_label: x_label.into(), y_label: y_label.into(), ..Chart::default() }
    }

    fn frame(&self) -> Frame {
        let finite = |v: &f64| v.is_finite();
        let xs = self.series.iter().flat_map(|s| s.points.iter().map(|p| p.0).chain(s.band.iter().map(|b| b.0)));
        let ys = self.series.iter().flat_map(|s| {
            s.points.iter().map(|p| p.1).chain(s.band.iter().flat_map(|b| [b.1, b.2]))
        });
        let ys = ys.chain(self.boxes.iter().flat_map(|b| [b.min, b.max])).filter(finite);
        let span = |it: &mut dyn Iterator<Item = f64>| it.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
        let x = if self.boxes.is_empty() {
            self.x_range.unwrap_or_else(|| {
                let (a, b) = span(&mut xs.filter(finite));
                padded(a, b)
            })
        } else {
            (-0.5, self.boxes.len() as f64 - 0.5)
        };
        let y = self.y_range.unwrap_or_else(|| {
            let (a, b) = span(&mut ys.into_iter());
            padded(a, b)
        });
        Frame { x, y }
    }

    pub fn render(&self) -> String {
        let f = self.frame();
        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">"#
        );
        let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
        let _ = writeln!(s, r#"<text x="{}" y="22" font-size="14" text-anchor="middle">{}</text>"#, WIDTH / 2.0, escape(&self.title));
        self.axes(&mut s, &f);
        for (i, b) in self.boxes.iter().enumerate() {
            let c = PALETTE[i % PALETTE.len()];
            let (x, w) = (f.px(i as f64), 0.3 * (f.px(1.0) - f.px(0.0)));
            let _ = writeln!(
                s,
                r#"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="{c}"/><rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{c}" fill-opacity="0.3" stroke="{c}"/><line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="{c}" stroke-width="2"/>"#,
                f.py(b.min),
                f.py(b.max),
                x - w / 2.0,
                f.py(b.q3),
                w,
                (f.py(b.q1) - f.py(b.q3)).max(0.5),
                x - w / 2.0,
                f.py(b.median),
                x + w / 2.0,
                f.py(b.median)
            );
            let _ = writeln!(
                s,
                r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
                HEIGHT - BOTTOM + 16.0,
                escape(&b.label)
            );
        }
        for (i, series) in self.series.iter().enumerate() {
            let c = PALETTE[i % PALETTE.len()];
            if !series.band.is_empty() {
                let upper = series.band.iter().map(|&(x, _, hi)| format!("{:.2},{:.2}", f.px(x), f.py(hi)));
                let lower = series.band.iter().rev().map(|&(x, lo, _)| format!("{:.2},{:.2}", f.px(x), f.py(lo)));
                let pts: Vec<String> = upper.chain(lower).collect();
                let _ = writeln!(s, r#"<polygon points="{}" fill="{c}" fill-opacity="0.15" stroke="none"/>"#, pts.join(" "));
            }
            let pts: Vec<(f64, f64)> =
                series.points.iter().filter(|p| p.0.is_finite() && p.1.is_finite()).map(|&(x, y)| (f.px(x), f.py(y))).collect();
            match series.mark {
                Mark::Scatter => {
                    for (x, y) in pts {
                        let _ = writeln!(s, r#"<circle cx="{x:.2}" cy="{y:.2}" r="3.5" fill="{c}" fill-opacity="0.8"/>"#);
                    }
                }
                Mark::Line | Mark::Dashed => {
                    let dash = if series.mark == Mark::Dashed { r#" stroke-dasharray="5,4""# } else { "" };
                    let p: Vec<String> = pts.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
                    let _ = writeln!(
                        s,
                        r#"<polyline points="{}" fill="none" stroke="{c}" stroke-width="1.8"{dash}/>"#,
                        p.join(" ")
                    );
                }
            }
            let ly = TOP + 14.0 + 16.0 * i as f64;
            let lx = WIDTH - RIGHT + 12.0;
            let _ = writeln!(
                s,
                r#"<rect x="{lx}" y="{:.1}" width="12" height="4" fill="{c}"/><text x="{}" y="{ly:.1}">{}</text>"#,
                ly - 5.0,
                lx + 17.0,
                escape(&series.name)
            );
        }
        s.push_str("</svg>\n");
        s
    }

    fn axes(&self, s: &mut String, f: &Frame) {
        let (x0, x1, y0, y1) = (LEFT, WIDTH - RIGHT, TOP, HEIGHT - BOTTOM);
        let _ = writeln!(s, r#"<rect x="{x0}" y="{y0}" width="{}" height="{}" fill="none" stroke="black"/>"#, x1 - x0, y1 - y0);
        for k in 0..=4 {
            let v = f.y.0 + (f.y.1 - f.y.0) * k as f64 / 4.0;
            let y = f.py(v);
            let _ = writeln!(
                s,
                r##"<line x1="{x0}" y1="{y:.2}" x2="{x1}" y2="{y:.2}" stroke="#ddd"/><text x="{}" y="{:.2}" text-anchor="end">{}</text>"##,
                x0 - 5.0,
                y + 4.0,
                tick_label(v)
            );
        }
        if self.boxes.is_empty() {
            for k in 0..=4 {
                let v = f.x.0 + (f.x.1 - f.x.0) * k as f64 / 4.0;
                let x = f.px(v);
                let _ = writeln!(
                    s,
                    r#"<line x1="{x:.2}" y1="{y1}" x2="{x:.2}" y2="{}" stroke="black"/><text x="{x:.2}" y="{}" text-anchor="middle">{}</text>"#,
                    y1 + 4.0,
                    y1 + 16.0,
                    tick_label(v)
                );
            }
        }
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
            (x0 + x1) / 2.0,
            HEIGHT - 12.0,
            escape(&self.x_label)
        );
        let _ = writeln!(
            s,
            r#"<text x="16" y="{:.1}" text-anchor="middle" transform="rotate(-90 16 {:.1})">{}</text>"#,
            (y0 + y1) / 2.0,
            (y0 + y1) / 2.0,
            escape(&self.y_label)
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quartiles() {
        let b = BoxStat::from_values("a", &[4.0, 1.0, 3.0, 2.0, 5.0]).unwrap();
        assert_eq!((b.min, b.q1, b.median, b.q3, b.max), (1.0, 2.0, 3.0, 4.0, 5.0));
        let b = BoxStat::from_values("b", &[1.0, 2.0]).unwrap();
        assert_eq!((b.q1, b.median, b.q3), (1.25, 1.5, 1.75));
        assert!(BoxStat::from_values("c", &[]).is_none());
    }

    #[test]
    fn renders_well_formed_markup() {
        let mut c = Chart::new("A <title>", "x", "y");
        c.series.push(Series::line("s1", vec![(0.0, 1.0), (1.0, 2.0)]).with_band(vec![(0.0, 0.5, 1.5), (1.0, 1.5, 2.5)]));
        c.series.push(Series::scatter("s2", vec![(0.5, f64::NAN), (0.5, 1.5)]));
        let svg = c.render();
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        assert!(svg.contains("A &lt;title&gt;"));
        assert_eq!(svg.matches("<circle").count(), 1);
        assert_eq!(svg.matches("<polygon").count(), 1);
        assert!(!svg.contains("NaN"));
    }

    #[test]
    fn degenerate_ranges_stay_finite() {
        let mut c = Chart::new("flat", "x", "y");
        c.series.push(Series::line("s", vec![(1.0, 3.0), (1.0, 3.0)]));
        assert!(!c.render().contains("NaN"));
        let mut b = Chart::new("boxes", "", "acc");
        b.boxes.push(BoxStat::from_values("only", &[0.9]).unwrap());
        let svg = b.render();
        assert!(svg.contains(">only<") && !svg.contains("NaN"));
    }
}
