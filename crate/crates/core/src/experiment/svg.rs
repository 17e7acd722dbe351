//! Minimal SVG charts: grouped bars with error bars, line plots and a
//! quadrant scatter.

use std::fmt::Write;

const W: f64 = 720.0;
const H: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 160.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 70.0;
const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Data range padded by 5% and always containing zero.
fn padded_range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (mut lo, mut hi) = (0.0f64, 0.0f64);
    for v in values.filter(|v| v.is_finite()) {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if hi - lo < 1e-12 {
        hi = lo + 1.0;
    }
    let pad = 0.05 * (hi - lo);
    (lo - pad, hi + pad)
}

struct Frame {
    svg: String,
    y: (f64, f64),
    x: (f64, f64),
}

impl Frame {
    fn new(title: &str, x_label: &str, y_label: &str, x: (f64, f64), y: (f64, f64)) -> Frame {
        let mut svg = String::new();
        let _ = write!(
            svg,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="11">
<rect width="{W}" height="{H}" fill="white"/>
<text x="{tx}" y="22" text-anchor="middle" font-size="14">{title}</text>
<text x="{tx}" y="{xl}" text-anchor="middle">{x_label}</text>
<text x="16" y="{ty}" text-anchor="middle" transform="rotate(-90 16 {ty})">{y_label}</text>
"#,
            tx = LEFT + (W - LEFT - RIGHT) / 2.0,
            xl = H - 12.0,
            ty = TOP + (H - TOP - BOTTOM) / 2.0,
            title = escape(title),
            x_label = escape(x_label),
            y_label = escape(y_label),
        );
        let mut f = Frame { svg, y, x };
        f.axes();
        f
    }

    fn px(&self, x: f64) -> f64 {
        LEFT + (x - self.x.0) / (self.x.1 - self.x.0) * (W - LEFT - RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        H - BOTTOM - (y - self.y.0) / (self.y.1 - self.y.0) * (H - TOP - BOTTOM)
    }

    fn axes(&mut self) {
        let (x0, x1, y0, y1) = (LEFT, W - RIGHT, TOP, H - BOTTOM);
        let _ = writeln!(self.svg, r#"<rect x="{x0}" y="{y0}" width="{}" height="{}" fill="none" stroke="black"/>"#, x1 - x0, y1 - y0);
        for i in 0..=5 {
            let v = self.y.0 + (self.y.1 - self.y.0) * i as f64 / 5.0;
            let y = self.py(v);
            let _ = writeln!(
                self.svg,
                r##"<line x1="{x0}" y1="{y:.2}" x2="{x1}" y2="{y:.2}" stroke="#e0e0e0"/><text x="{}" y="{:.2}" text-anchor="end">{v:.3}</text>"##,
                x0 - 4.0,
                y + 4.0
            );
        }
    }

    fn hline(&mut self, y: f64, dash: bool) {
        let py = self.py(y);
        let style = if dash { r#" stroke-dasharray="4 3""# } else { "" };
        let _ = writeln!(self.svg, r#"<line x1="{LEFT}" y1="{py:.2}" x2="{}" y2="{py:.2}" stroke="black"{style}/>"#, W - RIGHT);
    }

    fn vline(&mut self, x: f64) {
        let px = self.px(x);
        let _ = writeln!(
            self.svg,
            r#"<line x1="{px:.2}" y1="{TOP}" x2="{px:.2}" y2="{}" stroke="black" stroke-dasharray="4 3"/>"#,
            H - BOTTOM
        );
    }

    fn x_tick_labels(&mut self, labels: &[String]) {
        for (i, l) in labels.iter().enumerate() {
            let x = self.px(i as f64);
            let y = H - BOTTOM + 14.0;
            let _ = writeln!(
                self.svg,
                r#"<text x="{x:.2}" y="{y}" text-anchor="end" transform="rotate(-35 {x:.2} {y})">{}</text>"#,
                escape(l)
            );
        }
    }

    fn x_ticks_numeric(&mut self) {
        for i in 0..=5 {
            let v = self.x.0 + (self.x.1 - self.x.0) * i as f64 / 5.0;
            let _ = writeln!(self.svg, r#"<text x="{:.2}" y="{}" text-anchor="middle">{v:.3}</text>"#, self.px(v), H - BOTTOM + 14.0);
        }
    }

    fn legend(&mut self, names: &[&str]) {
        for (i, n) in names.iter().enumerate() {
            let y = TOP + 14.0 * i as f64 + 6.0;
            let x = W - RIGHT + 12.0;
            let _ = writeln!(
                self.svg,
                r#"<rect x="{x}" y="{}" width="10" height="10" fill="{}"/><text x="{}" y="{}">{}</text>"#,
                y - 8.0,
                PALETTE[i % PALETTE.len()],
                x + 14.0,
                y + 1.0,
                escape(n)
            );
        }
    }

    fn finish(mut self) -> String {
        self.svg.push_str("</svg>\n");
        self.svg
    }
}

pub struct Series {
    pub name: String,
    /// One `(value, error)` per category; error may be 0.
    pub values: Vec<(f64, f64)>,
}

/// Grouped bars, one group per category, with ±error whiskers.
pub fn bar_chart(title: &str, y_label: &str, categories: &[String], series: &[Series]) -> String {
    let y = padded_range(series.iter().flat_map(|s| s.values.iter().flat_map(|&(v, e)| [v - e, v + e])));
    let mut f = Frame::new(title, "", y_label, (-0.5, categories.len() as f64 - 0.5), y);
    f.hline(0.0, false);
    let group = 0.8 / series.len().max(1) as f64;
    let band = (W - LEFT - RIGHT) / categories.len().max(1) as f64;
    for (si, s) in series.iter().enumerate() {
        let color = PALETTE[si % PALETTE.len()];
        for (ci, &(v, e)) in s.values.iter().enumerate() {
            if !v.is_finite() {
                continue;
            }
            let xc = f.px(ci as f64 - 0.4 + group * (si as f64 + 0.5));
            let bw = group * band * 0.9;
            let (y0, y1) = (f.py(0.0), f.py(v));
            let _ = writeln!(
                f.svg,
                r#"<rect x="{:.2}" y="{:.2}" width="{bw:.2}" height="{:.2}" fill="{color}"><title>{} {}: {v:.4}</title></rect>"#,
                xc - bw / 2.0,
                y0.min(y1),
                (y0 - y1).abs(),
                escape(&s.name),
                escape(&categories[ci])
            );
            if e > 0.0 && e.is_finite() {
                let _ = writeln!(
                    f.svg,
                    r#"<line x1="{xc:.2}" y1="{:.2}" x2="{xc:.2}" y2="{:.2}" stroke="black"/>"#,
                    f.py(v - e),
                    f.py(v + e)
                );
            }
        }
    }
    f.x_tick_labels(categories);
    f.legend(&series.iter().map(|s| s.name.as_str()).collect::<Vec<_>>());
    f.finish()
}

/// One polyline per series over shared categorical x positions.
pub fn line_chart(title: &str, y_label: &str, x_labels: &[String], series: &[(String, Vec<f64>)]) -> String {
    let y = padded_range(series.iter().flat_map(|(_, v)| v.iter().copied()));
    let mut f = Frame::new(title, "probe (shallow to deep)", y_label, (-0.25, x_labels.len() as f64 - 0.75), y);
    f.hline(0.0, true);
    for (si, (_, values)) in series.iter().enumerate() {
        let color = PALETTE[si % PALETTE.len()];
        let pts: Vec<String> = values
            .iter()
            .enumerate()
            .filter(|(_, v)| v.is_finite())
            .map(|(i, &v)| format!("{:.2},{:.2}", f.px(i as f64), f.py(v)))
            .collect();
        let _ = writeln!(f.svg, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#, pts.join(" "));
        for p in &pts {
            let (x, y) = p.split_once(',').expect("formatted pair");
            let _ = writeln!(f.svg, r#"<circle cx="{x}" cy="{y}" r="2.5" fill="{color}"/>"#);
        }
    }
    f.x_tick_labels(x_labels);
    f.legend(&series.iter().map(|(n, _)| n.as_str()).collect::<Vec<_>>());
    f.finish()
}

/// Labelled points with dashed axes through the origin. Points in the
/// upper-right and lower-left quadrants agree in sign.
pub fn quadrant_scatter(title: &str, x_label: &str, y_label: &str, points: &[(f64, f64, String)]) -> String {
    let x = padded_range(points.iter().map(|p| p.0));
    let y = padded_range(points.iter().map(|p| p.1));
    let mut f = Frame::new(title, x_label, y_label, x, y);
    f.hline(0.0, true);
    f.vline(0.0);
    for (px, py, label) in points {
        if !(px.is_finite() && py.is_finite()) {
            continue;
        }
        let (cx, cy) = (f.px(*px), f.py(*py));
        let _ = writeln!(
            f.svg,
            r#"<circle cx="{cx:.2}" cy="{cy:.2}" r="4" fill="{}"/><text x="{:.2}" y="{:.2}">{}</text>"#,
            PALETTE[0],
            cx + 5.0,
            cy - 5.0,
            escape(label)
        );
    }
    f.x_ticks_numeric();
    f.finish()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn range_contains_zero_and_data() {
        let (lo, hi) = padded_range([0.2, 0.5].into_iter());
        assert!(lo < 0.0 && hi > 0.5);
        let (lo, hi) = padded_range(std::iter::empty());
        assert!(lo < hi);
    }

    #[test]
    fn labels_are_escaped() {
        let svg = bar_chart("a<b", "y", &["x&y".into()], &[Series { name: "m".into(), values: vec![(0.1, 0.01)] }]);
        assert!(svg.contains("a&lt;b") && svg.contains("x&amp;y"));
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
    }

    #[test]
    fn positive_points_plot_above_the_zero_line() {
        let pts: Vec<(f64, f64, String)> = (0..5).map(|i| (i as f64 - 2.0, 0.1 + i as f64, i.to_string())).collect();
        let svg = quadrant_scatter("t", "human", "net", &pts);
        let f = Frame::new("", "", "", padded_range(pts.iter().map(|p| p.0)), padded_range(pts.iter().map(|p| p.1)));
        let zero = f.py(0.0);
        for line in svg.lines().filter(|l| l.starts_with("<circle")) {
            let cy: f64 = line.split("cy=\"").nth(1).unwrap().split('"').next().unwrap().parse().unwrap();
            assert!(cy < zero);
        }
    }
}
