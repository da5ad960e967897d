//! Minimal SVG line plots with shaded bands.

use std::fmt::Write;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 460.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 55.0;
const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BandPoint {
    pub x: f64,
    pub mid: f64,
    pub lo: f64,
    pub hi: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    pub points: Vec<BandPoint>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Plot {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub log2_x: bool,
    pub series: Vec<Series>,
    /// Horizontal reference lines drawn dashed across the whole axis.
    pub hlines: Vec<(String, f64)>,
}

/// About five round tick values covering `[lo, hi]`.
fn nice_ticks(lo: f64, hi: f64) -> Vec<f64> {
    let span = (hi - lo).max(f64::EPSILON * hi.abs().max(1.0));
    let mag = 10f64.powf((span / 5.0).log10().floor());
    let mult = [1.0, 2.0, 5.0, 10.0].into_iter().find(|m| span / (m * mag) <= 6.0).unwrap_or(10.0);
    let step = mult * mag;
    // Dividing by an exact power of ten keeps ticks such as 0.6 free of round-off.
    let tick = |i: i64| if mag < 1.0 { i as f64 * mult / (1.0 / mag).round() } else { i as f64 * step } + 0.0;
    let first = (lo / step).ceil() as i64;
    let last = (hi / step + 1e-9).floor() as i64;
    (first..=last).map(tick).collect()
}

fn fmt_tick(v: f64) -> String {
    if v != 0.0 && (v.abs() >= 1e5 || v.abs() < 1e-3) {
        format!("{v:.1e}")
    } else {
        let s = format!("{v:.3}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

impl Plot {
    pub fn render(&self) -> String {
        let xs: Vec<f64> = self.series.iter().flat_map(|s| s.points.iter().map(|p| p.x)).collect();
        let ys: Vec<f64> = self
            .series
            .iter()
            .flat_map(|s| s.points.iter().flat_map(|p| [p.lo, p.mid, p.hi]))
            .chain(self.hlines.iter().map(|h| h.1))
            .filter(|v| v.is_finite())
            .collect();
        let fx = |v: f64| if self.log2_x { v.max(f64::MIN_POSITIVE).log2() } else { v };
        let (mut x0, mut x1) = xs.iter().map(|&v| fx(v)).fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
        let (mut y0, mut y1) = ys.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        if !x0.is_finite() {
            (x0, x1) = (0.0, 1.0);
        }
        if !y0.is_finite() {
            (y0, y1) = (0.0, 1.0);
        }
        if x1 - x0 <= 0.0 {
            (x0, x1) = (x0 - 0.5, x1 + 0.5);
        }
        let pad = if y1 > y0 { 0.05 * (y1 - y0) } else { 0.5 * y0.abs().max(1.0) };
        let (y0, y1) = (y0 - pad, y1 + pad);
        let pw = WIDTH - LEFT - RIGHT;
        let ph = HEIGHT - TOP - BOTTOM;
        let px = |v: f64| LEFT + (fx(v) - x0) / (x1 - x0) * pw;
        let py = |v: f64| TOP + (y1 - v) / (y1 - y0) * ph;

        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
        let _ = writeln!(s, r#"<text x="{:.1}" y="22" text-anchor="middle" font-size="14">{}</text>"#, LEFT + pw / 2.0, escape(&self.title));
        let _ = writeln!(s, r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#);

        let x_ticks: Vec<f64> = if self.log2_x {
            (x0.ceil() as i64..=x1.floor() as i64).map(|k| 2f64.powi(k as i32)).collect()
        } else {
            nice_ticks(x0, x1)
        };
        for t in x_ticks {
            let x = px(t);
            let _ = writeln!(s, r#"<line x1="{x:.1}" y1="{:.1}" x2="{x:.1}" y2="{:.1}" stroke="black"/>"#, TOP + ph, TOP + ph + 5.0);
            let _ = writeln!(s, r#"<text x="{x:.1}" y="{:.1}" text-anchor="middle">{}</text>"#, TOP + ph + 18.0, fmt_tick(t));
        }
        for t in nice_ticks(y0, y1) {
            let y = py(t);
            let _ = writeln!(s, r#"<line x1="{:.1}" y1="{y:.1}" x2="{LEFT}" y2="{y:.1}" stroke="black"/>"#, LEFT - 5.0);
            let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#, LEFT - 8.0, y + 4.0, fmt_tick(t));
        }
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#, LEFT + pw / 2.0, HEIGHT - 12.0, escape(&self.x_label));
        let _ = writeln!(
            s,
            r#"<text x="16" y="{:.1}" text-anchor="middle" transform="rotate(-90 16 {:.1})">{}</text>"#,
            TOP + ph / 2.0,
            TOP + ph / 2.0,
            escape(&self.y_label)
        );

        let mut legend = Vec::new();
        for (k, series) in self.series.iter().enumerate() {
            let color = PALETTE[k % PALETTE.len()];
            let mut pts: Vec<BandPoint> = series.points.iter().copied().filter(|p| p.mid.is_finite()).collect();
            pts.sort_by(|a, b| a.x.total_cmp(&b.x));
            if pts.is_empty() {
                continue;
            }
            let upper = pts.iter().map(|p| format!("{:.1},{:.1}", px(p.x), py(p.hi)));
            let lower = pts.iter().rev().map(|p| format!("{:.1},{:.1}", px(p.x), py(p.lo)));
            let band: Vec<String> = upper.chain(lower).collect();
            let _ = writeln!(s, r#"<polygon points="{}" fill="{color}" fill-opacity="0.18" stroke="none"/>"#, band.join(" "));
            let line: Vec<String> = pts.iter().map(|p| format!("{:.1},{:.1}", px(p.x), py(p.mid))).collect();
            let _ = writeln!(s, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#, line.join(" "));
            for p in &pts {
                let _ = writeln!(s, r#"<circle cx="{:.1}" cy="{:.1}" r="2.5" fill="{color}"/>"#, px(p.x), py(p.mid));
            }
            legend.push((series.name.clone(), color, false));
        }
        for (k, (name, v)) in self.hlines.iter().enumerate() {
            let color = PALETTE[(self.series.len() + k) % PALETTE.len()];
            let y = py(*v);
            let _ = writeln!(
                s,
                r#"<line x1="{LEFT}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="{color}" stroke-width="1.5" stroke-dasharray="6,4"/>"#,
                LEFT + pw
            );
            legend.push((name.clone(), color, true));
        }
        for (k, (name, color, dashed)) in legend.iter().enumerate() {
            let y = TOP + 10.0 + 18.0 * k as f64;
            let x = WIDTH - RIGHT + 15.0;
            let dash = if *dashed { r#" stroke-dasharray="6,4""# } else { "" };
            let _ = writeln!(s, r#"<line x1="{x:.1}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="{color}" stroke-width="2"{dash}/>"#, x + 22.0);
            let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}">{}</text>"#, x + 28.0, y + 4.0, escape(name));
        }
        s.push_str("</svg>\n");
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ticks_are_round() {
        assert_eq!(nice_ticks(0.0, 10.0), vec![0.0, 2.0, 4.0, 6.0, 8.0, 10.0]);
        assert_eq!(nice_ticks(0.13, 0.91), vec![0.2, 0.4, 0.6, 0.8]);
    }

    #[test]
    fn renders_series_and_reference_lines() {
        let plot = Plot {
            title: "a < b".into(),
            x_label: "rank".into(),
            y_label: "iterations".into(),
            log2_x: true,
            series: vec![Series {
                name: "var".into(),
                points: vec![
                    BandPoint { x: 2.0, mid: 50.0, lo: 40.0, hi: 60.0 },
                    BandPoint { x: 32.0, mid: 10.0, lo: 9.0, hi: 12.0 },
                ],
            }],
            hlines: vec![("none".into(), 80.0)],
        };
        let svg = plot.render();
        assert!(svg.starts_with("<svg") && svg.ends_with("</svg>\n"));
        assert_eq!(svg.matches("<polyline").count(), 1);
        assert_eq!(svg.matches("<polygon").count(), 1);
        assert!(svg.contains("stroke-dasharray"));
        assert!(svg.contains("a &lt; b"));
        assert!(svg.contains(">32<"));
        assert_eq!(svg, plot.render());
    }

    #[test]
    fn empty_plot_is_valid() {
        let svg = Plot::default().render();
        assert!(svg.contains("</svg>"));
    }
}
