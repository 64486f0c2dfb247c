//! Deterministic SVG scatter plots of two-objective fronts.

use std::fmt::Write;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 50.0;
const TICKS: usize = 5;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

/// One set of points drawn with a single color.
#[derive(Clone, Debug, PartialEq)]
pub struct Series {
    pub label: String,
    pub points: Vec<[f64; 2]>,
}

/// Axis range covering `values` with a 5% margin on each side.
pub fn axis_range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    let span = if hi > lo { hi - lo } else { lo.abs().max(1.0) };
    (lo - 0.05 * span, hi + 0.05 * span)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Renders the fronts as circles and the optional oracle front as hollow
/// squares joined by a staircase.
pub fn render(series: &[Series], oracle: Option<&[[f64; 2]]>) -> String {
    let all = || series.iter().flat_map(|s| s.points.iter()).chain(oracle.into_iter().flatten());
    let (x0, x1) = axis_range(all().map(|p| p[0]));
    let (y0, y1) = axis_range(all().map(|p| p[1]));
    let pw = WIDTH - LEFT - RIGHT;
    let ph = HEIGHT - TOP - BOTTOM;
    let sx = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| TOP + (y1 - y) / (y1 - y0) * ph;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r##"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="#444"/>"##
    );
    for i in 0..=TICKS {
        let f = i as f64 / TICKS as f64;
        let (xv, yv) = (x0 + f * (x1 - x0), y0 + f * (y1 - y0));
        let (px, py) = (sx(xv), sy(yv));
        let _ = writeln!(
            s,
            r##"<line x1="{px:.2}" y1="{:.2}" x2="{px:.2}" y2="{:.2}" stroke="#444"/><text x="{px:.2}" y="{:.2}" text-anchor="middle">{xv:.3}</text>"##,
            TOP + ph,
            TOP + ph + 5.0,
            TOP + ph + 18.0
        );
        let _ = writeln!(
            s,
            r##"<line x1="{:.2}" y1="{py:.2}" x2="{LEFT}" y2="{py:.2}" stroke="#444"/><text x="{:.2}" y="{:.2}" text-anchor="end">{yv:.3}</text>"##,
            LEFT - 5.0,
            LEFT - 8.0,
            py + 4.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">objective 1</text>"#,
        LEFT + pw / 2.0,
        HEIGHT - 12.0
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">objective 2</text>"#,
        TOP + ph / 2.0,
        TOP + ph / 2.0
    );

    if let Some(o) = oracle {
        let mut pts: Vec<[f64; 2]> = o.to_vec();
        pts.sort_by(|a, b| a[0].total_cmp(&b[0]));
        let mut d = String::new();
        for (i, p) in pts.iter().enumerate() {
            let cmd = if i == 0 { 'M' } else { 'L' };
            if i > 0 {
                let _ = write!(d, "L{:.2},{:.2} ", sx(pts[i - 1][0]), sy(p[1]));
            }
            let _ = write!(d, "{cmd}{:.2},{:.2} ", sx(p[0]), sy(p[1]));
        }
        let _ = writeln!(s, r##"<path class="oracle-line" d="{}" fill="none" stroke="#999" stroke-dasharray="4 3"/>"##, d.trim_end());
        for p in &pts {
            let _ = writeln!(
                s,
                r##"<rect class="oracle" x="{:.2}" y="{:.2}" width="8" height="8" fill="none" stroke="#555"/>"##,
                sx(p[0]) - 4.0,
                sy(p[1]) - 4.0
            );
        }
    }
    for (i, ser) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        for p in &ser.points {
            let _ = writeln!(
                s,
                r#"<circle class="point" cx="{:.2}" cy="{:.2}" r="3.5" fill="{color}" fill-opacity="0.8"/>"#,
                sx(p[0]),
                sy(p[1])
            );
        }
        let ly = TOP + 14.0 + 16.0 * i as f64;
        let _ = writeln!(
            s,
            r#"<circle cx="{:.2}" cy="{:.2}" r="4" fill="{color}"/><text x="{:.2}" y="{:.2}">{}</text>"#,
            LEFT + pw - 150.0,
            ly - 4.0,
            LEFT + pw - 140.0,
            ly,
            escape(&ser.label)
        );
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_marker_per_point() {
        let svg = render(
            &[Series {
                label: "a<b".into(),
                points: vec![[1.0, 2.0], [2.0, 1.0]],
            }],
            None,
        );
        assert_eq!(svg.matches(r#"class="point""#).count(), 2);
        assert!(svg.contains("a&lt;b"));
        assert!(!svg.contains("oracle"));
    }

    #[test]
    fn range_has_five_percent_margin() {
        assert_eq!(axis_range([0.0, 10.0].into_iter()), (-0.5, 10.5));
        let (lo, hi) = axis_range([3.0].into_iter());
        assert!(lo < 3.0 && hi > 3.0);
    }

    #[test]
    fn oracle_is_drawn_separately() {
        let svg = render(&[], Some(&[[0.0, 1.0], [1.0, 0.0]]));
        assert_eq!(svg.matches(r#"class="oracle""#).count(), 2);
        assert_eq!(svg.matches(r#"class="point""#).count(), 0);
    }
}
