//! Hand-written SVG charts. Output depends only on the inputs, byte for byte.

use std::fmt::Write as _;

use crate::k2::K2Histogram;

const W: f64 = 640.0;
const H: f64 = 400.0;
const LEFT: f64 = 60.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

pub struct Series<'a> {
    pub name: &'a str,
    pub x: Vec<f64>,
    pub y: &'a [f64],
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn join(values: &[f64]) -> String {
    values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" ")
}

fn header(out: &mut String, title: &str) {
    writeln!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\" font-family=\"sans-serif\" font-size=\"12\">"
    )
    .unwrap();
    writeln!(out, "<rect width=\"{W}\" height=\"{H}\" fill=\"white\"/>").unwrap();
    writeln!(
        out,
        "<text x=\"{}\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">{}</text>",
        (LEFT + W - RIGHT) / 2.0,
        escape(title)
    )
    .unwrap();
}

fn axes(out: &mut String, x_label: &str, y_label: &str) {
    let (x0, y0, x1, y1) = (LEFT, H - BOTTOM, W - RIGHT, TOP);
    writeln!(
        out,
        "<path d=\"M{x0} {y1} L{x0} {y0} L{x1} {y0}\" fill=\"none\" stroke=\"black\"/>"
    )
    .unwrap();
    writeln!(
        out,
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>",
        (x0 + x1) / 2.0,
        H - 12.0,
        escape(x_label)
    )
    .unwrap();
    writeln!(
        out,
        "<text x=\"16\" y=\"{}\" text-anchor=\"middle\" transform=\"rotate(-90 16 {})\">{}</text>",
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0,
        escape(y_label)
    )
    .unwrap();
}

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        (0.0, 1.0)
    } else if lo == hi {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}

/// One polyline per series with a legend. Each polyline carries its exact
/// values in `data-x` / `data-values`.
pub fn line_chart(title: &str, x_label: &str, y_label: &str, series: &[Series<'_>], y_unit: bool) -> String {
    let mut out = String::new();
    header(&mut out, title);
    axes(&mut out, x_label, y_label);
    let (xmin, xmax) = range(series.iter().flat_map(|s| s.x.iter().copied()));
    let (ymin, ymax) = if y_unit {
        (0.0, 1.0)
    } else {
        range(series.iter().flat_map(|s| s.y.iter().copied()))
    };
    let px = |x: f64| LEFT + (x - xmin) / (xmax - xmin) * (W - RIGHT - LEFT);
    let py = |y: f64| H - BOTTOM - (y - ymin) / (ymax - ymin) * (H - BOTTOM - TOP);

    for i in 0..=4 {
        let y = ymin + (ymax - ymin) * i as f64 / 4.0;
        writeln!(
            out,
            "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"end\">{:.2}</text>",
            LEFT - 6.0,
            py(y) + 4.0,
            y
        )
        .unwrap();
        writeln!(
            out,
            "<line x1=\"{LEFT}\" y1=\"{0:.2}\" x2=\"{1}\" y2=\"{0:.2}\" stroke=\"#ddd\"/>",
            py(y),
            W - RIGHT
        )
        .unwrap();
    }
    for x in [xmin, (xmin + xmax) / 2.0, xmax] {
        writeln!(
            out,
            "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\">{}</text>",
            px(x),
            H - BOTTOM + 16.0,
            (x * 100.0).round() / 100.0
        )
        .unwrap();
    }

    for (i, s) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let points: Vec<String> = s
            .x
            .iter()
            .zip(s.y)
            .map(|(&x, &y)| format!("{:.2},{:.2}", px(x), py(y)))
            .collect();
        writeln!(
            out,
            "<polyline data-method=\"{}\" data-x=\"{}\" data-values=\"{}\" points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"2\"/>",
            escape(s.name),
            join(&s.x),
            join(s.y),
            points.join(" ")
        )
        .unwrap();
        for p in &points {
            let (cx, cy) = p.split_once(',').expect("formatted as x,y");
            writeln!(out, "<circle cx=\"{cx}\" cy=\"{cy}\" r=\"3\" fill=\"{color}\"/>").unwrap();
        }
        let ly = TOP + 10.0 + 20.0 * i as f64;
        let lx = W - RIGHT + 15.0;
        writeln!(
            out,
            "<line x1=\"{lx}\" y1=\"{ly}\" x2=\"{}\" y2=\"{ly}\" stroke=\"{color}\" stroke-width=\"2\"/>",
            lx + 20.0
        )
        .unwrap();
        writeln!(
            out,
            "<text x=\"{}\" y=\"{}\">{}</text>",
            lx + 26.0,
            ly + 4.0,
            escape(s.name)
        )
        .unwrap();
    }
    out.push_str("</svg>\n");
    out
}

/// Bars for every bin plus the two overflow bins at the ends.
pub fn histogram_chart(title: &str, h: &K2Histogram) -> String {
    let mut out = String::new();
    header(&mut out, title);
    axes(&mut out, "log10(k2)", "count");
    let bars: Vec<usize> = std::iter::once(h.underflow)
        .chain(h.counts.iter().copied())
        .chain(std::iter::once(h.overflow))
        .collect();
    let peak = bars.iter().copied().max().unwrap_or(0).max(1) as f64;
    let bw = (W - RIGHT - LEFT) / bars.len() as f64;
    for (i, &c) in bars.iter().enumerate() {
        let height = c as f64 / peak * (H - BOTTOM - TOP);
        let fill = if i == 0 || i + 1 == bars.len() { "#999" } else { COLORS[0] };
        writeln!(
            out,
            "<rect data-count=\"{c}\" x=\"{:.2}\" y=\"{:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"{fill}\"/>",
            LEFT + i as f64 * bw + 0.5,
            H - BOTTOM - height,
            (bw - 1.0).max(0.5),
            height
        )
        .unwrap();
    }
    for (pos, label) in [
        (0.5, "<".to_string()),
        (1.0, h.lo.to_string()),
        (bars.len() as f64 / 2.0, "0".to_string()),
        (bars.len() as f64 - 1.0, h.hi.to_string()),
        (bars.len() as f64 - 0.5, ">".to_string()),
    ] {
        writeln!(
            out,
            "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\">{}</text>",
            LEFT + pos * bw,
            H - BOTTOM + 16.0,
            escape(&label)
        )
        .unwrap();
    }
    writeln!(
        out,
        "<text x=\"{:.2}\" y=\"{:.2}\" data-fraction-below-one=\"{}\">k2 &lt; 1: {:.2}% of {}</text>",
        W - RIGHT + 10.0,
        TOP + 10.0,
        h.fraction_below_one(),
        100.0 * h.fraction_below_one(),
        h.total
    )
    .unwrap();
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polyline_per_series_with_exact_values() {
        let y = [0.1 + 0.2, 0.5, 1.0 / 3.0];
        let s = Series {
            name: "mega2",
            x: vec![1.0, 2.0, 3.0],
            y: &y,
        };
        let svg = line_chart("A", "k", "A_k", &[s], true);
        assert_eq!(svg.matches("<polyline").count(), 1);
        assert!(svg.contains("data-values=\"0.30000000000000004 0.5 0.3333333333333333\""));
        let points = svg.split("points=\"").nth(1).unwrap().split('"').next().unwrap();
        assert_eq!(points.split(' ').count(), 3);
    }

    #[test]
    fn identical_inputs_give_identical_bytes() {
        let y = [0.2, 0.4];
        let mk = || {
            line_chart(
                "t",
                "x",
                "y",
                &[Series { name: "a<b", x: vec![0.0, 1.0], y: &y }],
                false,
            )
        };
        assert_eq!(mk(), mk());
        assert!(mk().contains("a&lt;b"));
    }

    #[test]
    fn histogram_has_bins_plus_overflow() {
        let h = K2Histogram::from_values([0.0, 0.5, 1.0, 2.0, f64::INFINITY], 7).unwrap();
        let svg = histogram_chart("k2", &h);
        assert_eq!(svg.matches("<rect data-count").count(), 9);
        assert!(svg.contains("data-fraction-below-one=\"0.4\""));
    }
}
