//! Static SVG line charts of layer curves: layer on x, score on y, one
//! series per language pair.

use std::fmt::Write as _;

use crate::io::results::LayerCurve;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const LEFT: f64 = 60.0;
const RIGHT: f64 = 130.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;

const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Renders every curve (assumed to share model and index) into one chart.
/// Output depends only on the input values.
pub fn render_chart(title: &str, curves: &[LayerCurve]) -> String {
    let points = curves.iter().flat_map(|c| c.points.iter());
    let (mut x_min, mut x_max) = (usize::MAX, 0usize);
    let (mut y_min, mut y_max) = (0.0f64, 1.0f64);
    for p in points {
        x_min = x_min.min(p.layer);
        x_max = x_max.max(p.layer);
        y_min = y_min.min(p.score);
        y_max = y_max.max(p.score);
    }
    if x_min > x_max {
        (x_min, x_max) = (0, 1);
    }
    let x_span = (x_max - x_min).max(1) as f64;
    let y_span = y_max - y_min;
    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let sx = |layer: usize| LEFT + (layer - x_min) as f64 / x_span * plot_w;
    let sy = |score: f64| TOP + (y_max - score) / y_span * plot_h;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
        LEFT + plot_w / 2.0,
        escape(title)
    );

    // axes
    let _ = writeln!(
        svg,
        r#"<line x1="{LEFT}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="black"/>"#,
        TOP + plot_h,
        LEFT + plot_w,
        TOP + plot_h
    );
    let _ = writeln!(svg, r#"<line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{:.2}" stroke="black"/>"#, TOP + plot_h);
    let step = ((x_max - x_min) / 12).max(1);
    for layer in (x_min..=x_max).step_by(step) {
        let x = sx(layer);
        let _ = writeln!(
            svg,
            r#"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="black"/><text x="{x:.2}" y="{:.2}" text-anchor="middle">{layer}</text>"#,
            TOP + plot_h,
            TOP + plot_h + 5.0,
            TOP + plot_h + 19.0
        );
    }
    for i in 0..=5 {
        let v = y_min + y_span * i as f64 / 5.0;
        let y = sy(v);
        let _ = writeln!(
            svg,
            r##"<line x1="{:.2}" y1="{y:.2}" x2="{LEFT}" y2="{y:.2}" stroke="black"/><line x1="{LEFT}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#dddddd"/><text x="{:.2}" y="{:.2}" text-anchor="end">{v:.2}</text>"##,
            LEFT - 5.0,
            LEFT + plot_w,
            LEFT - 8.0,
            y + 4.0
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">layer</text>"#,
        LEFT + plot_w / 2.0,
        HEIGHT - 10.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">score</text>"#,
        TOP + plot_h / 2.0,
        TOP + plot_h / 2.0
    );

    for (i, curve) in curves.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let coords: Vec<String> = curve
            .points
            .iter()
            .map(|p| format!("{:.2},{:.2}", sx(p.layer), sy(p.score)))
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#,
            coords.join(" ")
        );
        let ly = TOP + 10.0 + 20.0 * i as f64;
        let lx = WIDTH - RIGHT + 15.0;
        let _ = writeln!(
            svg,
            r#"<g class="legend-entry"><line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="2"/><text x="{:.2}" y="{:.2}">{}</text></g>"#,
            lx + 20.0,
            lx + 26.0,
            ly + 4.0,
            escape(&curve.pair)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::results::CurvePoint;

    fn curve(pair: &str) -> LayerCurve {
        LayerCurve {
            model_id: "toy".into(),
            index: "anc".into(),
            pair: pair.into(),
            points: (0..4)
                .map(|l| CurvePoint { layer: l, score: 0.2 * l as f64, degenerate_count: 0 })
                .collect(),
        }
    }

    #[test]
    fn one_polyline_per_curve_and_legend() {
        let one = render_chart("toy / anc", &[curve("en-fr")]);
        assert_eq!(one.matches("<polyline").count(), 1);
        let two = render_chart("toy / anc", &[curve("en-fr"), curve("en-<de>")]);
        assert_eq!(two.matches("<polyline").count(), 2);
        assert_eq!(two.matches("legend-entry").count(), 2);
        assert!(two.contains("en-&lt;de&gt;"));
        assert_eq!(two, render_chart("toy / anc", &[curve("en-fr"), curve("en-<de>")]));
    }
}
