//! Static SVG rendering of a series with its detection boxes.

use rxdet::data::MER_MAX;
use rxdet::Detection;

const WIDTH: f32 = 960.0;
const HEIGHT: f32 = 320.0;
const MARGIN: f32 = 36.0;

const CLASS_COLORS: [&str; 5] = ["#d62728", "#1f77b4", "#2ca02c", "#9467bd", "#ff7f0e"];

fn x_px(t: f32) -> f32 {
    MARGIN + t * (WIDTH - 2.0 * MARGIN)
}

fn y_px(v: f32) -> f32 {
    // raw dB mapped top-down
    HEIGHT - MARGIN - (v / MER_MAX).clamp(0.0, 1.0) * (HEIGHT - 2.0 * MARGIN)
}

pub fn render_svg(values: &[f32], detections: &[Detection], class_names: &[String], title: &str) -> String {
    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n"
    ));
    svg.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    svg.push_str(&format!(
        "<text x=\"{MARGIN}\" y=\"20\" font-family=\"monospace\" font-size=\"13\">{}</text>\n",
        xml_escape(title)
    ));

    // axes
    svg.push_str(&format!(
        "<line x1=\"{m}\" y1=\"{b}\" x2=\"{r}\" y2=\"{b}\" stroke=\"#555\" stroke-width=\"1\"/>\n",
        m = MARGIN,
        b = HEIGHT - MARGIN,
        r = WIDTH - MARGIN
    ));
    svg.push_str(&format!(
        "<line x1=\"{m}\" y1=\"{t}\" x2=\"{m}\" y2=\"{b}\" stroke=\"#555\" stroke-width=\"1\"/>\n",
        m = MARGIN,
        t = MARGIN,
        b = HEIGHT - MARGIN
    ));

    // detection boxes under the trace
    for det in detections {
        let class = det.classes.first().copied().unwrap_or(0);
        let color = CLASS_COLORS[class % CLASS_COLORS.len()];
        let (lo, hi) = det.interval();
        let x0 = x_px(lo);
        let w = (x_px(hi) - x0).max(1.0);
        svg.push_str(&format!(
            "<rect x=\"{x0:.1}\" y=\"{t}\" width=\"{w:.1}\" height=\"{h}\" fill=\"{color}\" fill-opacity=\"0.15\" stroke=\"{color}\" stroke-width=\"1.2\"/>\n",
            t = MARGIN,
            h = HEIGHT - 2.0 * MARGIN
        ));
        let label = format!(
            "{} {:.2}",
            class_names.get(class).map(String::as_str).unwrap_or("?"),
            det.confidence
        );
        svg.push_str(&format!(
            "<text x=\"{x:.1}\" y=\"{y:.1}\" font-family=\"monospace\" font-size=\"11\" fill=\"{color}\">{}</text>\n",
            xml_escape(&label),
            x = x0 + 2.0,
            y = MARGIN + 12.0
        ));
    }

    // the series itself
    let n = values.len().max(2);
    let mut points = String::new();
    for (i, v) in values.iter().enumerate() {
        let x = x_px(i as f32 / (n - 1) as f32);
        let y = y_px(*v);
        points.push_str(&format!("{x:.1},{y:.1} "));
    }
    svg.push_str(&format!(
        "<polyline points=\"{}\" fill=\"none\" stroke=\"#222\" stroke-width=\"1\"/>\n",
        points.trim_end()
    ));

    svg.push_str("</svg>\n");
    svg
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
