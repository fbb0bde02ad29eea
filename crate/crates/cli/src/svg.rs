//! Hand-rolled SVG emission for the report plots: polyline line charts and
//! labeled cluster scatters. No plotting dependency; output is a plain
//! string whose bytes depend only on the inputs.

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 420.0;
const MARGIN_LEFT: f64 = 64.0;
const MARGIN_RIGHT: f64 = 24.0;
const MARGIN_TOP: f64 = 40.0;
const MARGIN_BOTTOM: f64 = 36.0;

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f",
];

fn header(title: &str) -> String {
    format!(
        concat!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" ",
            "viewBox=\"0 0 {w} {h}\" font-family=\"monospace\">\n",
            "<rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n",
            "<text x=\"{tx}\" y=\"22\" font-size=\"14\" text-anchor=\"middle\">{title}</text>\n"
        ),
        w = WIDTH,
        h = HEIGHT,
        tx = WIDTH / 2.0,
        title = escape(title),
    )
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn new(x0: f64, x1: f64, y0: f64, y1: f64) -> Frame {
        // degenerate ranges get a unit pad so mapping stays finite
        let (y0, y1) = if (y1 - y0).abs() < 1e-12 {
            (y0 - 0.5, y1 + 0.5)
        } else {
            (y0, y1)
        };
        let (x0, x1) = if (x1 - x0).abs() < 1e-12 {
            (x0 - 0.5, x1 + 0.5)
        } else {
            (x0, x1)
        };
        Frame { x0, x1, y0, y1 }
    }

    fn px(&self, x: f64) -> f64 {
        MARGIN_LEFT + (x - self.x0) / (self.x1 - self.x0) * (WIDTH - MARGIN_LEFT - MARGIN_RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        HEIGHT - MARGIN_BOTTOM
            - (y - self.y0) / (self.y1 - self.y0) * (HEIGHT - MARGIN_TOP - MARGIN_BOTTOM)
    }

    fn axes(&self, x_label_lo: &str, x_label_hi: &str) -> String {
        format!(
            concat!(
                "<rect x=\"{l}\" y=\"{t}\" width=\"{pw}\" height=\"{ph}\" ",
                "fill=\"none\" stroke=\"#444\"/>\n",
                "<text x=\"{l}\" y=\"{ylo}\" font-size=\"10\" text-anchor=\"end\">{vlo:.3}</text>\n",
                "<text x=\"{l}\" y=\"{yhi}\" font-size=\"10\" text-anchor=\"end\">{vhi:.3}</text>\n",
                "<text x=\"{l}\" y=\"{xb}\" font-size=\"10\">{xlo}</text>\n",
                "<text x=\"{r}\" y=\"{xb}\" font-size=\"10\" text-anchor=\"end\">{xhi}</text>\n"
            ),
            l = MARGIN_LEFT,
            t = MARGIN_TOP,
            pw = WIDTH - MARGIN_LEFT - MARGIN_RIGHT,
            ph = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM,
            ylo = self.py(self.y0) + 4.0,
            yhi = self.py(self.y1) + 4.0,
            vlo = self.y0,
            vhi = self.y1,
            xb = HEIGHT - MARGIN_BOTTOM + 16.0,
            r = WIDTH - MARGIN_RIGHT,
            xlo = escape(x_label_lo),
            xhi = escape(x_label_hi),
        )
    }
}

/// Line chart of one or more equally-spaced series sharing an x axis.
pub fn line_chart(
    title: &str,
    x_label_lo: &str,
    x_label_hi: &str,
    series: &[(&str, &[f64])],
) -> String {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let mut len = 0usize;
    for (_, values) in series {
        len = len.max(values.len());
        for &v in *values {
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    let frame = Frame::new(0.0, (len.max(2) - 1) as f64, lo, hi);
    let mut out = header(title);
    out.push_str(&frame.axes(x_label_lo, x_label_hi));
    for (i, (name, values)) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let points: Vec<String> = values
            .iter()
            .enumerate()
            .map(|(j, &v)| format!("{:.2},{:.2}", frame.px(j as f64), frame.py(v)))
            .collect();
        out.push_str(&format!(
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"/>\n",
            points.join(" ")
        ));
        out.push_str(&format!(
            "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"11\" fill=\"{color}\">{}</text>\n",
            MARGIN_LEFT + 8.0,
            MARGIN_TOP + 14.0 + 14.0 * i as f64,
            escape(name),
        ));
    }
    out.push_str("</svg>\n");
    out
}

/// Scatter of labeled points colored by group assignment.
pub fn scatter(title: &str, points: &[(f64, f64)], labels: &[String], groups: &[usize]) -> String {
    let mut xlo = f64::INFINITY;
    let mut xhi = f64::NEG_INFINITY;
    let mut ylo = f64::INFINITY;
    let mut yhi = f64::NEG_INFINITY;
    for &(x, y) in points {
        xlo = xlo.min(x);
        xhi = xhi.max(x);
        ylo = ylo.min(y);
        yhi = yhi.max(y);
    }
    if points.is_empty() {
        (xlo, xhi, ylo, yhi) = (0.0, 1.0, 0.0, 1.0);
    }
    let frame = Frame::new(xlo, xhi, ylo, yhi);
    let mut out = header(title);
    out.push_str(&frame.axes("", ""));
    for (i, &(x, y)) in points.iter().enumerate() {
        let color = PALETTE[groups.get(i).copied().unwrap_or(0) % PALETTE.len()];
        let (px, py) = (frame.px(x), frame.py(y));
        out.push_str(&format!(
            "<circle cx=\"{px:.2}\" cy=\"{py:.2}\" r=\"4\" fill=\"{color}\"/>\n"
        ));
        if let Some(label) = labels.get(i) {
            out.push_str(&format!(
                "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"9\">{}</text>\n",
                px + 6.0,
                py - 4.0,
                escape(label),
            ));
        }
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn charts_are_wellformed_and_deterministic() {
        let nav = [1.0, 1.01, 0.99, 1.03];
        let a = line_chart("equity", "day 0", "day 3", &[("excess", &nav)]);
        let b = line_chart("equity", "day 0", "day 3", &[("excess", &nav)]);
        assert_eq!(a, b);
        assert!(a.starts_with("<svg"));
        assert!(a.ends_with("</svg>\n"));
        assert_eq!(a.matches("<polyline").count(), 1);

        let pts = [(0.0, 0.0), (1.0, 2.0), (2.0, 0.5)];
        let labels = vec!["a".into(), "b<c".into(), "d".into()];
        let s = scatter("clusters", &pts, &labels, &[0, 1, 0]);
        assert_eq!(s.matches("<circle").count(), 3);
        assert!(s.contains("b&lt;c"));
    }

    #[test]
    fn constant_series_keeps_finite_coordinates() {
        let flat = [1.0; 5];
        let chart = line_chart("flat", "", "", &[("nav", &flat)]);
        assert!(!chart.contains("NaN"));
        assert!(!chart.contains("inf"));
    }
}
