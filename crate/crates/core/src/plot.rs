//! Minimal SVG charts: line plots, heatmaps and bar charts.

const W: f64 = 640.0;
const H: f64 = 400.0;
const MARGIN: f64 = 56.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn header(title: &str) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\" font-family=\"sans-serif\" font-size=\"11\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <text x=\"{}\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">{}</text>\n",
        W / 2.0,
        escape(title)
    )
}

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        return (lo - 0.5, hi + 0.5);
    }
    (lo, hi)
}

/// Line chart of `(name, points)` series.
pub fn line_chart(title: &str, x_label: &str, series: &[(&str, Vec<(f64, f64)>)]) -> String {
    let (x0, x1) = range(series.iter().flat_map(|(_, p)| p.iter().map(|q| q.0)));
    let (y0, y1) = range(series.iter().flat_map(|(_, p)| p.iter().map(|q| q.1)));
    let sx = |x: f64| MARGIN + (x - x0) / (x1 - x0) * (W - 2.0 * MARGIN);
    let sy = |y: f64| H - MARGIN - (y - y0) / (y1 - y0) * (H - 2.0 * MARGIN);
    let mut out = header(title);
    out.push_str(&format!(
        "<rect x=\"{MARGIN}\" y=\"{MARGIN}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"#888\"/>\n",
        W - 2.0 * MARGIN,
        H - 2.0 * MARGIN
    ));
    for (v, y) in [(y0, sy(y0)), (y1, sy(y1))] {
        out.push_str(&format!(
            "<text x=\"{}\" y=\"{y:.1}\" text-anchor=\"end\">{v:.3}</text>\n",
            MARGIN - 4.0
        ));
    }
    for (v, x) in [(x0, sx(x0)), (x1, sx(x1))] {
        out.push_str(&format!(
            "<text x=\"{x:.1}\" y=\"{}\" text-anchor=\"middle\">{v}</text>\n",
            H - MARGIN + 14.0
        ));
    }
    out.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n",
        W / 2.0,
        H - 16.0,
        escape(x_label)
    ));
    for (k, (name, points)) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let path: Vec<String> = points
            .iter()
            .filter(|p| p.1.is_finite())
            .map(|&(x, y)| format!("{:.1},{:.1}", sx(x), sy(y)))
            .collect();
        out.push_str(&format!(
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.2\" points=\"{}\"/>\n",
            path.join(" ")
        ));
        out.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" fill=\"{color}\">{}</text>\n",
            W - MARGIN - 120.0,
            MARGIN + 14.0 * (k as f64 + 1.0),
            escape(name)
        ));
    }
    out.push_str("</svg>\n");
    out
}

/// One row of cells per entry of `rows`, values mapped to white..blue over
/// `[0, max]`.
pub fn heatmap(title: &str, row_labels: &[String], rows: &[Vec<f64>], max: f64) -> String {
    let mut out = header(title);
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0).max(1);
    let cw = (W - 2.0 * MARGIN) / cols as f64;
    let ch = (H - 2.0 * MARGIN) / rows.len().max(1) as f64;
    for (r, row) in rows.iter().enumerate() {
        let y = MARGIN + r as f64 * ch;
        out.push_str(&format!(
            "<text x=\"{}\" y=\"{:.1}\" text-anchor=\"end\">{}</text>\n",
            MARGIN - 4.0,
            y + ch / 2.0,
            escape(row_labels.get(r).map(String::as_str).unwrap_or(""))
        ));
        for (c, &v) in row.iter().enumerate() {
            let t = if max > 0.0 { (v / max).clamp(0.0, 1.0) } else { 0.0 };
            let shade = (255.0 * (1.0 - t)).round() as u8;
            out.push_str(&format!(
                "<rect x=\"{:.2}\" y=\"{y:.2}\" width=\"{:.2}\" height=\"{ch:.2}\" fill=\"rgb({shade},{shade},255)\"/>\n",
                MARGIN + c as f64 * cw,
                cw + 0.05
            ));
        }
    }
    out.push_str("</svg>\n");
    out
}

pub fn bar_chart(title: &str, labels: &[String], values: &[f64]) -> String {
    let mut out = header(title);
    let (_, hi) = range(values.iter().copied().chain([0.0]));
    let n = values.len().max(1) as f64;
    let bw = (W - 2.0 * MARGIN) / n;
    for (k, &v) in values.iter().enumerate() {
        let h = if hi > 0.0 { v.max(0.0) / hi * (H - 2.0 * MARGIN) } else { 0.0 };
        let x = MARGIN + k as f64 * bw;
        out.push_str(&format!(
            "<rect x=\"{:.1}\" y=\"{:.1}\" width=\"{:.1}\" height=\"{h:.1}\" fill=\"{}\"/>\n",
            x + 0.1 * bw,
            H - MARGIN - h,
            0.8 * bw,
            PALETTE[0]
        ));
        out.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n",
            x + bw / 2.0,
            H - MARGIN + 14.0,
            escape(labels.get(k).map(String::as_str).unwrap_or(""))
        ));
        out.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{v:.2}</text>\n",
            x + bw / 2.0,
            H - MARGIN - h - 3.0
        ));
    }
    out.push_str("</svg>\n");
    out
}
