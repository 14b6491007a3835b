//! Minimal deterministic SVG output: line plots and grid heatmaps.

use std::fmt::Write;

const W: f64 = 640.0;
const H: f64 = 400.0;
const MARGIN: f64 = 56.0;
const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}

/// Polylines sharing one pair of axes; one legend entry per series.
pub fn line_plot(title: &str, x_label: &str, y_label: &str, series: &[(String, Vec<(f64, f64)>)]) -> String {
    let (x0, x1) = bounds(series.iter().flat_map(|s| s.1.iter().map(|p| p.0)));
    let (y0, y1) = bounds(series.iter().flat_map(|s| s.1.iter().map(|p| p.1)));
    let px = |x: f64| MARGIN + (x - x0) / (x1 - x0) * (W - 2.0 * MARGIN);
    let py = |y: f64| H - MARGIN - (y - y0) / (y1 - y0) * (H - 2.0 * MARGIN);
    let mut out = header(title);
    let _ = writeln!(
        out,
        r##"<rect x="{m}" y="{m}" width="{w}" height="{h}" fill="none" stroke="#444"/>"##,
        m = MARGIN,
        w = W - 2.0 * MARGIN,
        h = H - 2.0 * MARGIN
    );
    for (v, anchor_y) in [(y0, py(y0)), (y1, py(y1))] {
        let _ = writeln!(out, r#"<text x="{}" y="{:.1}" font-size="11" text-anchor="end">{}</text>"#, MARGIN - 4.0, anchor_y + 4.0, fmt_tick(v));
    }
    for (v, anchor_x) in [(x0, px(x0)), (x1, px(x1))] {
        let _ = writeln!(out, r#"<text x="{:.1}" y="{}" font-size="11" text-anchor="middle">{}</text>"#, anchor_x, H - MARGIN + 16.0, fmt_tick(v));
    }
    let _ = writeln!(out, r#"<text x="{}" y="{}" font-size="12" text-anchor="middle">{}</text>"#, W / 2.0, H - 12.0, escape(x_label));
    let _ = writeln!(
        out,
        r#"<text x="14" y="{}" font-size="12" text-anchor="middle" transform="rotate(-90 14 {})">{}</text>"#,
        H / 2.0,
        H / 2.0,
        escape(y_label)
    );
    for (k, (name, pts)) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let coords: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y))).collect();
        if coords.len() == 1 {
            let _ = writeln!(out, r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#, px(pts[0].0), py(pts[0].1));
        } else {
            let _ = writeln!(out, r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#, coords.join(" "));
        }
        let ly = MARGIN + 14.0 * k as f64 + 12.0;
        let _ = writeln!(out, r#"<text x="{}" y="{ly}" font-size="11" fill="{color}">{}</text>"#, W - MARGIN + 4.0 - 120.0, escape(name));
    }
    out.push_str("</svg>\n");
    out
}

/// Row-major matrix of values in `[0, 1]` drawn as shaded cells.
pub fn heatmap(title: &str, labels: &[String], m: &[Vec<f64>]) -> String {
    let n = labels.len().max(1);
    let cell = ((H.min(W) - 2.0 * MARGIN) / n as f64).min(60.0);
    let left = MARGIN * 2.0;
    let top = MARGIN;
    let mut out = header(title);
    for (i, row) in m.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            let shade = (255.0 * (1.0 - v.clamp(0.0, 1.0))).round() as u8;
            let _ = writeln!(
                out,
                r##"<rect x="{:.2}" y="{:.2}" width="{cell:.2}" height="{cell:.2}" fill="rgb({shade},{shade},255)" stroke="#fff"><title>{:.4}</title></rect>"##,
                left + j as f64 * cell,
                top + i as f64 * cell,
                v
            );
        }
    }
    for (k, l) in labels.iter().enumerate() {
        let c = k as f64 * cell + cell / 2.0;
        let _ = writeln!(out, r#"<text x="{:.2}" y="{:.2}" font-size="10" text-anchor="end">{}</text>"#, left - 4.0, top + c + 3.0, escape(l));
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" font-size="10" transform="rotate(-45 {:.2} {:.2})">{}</text>"#,
            left + c,
            top + n as f64 * cell + 12.0,
            left + c,
            top + n as f64 * cell + 12.0,
            escape(l)
        );
    }
    out.push_str("</svg>\n");
    out
}

fn header(title: &str) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <text x=\"{}\" y=\"24\" font-size=\"14\" text-anchor=\"middle\">{}</text>\n",
        W / 2.0,
        escape(title)
    )
}

fn fmt_tick(v: f64) -> String {
    if v.abs() >= 1000.0 || (v != 0.0 && v.abs() < 0.01) {
        format!("{v:.2e}")
    } else {
        format!("{v:.2}")
    }
}
