//! 2-D scatter of embeddings with one line per class segment, as SVG.

use std::fmt::Write as _;

use crate::daal::LineSegmentSet;
use crate::numerics::Matrix;

const SIZE: f64 = 640.0;
const PAD: f64 = 24.0;

const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
];

fn color(class: usize) -> &'static str {
    PALETTE[class % PALETTE.len()]
}

/// `embeddings` must have two columns. Points and segment endpoints share
/// one isotropic scale so distances look right.
pub fn render_svg(embeddings: &Matrix, labels: &[usize], segments: Option<&LineSegmentSet>) -> String {
    debug_assert_eq!(embeddings.cols(), 2);
    let mut xs: Vec<f64> = embeddings.column(0);
    let mut ys: Vec<f64> = embeddings.column(1);
    if let Some(set) = segments {
        for s in &set.segments {
            xs.extend([s.a[0], s.b[0]]);
            ys.extend([s.a[1], s.b[1]]);
        }
    }
    let bounds = |v: &[f64]| v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
    let (x0, x1) = bounds(&xs);
    let (y0, y1) = bounds(&ys);
    let span = (x1 - x0).max(y1 - y0).max(1e-9);
    let scale = (SIZE - 2.0 * PAD) / span;
    let px = |x: f64| PAD + (x - x0) * scale;
    // SVG y grows downward.
    let py = |y: f64| SIZE - PAD - (y - y0) * scale;

    let mut out = String::new();
    writeln!(out, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" viewBox="0 0 {SIZE} {SIZE}">"#).unwrap();
    writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#).unwrap();
    writeln!(out, r#"<g stroke="none" fill-opacity="0.7">"#).unwrap();
    for (row, &label) in embeddings.iter_rows().zip(labels) {
        writeln!(out, r#"<circle cx="{:.2}" cy="{:.2}" r="2.5" fill="{}"/>"#, px(row[0]), py(row[1]), color(label)).unwrap();
    }
    out.push_str("</g>\n");
    if let Some(set) = segments {
        out.push_str("<g stroke-width=\"3\" stroke-linecap=\"round\">\n");
        for s in &set.segments {
            writeln!(
                out,
                r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="{}"/>"#,
                px(s.a[0]),
                py(s.a[1]),
                px(s.b[0]),
                py(s.b[1]),
                color(s.class_id)
            )
            .unwrap();
        }
        out.push_str("</g>\n");
    }
    out.push_str("</svg>\n");
    out
}
