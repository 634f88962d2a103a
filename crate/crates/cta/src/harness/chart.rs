//! Hand-rolled SVG charts: confidence bar grids, sweep curves, and
//! long-term accuracy curves. Output is deterministic text so identical
//! runs produce byte-identical files.

use crate::adapt::Adapter;
use crate::error::{CtaError, Result};
use crate::numerics::Tensor;

const SERIES_COLORS: [&str; 6] = ["#1b6ca8", "#d1495b", "#3b8557", "#8a5bb8", "#c98a1e", "#5b5b5b"];
const CORRECT_FILL: &str = "#2c7fb8";
const OTHER_FILL: &str = "#bdbdbd";

fn fmt(v: f64) -> String {
    format!("{v:.2}")
}

/// Maximum samples per confidence chart; wider grids stop being readable.
pub const MAX_CHART_SAMPLES: usize = 16;

/// Renders per-class prediction confidences as a grid of bar panels, one
/// row per adapter and one column per selected sample, plus the raw
/// vectors as CSV (`adapter,sample,class,confidence,is_correct`).
///
/// Every adapter infers on the full batch, so batch-statistic methods see
/// the same normalization context they would in a protocol run.
pub fn confidence_chart(
    adapters: &[(String, &Adapter)],
    images: &Tensor,
    labels: &[usize],
    sample_indices: &[usize],
) -> Result<(String, String)> {
    if adapters.is_empty() {
        return Err(CtaError::EmptyInput("confidence chart adapter list".into()));
    }
    if sample_indices.is_empty() {
        return Err(CtaError::EmptyInput("confidence chart sample list".into()));
    }
    if sample_indices.len() > MAX_CHART_SAMPLES {
        return Err(CtaError::invalid(
            "sample_indices",
            format!("{} samples exceed the chart maximum of {MAX_CHART_SAMPLES}", sample_indices.len()),
        ));
    }
    let batch = images.shape().first().copied().unwrap_or(0);
    for &i in sample_indices {
        if i >= batch {
            return Err(CtaError::invalid(
                "sample_indices",
                format!("index {i} out of range for a batch of {batch}"),
            ));
        }
    }
    if labels.len() != batch {
        return Err(CtaError::shape("confidence chart labels", batch, labels.len()));
    }

    let mut probs_per_adapter = Vec::new();
    for (_, adapter) in adapters {
        probs_per_adapter.push(adapter.infer(images)?.probs);
    }
    let classes = probs_per_adapter[0].shape()[1];

    let mut csv = String::from("adapter,sample,class,confidence,is_correct\n");
    for ((name, _), probs) in adapters.iter().zip(&probs_per_adapter) {
        for &s in sample_indices {
            for c in 0..classes {
                let p = probs.data()[s * classes + c];
                csv.push_str(&format!(
                    "{name},{s},{c},{p:.6},{}\n",
                    u8::from(c == labels[s])
                ));
            }
        }
    }

    // Panel geometry.
    let (pw, ph) = (96.0, 64.0);
    let (gx, gy) = (12.0, 26.0);
    let left = 86.0;
    let top = 30.0;
    let width = left + sample_indices.len() as f64 * (pw + gx) + 8.0;
    let height = top + adapters.len() as f64 * (ph + gy) + 8.0;
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {} {}\" font-family=\"sans-serif\" font-size=\"10\">\n",
        fmt(width),
        fmt(height)
    );
    svg.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    for (col, &s) in sample_indices.iter().enumerate() {
        let x = left + col as f64 * (pw + gx);
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">sample {} (class {})</text>\n",
            fmt(x + pw / 2.0),
            fmt(top - 8.0),
            s,
            labels[s]
        ));
    }
    let bar_w = pw / classes as f64;
    for (row, ((name, _), probs)) in adapters.iter().zip(&probs_per_adapter).enumerate() {
        let y0 = top + row as f64 * (ph + gy);
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{}</text>\n",
            fmt(left - 10.0),
            fmt(y0 + ph / 2.0),
            name
        ));
        for (col, &s) in sample_indices.iter().enumerate() {
            let x0 = left + col as f64 * (pw + gx);
            svg.push_str(&format!(
                "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"#444\" stroke-width=\"0.6\"/>\n",
                fmt(x0),
                fmt(y0 + ph),
                fmt(x0 + pw),
                fmt(y0 + ph)
            ));
            for c in 0..classes {
                let p = probs.data()[s * classes + c];
                let h = p * ph;
                let fill = if c == labels[s] { CORRECT_FILL } else { OTHER_FILL };
                svg.push_str(&format!(
                    "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"{}\"/>\n",
                    fmt(x0 + c as f64 * bar_w + 0.5),
                    fmt(y0 + ph - h),
                    fmt(bar_w - 1.0),
                    fmt(h),
                    fill
                ));
            }
        }
    }
    svg.push_str("</svg>\n");
    Ok((svg, csv))
}

/// A labeled series of (x, y) points.
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

/// Shared line-chart scaffolding: axes, ticks, legend, one polyline per
/// series, and a dashed zero line when the y range crosses zero. Negative
/// points get open markers so dips below zero stand out.
fn line_chart(title: &str, x_label: &str, y_label: &str, x_ticks: &[(f64, String)], series: &[Series]) -> String {
    let (width, height) = (560.0, 340.0);
    let (left, right, top, bottom) = (64.0, 18.0, 34.0, 50.0);
    let (plot_w, plot_h) = (width - left - right, height - top - bottom);

    let xs: Vec<f64> = series.iter().flat_map(|s| s.points.iter().map(|p| p.0)).collect();
    let ys: Vec<f64> = series.iter().flat_map(|s| s.points.iter().map(|p| p.1)).collect();
    let (x_min, x_max) = bounds(&xs, 0.0);
    let (mut y_min, mut y_max) = bounds(&ys, 1.0);
    let pad = (y_max - y_min) * 0.08;
    y_min -= pad;
    y_max += pad;
    let sx = move |x: f64| left + (x - x_min) / (x_max - x_min).max(1e-12) * plot_w;
    let sy = move |y: f64| top + (y_max - y) / (y_max - y_min).max(1e-12) * plot_h;

    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {} {}\" font-family=\"sans-serif\" font-size=\"11\">\n",
        fmt(width),
        fmt(height)
    );
    svg.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"18\" text-anchor=\"middle\" font-size=\"13\">{}</text>\n",
        fmt(left + plot_w / 2.0),
        title
    ));
    svg.push_str(&format!(
        "<line x1=\"{l}\" y1=\"{b}\" x2=\"{r}\" y2=\"{b}\" stroke=\"#222\"/>\n<line x1=\"{l}\" y1=\"{t}\" x2=\"{l}\" y2=\"{b}\" stroke=\"#222\"/>\n",
        l = fmt(left),
        r = fmt(left + plot_w),
        t = fmt(top),
        b = fmt(top + plot_h)
    ));
    for (x, label) in x_ticks {
        let px = sx(*x);
        svg.push_str(&format!(
            "<line x1=\"{px}\" y1=\"{}\" x2=\"{px}\" y2=\"{}\" stroke=\"#222\"/>\n<text x=\"{px}\" y=\"{}\" text-anchor=\"middle\">{label}</text>\n",
            fmt(top + plot_h),
            fmt(top + plot_h + 5.0),
            fmt(top + plot_h + 18.0),
            px = fmt(px)
        ));
    }
    for i in 0..=4 {
        let y = y_min + (y_max - y_min) * f64::from(i) / 4.0;
        let py = sy(y);
        svg.push_str(&format!(
            "<line x1=\"{}\" y1=\"{py}\" x2=\"{}\" y2=\"{py}\" stroke=\"#222\"/>\n<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{}</text>\n",
            fmt(left - 5.0),
            fmt(left),
            fmt(left - 8.0),
            fmt(py + 3.5),
            fmt(y),
            py = fmt(py)
        ));
    }
    if y_min < 0.0 && y_max > 0.0 {
        let zy = sy(0.0);
        svg.push_str(&format!(
            "<line x1=\"{}\" y1=\"{zy}\" x2=\"{}\" y2=\"{zy}\" stroke=\"#999\" stroke-dasharray=\"4 3\"/>\n",
            fmt(left),
            fmt(left + plot_w),
            zy = fmt(zy)
        ));
    }
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n",
        fmt(left + plot_w / 2.0),
        fmt(height - 12.0),
        x_label
    ));
    svg.push_str(&format!(
        "<text x=\"16\" y=\"{}\" text-anchor=\"middle\" transform=\"rotate(-90 16 {})\">{}</text>\n",
        fmt(top + plot_h / 2.0),
        fmt(top + plot_h / 2.0),
        y_label
    ));
    for (i, s) in series.iter().enumerate() {
        let color = SERIES_COLORS[i % SERIES_COLORS.len()];
        let path: Vec<String> = s.points.iter().map(|(x, y)| format!("{},{}", fmt(sx(*x)), fmt(sy(*y)))).collect();
        svg.push_str(&format!(
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.8\"/>\n",
            path.join(" ")
        ));
        for (x, y) in &s.points {
            let fill = if *y < 0.0 { "white" } else { color };
            svg.push_str(&format!(
                "<circle cx=\"{}\" cy=\"{}\" r=\"3\" fill=\"{fill}\" stroke=\"{color}\" stroke-width=\"1.2\"/>\n",
                fmt(sx(*x)),
                fmt(sy(*y))
            ));
        }
        let ly = top + 14.0 * i as f64;
        svg.push_str(&format!(
            "<rect x=\"{}\" y=\"{}\" width=\"10\" height=\"4\" fill=\"{color}\"/>\n<text x=\"{}\" y=\"{}\">{}</text>\n",
            fmt(left + plot_w - 120.0),
            fmt(ly - 3.0),
            fmt(left + plot_w - 105.0),
            fmt(ly + 2.0),
            s.label
        ));
    }
    svg.push_str("</svg>\n");
    svg
}

fn bounds(values: &[f64], fallback_span: f64) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &v in values {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !lo.is_finite() || !hi.is_finite() {
        return (0.0, fallback_span.max(1.0));
    }
    if lo == hi {
        return (lo - 0.5, hi + 0.5);
    }
    (lo, hi)
}

/// BN-gain-versus-batch-size curve. X positions are log2(batch size);
/// negative gains render as open markers below the dashed zero line.
pub fn sweep_chart(curves: &[(String, Vec<(usize, f64)>)]) -> String {
    let series: Vec<Series> = curves
        .iter()
        .map(|(label, pts)| Series {
            label: label.clone(),
            points: pts.iter().map(|(b, g)| ((*b as f64).log2(), *g)).collect(),
        })
        .collect();
    let mut ticks: Vec<(f64, String)> = curves
        .first()
        .map(|(_, pts)| pts.iter().map(|(b, _)| ((*b as f64).log2(), b.to_string())).collect())
        .unwrap_or_default();
    ticks.dedup_by(|a, b| a.1 == b.1);
    line_chart(
        "Batch-statistic gain vs batch size",
        "batch size",
        "accuracy gain (points)",
        &ticks,
        &series,
    )
}

/// Per-epoch curves for long-term runs; one series per adapter.
pub fn long_term_chart(title: &str, y_label: &str, curves: &[(String, Vec<(usize, f64)>)]) -> String {
    let series: Vec<Series> = curves
        .iter()
        .map(|(label, pts)| Series {
            label: label.clone(),
            points: pts.iter().map(|(e, v)| (*e as f64, *v)).collect(),
        })
        .collect();
    let max_epoch = curves
        .iter()
        .flat_map(|(_, pts)| pts.iter().map(|(e, _)| *e))
        .max()
        .unwrap_or(1);
    let step = (max_epoch / 10).max(1);
    let ticks: Vec<(f64, String)> = (1..=max_epoch)
        .filter(|e| e % step == 0 || *e == 1)
        .map(|e| (e as f64, e.to_string()))
        .collect();
    line_chart(title, "epoch", y_label, &ticks, &series)
}
