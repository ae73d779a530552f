//! Self-contained SVG bar charts.
//!
//! Bars are drawn inside a group scaled so that the largest value spans the
//! plot height; each `rect` carries its raw value as `height`, which keeps
//! bar heights exactly proportional to the data.

use std::fmt::Write;

use thiserror::Error;

use crate::rounding::compact;

#[derive(Debug, Error, PartialEq)]
pub enum ChartError {
    #[error("{labels} labels but {values} values")]
    LengthMismatch { labels: usize, values: usize },
    #[error("value {value} at position {index} is negative or not finite")]
    InvalidValue { index: usize, value: f64 },
}

pub const PLOT_HEIGHT: f64 = 180.0;
const LEFT: f64 = 56.0;
const TOP: f64 = 24.0;
const BAR_WIDTH: f64 = 36.0;
const BAR_GAP: f64 = 24.0;

pub(crate) fn escape(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&#39;"),
            c => out.push(c),
        }
    }
    out
}

/// Bar chart with compact numeric value labels.
pub fn chart_bars(labels: &[String], values: &[f64], axis_title: &str) -> Result<String, ChartError> {
    chart_bars_with(labels, values, axis_title, compact)
}

/// Bar chart with a caller-supplied value label format.
pub fn chart_bars_with(
    labels: &[String],
    values: &[f64],
    axis_title: &str,
    value_label: impl Fn(f64) -> String,
) -> Result<String, ChartError> {
    if labels.len() != values.len() {
        return Err(ChartError::LengthMismatch {
            labels: labels.len(),
            values: values.len(),
        });
    }
    if let Some((index, &value)) = values
        .iter()
        .enumerate()
        .find(|(_, v)| !v.is_finite() || **v < 0.0)
    {
        return Err(ChartError::InvalidValue { index, value });
    }

    let n = labels.len() as f64;
    let width = (LEFT + BAR_GAP + n * (BAR_WIDTH + BAR_GAP)).max(200.0);
    let base = TOP + PLOT_HEIGHT;
    let height = base + 40.0;
    let max = values.iter().copied().fold(0.0, f64::max);
    let scale = if max > 0.0 { PLOT_HEIGHT / max } else { 1.0 };
    let title = escape(axis_title);

    let mut svg = String::new();
    let _ = write!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" class=\"chart\" width=\"{w}\" height=\"{h}\" \
         viewBox=\"0 0 {w} {h}\" role=\"img\" aria-label=\"{title}\">\n<title>{title}</title>\n",
        w = compact(width),
        h = compact(height),
    );
    let _ = writeln!(
        svg,
        "<line class=\"axis\" x1=\"{LEFT}\" y1=\"{base}\" x2=\"{x2}\" y2=\"{base}\" stroke=\"#333\"/>",
        x2 = compact(width - 8.0),
    );
    let _ = writeln!(
        svg,
        "<line class=\"axis\" x1=\"{LEFT}\" y1=\"{TOP}\" x2=\"{LEFT}\" y2=\"{base}\" stroke=\"#333\"/>"
    );
    let mid = compact(TOP + PLOT_HEIGHT / 2.0);
    let _ = writeln!(
        svg,
        "<text class=\"axis-title\" x=\"16\" y=\"{mid}\" transform=\"rotate(-90 16 {mid})\" \
         text-anchor=\"middle\" font-size=\"12\">{title}</text>"
    );

    let _ = writeln!(
        svg,
        "<g class=\"bars\" transform=\"translate(0 {base}) scale(1 -{})\" fill=\"#4a78b5\">",
        compact(scale)
    );
    for (i, v) in values.iter().enumerate() {
        let x = LEFT + BAR_GAP + i as f64 * (BAR_WIDTH + BAR_GAP);
        let _ = writeln!(
            svg,
            "<rect x=\"{}\" y=\"0\" width=\"{BAR_WIDTH}\" height=\"{}\"/>",
            compact(x),
            compact(*v)
        );
    }
    svg.push_str("</g>\n");

    for (i, (label, v)) in labels.iter().zip(values).enumerate() {
        let cx = compact(LEFT + BAR_GAP + i as f64 * (BAR_WIDTH + BAR_GAP) + BAR_WIDTH / 2.0);
        let top = compact(base - v * scale - 4.0);
        let _ = writeln!(
            svg,
            "<text class=\"value\" x=\"{cx}\" y=\"{top}\" text-anchor=\"middle\" font-size=\"11\">{}</text>",
            escape(&value_label(*v))
        );
        let _ = writeln!(
            svg,
            "<text class=\"label\" x=\"{cx}\" y=\"{}\" text-anchor=\"middle\" font-size=\"11\">{}</text>",
            compact(base + 16.0),
            escape(label)
        );
    }
    svg.push_str("</svg>");
    Ok(svg)
}
