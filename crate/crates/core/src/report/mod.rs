//! HTML feedback documents with inline SVG charts.
//!
//! Documents are deterministic given their inputs and a pinned timestamp.
//! Student documents never include transcript text.

pub mod svg;

use std::fmt::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::curriculum::WeekSpec;
use crate::evaluator::Depth;
use crate::metrics::{ClassAggregate, EngagementReport, WeekComparison};
use crate::rounding::{self, UNDEFINED};
pub use svg::{chart_bars, ChartError};
use svg::{chart_bars_with, escape};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DocumentKind {
    StudentFeedback,
    ClassAggregate,
    WeekComparison,
}

impl DocumentKind {
    pub fn slug(self) -> &'static str {
        match self {
            DocumentKind::StudentFeedback => "student-feedback",
            DocumentKind::ClassAggregate => "class-aggregate",
            DocumentKind::WeekComparison => "week-comparison",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenderedDocument {
    pub doc_id: String,
    pub kind: DocumentKind,
    pub body: String,
    pub charts: Vec<String>,
    pub created_at: i64,
}

impl RenderedDocument {
    pub fn file_name(&self) -> String {
        format!("{}.html", self.doc_id)
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ReportError {
    #[error("report is for week `{report}` but the week spec is `{week}`")]
    WeekMismatch { report: String, week: String },
    #[error("at least one aggregate is required")]
    NoAggregates,
    #[error(transparent)]
    Chart(#[from] ChartError),
}

const STYLE: &str = "body{font-family:sans-serif;max-width:52em;margin:2em auto;color:#222}\
table{border-collapse:collapse}td,th{border:1px solid #bbb;padding:.25em .6em;text-align:left}\
dl.headline{display:grid;grid-template-columns:max-content auto;gap:.3em 1.5em}\
dd{margin:0;font-weight:bold}.callout{font-size:1.3em}figure{display:inline-block;margin:1em}";

fn timestamp(secs: i64) -> String {
    chrono::DateTime::from_timestamp(secs, 0)
        .map(|t| t.to_rfc3339_opts(chrono::SecondsFormat::Secs, true))
        .unwrap_or_else(|| secs.to_string())
}

fn open_document(out: &mut String, title: &str) {
    let _ = write!(
        out,
        "<!DOCTYPE html>\n<html lang=\"en\">\n<head>\n<meta charset=\"utf-8\"/>\n\
         <title>{}</title>\n<style>{STYLE}</style>\n</head>\n<body>\n",
        escape(title)
    );
}

fn figure(out: &mut String, chart: &str, caption: &str) {
    let _ = write!(
        out,
        "<figure>\n{chart}\n<figcaption>{}</figcaption>\n</figure>\n",
        escape(caption)
    );
}

fn words(value: Option<f64>) -> String {
    match value {
        Some(_) => format!("{} words", rounding::two_decimals(value)),
        None => UNDEFINED.to_string(),
    }
}

/// Per-student feedback: headline metrics, per-subtopic table and two charts.
pub fn render_student_report(
    r: &EngagementReport,
    week: &WeekSpec,
    created_at: i64,
) -> Result<RenderedDocument, ReportError> {
    if r.week_id != week.week_id {
        return Err(ReportError::WeekMismatch {
            report: r.week_id.clone(),
            week: week.week_id.clone(),
        });
    }
    let coverage_chart = chart_bars_with(
        &["engaged".to_string(), "not engaged".to_string()],
        &[
            r.engaged_subtopics as f64,
            r.total_subtopics.saturating_sub(r.engaged_subtopics) as f64,
        ],
        "Subtopics",
        rounding::compact,
    )?;
    let depth_labels: Vec<String> = week.subtopics.iter().map(|s| s.subtopic_id.clone()).collect();
    let depth_values: Vec<f64> = week
        .subtopics
        .iter()
        .map(|s| {
            r.per_subtopic
                .get(&s.subtopic_id)
                .map_or(0.0, |m| m.depth.value() as f64)
        })
        .collect();
    let depth_chart = chart_bars_with(&depth_labels, &depth_values, "Depth (0-3)", |v| {
        rounding::compact(v)
    })?;

    let mut body = String::new();
    open_document(&mut body, &format!("Engagement feedback: {}", week.topic_title));
    let _ = write!(
        body,
        "<h1>Engagement feedback</h1>\n<p class=\"meta\">Student <span class=\"pseudonym\">{}</span> \
         | Week {}: {} | Generated {}</p>\n",
        escape(&r.student_pseudonym),
        escape(&week.week_id),
        escape(&week.topic_title),
        timestamp(created_at)
    );
    let _ = write!(
        body,
        "<dl class=\"headline\">\n\
         <dt>Topic coverage</dt><dd id=\"coverage\">{}</dd>\n\
         <dt>Subtopics engaged</dt><dd id=\"engaged\">{} of {}</dd>\n\
         <dt>Average topic depth</dt><dd id=\"depth\">{}</dd>\n\
         <dt>Average turn length per topic</dt><dd id=\"turn-length\">{}</dd>\n</dl>\n",
        rounding::percent(r.topic_coverage),
        r.engaged_subtopics,
        r.total_subtopics,
        rounding::two_decimals(r.avg_topic_depth),
        words(r.avg_turn_length_per_topic),
    );

    body.push_str(
        "<h2>Subtopics</h2>\n<table class=\"subtopics\">\n<thead><tr><th>Subtopic</th>\
         <th>Bloom level</th><th>Depth</th><th>Messages</th><th>Mean words</th></tr></thead>\n<tbody>\n",
    );
    for s in &week.subtopics {
        let title = if s.tutorial_only {
            format!("{} (tutorial)", s.title)
        } else {
            s.title.clone()
        };
        let (depth, messages, mean) = match r.per_subtopic.get(&s.subtopic_id) {
            Some(m) => (
                format!("{} {}", m.depth.value(), m.depth.label()),
                m.message_count.to_string(),
                rounding::two_decimals(m.mean_student_words),
            ),
            None => ("Not discussed".to_string(), "0".to_string(), UNDEFINED.to_string()),
        };
        let _ = writeln!(
            body,
            "<tr><td>{}</td><td>{}</td><td>{}</td><td>{}</td><td>{}</td></tr>",
            escape(&title),
            s.bloom_level,
            escape(&depth),
            messages,
            mean
        );
    }
    body.push_str("</tbody>\n</table>\n<h2>Charts</h2>\n");
    figure(&mut body, &coverage_chart, "Subtopics engaged this week");
    figure(&mut body, &depth_chart, "Depth reached per subtopic");
    body.push_str("<p class=\"scale\">Depth scale: ");
    let scale: Vec<String> = (0..=Depth::MAX)
        .map(|d| {
            let d = Depth::new(d).expect("in range");
            format!("{} {}", d.value(), d.label())
        })
        .collect();
    body.push_str(&escape(&scale.join("; ")));
    body.push_str(".</p>\n</body>\n</html>\n");

    Ok(RenderedDocument {
        doc_id: format!(
            "{}-{}-{}",
            DocumentKind::StudentFeedback.slug(),
            r.week_id,
            r.submission_id
        ),
        kind: DocumentKind::StudentFeedback,
        body,
        charts: vec![coverage_chart, depth_chart],
        created_at,
    })
}

/// Class-level document: per-week median charts, summary table and, when a
/// comparison is given, percent-change callouts.
pub fn render_class_report(
    aggs: &[ClassAggregate],
    cmp: Option<&WeekComparison>,
    created_at: i64,
) -> Result<RenderedDocument, ReportError> {
    if aggs.is_empty() {
        return Err(ReportError::NoAggregates);
    }
    let labels: Vec<String> = aggs.iter().map(|a| a.week_id.clone()).collect();
    // coverage bars are drawn at the one-decimal precision they are labelled with
    let coverage: Vec<f64> = aggs
        .iter()
        .map(|a| (a.median_coverage() * 1000.0).round() / 10.0)
        .collect();
    let depth: Vec<f64> = aggs.iter().map(|a| a.median_avg_depth().unwrap_or(0.0)).collect();
    let turns: Vec<f64> = aggs
        .iter()
        .map(|a| a.median_avg_turn_length().unwrap_or(0.0))
        .collect();
    let charts = vec![
        chart_bars_with(&labels, &coverage, "Median topic coverage (%)", |v| {
            rounding::percent_one_decimal(v / 100.0)
        })?,
        chart_bars_with(&labels, &depth, "Median avg. topic depth", |v| {
            rounding::two_decimals(Some(v))
        })?,
        chart_bars_with(&labels, &turns, "Median avg. turn length (words)", |v| {
            rounding::two_decimals(Some(v))
        })?,
    ];

    let (kind, title) = match cmp {
        Some(c) => (
            DocumentKind::WeekComparison,
            format!("Class engagement: {} vs {}", c.week_a, c.week_b),
        ),
        None => (DocumentKind::ClassAggregate, "Class engagement".to_string()),
    };
    let mut body = String::new();
    open_document(&mut body, &title);
    let _ = write!(
        body,
        "<h1>{}</h1>\n<p class=\"meta\">Weeks {} | Generated {}</p>\n",
        escape(&title),
        escape(&labels.join(", ")),
        timestamp(created_at)
    );

    if let Some(c) = cmp {
        let [cov, dep, len] = c.rendered();
        let _ = write!(
            body,
            "<h2>Change from {} to {}</h2>\n<ul class=\"comparison\">\n\
             <li>Topic coverage <strong class=\"callout\">{cov}</strong></li>\n\
             <li>Average topic depth <strong class=\"callout\">{dep}</strong></li>\n\
             <li>Average turn length <strong class=\"callout\">{len}</strong></li>\n</ul>\n",
            escape(&c.week_a),
            escape(&c.week_b)
        );
    }

    body.push_str(
        "<h2>Medians</h2>\n<table class=\"aggregate\">\n<thead><tr><th>Week</th><th>Students</th>\
         <th>Coverage median</th><th>Coverage range</th><th>Depth median</th><th>Depth IQR</th>\
         <th>Turn length median</th><th>Turn length IQR</th></tr></thead>\n<tbody>\n",
    );
    for a in aggs {
        let iqr = |s: Option<crate::metrics::MetricSummary>| match s {
            Some(s) => format!(
                "{} to {}",
                rounding::two_decimals(Some(s.q1)),
                rounding::two_decimals(Some(s.q3))
            ),
            None => UNDEFINED.to_string(),
        };
        let _ = writeln!(
            body,
            "<tr><td>{}</td><td>{}</td><td>{}</td><td>{} to {}</td><td>{}</td><td>{}</td><td>{}</td><td>{}</td></tr>",
            escape(&a.week_id),
            a.n_students,
            rounding::percent_one_decimal(a.median_coverage()),
            rounding::percent(a.coverage.min),
            rounding::percent(a.coverage.max),
            rounding::two_decimals(a.median_avg_depth()),
            iqr(a.depth),
            words(a.median_avg_turn_length()),
            iqr(a.turn_length),
        );
    }
    body.push_str("</tbody>\n</table>\n<h2>Charts</h2>\n");
    figure(&mut body, &charts[0], "Median topic coverage");
    figure(&mut body, &charts[1], "Median average topic depth");
    figure(&mut body, &charts[2], "Median average turn length per topic");
    body.push_str("</body>\n</html>\n");

    let weeks = labels.join("_");
    Ok(RenderedDocument {
        doc_id: format!("{}-{}-class", kind.slug(), weeks),
        kind,
        body,
        charts,
        created_at,
    })
}
