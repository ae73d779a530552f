//! Engagement metrics per student-week and class-level aggregation.
//!
//! A subtopic counts as engaged when its depth is at least
//! [`ENGAGED_MIN_DEPTH`]. Average depth and turn length are computed over
//! engaged subtopics only; turn length is the unweighted mean of per-subtopic
//! mean words per student message.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evaluator::{AssessmentSet, Depth};
use crate::rounding;
use crate::transcript::Transcript;

/// "Briefly mentioned" (depth 0) is not active engagement.
pub const ENGAGED_MIN_DEPTH: Depth = Depth::BASIC;

pub const REPORT_SCHEMA: &str = "report/v1";
pub const AGGREGATE_SCHEMA: &str = "aggregate/v1";

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("total_subtopics must be positive")]
    ZeroSubtopics,
    #[error("assessment has {entries} entries but the week only has {total} subtopics")]
    TooManyEntries { entries: usize, total: usize },
    #[error("no engaged subtopics; metric is undefined")]
    NoEngagedSubtopics,
    #[error("week mismatch: transcript `{transcript}`, assessment `{assessment}`")]
    WeekMismatch { transcript: String, assessment: String },
    #[error("no reports to aggregate")]
    EmptyInput,
    #[error("reports span several weeks (`{0}` and `{1}`)")]
    MixedWeeks(String, String),
    #[error("{0} baseline is zero")]
    ZeroBaseline(&'static str),
    #[error("{0} is undefined for week `{1}`")]
    UndefinedMetric(&'static str, String),
    #[error("invalid document: {0}")]
    Document(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubtopicMetrics {
    pub depth: Depth,
    /// `None` when no student message was attributed.
    pub mean_student_words: Option<f64>,
    pub message_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngagementReport {
    pub submission_id: String,
    pub student_pseudonym: String,
    pub week_id: String,
    pub submitted_at: i64,
    pub total_subtopics: usize,
    pub engaged_subtopics: usize,
    pub topic_coverage: f64,
    pub avg_topic_depth: Option<f64>,
    pub avg_turn_length_per_topic: Option<f64>,
    /// Diagnostic: mean words over all engaged-subtopic messages pooled.
    pub pooled_turn_length: Option<f64>,
    pub per_subtopic: BTreeMap<String, SubtopicMetrics>,
}

#[derive(Serialize, Deserialize)]
struct Versioned<T> {
    schema: String,
    #[serde(flatten)]
    body: T,
}

fn to_versioned<T: Serialize + Clone>(schema: &str, body: &T) -> String {
    serde_json::to_string_pretty(&Versioned {
        schema: schema.to_string(),
        body: body.clone(),
    })
    .expect("metric documents serialize")
}

fn from_versioned<T: for<'de> Deserialize<'de>>(schema: &str, text: &str) -> Result<T, MetricError> {
    let doc: Versioned<T> =
        serde_json::from_str(text).map_err(|e| MetricError::Document(e.to_string()))?;
    if doc.schema != schema {
        return Err(MetricError::Document(format!(
            "expected schema `{schema}`, found `{}`",
            doc.schema
        )));
    }
    Ok(doc.body)
}

impl EngagementReport {
    pub fn to_json(&self) -> String {
        to_versioned(REPORT_SCHEMA, self)
    }

    pub fn from_json(text: &str) -> Result<Self, MetricError> {
        from_versioned(REPORT_SCHEMA, text)
    }
}

pub fn topic_coverage(a: &AssessmentSet, total_subtopics: usize) -> Result<f64, MetricError> {
    if total_subtopics == 0 {
        return Err(MetricError::ZeroSubtopics);
    }
    if a.entries.len() > total_subtopics {
        return Err(MetricError::TooManyEntries {
            entries: a.entries.len(),
            total: total_subtopics,
        });
    }
    Ok(a.engaged().count() as f64 / total_subtopics as f64)
}

pub fn avg_topic_depth(a: &AssessmentSet) -> Result<f64, MetricError> {
    let depths: Vec<f64> = a.engaged().map(|e| e.depth.value() as f64).collect();
    mean(&depths).ok_or(MetricError::NoEngagedSubtopics)
}

/// Word counts of the student messages attributed to each engaged subtopic.
fn engaged_word_counts(t: &Transcript, a: &AssessmentSet) -> Vec<Vec<usize>> {
    a.engaged()
        .map(|e| {
            e.attributed_student_turns
                .iter()
                .filter_map(|&i| t.turns.get(i).map(|turn| turn.word_count))
                .collect()
        })
        .collect()
}

pub fn avg_turn_length_per_topic(t: &Transcript, a: &AssessmentSet) -> Result<f64, MetricError> {
    let per_topic: Vec<f64> = engaged_word_counts(t, a)
        .iter()
        .filter_map(|counts| mean_usize(counts))
        .collect();
    mean(&per_topic).ok_or(MetricError::NoEngagedSubtopics)
}

/// Mean over all engaged-subtopic messages taken together.
pub fn pooled_turn_length(t: &Transcript, a: &AssessmentSet) -> Result<f64, MetricError> {
    let all: Vec<usize> = engaged_word_counts(t, a).into_iter().flatten().collect();
    mean_usize(&all).ok_or(MetricError::NoEngagedSubtopics)
}

pub fn build_report(
    t: &Transcript,
    a: &AssessmentSet,
    total_subtopics: usize,
) -> Result<EngagementReport, MetricError> {
    if t.week_id != a.week_id {
        return Err(MetricError::WeekMismatch {
            transcript: t.week_id.clone(),
            assessment: a.week_id.clone(),
        });
    }
    let topic_coverage = topic_coverage(a, total_subtopics)?;
    let defined = |r: Result<f64, MetricError>| match r {
        Ok(v) => Ok(Some(v)),
        Err(MetricError::NoEngagedSubtopics) => Ok(None),
        Err(e) => Err(e),
    };
    let per_subtopic = a
        .entries
        .iter()
        .map(|(id, e)| {
            let counts: Vec<usize> = e
                .attributed_student_turns
                .iter()
                .filter_map(|&i| t.turns.get(i).map(|turn| turn.word_count))
                .collect();
            let m = SubtopicMetrics {
                depth: e.depth,
                mean_student_words: mean_usize(&counts),
                message_count: counts.len(),
            };
            (id.clone(), m)
        })
        .collect();

    Ok(EngagementReport {
        submission_id: t.submission_id.clone(),
        student_pseudonym: t.student_pseudonym.clone(),
        week_id: t.week_id.clone(),
        submitted_at: t.submitted_at,
        total_subtopics,
        engaged_subtopics: a.engaged().count(),
        topic_coverage,
        avg_topic_depth: defined(avg_topic_depth(a))?,
        avg_turn_length_per_topic: defined(avg_turn_length_per_topic(t, a))?,
        pooled_turn_length: defined(pooled_turn_length(t, a))?,
        per_subtopic,
    })
}

fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

fn mean_usize(values: &[usize]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<usize>() as f64 / values.len() as f64)
}

/// Five-number summary of one metric across students.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub n: usize,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

/// Middle element for odd n, mean of the two middle elements for even n.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    Some(if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    })
}

/// Linear-interpolation quantile on sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

impl MetricSummary {
    pub fn of(values: &[f64]) -> Option<MetricSummary> {
        let median = median(values)?;
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        Some(MetricSummary {
            n: sorted.len(),
            min: sorted[0],
            q1: quantile(&sorted, 0.25),
            median,
            q3: quantile(&sorted, 0.75),
            max: sorted[sorted.len() - 1],
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassAggregate {
    pub week_id: String,
    pub n_students: usize,
    pub coverage: MetricSummary,
    pub depth: Option<MetricSummary>,
    pub turn_length: Option<MetricSummary>,
    /// Latest submission time among the aggregated reports.
    pub as_of: i64,
}

impl ClassAggregate {
    pub fn median_coverage(&self) -> f64 {
        self.coverage.median
    }

    pub fn median_avg_depth(&self) -> Option<f64> {
        self.depth.map(|s| s.median)
    }

    pub fn median_avg_turn_length(&self) -> Option<f64> {
        self.turn_length.map(|s| s.median)
    }

    pub fn to_json(&self) -> String {
        to_versioned(AGGREGATE_SCHEMA, self)
    }

    pub fn from_json(text: &str) -> Result<Self, MetricError> {
        from_versioned(AGGREGATE_SCHEMA, text)
    }
}

/// Per-week medians and quartiles. Undefined per-student metrics are left
/// out of that metric's summary only.
pub fn aggregate_class(reports: &[EngagementReport]) -> Result<ClassAggregate, MetricError> {
    let first = reports.first().ok_or(MetricError::EmptyInput)?;
    if let Some(other) = reports.iter().find(|r| r.week_id != first.week_id) {
        return Err(MetricError::MixedWeeks(first.week_id.clone(), other.week_id.clone()));
    }
    let coverage: Vec<f64> = reports.iter().map(|r| r.topic_coverage).collect();
    let depth: Vec<f64> = reports.iter().filter_map(|r| r.avg_topic_depth).collect();
    let turns: Vec<f64> = reports.iter().filter_map(|r| r.avg_turn_length_per_topic).collect();
    Ok(ClassAggregate {
        week_id: first.week_id.clone(),
        n_students: reports.len(),
        coverage: MetricSummary::of(&coverage).expect("nonempty"),
        depth: MetricSummary::of(&depth),
        turn_length: MetricSummary::of(&turns),
        as_of: reports.iter().map(|r| r.submitted_at).max().unwrap_or(0),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeekComparison {
    pub week_a: String,
    pub week_b: String,
    pub pct_change_coverage: f64,
    pub pct_change_depth: f64,
    pub pct_change_turn_length: f64,
}

/// Signed relative change `100 * (b - a) / a`.
pub fn pct_change(a: f64, b: f64) -> Option<f64> {
    (a != 0.0).then(|| 100.0 * (b - a) / a)
}

impl WeekComparison {
    /// Integer-rounded callouts: coverage, depth, turn length.
    pub fn rendered(&self) -> [String; 3] {
        [
            rounding::percent_change(self.pct_change_coverage),
            rounding::percent_change(self.pct_change_depth),
            rounding::percent_change(self.pct_change_turn_length),
        ]
    }
}

pub fn compare_weeks(a: &ClassAggregate, b: &ClassAggregate) -> Result<WeekComparison, MetricError> {
    let pair = |name: &'static str, x: Option<f64>, y: Option<f64>| -> Result<f64, MetricError> {
        let x = x.ok_or_else(|| MetricError::UndefinedMetric(name, a.week_id.clone()))?;
        let y = y.ok_or_else(|| MetricError::UndefinedMetric(name, b.week_id.clone()))?;
        pct_change(x, y).ok_or(MetricError::ZeroBaseline(name))
    };
    Ok(WeekComparison {
        week_a: a.week_id.clone(),
        week_b: b.week_id.clone(),
        pct_change_coverage: pair(
            "coverage",
            Some(a.median_coverage()),
            Some(b.median_coverage()),
        )?,
        pct_change_depth: pair("depth", a.median_avg_depth(), b.median_avg_depth())?,
        pct_change_turn_length: pair(
            "turn length",
            a.median_avg_turn_length(),
            b.median_avg_turn_length(),
        )?,
    })
}
