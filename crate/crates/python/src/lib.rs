//! Python bindings: curriculum loading, transcript parsing, heuristic
//! evaluation, metrics, aggregation, rendering, prompt assembly and synthesis.

use pyo3::exceptions::{PyKeyError, PyValueError};
use pyo3::prelude::*;

use tutorlens_core::curriculum::{self as cur, WeekSpec};
use tutorlens_core::evaluator::{self as ev, AssessmentSet};
use tutorlens_core::metrics::{self as met, ClassAggregate, EngagementReport};
use tutorlens_core::promptgen;
use tutorlens_core::report;
use tutorlens_core::synth::{self, SynthSpec, WordsSpec};
use tutorlens_core::transcript::{self as tr, SubmissionMeta, TranscriptFormat};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

#[pyclass(name = "Curriculum", frozen, skip_from_py_object)]
struct Curriculum(cur::Curriculum);

impl Curriculum {
    fn week(&self, week_id: &str) -> PyResult<&WeekSpec> {
        self.0.week(week_id).map_err(|e| PyKeyError::new_err(e.to_string()))
    }
}

#[pymethods]
impl Curriculum {
    /// Parses a TOML curriculum document. Does not validate it.
    #[staticmethod]
    fn from_toml(text: &str) -> PyResult<Self> {
        cur::parse_curriculum(text.as_bytes()).map(Curriculum).map_err(value_err)
    }

    /// Every violation as `path: message`; empty when valid.
    fn validate(&self) -> Vec<String> {
        cur::validate_curriculum(&self.0)
            .violations
            .iter()
            .map(|v| v.to_string())
            .collect()
    }

    #[getter]
    fn course_id(&self) -> &str {
        &self.0.course_id
    }

    fn week_ids(&self) -> Vec<String> {
        self.0.weeks().map(|w| w.week_id.clone()).collect()
    }

    fn subtopic_ids(&self, week_id: &str) -> PyResult<Vec<String>> {
        Ok(self.week(week_id)?.subtopics.iter().map(|s| s.subtopic_id.clone()).collect())
    }

    fn to_toml(&self) -> String {
        self.0.to_toml()
    }
}

#[pyclass(name = "Transcript", frozen, skip_from_py_object)]
struct Transcript(tr::Transcript);

#[pymethods]
impl Transcript {
    /// `fmt` is "jsonl" or "text".
    #[staticmethod]
    #[pyo3(signature = (data, fmt, submission_id, student_pseudonym, week_id, submitted_at=0))]
    fn parse(
        data: &[u8],
        fmt: &str,
        submission_id: &str,
        student_pseudonym: &str,
        week_id: &str,
        submitted_at: i64,
    ) -> PyResult<Self> {
        let format: TranscriptFormat = fmt.parse().map_err(value_err)?;
        let meta = SubmissionMeta {
            submission_id: submission_id.into(),
            student_pseudonym: student_pseudonym.into(),
            week_id: week_id.into(),
            submitted_at,
        };
        tr::parse_transcript(data, format, &meta).map(Transcript).map_err(value_err)
    }

    #[getter]
    fn submission_id(&self) -> &str {
        &self.0.submission_id
    }

    #[getter]
    fn week_id(&self) -> &str {
        &self.0.week_id
    }

    /// (index, role, text) for every turn.
    fn turns(&self) -> Vec<(usize, String, String)> {
        self.0
            .turns
            .iter()
            .map(|t| (t.index, t.role.to_string(), t.text.clone()))
            .collect()
    }

    fn to_jsonl(&self) -> String {
        self.0.to_jsonl()
    }

    fn __len__(&self) -> usize {
        self.0.turns.len()
    }
}

#[pyclass(name = "Assessment", frozen, skip_from_py_object)]
struct Assessment(AssessmentSet);

#[pymethods]
impl Assessment {
    /// subtopic id -> depth (0-3) for every assessed subtopic.
    fn depths(&self) -> Vec<(String, u8)> {
        self.0.entries.iter().map(|(k, v)| (k.clone(), v.depth.value())).collect()
    }

    #[getter]
    fn unattributed_student_turns(&self) -> Vec<usize> {
        self.0.unattributed_student_turns.clone()
    }

    fn to_json(&self) -> String {
        self.0.to_json()
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        AssessmentSet::from_json(text)
            .map(Assessment)
            .map_err(|v| PyValueError::new_err(v.join("; ")))
    }
}

#[pyclass(name = "EngagementReport", frozen, skip_from_py_object)]
struct Report(EngagementReport);

#[pymethods]
impl Report {
    #[getter]
    fn submission_id(&self) -> &str {
        &self.0.submission_id
    }

    #[getter]
    fn week_id(&self) -> &str {
        &self.0.week_id
    }

    #[getter]
    fn topic_coverage(&self) -> f64 {
        self.0.topic_coverage
    }

    #[getter]
    fn avg_topic_depth(&self) -> Option<f64> {
        self.0.avg_topic_depth
    }

    #[getter]
    fn avg_turn_length_per_topic(&self) -> Option<f64> {
        self.0.avg_turn_length_per_topic
    }

    #[getter]
    fn engaged_subtopics(&self) -> usize {
        self.0.engaged_subtopics
    }

    #[getter]
    fn total_subtopics(&self) -> usize {
        self.0.total_subtopics
    }

    fn to_json(&self) -> String {
        self.0.to_json()
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        EngagementReport::from_json(text).map(Report).map_err(value_err)
    }
}

#[pyclass(name = "ClassAggregate", frozen, skip_from_py_object)]
struct Aggregate(ClassAggregate);

#[pymethods]
impl Aggregate {
    #[getter]
    fn week_id(&self) -> &str {
        &self.0.week_id
    }

    #[getter]
    fn n_students(&self) -> usize {
        self.0.n_students
    }

    #[getter]
    fn median_coverage(&self) -> f64 {
        self.0.median_coverage()
    }

    #[getter]
    fn median_avg_depth(&self) -> Option<f64> {
        self.0.median_avg_depth()
    }

    #[getter]
    fn median_avg_turn_length(&self) -> Option<f64> {
        self.0.median_avg_turn_length()
    }

    fn to_json(&self) -> String {
        self.0.to_json()
    }
}

#[pyfunction]
fn evaluate_heuristic(transcript: &Transcript, curriculum: &Curriculum) -> PyResult<Assessment> {
    let week = curriculum.week(&transcript.0.week_id)?;
    ev::evaluate_heuristic(&transcript.0, week).map(Assessment).map_err(value_err)
}

#[pyfunction]
fn build_report(transcript: &Transcript, assessment: &Assessment, curriculum: &Curriculum) -> PyResult<Report> {
    let week = curriculum.week(&transcript.0.week_id)?;
    met::build_report(&transcript.0, &assessment.0, week.subtopics.len())
        .map(Report)
        .map_err(value_err)
}

#[pyfunction]
fn aggregate_class(reports: Vec<PyRef<'_, Report>>) -> PyResult<Aggregate> {
    let owned: Vec<EngagementReport> = reports.iter().map(|r| r.0.clone()).collect();
    met::aggregate_class(&owned).map(Aggregate).map_err(value_err)
}

/// Percent changes from `a` to `b` with their rendered callouts:
/// ((coverage, depth, turn_length), (rendered...)).
#[pyfunction]
fn compare_weeks(a: &Aggregate, b: &Aggregate) -> PyResult<((f64, f64, f64), [String; 3])> {
    let cmp = met::compare_weeks(&a.0, &b.0).map_err(value_err)?;
    Ok((
        (cmp.pct_change_coverage, cmp.pct_change_depth, cmp.pct_change_turn_length),
        cmp.rendered(),
    ))
}

/// Returns (file_name, html).
#[pyfunction]
fn render_student_report(report: &Report, curriculum: &Curriculum, created_at: i64) -> PyResult<(String, String)> {
    let week = curriculum.week(&report.0.week_id)?;
    let doc = report::render_student_report(&report.0, week, created_at).map_err(value_err)?;
    Ok((doc.file_name(), doc.body))
}

/// Returns (file_name, html); aggregates are in week order, the comparison
/// runs from the first to the last.
#[pyfunction]
#[pyo3(signature = (aggregates, created_at, compare=true))]
fn render_class_report(
    aggregates: Vec<PyRef<'_, Aggregate>>,
    created_at: i64,
    compare: bool,
) -> PyResult<(String, String)> {
    let aggs: Vec<ClassAggregate> = aggregates.iter().map(|a| a.0.clone()).collect();
    let cmp = match (compare, aggs.first(), aggs.last()) {
        (true, Some(a), Some(b)) if aggs.len() > 1 => Some(met::compare_weeks(a, b).map_err(value_err)?),
        _ => None,
    };
    let doc = report::render_class_report(&aggs, cmp.as_ref(), created_at).map_err(value_err)?;
    Ok((doc.file_name(), doc.body))
}

/// The agent configuration file for a week, built from the default templates.
#[pyfunction]
fn agent_config(curriculum: &Curriculum, week_id: &str) -> PyResult<String> {
    promptgen::assemble_agent_config(
        &curriculum.0,
        week_id,
        promptgen::DEFAULT_PERSONA_TEMPLATE,
        promptgen::DEFAULT_PEDAGOGY_TEMPLATE,
    )
    .map(|c| c.to_file())
    .map_err(value_err)
}

/// A synthetic transcript with known metrics; returns (transcript, planted report).
#[pyfunction]
#[pyo3(signature = (curriculum, week_id, seed, depth_histogram, words_mean=12.0, words_spread=3.0, messages=(1, 2, 2)))]
fn synthesize(
    curriculum: &Curriculum,
    week_id: &str,
    seed: u64,
    depth_histogram: [usize; 3],
    words_mean: f64,
    words_spread: f64,
    messages: (usize, usize, usize),
) -> PyResult<(Transcript, Report)> {
    let week = curriculum.week(week_id)?;
    let engaged: usize = depth_histogram.iter().sum();
    let spec = SynthSpec {
        seed,
        week_id: week_id.into(),
        target_coverage: engaged as f64 / week.subtopics.len() as f64,
        depth_histogram,
        words_per_message: WordsSpec {
            mean: words_mean,
            spread: words_spread,
        },
        messages_per_engaged_subtopic: [messages.0, messages.1, messages.2],
        submitted_at: 0,
    };
    let out = synth::generate_transcript(&spec, week).map_err(value_err)?;
    Ok((Transcript(out.transcript), Report(out.planted)))
}

#[pymodule]
fn tutorlens(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Curriculum>()?;
    m.add_class::<Transcript>()?;
    m.add_class::<Assessment>()?;
    m.add_class::<Report>()?;
    m.add_class::<Aggregate>()?;
    m.add_function(wrap_pyfunction!(evaluate_heuristic, m)?)?;
    m.add_function(wrap_pyfunction!(build_report, m)?)?;
    m.add_function(wrap_pyfunction!(aggregate_class, m)?)?;
    m.add_function(wrap_pyfunction!(compare_weeks, m)?)?;
    m.add_function(wrap_pyfunction!(render_student_report, m)?)?;
    m.add_function(wrap_pyfunction!(render_class_report, m)?)?;
    m.add_function(wrap_pyfunction!(agent_config, m)?)?;
    m.add_function(wrap_pyfunction!(synthesize, m)?)?;
    Ok(())
}
