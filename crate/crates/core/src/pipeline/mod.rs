//! Submission processing: parse, evaluate, compute metrics, render and store,
//! with idempotent re-delivery and dead-lettering of failures.

pub mod config;
pub mod service;
pub mod store;

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::curriculum::{parse_curriculum, Curriculum, CurriculumError, WeekSpec};
use crate::evaluator::{evaluate_remote, AssessmentSet, Backend, DEFAULT_RUBRIC_PROMPT};
use crate::metrics::{aggregate_class, build_report, compare_weeks, EngagementReport, MetricError};
use crate::report::{render_class_report, render_student_report, ReportError};
use crate::transcript::{check_pseudonym, parse_transcript, SubmissionMeta, TranscriptFormat};

pub use config::{ConfigError, PipelineConfig};
pub use store::{
    Acl, ArtifactKind, ArtifactStore, LocalStore, NewArtifact, NotificationRecord, Reader,
    StoreError, StoredArtifact, SubmissionRecord, SubmissionStatus,
};

pub const DEAD_LETTER_SCHEMA: &str = "dead-letter/v1";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubmissionEvent {
    pub submission_id: String,
    pub student_pseudonym: String,
    pub week_id: String,
    pub received_at: i64,
    /// Store key of the raw transcript bytes.
    pub payload_ref: String,
    pub format: TranscriptFormat,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProcessingOutcome {
    pub submission_id: String,
    pub assessment_key: String,
    pub metrics_key: String,
    pub report_key: String,
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("submission `{submission_id}` failed at stage {stage}: {message}")]
    DeadLettered {
        submission_id: String,
        stage: String,
        message: String,
        dead_letter_key: String,
    },
    #[error("submission `{0}` was already received with a different payload")]
    Conflict(String),
    #[error("invalid submission: {0}")]
    InvalidSubmission(String),
    #[error("no stored reports for week `{0}`")]
    NoReports(String),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Curriculum(#[from] CurriculumError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Report(#[from] ReportError),
}

#[derive(Serialize)]
struct DeadLetter<'a> {
    schema: &'static str,
    submission_id: &'a str,
    student_pseudonym: &'a str,
    week_id: &'a str,
    received_at: i64,
    payload_ref: &'a str,
    stage: &'a str,
    error: &'a str,
}

/// Failure inside the processing chain, before it is dead-lettered.
struct StageError {
    stage: &'static str,
    message: String,
}

fn at<E: std::fmt::Display>(stage: &'static str) -> impl FnOnce(E) -> StageError {
    move |e| StageError {
        stage,
        message: e.to_string(),
    }
}

/// Submission ids and pseudonyms end up in file names.
fn check_id(id: &str) -> Result<(), PipelineError> {
    let ok = !id.is_empty()
        && id.len() <= 128
        && !id.starts_with('.')
        && id.chars().all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c));
    if ok {
        Ok(())
    } else {
        Err(PipelineError::InvalidSubmission(format!(
            "submission_id `{id}` must be 1-128 characters from [A-Za-z0-9._-]"
        )))
    }
}

/// Id for uploads that do not carry one: stable under re-delivery.
pub fn derive_submission_id(pseudonym: &str, week_id: &str, payload: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(pseudonym.as_bytes());
    h.update(b"\n");
    h.update(week_id.as_bytes());
    h.update(b"\n");
    h.update(payload);
    format!("sub-{}", &hex::encode(h.finalize())[..16])
}

pub struct Pipeline {
    cfg: PipelineConfig,
    curriculum: Curriculum,
    rubric_prompt: String,
    store: LocalStore,
    in_flight: Mutex<HashMap<String, Arc<Mutex<()>>>>,
}

impl Pipeline {
    pub fn open(cfg: PipelineConfig) -> Result<Self, PipelineError> {
        let bytes = std::fs::read(&cfg.curriculum).map_err(|e| {
            PipelineError::Config(ConfigError::Read {
                path: cfg.curriculum.clone(),
                source: e,
            })
        })?;
        let curriculum = parse_curriculum(&bytes)?;
        Self::with_curriculum(cfg, curriculum)
    }

    pub fn with_curriculum(cfg: PipelineConfig, curriculum: Curriculum) -> Result<Self, PipelineError> {
        cfg.check()?;
        let report = crate::curriculum::validate_curriculum(&curriculum);
        if let Some(v) = report.violations.first() {
            return Err(PipelineError::Curriculum(CurriculumError::Schema {
                path: v.path.clone(),
                message: v.message.clone(),
            }));
        }
        let rubric_prompt = match &cfg.rubric_prompt {
            Some(path) => std::fs::read_to_string(path).map_err(|source| {
                PipelineError::Config(ConfigError::Read {
                    path: path.clone(),
                    source,
                })
            })?,
            None => DEFAULT_RUBRIC_PROMPT.to_string(),
        };
        let store = LocalStore::open(&cfg.store_root)?;
        Ok(Pipeline {
            cfg,
            curriculum,
            rubric_prompt,
            store,
            in_flight: Mutex::new(HashMap::new()),
        })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.cfg
    }

    pub fn curriculum(&self) -> &Curriculum {
        &self.curriculum
    }

    pub fn store(&self) -> &LocalStore {
        &self.store
    }

    /// Stores the raw payload and builds the event that refers to it.
    /// Rejects a known submission id whose recorded payload differs.
    pub fn ingest(
        &self,
        submission_id: &str,
        student_pseudonym: &str,
        week_id: &str,
        format: TranscriptFormat,
        payload: &[u8],
        received_at: i64,
    ) -> Result<SubmissionEvent, PipelineError> {
        check_id(submission_id)?;
        check_pseudonym(student_pseudonym)
            .map_err(|e| PipelineError::InvalidSubmission(e.to_string()))?;
        if week_id.trim().is_empty() {
            return Err(PipelineError::InvalidSubmission("week_id is empty".into()));
        }
        // a reused id with a different payload must not leave a raw artifact behind
        if let Some(rec) = self.store.submission(submission_id)? {
            if rec.payload_key != store::content_key(payload) {
                return Err(PipelineError::Conflict(rec.submission_id));
            }
        }
        let raw = self.store.put(
            payload,
            NewArtifact {
                kind: ArtifactKind::RawTranscript,
                acl: Acl::InstructorOnly,
                created_at: received_at,
                submission_id: Some(submission_id),
                week_id: Some(week_id),
            },
        )?;
        Ok(SubmissionEvent {
            submission_id: submission_id.to_string(),
            student_pseudonym: student_pseudonym.to_string(),
            week_id: week_id.to_string(),
            received_at,
            payload_ref: raw.key,
            format,
        })
    }

    fn lock_for(&self, submission_id: &str) -> Arc<Mutex<()>> {
        let mut map = self.in_flight.lock().unwrap_or_else(|e| e.into_inner());
        map.entry(submission_id.to_string()).or_default().clone()
    }

    /// Processes one event. Re-delivery of a known submission with the same
    /// payload returns the recorded outcome without reprocessing.
    pub fn handle_submission(&self, e: &SubmissionEvent) -> Result<ProcessingOutcome, PipelineError> {
        check_id(&e.submission_id)?;
        let lock = self.lock_for(&e.submission_id);
        let _guard = lock.lock().unwrap_or_else(|p| p.into_inner());

        if let Some(rec) = self.store.submission(&e.submission_id)? {
            return replay(rec, &e.payload_ref);
        }

        let record = match self.process(e) {
            Ok(outcome) => SubmissionRecord {
                submission_id: e.submission_id.clone(),
                payload_key: e.payload_ref.clone(),
                status: SubmissionStatus::Processed {
                    assessment_key: outcome.assessment_key,
                    metrics_key: outcome.metrics_key,
                    report_key: outcome.report_key,
                },
            },
            Err(err) => {
                tracing::warn!(submission = %e.submission_id, stage = err.stage, "{}", err.message);
                let letter = DeadLetter {
                    schema: DEAD_LETTER_SCHEMA,
                    submission_id: &e.submission_id,
                    student_pseudonym: &e.student_pseudonym,
                    week_id: &e.week_id,
                    received_at: e.received_at,
                    payload_ref: &e.payload_ref,
                    stage: err.stage,
                    error: &err.message,
                };
                let bytes = serde_json::to_vec_pretty(&letter).expect("dead letter serializes");
                let stored = self.store.put(
                    &bytes,
                    NewArtifact {
                        kind: ArtifactKind::DeadLetter,
                        acl: Acl::InstructorOnly,
                        created_at: e.received_at,
                        submission_id: Some(&e.submission_id),
                        week_id: Some(&e.week_id),
                    },
                )?;
                SubmissionRecord {
                    submission_id: e.submission_id.clone(),
                    payload_key: e.payload_ref.clone(),
                    status: SubmissionStatus::Failed {
                        stage: err.stage.to_string(),
                        error: err.message,
                        dead_letter_key: stored.key,
                    },
                }
            }
        };
        let recorded = self.store.record_submission(&record)?;
        if let SubmissionStatus::Processed { report_key, .. } = &recorded.status {
            self.store.append_notification(&NotificationRecord {
                submission_id: e.submission_id.clone(),
                recipient_pseudonym: e.student_pseudonym.clone(),
                report_key: report_key.clone(),
                sent_at: e.received_at,
                channel: store::Channel::LogOnly,
            })?;
            tracing::info!(submission = %e.submission_id, report = %report_key, "report stored");
        }
        replay(recorded, &e.payload_ref)
    }

    fn evaluate(&self, t: &crate::transcript::Transcript, week: &WeekSpec) -> Result<AssessmentSet, StageError> {
        match self.cfg.backend {
            Backend::Heuristic => self.cfg.rubric.evaluate(t, week).map_err(at("evaluate")),
            Backend::Remote => {
                let remote = self.cfg.remote.as_ref().ok_or_else(|| StageError {
                    stage: "evaluate",
                    message: "remote backend selected without [remote] config".into(),
                })?;
                evaluate_remote(t, week, remote, &self.rubric_prompt).map_err(at("evaluate"))
            }
        }
    }

    fn process(&self, e: &SubmissionEvent) -> Result<ProcessingOutcome, StageError> {
        let week = self.curriculum.week(&e.week_id).map_err(at("week"))?;
        let (_, raw) = self
            .store
            .get(&e.payload_ref)
            .map_err(at("payload"))?
            .ok_or_else(|| StageError {
                stage: "payload",
                message: format!("payload {} is not in the store", e.payload_ref),
            })?;
        let meta = SubmissionMeta {
            submission_id: e.submission_id.clone(),
            student_pseudonym: e.student_pseudonym.clone(),
            week_id: e.week_id.clone(),
            submitted_at: e.received_at,
        };
        let transcript = parse_transcript(&raw, e.format, &meta).map_err(at("parse"))?;
        let assessment = self.evaluate(&transcript, week)?;
        let report =
            build_report(&transcript, &assessment, week.subtopics.len()).map_err(at("metrics"))?;
        let doc = render_student_report(&report, week, transcript.submitted_at).map_err(at("render"))?;

        let put = |bytes: &[u8], kind, acl| {
            self.store
                .put(
                    bytes,
                    NewArtifact {
                        kind,
                        acl,
                        created_at: e.received_at,
                        submission_id: Some(&e.submission_id),
                        week_id: Some(&e.week_id),
                    },
                )
                .map(|a| a.key)
                .map_err(at("store"))
        };
        Ok(ProcessingOutcome {
            submission_id: e.submission_id.clone(),
            assessment_key: put(
                assessment.to_json().as_bytes(),
                ArtifactKind::Assessment,
                Acl::InstructorOnly,
            )?,
            metrics_key: put(report.to_json().as_bytes(), ArtifactKind::Metrics, Acl::Both)?,
            report_key: put(doc.body.as_bytes(), ArtifactKind::Report, Acl::Both)?,
        })
    }

    /// Engagement reports stored for a week, ordered by submission id.
    pub fn stored_reports(&self, week_id: &str) -> Result<Vec<EngagementReport>, PipelineError> {
        let mut reports = Vec::new();
        for meta in self.store.list()? {
            if meta.kind != ArtifactKind::Metrics || meta.week_id.as_deref() != Some(week_id) {
                continue;
            }
            if let Some((_, bytes)) = self.store.get(&meta.key)? {
                let text = String::from_utf8(bytes)
                    .map_err(|_| StoreError::Corrupt(format!("metrics {} is not UTF-8", meta.key)))?;
                reports.push(EngagementReport::from_json(&text)?);
            }
        }
        reports.sort_by(|a, b| a.submission_id.cmp(&b.submission_id));
        Ok(reports)
    }

    /// Aggregates every stored report for the week (plus the preceding week
    /// when it has reports) and stores the rendered class document.
    pub fn run_class_aggregation(&self, week_id: &str) -> Result<String, PipelineError> {
        let week = self.curriculum.week(week_id)?;
        let reports = self.stored_reports(week_id)?;
        if reports.is_empty() {
            return Err(PipelineError::NoReports(week_id.to_string()));
        }
        let current = aggregate_class(&reports)?;
        let mut aggs = vec![current];
        let mut comparison = None;
        if let Some(prev_id) = &week.prev_week_id {
            let prev_reports = self.stored_reports(prev_id)?;
            if !prev_reports.is_empty() {
                let prev = aggregate_class(&prev_reports)?;
                comparison = compare_weeks(&prev, &aggs[0]).ok();
                aggs.insert(0, prev);
            }
        }
        let as_of = aggs.iter().map(|a| a.as_of).max().unwrap_or(0);
        for agg in &aggs {
            self.store.put(
                agg.to_json().as_bytes(),
                NewArtifact {
                    kind: ArtifactKind::Aggregate,
                    acl: Acl::InstructorOnly,
                    created_at: agg.as_of,
                    submission_id: None,
                    week_id: Some(&agg.week_id),
                },
            )?;
        }
        let doc = render_class_report(&aggs, comparison.as_ref(), as_of)?;
        let stored = self.store.put(
            doc.body.as_bytes(),
            NewArtifact {
                kind: ArtifactKind::ClassReport,
                acl: Acl::InstructorOnly,
                created_at: as_of,
                submission_id: None,
                week_id: Some(week_id),
            },
        )?;
        Ok(stored.key)
    }
}

fn replay(rec: SubmissionRecord, payload_ref: &str) -> Result<ProcessingOutcome, PipelineError> {
    if rec.payload_key != payload_ref {
        return Err(PipelineError::Conflict(rec.submission_id));
    }
    match rec.status {
        SubmissionStatus::Processed {
            assessment_key,
            metrics_key,
            report_key,
        } => Ok(ProcessingOutcome {
            submission_id: rec.submission_id,
            assessment_key,
            metrics_key,
            report_key,
        }),
        SubmissionStatus::Failed {
            stage,
            error,
            dead_letter_key,
        } => Err(PipelineError::DeadLettered {
            submission_id: rec.submission_id,
            stage,
            message: error,
            dead_letter_key,
        }),
    }
}
