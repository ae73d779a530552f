//! Transcript evaluation into per-subtopic depth assessments.
//!
//! Two backends produce the same `assessment/v1` document: a deterministic
//! lexical evaluator ([`heuristic`]) and a chat-completion endpoint
//! ([`remote`]) whose responses are validated, never repaired.

pub mod heuristic;
pub mod lexical;
pub mod remote;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::curriculum::{Subtopic, WeekSpec};
use crate::transcript::Transcript;

pub use heuristic::{
    attribute_in_context, attribute_turn, evaluate_heuristic, rate_depth, DepthRubric,
};
pub use remote::{evaluate_remote, RemoteBackendConfig, DEFAULT_RUBRIC_PROMPT};

pub const ASSESSMENT_SCHEMA: &str = "assessment/v1";
/// Longest evidence quote accepted, in words.
pub const MAX_EVIDENCE_WORDS: usize = 30;

/// Ordinal topic depth, 0..=3.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "i64", into = "u8")]
pub struct Depth(u8);

impl Depth {
    pub const MENTIONED: Depth = Depth(0);
    pub const BASIC: Depth = Depth(1);
    pub const FOLLOW_UP: Depth = Depth(2);
    pub const IN_DEPTH: Depth = Depth(3);
    pub const MAX: u8 = 3;

    pub fn new(value: u8) -> Option<Depth> {
        (value <= Self::MAX).then_some(Depth(value))
    }

    pub fn value(self) -> u8 {
        self.0
    }

    /// Rubric wording for the level.
    pub fn label(self) -> &'static str {
        match self.0 {
            0 => "Briefly mentioned",
            1 => "Basic question asked",
            2 => "Explored with follow-ups or comparisons",
            _ => "Examined in depth through reasoning or clarification",
        }
    }
}

impl TryFrom<i64> for Depth {
    type Error = String;

    fn try_from(v: i64) -> Result<Self, Self::Error> {
        u8::try_from(v)
            .ok()
            .and_then(Depth::new)
            .ok_or_else(|| format!("depth {v} outside 0..=3"))
    }
}

impl From<Depth> for u8 {
    fn from(d: Depth) -> u8 {
        d.0
    }
}

impl fmt::Display for Depth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    Heuristic,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubtopicAssessment {
    pub subtopic_id: String,
    pub depth: Depth,
    pub attributed_student_turns: Vec<usize>,
    pub evidence: Vec<String>,
}

/// Evaluation result for one transcript. Subtopics absent from `entries`
/// were not engaged at all.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AssessmentSet {
    pub week_id: String,
    pub submission_id: String,
    pub entries: BTreeMap<String, SubtopicAssessment>,
    pub unattributed_student_turns: Vec<usize>,
    pub backend: Backend,
}

/// Wire form of [`AssessmentSet`] (`assessment/v1`).
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AssessmentDoc {
    schema: String,
    week_id: String,
    submission_id: String,
    backend: Backend,
    entries: Vec<SubtopicAssessment>,
    unattributed_student_turns: Vec<usize>,
}

#[derive(Debug, Error)]
pub enum EvaluateError {
    #[error("transcript is for week `{found}` but subtopics belong to `{expected}`")]
    WeekMismatch { expected: String, found: String },
    #[error("invalid remote backend config: {0}")]
    Config(String),
    #[error("authentication failed: {0}")]
    Authentication(String),
    #[error("request timed out")]
    Timeout,
    #[error("network error: {0}")]
    Network(String),
    #[error("response failed schema validation after {attempts} attempts: {}", violations.join("; "))]
    SchemaInvalidAfterRetries {
        attempts: u32,
        violations: Vec<String>,
        last_raw: String,
    },
}

impl AssessmentSet {
    pub fn empty(week_id: &str, submission_id: &str, backend: Backend) -> Self {
        AssessmentSet {
            week_id: week_id.to_string(),
            submission_id: submission_id.to_string(),
            entries: BTreeMap::new(),
            unattributed_student_turns: Vec::new(),
            backend,
        }
    }

    /// Entries counted as active engagement.
    pub fn engaged(&self) -> impl Iterator<Item = &SubtopicAssessment> {
        self.entries
            .values()
            .filter(|e| e.depth >= crate::metrics::ENGAGED_MIN_DEPTH)
    }

    /// Serializes as a pretty-printed `assessment/v1` document. Entries are
    /// ordered by subtopic id so output is byte-stable.
    pub fn to_json(&self) -> String {
        let doc = AssessmentDoc {
            schema: ASSESSMENT_SCHEMA.to_string(),
            week_id: self.week_id.clone(),
            submission_id: self.submission_id.clone(),
            backend: self.backend,
            entries: self.entries.values().cloned().collect(),
            unattributed_student_turns: self.unattributed_student_turns.clone(),
        };
        serde_json::to_string_pretty(&doc).expect("assessment serializes")
    }

    /// Strict parse: exactly one object, no unknown fields, no duplicate
    /// entries. Does not check transcript-relative invariants; see
    /// [`AssessmentSet::check_against`].
    pub fn from_json(text: &str) -> Result<Self, Vec<String>> {
        let doc: AssessmentDoc = serde_json::from_str(text).map_err(|e| vec![e.to_string()])?;
        let mut violations = Vec::new();
        if doc.schema != ASSESSMENT_SCHEMA {
            violations.push(format!(
                "schema must be `{ASSESSMENT_SCHEMA}`, found `{}`",
                doc.schema
            ));
        }
        let mut entries = BTreeMap::new();
        for entry in doc.entries {
            if entries.contains_key(&entry.subtopic_id) {
                violations.push(format!("duplicate entry for subtopic `{}`", entry.subtopic_id));
                continue;
            }
            entries.insert(entry.subtopic_id.clone(), entry);
        }
        if !violations.is_empty() {
            return Err(violations);
        }
        Ok(AssessmentSet {
            week_id: doc.week_id,
            submission_id: doc.submission_id,
            entries,
            unattributed_student_turns: doc.unattributed_student_turns,
            backend: doc.backend,
        })
    }

    /// Every invariant violation relative to the transcript and week
    /// subtopics. Empty means the set is valid.
    pub fn check_against(&self, t: &Transcript, subtopics: &[Subtopic]) -> Vec<String> {
        let mut v = Vec::new();
        if self.week_id != t.week_id {
            v.push(format!("week_id `{}` does not match transcript `{}`", self.week_id, t.week_id));
        }
        if self.submission_id != t.submission_id {
            v.push(format!(
                "submission_id `{}` does not match transcript `{}`",
                self.submission_id, t.submission_id
            ));
        }
        let known: BTreeSet<&str> = subtopics.iter().map(|s| s.subtopic_id.as_str()).collect();
        let student: BTreeSet<usize> = t.student_turn_indices().into_iter().collect();
        let mut seen: BTreeMap<usize, &str> = BTreeMap::new();

        for (key, entry) in &self.entries {
            if key != &entry.subtopic_id {
                v.push(format!("entry key `{key}` holds subtopic `{}`", entry.subtopic_id));
            }
            if !known.contains(key.as_str()) {
                v.push(format!("unknown subtopic `{key}`"));
            }
            if entry.depth >= Depth::BASIC && entry.attributed_student_turns.is_empty() {
                v.push(format!(
                    "subtopic `{key}` has depth {} but no attributed student turns",
                    entry.depth
                ));
            }
            for &idx in &entry.attributed_student_turns {
                if !student.contains(&idx) {
                    v.push(format!("subtopic `{key}` attributes turn {idx}, which is not a student turn"));
                }
                if let Some(prev) = seen.insert(idx, key) {
                    v.push(format!("turn {idx} attributed to both `{prev}` and `{key}`"));
                }
            }
            for quote in &entry.evidence {
                if quote.trim().is_empty() || !t.contains_text(quote) {
                    v.push(format!("evidence for `{key}` is not a verbatim transcript quote: {quote:?}"));
                } else if crate::transcript::word_count(quote) > MAX_EVIDENCE_WORDS {
                    v.push(format!("evidence for `{key}` exceeds {MAX_EVIDENCE_WORDS} words"));
                }
            }
        }
        for &idx in &self.unattributed_student_turns {
            if !student.contains(&idx) {
                v.push(format!("unattributed turn {idx} is not a student turn"));
            }
            if let Some(prev) = seen.insert(idx, "<unattributed>") {
                v.push(format!("turn {idx} listed as unattributed and under `{prev}`"));
            }
        }
        for idx in &student {
            if !seen.contains_key(idx) {
                v.push(format!("student turn {idx} is neither attributed nor listed as unattributed"));
            }
        }
        v
    }
}

pub(crate) fn check_week(t: &Transcript, week: &WeekSpec) -> Result<(), EvaluateError> {
    if t.week_id != week.week_id {
        return Err(EvaluateError::WeekMismatch {
            expected: week.week_id.clone(),
            found: t.week_id.clone(),
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn depth_bounds() {
        assert!(Depth::new(3).is_some());
        assert!(Depth::new(4).is_none());
        assert!(Depth::try_from(-1).is_err());
        assert_eq!(Depth::IN_DEPTH.label(), "Examined in depth through reasoning or clarification");
    }

    #[test]
    fn long_evidence_is_rejected() {
        let long: Vec<String> = (0..31).map(|i| format!("w{i}")).collect();
        let text = long.join(" ");
        let t = Transcript {
            submission_id: "s1".into(),
            student_pseudonym: "p".into(),
            week_id: "w1".into(),
            submitted_at: 0,
            turns: vec![crate::transcript::Turn::new(0, crate::transcript::Role::Student, text.clone())],
        };
        let subtopics = vec![Subtopic {
            subtopic_id: "a".into(),
            title: "A".into(),
            keywords: vec!["w0".into()],
            learning_outcome: "x".into(),
            bloom_level: crate::curriculum::BloomLevel::Remember,
            tutorial_only: false,
        }];
        let mut set = AssessmentSet::empty("w1", "s1", Backend::Remote);
        set.entries.insert(
            "a".into(),
            SubtopicAssessment {
                subtopic_id: "a".into(),
                depth: Depth::BASIC,
                attributed_student_turns: vec![0],
                evidence: vec![text],
            },
        );
        assert_eq!(set.check_against(&t, &subtopics), vec!["evidence for `a` exceeds 30 words"]);
        set.entries.get_mut("a").unwrap().evidence = vec![long[..30].join(" ")];
        assert!(set.check_against(&t, &subtopics).is_empty());
    }

    #[test]
    fn json_round_trip_and_strictness() {
        let mut set = AssessmentSet::empty("w1", "s1", Backend::Heuristic);
        set.entries.insert(
            "a".into(),
            SubtopicAssessment {
                subtopic_id: "a".into(),
                depth: Depth::FOLLOW_UP,
                attributed_student_turns: vec![0, 2],
                evidence: vec![],
            },
        );
        set.unattributed_student_turns = vec![4];
        let json = set.to_json();
        assert!(json.contains("\"schema\": \"assessment/v1\""));
        assert_eq!(AssessmentSet::from_json(&json).unwrap(), set);

        assert!(AssessmentSet::from_json(&format!("{json} x")).is_err());
        assert!(AssessmentSet::from_json(&json.replace("\"depth\": 2", "\"depth\": 5")).is_err());
        assert!(AssessmentSet::from_json(&json.replace("\"depth\": 2", "\"depth\": 2.0")).is_err());
    }
}
