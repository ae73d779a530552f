//! Transcript ingestion.
//!
//! Two input formats are accepted:
//!
//! * `jsonl` (canonical): one object per line, `{"index": 0, "role": "student", "text": "..."}`.
//!   Extra keys such as `timestamp` are ignored.
//! * `text` (plain export): lines starting with `Student:` or `Agent:` (case-insensitive,
//!   surrounding whitespace allowed) open a turn; any other line continues the previous turn.
//!
//! Normalization trims each turn, drops turns that end up empty and re-indexes the rest.
//! Consecutive turns with the same role are never merged.

use std::fmt;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Student,
    Agent,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::Student => "student",
            Role::Agent => "agent",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    pub index: usize,
    pub role: Role,
    pub text: String,
    pub word_count: usize,
}

impl Turn {
    pub fn new(index: usize, role: Role, text: impl Into<String>) -> Self {
        let text = text.into();
        let word_count = word_count(&text);
        Turn {
            index,
            role,
            text,
            word_count,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TranscriptFormat {
    #[serde(rename = "jsonl")]
    CanonicalJsonLines,
    #[serde(rename = "text")]
    PlainTextExport,
}

impl TranscriptFormat {
    pub fn as_str(self) -> &'static str {
        match self {
            TranscriptFormat::CanonicalJsonLines => "jsonl",
            TranscriptFormat::PlainTextExport => "text",
        }
    }
}

impl std::str::FromStr for TranscriptFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "jsonl" | "json" | "canonical" => Ok(TranscriptFormat::CanonicalJsonLines),
            "text" | "txt" | "plain" => Ok(TranscriptFormat::PlainTextExport),
            other => Err(format!("unknown transcript format `{other}` (expected jsonl or text)")),
        }
    }
}

/// Submission metadata sidecar.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubmissionMeta {
    pub submission_id: String,
    pub student_pseudonym: String,
    pub week_id: String,
    /// UTC seconds since the epoch.
    pub submitted_at: i64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transcript {
    pub submission_id: String,
    pub student_pseudonym: String,
    pub week_id: String,
    pub submitted_at: i64,
    pub turns: Vec<Turn>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TranscriptError {
    #[error("transcript is not valid UTF-8 (first bad byte at offset {0})")]
    Undecodable(usize),
    #[error("line {line}: {reason}")]
    UnrecognizedLine { line: usize, reason: String },
    #[error("transcript has no turns after normalization")]
    NoTurns,
    #[error("invalid student pseudonym `{0}`: must be an opaque identifier")]
    InvalidPseudonym(String),
}

/// Number of maximal runs of non-whitespace characters.
pub fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}

/// Rejects values that look like names or email addresses.
pub fn check_pseudonym(p: &str) -> Result<(), TranscriptError> {
    let looks_opaque = !p.is_empty()
        && !p.contains('@')
        && !p.chars().any(char::is_whitespace)
        && p.len() <= 128;
    if looks_opaque {
        Ok(())
    } else {
        Err(TranscriptError::InvalidPseudonym(p.to_string()))
    }
}

pub fn parse_transcript(
    raw: &[u8],
    format: TranscriptFormat,
    meta: &SubmissionMeta,
) -> Result<Transcript, TranscriptError> {
    check_pseudonym(&meta.student_pseudonym)?;
    let text = std::str::from_utf8(raw).map_err(|e| TranscriptError::Undecodable(e.valid_up_to()))?;
    let raw_turns = match format {
        TranscriptFormat::CanonicalJsonLines => read_jsonl(text)?,
        TranscriptFormat::PlainTextExport => read_plain(text)?,
    };
    let turns: Vec<Turn> = raw_turns
        .into_iter()
        .filter_map(|(role, text)| {
            let trimmed = text.trim();
            (!trimmed.is_empty()).then(|| (role, trimmed.to_string()))
        })
        .enumerate()
        .map(|(i, (role, text))| Turn::new(i, role, text))
        .collect();
    if turns.is_empty() {
        return Err(TranscriptError::NoTurns);
    }
    Ok(Transcript {
        submission_id: meta.submission_id.clone(),
        student_pseudonym: meta.student_pseudonym.clone(),
        week_id: meta.week_id.clone(),
        submitted_at: meta.submitted_at,
        turns,
    })
}

#[derive(Deserialize)]
struct JsonLine {
    #[allow(dead_code)]
    index: i64,
    role: Role,
    text: String,
}

fn read_jsonl(text: &str) -> Result<Vec<(Role, String)>, TranscriptError> {
    text.lines()
        .enumerate()
        .filter(|(_, line)| !line.trim().is_empty())
        .map(|(i, line)| {
            serde_json::from_str::<JsonLine>(line)
                .map(|l| (l.role, l.text))
                .map_err(|e| TranscriptError::UnrecognizedLine {
                    line: i + 1,
                    reason: e.to_string(),
                })
        })
        .collect()
}

static ROLE_PREFIX: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)^\s*(student|agent)\s*:(.*)$").unwrap());

fn read_plain(text: &str) -> Result<Vec<(Role, String)>, TranscriptError> {
    let mut turns: Vec<(Role, String)> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if let Some(caps) = ROLE_PREFIX.captures(line) {
            let role = if caps[1].eq_ignore_ascii_case("student") {
                Role::Student
            } else {
                Role::Agent
            };
            turns.push((role, caps[2].to_string()));
        } else if let Some((_, body)) = turns.last_mut() {
            body.push('\n');
            body.push_str(line);
        } else if !line.trim().is_empty() {
            return Err(TranscriptError::UnrecognizedLine {
                line: i + 1,
                reason: "expected a `Student:` or `Agent:` prefix".into(),
            });
        }
    }
    Ok(turns)
}

impl Transcript {
    pub fn meta(&self) -> SubmissionMeta {
        SubmissionMeta {
            submission_id: self.submission_id.clone(),
            student_pseudonym: self.student_pseudonym.clone(),
            week_id: self.week_id.clone(),
            submitted_at: self.submitted_at,
        }
    }

    /// Serializes the turns in the canonical JSON-lines format.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for turn in &self.turns {
            let line = serde_json::json!({
                "index": turn.index,
                "role": turn.role,
                "text": turn.text,
            });
            out.push_str(&line.to_string());
            out.push('\n');
        }
        out
    }

    /// Concatenated turn texts, used for evidence substring checks.
    pub fn contains_text(&self, needle: &str) -> bool {
        self.turns.iter().any(|t| t.text.contains(needle))
    }

    pub fn student_turn_indices(&self) -> Vec<usize> {
        student_turns(self).map(|t| t.index).collect()
    }
}

pub fn student_turns(t: &Transcript) -> impl Iterator<Item = &Turn> {
    t.turns.iter().filter(|turn| turn.role == Role::Student)
}
