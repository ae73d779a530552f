//! Course knowledge model: modules, weekly topics and subtopics.
//!
//! The on-disk format is TOML (`curriculum/v1`):
//!
//! ```toml
//! course_id = "ds252"
//! title = "Cloud Computing"
//!
//! [[modules]]
//! module_id = "m1"
//! title = "Foundations"
//!
//! [[modules.weeks]]
//! week_id = "w1"
//! topic_title = "Virtualization"
//! starter_prompts = ["What is a hypervisor?"]
//! next_week_id = "w2"
//!
//! [[modules.weeks.subtopics]]
//! subtopic_id = "vm-hypervisors"
//! title = "Hypervisors"
//! keywords = ["hypervisor", "type-1"]
//! learning_outcome = "Distinguish type-1 and type-2 hypervisors"
//! bloom_level = "Understand"
//! tutorial_only = false   # optional
//! ```
//!
//! Parsed values are immutable and cheap to share across threads.

use std::collections::{HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use toml::{Table, Value};

/// Allowed number of weeks per module.
pub const WEEKS_PER_MODULE: std::ops::RangeInclusive<usize> = 1..=4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BloomLevel {
    Remember,
    Understand,
    Apply,
    Analyze,
    Evaluate,
    Create,
}

impl BloomLevel {
    pub const ALL: [BloomLevel; 6] = [
        BloomLevel::Remember,
        BloomLevel::Understand,
        BloomLevel::Apply,
        BloomLevel::Analyze,
        BloomLevel::Evaluate,
        BloomLevel::Create,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            BloomLevel::Remember => "Remember",
            BloomLevel::Understand => "Understand",
            BloomLevel::Apply => "Apply",
            BloomLevel::Analyze => "Analyze",
            BloomLevel::Evaluate => "Evaluate",
            BloomLevel::Create => "Create",
        }
    }

    /// Case-insensitive lookup.
    pub fn parse(s: &str) -> Option<BloomLevel> {
        Self::ALL
            .into_iter()
            .find(|level| level.as_str().eq_ignore_ascii_case(s.trim()))
    }
}

impl fmt::Display for BloomLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Subtopic {
    pub subtopic_id: String,
    pub title: String,
    pub keywords: Vec<String>,
    pub learning_outcome: String,
    pub bloom_level: BloomLevel,
    #[serde(default)]
    pub tutorial_only: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeekSpec {
    pub week_id: String,
    pub topic_title: String,
    pub starter_prompts: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prev_week_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub next_week_id: Option<String>,
    pub subtopics: Vec<Subtopic>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModuleSpec {
    pub module_id: String,
    pub title: String,
    pub weeks: Vec<WeekSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Curriculum {
    pub course_id: String,
    pub title: String,
    pub modules: Vec<ModuleSpec>,
}

#[derive(Debug, Error, PartialEq)]
pub enum CurriculumError {
    #[error("syntax error at byte offset {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("schema error at {path}: {message}")]
    Schema { path: String, message: String },
    #[error("unknown week `{0}`")]
    UnknownWeek(String),
}

/// A single invariant violation found by [`validate_curriculum`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub path: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    fn push(&mut self, path: impl Into<String>, message: impl Into<String>) {
        self.violations.push(Violation {
            path: path.into(),
            message: message.into(),
        });
    }
}

impl Curriculum {
    pub fn weeks(&self) -> impl Iterator<Item = &WeekSpec> {
        self.modules.iter().flat_map(|m| m.weeks.iter())
    }

    pub fn week(&self, week_id: &str) -> Result<&WeekSpec, CurriculumError> {
        self.weeks()
            .find(|w| w.week_id == week_id)
            .ok_or_else(|| CurriculumError::UnknownWeek(week_id.to_string()))
    }

    /// Module containing `week_id`, if any.
    pub fn module_of(&self, week_id: &str) -> Option<&ModuleSpec> {
        self.modules
            .iter()
            .find(|m| m.weeks.iter().any(|w| w.week_id == week_id))
    }

    /// Serializes back to the TOML curriculum format.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("curriculum values always serialize")
    }
}

/// Parses a curriculum document.
///
/// Type errors, missing fields, unknown Bloom levels and duplicate ids are
/// rejected here. Other invariants (dangling week references, empty keyword
/// lists, week counts) are reported by [`validate_curriculum`].
pub fn parse_curriculum(document: &[u8]) -> Result<Curriculum, CurriculumError> {
    let text = std::str::from_utf8(document).map_err(|e| CurriculumError::Syntax {
        offset: e.valid_up_to(),
        message: "document is not valid UTF-8".into(),
    })?;
    if text.trim().is_empty() {
        return Err(CurriculumError::Syntax {
            offset: 0,
            message: "empty document".into(),
        });
    }
    let table: Table = text.parse().map_err(|e: toml::de::Error| CurriculumError::Syntax {
        offset: e.span().map(|s| s.start).unwrap_or(0),
        message: e.message().to_string(),
    })?;

    let curriculum = read_curriculum(&table)?;
    check_unique_ids(&curriculum)?;
    Ok(curriculum)
}

/// Lists every invariant violation. An empty report means the curriculum is valid.
pub fn validate_curriculum(c: &Curriculum) -> ValidationReport {
    let mut report = ValidationReport::default();
    if c.course_id.trim().is_empty() {
        report.push("course_id", "must be nonempty");
    }
    if c.modules.is_empty() {
        report.push("modules", "at least one module is required");
    }

    let all_weeks: HashSet<&str> = c.weeks().map(|w| w.week_id.as_str()).collect();
    let mut module_ids = HashSet::new();
    let mut week_ids = HashSet::new();

    for (mi, module) in c.modules.iter().enumerate() {
        let mpath = format!("modules[{mi}]");
        if module.module_id.trim().is_empty() {
            report.push(format!("{mpath}.module_id"), "must be nonempty");
        }
        if !module_ids.insert(module.module_id.as_str()) {
            report.push(
                format!("{mpath}.module_id"),
                format!("duplicate module_id `{}`", module.module_id),
            );
        }
        if !WEEKS_PER_MODULE.contains(&module.weeks.len()) {
            report.push(
                format!("{mpath}.weeks"),
                format!(
                    "module `{}` has {} weeks; expected {} to {}",
                    module.module_id,
                    module.weeks.len(),
                    WEEKS_PER_MODULE.start(),
                    WEEKS_PER_MODULE.end()
                ),
            );
        }

        for (wi, week) in module.weeks.iter().enumerate() {
            let wpath = format!("{mpath}.weeks[{wi}]");
            if week.week_id.trim().is_empty() {
                report.push(format!("{wpath}.week_id"), "must be nonempty");
            }
            if !week_ids.insert(week.week_id.as_str()) {
                report.push(
                    format!("{wpath}.week_id"),
                    format!("duplicate week_id `{}`", week.week_id),
                );
            }
            for (field, target) in [
                ("prev_week_id", &week.prev_week_id),
                ("next_week_id", &week.next_week_id),
            ] {
                if let Some(target) = target {
                    if !all_weeks.contains(target.as_str()) {
                        report.push(
                            format!("{wpath}.{field}"),
                            format!("references unknown week `{target}`"),
                        );
                    }
                }
            }
            if week.subtopics.is_empty() {
                report.push(format!("{wpath}.subtopics"), "at least one subtopic is required");
            }

            let mut sub_ids = HashSet::new();
            for (si, sub) in week.subtopics.iter().enumerate() {
                let spath = format!("{wpath}.subtopics[{si}]");
                if sub.subtopic_id.trim().is_empty() {
                    report.push(format!("{spath}.subtopic_id"), "must be nonempty");
                }
                if !sub_ids.insert(sub.subtopic_id.as_str()) {
                    report.push(
                        format!("{spath}.subtopic_id"),
                        format!("duplicate subtopic_id `{}`", sub.subtopic_id),
                    );
                }
                if sub.keywords.is_empty() {
                    report.push(format!("{spath}.keywords"), "at least one keyword is required");
                }
                for (ki, kw) in sub.keywords.iter().enumerate() {
                    if kw.trim().is_empty() {
                        report.push(format!("{spath}.keywords[{ki}]"), "keyword is blank");
                    } else if kw.to_lowercase() != *kw {
                        report.push(
                            format!("{spath}.keywords[{ki}]"),
                            format!("keyword `{kw}` must be lowercase"),
                        );
                    }
                }
            }
        }
    }
    report
}

/// Subtopics of `week_id` in declaration order, tutorial-only entries included.
pub fn subtopics_for_week<'c>(
    c: &'c Curriculum,
    week_id: &str,
) -> Result<&'c [Subtopic], CurriculumError> {
    Ok(&c.week(week_id)?.subtopics)
}

fn check_unique_ids(c: &Curriculum) -> Result<(), CurriculumError> {
    let duplicate = validate_curriculum(c)
        .violations
        .into_iter()
        .find(|v| v.message.starts_with("duplicate"));
    match duplicate {
        Some(v) => Err(CurriculumError::Schema {
            path: v.path,
            message: v.message,
        }),
        None => Ok(()),
    }
}

// Table readers. Each error names the dotted path of the offending field.

fn schema(path: &str, message: impl Into<String>) -> CurriculumError {
    CurriculumError::Schema {
        path: path.to_string(),
        message: message.into(),
    }
}

fn check_keys(table: &Table, path: &str, allowed: &[&str]) -> Result<(), CurriculumError> {
    match table.keys().find(|k| !allowed.contains(&k.as_str())) {
        Some(key) => Err(schema(&join(path, key), format!("unknown field `{key}`"))),
        None => Ok(()),
    }
}

fn join(path: &str, key: &str) -> String {
    if path.is_empty() {
        key.to_string()
    } else {
        format!("{path}.{key}")
    }
}

fn req_str(table: &Table, path: &str, key: &str) -> Result<String, CurriculumError> {
    let p = join(path, key);
    match table.get(key) {
        None => Err(schema(&p, format!("missing field `{key}`"))),
        Some(Value::String(s)) => Ok(s.clone()),
        Some(other) => Err(schema(&p, format!("expected string, found {}", other.type_str()))),
    }
}

fn opt_str(table: &Table, path: &str, key: &str) -> Result<Option<String>, CurriculumError> {
    match table.get(key) {
        None => Ok(None),
        Some(Value::String(s)) => Ok(Some(s.clone())),
        Some(other) => Err(schema(
            &join(path, key),
            format!("expected string, found {}", other.type_str()),
        )),
    }
}

fn req_str_list(table: &Table, path: &str, key: &str) -> Result<Vec<String>, CurriculumError> {
    let p = join(path, key);
    let items = match table.get(key) {
        None => return Err(schema(&p, format!("missing field `{key}`"))),
        Some(Value::Array(items)) => items,
        Some(other) => {
            return Err(schema(&p, format!("expected array, found {}", other.type_str())))
        }
    };
    items
        .iter()
        .enumerate()
        .map(|(i, v)| match v {
            Value::String(s) => Ok(s.clone()),
            other => Err(schema(
                &format!("{p}[{i}]"),
                format!("expected string, found {}", other.type_str()),
            )),
        })
        .collect()
}

fn req_tables<'t>(
    table: &'t Table,
    path: &str,
    key: &str,
) -> Result<Vec<(String, &'t Table)>, CurriculumError> {
    let p = join(path, key);
    let items = match table.get(key) {
        None => return Err(schema(&p, format!("missing field `{key}`"))),
        Some(Value::Array(items)) => items,
        Some(other) => {
            return Err(schema(&p, format!("expected array of tables, found {}", other.type_str())))
        }
    };
    items
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let ip = format!("{p}[{i}]");
            match v {
                Value::Table(t) => Ok((ip, t)),
                other => Err(schema(&ip, format!("expected table, found {}", other.type_str()))),
            }
        })
        .collect()
}

fn read_curriculum(t: &Table) -> Result<Curriculum, CurriculumError> {
    check_keys(t, "", &["course_id", "title", "modules"])?;
    Ok(Curriculum {
        course_id: req_str(t, "", "course_id")?,
        title: req_str(t, "", "title")?,
        modules: req_tables(t, "", "modules")?
            .into_iter()
            .map(|(p, m)| read_module(m, &p))
            .collect::<Result<_, _>>()?,
    })
}

fn read_module(t: &Table, path: &str) -> Result<ModuleSpec, CurriculumError> {
    check_keys(t, path, &["module_id", "title", "weeks"])?;
    Ok(ModuleSpec {
        module_id: req_str(t, path, "module_id")?,
        title: req_str(t, path, "title")?,
        weeks: req_tables(t, path, "weeks")?
            .into_iter()
            .map(|(p, w)| read_week(w, &p))
            .collect::<Result<_, _>>()?,
    })
}

fn read_week(t: &Table, path: &str) -> Result<WeekSpec, CurriculumError> {
    check_keys(
        t,
        path,
        &[
            "week_id",
            "topic_title",
            "starter_prompts",
            "prev_week_id",
            "next_week_id",
            "subtopics",
        ],
    )?;
    Ok(WeekSpec {
        week_id: req_str(t, path, "week_id")?,
        topic_title: req_str(t, path, "topic_title")?,
        starter_prompts: req_str_list(t, path, "starter_prompts")?,
        prev_week_id: opt_str(t, path, "prev_week_id")?,
        next_week_id: opt_str(t, path, "next_week_id")?,
        subtopics: req_tables(t, path, "subtopics")?
            .into_iter()
            .map(|(p, s)| read_subtopic(s, &p))
            .collect::<Result<_, _>>()?,
    })
}

fn read_subtopic(t: &Table, path: &str) -> Result<Subtopic, CurriculumError> {
    check_keys(
        t,
        path,
        &[
            "subtopic_id",
            "title",
            "keywords",
            "learning_outcome",
            "bloom_level",
            "tutorial_only",
        ],
    )?;
    let bloom_raw = req_str(t, path, "bloom_level")?;
    let bloom_level = BloomLevel::parse(&bloom_raw).ok_or_else(|| {
        schema(
            &join(path, "bloom_level"),
            format!("unknown bloom_level `{bloom_raw}`"),
        )
    })?;
    let tutorial_only = match t.get("tutorial_only") {
        None => false,
        Some(Value::Boolean(b)) => *b,
        Some(other) => {
            return Err(schema(
                &join(path, "tutorial_only"),
                format!("expected boolean, found {}", other.type_str()),
            ))
        }
    };
    Ok(Subtopic {
        subtopic_id: req_str(t, path, "subtopic_id")?,
        title: req_str(t, path, "title")?,
        keywords: req_str_list(t, path, "keywords")?,
        learning_outcome: req_str(t, path, "learning_outcome")?,
        bloom_level,
        tutorial_only,
    })
}

/// Map of week id to its topic title, for continuity references.
pub fn week_titles(c: &Curriculum) -> HashMap<&str, &str> {
    c.weeks()
        .map(|w| (w.week_id.as_str(), w.topic_title.as_str()))
        .collect()
}
