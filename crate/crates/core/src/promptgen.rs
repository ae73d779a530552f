//! Weekly instructor-agent configuration.
//!
//! A config has three layers: a course-wide persona with guardrails, a
//! course-wide pedagogy block, and a week-specific knowledge base. The file
//! form (`agent-config/v1`) is:
//!
//! ```text
//! # agent-config/v1 week_id=w1
//! [PERSONA]
//! ...
//!
//! [PEDAGOGY]
//! ...
//!
//! [KNOWLEDGE-BASE]
//! ...
//!
//! [STARTER-PROMPTS]
//! - List topics for this week and my progress
//! ```

use std::fmt::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::curriculum::{week_titles, Curriculum, CurriculumError};

pub const GUARDRAIL_SCOPE: &str = "not deviate from the goals of instructional support";
pub const GUARDRAIL_ACCURACY: &str = "prioritizing truth and facts over agreement with the student";

/// Offered every week in addition to the week's own starter prompts.
pub const GENERIC_STARTER_PROMPTS: [&str; 2] = [
    "List topics for this week and my progress",
    "Give a quiz on the topics we have discussed",
];

pub const DEFAULT_PERSONA_TEMPLATE: &str = "\
You are the AI Instructor for the course \"{course_title}\". You help students reach the \
learning outcomes of each week's topics through conversation: explain concepts clearly, check \
understanding with short questions, and keep answers focused and well structured.

Guardrails:
- Do not deviate from the goals of instructional support, and do not get drawn into tangential \
topics outside this course.
- Be critical and accurate, prioritizing truth and facts over agreement with the student. When \
the student is mistaken, say so and explain the correction.
- When you are unsure of a fact, say so instead of guessing.";

pub const DEFAULT_PEDAGOGY_TEMPLATE: &str = "\
Pedagogical approach (Knowledge-Learning-Instruction framework):
- Teach through inquiry and scaffolding: ask guiding questions before giving complete answers \
and build on what the student already knows.
- Match each teaching action to the knowledge it targets: declarative knowledge (facts, terms) \
through recall and memory, procedural knowledge (how to carry out a task) through worked steps \
and induction from examples, and conceptual knowledge (why things work) through explanation and \
sense-making.
- Give practical examples and use-cases from real systems for every concept.
- After each concept, encourage students to reflect on their understanding: ask them to \
summarize it, compare alternatives, or predict what would happen in a new situation.
- When asked for a quiz, keep it short, then use the answers to suggest what to revisit.";

const HEADER_PREFIX: &str = "# agent-config/v1 week_id=";
const SECTIONS: [&str; 4] = ["[PERSONA]", "[PEDAGOGY]", "[KNOWLEDGE-BASE]", "[STARTER-PROMPTS]"];

#[derive(Debug, Error, PartialEq)]
pub enum PromptError {
    #[error("template is empty")]
    EmptyTemplate,
    #[error("template is missing placeholder `{0}`")]
    MissingPlaceholder(&'static str),
    #[error("persona is missing the guardrail clause \"{0}\"")]
    MissingGuardrail(&'static str),
    #[error("layer text contains the reserved section line `{0}`")]
    ReservedLine(String),
    #[error("starter prompt must be a single nonblank line: {0:?}")]
    BadStarterPrompt(String),
    #[error("malformed agent-config file: {0}")]
    Format(String),
    #[error(transparent)]
    Curriculum(#[from] CurriculumError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentConfig {
    pub week_id: String,
    pub persona_layer: String,
    pub pedagogy_layer: String,
    pub knowledge_layer: String,
    pub starter_prompts: Vec<String>,
    /// The three layers joined under labeled delimiters.
    pub assembled: String,
}

pub fn build_persona_layer(course: &Curriculum, template: &str) -> Result<String, PromptError> {
    if template.trim().is_empty() {
        return Err(PromptError::EmptyTemplate);
    }
    if !template.contains("{course_title}") {
        return Err(PromptError::MissingPlaceholder("{course_title}"));
    }
    let text = template
        .replace("{course_title}", &course.title)
        .replace("{course_id}", &course.course_id);
    for clause in [GUARDRAIL_SCOPE, GUARDRAIL_ACCURACY] {
        if !text.contains(clause) {
            return Err(PromptError::MissingGuardrail(clause));
        }
    }
    Ok(text)
}

/// Returns the template unchanged; only blank templates are rejected.
pub fn build_pedagogy_layer(template: &str) -> Result<String, PromptError> {
    if template.trim().is_empty() {
        return Err(PromptError::EmptyTemplate);
    }
    Ok(template.to_string())
}

pub fn build_knowledge_layer(c: &Curriculum, week_id: &str) -> Result<String, PromptError> {
    let week = c.week(week_id)?;
    let titles = week_titles(c);
    let mut out = String::new();
    let _ = writeln!(out, "Course: {} ({})", c.title, c.course_id);
    if let Some(module) = c.module_of(week_id) {
        let _ = writeln!(out, "Module: {} ({})", module.title, module.module_id);
    }
    let _ = writeln!(out, "Week {}: {}", week.week_id, week.topic_title);
    out.push_str("\nSubtopics for this week, with learning outcomes by Bloom level:\n");
    for (i, s) in week.subtopics.iter().enumerate() {
        let _ = write!(
            out,
            "{}. {} [{}] (Bloom: {}){}\n   Outcome: {}\n   Keywords: {}\n",
            i + 1,
            s.title,
            s.subtopic_id,
            s.bloom_level,
            if s.tutorial_only { " [tutorial]" } else { "" },
            s.learning_outcome,
            s.keywords.join(", "),
        );
    }
    if week.subtopics.iter().any(|s| s.tutorial_only) {
        out.push_str(
            "Subtopics marked [tutorial] are covered hands-on in this week's tutorial session; \
             discuss them briefly and refer students to the tutorial.\n",
        );
    }
    out.push_str("\nCurricular continuity:\n");
    let neighbour = |label: &str, id: &Option<String>| match id {
        Some(id) => format!(
            "- {label} topic: {} ({id})\n",
            titles.get(id.as_str()).copied().unwrap_or("unknown")
        ),
        None => format!("- {label} topic: none\n"),
    };
    out.push_str(&neighbour("Preceding", &week.prev_week_id));
    out.push_str(&neighbour("Following", &week.next_week_id));
    out.push_str(
        "Keep the conversation within this week's subtopics; point students to the preceding or \
         following topic for material outside them.",
    );
    Ok(out)
}

pub fn assemble_agent_config(
    c: &Curriculum,
    week_id: &str,
    persona_template: &str,
    pedagogy_template: &str,
) -> Result<AgentConfig, PromptError> {
    let week = c.week(week_id)?;
    let mut starter_prompts: Vec<String> = week.starter_prompts.clone();
    for generic in GENERIC_STARTER_PROMPTS {
        if !starter_prompts.iter().any(|p| p == generic) {
            starter_prompts.push(generic.to_string());
        }
    }
    AgentConfig::new(
        week_id,
        build_persona_layer(c, persona_template)?,
        build_pedagogy_layer(pedagogy_template)?,
        build_knowledge_layer(c, week_id)?,
        starter_prompts,
    )
}

impl AgentConfig {
    /// Normalizes trailing whitespace on each layer and checks the file
    /// format can represent the layers unambiguously.
    pub fn new(
        week_id: &str,
        persona: String,
        pedagogy: String,
        knowledge: String,
        starter_prompts: Vec<String>,
    ) -> Result<Self, PromptError> {
        let layers = [persona, pedagogy, knowledge].map(|l| l.trim_end().to_string());
        for layer in &layers {
            if layer.is_empty() {
                return Err(PromptError::EmptyTemplate);
            }
            if let Some(line) = layer.lines().find(|l| SECTIONS.contains(&l.trim())) {
                return Err(PromptError::ReservedLine(line.to_string()));
            }
        }
        if starter_prompts.is_empty() {
            return Err(PromptError::BadStarterPrompt(String::new()));
        }
        if let Some(p) = starter_prompts
            .iter()
            .find(|p| p.trim().is_empty() || p.contains('\n') || p.trim() != p.as_str())
        {
            return Err(PromptError::BadStarterPrompt(p.clone()));
        }
        let [persona_layer, pedagogy_layer, knowledge_layer] = layers;
        let assembled = format!(
            "{}\n{persona_layer}\n\n{}\n{pedagogy_layer}\n\n{}\n{knowledge_layer}\n",
            SECTIONS[0], SECTIONS[1], SECTIONS[2]
        );
        Ok(AgentConfig {
            week_id: week_id.to_string(),
            persona_layer,
            pedagogy_layer,
            knowledge_layer,
            starter_prompts,
            assembled,
        })
    }

    pub fn to_file(&self) -> String {
        let mut out = format!("{HEADER_PREFIX}{}\n{}\n{}\n", self.week_id, self.assembled, SECTIONS[3]);
        for p in &self.starter_prompts {
            let _ = writeln!(out, "- {p}");
        }
        out
    }

    pub fn from_file(text: &str) -> Result<Self, PromptError> {
        let mut lines = text.lines();
        let week_id = lines
            .next()
            .and_then(|l| l.strip_prefix(HEADER_PREFIX))
            .ok_or_else(|| PromptError::Format("missing `# agent-config/v1` header".into()))?
            .trim()
            .to_string();

        let mut sections: Vec<(&str, Vec<&str>)> = Vec::new();
        for line in lines {
            if SECTIONS.contains(&line) {
                sections.push((line, Vec::new()));
            } else if let Some((_, body)) = sections.last_mut() {
                body.push(line);
            } else if !line.trim().is_empty() {
                return Err(PromptError::Format(format!("text before first section: {line:?}")));
            }
        }
        let names: Vec<&str> = sections.iter().map(|(n, _)| *n).collect();
        if names != SECTIONS {
            return Err(PromptError::Format(format!(
                "expected sections {SECTIONS:?}, found {names:?}"
            )));
        }
        let text_of = |i: usize| sections[i].1.join("\n").trim_end().to_string();
        let starter_prompts = sections[3]
            .1
            .iter()
            .filter(|l| !l.trim().is_empty())
            .map(|l| {
                l.strip_prefix("- ")
                    .map(str::to_string)
                    .ok_or_else(|| PromptError::Format(format!("starter prompt line {l:?}")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        AgentConfig::new(&week_id, text_of(0), text_of(1), text_of(2), starter_prompts)
    }

    /// Starter prompts as a JSON sidecar.
    pub fn starters_json(&self) -> String {
        serde_json::to_string_pretty(&serde_json::json!({
            "week_id": self.week_id,
            "starter_prompts": self.starter_prompts,
        }))
        .expect("json values serialize")
    }
}
