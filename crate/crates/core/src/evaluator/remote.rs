//! Chat-completion backend.
//!
//! One request carries the rubric prompt as the system message and the
//! transcript plus subtopic list as the user message. The reply content must
//! be exactly one `assessment/v1` object; anything else triggers a corrective
//! re-prompt, up to `max_retries` times.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{check_week, AssessmentSet, Backend, EvaluateError};
use crate::curriculum::WeekSpec;
use crate::transcript::Transcript;

pub const DEFAULT_RUBRIC_PROMPT: &str = r#"You are an evaluation engine for classroom chat transcripts between a student and an AI instructor.
Analyze the transcript with fixed interpretation rules and answer with one JSON object only.

Attribution rules:
- Consider only turns whose role is "student".
- Attribute each student turn to at most one subtopic from the supplied list, using the subtopic id.
- A student turn that continues the previous discussion without naming a new concept belongs to the same subtopic as the previous attributed student turn.
- Student turns that fit no subtopic go in "unattributed_student_turns".
- Every student turn index must appear exactly once: either under one entry or in "unattributed_student_turns".

Depth scale (integer, per subtopic):
0 - Briefly mentioned
1 - Basic question asked
2 - Explored with follow-ups or comparisons
3 - Examined in depth through reasoning or clarification
A subtopic rated 1 or higher must have at least one attributed student turn.
Omit subtopics the student did not engage with at all.

Evidence: up to three short quotes per subtopic, copied verbatim from the transcript (no more than 30 words each). Use an empty list if unsure.

Output format (no markdown, no commentary, nothing before or after the object):
{"schema": "assessment/v1", "week_id": <string>, "submission_id": <string>, "backend": "remote",
 "entries": [{"subtopic_id": <string>, "depth": <0-3>, "attributed_student_turns": [<int>...], "evidence": [<string>...]}],
 "unattributed_student_turns": [<int>...]}"#;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RemoteBackendConfig {
    pub endpoint_url: String,
    pub model_name: String,
    pub auth_token_env_var: String,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
}

fn default_retries() -> u32 {
    2
}

fn default_timeout() -> u64 {
    60
}

impl RemoteBackendConfig {
    pub fn validate(&self) -> Result<(), EvaluateError> {
        if self.timeout_secs == 0 {
            return Err(EvaluateError::Config("timeout_secs must be positive".into()));
        }
        if self.endpoint_url.trim().is_empty() {
            return Err(EvaluateError::Config("endpoint_url is empty".into()));
        }
        Ok(())
    }

    fn token(&self) -> Result<String, EvaluateError> {
        std::env::var(&self.auth_token_env_var)
            .ok()
            .filter(|t| !t.trim().is_empty())
            .ok_or_else(|| {
                EvaluateError::Authentication(format!(
                    "environment variable `{}` is not set",
                    self.auth_token_env_var
                ))
            })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl ChatMessage {
    fn new(role: &str, content: impl Into<String>) -> Self {
        ChatMessage {
            role: role.to_string(),
            content: content.into(),
        }
    }
}

/// Sends a conversation and returns the raw content of the reply.
pub trait ChatTransport {
    fn complete(&self, messages: &[ChatMessage]) -> Result<String, EvaluateError>;
}

/// HTTP transport speaking the chat-completions wire format.
pub struct HttpTransport {
    agent: ureq::Agent,
    url: String,
    model: String,
    token: String,
}

impl HttpTransport {
    pub fn new(cfg: &RemoteBackendConfig) -> Result<Self, EvaluateError> {
        cfg.validate()?;
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(cfg.timeout_secs)))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(HttpTransport {
            agent,
            url: cfg.endpoint_url.clone(),
            model: cfg.model_name.clone(),
            token: cfg.token()?,
        })
    }
}

impl ChatTransport for HttpTransport {
    fn complete(&self, messages: &[ChatMessage]) -> Result<String, EvaluateError> {
        let body = json!({
            "model": self.model,
            "temperature": 0,
            "response_format": {"type": "json_object"},
            "messages": messages,
        });
        let mut response = self
            .agent
            .post(&self.url)
            .header("Authorization", &format!("Bearer {}", self.token))
            .send_json(&body)
            .map_err(|e| match e {
                ureq::Error::Timeout(_) => EvaluateError::Timeout,
                other => EvaluateError::Network(other.to_string()),
            })?;
        let status = response.status().as_u16();
        let text = response
            .body_mut()
            .read_to_string()
            .map_err(|e| EvaluateError::Network(e.to_string()))?;
        match status {
            200..=299 => Ok(text),
            401 | 403 => Err(EvaluateError::Authentication(format!("endpoint returned {status}"))),
            _ => Err(EvaluateError::Network(format!("endpoint returned {status}: {text}"))),
        }
    }
}

#[derive(Deserialize)]
struct Completion {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ChatMessage,
}

/// Extracts the assistant message content from a chat-completions body.
fn completion_content(body: &str) -> Result<String, Vec<String>> {
    let completion: Completion = serde_json::from_str(body)
        .map_err(|e| vec![format!("response is not a chat completion: {e}")])?;
    match completion.choices.as_slice() {
        [only] => Ok(only.message.content.clone()),
        other => Err(vec![format!("expected exactly one choice, found {}", other.len())]),
    }
}

/// Builds the user message: transcript turns plus the week's subtopics.
pub fn user_message(t: &Transcript, week: &WeekSpec) -> String {
    let subtopics: Vec<_> = week
        .subtopics
        .iter()
        .map(|s| {
            json!({
                "subtopic_id": s.subtopic_id,
                "title": s.title,
                "keywords": s.keywords,
                "learning_outcome": s.learning_outcome,
            })
        })
        .collect();
    let turns: Vec<_> = t
        .turns
        .iter()
        .map(|turn| json!({"index": turn.index, "role": turn.role, "text": turn.text}))
        .collect();
    serde_json::to_string_pretty(&json!({
        "week_id": t.week_id,
        "submission_id": t.submission_id,
        "subtopics": subtopics,
        "turns": turns,
    }))
    .expect("json values serialize")
}

fn corrective_prompt(violations: &[String]) -> String {
    let mut msg = String::from(
        "Your previous reply was rejected by the output schema validator:\n",
    );
    for v in violations {
        msg.push_str("- ");
        msg.push_str(v);
        msg.push('\n');
    }
    msg.push_str(
        "Reply again with exactly one corrected JSON object following the assessment/v1 format and nothing else.",
    );
    msg
}

/// Parses a reply body and checks every assessment invariant.
pub fn validate_reply(body: &str, t: &Transcript, week: &WeekSpec) -> Result<AssessmentSet, Vec<String>> {
    let content = completion_content(body)?;
    let set = AssessmentSet::from_json(&content)?;
    let mut violations = set.check_against(t, &week.subtopics);
    if set.backend != Backend::Remote {
        violations.push("backend must be `remote`".into());
    }
    if violations.is_empty() {
        Ok(set)
    } else {
        Err(violations)
    }
}

/// Evaluates through an HTTP endpoint. The auth token is read from the
/// environment variable named in `cfg`.
pub fn evaluate_remote(
    t: &Transcript,
    week: &WeekSpec,
    cfg: &RemoteBackendConfig,
    rubric_prompt: &str,
) -> Result<AssessmentSet, EvaluateError> {
    check_week(t, week)?;
    let transport = HttpTransport::new(cfg)?;
    evaluate_with(&transport, t, week, cfg.max_retries, rubric_prompt)
}

/// Evaluation loop over any transport.
pub fn evaluate_with(
    transport: &dyn ChatTransport,
    t: &Transcript,
    week: &WeekSpec,
    max_retries: u32,
    rubric_prompt: &str,
) -> Result<AssessmentSet, EvaluateError> {
    check_week(t, week)?;
    let mut messages = vec![
        ChatMessage::new("system", rubric_prompt),
        ChatMessage::new("user", user_message(t, week)),
    ];
    let mut attempts = 0;
    loop {
        attempts += 1;
        let raw = transport.complete(&messages)?;
        match validate_reply(&raw, t, week) {
            Ok(set) => return Ok(set),
            Err(violations) => {
                tracing::warn!(attempt = attempts, ?violations, "remote assessment rejected");
                if attempts > max_retries {
                    return Err(EvaluateError::SchemaInvalidAfterRetries {
                        attempts,
                        violations,
                        last_raw: raw,
                    });
                }
                let content = completion_content(&raw).unwrap_or_else(|_| raw.clone());
                messages.push(ChatMessage::new("assistant", content));
                messages.push(ChatMessage::new("user", corrective_prompt(&violations)));
            }
        }
    }
}
