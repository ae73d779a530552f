//! Deterministic lexical evaluator.
//!
//! Student turns are attributed to the subtopic whose keywords they hit most
//! often (ties go to the smallest subtopic id). A turn with no hits inherits
//! the attribution of the nearest preceding attributed student turn. Each
//! subtopic's turns are then rated with [`DepthRubric`].

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::lexical::{tokenize, PhraseSet};
use super::{check_week, AssessmentSet, Backend, Depth, EvaluateError, SubtopicAssessment};
use crate::curriculum::{Subtopic, WeekSpec};
use crate::transcript::{Role, Transcript, Turn};

/// Thresholds and marker lists for the depth rubric.
///
/// * 0: no substantive turn, and fewer than `mention_max_words` words in total.
/// * 1: one substantive turn (direct keyword hit or a question mark).
/// * 2: two or more substantive turns, or any turn with a comparison marker.
/// * 3: level-2 conditions plus a reasoning marker, or a substantive turn of
///   at least `long_turn_words` words.
///
/// Attributed turns that are neither substantive nor long enough to escape
/// level 0 and carry no comparison rate 1.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DepthRubric {
    pub mention_max_words: usize,
    pub long_turn_words: usize,
    pub comparison_markers: Vec<String>,
    pub reasoning_markers: Vec<String>,
}

impl Default for DepthRubric {
    fn default() -> Self {
        DepthRubric {
            mention_max_words: 8,
            long_turn_words: 25,
            comparison_markers: ["compare", "vs", "versus", "difference", "trade-off"]
                .map(String::from)
                .to_vec(),
            reasoning_markers: ["why", "because", "what if", "explain", "reason", "justify"]
                .map(String::from)
                .to_vec(),
        }
    }
}

fn keyword_hits(tokens: &[String], subtopic: &Subtopic) -> usize {
    PhraseSet::new(&subtopic.keywords).hits(tokens)
}

/// Subtopic with the most keyword hits in a student turn, or `None` when
/// nothing matches (and for agent turns).
pub fn attribute_turn<'s>(turn: &Turn, subtopics: &'s [Subtopic]) -> Option<&'s str> {
    if turn.role != Role::Student {
        return None;
    }
    let tokens = tokenize(&turn.text);
    subtopics
        .iter()
        .map(|s| (keyword_hits(&tokens, s), s.subtopic_id.as_str()))
        .filter(|(hits, _)| *hits > 0)
        // highest count first, then smallest id
        .min_by(|a, b| b.0.cmp(&a.0).then_with(|| a.1.cmp(b.1)))
        .map(|(_, id)| id)
}

/// [`attribute_turn`] with the continuation rule applied: a zero-hit turn
/// takes `previous`, the attribution of the last attributed student turn.
pub fn attribute_in_context(
    turn: &Turn,
    subtopics: &[Subtopic],
    previous: Option<&str>,
) -> Option<String> {
    if turn.role != Role::Student {
        return None;
    }
    attribute_turn(turn, subtopics)
        .or(previous)
        .map(str::to_string)
}

/// Rates one subtopic's attributed student turns with the default rubric.
pub fn rate_depth(attributed_turns: &[&Turn], subtopic: &Subtopic) -> Depth {
    DepthRubric::default().rate(attributed_turns, subtopic)
}

/// Runs the lexical evaluator with the default rubric.
pub fn evaluate_heuristic(t: &Transcript, week: &WeekSpec) -> Result<AssessmentSet, EvaluateError> {
    DepthRubric::default().evaluate(t, week)
}

impl DepthRubric {
    pub fn rate(&self, attributed_turns: &[&Turn], subtopic: &Subtopic) -> Depth {
        let keywords = PhraseSet::new(&subtopic.keywords);
        let comparisons = PhraseSet::new(&self.comparison_markers);
        let reasoning = PhraseSet::new(&self.reasoning_markers);

        let mut substantive = 0usize;
        let mut total_words = 0usize;
        let mut has_comparison = false;
        let mut has_reasoning = false;
        let mut long_substantive = false;

        for turn in attributed_turns {
            let tokens = tokenize(&turn.text);
            let is_substantive = keywords.any(&tokens) || turn.text.contains('?');
            total_words += turn.word_count;
            has_comparison |= comparisons.any(&tokens);
            has_reasoning |= reasoning.any(&tokens);
            if is_substantive {
                substantive += 1;
                long_substantive |= turn.word_count >= self.long_turn_words;
            }
        }

        let followed_up = substantive >= 2 || has_comparison;
        if followed_up && (has_reasoning || long_substantive) {
            Depth::IN_DEPTH
        } else if followed_up {
            Depth::FOLLOW_UP
        } else if substantive == 0 && total_words < self.mention_max_words {
            Depth::MENTIONED
        } else {
            Depth::BASIC
        }
    }

    pub fn evaluate(&self, t: &Transcript, week: &WeekSpec) -> Result<AssessmentSet, EvaluateError> {
        check_week(t, week)?;
        let subtopics = &week.subtopics;
        let mut groups: BTreeMap<String, Vec<&Turn>> = BTreeMap::new();
        let mut unattributed = Vec::new();
        let mut previous: Option<String> = None;

        for turn in t.turns.iter().filter(|turn| turn.role == Role::Student) {
            match attribute_in_context(turn, subtopics, previous.as_deref()) {
                Some(id) => {
                    groups.entry(id.clone()).or_default().push(turn);
                    previous = Some(id);
                }
                None => unattributed.push(turn.index),
            }
        }

        let entries = groups
            .into_iter()
            .map(|(id, turns)| {
                let subtopic = subtopics
                    .iter()
                    .find(|s| s.subtopic_id == id)
                    .expect("attributed ids come from the week's subtopics");
                let entry = SubtopicAssessment {
                    subtopic_id: id.clone(),
                    depth: self.rate(&turns, subtopic),
                    attributed_student_turns: turns.iter().map(|t| t.index).collect(),
                    evidence: Vec::new(),
                };
                (id, entry)
            })
            .collect();

        Ok(AssessmentSet {
            week_id: t.week_id.clone(),
            submission_id: t.submission_id.clone(),
            entries,
            unattributed_student_turns: unattributed,
            backend: Backend::Heuristic,
        })
    }
}
