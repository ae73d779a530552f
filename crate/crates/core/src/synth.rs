//! Synthetic transcripts with planted engagement parameters.
//!
//! Every generated student turn carries exactly one keyword phrase of its
//! target subtopic, filler words that match no keyword or rubric marker, and
//! (for depth 2 and 3 plants) the marker phrases needed to reach the planted
//! depth. The planted report is computed from the plan itself, so it serves
//! as an oracle for the evaluator and metrics.

use std::collections::{BTreeMap, HashSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::curriculum::{Subtopic, WeekSpec};
use crate::evaluator::lexical::{phrase_occurrences, tokenize, PhraseSet};
use crate::evaluator::{DepthRubric, Depth, EvaluateError};
use crate::metrics::{build_report, EngagementReport, MetricError, SubtopicMetrics};
use crate::transcript::{Role, Transcript, Turn};

const FILLER: &[&str] = &[
    "please", "tell", "me", "more", "about", "this", "part", "in", "simple", "terms", "with",
    "an", "example", "from", "practice", "i", "am", "curious", "how", "it", "works", "for",
    "real", "teams", "and", "what", "happens", "next", "when", "load", "grows", "today",
];

const AGENT_REPLY: &str = "Here is an explanation with an example.";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WordsSpec {
    pub mean: f64,
    pub spread: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    pub seed: u64,
    pub week_id: String,
    pub target_coverage: f64,
    /// Engaged subtopic counts planted at depth 1, 2 and 3.
    pub depth_histogram: [usize; 3],
    pub words_per_message: WordsSpec,
    /// Student messages per engaged subtopic at depth 1, 2 and 3. Depth 1
    /// must be exactly one message.
    #[serde(default = "default_messages")]
    pub messages_per_engaged_subtopic: [usize; 3],
    #[serde(default)]
    pub submitted_at: i64,
}

fn default_messages() -> [usize; 3] {
    [1, 2, 2]
}

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("infeasible spec: {0}")]
    Infeasible(String),
    #[error("{0}")]
    Evaluate(String),
    #[error(transparent)]
    Metric(#[from] MetricError),
}

impl From<EvaluateError> for SynthError {
    fn from(e: EvaluateError) -> Self {
        SynthError::Evaluate(e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthOutput {
    pub transcript: Transcript,
    pub planted: EngagementReport,
}

fn infeasible(msg: impl Into<String>) -> SynthError {
    SynthError::Infeasible(msg.into())
}

impl SynthSpec {
    pub fn engaged(&self) -> usize {
        self.depth_histogram.iter().sum()
    }

    pub fn check(&self, total_subtopics: usize) -> Result<(), SynthError> {
        let engaged = self.engaged();
        if engaged > total_subtopics {
            return Err(infeasible(format!(
                "depth histogram plants {engaged} subtopics but the week has {total_subtopics}"
            )));
        }
        if !(0.0..=1.0).contains(&self.target_coverage) {
            return Err(infeasible("target_coverage must lie in [0, 1]"));
        }
        let implied = (self.target_coverage * total_subtopics as f64).round() as usize;
        if implied != engaged {
            return Err(infeasible(format!(
                "coverage {} of {total_subtopics} subtopics implies {implied} engaged, histogram has {engaged}",
                self.target_coverage
            )));
        }
        let [m1, m2, m3] = self.messages_per_engaged_subtopic;
        if m1 != 1 {
            return Err(infeasible("depth-1 plants use exactly one message"));
        }
        if m2 == 0 || m3 == 0 {
            return Err(infeasible("depth-2 and depth-3 plants need at least one message"));
        }
        let w = self.words_per_message;
        if !(w.mean.is_finite() && w.spread.is_finite()) || w.mean < 1.0 || w.spread < 0.0 {
            return Err(infeasible("words_per_message needs mean >= 1 and spread >= 0"));
        }
        Ok(())
    }
}

/// Marker phrases and filler vocabulary that cannot collide with the week's keywords.
struct Vocabulary {
    filler: Vec<String>,
    comparison: String,
    reasoning: String,
}

fn vocabulary(subtopics: &[Subtopic], rubric: &DepthRubric) -> Result<Vocabulary, SynthError> {
    let keyword_tokens: HashSet<String> = subtopics
        .iter()
        .flat_map(|s| s.keywords.iter().flat_map(|k| tokenize(k)))
        .collect();
    let free = |phrase: &String| tokenize(phrase).iter().all(|t| !keyword_tokens.contains(t));
    let comparison = rubric
        .comparison_markers
        .iter()
        .find(|m| free(m) && m.split_whitespace().count() == tokenize(m).len())
        .cloned()
        .ok_or_else(|| infeasible("every comparison marker collides with a keyword"))?;
    let reasoning = rubric
        .reasoning_markers
        .iter()
        .find(|m| free(m) && m.split_whitespace().count() == tokenize(m).len())
        .cloned()
        .ok_or_else(|| infeasible("every reasoning marker collides with a keyword"))?;

    let markers = PhraseSet::new(&rubric.comparison_markers);
    let reasons = PhraseSet::new(&rubric.reasoning_markers);
    let reserved: HashSet<&str> = markers
        .vocabulary()
        .chain(reasons.vocabulary())
        .chain(keyword_tokens.iter().map(String::as_str))
        .collect();
    let filler: Vec<String> = FILLER
        .iter()
        .filter(|w| !reserved.contains(**w))
        .map(|w| w.to_string())
        .collect();
    if filler.len() < 4 {
        return Err(infeasible("keywords leave too few filler words"));
    }
    Ok(Vocabulary {
        filler,
        comparison,
        reasoning,
    })
}

/// First keyword of `target` that attributes unambiguously and contains no
/// rubric marker.
fn pick_keyword<'s>(
    target: &'s Subtopic,
    subtopics: &[Subtopic],
    rubric: &DepthRubric,
) -> Result<&'s str, SynthError> {
    let markers: Vec<Vec<String>> = rubric
        .comparison_markers
        .iter()
        .chain(&rubric.reasoning_markers)
        .map(|m| tokenize(m))
        .collect();
    target
        .keywords
        .iter()
        .find(|kw| {
            let toks = tokenize(kw);
            if toks.is_empty() || markers.iter().any(|m| phrase_occurrences(&toks, m) > 0) {
                return false;
            }
            let hits = |s: &Subtopic| PhraseSet::new(&s.keywords).hits(&toks);
            let own = hits(target);
            own > 0
                && subtopics
                    .iter()
                    .filter(|s| s.subtopic_id != target.subtopic_id)
                    .all(|s| hits(s) < own)
        })
        .map(String::as_str)
        .ok_or_else(|| {
            infeasible(format!(
                "subtopic `{}` has no keyword that attributes unambiguously",
                target.subtopic_id
            ))
        })
}

fn filler_words(rng: &mut ChaCha8Rng, vocab: &Vocabulary, n: usize) -> Vec<String> {
    (0..n)
        .map(|_| vocab.filler[rng.random_range(0..vocab.filler.len())].clone())
        .collect()
}

/// Builds `keyword filler.. [marker filler..]*` with exactly `words` words.
fn student_text(
    rng: &mut ChaCha8Rng,
    vocab: &Vocabulary,
    keyword: &str,
    markers: &[&str],
    words: usize,
) -> String {
    let fixed = keyword.split_whitespace().count()
        + markers.iter().map(|m| m.split_whitespace().count() + 1).sum::<usize>();
    let mut parts = vec![keyword.to_string()];
    // one separator filler in front of each marker keeps phrases from touching
    for m in markers {
        parts.extend(filler_words(rng, vocab, 1));
        parts.push(m.to_string());
    }
    parts.extend(filler_words(rng, vocab, words.saturating_sub(fixed)));
    parts.join(" ")
}

fn sample_words(rng: &mut ChaCha8Rng, spec: &WordsSpec, min: usize, max: usize) -> usize {
    let jitter = if spec.spread > 0.0 {
        rng.random_range(-spec.spread..=spec.spread)
    } else {
        0.0
    };
    ((spec.mean + jitter).round().max(0.0) as usize).clamp(min, max)
}

pub fn generate_transcript(spec: &SynthSpec, week: &WeekSpec) -> Result<SynthOutput, SynthError> {
    generate_with(spec, week, &DepthRubric::default())
}

pub fn generate_with(
    spec: &SynthSpec,
    week: &WeekSpec,
    rubric: &DepthRubric,
) -> Result<SynthOutput, SynthError> {
    if spec.week_id != week.week_id {
        return Err(infeasible(format!(
            "spec is for week `{}` but subtopics belong to `{}`",
            spec.week_id, week.week_id
        )));
    }
    let subtopics = &week.subtopics;
    spec.check(subtopics.len())?;
    let vocab = vocabulary(subtopics, rubric)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let mut order: Vec<usize> = (0..subtopics.len()).collect();
    order.shuffle(&mut rng);
    let mut depths: Vec<u8> = [1u8, 2, 3]
        .iter()
        .zip(spec.depth_histogram)
        .flat_map(|(&d, n)| std::iter::repeat_n(d, n))
        .collect();
    depths.shuffle(&mut rng);

    let mut turns: Vec<Turn> = Vec::new();
    let push = |turns: &mut Vec<Turn>, role: Role, text: String| {
        let i = turns.len();
        turns.push(Turn::new(i, role, text));
    };

    if rng.random_bool(0.5) {
        let n = rng.random_range(2..=4);
        push(&mut turns, Role::Student, filler_words(&mut rng, &vocab, n).join(" "));
        push(&mut turns, Role::Agent, AGENT_REPLY.to_string());
    }

    let mut planted = BTreeMap::new();
    let mut per_topic_means = Vec::new();
    let mut pooled: Vec<usize> = Vec::new();

    for (&sub_idx, &depth) in order.iter().zip(&depths) {
        let subtopic = &subtopics[sub_idx];
        let keyword = pick_keyword(subtopic, subtopics, rubric)?;
        let messages = spec.messages_per_engaged_subtopic[depth as usize - 1];
        let mut counts = Vec::with_capacity(messages);

        for m in 0..messages {
            let last = m + 1 == messages;
            let mut markers: Vec<&str> = Vec::new();
            if depth >= 2 && messages == 1 {
                markers.push(&vocab.comparison);
            }
            if depth == 3 && last {
                markers.push(&vocab.reasoning);
            }
            let min = keyword.split_whitespace().count()
                + markers.iter().map(|m| m.split_whitespace().count() + 1).sum::<usize>();
            // a depth-2 plant must not trip the long-turn rule
            let max = if depth == 2 {
                rubric.long_turn_words.saturating_sub(1)
            } else {
                usize::MAX
            };
            if min > max {
                return Err(infeasible(format!(
                    "keyword `{keyword}` is too long for a depth-2 plant"
                )));
            }
            let words = sample_words(&mut rng, &spec.words_per_message, min, max);
            let text = student_text(&mut rng, &vocab, keyword, &markers, words);
            debug_assert_eq!(text.split_whitespace().count(), words);
            counts.push(words);
            push(&mut turns, Role::Student, text);
            push(&mut turns, Role::Agent, AGENT_REPLY.to_string());
        }

        let mean = counts.iter().sum::<usize>() as f64 / counts.len() as f64;
        per_topic_means.push(mean);
        pooled.extend(&counts);
        planted.insert(
            subtopic.subtopic_id.clone(),
            SubtopicMetrics {
                depth: Depth::new(depth).expect("planted depth in 1..=3"),
                mean_student_words: Some(mean),
                message_count: counts.len(),
            },
        );
    }

    if turns.is_empty() {
        let n = rng.random_range(2..=4);
        push(&mut turns, Role::Student, filler_words(&mut rng, &vocab, n).join(" "));
    }

    let engaged = depths.len();
    let mean_of = |v: &[f64]| (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);
    let depth_values: Vec<f64> = depths.iter().map(|&d| d as f64).collect();
    let pooled_f: Vec<f64> = pooled.iter().map(|&w| w as f64).collect();

    let transcript = Transcript {
        submission_id: format!("synth-{}", spec.seed),
        student_pseudonym: format!("synth-{}", spec.seed),
        week_id: week.week_id.clone(),
        submitted_at: spec.submitted_at,
        turns,
    };
    let planted = EngagementReport {
        submission_id: transcript.submission_id.clone(),
        student_pseudonym: transcript.student_pseudonym.clone(),
        week_id: week.week_id.clone(),
        submitted_at: spec.submitted_at,
        total_subtopics: subtopics.len(),
        engaged_subtopics: engaged,
        topic_coverage: engaged as f64 / subtopics.len() as f64,
        avg_topic_depth: mean_of(&depth_values),
        avg_turn_length_per_topic: mean_of(&per_topic_means),
        pooled_turn_length: mean_of(&pooled_f),
        per_subtopic: planted,
    };
    Ok(SynthOutput { transcript, planted })
}

/// Planted vs recovered metrics for one spec.
#[derive(Debug, Clone, PartialEq)]
pub struct RecoveryResult {
    pub planted: EngagementReport,
    pub recovered: EngagementReport,
    pub coverage_delta: f64,
    pub depth_delta: Option<f64>,
    pub turn_length_delta: Option<f64>,
    /// (subtopic, planted depth, recovered depth) for every disagreement.
    pub depth_mismatches: Vec<(String, Option<Depth>, Option<Depth>)>,
}

impl RecoveryResult {
    /// Coverage and per-subtopic depths exact; turn length within one word.
    pub fn within_contract(&self) -> bool {
        let turn_ok = match (self.planted.avg_turn_length_per_topic, self.turn_length_delta) {
            (None, None) => self.recovered.avg_turn_length_per_topic.is_none(),
            (Some(_), Some(d)) => d.abs() <= 1.0,
            _ => false,
        };
        self.coverage_delta == 0.0
            && self.depth_mismatches.is_empty()
            && self.depth_delta.is_none_or(|d| d == 0.0)
            && self.planted.avg_topic_depth.is_some() == self.recovered.avg_topic_depth.is_some()
            && turn_ok
    }
}

pub fn recovery_check(spec: &SynthSpec, week: &WeekSpec) -> Result<RecoveryResult, SynthError> {
    let out = generate_transcript(spec, week)?;
    let assessment = crate::evaluator::evaluate_heuristic(&out.transcript, week)?;
    let recovered = build_report(&out.transcript, &assessment, week.subtopics.len())?;
    let planted = out.planted;

    let diff = |a: Option<f64>, b: Option<f64>| a.zip(b).map(|(a, b)| b - a);
    let ids: std::collections::BTreeSet<&String> = planted
        .per_subtopic
        .keys()
        .chain(recovered.per_subtopic.keys())
        .collect();
    let depth_mismatches = ids
        .into_iter()
        .filter_map(|id| {
            let p = planted.per_subtopic.get(id).map(|m| m.depth);
            let r = recovered.per_subtopic.get(id).map(|m| m.depth);
            (p != r).then(|| (id.clone(), p, r))
        })
        .collect();

    Ok(RecoveryResult {
        coverage_delta: recovered.topic_coverage - planted.topic_coverage,
        depth_delta: diff(planted.avg_topic_depth, recovered.avg_topic_depth),
        turn_length_delta: diff(
            planted.avg_turn_length_per_topic,
            recovered.avg_turn_length_per_topic,
        ),
        depth_mismatches,
        planted,
        recovered,
    })
}
