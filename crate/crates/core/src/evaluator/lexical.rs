//! Token-level phrase matching shared by attribution and the depth rubric.

/// Lowercased tokens: maximal runs of alphanumerics and `- _ + # .`, with
/// leading and trailing `.`/`-` stripped so "vs." matches "vs".
pub fn tokenize(text: &str) -> Vec<String> {
    let lower = text.to_lowercase();
    lower
        .split(|c: char| !(c.is_alphanumeric() || matches!(c, '-' | '_' | '+' | '#' | '.')))
        .map(|tok| tok.trim_matches(|c| c == '.' || c == '-'))
        .filter(|tok| !tok.is_empty())
        .map(str::to_string)
        .collect()
}

/// Number of (possibly overlapping) occurrences of `phrase` as a contiguous
/// token subsequence of `tokens`.
pub fn phrase_occurrences(tokens: &[String], phrase: &[String]) -> usize {
    if phrase.is_empty() || phrase.len() > tokens.len() {
        return 0;
    }
    tokens.windows(phrase.len()).filter(|w| *w == phrase).count()
}

/// Precompiled phrase list.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PhraseSet {
    phrases: Vec<Vec<String>>,
}

impl PhraseSet {
    pub fn new<S: AsRef<str>>(phrases: &[S]) -> Self {
        PhraseSet {
            phrases: phrases
                .iter()
                .map(|p| tokenize(p.as_ref()))
                .filter(|p| !p.is_empty())
                .collect(),
        }
    }

    /// Total occurrences of all phrases.
    pub fn hits(&self, tokens: &[String]) -> usize {
        self.phrases.iter().map(|p| phrase_occurrences(tokens, p)).sum()
    }

    pub fn any(&self, tokens: &[String]) -> bool {
        self.phrases.iter().any(|p| phrase_occurrences(tokens, p) > 0)
    }

    /// Every distinct token appearing in any phrase.
    pub fn vocabulary(&self) -> impl Iterator<Item = &str> {
        self.phrases.iter().flatten().map(String::as_str)
    }
}
