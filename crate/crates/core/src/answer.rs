//! Scoring of raw model output against a closed option set.

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Result, invalid};

/// Outcome of matching a raw answer: one option, or OTHER when the answer
/// names no option or several.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Match {
    Option(String),
    Other,
}

impl Match {
    pub fn option(&self) -> Option<&str> {
        match self {
            Match::Option(s) => Some(s),
            Match::Other => None,
        }
    }

    pub fn is_other(&self) -> bool {
        matches!(self, Match::Other)
    }
}

impl fmt::Display for Match {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Match::Option(s) => f.write_str(s),
            Match::Other => f.write_str("OTHER"),
        }
    }
}

// OTHER is written as JSON null so it can never collide with an option string.
impl Serialize for Match {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.option().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Match {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        Ok(Option::<String>::deserialize(d)?.map_or(Match::Other, Match::Option))
    }
}

/// One model answer for one stimulus.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelResponse {
    pub stimulus_id: String,
    pub raw_text: String,
    pub matched: Match,
    pub token_count: u32,
    pub latency_ms: u64,
    /// Set when no answer could be obtained (transport or input failure).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl ModelResponse {
    /// Score `raw_text` against `options`.
    pub fn scored(stimulus_id: impl Into<String>, raw_text: impl Into<String>, options: &[String], latency_ms: u64) -> Self {
        let raw_text = raw_text.into();
        ModelResponse {
            stimulus_id: stimulus_id.into(),
            matched: normalize_answer(&raw_text, options),
            token_count: answer_length(&raw_text) as u32,
            raw_text,
            latency_ms,
            error: None,
        }
    }

    pub fn failed(stimulus_id: impl Into<String>, error: impl Into<String>, latency_ms: u64) -> Self {
        ModelResponse {
            stimulus_id: stimulus_id.into(),
            raw_text: String::new(),
            matched: Match::Other,
            token_count: 0,
            latency_ms,
            error: Some(error.into()),
        }
    }
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

fn fold(text: &str) -> String {
    let lowered = text.to_lowercase();
    let trimmed = lowered.trim_matches(|c: char| !c.is_alphanumeric());
    trimmed.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Byte offset of the first whole-word occurrence of `needle` in `hay`.
fn find_word(hay: &str, needle: &str) -> Option<usize> {
    hay.match_indices(needle).map(|(i, _)| i).find(|&i| {
        let before = hay[..i].chars().next_back().is_none_or(|c| !is_word_char(c));
        let after = hay[i + needle.len()..].chars().next().is_none_or(|c| !is_word_char(c));
        before && after
    })
}

/// Map a raw answer onto the option set.
///
/// The text is lowercased, stripped of surrounding punctuation and whitespace,
/// and searched for whole-word occurrences of each option. Longer options are
/// searched first and their matches blanked out, so "top left" does not also
/// count as "left". Exactly one distinct option found gives that option;
/// none or several give OTHER.
pub fn normalize_answer(raw_text: &str, options: &[String]) -> Match {
    let mut text = fold(raw_text);
    let mut order: Vec<usize> = (0..options.len()).collect();
    order.sort_by_key(|&i| std::cmp::Reverse(options[i].chars().count()));

    let mut found: Option<usize> = None;
    for i in order {
        let needle = fold(&options[i]);
        if needle.is_empty() {
            continue;
        }
        let mut hit = false;
        while let Some(at) = find_word(&text, &needle) {
            hit = true;
            text.replace_range(at..at + needle.len(), &" ".repeat(needle.len()));
        }
        if hit {
            if found.is_some() {
                return Match::Other;
            }
            found = Some(i);
        }
    }
    found.map_or(Match::Other, |i| Match::Option(options[i].clone()))
}

/// Index of the option embedding with the largest dot product with the image
/// embedding; ties go to the earliest option.
pub fn classify_by_similarity(image: &[f32], options: &[Vec<f32>]) -> Result<usize> {
    if options.is_empty() {
        return Err(invalid("no option embeddings"));
    }
    let mut best = (0, f64::NEG_INFINITY);
    for (i, emb) in options.iter().enumerate() {
        if emb.len() != image.len() {
            return Err(invalid(format!(
                "option {i} embedding has dimension {}, image embedding {}",
                emb.len(),
                image.len()
            )));
        }
        let dot: f64 = emb.iter().zip(image).map(|(a, b)| *a as f64 * *b as f64).sum();
        if dot > best.1 {
            best = (i, dot);
        }
    }
    Ok(best.0)
}

/// Token count of an answer: whitespace-separated words, with each leading or
/// trailing punctuation character counted as its own token.
pub fn answer_length(raw_text: &str) -> usize {
    raw_text
        .split_whitespace()
        .map(|word| {
            let core = word.trim_matches(|c: char| c.is_ascii_punctuation());
            let punct = word.chars().count() - core.chars().count();
            punct + usize::from(!core.is_empty())
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    fn opts(list: &[&str]) -> Vec<String> {
        list.iter().map(|s| s.to_string()).collect()
    }

    fn sections() -> Vec<String> {
        opts(&[
            "top left",
            "top center",
            "top right",
            "center left",
            "center",
            "center right",
            "bottom left",
            "bottom center",
            "bottom right",
        ])
    }

    fn colors() -> Vec<String> {
        opts(&["red", "green", "blue", "cyan", "magenta", "yellow"])
    }

    #[test]
    fn folds_case_and_punctuation() {
        assert_eq!(normalize_answer("Top Left.", &sections()), Match::Option("top left".into()));
        assert_eq!(normalize_answer("  CENTER!!", &sections()), Match::Option("center".into()));
        assert_eq!(normalize_answer("center left", &sections()), Match::Option("center left".into()));
    }

    #[test]
    fn multiple_or_foreign_answers_are_other() {
        assert_eq!(normalize_answer("red and blue", &colors()), Match::Other);
        assert_eq!(normalize_answer("It looks purple", &colors()), Match::Other);
        assert_eq!(normalize_answer("", &colors()), Match::Other);
        // substring of a longer word is not a whole-word match
        assert_eq!(normalize_answer("reddish", &colors()), Match::Other);
        assert_eq!(normalize_answer("red, red", &colors()), Match::Option("red".into()));
    }

    #[test]
    fn similarity_argmax() {
        let image = vec![1.0, 0.0, 0.0];
        let options = vec![vec![0.0, 1.0, 0.0], vec![1.0, 0.0, 0.0], vec![0.0, 0.0, 1.0]];
        assert_eq!(classify_by_similarity(&image, &options).unwrap(), 1);
        assert_eq!(classify_by_similarity(&[0.0, 0.0, 0.0], &options).unwrap(), 0);
        let scores = vec![vec![0.2], vec![0.9], vec![0.5]];
        assert_eq!(classify_by_similarity(&[1.0], &scores).unwrap(), 1);
        assert!(classify_by_similarity(&[1.0, 2.0], &scores).is_err());
    }

    #[test]
    fn token_counts() {
        assert_eq!(answer_length("yellow"), 1);
        assert_eq!(answer_length("top left"), 2);
        assert_eq!(answer_length("The star is yellow."), 5);
        assert_eq!(answer_length(""), 0);
        assert_eq!(answer_length("(red)"), 3);
    }

    #[test]
    fn match_serializes_other_as_null() {
        let r = ModelResponse::scored("s1", "purple", &colors(), 3);
        let json = serde_json::to_string(&r).unwrap();
        assert!(json.contains("\"matched\":null"));
        let back: ModelResponse = serde_json::from_str(&json).unwrap();
        assert_eq!(back, r);
    }

    proptest! {
        #[test]
        fn options_normalize_to_themselves(i in 0usize..9, upper in any::<bool>(), dot in any::<bool>()) {
            let options = sections();
            let mut text = options[i].clone();
            if upper { text = text.to_uppercase(); }
            if dot { text.push('.'); }
            prop_assert_eq!(normalize_answer(&text, &options), Match::Option(options[i].clone()));
        }

        #[test]
        fn appending_weaker_options_keeps_the_winner(
            image in prop::collection::vec(-1.0f32..1.0, 4),
            opts in prop::collection::vec(prop::collection::vec(-1.0f32..1.0, 4), 1..6),
        ) {
            let winner = classify_by_similarity(&image, &opts).unwrap();
            let best: f64 = opts[winner].iter().zip(&image).map(|(a, b)| *a as f64 * *b as f64).sum();
            let mut extended = opts.clone();
            // a scaled-down copy of the image embedding scores strictly less when best > 0
            let norm: f64 = image.iter().map(|v| (*v as f64).powi(2)).sum();
            if norm > 0.0 && best > 0.0 {
                let scale = (best / norm * 0.5) as f32;
                let weaker: Vec<f32> = image.iter().map(|v| v * scale).collect();
                let score: f64 = weaker.iter().zip(&image).map(|(a, b)| *a as f64 * *b as f64).sum();
                prop_assume!(score < best);
                extended.push(weaker);
                prop_assert_eq!(classify_by_similarity(&image, &extended).unwrap(), winner);
            }
        }
    }
}
