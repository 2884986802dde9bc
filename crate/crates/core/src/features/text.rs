//! Per-text statistics: sentiment ratios, meta-text counts, named entities
//! and part-of-speech counts.

use serde::{Deserialize, Serialize};

use crate::corpus::is_url;
use crate::lexicons::{count_hits, LexiconRegistry};
use crate::textprep::{StopwordSet, TokenStream};

/// (negative, positive, neutral) lexicon ratios over the preprocessed tokens.
pub fn sentiment_scores(ts: &TokenStream, registry: &LexiconRegistry) -> (f64, f64, f64) {
    let denom = ts.len().max(1) as f64;
    let negative = count_hits(ts, &registry.negative) as f64 / denom;
    let positive = count_hits(ts, &registry.positive) as f64 / denom;
    let neutral = (1.0 - negative - positive).max(0.0);
    (negative, positive, neutral)
}

pub const META_TEXT_WIDTH: usize = 12;

fn is_sentence_end(c: char) -> bool {
    matches!(c, '.' | '!' | '?')
}

fn sentence_count(text: &str) -> usize {
    let n = text
        .split(is_sentence_end)
        .filter(|s| !s.trim().is_empty())
        .count();
    if n == 0 && !text.trim().is_empty() {
        1
    } else {
        n
    }
}

fn bare(word: &str) -> &str {
    word.trim_matches(|c: char| !c.is_alphanumeric())
}

/// Twelve meta-text statistics of a raw text, in schema order: length,
/// word count, non-space character count, sentence count, average word
/// length, stopword count, hashtag count, mention count, URL count,
/// capitalized word count, punctuation count, average sentence length.
pub fn meta_text_features(raw: &str, stopwords: &StopwordSet) -> [f64; META_TEXT_WIDTH] {
    let words: Vec<&str> = raw.split_whitespace().collect();
    let word_count = words.len();
    let char_count = raw.chars().filter(|c| !c.is_whitespace()).count();
    let sentences = sentence_count(raw);
    let avg_word_len = if word_count == 0 {
        0.0
    } else {
        char_count as f64 / word_count as f64
    };
    let stopword_count = words
        .iter()
        .filter(|w| stopwords.contains(&bare(w).to_lowercase()))
        .count();
    let prefixed = |p: char| {
        words
            .iter()
            .filter(|w| w.len() > 1 && w.starts_with(p))
            .count()
    };
    let url_count = words.iter().filter(|w| is_url(w)).count();
    let capitalized = words
        .iter()
        .filter(|w| w.chars().next().is_some_and(|c| c.is_uppercase()))
        .count();
    let punctuation = raw.chars().filter(|c| c.is_ascii_punctuation()).count();
    let avg_sentence_len = if sentences == 0 {
        0.0
    } else {
        word_count as f64 / sentences as f64
    };
    [
        raw.chars().count() as f64,
        word_count as f64,
        char_count as f64,
        sentences as f64,
        avg_word_len,
        stopword_count as f64,
        prefixed('#') as f64,
        prefixed('@') as f64,
        url_count as f64,
        capitalized as f64,
        punctuation as f64,
        avg_sentence_len,
    ]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PosTag {
    Adjective,
    ProperNoun,
    Noun,
    Other,
}

/// A word as seen by a tagger: its surface form and whether it opens a
/// sentence.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TaggerInput<'a> {
    pub word: &'a str,
    pub sentence_start: bool,
}

pub trait PosTagger: Send + Sync {
    fn name(&self) -> &str;
    fn tag(&self, words: &[TaggerInput<'_>]) -> Vec<PosTag>;
}

const ADJECTIVES: &[&str] = &[
    "quick", "slow", "big", "small", "good", "bad", "new", "old", "great", "high", "low", "long",
    "short", "happy", "sad", "angry", "red", "blue", "green", "black", "white", "brown", "young",
    "little", "large", "early", "late", "hard", "easy", "real", "best", "worst", "nice", "kind",
    "lovely",
];

/// Deterministic suffix-and-wordlist tagger.
#[derive(Debug, Clone, Default)]
pub struct HeuristicTagger {
    stopwords: StopwordSet,
}

impl HeuristicTagger {
    pub fn new(stopwords: StopwordSet) -> Self {
        Self { stopwords }
    }
}

impl PosTagger for HeuristicTagger {
    fn name(&self) -> &str {
        "heuristic-suffix-v1"
    }

    fn tag(&self, words: &[TaggerInput<'_>]) -> Vec<PosTag> {
        words
            .iter()
            .map(|w| {
                let word = bare(w.word);
                let lower = word.to_lowercase();
                if word.is_empty() || !word.chars().all(|c| c.is_ascii_alphabetic()) {
                    return PosTag::Other;
                }
                if ADJECTIVES.contains(&lower.as_str())
                    || (lower.len() > 4
                        && ["ous", "ful", "ive", "able", "ible", "less", "ish", "ical"]
                            .iter()
                            .any(|s| lower.ends_with(s)))
                {
                    return PosTag::Adjective;
                }
                if word.starts_with(|c: char| c.is_ascii_uppercase()) && !w.sentence_start {
                    return PosTag::ProperNoun;
                }
                if self.stopwords.contains(&lower)
                    || lower.len() < 3
                    || ["ly", "ed", "ing"].iter().any(|s| lower.ends_with(s))
                {
                    return PosTag::Other;
                }
                PosTag::Noun
            })
            .collect()
    }
}

/// Raw words paired with sentence-start flags. Hashtags, mentions and URLs
/// are skipped.
fn tagger_inputs(raw: &str) -> Vec<TaggerInput<'_>> {
    let mut out = Vec::new();
    let mut start = true;
    for word in raw.split_whitespace() {
        let skip = word.starts_with('#') || word.starts_with('@') || is_url(word);
        if !skip {
            out.push(TaggerInput {
                word,
                sentence_start: start,
            });
        }
        start = word.ends_with(is_sentence_end);
    }
    out
}

/// Named entities are maximal runs of capitalized words that do not open a
/// sentence.
pub fn named_entity_count(raw: &str) -> usize {
    let mut count = 0;
    let mut in_run = false;
    for input in tagger_inputs(raw) {
        let word = bare(input.word);
        let capitalized = word.starts_with(|c: char| c.is_uppercase());
        if capitalized && !input.sentence_start {
            if !in_run {
                count += 1;
            }
            in_run = true;
        } else {
            in_run = false;
        }
        // A run cannot continue across a sentence boundary.
        if input.word.ends_with(is_sentence_end) {
            in_run = false;
        }
    }
    count
}

/// (named entities, adjectives, proper nouns, nouns).
pub fn aux_text_features(raw: &str, tagger: &dyn PosTagger) -> (usize, usize, usize, usize) {
    let inputs = tagger_inputs(raw);
    let tags = tagger.tag(&inputs);
    let count = |t: PosTag| tags.iter().filter(|&&x| x == t).count();
    (
        named_entity_count(raw),
        count(PosTag::Adjective),
        count(PosTag::ProperNoun),
        count(PosTag::Noun),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::textprep::preprocess;

    fn sw() -> StopwordSet {
        StopwordSet::english()
    }

    #[test]
    fn sentiment_examples() {
        let reg = LexiconRegistry::builtin();
        assert_eq!(
            sentiment_scores(&preprocess("love great joy"), &reg),
            (0.0, 1.0, 0.0)
        );
        assert_eq!(
            sentiment_scores(&TokenStream::default(), &reg),
            (0.0, 0.0, 1.0)
        );
        let ts = preprocess("bad awful good council market river bridge garden museum school");
        assert_eq!(ts.len(), 10);
        let (n, p, u) = sentiment_scores(&ts, &reg);
        assert!((n - 0.2).abs() < 1e-12 && (p - 0.1).abs() < 1e-12 && (u - 0.7).abs() < 1e-12);
    }

    #[test]
    fn meta_examples() {
        let m = meta_text_features("Hi there. Go!", &sw());
        assert_eq!(m[3], 2.0);
        assert_eq!(m[1], 3.0);
        assert_eq!(m[0], 13.0);
        assert_eq!(m[2], 11.0);
        assert_eq!(m[9], 2.0);
        assert_eq!(m[10], 2.0);
        assert!((m[11] - 1.5).abs() < 1e-12);

        assert_eq!(meta_text_features("", &sw()), [0.0; META_TEXT_WIDTH]);

        let m = meta_text_features("#a @b http://x", &sw());
        assert_eq!((m[6], m[7], m[8]), (1.0, 1.0, 1.0));
        assert_eq!(m[3], 1.0);
    }

    #[test]
    fn stopwords_counted_on_raw_words() {
        let m = meta_text_features("The cat is on the mat.", &sw());
        assert_eq!(m[5], 4.0);
    }

    #[test]
    fn named_entities() {
        assert_eq!(named_entity_count("I met Alice Smith in Paris"), 2);
        assert_eq!(named_entity_count("all lowercase words here"), 0);
        assert_eq!(named_entity_count("Alice left. Bob stayed with Carol"), 1);
    }

    #[test]
    fn default_tagger() {
        let t = HeuristicTagger::new(sw());
        let (_, jj, _, nn) = aux_text_features("quick brown fox", &t);
        assert!(jj >= 1);
        assert_eq!(nn, 1);
        let (ne, _, nnp, _) = aux_text_features("We saw Paris today", &t);
        assert_eq!((ne, nnp), (1, 1));
    }
}
