//! Text preprocessing: special-character stripping, tokenization, stopword
//! removal and Porter stemming, composed in that fixed order.

mod porter;

use std::collections::BTreeSet;
use std::fs;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use porter::stem_word;

/// Hand-picked stopwords that are always removed, whatever list is loaded.
pub const CUSTOM_STOPWORDS: &[&str] = &[
    "is", "at", "the", "re", "name", "user", "ct", "us", "ud", "ua", "ut", "amp", "uc", "ue", "uk",
    "it", "im",
];

const ENGLISH_STOPWORDS: &str = include_str!("../../data/stopwords_en.txt");

/// Lowercase tokens, in order, plus the character count of the text they
/// came from.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TokenStream {
    pub tokens: Vec<String>,
    pub source_char_count: usize,
}

impl TokenStream {
    pub fn new(tokens: Vec<String>, source_char_count: usize) -> Self {
        Self {
            tokens,
            source_char_count,
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.tokens.iter().map(String::as_str)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StopwordSet {
    words: BTreeSet<String>,
}

impl StopwordSet {
    /// Only the custom list.
    pub fn custom() -> Self {
        Self {
            words: CUSTOM_STOPWORDS.iter().map(|w| w.to_string()).collect(),
        }
    }

    /// The bundled English list unioned with the custom list.
    pub fn english() -> Self {
        let mut set = Self::custom();
        set.extend_from_text(ENGLISH_STOPWORDS);
        set
    }

    /// Load a stopword file (one token per line, `#` comments). The custom
    /// list is always included.
    pub fn from_file(path: impl AsRef<Path>) -> io::Result<Self> {
        let text = fs::read_to_string(path)?;
        let mut set = Self::custom();
        set.extend_from_text(&text);
        Ok(set)
    }

    fn extend_from_text(&mut self, text: &str) {
        for line in text.lines() {
            let word = line.split('#').next().unwrap_or("").trim();
            if !word.is_empty() {
                self.words.insert(word.to_lowercase());
            }
        }
    }

    pub fn contains(&self, word: &str) -> bool {
        self.words.contains(word)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.words.iter().map(String::as_str)
    }
}

impl Default for StopwordSet {
    fn default() -> Self {
        Self::english()
    }
}

/// Remove punctuation and symbols, non-ASCII characters, digits and
/// single-letter words, then collapse whitespace. Case is preserved.
pub fn strip_special(text: &str) -> String {
    let kept: String = text
        .chars()
        .filter(|c| c.is_ascii_whitespace() || c.is_ascii_alphabetic() || *c == '_')
        .collect();
    kept.split_ascii_whitespace()
        .filter(|w| w.len() > 1)
        .collect::<Vec<_>>()
        .join(" ")
}

/// Lowercase and split on whitespace.
pub fn tokenize(text: &str) -> TokenStream {
    let tokens = text.split_whitespace().map(str::to_lowercase).collect();
    TokenStream::new(tokens, text.chars().count())
}

pub fn remove_stopwords(ts: &TokenStream, stopwords: &StopwordSet) -> TokenStream {
    let tokens = ts
        .tokens
        .iter()
        .filter(|t| !stopwords.contains(t))
        .cloned()
        .collect();
    TokenStream::new(tokens, ts.source_char_count)
}

pub fn stem(ts: &TokenStream) -> TokenStream {
    let tokens = ts.tokens.iter().map(|t| stem_word(t)).collect();
    TokenStream::new(tokens, ts.source_char_count)
}

/// The full pipeline with a fixed stopword set.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Preprocessor {
    pub stopwords: StopwordSet,
}

impl Preprocessor {
    pub fn new(stopwords: StopwordSet) -> Self {
        Self { stopwords }
    }

    /// strip_special, tokenize, remove_stopwords, stem. The returned
    /// `source_char_count` is that of the raw input.
    pub fn preprocess(&self, text: &str) -> TokenStream {
        let stripped = strip_special(text);
        let ts = stem(&remove_stopwords(&tokenize(&stripped), &self.stopwords));
        TokenStream::new(ts.tokens, text.chars().count())
    }
}

/// Preprocess with the default English stopword set.
pub fn preprocess(text: &str) -> TokenStream {
    Preprocessor::default().preprocess(text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn toks(words: &[&str]) -> TokenStream {
        TokenStream::new(words.iter().map(|w| w.to_string()).collect(), 0)
    }

    #[test]
    fn strip_special_examples() {
        assert_eq!(strip_special("Hey!! 😀 @you #tag"), "Hey you tag");
        assert_eq!(strip_special(""), "");
        assert_eq!(strip_special("  a  bb\t\tccc 42 x9y "), "bb ccc xy");
        assert_eq!(strip_special("café au lait"), "caf au lait");
    }

    #[test]
    fn tokenize_examples() {
        assert_eq!(tokenize("Hello world").tokens, ["hello", "world"]);
        assert_eq!(tokenize("a  b").tokens, ["a", "b"]);
        assert_eq!(
            tokenize("The User RE posts").tokens,
            ["the", "user", "re", "posts"]
        );
        assert_eq!(tokenize("a  b").source_char_count, 4);
    }

    #[test]
    fn stopword_examples() {
        let sw = StopwordSet::custom();
        assert_eq!(
            remove_stopwords(&toks(&["the", "user", "posts"]), &sw).tokens,
            ["posts"]
        );
        assert!(remove_stopwords(&toks(&[]), &sw).is_empty());
        let plain = toks(&["quiet", "river"]);
        assert_eq!(remove_stopwords(&plain, &sw), plain);
    }

    #[test]
    fn custom_list_is_always_present() {
        for set in [StopwordSet::custom(), StopwordSet::english()] {
            for w in CUSTOM_STOPWORDS {
                assert!(set.contains(w), "{w}");
            }
        }
        assert!(StopwordSet::english().len() > CUSTOM_STOPWORDS.len());
    }

    #[test]
    fn stopword_file_unions_custom_list() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sw.txt");
        fs::write(&path, "# comment\nFoo\n\nbar # trailing\n").unwrap();
        let set = StopwordSet::from_file(&path).unwrap();
        assert!(set.contains("foo") && set.contains("bar") && set.contains("amp"));
        assert!(!set.contains("# comment"));
    }

    #[test]
    fn stem_examples() {
        assert_eq!(stem(&toks(&["running", "ponies"])).tokens, ["run", "poni"]);
        assert_eq!(stem(&toks(&["run"])).tokens, ["run"]);
        assert_eq!(stem(&toks(&["caresses"])).tokens, ["caress"]);
    }

    #[test]
    fn preprocess_examples() {
        // "users" survives stopword removal and only then becomes "user".
        assert_eq!(
            preprocess("The users are RUNNING!!").tokens,
            ["user", "run"]
        );
        assert!(preprocess("😀😀").is_empty());
        assert!(preprocess("amp amp amp").is_empty());
        assert_eq!(preprocess("Hi 😀").source_char_count, 4);
    }

    proptest! {
        #[test]
        fn strip_special_is_idempotent(text in "\\PC{0,60}") {
            let once = strip_special(&text);
            prop_assert_eq!(strip_special(&once), once);
        }

        #[test]
        fn tokens_have_no_whitespace_or_uppercase(text in "\\PC{0,60}") {
            let ts = tokenize(&strip_special(&text));
            for t in &ts.tokens {
                prop_assert!(!t.is_empty());
                prop_assert!(!t.chars().any(|c| c.is_whitespace() || c.is_uppercase()));
            }
        }

        #[test]
        fn stopword_removal_is_an_ordered_subsequence(words in proptest::collection::vec("[a-z]{1,4}", 0..20)) {
            let sw = StopwordSet::english();
            let input = TokenStream::new(words.clone(), 0);
            let out = remove_stopwords(&input, &sw);
            let mut it = input.tokens.iter();
            for t in &out.tokens {
                prop_assert!(!sw.contains(t));
                prop_assert!(it.any(|w| w == t));
            }
        }

        #[test]
        fn pipeline_order_is_fixed(text in "[ -~]{0,80}") {
            let sw = StopwordSet::english();
            let expected = stem(&remove_stopwords(&tokenize(&strip_special(&text)), &sw));
            prop_assert_eq!(Preprocessor::new(sw).preprocess(&text).tokens, expected.tokens);
        }
    }
}
