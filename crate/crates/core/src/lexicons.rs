//! Word lexicons (abusive, hate, positive, negative) and the threshold rule
//! that labels a reply abusive.

use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::corpus::{Corpus, ReplyLabel};
use crate::textprep::{Preprocessor, TokenStream};

/// Longest lexicon entry, in preprocessed tokens.
pub const MAX_TERM_TOKENS: usize = 3;

const ABUSIVE_TXT: &str = include_str!("../data/lexicons/abusive.txt");
const HATE_TXT: &str = include_str!("../data/lexicons/hate.txt");
const POSITIVE_TXT: &str = include_str!("../data/lexicons/positive.txt");
const NEGATIVE_TXT: &str = include_str!("../data/lexicons/negative.txt");

#[derive(Debug, Error)]
pub enum LexiconError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("lexicon {0} has no entries")]
    Empty(String),
    #[error("lexicon {name}, line {line}: {message}")]
    Parse {
        name: String,
        line: usize,
        message: String,
    },
    #[error("lexicon manifest: {0}")]
    Manifest(String),
    #[error("cannot score an empty token stream")]
    EmptyText,
    #[error("threshold {0} must lie strictly between 0 and 1")]
    Threshold(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LexiconKind {
    Abusive,
    Hate,
    Positive,
    Negative,
}

/// Raw terms of a bundled lexicon, as written in the data file.
pub fn builtin_terms(kind: LexiconKind) -> Vec<&'static str> {
    let text = match kind {
        LexiconKind::Abusive => ABUSIVE_TXT,
        LexiconKind::Hate => HATE_TXT,
        LexiconKind::Positive => POSITIVE_TXT,
        LexiconKind::Negative => NEGATIVE_TXT,
    };
    term_lines(text).map(|(_, t)| t).collect()
}

fn term_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().filter_map(|(i, line)| {
        let term = line.split('#').next().unwrap_or("").trim();
        (!term.is_empty()).then_some((i + 1, term))
    })
}

/// A set of 1..=3 token terms, stored in stemmed lowercase form so that
/// matching happens in the same space as preprocessed text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lexicon {
    pub name: String,
    entries: BTreeSet<Vec<String>>,
}

impl Lexicon {
    /// Build from raw term lines; each is run through `pre`. Terms that
    /// preprocess to nothing (stopwords only) are skipped.
    pub fn from_text(name: &str, text: &str, pre: &Preprocessor) -> Result<Self, LexiconError> {
        let mut entries = BTreeSet::new();
        for (line, term) in term_lines(text) {
            let tokens = pre.preprocess(term).tokens;
            if tokens.is_empty() {
                log::warn!("lexicon {name}, line {line}: {term:?} is empty after preprocessing");
                continue;
            }
            if tokens.len() > MAX_TERM_TOKENS {
                return Err(LexiconError::Parse {
                    name: name.to_string(),
                    line,
                    message: format!("{term:?} has more than {MAX_TERM_TOKENS} tokens"),
                });
            }
            entries.insert(tokens);
        }
        if entries.is_empty() {
            return Err(LexiconError::Empty(name.to_string()));
        }
        Ok(Self {
            name: name.to_string(),
            entries,
        })
    }

    pub fn builtin(kind: LexiconKind, pre: &Preprocessor) -> Self {
        let text = match kind {
            LexiconKind::Abusive => ABUSIVE_TXT,
            LexiconKind::Hate => HATE_TXT,
            LexiconKind::Positive => POSITIVE_TXT,
            LexiconKind::Negative => NEGATIVE_TXT,
        };
        let name = serde_json::to_value(kind)
            .expect("enum")
            .as_str()
            .expect("string")
            .to_string();
        Self::from_text(&name, text, pre).expect("bundled lexicons are valid")
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, term: &[String]) -> bool {
        self.entries.contains(term)
    }

    pub fn entries(&self) -> impl Iterator<Item = &[String]> {
        self.entries.iter().map(Vec::as_slice)
    }

    pub fn union(&self, other: &Lexicon, name: &str) -> Lexicon {
        Lexicon {
            name: name.to_string(),
            entries: self.entries.union(&other.entries).cloned().collect(),
        }
    }

    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        for e in &self.entries {
            h.update(e.join(" ").as_bytes());
            h.update(b"\n");
        }
        hex::encode(h.finalize())
    }
}

pub fn load_lexicon(
    path: impl AsRef<Path>,
    name: &str,
    pre: &Preprocessor,
) -> Result<Lexicon, LexiconError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| LexiconError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Lexicon::from_text(name, &text, pre)
}

/// Number of lexicon occurrences, scanning left to right and taking the
/// longest entry that matches at each position. Matched tokens are consumed.
pub fn count_hits(ts: &TokenStream, lex: &Lexicon) -> usize {
    let tokens = &ts.tokens;
    let mut hits = 0;
    let mut i = 0;
    while i < tokens.len() {
        let longest = (1..=MAX_TERM_TOKENS.min(tokens.len() - i))
            .rev()
            .find(|&len| lex.contains(&tokens[i..i + len]));
        match longest {
            Some(len) => {
                hits += 1;
                i += len;
            }
            None => i += 1,
        }
    }
    hits
}

/// Share of preprocessed tokens that hit the abusive lexicon union.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AbuseScore {
    pub value: f64,
    pub hits: usize,
    pub token_count: usize,
}

pub fn abuse_score(ts: &TokenStream, abusive_union: &Lexicon) -> Result<AbuseScore, LexiconError> {
    if ts.is_empty() {
        return Err(LexiconError::EmptyText);
    }
    let hits = count_hits(ts, abusive_union);
    Ok(AbuseScore {
        value: hits as f64 / ts.len() as f64,
        hits,
        token_count: ts.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AbuseVerdict {
    Neutral,
    FlagManual,
    Abusive,
}

impl From<AbuseVerdict> for ReplyLabel {
    fn from(v: AbuseVerdict) -> Self {
        match v {
            AbuseVerdict::Neutral => ReplyLabel::Neutral,
            AbuseVerdict::FlagManual => ReplyLabel::FlagManual,
            AbuseVerdict::Abusive => ReplyLabel::Abusive,
        }
    }
}

/// A labeling threshold held as an exact fraction, so that "exactly at the
/// threshold" is decided without floating-point equality.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Threshold {
    numerator: u64,
    denominator: u64,
}

impl Threshold {
    pub const DEFAULT: Threshold = Threshold {
        numerator: 1,
        denominator: 10,
    };

    pub fn new(numerator: u64, denominator: u64) -> Result<Self, LexiconError> {
        if denominator == 0 || numerator == 0 || numerator >= denominator {
            return Err(LexiconError::Threshold(format!(
                "{numerator}/{denominator}"
            )));
        }
        let g = gcd(numerator, denominator);
        Ok(Self {
            numerator: numerator / g,
            denominator: denominator / g,
        })
    }

    /// Parse a plain decimal such as `0.1` or `0.125` into an exact fraction.
    pub fn from_decimal(s: &str) -> Result<Self, LexiconError> {
        let bad = || LexiconError::Threshold(s.to_string());
        let s = s.trim();
        let (int, frac) = s.split_once('.').unwrap_or((s, ""));
        if frac.len() > 18 || !int.chars().chain(frac.chars()).all(|c| c.is_ascii_digit()) {
            return Err(bad());
        }
        let int: u64 = if int.is_empty() {
            0
        } else {
            int.parse().map_err(|_| bad())?
        };
        let scale = 10u64.pow(frac.len() as u32);
        let frac: u64 = if frac.is_empty() {
            0
        } else {
            frac.parse().map_err(|_| bad())?
        };
        let num = int
            .checked_mul(scale)
            .and_then(|v| v.checked_add(frac))
            .ok_or_else(bad)?;
        Self::new(num, scale).map_err(|_| bad())
    }

    /// The shortest decimal that round-trips `value`, read exactly.
    pub fn from_f64(value: f64) -> Result<Self, LexiconError> {
        Self::from_decimal(&format!("{value}"))
    }

    pub fn as_f64(&self) -> f64 {
        self.numerator as f64 / self.denominator as f64
    }
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

impl Default for Threshold {
    fn default() -> Self {
        Self::DEFAULT
    }
}

impl fmt::Display for Threshold {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_f64())
    }
}

/// Above the threshold is abusive, exactly at it is flagged for manual
/// review, below it is neutral. Compared as `hits * den` vs `num * tokens`.
pub fn classify(score: &AbuseScore, threshold: Threshold) -> AbuseVerdict {
    let lhs = score.hits as u128 * threshold.denominator as u128;
    let rhs = threshold.numerator as u128 * score.token_count as u128;
    match lhs.cmp(&rhs) {
        std::cmp::Ordering::Greater => AbuseVerdict::Abusive,
        std::cmp::Ordering::Equal => AbuseVerdict::FlagManual,
        std::cmp::Ordering::Less => AbuseVerdict::Neutral,
    }
}

/// JSON manifest naming the four lexicon files, relative to the manifest.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RegistryManifest {
    pub abusive: PathBuf,
    pub hate: PathBuf,
    pub positive: PathBuf,
    pub negative: PathBuf,
}

/// The four lexicons plus the preprocessing they were built with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LexiconRegistry {
    pub preprocessor: Preprocessor,
    pub abusive: Lexicon,
    pub hate: Lexicon,
    pub positive: Lexicon,
    pub negative: Lexicon,
    abusive_union: Lexicon,
}

impl LexiconRegistry {
    pub fn new(
        preprocessor: Preprocessor,
        abusive: Lexicon,
        hate: Lexicon,
        positive: Lexicon,
        negative: Lexicon,
    ) -> Self {
        let abusive_union = abusive.union(&hate, "abusive+hate");
        Self {
            preprocessor,
            abusive,
            hate,
            positive,
            negative,
            abusive_union,
        }
    }

    /// The lexicons bundled with the crate.
    pub fn builtin() -> Self {
        let pre = Preprocessor::default();
        Self::new(
            pre.clone(),
            Lexicon::builtin(LexiconKind::Abusive, &pre),
            Lexicon::builtin(LexiconKind::Hate, &pre),
            Lexicon::builtin(LexiconKind::Positive, &pre),
            Lexicon::builtin(LexiconKind::Negative, &pre),
        )
    }

    pub fn from_manifest(path: impl AsRef<Path>) -> Result<Self, LexiconError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| LexiconError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let manifest: RegistryManifest =
            serde_json::from_str(&text).map_err(|e| LexiconError::Manifest(e.to_string()))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        let pre = Preprocessor::default();
        let load = |p: &Path, name: &str| load_lexicon(base.join(p), name, &pre);
        Ok(Self::new(
            pre.clone(),
            load(&manifest.abusive, "abusive")?,
            load(&manifest.hate, "hate")?,
            load(&manifest.positive, "positive")?,
            load(&manifest.negative, "negative")?,
        ))
    }

    /// Abusive and hate lexicons together; the labeling lexicon.
    pub fn abusive_union(&self) -> &Lexicon {
        &self.abusive_union
    }

    pub fn preprocess(&self, text: &str) -> TokenStream {
        self.preprocessor.preprocess(text)
    }

    /// Lexicon verdict for a raw text; empty texts are neutral.
    pub fn verdict(&self, text: &str, threshold: Threshold) -> (AbuseVerdict, Option<AbuseScore>) {
        match abuse_score(&self.preprocess(text), &self.abusive_union) {
            Ok(score) => (classify(&score, threshold), Some(score)),
            Err(_) => (AbuseVerdict::Neutral, None),
        }
    }

    pub fn digests(&self) -> Vec<(String, String)> {
        [&self.abusive, &self.hate, &self.positive, &self.negative]
            .into_iter()
            .map(|l| (l.name.clone(), l.digest()))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FlaggedReply {
    pub conversation: String,
    pub reply: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct LabelReport {
    pub replies: usize,
    pub abusive: usize,
    pub neutral: usize,
    /// Replies exactly at the threshold, for manual inspection.
    pub flagged: Vec<FlaggedReply>,
    /// Replies with no tokens left after preprocessing; labeled neutral.
    pub empty_replies: usize,
}

/// Label every reply with the threshold rule and recompute every `y`.
pub fn label_corpus(
    corpus: &Corpus,
    registry: &LexiconRegistry,
    threshold: Threshold,
) -> (Corpus, LabelReport) {
    let mut out = corpus.clone();
    let mut report = LabelReport::default();
    out.for_each_mut(|c| {
        let labels: Vec<ReplyLabel> = c
            .replies()
            .iter()
            .map(|r| {
                report.replies += 1;
                let (verdict, score) = registry.verdict(&r.text, threshold);
                if score.is_none() {
                    log::warn!(
                        "conversation {}: reply {} is empty after preprocessing",
                        c.id(),
                        r.id
                    );
                    report.empty_replies += 1;
                }
                match verdict {
                    AbuseVerdict::Abusive => report.abusive += 1,
                    AbuseVerdict::Neutral => report.neutral += 1,
                    AbuseVerdict::FlagManual => report.flagged.push(FlaggedReply {
                        conversation: c.id().to_string(),
                        reply: r.id.clone(),
                    }),
                }
                verdict.into()
            })
            .collect();
        c.set_labels(&labels).expect("one label per reply");
    });
    (out, report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{synth_corpus, SynthConfig};
    use crate::textprep::preprocess;

    fn lex(terms: &str) -> Lexicon {
        Lexicon::from_text("t", terms, &Preprocessor::default()).unwrap()
    }

    fn stream(words: &[&str]) -> TokenStream {
        TokenStream::new(words.iter().map(|w| w.to_string()).collect(), 0)
    }

    #[test]
    fn load_examples() {
        let l = lex("idiot\ngo away\n");
        assert_eq!(l.len(), 2);
        assert!(l.contains(&preprocess("go away").tokens));
        assert_eq!(lex("idiot\nidiot\n# note\n").len(), 1);
        assert!(matches!(
            Lexicon::from_text("e", "", &Preprocessor::default()),
            Err(LexiconError::Empty(_))
        ));
        assert!(matches!(
            Lexicon::from_text("e", "the\nis\n", &Preprocessor::default()),
            Err(LexiconError::Empty(_))
        ));
        assert!(matches!(
            Lexicon::from_text("e", "one two three four\n", &Preprocessor::default()),
            Err(LexiconError::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn load_from_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("l.txt");
        fs::write(&p, "Idiots\n").unwrap();
        let l = load_lexicon(&p, "x", &Preprocessor::default()).unwrap();
        assert!(l.contains(&["idiot".to_string()]));
        assert!(matches!(
            load_lexicon(dir.path().join("nope"), "x", &Preprocessor::default()),
            Err(LexiconError::Io { .. })
        ));
    }

    #[test]
    fn count_hits_examples() {
        let l = lex("idiot\ngo away\n");
        assert_eq!(count_hits(&preprocess("go away you idiot"), &l), 2);
        assert_eq!(count_hits(&stream(&[]), &l), 0);
        assert_eq!(count_hits(&preprocess("idiot idiot"), &l), 2);
    }

    #[test]
    fn longest_match_consumes_tokens() {
        let l = lex("red\nred fox\nfox den\n");
        // "red fox" wins at position 0, leaving "den" unmatched.
        assert_eq!(count_hits(&stream(&["red", "fox", "den"]), &l), 1);
        assert_eq!(count_hits(&stream(&["fox", "den", "red"]), &l), 2);
    }

    #[test]
    fn score_examples() {
        let l = lex("bad\n");
        let mut words = vec!["ok"; 8];
        words.extend(["bad", "bad"]);
        let s = abuse_score(&stream(&words), &l).unwrap();
        assert_eq!((s.hits, s.token_count), (2, 10));
        assert!((s.value - 0.2).abs() < 1e-15);
        assert_eq!(abuse_score(&stream(&["ok"; 10]), &l).unwrap().value, 0.0);
        let one = abuse_score(
            &stream(&["ok", "ok", "ok", "ok", "ok", "ok", "ok", "ok", "ok", "bad"]),
            &l,
        )
        .unwrap();
        assert_eq!(classify(&one, Threshold::DEFAULT), AbuseVerdict::FlagManual);
        assert!(matches!(
            abuse_score(&stream(&[]), &l),
            Err(LexiconError::EmptyText)
        ));
    }

    #[test]
    fn classify_examples() {
        let s = |hits, token_count| AbuseScore {
            value: hits as f64 / token_count as f64,
            hits,
            token_count,
        };
        assert_eq!(
            classify(&s(2, 10), Threshold::DEFAULT),
            AbuseVerdict::Abusive
        );
        assert_eq!(
            classify(&s(1, 10), Threshold::DEFAULT),
            AbuseVerdict::FlagManual
        );
        assert_eq!(
            classify(&s(3, 30), Threshold::DEFAULT),
            AbuseVerdict::FlagManual
        );
        assert_eq!(
            classify(&s(0, 10), Threshold::DEFAULT),
            AbuseVerdict::Neutral
        );
        assert_eq!(
            classify(&s(1, 11), Threshold::DEFAULT),
            AbuseVerdict::Neutral
        );
    }

    #[test]
    fn threshold_parsing_is_exact() {
        assert_eq!(Threshold::from_decimal("0.1").unwrap(), Threshold::DEFAULT);
        assert_eq!(Threshold::from_f64(0.1).unwrap(), Threshold::DEFAULT);
        assert_eq!(
            Threshold::from_decimal("0.25").unwrap(),
            Threshold::new(1, 4).unwrap()
        );
        assert_eq!(Threshold::from_decimal("0.10").unwrap(), Threshold::DEFAULT);
        for bad in ["0", "1", "1.5", "-0.1", "abc", ""] {
            assert!(Threshold::from_decimal(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn verdict_is_monotone_in_hits() {
        for tokens in 1..=40usize {
            let mut last = AbuseVerdict::Neutral;
            for hits in 0..=tokens {
                let v = classify(
                    &AbuseScore {
                        value: 0.0,
                        hits,
                        token_count: tokens,
                    },
                    Threshold::DEFAULT,
                );
                assert!(v >= last);
                last = v;
            }
        }
    }

    #[test]
    fn manifest_registry_loads_bundled_files() {
        let manifest = Path::new(env!("CARGO_MANIFEST_DIR")).join("data/lexicons/manifest.json");
        let reg = LexiconRegistry::from_manifest(manifest).unwrap();
        assert_eq!(reg, LexiconRegistry::builtin());
        assert!(LexiconRegistry::from_manifest("/nonexistent/manifest.json").is_err());
    }

    #[test]
    fn builtin_lexicons_do_not_overlap() {
        let reg = LexiconRegistry::builtin();
        let all = [&reg.abusive, &reg.hate, &reg.positive, &reg.negative];
        for (i, a) in all.iter().enumerate() {
            for b in &all[i + 1..] {
                assert!(
                    a.entries().all(|e| !b.contains(e)),
                    "{} vs {}",
                    a.name,
                    b.name
                );
            }
        }
    }

    #[test]
    fn labeling_recovers_synthetic_labels_and_is_idempotent() {
        let cfg = SynthConfig {
            n_conversations: 400,
            flag_reply_rate: 0.2,
            ..Default::default()
        };
        let corpus = synth_corpus(&cfg, 11).unwrap();
        let reg = LexiconRegistry::builtin();
        let (labeled, report) = label_corpus(&corpus, &reg, Threshold::DEFAULT);
        assert_eq!(labeled, corpus);
        assert!(!report.flagged.is_empty());
        let (again, _) = label_corpus(&labeled, &reg, Threshold::DEFAULT);
        assert_eq!(again, labeled);
    }

    #[test]
    fn labeled_rate_matches_planted_rate() {
        let cfg = SynthConfig {
            n_conversations: 1000,
            ..Default::default()
        };
        let corpus = synth_corpus(&cfg, 5).unwrap();
        let (labeled, _) = label_corpus(&corpus, &LexiconRegistry::builtin(), Threshold::DEFAULT);
        let rate = labeled.iter().filter(|c| c.y() >= 1).count() as f64 / 1000.0;
        assert!((rate - 0.2).abs() < 0.04, "{rate}");
    }

    #[test]
    fn zero_hit_corpus_labels_neutral() {
        let cfg = SynthConfig {
            n_conversations: 100,
            abusive_conversation_rate: 0.0,
            ..Default::default()
        };
        let (labeled, report) = label_corpus(
            &synth_corpus(&cfg, 2).unwrap(),
            &LexiconRegistry::builtin(),
            Threshold::DEFAULT,
        );
        assert!(labeled.iter().all(|c| c.y() == 0));
        assert_eq!(report.abusive, 0);
        assert!(report.flagged.is_empty());
    }
}
