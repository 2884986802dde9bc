//! Conversations, their ingestion from JSON Lines / CSV files, and a seeded
//! synthetic generator.

mod ingest;
mod synth;

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use ingest::{
    load_corpus, load_corpus_with_report, to_jsonl_string, write_jsonl, Format, IngestReport,
    IngestWarning,
};
pub use synth::{synth_corpus, SignalWeights, SynthConfig};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("line {line}: parse error: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: schema error in field `{field}`: {message}")]
    Schema {
        line: usize,
        field: String,
        message: String,
    },
    #[error("conversation {conversation}: reply {reply} is unlabeled")]
    Unlabeled { conversation: String, reply: String },
    #[error("conversation {0} has no replies")]
    NoReplies(String),
    #[error("conversation {0}: label count does not match reply count")]
    LabelCount(String),
    #[error("duplicate conversation id {0}")]
    DuplicateId(String),
    #[error("invalid synth config: {0}")]
    Config(String),
}

/// Label attached to a direct reply by the lexicon labeler.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum ReplyLabel {
    #[serde(rename = "abusive")]
    Abusive,
    #[serde(rename = "neutral")]
    Neutral,
    #[serde(rename = "flag")]
    FlagManual,
    #[default]
    #[serde(rename = "unlabeled")]
    Unlabeled,
}

impl ReplyLabel {
    /// The file-format spelling; `None` for unlabeled replies, which omit
    /// the field.
    pub fn as_str(self) -> Option<&'static str> {
        match self {
            ReplyLabel::Abusive => Some("abusive"),
            ReplyLabel::Neutral => Some("neutral"),
            ReplyLabel::FlagManual => Some("flag"),
            ReplyLabel::Unlabeled => None,
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "abusive" => Some(ReplyLabel::Abusive),
            "neutral" => Some(ReplyLabel::Neutral),
            "flag" => Some(ReplyLabel::FlagManual),
            "" | "unlabeled" => Some(ReplyLabel::Unlabeled),
            _ => None,
        }
    }

    pub fn is_unlabeled(&self) -> bool {
        *self == ReplyLabel::Unlabeled
    }
}

/// Account metadata of the parent author. Missing fields default to zero,
/// false or absent.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct AccountProfile {
    pub friends_count: u64,
    pub followers_count: u64,
    pub listed_count: u64,
    pub favourites_count: u64,
    pub statuses_count: u64,
    pub geo_enabled: bool,
    pub verified: bool,
    pub contributors_enabled: bool,
    pub is_translator: bool,
    pub is_translation_enabled: bool,
    pub has_extended_profile: bool,
    pub default_profile: bool,
    pub default_profile_image: bool,
    pub following: bool,
    pub follow_request_sent: bool,
    pub notifications: bool,
    pub time_zone: Option<String>,
}

impl AccountProfile {
    pub const COUNT_FIELDS: [&'static str; 5] = [
        "friends_count",
        "followers_count",
        "listed_count",
        "favourites_count",
        "statuses_count",
    ];
    pub const BOOL_FIELDS: [&'static str; 11] = [
        "geo_enabled",
        "verified",
        "contributors_enabled",
        "is_translator",
        "is_translation_enabled",
        "has_extended_profile",
        "default_profile",
        "default_profile_image",
        "following",
        "follow_request_sent",
        "notifications",
    ];

    pub(crate) fn count_mut(&mut self, field: &str) -> Option<&mut u64> {
        Some(match field {
            "friends_count" => &mut self.friends_count,
            "followers_count" => &mut self.followers_count,
            "listed_count" => &mut self.listed_count,
            "favourites_count" => &mut self.favourites_count,
            "statuses_count" => &mut self.statuses_count,
            _ => return None,
        })
    }

    pub(crate) fn flag_mut(&mut self, field: &str) -> Option<&mut bool> {
        Some(match field {
            "geo_enabled" => &mut self.geo_enabled,
            "verified" => &mut self.verified,
            "contributors_enabled" => &mut self.contributors_enabled,
            "is_translator" => &mut self.is_translator,
            "is_translation_enabled" => &mut self.is_translation_enabled,
            "has_extended_profile" => &mut self.has_extended_profile,
            "default_profile" => &mut self.default_profile,
            "default_profile_image" => &mut self.default_profile_image,
            "following" => &mut self.following,
            "follow_request_sent" => &mut self.follow_request_sent,
            "notifications" => &mut self.notifications,
            _ => return None,
        })
    }
}

/// The post whose replies are being forecast. `num_retweets` and
/// `num_favorites` only exist after posting.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ParentTweet {
    pub id: String,
    pub text: String,
    pub hashtag_count: u64,
    pub symbol_count: u64,
    pub mention_count: u64,
    pub url_count: u64,
    pub is_quote_status: bool,
    pub possibly_sensitive: bool,
    pub num_retweets: u64,
    pub num_favorites: u64,
}

impl ParentTweet {
    pub const COUNT_FIELDS: [&'static str; 6] = [
        "hashtag_count",
        "symbol_count",
        "mention_count",
        "url_count",
        "num_retweets",
        "num_favorites",
    ];
    pub const BOOL_FIELDS: [&'static str; 2] = ["is_quote_status", "possibly_sensitive"];

    /// A draft: text only, with hashtag/mention/URL counts derived from it.
    pub fn draft(text: &str) -> Self {
        let mut p = ParentTweet {
            id: "draft".into(),
            text: text.to_string(),
            ..Default::default()
        };
        for word in text.split_whitespace() {
            if word.starts_with('#') && word.len() > 1 {
                p.hashtag_count += 1;
            } else if word.starts_with('@') && word.len() > 1 {
                p.mention_count += 1;
            } else if word.starts_with('$')
                && word[1..]
                    .chars()
                    .next()
                    .is_some_and(|c| c.is_ascii_alphabetic())
            {
                p.symbol_count += 1;
            }
            if is_url(word) {
                p.url_count += 1;
            }
        }
        p
    }

    pub(crate) fn count_mut(&mut self, field: &str) -> Option<&mut u64> {
        Some(match field {
            "hashtag_count" => &mut self.hashtag_count,
            "symbol_count" => &mut self.symbol_count,
            "mention_count" => &mut self.mention_count,
            "url_count" => &mut self.url_count,
            "num_retweets" => &mut self.num_retweets,
            "num_favorites" => &mut self.num_favorites,
            _ => return None,
        })
    }

    pub(crate) fn flag_mut(&mut self, field: &str) -> Option<&mut bool> {
        Some(match field {
            "is_quote_status" => &mut self.is_quote_status,
            "possibly_sensitive" => &mut self.possibly_sensitive,
            _ => return None,
        })
    }
}

pub(crate) fn is_url(word: &str) -> bool {
    let w = word.to_ascii_lowercase();
    w.starts_with("http://") || w.starts_with("https://") || w.starts_with("www.")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reply {
    pub id: String,
    pub text: String,
    #[serde(default)]
    pub label: ReplyLabel,
}

impl Reply {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            text: text.into(),
            label: ReplyLabel::Unlabeled,
        }
    }

    pub fn labeled(id: impl Into<String>, text: impl Into<String>, label: ReplyLabel) -> Self {
        Self {
            id: id.into(),
            text: text.into(),
            label,
        }
    }
}

/// A parent post, its author's profile and its direct replies.
///
/// `y`, the number of abusive replies, is derived from the reply labels and
/// kept in sync by every constructor and mutator.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Conversation {
    pub parent: ParentTweet,
    pub account: AccountProfile,
    replies: Vec<Reply>,
    y: usize,
}

impl Conversation {
    pub fn new(
        parent: ParentTweet,
        account: AccountProfile,
        replies: Vec<Reply>,
    ) -> Result<Self, CorpusError> {
        if replies.is_empty() {
            return Err(CorpusError::NoReplies(parent.id));
        }
        let y = count_abusive(&replies);
        Ok(Self {
            parent,
            account,
            replies,
            y,
        })
    }

    pub fn id(&self) -> &str {
        &self.parent.id
    }

    pub fn replies(&self) -> &[Reply] {
        &self.replies
    }

    /// Number of abusive direct replies.
    pub fn y(&self) -> usize {
        self.y
    }

    pub fn neutral_count(&self) -> usize {
        self.replies
            .iter()
            .filter(|r| r.label == ReplyLabel::Neutral)
            .count()
    }

    pub fn is_fully_labeled(&self) -> bool {
        self.replies.iter().all(|r| !r.label.is_unlabeled())
    }

    /// Replace every reply label, recomputing `y`.
    pub fn set_labels(&mut self, labels: &[ReplyLabel]) -> Result<(), CorpusError> {
        if labels.len() != self.replies.len() {
            return Err(CorpusError::LabelCount(self.parent.id.clone()));
        }
        for (reply, label) in self.replies.iter_mut().zip(labels) {
            reply.label = *label;
        }
        self.y = count_abusive(&self.replies);
        Ok(())
    }
}

fn count_abusive(replies: &[Reply]) -> usize {
    replies
        .iter()
        .filter(|r| r.label == ReplyLabel::Abusive)
        .count()
}

/// Count of abusive replies, refusing to answer while any reply is
/// still unlabeled.
pub fn abuse_volume(c: &Conversation) -> Result<usize, CorpusError> {
    if let Some(r) = c.replies.iter().find(|r| r.label.is_unlabeled()) {
        return Err(CorpusError::Unlabeled {
            conversation: c.id().to_string(),
            reply: r.id.clone(),
        });
    }
    Ok(c.y)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Ingested,
    Synthetic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    conversations: Vec<Conversation>,
    pub provenance: Provenance,
    pub seed: Option<u64>,
}

impl Corpus {
    pub fn new(
        conversations: Vec<Conversation>,
        provenance: Provenance,
        seed: Option<u64>,
    ) -> Result<Self, CorpusError> {
        let mut seen = HashSet::with_capacity(conversations.len());
        for c in &conversations {
            if !seen.insert(c.id()) {
                return Err(CorpusError::DuplicateId(c.id().to_string()));
            }
        }
        Ok(Self {
            conversations,
            provenance,
            seed,
        })
    }

    pub fn conversations(&self) -> &[Conversation] {
        &self.conversations
    }

    pub fn len(&self) -> usize {
        self.conversations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.conversations.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Conversation> {
        self.conversations.iter()
    }

    /// Targets as reals, in corpus order.
    pub fn targets(&self) -> Vec<f64> {
        self.conversations.iter().map(|c| c.y() as f64).collect()
    }

    /// Mutable access for relabeling; ids cannot be changed through it.
    pub fn for_each_mut(&mut self, mut f: impl FnMut(&mut Conversation)) {
        for c in &mut self.conversations {
            let id = c.parent.id.clone();
            f(c);
            c.parent.id = id;
        }
    }

    /// Keep the conversations at the given positions, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Corpus {
        Corpus {
            conversations: indices
                .iter()
                .map(|&i| self.conversations[i].clone())
                .collect(),
            provenance: self.provenance,
            seed: self.seed,
        }
    }
}
