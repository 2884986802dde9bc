//! Feature families, bag-of-words vocabulary, standardization and the
//! assembly of masked feature vectors.
//!
//! Four families are extracted for every conversation:
//!
//! * **Te**: bag-of-words over the parent text plus sentiment ratios,
//!   named-entity and part-of-speech counts.
//! * **Mt**: meta-text counts (length, words, sentences, hashtags, ...).
//! * **Tw**: post attributes (hashtags, mentions, URLs, quote status, ...)
//!   and abusive/hate lexicon counts of the parent text.
//! * **Ac**: the author's account profile.
//!
//! Columns derived from replies or from engagement (retweets, favorites)
//! are [`Stage::PostHoc`]; they are never part of a [`Stage::PrePost`]
//! vector.

mod text;

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::corpus::{AccountProfile, Conversation, ParentTweet};
use crate::lexicons::{count_hits, LexiconRegistry};
use crate::textprep::TokenStream;

pub use text::{
    aux_text_features, meta_text_features, named_entity_count, sentiment_scores, HeuristicTagger,
    PosTag, PosTagger, TaggerInput, META_TEXT_WIDTH,
};

/// Default vocabulary cap.
pub const BOW_CAP: usize = 5000;

#[derive(Debug, Error, PartialEq)]
pub enum FeatureError {
    #[error("mask includes Te but no vocabulary was fitted")]
    MissingVocab,
    #[error("cannot fit a vocabulary on empty texts")]
    EmptyCorpus,
    #[error("need at least {needed} vectors, got {got}")]
    InsufficientData { needed: usize, got: usize },
    #[error("width mismatch: expected {expected}, got {got}")]
    WidthMismatch { expected: usize, got: usize },
    #[error("a feature mask needs at least one family")]
    EmptyMask,
    #[error("unknown feature family {0:?}")]
    UnknownFamily(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Te,
    Mt,
    Tw,
    Ac,
}

impl Family {
    pub const ALL: [Family; 4] = [Family::Te, Family::Mt, Family::Tw, Family::Ac];

    pub fn as_str(self) -> &'static str {
        match self {
            Family::Te => "te",
            Family::Mt => "mt",
            Family::Tw => "tw",
            Family::Ac => "ac",
        }
    }
}

impl FromStr for Family {
    type Err = FeatureError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "te" => Ok(Family::Te),
            "mt" => Ok(Family::Mt),
            "tw" => Ok(Family::Tw),
            "ac" => Ok(Family::Ac),
            other => Err(FeatureError::UnknownFamily(other.to_string())),
        }
    }
}

/// When a column can be computed: before posting (a draft) or only after.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Stage {
    #[serde(rename = "prepost")]
    PrePost,
    #[serde(rename = "posthoc")]
    PostHoc,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::PrePost => "prepost",
            Stage::PostHoc => "posthoc",
        }
    }

    /// Whether a column with this availability may be used at `stage`.
    pub fn available_at(self, stage: Stage) -> bool {
        self <= stage
    }
}

impl FromStr for Stage {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s
            .trim()
            .to_ascii_lowercase()
            .replace(['-', '_'], "")
            .as_str()
        {
            "prepost" => Ok(Stage::PrePost),
            "posthoc" => Ok(Stage::PostHoc),
            other => Err(format!(
                "unknown stage {other:?} (expected prepost or posthoc)"
            )),
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub name: String,
    pub family: Family,
    pub availability: Stage,
}

/// Which families go into a vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FeatureMask {
    pub te: bool,
    pub mt: bool,
    pub tw: bool,
    pub ac: bool,
}

impl FeatureMask {
    pub const fn new(te: bool, mt: bool, tw: bool, ac: bool) -> Self {
        Self { te, mt, tw, ac }
    }

    pub const ALL: FeatureMask = FeatureMask::new(true, true, true, true);

    /// The fifteen non-empty masks in ablation-table order: singles, pairs,
    /// triples, then everything.
    pub const TABLE_ROWS: [FeatureMask; 15] = [
        FeatureMask::new(true, false, false, false),
        FeatureMask::new(false, true, false, false),
        FeatureMask::new(false, false, true, false),
        FeatureMask::new(false, false, false, true),
        FeatureMask::new(true, true, false, false),
        FeatureMask::new(true, false, true, false),
        FeatureMask::new(true, false, false, true),
        FeatureMask::new(false, true, true, false),
        FeatureMask::new(false, true, false, true),
        FeatureMask::new(false, false, true, true),
        FeatureMask::new(true, true, true, false),
        FeatureMask::new(true, true, false, true),
        FeatureMask::new(true, false, true, true),
        FeatureMask::new(false, true, true, true),
        FeatureMask::new(true, true, true, true),
    ];

    pub fn includes(&self, family: Family) -> bool {
        match family {
            Family::Te => self.te,
            Family::Mt => self.mt,
            Family::Tw => self.tw,
            Family::Ac => self.ac,
        }
    }

    pub fn families(&self) -> impl Iterator<Item = Family> + '_ {
        Family::ALL.into_iter().filter(|f| self.includes(*f))
    }

    pub fn is_empty(&self) -> bool {
        !(self.te || self.mt || self.tw || self.ac)
    }

    pub fn only(family: Family) -> Self {
        let mut m = FeatureMask::new(false, false, false, false);
        match family {
            Family::Te => m.te = true,
            Family::Mt => m.mt = true,
            Family::Tw => m.tw = true,
            Family::Ac => m.ac = true,
        }
        m
    }

    /// 1-based row in [`Self::TABLE_ROWS`].
    pub fn table_row(&self) -> Option<usize> {
        Self::TABLE_ROWS
            .iter()
            .position(|m| m == self)
            .map(|i| i + 1)
    }
}

impl fmt::Display for FeatureMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<&str> = self.families().map(Family::as_str).collect();
        f.write_str(&names.join(","))
    }
}

impl FromStr for FeatureMask {
    type Err = FeatureError;

    /// Comma- or plus-separated family names, e.g. `mt,tw` or `all`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.trim().eq_ignore_ascii_case("all") {
            return Ok(FeatureMask::ALL);
        }
        let mut m = FeatureMask::new(false, false, false, false);
        for part in s.split([',', '+']).filter(|p| !p.trim().is_empty()) {
            match part.parse::<Family>()? {
                Family::Te => m.te = true,
                Family::Mt => m.mt = true,
                Family::Tw => m.tw = true,
                Family::Ac => m.ac = true,
            }
        }
        if m.is_empty() {
            return Err(FeatureError::EmptyMask);
        }
        Ok(m)
    }
}

const PRE: Stage = Stage::PrePost;
const POST: Stage = Stage::PostHoc;

const TE_COLUMNS: [(&str, Stage); 12] = [
    ("Parent_Negative Sentiment Score", PRE),
    ("Parent_Positive Sentiment Score", PRE),
    ("Parent_Neutral Sentiment Score", PRE),
    ("ParentNamed Entity Count", PRE),
    ("Parent #", PRE),
    ("Parent JJ - Adjective", PRE),
    ("Parent NNP - Proper Noun, Singular", PRE),
    ("Parent NN - Noun, Singular", PRE),
    ("DirectReply_Negative Sentiment Score", POST),
    ("DirectReply_Positive Sentiment Score", POST),
    ("DirectReply_Neutral Sentiment Score", POST),
    ("DirectReply_Named Entity Count", POST),
];

const MT_COLUMNS: [(&str, Stage); 24] = [
    ("length_parent_tweet", PRE),
    ("Parent_Word Count", PRE),
    ("Parent_Character Count", PRE),
    ("Parent_Sentence Count", PRE),
    ("Parent_Average Word Length", PRE),
    ("Parent_Stopword Count", PRE),
    ("Parent_Hashtag Count", PRE),
    ("Parent_Mention Count", PRE),
    ("Parent_URL Count", PRE),
    ("Parent_Capitalized Word Count", PRE),
    ("Parent_Punctuation Count", PRE),
    ("Parent_Average Sentence Length", PRE),
    ("length_direct_reply", POST),
    ("DirectReply_Word Count", POST),
    ("DirectReply_Character Count", POST),
    ("DirectReply_Sentence Count", POST),
    ("DirectReply_Average Word Length", POST),
    ("DirectReply_Stopword Count", POST),
    ("DirectReply_Hashtag Count", POST),
    ("DirectReply_Mention Count", POST),
    ("DirectReply_URL Count", POST),
    ("DirectReply_Capitalized Word Count", POST),
    ("DirectReply_Punctuation Count", POST),
    ("DirectReply_Average Sentence Length", POST),
];

const TW_COLUMNS: [(&str, Stage); 10] = [
    ("Parent tweet hashtags", PRE),
    ("Parent tweet symbols", PRE),
    ("Parent tweet user mentions", PRE),
    ("Parent tweet URLs", PRE),
    ("Parent quote status", PRE),
    ("Parent possibly sensitive", PRE),
    ("Parent tweet num retweets", POST),
    ("Parent tweet num favorites", POST),
    ("Parent abusive word count", PRE),
    ("Parent hate word count", PRE),
];

const AC_COLUMNS: [(&str, Stage); 17] = [
    ("friends_count", PRE),
    ("followers_count", PRE),
    ("listed_count", PRE),
    ("favourites_count", PRE),
    ("time_zone", PRE),
    ("geo_enabled", PRE),
    ("verified", PRE),
    ("statuses_count", PRE),
    ("contributors_enabled", PRE),
    ("is_translator", PRE),
    ("is_translation_enabled", PRE),
    ("has_extended_profile", PRE),
    ("default_profile", PRE),
    ("default_profile_image", PRE),
    ("following", PRE),
    ("follow_request_sent", PRE),
    ("notifications", PRE),
];

fn family_columns(family: Family) -> &'static [(&'static str, Stage)] {
    match family {
        Family::Te => &TE_COLUMNS,
        Family::Mt => &MT_COLUMNS,
        Family::Tw => &TW_COLUMNS,
        Family::Ac => &AC_COLUMNS,
    }
}

/// Dense schema entries selected by `mask` at `stage`, in assembly order.
pub fn dense_schema(mask: FeatureMask, stage: Stage) -> Vec<FeatureSchema> {
    mask.families()
        .flat_map(|family| {
            family_columns(family)
                .iter()
                .filter(move |(_, avail)| avail.available_at(stage))
                .map(move |(name, avail)| FeatureSchema {
                    name: name.to_string(),
                    family,
                    availability: *avail,
                })
        })
        .collect()
}

/// Full column list of a model input: BoW columns (when Te is selected)
/// followed by the dense schema.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FeatureManifest {
    pub entries: Vec<FeatureSchema>,
}

impl FeatureManifest {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn names(&self) -> Vec<String> {
        self.entries.iter().map(|e| e.name.clone()).collect()
    }

    pub fn digest(&self) -> String {
        let json = serde_json::to_vec(self).expect("serializable");
        hex::encode(Sha256::digest(json))
    }
}

/// Ranked bag-of-words vocabulary.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct BoWVocabulary {
    terms: Vec<String>,
    index: HashMap<String, usize>,
}

impl From<Vec<String>> for BoWVocabulary {
    fn from(terms: Vec<String>) -> Self {
        let index = terms
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Self { terms, index }
    }
}

impl From<BoWVocabulary> for Vec<String> {
    fn from(v: BoWVocabulary) -> Self {
        v.terms
    }
}

impl BoWVocabulary {
    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn column(&self, term: &str) -> Option<usize> {
        self.index.get(term).copied()
    }

    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.terms.join("\n").as_bytes()))
    }
}

/// Keep the `cap` most frequent terms, ordered by frequency (descending)
/// then lexicographically.
pub fn fit_bow<'a>(
    streams: impl IntoIterator<Item = &'a TokenStream>,
    cap: usize,
) -> Result<BoWVocabulary, FeatureError> {
    let mut freq: HashMap<&str, usize> = HashMap::new();
    for ts in streams {
        for t in ts.iter() {
            *freq.entry(t).or_default() += 1;
        }
    }
    if freq.is_empty() {
        return Err(FeatureError::EmptyCorpus);
    }
    let mut ranked: Vec<(&str, usize)> = freq.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    ranked.truncate(cap);
    Ok(BoWVocabulary::from(
        ranked
            .into_iter()
            .map(|(t, _)| t.to_string())
            .collect::<Vec<_>>(),
    ))
}

/// Sparse in-vocabulary counts; out-of-vocabulary tokens are ignored.
pub fn bow_vector(ts: &TokenStream, vocab: &BoWVocabulary) -> BTreeMap<usize, f64> {
    let mut out = BTreeMap::new();
    for t in ts.iter() {
        if let Some(col) = vocab.column(t) {
            *out.entry(col).or_insert(0.0) += 1.0;
        }
    }
    out
}

/// Every column of every family, for both stages, for one conversation.
/// Masked vectors are selections from this.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractedFeatures {
    pub tokens: TokenStream,
    pub te: Vec<f64>,
    pub mt: Vec<f64>,
    pub tw: Vec<f64>,
    pub ac: Vec<f64>,
}

impl ExtractedFeatures {
    fn family(&self, family: Family) -> &[f64] {
        match family {
            Family::Te => &self.te,
            Family::Mt => &self.mt,
            Family::Tw => &self.tw,
            Family::Ac => &self.ac,
        }
    }
}

pub fn tweet_features(
    p: &ParentTweet,
    parent_tokens: &TokenStream,
    registry: &LexiconRegistry,
    stage: Stage,
) -> Vec<f64> {
    let all = tweet_columns(p, parent_tokens, registry);
    select(&all, &TW_COLUMNS, stage)
}

fn tweet_columns(
    p: &ParentTweet,
    parent_tokens: &TokenStream,
    registry: &LexiconRegistry,
) -> Vec<f64> {
    let b = |v: bool| f64::from(u8::from(v));
    vec![
        p.hashtag_count as f64,
        p.symbol_count as f64,
        p.mention_count as f64,
        p.url_count as f64,
        b(p.is_quote_status),
        b(p.possibly_sensitive),
        p.num_retweets as f64,
        p.num_favorites as f64,
        count_hits(parent_tokens, &registry.abusive) as f64,
        count_hits(parent_tokens, &registry.hate) as f64,
    ]
}

/// The 17 account columns: counts as reals, booleans as 0/1, time zone as a
/// presence flag.
pub fn account_features(a: &AccountProfile) -> Vec<f64> {
    let b = |v: bool| f64::from(u8::from(v));
    vec![
        a.friends_count as f64,
        a.followers_count as f64,
        a.listed_count as f64,
        a.favourites_count as f64,
        b(a.time_zone.is_some()),
        b(a.geo_enabled),
        b(a.verified),
        a.statuses_count as f64,
        b(a.contributors_enabled),
        b(a.is_translator),
        b(a.is_translation_enabled),
        b(a.has_extended_profile),
        b(a.default_profile),
        b(a.default_profile_image),
        b(a.following),
        b(a.follow_request_sent),
        b(a.notifications),
    ]
}

fn select(values: &[f64], columns: &[(&str, Stage)], stage: Stage) -> Vec<f64> {
    values
        .iter()
        .zip(columns)
        .filter(|(_, (_, avail))| avail.available_at(stage))
        .map(|(v, _)| *v)
        .collect()
}

/// Extracts every family's columns using a lexicon registry and a tagger.
pub struct FeatureExtractor {
    registry: LexiconRegistry,
    tagger: Box<dyn PosTagger>,
}

impl fmt::Debug for FeatureExtractor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FeatureExtractor")
            .field("tagger", &self.tagger.name())
            .finish()
    }
}

impl FeatureExtractor {
    pub fn new(registry: LexiconRegistry) -> Self {
        let tagger = HeuristicTagger::new(registry.preprocessor.stopwords.clone());
        Self {
            registry,
            tagger: Box::new(tagger),
        }
    }

    pub fn with_tagger(registry: LexiconRegistry, tagger: Box<dyn PosTagger>) -> Self {
        Self { registry, tagger }
    }

    pub fn registry(&self) -> &LexiconRegistry {
        &self.registry
    }

    pub fn tagger_name(&self) -> &str {
        self.tagger.name()
    }

    /// Sentiment (3) and aux (4) columns of one text, plus its '#' count.
    fn text_block(&self, raw: &str, ts: &TokenStream) -> [f64; 8] {
        let (neg, pos, neu) = sentiment_scores(ts, &self.registry);
        let (ne, jj, nnp, nn) = aux_text_features(raw, self.tagger.as_ref());
        let hashes = raw.matches('#').count();
        [
            neg,
            pos,
            neu,
            ne as f64,
            hashes as f64,
            jj as f64,
            nnp as f64,
            nn as f64,
        ]
    }

    /// Columns computable from the parent post and account alone; reply
    /// columns are zero.
    pub fn extract_draft(
        &self,
        parent: &ParentTweet,
        account: &AccountProfile,
    ) -> ExtractedFeatures {
        let tokens = self.registry.preprocess(&parent.text);
        let mut te = self.text_block(&parent.text, &tokens).to_vec();
        te.extend([0.0; 4]);
        let mut mt =
            meta_text_features(&parent.text, &self.registry.preprocessor.stopwords).to_vec();
        mt.extend([0.0; META_TEXT_WIDTH]);
        let tw = tweet_columns(parent, &tokens, &self.registry);
        let ac = account_features(account);
        ExtractedFeatures {
            tokens,
            te,
            mt,
            tw,
            ac,
        }
    }

    /// All columns, including reply-derived ones (means over the direct
    /// replies).
    pub fn extract(&self, c: &Conversation) -> ExtractedFeatures {
        let mut f = self.extract_draft(&c.parent, &c.account);
        let n = c.replies().len() as f64;
        let mut reply_te = [0.0; 4];
        let mut reply_mt = [0.0; META_TEXT_WIDTH];
        for r in c.replies() {
            let ts = self.registry.preprocess(&r.text);
            let (neg, pos, neu) = sentiment_scores(&ts, &self.registry);
            let ne = named_entity_count(&r.text) as f64;
            for (acc, v) in reply_te.iter_mut().zip([neg, pos, neu, ne]) {
                *acc += v / n;
            }
            let meta = meta_text_features(&r.text, &self.registry.preprocessor.stopwords);
            for (acc, v) in reply_mt.iter_mut().zip(meta) {
                *acc += v / n;
            }
        }
        f.te[8..].copy_from_slice(&reply_te);
        f.mt[META_TEXT_WIDTH..].copy_from_slice(&reply_mt);
        f
    }
}

/// A masked feature vector: a dense block aligned to [`dense_schema`] and a
/// sparse BoW block keyed by vocabulary column (present only with Te).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub dense: Vec<f64>,
    pub bow: BTreeMap<usize, f64>,
    pub mask: FeatureMask,
}

impl FeatureVector {
    /// Model input row: BoW columns first, then the dense block.
    pub fn to_row(&self, bow_width: usize) -> Vec<f64> {
        let mut row = vec![0.0; bow_width + self.dense.len()];
        for (&col, &v) in &self.bow {
            if col < bow_width {
                row[col] = v;
            }
        }
        row[bow_width..].copy_from_slice(&self.dense);
        row
    }
}

/// A mask, a stage and (with Te) a fitted vocabulary: everything needed to
/// turn extracted features into vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureLayout {
    pub mask: FeatureMask,
    pub stage: Stage,
    pub vocab: Option<BoWVocabulary>,
}

impl FeatureLayout {
    pub fn new(
        mask: FeatureMask,
        stage: Stage,
        vocab: Option<BoWVocabulary>,
    ) -> Result<Self, FeatureError> {
        if mask.is_empty() {
            return Err(FeatureError::EmptyMask);
        }
        if mask.te && vocab.is_none() {
            return Err(FeatureError::MissingVocab);
        }
        let vocab = if mask.te { vocab } else { None };
        Ok(Self { mask, stage, vocab })
    }

    pub fn bow_width(&self) -> usize {
        self.vocab.as_ref().map_or(0, BoWVocabulary::len)
    }

    pub fn dense_schema(&self) -> Vec<FeatureSchema> {
        dense_schema(self.mask, self.stage)
    }

    pub fn dense_width(&self) -> usize {
        self.dense_schema().len()
    }

    pub fn width(&self) -> usize {
        self.bow_width() + self.dense_width()
    }

    pub fn manifest(&self) -> FeatureManifest {
        let mut entries: Vec<FeatureSchema> = self
            .vocab
            .iter()
            .flat_map(|v| v.terms())
            .map(|t| FeatureSchema {
                name: format!("bow:{t}"),
                family: Family::Te,
                availability: Stage::PrePost,
            })
            .collect();
        entries.extend(self.dense_schema());
        FeatureManifest { entries }
    }

    pub fn vector(&self, f: &ExtractedFeatures) -> FeatureVector {
        let mut dense = Vec::with_capacity(self.dense_width());
        for family in self.mask.families() {
            dense.extend(select(f.family(family), family_columns(family), self.stage));
        }
        let bow = self
            .vocab
            .as_ref()
            .map(|v| bow_vector(&f.tokens, v))
            .unwrap_or_default();
        FeatureVector {
            dense,
            bow,
            mask: self.mask,
        }
    }
}

/// Extract and assemble one conversation's vector.
pub fn assemble(
    c: &Conversation,
    mask: FeatureMask,
    stage: Stage,
    vocab: Option<&BoWVocabulary>,
    registry: &LexiconRegistry,
) -> Result<FeatureVector, FeatureError> {
    let layout = FeatureLayout::new(mask, stage, vocab.cloned())?;
    let extracted = FeatureExtractor::new(registry.clone()).extract(c);
    Ok(layout.vector(&extracted))
}

/// Per-column standardization of the dense block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalerState {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl ScalerState {
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        for v in self.mean.iter().chain(&self.std) {
            h.update(v.to_le_bytes());
        }
        hex::encode(h.finalize())
    }

    pub fn width(&self) -> usize {
        self.mean.len()
    }
}

/// Fit on training vectors: mean and population standard deviation.
pub fn fit_scaler(train: &[FeatureVector]) -> Result<ScalerState, FeatureError> {
    if train.len() < 2 {
        return Err(FeatureError::InsufficientData {
            needed: 2,
            got: train.len(),
        });
    }
    let width = train[0].dense.len();
    if let Some(bad) = train.iter().find(|v| v.dense.len() != width) {
        return Err(FeatureError::WidthMismatch {
            expected: width,
            got: bad.dense.len(),
        });
    }
    let n = train.len() as f64;
    let mut mean = vec![0.0; width];
    for v in train {
        for (m, x) in mean.iter_mut().zip(&v.dense) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; width];
    for v in train {
        for ((s, x), m) in var.iter_mut().zip(&v.dense).zip(&mean) {
            *s += (x - m) * (x - m);
        }
    }
    let std = var
        .into_iter()
        .zip(&mean)
        .map(|(s, m)| {
            let sd = (s / n).sqrt();
            // Rounding noise on a constant column is not spread.
            if sd <= 1e-12 * m.abs().max(1.0) {
                0.0
            } else {
                sd
            }
        })
        .collect();
    Ok(ScalerState { mean, std })
}

/// Standardize the dense block; zero-spread columns map to 0. The BoW
/// block is left as is.
pub fn apply_scaler(v: &FeatureVector, s: &ScalerState) -> Result<FeatureVector, FeatureError> {
    if v.dense.len() != s.width() {
        return Err(FeatureError::WidthMismatch {
            expected: s.width(),
            got: v.dense.len(),
        });
    }
    let dense = v
        .dense
        .iter()
        .zip(s.mean.iter().zip(&s.std))
        .map(|(x, (m, sd))| if *sd == 0.0 { 0.0 } else { (x - m) / sd })
        .collect();
    Ok(FeatureVector {
        dense,
        bow: v.bow.clone(),
        mask: v.mask,
    })
}
