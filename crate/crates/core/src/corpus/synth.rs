//! Seeded synthetic corpora with a planted feature-target dependence.
//!
//! Each parent post gets a handful of latent counts (abusive terms, hashtags,
//! mentions, filler words). A noisy linear score of those counts is ranked,
//! and the top `abusive_conversation_rate` share of conversations receive
//! `1 + floor((score - cutoff) / abuse_step)` abusive replies. Account
//! profiles are drawn independently of everything else, so account features
//! carry no signal. Reply texts are built from lexicon terms and filler words
//! so that the lexicon labeler recovers exactly the generated labels.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{
    AccountProfile, Conversation, Corpus, CorpusError, ParentTweet, Provenance, Reply, ReplyLabel,
};
use crate::lexicons::{builtin_terms, LexiconKind};

/// Weights of the planted score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SignalWeights {
    /// Per abusive or hate term in the parent text.
    pub abusive_terms: f64,
    pub hashtags: f64,
    pub mentions: f64,
    /// Per ten filler words.
    pub word_count: f64,
}

impl Default for SignalWeights {
    fn default() -> Self {
        Self {
            abusive_terms: 1.0,
            hashtags: 0.6,
            mentions: 0.4,
            word_count: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_conversations: usize,
    /// Share of conversations with at least one abusive reply.
    pub abusive_conversation_rate: f64,
    /// Account pool size; defaults to the dataset's accounts-per-conversation
    /// ratio (about one account per 45 conversations).
    pub n_accounts: Option<usize>,
    /// Success probability of the geometric number of extra neutral replies.
    pub neutral_reply_p: f64,
    /// Score units per additional abusive reply above the cutoff.
    pub abuse_step: f64,
    /// Standard deviation of the Gaussian noise added to the planted score.
    pub noise_sd: f64,
    /// Probability that a conversation also gets one reply sitting exactly at
    /// the labeling threshold.
    pub flag_reply_rate: f64,
    pub weights: SignalWeights,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_conversations: 1000,
            abusive_conversation_rate: 0.20,
            n_accounts: None,
            neutral_reply_p: 0.45,
            abuse_step: 0.6,
            noise_sd: 0.3,
            flag_reply_rate: 0.0,
            weights: SignalWeights::default(),
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), CorpusError> {
        let rates = [
            ("abusive_conversation_rate", self.abusive_conversation_rate),
            ("neutral_reply_p", self.neutral_reply_p),
            ("flag_reply_rate", self.flag_reply_rate),
        ];
        for (name, r) in rates {
            if !(0.0..=1.0).contains(&r) {
                return Err(CorpusError::Config(format!(
                    "{name} = {r} is outside [0, 1]"
                )));
            }
        }
        if self.neutral_reply_p <= 0.0 {
            return Err(CorpusError::Config(
                "neutral_reply_p must be positive".into(),
            ));
        }
        if self.n_conversations == 0 || self.n_accounts == Some(0) {
            return Err(CorpusError::Config("sizes must be at least 1".into()));
        }
        if self.abuse_step.is_nan()
            || self.abuse_step <= 0.0
            || self.noise_sd.is_nan()
            || self.noise_sd < 0.0
        {
            return Err(CorpusError::Config(
                "abuse_step must be > 0 and noise_sd >= 0".into(),
            ));
        }
        Ok(())
    }

    fn account_pool_size(&self) -> usize {
        self.n_accounts
            .unwrap_or_else(|| (self.n_conversations * 2367).div_ceil(106_914))
            .max(1)
    }
}

pub(crate) const FILLER_WORDS: &[&str] = &[
    "council",
    "weather",
    "market",
    "coffee",
    "project",
    "weekend",
    "museum",
    "garden",
    "traffic",
    "budget",
    "station",
    "library",
    "concert",
    "report",
    "meeting",
    "policy",
    "morning",
    "season",
    "window",
    "kitchen",
    "river",
    "bridge",
    "village",
    "planet",
    "engine",
    "ticket",
    "camera",
    "journal",
    "harbor",
    "festival",
    "schedule",
    "review",
    "design",
    "lecture",
    "election",
    "debate",
    "training",
    "science",
    "music",
    "podcast",
    "airport",
    "stadium",
    "housing",
    "energy",
    "climate",
    "school",
    "hospital",
    "vaccine",
    "economy",
    "football",
    "discussed",
    "announced",
    "shared",
    "visited",
    "reviewed",
    "opened",
    "planned",
    "watched",
    "covered",
    "launched",
    "described",
    "explained",
    "released",
    "posted",
    "started",
];
pub(crate) const HASHTAG_WORDS: &[&str] = &[
    "news", "politics", "sports", "tech", "health", "travel", "food", "books", "art", "cinema",
    "gaming", "fashion", "finance", "weather", "local",
];
pub(crate) const MENTION_HANDLES: &[&str] = &[
    "city_desk",
    "news_team",
    "daily_post",
    "mayor_office",
    "sports_hub",
    "tech_digest",
    "health_watch",
    "local_radio",
];
pub(crate) const NAMES: &[&str] = &[
    "Alice", "Marcus", "Priya", "Jonas", "Elena", "Tomas", "Sofia", "Daniel", "London", "Paris",
    "Berlin", "Lagos", "Toronto", "Sydney",
];
const TIME_ZONES: &[&str] = &[
    "UTC",
    "London",
    "Eastern Time (US & Canada)",
    "Pacific Time (US & Canada)",
    "Sydney",
];

struct Pools {
    abusive: Vec<&'static str>,
    abusive_single: Vec<&'static str>,
    hate: Vec<&'static str>,
    negative: Vec<&'static str>,
    positive: Vec<&'static str>,
}

impl Pools {
    fn new() -> Self {
        let abusive = builtin_terms(LexiconKind::Abusive);
        let abusive_single = abusive
            .iter()
            .copied()
            .filter(|t| !t.contains(' '))
            .collect();
        Self {
            abusive,
            abusive_single,
            hate: builtin_terms(LexiconKind::Hate),
            negative: builtin_terms(LexiconKind::Negative),
            positive: builtin_terms(LexiconKind::Positive),
        }
    }
}

fn geometric(rng: &mut ChaCha8Rng, p: f64, cap: usize) -> usize {
    let mut k = 0;
    while k < cap && rng.gen::<f64>() >= p {
        k += 1;
    }
    k
}

fn pick<'a>(rng: &mut ChaCha8Rng, pool: &[&'a str]) -> &'a str {
    pool.choose(rng).copied().expect("non-empty pool")
}

/// Latent draws for one parent post.
struct ParentPlan {
    abusive_terms: Vec<&'static str>,
    filler: usize,
    hashtags: usize,
    mentions: usize,
    score: f64,
}

fn random_account(rng: &mut ChaCha8Rng) -> AccountProfile {
    let mut heavy = |max_log: f64| rng.gen_range(0.0..max_log).exp().floor() as u64;
    let friends_count = heavy(9.0);
    let followers_count = heavy(13.0);
    let listed_count = heavy(7.0);
    let favourites_count = heavy(11.0);
    let statuses_count = heavy(12.0);
    AccountProfile {
        friends_count,
        followers_count,
        listed_count,
        favourites_count,
        statuses_count,
        geo_enabled: rng.gen_bool(0.3),
        verified: rng.gen_bool(0.2),
        contributors_enabled: rng.gen_bool(0.02),
        is_translator: rng.gen_bool(0.02),
        is_translation_enabled: rng.gen_bool(0.1),
        has_extended_profile: rng.gen_bool(0.5),
        default_profile: rng.gen_bool(0.4),
        default_profile_image: rng.gen_bool(0.05),
        following: rng.gen_bool(0.1),
        follow_request_sent: rng.gen_bool(0.02),
        notifications: rng.gen_bool(0.1),
        time_zone: rng.gen_bool(0.6).then(|| pick(rng, TIME_ZONES).to_string()),
    }
}

fn capitalize(word: &str) -> String {
    let mut chars = word.chars();
    match chars.next() {
        Some(c) => c.to_ascii_uppercase().to_string() + chars.as_str(),
        None => String::new(),
    }
}

/// Shuffle the words and cut them into short punctuated sentences.
fn sentences(rng: &mut ChaCha8Rng, mut words: Vec<String>) -> String {
    words.shuffle(rng);
    let mut out = Vec::new();
    let mut rest = &words[..];
    while !rest.is_empty() {
        let len = rng.gen_range(4..=7).min(rest.len());
        let (head, tail) = rest.split_at(len);
        let mut sentence = head.to_vec();
        sentence[0] = capitalize(&sentence[0]);
        let end = *[".", ".", "!", "?"].choose(rng).expect("non-empty");
        out.push(sentence.join(" ") + end);
        rest = tail;
    }
    out.join(" ")
}

fn filler(rng: &mut ChaCha8Rng, n: usize) -> Vec<String> {
    (0..n)
        .map(|_| pick(rng, FILLER_WORDS).to_string())
        .collect()
}

pub fn synth_corpus(config: &SynthConfig, seed: u64) -> Result<Corpus, CorpusError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pools = Pools::new();
    let noise = Normal::new(0.0, config.noise_sd.max(f64::MIN_POSITIVE))
        .map_err(|e| CorpusError::Config(e.to_string()))?;
    let w = &config.weights;

    let accounts: Vec<AccountProfile> = (0..config.account_pool_size())
        .map(|_| random_account(&mut rng))
        .collect();

    let n = config.n_conversations;
    let plans: Vec<ParentPlan> = (0..n)
        .map(|_| {
            let n_abusive = geometric(&mut rng, 0.5, 6);
            let abusive_terms = (0..n_abusive)
                .map(|_| {
                    if rng.gen_bool(0.8) {
                        pick(&mut rng, &pools.abusive)
                    } else {
                        pick(&mut rng, &pools.hate)
                    }
                })
                .collect();
            let filler = rng.gen_range(4..=14);
            let hashtags = geometric(&mut rng, 0.5, 5);
            let mentions = geometric(&mut rng, 0.6, 4);
            let eps = if config.noise_sd > 0.0 {
                noise.sample(&mut rng)
            } else {
                0.0
            };
            let score = w.abusive_terms * n_abusive as f64
                + w.hashtags * hashtags as f64
                + w.mentions * mentions as f64
                + w.word_count * filler as f64 / 10.0
                + eps;
            ParentPlan {
                abusive_terms,
                filler,
                hashtags,
                mentions,
                score,
            }
        })
        .collect();

    // Rank by score; the top share receives abuse.
    let n_abused = (config.abusive_conversation_rate * n as f64).round() as usize;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| plans[b].score.total_cmp(&plans[a].score).then(a.cmp(&b)));
    let mut targets = vec![0usize; n];
    if n_abused > 0 {
        let cutoff = plans[order[n_abused - 1]].score;
        for &i in &order[..n_abused] {
            targets[i] = 1 + ((plans[i].score - cutoff) / config.abuse_step).floor() as usize;
        }
    }

    let mut conversations = Vec::with_capacity(n);
    for (i, plan) in plans.iter().enumerate() {
        let id = format!("c{i:06}");
        let y = targets[i];

        // Negative wording tracks the abusive terms and takes the place of
        // filler; positive wording is noise.
        let n_negative = plan.abusive_terms.len() + usize::from(rng.gen_bool(0.3));
        let mut words = filler(&mut rng, plan.filler.saturating_sub(n_negative).max(2));
        words.extend(plan.abusive_terms.iter().map(|t| t.to_string()));
        words.extend((0..n_negative).map(|_| pick(&mut rng, &pools.negative).to_string()));
        let n_positive = (0..3).filter(|_| rng.gen_bool(0.3)).count();
        words.extend((0..n_positive).map(|_| pick(&mut rng, &pools.positive).to_string()));
        let n_names = rng.gen_range(0..=2);
        words.extend((0..n_names).map(|_| pick(&mut rng, NAMES).to_string()));
        let mut text = sentences(&mut rng, words);

        let url_count = u64::from(rng.gen_bool(0.3));
        let symbol_count = u64::from(rng.gen_bool(0.05));
        let mut tail: Vec<String> = Vec::new();
        tail.extend((0..plan.hashtags).map(|_| format!("#{}", pick(&mut rng, HASHTAG_WORDS))));
        tail.extend((0..plan.mentions).map(|_| format!("@{}", pick(&mut rng, MENTION_HANDLES))));
        if url_count > 0 {
            tail.push(format!(
                "https://example.org/post{}",
                rng.gen_range(100..999)
            ));
        }
        if symbol_count > 0 {
            tail.push("$ACME".to_string());
        }
        if !tail.is_empty() {
            text.push(' ');
            text.push_str(&tail.join(" "));
        }

        let parent = ParentTweet {
            id: id.clone(),
            text,
            hashtag_count: plan.hashtags as u64,
            symbol_count,
            mention_count: plan.mentions as u64,
            url_count,
            is_quote_status: rng.gen_bool(0.15),
            possibly_sensitive: rng.gen_bool(0.05),
            num_retweets: (2 * y + geometric(&mut rng, 0.3, 50)) as u64,
            num_favorites: (3 * y + geometric(&mut rng, 0.2, 80)) as u64,
        };

        let mut n_neutral = geometric(&mut rng, config.neutral_reply_p, 60);
        if y == 0 && n_neutral == 0 {
            n_neutral = 1;
        }
        let mut replies: Vec<Reply> = Vec::with_capacity(y + n_neutral + 1);
        for _ in 0..y {
            let n_filler = rng.gen_range(3..=6);
            let mut words = filler(&mut rng, n_filler);
            for _ in 0..2 {
                let term = if rng.gen_bool(0.8) {
                    pick(&mut rng, &pools.abusive)
                } else {
                    pick(&mut rng, &pools.hate)
                };
                words.push(term.to_string());
            }
            replies.push(Reply::labeled(
                "",
                sentences(&mut rng, words),
                ReplyLabel::Abusive,
            ));
        }
        for _ in 0..n_neutral {
            let n_filler = rng.gen_range(3..=8);
            let mut words = filler(&mut rng, n_filler);
            if rng.gen_bool(0.3) {
                words.push(pick(&mut rng, &pools.positive).to_string());
            }
            replies.push(Reply::labeled(
                "",
                sentences(&mut rng, words),
                ReplyLabel::Neutral,
            ));
        }
        if config.flag_reply_rate > 0.0 && rng.gen_bool(config.flag_reply_rate) {
            // One hit in ten tokens: exactly at the 0.1 threshold.
            let mut words = filler(&mut rng, 9);
            words.push(pick(&mut rng, &pools.abusive_single).to_string());
            replies.push(Reply::labeled(
                "",
                sentences(&mut rng, words),
                ReplyLabel::FlagManual,
            ));
        }
        replies.shuffle(&mut rng);
        for (j, r) in replies.iter_mut().enumerate() {
            r.id = format!("{id}-r{j}");
        }

        let account = accounts[rng.gen_range(0..accounts.len())].clone();
        conversations.push(Conversation::new(parent, account, replies)?);
    }
    Corpus::new(conversations, Provenance::Synthetic, Some(seed))
}
