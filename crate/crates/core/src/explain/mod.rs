//! Attribution and corpus analytics: Shapley values for forests, feature
//! importance rankings, Pearson correlations and top parent words.

mod shap;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Corpus;
use crate::features::{dense_schema, Family, FeatureExtractor, FeatureMask, Stage};

pub use shap::{
    brute_force_shapley, shap_attribute, Attribution, TreeExplainer, MAX_BRUTE_FORCE_WIDTH,
};

#[derive(Debug, Error, PartialEq)]
pub enum ExplainError {
    #[error("attribution is only supported for forest models, not {0}")]
    Unsupported(String),
    #[error("width mismatch: expected {expected}, got {got}")]
    WidthMismatch { expected: usize, got: usize },
    #[error("background set is empty")]
    EmptyBackground,
    #[error("brute-force Shapley supports at most {max} features, got {width}")]
    TooWide { width: usize, max: usize },
    #[error("series has zero variance")]
    ZeroVariance,
    #[error("series lengths differ or are shorter than 2: {0} vs {1}")]
    Length(usize, usize),
    #[error("nothing to rank: sample is empty")]
    EmptySample,
}

/// Features ordered by mean |attribution|, with the raw per-sample values
/// kept for beeswarm plots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceRanking {
    pub ranking: Vec<(String, f64)>,
    pub feature_names: Vec<String>,
    pub samples: Vec<Vec<f64>>,
    pub attributions: Vec<Attribution>,
}

impl ImportanceRanking {
    /// Rows of (feature, sample index, attribution, feature value).
    pub fn beeswarm_rows(&self) -> Vec<(String, usize, f64, f64)> {
        let mut out = Vec::new();
        for (name, _) in &self.ranking {
            let j = self
                .feature_names
                .iter()
                .position(|n| n == name)
                .expect("ranked feature exists");
            for (s, (a, x)) in self.attributions.iter().zip(&self.samples).enumerate() {
                out.push((name.clone(), s, a.values[j], x[j]));
            }
        }
        out
    }

    pub fn rank_of(&self, name: &str) -> Option<usize> {
        self.ranking.iter().position(|(n, _)| n == name)
    }
}

pub fn importance_ranking(
    explainer: &TreeExplainer,
    sample: &[Vec<f64>],
    feature_names: &[String],
) -> Result<ImportanceRanking, ExplainError> {
    if sample.is_empty() {
        return Err(ExplainError::EmptySample);
    }
    let attributions = sample
        .iter()
        .map(|x| explainer.attribute(x))
        .collect::<Result<Vec<_>, _>>()?;
    if feature_names.len() != attributions[0].values.len() {
        return Err(ExplainError::WidthMismatch {
            expected: attributions[0].values.len(),
            got: feature_names.len(),
        });
    }
    let n = sample.len() as f64;
    let mut ranking: Vec<(String, f64)> = feature_names
        .iter()
        .enumerate()
        .map(|(j, name)| {
            (
                name.clone(),
                attributions.iter().map(|a| a.values[j].abs()).sum::<f64>() / n,
            )
        })
        .collect();
    ranking.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    Ok(ImportanceRanking {
        ranking,
        feature_names: feature_names.to_vec(),
        samples: sample.to_vec(),
        attributions,
    })
}

/// Sample Pearson correlation coefficient.
pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64, ExplainError> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(ExplainError::Length(a.len(), b.len()));
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(ExplainError::ZeroVariance);
    }
    Ok((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrelationTarget {
    AbusiveReplyCount,
    NeutralReplyCount,
}

impl CorrelationTarget {
    pub const ALL: [CorrelationTarget; 2] = [
        CorrelationTarget::AbusiveReplyCount,
        CorrelationTarget::NeutralReplyCount,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            CorrelationTarget::AbusiveReplyCount => "abusive_reply_count",
            CorrelationTarget::NeutralReplyCount => "neutral_reply_count",
        }
    }
}

/// Pearson cells of features (rows) against targets (columns). `None`
/// marks an undefined cell (a constant series).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationMatrix {
    pub features: Vec<String>,
    pub targets: Vec<String>,
    pub cells: Vec<Vec<Option<f64>>>,
}

impl CorrelationMatrix {
    pub fn cell(&self, feature: &str, target: &str) -> Option<f64> {
        let i = self.features.iter().position(|f| f == feature)?;
        let j = self.targets.iter().position(|t| t == target)?;
        self.cells[i][j]
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("feature,{}\n", self.targets.join(","));
        for (name, row) in self.features.iter().zip(&self.cells) {
            let cells: Vec<String> = row
                .iter()
                .map(|c| c.map_or(String::new(), |v| format!("{v:.6}")))
                .collect();
            out.push_str(&format!(
                "\"{}\",{}\n",
                name.replace('"', "\"\""),
                cells.join(",")
            ));
        }
        out
    }
}

pub fn correlation_cells(
    features: &[(String, Vec<f64>)],
    targets: &[(String, Vec<f64>)],
) -> CorrelationMatrix {
    let cells = features
        .iter()
        .map(|(_, f)| targets.iter().map(|(_, t)| pearson(f, t).ok()).collect())
        .collect();
    CorrelationMatrix {
        features: features.iter().map(|(n, _)| n.clone()).collect(),
        targets: targets.iter().map(|(n, _)| n.clone()).collect(),
        cells,
    }
}

/// Raw (unscaled) pre-post columns of one family against reply counts.
pub fn correlation_matrix(
    corpus: &Corpus,
    family: Family,
    targets: &[CorrelationTarget],
    extractor: &FeatureExtractor,
) -> CorrelationMatrix {
    let schema = dense_schema(FeatureMask::only(family), Stage::PrePost);
    let layout = crate::features::FeatureLayout {
        mask: FeatureMask::only(family),
        stage: Stage::PrePost,
        vocab: None,
    };
    let rows: Vec<Vec<f64>> = corpus
        .iter()
        .map(|c| {
            layout
                .vector(&extractor.extract_draft(&c.parent, &c.account))
                .dense
        })
        .collect();
    let features: Vec<(String, Vec<f64>)> = schema
        .iter()
        .enumerate()
        .map(|(j, s)| (s.name.clone(), rows.iter().map(|r| r[j]).collect()))
        .collect();
    let targets: Vec<(String, Vec<f64>)> = targets
        .iter()
        .map(|t| {
            let v = corpus
                .iter()
                .map(|c| match t {
                    CorrelationTarget::AbusiveReplyCount => c.y() as f64,
                    CorrelationTarget::NeutralReplyCount => c.neutral_count() as f64,
                })
                .collect();
            (t.as_str().to_string(), v)
        })
        .collect();
    correlation_cells(&features, &targets)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WordClass {
    WithAbusiveReplies,
    NeutralOnly,
}

/// Most frequent preprocessed parent tokens among conversations of a class;
/// ties are broken lexicographically.
pub fn top_words(
    corpus: &Corpus,
    class: WordClass,
    n: usize,
    extractor: &FeatureExtractor,
) -> Vec<(String, usize)> {
    let mut freq: HashMap<String, usize> = HashMap::new();
    for c in corpus.iter() {
        let abusive = c.y() >= 1;
        if abusive != (class == WordClass::WithAbusiveReplies) {
            continue;
        }
        for t in extractor.registry().preprocess(&c.parent.text).tokens {
            *freq.entry(t).or_default() += 1;
        }
    }
    let mut ranked: Vec<(String, usize)> = freq.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked.truncate(n);
    ranked
}
