//! Regression tree ensembles: random forest, extra trees and AdaBoost.R2.

mod artifact;
mod boost;
mod forest;
mod tree;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use artifact::{
    artifact_id, ArtifactError, ModelArtifact, TrainingManifest, ARTIFACT_FORMAT_VERSION,
};
pub use boost::{fit_adaboost_r2, weighted_median, AdaBoostModel, AdaLoss};
pub use forest::{fit_extra_trees, fit_random_forest, ForestModel};
pub use tree::{fit_tree, midpoint, Matrix, SplitMode, TreeNode, TreeParams, TIE_TOLERANCE};

#[derive(Debug, Error, PartialEq)]
pub enum EnsembleError {
    #[error("no training data")]
    EmptyData,
    #[error("need at least {needed} rows, got {got}")]
    TooFewRows { needed: usize, got: usize },
    #[error("width mismatch: model expects {expected} features, got {got}")]
    WidthMismatch { expected: usize, got: usize },
    #[error("{rows} rows but {targets} targets")]
    LengthMismatch { rows: usize, targets: usize },
    #[error("feature manifest digest {got} does not match the model's {expected}")]
    ManifestMismatch { expected: String, got: String },
    #[error("non-finite value in row {row}")]
    NonFinite { row: usize },
    #[error("invalid hyperparameters: {0}")]
    Config(String),
}

/// How many features each split considers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MaxFeatures {
    All,
    Third,
    Sqrt,
}

impl MaxFeatures {
    pub fn count(self, d: usize) -> usize {
        let k = match self {
            MaxFeatures::All => d,
            MaxFeatures::Third => d / 3,
            MaxFeatures::Sqrt => (d as f64).sqrt().floor() as usize,
        };
        k.max(1)
    }
}

impl FromStr for MaxFeatures {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "all" => Ok(MaxFeatures::All),
            "third" => Ok(MaxFeatures::Third),
            "sqrt" => Ok(MaxFeatures::Sqrt),
            other => Err(format!("unknown max_features rule {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ModelKind {
    #[serde(rename = "rfr")]
    RandomForest,
    #[serde(rename = "ar")]
    AdaBoostR2,
    #[serde(rename = "etr")]
    ExtraTrees,
}

impl ModelKind {
    /// Table column order.
    pub const ALL: [ModelKind; 3] = [
        ModelKind::RandomForest,
        ModelKind::AdaBoostR2,
        ModelKind::ExtraTrees,
    ];

    pub fn short_name(self) -> &'static str {
        match self {
            ModelKind::RandomForest => "rfr",
            ModelKind::AdaBoostR2 => "ar",
            ModelKind::ExtraTrees => "etr",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short_name())
    }
}

impl FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s
            .trim()
            .to_ascii_lowercase()
            .replace(['-', '_', '.'], "")
            .as_str()
        {
            "rfr" | "rf" | "randomforest" | "randomforestregressor" => Ok(ModelKind::RandomForest),
            "ar" | "ada" | "adaboost" | "adaboostr2" | "adaboostregressor" => {
                Ok(ModelKind::AdaBoostR2)
            }
            "etr" | "et" | "extratrees" | "extratreesregressor" => Ok(ModelKind::ExtraTrees),
            _ => Err(format!("unknown model {s:?} (expected rfr, ar or etr)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    /// Trees in a forest, or boosting rounds.
    pub n_trees: usize,
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
    pub max_features: MaxFeatures,
    pub bootstrap: bool,
    pub seed: u64,
    #[serde(default)]
    pub loss: AdaLoss,
}

impl HyperParams {
    pub fn defaults(kind: ModelKind) -> Self {
        match kind {
            ModelKind::RandomForest => Self {
                n_trees: 300,
                max_depth: None,
                min_samples_leaf: 1,
                max_features: MaxFeatures::Third,
                bootstrap: true,
                seed: 0,
                loss: AdaLoss::Linear,
            },
            ModelKind::ExtraTrees => Self {
                n_trees: 300,
                max_depth: None,
                min_samples_leaf: 1,
                max_features: MaxFeatures::All,
                bootstrap: false,
                seed: 0,
                loss: AdaLoss::Linear,
            },
            ModelKind::AdaBoostR2 => Self {
                n_trees: 50,
                max_depth: Some(3),
                min_samples_leaf: 1,
                max_features: MaxFeatures::All,
                bootstrap: false,
                seed: 0,
                loss: AdaLoss::Linear,
            },
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_trees(mut self, n: usize) -> Self {
        self.n_trees = n;
        self
    }

    pub fn validate(&self) -> Result<(), EnsembleError> {
        if self.n_trees == 0 {
            return Err(EnsembleError::Config("n_trees must be at least 1".into()));
        }
        if self.min_samples_leaf == 0 {
            return Err(EnsembleError::Config(
                "min_samples_leaf must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// A trained model of any kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Model {
    Forest(ForestModel),
    AdaBoost(AdaBoostModel),
}

impl Model {
    pub fn kind(&self) -> ModelKind {
        match self {
            Model::Forest(f) => f.kind,
            Model::AdaBoost(_) => ModelKind::AdaBoostR2,
        }
    }

    pub fn n_features(&self) -> usize {
        match self {
            Model::Forest(f) => f.n_features,
            Model::AdaBoost(a) => a.n_features,
        }
    }

    pub fn params(&self) -> &HyperParams {
        match self {
            Model::Forest(f) => &f.params,
            Model::AdaBoost(a) => &a.params,
        }
    }

    pub fn feature_manifest_hash(&self) -> &str {
        match self {
            Model::Forest(f) => &f.feature_manifest_hash,
            Model::AdaBoost(a) => &a.feature_manifest_hash,
        }
    }

    pub fn trees(&self) -> &[TreeNode] {
        match self {
            Model::Forest(f) => &f.trees,
            Model::AdaBoost(a) => &a.estimators,
        }
    }

    pub fn as_forest(&self) -> Option<&ForestModel> {
        match self {
            Model::Forest(f) => Some(f),
            Model::AdaBoost(_) => None,
        }
    }

    fn raw(&self, x: &[f64]) -> f64 {
        match self {
            Model::Forest(f) => f.predict_unchecked(x),
            Model::AdaBoost(a) => a.predict_unchecked(x),
        }
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64, EnsembleError> {
        if x.len() != self.n_features() {
            return Err(EnsembleError::WidthMismatch {
                expected: self.n_features(),
                got: x.len(),
            });
        }
        Ok(self.raw(x))
    }

    /// Like [`Self::predict`], also requiring the caller's feature manifest
    /// digest to match the one the model was trained with.
    pub fn predict_checked(&self, x: &[f64], manifest_digest: &str) -> Result<f64, EnsembleError> {
        if manifest_digest != self.feature_manifest_hash() {
            return Err(EnsembleError::ManifestMismatch {
                expected: self.feature_manifest_hash().to_string(),
                got: manifest_digest.to_string(),
            });
        }
        self.predict(x)
    }

    pub fn predict_batch(&self, rows: &[Vec<f64>]) -> Result<Vec<f64>, EnsembleError> {
        rows.iter().map(|r| self.predict(r)).collect()
    }
}

/// Train `kind` on rows `x` with targets `y`.
pub fn fit_model(
    kind: ModelKind,
    x: &Matrix,
    y: &[f64],
    params: &HyperParams,
    feature_manifest_hash: &str,
) -> Result<Model, EnsembleError> {
    let mut m = match kind {
        ModelKind::RandomForest => Model::Forest(fit_random_forest(x, y, params)?),
        ModelKind::ExtraTrees => Model::Forest(fit_extra_trees(x, y, params)?),
        ModelKind::AdaBoostR2 => Model::AdaBoost(fit_adaboost_r2(x, y, params)?),
    };
    match &mut m {
        Model::Forest(f) => f.feature_manifest_hash = feature_manifest_hash.to_string(),
        Model::AdaBoost(a) => a.feature_manifest_hash = feature_manifest_hash.to_string(),
    }
    Ok(m)
}

/// Independent RNG stream `stream` of `seed`.
pub(crate) fn stream_rng(seed: u64, stream: u64) -> rand_chacha::ChaCha8Rng {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[cfg(test)]
mod tests {
    use super::*;

    fn leaf(v: f64) -> TreeNode {
        TreeNode::Leaf {
            value: v,
            n: 1,
            cover: 1.0,
        }
    }

    #[test]
    fn forest_of_leaves_averages() {
        let m = Model::Forest(ForestModel {
            kind: ModelKind::RandomForest,
            trees: vec![leaf(2.0), leaf(4.0)],
            params: HyperParams::defaults(ModelKind::RandomForest),
            feature_manifest_hash: "h".into(),
            n_features: 0,
        });
        assert_eq!(m.predict(&[]).unwrap(), 3.0);
        assert_eq!(
            m.predict(&[1.0]),
            Err(EnsembleError::WidthMismatch {
                expected: 0,
                got: 1
            })
        );
        assert!(matches!(
            m.predict_checked(&[], "other"),
            Err(EnsembleError::ManifestMismatch { .. })
        ));
        assert_eq!(m.predict_checked(&[], "h").unwrap(), 3.0);
    }

    #[test]
    fn width_mismatch_on_empty_row() {
        let m = Model::AdaBoost(AdaBoostModel {
            estimators: vec![leaf(1.0)],
            betas: vec![0.5],
            params: HyperParams::defaults(ModelKind::AdaBoostR2),
            feature_manifest_hash: String::new(),
            n_features: 3,
        });
        assert!(matches!(
            m.predict(&[]),
            Err(EnsembleError::WidthMismatch { .. })
        ));
    }

    #[test]
    fn model_names() {
        for k in ModelKind::ALL {
            assert_eq!(k.short_name().parse::<ModelKind>().unwrap(), k);
        }
        assert_eq!(
            "ExtraTrees".parse::<ModelKind>().unwrap(),
            ModelKind::ExtraTrees
        );
        assert!("svm".parse::<ModelKind>().is_err());
    }

    #[test]
    fn max_features_counts() {
        assert_eq!(MaxFeatures::All.count(10), 10);
        assert_eq!(MaxFeatures::Third.count(10), 3);
        assert_eq!(MaxFeatures::Third.count(2), 1);
        assert_eq!(MaxFeatures::Sqrt.count(10), 3);
    }
}
