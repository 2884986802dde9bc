use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{fit_tree, Matrix, SplitMode, TreeNode, TreeParams};
use super::{stream_rng, EnsembleError, HyperParams, ModelKind};

/// Averaging ensemble of regression trees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub kind: ModelKind,
    pub trees: Vec<TreeNode>,
    pub params: HyperParams,
    pub feature_manifest_hash: String,
    pub n_features: usize,
}

impl ForestModel {
    /// Mean of the per-tree predictions; the caller checks the width.
    pub fn predict_unchecked(&self, x: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.predict(x)).sum::<f64>() / self.trees.len() as f64
    }
}

fn fit_forest(
    kind: ModelKind,
    mode: SplitMode,
    x: &Matrix,
    y: &[f64],
    params: &HyperParams,
) -> Result<ForestModel, EnsembleError> {
    params.validate()?;
    if x.n_rows() == 0 {
        return Err(EnsembleError::EmptyData);
    }
    if x.n_rows() < 2 {
        return Err(EnsembleError::TooFewRows {
            needed: 2,
            got: x.n_rows(),
        });
    }
    if y.len() != x.n_rows() {
        return Err(EnsembleError::LengthMismatch {
            rows: x.n_rows(),
            targets: y.len(),
        });
    }
    let tree_params = TreeParams {
        max_depth: params.max_depth,
        min_samples_leaf: params.min_samples_leaf,
        max_features: params.max_features,
        mode,
    };
    let n = x.n_rows();
    let trees = (0..params.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = stream_rng(params.seed, t as u64);
            let weights = params.bootstrap.then(|| {
                let mut counts = vec![0.0; n];
                for _ in 0..n {
                    counts[rng.gen_range(0..n)] += 1.0;
                }
                counts
            });
            fit_tree(x, y, &tree_params, &mut rng, weights.as_deref())
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ForestModel {
        kind,
        trees,
        params: params.clone(),
        feature_manifest_hash: String::new(),
        n_features: x.n_cols(),
    })
}

/// Bootstrap resampling plus best-split search on a random feature subset
/// at each node.
pub fn fit_random_forest(
    x: &Matrix,
    y: &[f64],
    params: &HyperParams,
) -> Result<ForestModel, EnsembleError> {
    fit_forest(ModelKind::RandomForest, SplitMode::Best, x, y, params)
}

/// Random thresholds per candidate feature. Uses the full sample per tree
/// unless `params.bootstrap` is set.
pub fn fit_extra_trees(
    x: &Matrix,
    y: &[f64],
    params: &HyperParams,
) -> Result<ForestModel, EnsembleError> {
    fit_forest(ModelKind::ExtraTrees, SplitMode::Random, x, y, params)
}
