use rand::distributions::{Distribution, WeightedIndex};
use serde::{Deserialize, Serialize};

use super::tree::{fit_tree, Matrix, SplitMode, TreeNode, TreeParams};
use super::{stream_rng, EnsembleError, HyperParams};

/// Per-sample loss shape, applied to |error| / max |error|.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AdaLoss {
    #[default]
    Linear,
    Square,
    Exponential,
}

impl AdaLoss {
    fn apply(self, r: f64) -> f64 {
        match self {
            AdaLoss::Linear => r,
            AdaLoss::Square => r * r,
            AdaLoss::Exponential => 1.0 - (-r).exp(),
        }
    }
}

/// Smallest β kept, so a perfect round gets a large but finite weight.
const MIN_BETA: f64 = 1e-10;
/// Largest β kept for a first round whose average loss reaches 0.5.
const MAX_BETA: f64 = 1.0 - 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaBoostModel {
    pub estimators: Vec<TreeNode>,
    pub betas: Vec<f64>,
    pub params: HyperParams,
    pub feature_manifest_hash: String,
    pub n_features: usize,
}

impl AdaBoostModel {
    pub fn estimator_weights(&self) -> Vec<f64> {
        self.betas.iter().map(|b| (1.0 / b).ln()).collect()
    }

    /// Weighted median of the estimator outputs under ln(1/β).
    pub fn predict_unchecked(&self, x: &[f64]) -> f64 {
        let preds: Vec<f64> = self.estimators.iter().map(|t| t.predict(x)).collect();
        weighted_median(&preds, &self.estimator_weights())
    }
}

/// First value, in ascending order, at which the cumulative weight reaches
/// half the total.
pub fn weighted_median(values: &[f64], weights: &[f64]) -> f64 {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    let total: f64 = weights.iter().sum();
    let mut acc = 0.0;
    for &i in &order {
        acc += weights[i];
        if acc >= 0.5 * total {
            return values[i];
        }
    }
    values[order[order.len() - 1]]
}

/// AdaBoost.R2 with depth-limited trees fit on weight-proportional
/// resamples.
///
/// A round with zero average loss ends boosting and is kept with β clamped
/// to a tiny positive value. A round with average loss ≥ 0.5 ends boosting
/// and is dropped, unless it is the first, in which case it is kept with β
/// just below 1.
pub fn fit_adaboost_r2(
    x: &Matrix,
    y: &[f64],
    params: &HyperParams,
) -> Result<AdaBoostModel, EnsembleError> {
    params.validate()?;
    let n = x.n_rows();
    if n == 0 {
        return Err(EnsembleError::EmptyData);
    }
    if n < 2 {
        return Err(EnsembleError::TooFewRows { needed: 2, got: n });
    }
    if y.len() != n {
        return Err(EnsembleError::LengthMismatch {
            rows: n,
            targets: y.len(),
        });
    }
    let tree_params = TreeParams {
        max_depth: params.max_depth,
        min_samples_leaf: params.min_samples_leaf,
        max_features: params.max_features,
        mode: SplitMode::Best,
    };
    let mut w = vec![1.0 / n as f64; n];
    let mut estimators = Vec::new();
    let mut betas = Vec::new();
    for round in 0..params.n_trees {
        let mut rng = stream_rng(params.seed, round as u64);
        let dist = WeightedIndex::new(&w).map_err(|e| EnsembleError::Config(e.to_string()))?;
        let mut counts = vec![0.0; n];
        for _ in 0..n {
            counts[dist.sample(&mut rng)] += 1.0;
        }
        let tree = fit_tree(x, y, &tree_params, &mut rng, Some(&counts))?;
        let err: Vec<f64> = (0..n)
            .map(|i| (tree.predict_row(x, i) - y[i]).abs())
            .collect();
        let max_err = err.iter().cloned().fold(0.0, f64::max);
        let loss: Vec<f64> = err
            .iter()
            .map(|e| {
                if max_err > 0.0 {
                    params.loss.apply(e / max_err)
                } else {
                    0.0
                }
            })
            .collect();
        let avg: f64 = w.iter().zip(&loss).map(|(a, b)| a * b).sum();
        if avg <= 0.0 {
            estimators.push(tree);
            betas.push(MIN_BETA);
            break;
        }
        if avg >= 0.5 {
            if estimators.is_empty() {
                estimators.push(tree);
                betas.push((avg / (1.0 - avg)).min(MAX_BETA));
            }
            break;
        }
        let beta = (avg / (1.0 - avg)).max(MIN_BETA);
        for (wi, li) in w.iter_mut().zip(&loss) {
            *wi *= beta.powf(1.0 - li);
        }
        let total: f64 = w.iter().sum();
        w.iter_mut().for_each(|wi| *wi /= total);
        estimators.push(tree);
        betas.push(beta);
    }
    Ok(AdaBoostModel {
        estimators,
        betas,
        params: params.clone(),
        feature_manifest_hash: String::new(),
        n_features: x.n_cols(),
    })
}
