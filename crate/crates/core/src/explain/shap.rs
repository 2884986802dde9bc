//! Path-dependent Shapley attribution for tree forests.
//!
//! Node covers come from routing the background set through each tree, so
//! the attribution base value is the mean background prediction. A node no
//! background row reaches falls back to its training covers.

use serde::{Deserialize, Serialize};

use super::ExplainError;
use crate::ensembles::{ForestModel, Model, TreeNode};

/// Per-feature Shapley values of one prediction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attribution {
    pub values: Vec<f64>,
    pub base_value: f64,
    pub prediction: f64,
}

impl Attribution {
    /// `base_value + Σ values − prediction`.
    pub fn efficiency_gap(&self) -> f64 {
        self.base_value + self.values.iter().sum::<f64>() - self.prediction
    }

    /// Column indices by descending |value|, ties by index.
    pub fn top(&self, n: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.values.len()).collect();
        idx.sort_by(|&a, &b| {
            self.values[b]
                .abs()
                .total_cmp(&self.values[a].abs())
                .then(a.cmp(&b))
        });
        idx.truncate(n);
        idx
    }
}

const LEAF: usize = usize::MAX;

#[derive(Debug, Clone)]
struct FlatNode {
    feature: usize,
    threshold: f64,
    left: usize,
    right: usize,
    value: f64,
    train_cover: f64,
    cover: f64,
}

/// A tree flattened into an arena with background covers.
#[derive(Debug, Clone)]
struct FlatTree {
    nodes: Vec<FlatNode>,
}

impl FlatTree {
    fn new(tree: &TreeNode, background: &[Vec<f64>]) -> Self {
        let mut nodes = Vec::new();
        flatten(tree, &mut nodes);
        for row in background {
            let mut i = 0;
            loop {
                nodes[i].cover += 1.0;
                let n = &nodes[i];
                if n.feature == LEAF {
                    break;
                }
                i = if row[n.feature] <= n.threshold {
                    n.left
                } else {
                    n.right
                };
            }
        }
        Self { nodes }
    }

    fn goes_left(&self, i: usize, x: &[f64]) -> bool {
        x[self.nodes[i].feature] <= self.nodes[i].threshold
    }

    /// Fraction of `parent`'s mass that flows to `child`.
    fn ratio(&self, parent: usize, child: usize) -> f64 {
        let (p, c) = (&self.nodes[parent], &self.nodes[child]);
        if p.cover > 0.0 {
            c.cover / p.cover
        } else {
            c.train_cover / p.train_cover
        }
    }

    fn predict(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        while self.nodes[i].feature != LEAF {
            i = if self.goes_left(i, x) {
                self.nodes[i].left
            } else {
                self.nodes[i].right
            };
        }
        self.nodes[i].value
    }

    /// Cover-weighted expectation with features in `known` fixed to `x`.
    fn expected(&self, i: usize, x: &[f64], known: &dyn Fn(usize) -> bool) -> f64 {
        let n = &self.nodes[i];
        if n.feature == LEAF {
            return n.value;
        }
        if known(n.feature) {
            let next = if self.goes_left(i, x) {
                n.left
            } else {
                n.right
            };
            return self.expected(next, x, known);
        }
        self.ratio(i, n.left) * self.expected(n.left, x, known)
            + self.ratio(i, n.right) * self.expected(n.right, x, known)
    }
}

fn flatten(t: &TreeNode, nodes: &mut Vec<FlatNode>) -> usize {
    let id = nodes.len();
    match t {
        TreeNode::Leaf { value, cover, .. } => nodes.push(FlatNode {
            feature: LEAF,
            threshold: 0.0,
            left: LEAF,
            right: LEAF,
            value: *value,
            train_cover: *cover,
            cover: 0.0,
        }),
        TreeNode::Split {
            feature,
            threshold,
            cover,
            left,
            right,
        } => {
            nodes.push(FlatNode {
                feature: *feature,
                threshold: *threshold,
                left: LEAF,
                right: LEAF,
                value: 0.0,
                train_cover: *cover,
                cover: 0.0,
            });
            let l = flatten(left, nodes);
            let r = flatten(right, nodes);
            nodes[id].left = l;
            nodes[id].right = r;
        }
    }
    id
}

/// One feature's contribution along a root-to-leaf path: the product of
/// cover ratios (feature unknown) and of path indicators (feature known).
#[derive(Debug, Clone, Copy)]
struct PathFactor {
    feature: usize,
    zero: f64,
    one: f64,
}

/// Shapley weights k!(d−k−1)!/d! for k = 0..d.
fn shapley_weights(d: usize) -> Vec<f64> {
    let mut w = vec![0.0; d];
    if d == 0 {
        return w;
    }
    w[0] = 1.0 / d as f64;
    for k in 0..d - 1 {
        w[k + 1] = w[k] * (k + 1) as f64 / (d - k - 1) as f64;
    }
    w
}

fn leaf_contribution(path: &[PathFactor], value: f64, phi: &mut [f64]) {
    let d = path.len();
    if d == 0 || path.iter().any(|p| p.zero == 0.0 && p.one == 0.0) {
        return;
    }
    // poly[k]: coefficient of t^k in Π (zero + one·t).
    let mut poly = vec![0.0; d + 1];
    poly[0] = 1.0;
    for (m, p) in path.iter().enumerate() {
        for k in (0..=m + 1).rev() {
            let carry = if k > 0 { poly[k - 1] * p.one } else { 0.0 };
            poly[k] = poly[k] * p.zero + carry;
        }
    }
    let weights = shapley_weights(d);
    let mut q = vec![0.0; d];
    for p in path {
        if p.one == 0.0 {
            for k in 0..d {
                q[k] = poly[k] / p.zero;
            }
        } else {
            // Divide by (zero + t), highest power first.
            q[d - 1] = poly[d];
            for k in (1..d).rev() {
                q[k - 1] = poly[k] - p.zero * q[k];
            }
        }
        let s: f64 = q.iter().zip(&weights).map(|(a, b)| a * b).sum();
        phi[p.feature] += value * (p.one - p.zero) * s;
    }
}

fn tree_shap(tree: &FlatTree, i: usize, x: &[f64], path: &mut Vec<PathFactor>, phi: &mut [f64]) {
    let n = &tree.nodes[i];
    if n.feature == LEAF {
        leaf_contribution(path, n.value, phi);
        return;
    }
    let hot = if tree.goes_left(i, x) {
        n.left
    } else {
        n.right
    };
    for child in [n.left, n.right] {
        let zero = tree.ratio(i, child);
        let one = if child == hot { 1.0 } else { 0.0 };
        if let Some(pos) = path.iter().position(|p| p.feature == n.feature) {
            let saved = path[pos];
            path[pos].zero *= zero;
            path[pos].one *= one;
            tree_shap(tree, child, x, path, phi);
            path[pos] = saved;
        } else {
            path.push(PathFactor {
                feature: n.feature,
                zero,
                one,
            });
            tree_shap(tree, child, x, path, phi);
            path.pop();
        }
    }
}

/// A forest prepared for repeated attribution against one background set.
#[derive(Debug, Clone)]
pub struct TreeExplainer {
    trees: Vec<FlatTree>,
    n_features: usize,
    base_value: f64,
}

impl TreeExplainer {
    pub fn new(model: &Model, background: &[Vec<f64>]) -> Result<Self, ExplainError> {
        let forest = model
            .as_forest()
            .ok_or(ExplainError::Unsupported(model.kind().to_string()))?;
        Self::for_forest(forest, background)
    }

    pub fn for_forest(forest: &ForestModel, background: &[Vec<f64>]) -> Result<Self, ExplainError> {
        if background.is_empty() {
            return Err(ExplainError::EmptyBackground);
        }
        if let Some(r) = background.iter().find(|r| r.len() != forest.n_features) {
            return Err(ExplainError::WidthMismatch {
                expected: forest.n_features,
                got: r.len(),
            });
        }
        let trees: Vec<FlatTree> = forest
            .trees
            .iter()
            .map(|t| FlatTree::new(t, background))
            .collect();
        let base_value = background
            .iter()
            .map(|r| trees.iter().map(|t| t.predict(r)).sum::<f64>() / trees.len() as f64)
            .sum::<f64>()
            / background.len() as f64;
        Ok(Self {
            trees,
            n_features: forest.n_features,
            base_value,
        })
    }

    pub fn base_value(&self) -> f64 {
        self.base_value
    }

    fn check(&self, x: &[f64]) -> Result<(), ExplainError> {
        if x.len() != self.n_features {
            return Err(ExplainError::WidthMismatch {
                expected: self.n_features,
                got: x.len(),
            });
        }
        Ok(())
    }

    /// Per-tree attributions; the forest's is their mean.
    pub fn attribute_trees(&self, x: &[f64]) -> Result<Vec<Attribution>, ExplainError> {
        self.check(x)?;
        Ok(self
            .trees
            .iter()
            .map(|t| {
                let mut phi = vec![0.0; self.n_features];
                tree_shap(t, 0, x, &mut Vec::new(), &mut phi);
                Attribution {
                    values: phi,
                    base_value: t.expected(0, x, &|_| false),
                    prediction: t.predict(x),
                }
            })
            .collect())
    }

    pub fn attribute(&self, x: &[f64]) -> Result<Attribution, ExplainError> {
        self.check(x)?;
        let mut phi = vec![0.0; self.n_features];
        let mut path = Vec::new();
        let mut prediction = 0.0;
        for t in &self.trees {
            tree_shap(t, 0, x, &mut path, &mut phi);
            prediction += t.predict(x);
        }
        let k = self.trees.len() as f64;
        phi.iter_mut().for_each(|v| *v /= k);
        Ok(Attribution {
            values: phi,
            base_value: self.base_value,
            prediction: prediction / k,
        })
    }

    /// Brute-force Shapley values over every coalition of the same
    /// cover-weighted value function. Exponential in the width.
    pub fn brute_force(&self, x: &[f64]) -> Result<Attribution, ExplainError> {
        self.check(x)?;
        let m = self.n_features;
        if m > MAX_BRUTE_FORCE_WIDTH {
            return Err(ExplainError::TooWide {
                width: m,
                max: MAX_BRUTE_FORCE_WIDTH,
            });
        }
        let k = self.trees.len() as f64;
        let value = |mask: usize| -> f64 {
            self.trees
                .iter()
                .map(|t| t.expected(0, x, &|f| mask & (1 << f) != 0))
                .sum::<f64>()
                / k
        };
        let v: Vec<f64> = (0..1usize << m).map(value).collect();
        let mut fact = vec![1.0f64; m + 1];
        for i in 1..=m {
            fact[i] = fact[i - 1] * i as f64;
        }
        let mut phi = vec![0.0; m];
        for (i, p) in phi.iter_mut().enumerate() {
            for s in 0..1usize << m {
                if s & (1 << i) != 0 {
                    continue;
                }
                let size = s.count_ones() as usize;
                let w = fact[size] * fact[m - size - 1] / fact[m];
                *p += w * (v[s | (1 << i)] - v[s]);
            }
        }
        Ok(Attribution {
            values: phi,
            base_value: v[0],
            prediction: v[(1 << m) - 1],
        })
    }
}

pub const MAX_BRUTE_FORCE_WIDTH: usize = 12;

/// Fast path-dependent attribution of a forest prediction.
pub fn shap_attribute(
    model: &Model,
    x: &[f64],
    background: &[Vec<f64>],
) -> Result<Attribution, ExplainError> {
    TreeExplainer::new(model, background)?.attribute(x)
}

/// Exact Shapley values by coalition enumeration (width ≤ 12).
pub fn brute_force_shapley(
    model: &Model,
    x: &[f64],
    background: &[Vec<f64>],
) -> Result<Attribution, ExplainError> {
    if x.len() > MAX_BRUTE_FORCE_WIDTH {
        return Err(ExplainError::TooWide {
            width: x.len(),
            max: MAX_BRUTE_FORCE_WIDTH,
        });
    }
    TreeExplainer::new(model, background)?.brute_force(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensembles::{fit_extra_trees, fit_random_forest, HyperParams, Matrix, ModelKind};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn split(feature: usize, threshold: f64, left: TreeNode, right: TreeNode) -> TreeNode {
        let cover = left.cover() + right.cover();
        TreeNode::Split {
            feature,
            threshold,
            cover,
            left: Box::new(left),
            right: Box::new(right),
        }
    }

    fn leaf(value: f64, cover: f64) -> TreeNode {
        TreeNode::Leaf {
            value,
            n: cover as usize,
            cover,
        }
    }

    fn forest(trees: Vec<TreeNode>, n_features: usize) -> Model {
        Model::Forest(ForestModel {
            kind: ModelKind::RandomForest,
            trees,
            params: HyperParams::defaults(ModelKind::RandomForest),
            feature_manifest_hash: String::new(),
            n_features,
        })
    }

    #[test]
    fn single_feature_gets_everything() {
        let m = forest(vec![split(0, 0.5, leaf(1.0, 2.0), leaf(5.0, 2.0))], 1);
        let bg = vec![vec![0.0], vec![1.0], vec![1.0], vec![1.0]];
        let a = shap_attribute(&m, &[0.0], &bg).unwrap();
        assert_eq!(a.base_value, 4.0);
        assert_eq!(a.prediction, 1.0);
        assert!((a.values[0] - (a.prediction - a.base_value)).abs() < 1e-12);
    }

    #[test]
    fn unused_feature_gets_zero() {
        let m = forest(
            vec![split(
                1,
                0.0,
                leaf(1.0, 1.0),
                split(1, 2.0, leaf(2.0, 1.0), leaf(3.0, 1.0)),
            )],
            3,
        );
        let bg = vec![
            vec![0.0, -1.0, 0.0],
            vec![0.0, 1.0, 0.0],
            vec![0.0, 3.0, 0.0],
        ];
        let a = shap_attribute(&m, &[9.0, 2.5, -4.0], &bg).unwrap();
        assert_eq!(a.values[0], 0.0);
        assert_eq!(a.values[2], 0.0);
        assert!(a.efficiency_gap().abs() < 1e-12);
    }

    #[test]
    fn depth_two_matches_brute_force() {
        let t = split(
            0,
            0.5,
            split(1, 0.5, leaf(1.0, 1.0), leaf(2.0, 1.0)),
            split(1, 1.5, leaf(4.0, 1.0), leaf(8.0, 1.0)),
        );
        let m = forest(vec![t], 2);
        let bg = vec![
            vec![0.0, 0.0],
            vec![0.0, 1.0],
            vec![1.0, 1.0],
            vec![1.0, 2.0],
            vec![1.0, 2.0],
        ];
        for x in [[0.0, 0.0], [1.0, 2.0], [0.0, 5.0], [3.0, 1.0]] {
            let fast = shap_attribute(&m, &x, &bg).unwrap();
            let slow = brute_force_shapley(&m, &x, &bg).unwrap();
            for (a, b) in fast.values.iter().zip(&slow.values) {
                assert!((a - b).abs() < 1e-12);
            }
            assert!((fast.base_value - slow.base_value).abs() < 1e-12);
        }
    }

    #[test]
    fn uncovered_nodes_fall_back_to_training_covers() {
        let t = split(
            0,
            0.5,
            leaf(1.0, 3.0),
            split(1, 0.5, leaf(2.0, 1.0), leaf(6.0, 3.0)),
        );
        let m = forest(vec![t], 2);
        let bg = vec![vec![0.0, 0.0]];
        let x = [1.0, 1.0];
        let fast = shap_attribute(&m, &x, &bg).unwrap();
        let slow = brute_force_shapley(&m, &x, &bg).unwrap();
        assert_eq!(fast.base_value, 1.0);
        for (a, b) in fast.values.iter().zip(&slow.values) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(fast.efficiency_gap().abs() < 1e-12);
    }

    #[test]
    fn symmetric_duplicates_share_equally() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let rows: Vec<Vec<f64>> = (0..60)
            .map(|_| {
                let v = rng.gen_range(0.0..1.0);
                vec![v, v]
            })
            .collect();
        let y: Vec<f64> = rows.iter().map(|r| (r[0] > 0.5) as u8 as f64).collect();
        let x = Matrix::from_rows(&rows).unwrap();
        let p = HyperParams {
            max_depth: Some(1),
            ..HyperParams::defaults(ModelKind::ExtraTrees).with_trees(1)
        };
        let f = fit_extra_trees(&x, &y, &p).unwrap();
        // A single split on one copy: swap the feature into a mirrored
        // tree so both copies are used symmetrically.
        let mut mirrored = f.trees[0].clone();
        if let TreeNode::Split { feature, .. } = &mut mirrored {
            *feature = 1 - *feature;
        }
        let m = forest(vec![f.trees[0].clone(), mirrored], 2);
        let a = brute_force_shapley(&m, &[0.9, 0.9], &rows).unwrap();
        assert!((a.values[0] - a.values[1]).abs() < 1e-12);
    }

    #[test]
    fn constant_model_zero_attribution() {
        let m = forest(vec![leaf(2.0, 4.0)], 3);
        let bg = vec![vec![0.0; 3]];
        let a = brute_force_shapley(&m, &[1.0, 2.0, 3.0], &bg).unwrap();
        assert_eq!(a.values, vec![0.0; 3]);
        assert_eq!(
            shap_attribute(&m, &[1.0, 2.0, 3.0], &bg).unwrap().values,
            vec![0.0; 3]
        );
    }

    #[test]
    fn forest_is_mean_of_trees() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let rows: Vec<Vec<f64>> = (0..80)
            .map(|_| (0..4).map(|_| rng.gen_range(0.0..1.0)).collect())
            .collect();
        let y: Vec<f64> = rows.iter().map(|r| r[0] + 2.0 * r[1] * r[2]).collect();
        let x = Matrix::from_rows(&rows).unwrap();
        let f = fit_random_forest(
            &x,
            &y,
            &HyperParams::defaults(ModelKind::RandomForest).with_trees(6),
        )
        .unwrap();
        let e = TreeExplainer::for_forest(&f, &rows[..30]).unwrap();
        let whole = e.attribute(&rows[40]).unwrap();
        let parts = e.attribute_trees(&rows[40]).unwrap();
        for j in 0..4 {
            let mean = parts.iter().map(|a| a.values[j]).sum::<f64>() / parts.len() as f64;
            assert!((mean - whole.values[j]).abs() < 1e-12);
        }
        assert!(whole.efficiency_gap().abs() < 1e-9);
        for p in &parts {
            assert!(p.efficiency_gap().abs() < 1e-9);
        }
    }

    #[test]
    fn errors() {
        let m = forest(vec![leaf(1.0, 1.0)], 13);
        assert!(matches!(
            brute_force_shapley(&m, &[0.0; 13], &[vec![0.0; 13]]),
            Err(ExplainError::TooWide { .. })
        ));
        assert!(matches!(
            shap_attribute(&m, &[0.0; 2], &[vec![0.0; 13]]),
            Err(ExplainError::WidthMismatch { .. })
        ));
        assert!(matches!(
            shap_attribute(&m, &[0.0; 13], &[]),
            Err(ExplainError::EmptyBackground)
        ));
    }
}
