//! Weighted CART regression trees with best-split (forest) and
//! random-threshold (extra trees) search.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{EnsembleError, MaxFeatures};

/// Column-major matrix of training rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    n_rows: usize,
    columns: Vec<Vec<f64>>,
}

impl Matrix {
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, EnsembleError> {
        let n_cols = rows.first().map_or(0, Vec::len);
        let mut columns = vec![Vec::with_capacity(rows.len()); n_cols];
        for (i, r) in rows.iter().enumerate() {
            if r.len() != n_cols {
                return Err(EnsembleError::WidthMismatch {
                    expected: n_cols,
                    got: r.len(),
                });
            }
            for (c, v) in columns.iter_mut().zip(r) {
                if !v.is_finite() {
                    return Err(EnsembleError::NonFinite { row: i });
                }
                c.push(*v);
            }
        }
        Ok(Self {
            n_rows: rows.len(),
            columns,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn column(&self, j: usize) -> &[f64] {
        &self.columns[j]
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.columns[col][row]
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.columns.iter().map(|c| c[i]).collect()
    }
}

/// `x[feature] <= threshold` goes left. `n` counts distinct training rows,
/// `cover` their total weight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TreeNode {
    Leaf {
        value: f64,
        n: usize,
        cover: f64,
    },
    Split {
        feature: usize,
        threshold: f64,
        cover: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
}

impl TreeNode {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut node = self;
        loop {
            match node {
                TreeNode::Leaf { value, .. } => return *value,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => {
                    node = if x[*feature] <= *threshold {
                        left
                    } else {
                        right
                    };
                }
            }
        }
    }

    /// Prediction for row `i` of a training matrix.
    pub fn predict_row(&self, x: &Matrix, i: usize) -> f64 {
        let mut node = self;
        loop {
            match node {
                TreeNode::Leaf { value, .. } => return *value,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => {
                    node = if x.get(i, *feature) <= *threshold {
                        left
                    } else {
                        right
                    };
                }
            }
        }
    }

    pub fn cover(&self) -> f64 {
        match self {
            TreeNode::Leaf { cover, .. } | TreeNode::Split { cover, .. } => *cover,
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    pub fn n_leaves(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 1,
            TreeNode::Split { left, right, .. } => left.n_leaves() + right.n_leaves(),
        }
    }

    /// Calls `f` on every split's feature index.
    pub fn visit_features(&self, f: &mut impl FnMut(usize)) {
        if let TreeNode::Split {
            feature,
            left,
            right,
            ..
        } = self
        {
            f(*feature);
            left.visit_features(f);
            right.visit_features(f);
        }
    }

    /// Smallest and largest leaf value.
    pub fn value_range(&self) -> (f64, f64) {
        match self {
            TreeNode::Leaf { value, .. } => (*value, *value),
            TreeNode::Split { left, right, .. } => {
                let (a, b) = left.value_range();
                let (c, d) = right.value_range();
                (a.min(c), b.max(d))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitMode {
    /// Every midpoint between consecutive distinct values.
    Best,
    /// One uniform threshold in [min, max) per candidate feature.
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
    pub max_features: MaxFeatures,
    pub mode: SplitMode,
}

impl Default for TreeParams {
    fn default() -> Self {
        Self {
            max_depth: None,
            min_samples_leaf: 1,
            max_features: MaxFeatures::All,
            mode: SplitMode::Best,
        }
    }
}

/// Midpoint of two consecutive distinct values, kept strictly below `hi`.
pub fn midpoint(lo: f64, hi: f64) -> f64 {
    let m = lo + (hi - lo) / 2.0;
    if m >= hi || !m.is_finite() {
        lo
    } else {
        m
    }
}

/// Relative tolerance under which two split scores count as tied.
pub const TIE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy)]
struct Candidate {
    feature: usize,
    threshold: f64,
    score: f64,
}

/// Whether `new` should replace `best`: strictly better beyond tolerance,
/// or tied and lexicographically smaller in (feature, threshold).
fn better(new: &Candidate, best: Option<&Candidate>, tol: f64) -> bool {
    match best {
        None => true,
        Some(b) => {
            if new.score > b.score + tol {
                true
            } else if new.score >= b.score - tol {
                (new.feature, new.threshold) < (b.feature, b.threshold)
            } else {
                false
            }
        }
    }
}

struct Builder<'a> {
    x: &'a Matrix,
    y: &'a [f64],
    w: &'a [f64],
    params: TreeParams,
    k_features: usize,
    features: Vec<usize>,
    scratch: Vec<(f64, usize)>,
}

impl Builder<'_> {
    fn leaf(&self, idx: &[usize]) -> TreeNode {
        let (sw, swy) = idx.iter().fold((0.0, 0.0), |(a, b), &i| {
            (a + self.w[i], b + self.w[i] * self.y[i])
        });
        TreeNode::Leaf {
            value: swy / sw,
            n: idx.len(),
            cover: sw,
        }
    }

    fn build(&mut self, idx: &mut [usize], depth: usize, rng: &mut ChaCha8Rng) -> TreeNode {
        let msl = self.params.min_samples_leaf;
        let stop_depth = self.params.max_depth.is_some_and(|d| depth >= d);
        let y0 = self.y[idx[0]];
        let pure = idx.iter().all(|&i| self.y[i] == y0);
        if stop_depth || pure || idx.len() < 2 * msl {
            return self.leaf(idx);
        }
        let Some(best) = self.best_split(idx, rng) else {
            return self.leaf(idx);
        };
        let col = self.x.column(best.feature);
        let mut mid = 0;
        for k in 0..idx.len() {
            if col[idx[k]] <= best.threshold {
                idx.swap(k, mid);
                mid += 1;
            }
        }
        let cover = idx.iter().map(|&i| self.w[i]).sum();
        let (l, r) = idx.split_at_mut(mid);
        let left = self.build(l, depth + 1, rng);
        let right = self.build(r, depth + 1, rng);
        TreeNode::Split {
            feature: best.feature,
            threshold: best.threshold,
            cover,
            left: Box::new(left),
            right: Box::new(right),
        }
    }

    fn best_split(&mut self, idx: &[usize], rng: &mut ChaCha8Rng) -> Option<Candidate> {
        let (sw, swy, swyy) = idx.iter().fold((0.0, 0.0, 0.0), |(a, b, c), &i| {
            let (w, y) = (self.w[i], self.y[i]);
            (a + w, b + w * y, c + w * y * y)
        });
        let tol = TIE_TOLERANCE * (swyy + 1e-300);
        let d = self.features.len();
        let mut best: Option<Candidate> = None;
        let mut visited = 0;
        for i in 0..d {
            if visited >= self.k_features {
                break;
            }
            let j = rng.gen_range(i..d);
            self.features.swap(i, j);
            let f = self.features[i];
            let cand = match self.params.mode {
                SplitMode::Best => self.scan_best(f, idx, sw, swy, tol),
                SplitMode::Random => self.scan_random(f, idx, sw, swy, rng),
            };
            let Some(cand) = cand else { continue };
            visited += 1;
            if let Some(c) = cand {
                if better(&c, best.as_ref(), tol) {
                    best = Some(c);
                }
            }
        }
        best
    }

    /// `None` for a constant feature; `Some(None)` when no threshold meets
    /// the leaf-size constraint.
    #[allow(clippy::option_option)]
    fn scan_best(
        &mut self,
        f: usize,
        idx: &[usize],
        sw: f64,
        swy: f64,
        tol: f64,
    ) -> Option<Option<Candidate>> {
        let col = self.x.column(f);
        self.scratch.clear();
        self.scratch.extend(idx.iter().map(|&i| (col[i], i)));
        self.scratch
            .sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let s = &self.scratch;
        if s[0].0 == s[s.len() - 1].0 {
            return None;
        }
        let msl = self.params.min_samples_leaf;
        let n = s.len();
        let mut best: Option<Candidate> = None;
        let (mut lw, mut lwy) = (0.0, 0.0);
        for k in 0..n - 1 {
            let i = s[k].1;
            lw += self.w[i];
            lwy += self.w[i] * self.y[i];
            if s[k].0 == s[k + 1].0 || k + 1 < msl || n - k - 1 < msl {
                continue;
            }
            let (rw, rwy) = (sw - lw, swy - lwy);
            if lw <= 0.0 || rw <= 0.0 {
                continue;
            }
            let cand = Candidate {
                feature: f,
                threshold: midpoint(s[k].0, s[k + 1].0),
                score: lwy * lwy / lw + rwy * rwy / rw,
            };
            if better(&cand, best.as_ref(), tol) {
                best = Some(cand);
            }
        }
        Some(best)
    }

    #[allow(clippy::option_option)]
    fn scan_random(
        &self,
        f: usize,
        idx: &[usize],
        sw: f64,
        swy: f64,
        rng: &mut ChaCha8Rng,
    ) -> Option<Option<Candidate>> {
        let col = self.x.column(f);
        let (lo, hi) = idx
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &i| {
                (a.min(col[i]), b.max(col[i]))
            });
        if lo == hi {
            return None;
        }
        let mut threshold = rng.gen_range(lo..hi);
        if threshold >= hi {
            threshold = lo;
        }
        let (mut lw, mut lwy, mut ln) = (0.0, 0.0, 0usize);
        for &i in idx {
            if col[i] <= threshold {
                lw += self.w[i];
                lwy += self.w[i] * self.y[i];
                ln += 1;
            }
        }
        let msl = self.params.min_samples_leaf;
        let (rw, rwy) = (sw - lw, swy - lwy);
        if ln < msl || idx.len() - ln < msl || lw <= 0.0 || rw <= 0.0 {
            return Some(None);
        }
        Some(Some(Candidate {
            feature: f,
            threshold,
            score: lwy * lwy / lw + rwy * rwy / rw,
        }))
    }
}

/// Grow one tree. Rows with zero weight are ignored; `weights` defaults to
/// all ones.
pub fn fit_tree(
    x: &Matrix,
    y: &[f64],
    params: &TreeParams,
    rng: &mut ChaCha8Rng,
    weights: Option<&[f64]>,
) -> Result<TreeNode, EnsembleError> {
    if y.len() != x.n_rows() {
        return Err(EnsembleError::LengthMismatch {
            rows: x.n_rows(),
            targets: y.len(),
        });
    }
    if let Some(i) = y.iter().position(|v| !v.is_finite()) {
        return Err(EnsembleError::NonFinite { row: i });
    }
    if params.min_samples_leaf == 0 {
        return Err(EnsembleError::Config(
            "min_samples_leaf must be at least 1".into(),
        ));
    }
    let ones;
    let w = match weights {
        Some(w) => {
            if w.len() != y.len() {
                return Err(EnsembleError::LengthMismatch {
                    rows: y.len(),
                    targets: w.len(),
                });
            }
            w
        }
        None => {
            ones = vec![1.0; y.len()];
            &ones
        }
    };
    let mut idx: Vec<usize> = (0..y.len()).filter(|&i| w[i] > 0.0).collect();
    if idx.is_empty() {
        return Err(EnsembleError::EmptyData);
    }
    let d = x.n_cols();
    let mut b = Builder {
        x,
        y,
        w,
        params: *params,
        k_features: params.max_features.count(d),
        features: (0..d).collect(),
        scratch: Vec::with_capacity(idx.len()),
    };
    Ok(b.build(&mut idx, 0, rng))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(7)
    }

    fn col(v: &[f64]) -> Matrix {
        Matrix::from_rows(&v.iter().map(|x| vec![*x]).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn separable_split() {
        let x = col(&[0.0, 1.0, 10.0, 11.0]);
        let y = [0.0, 0.0, 10.0, 10.0];
        let p = TreeParams {
            max_depth: Some(1),
            ..Default::default()
        };
        let t = fit_tree(&x, &y, &p, &mut rng(), None).unwrap();
        match &t {
            TreeNode::Split {
                threshold,
                left,
                right,
                ..
            } => {
                assert!(*threshold > 1.0 && *threshold < 10.0);
                assert_eq!(left.predict(&[0.0]), 0.0);
                assert_eq!(right.predict(&[0.0]), 10.0);
            }
            _ => panic!("expected split"),
        }
        let mse: f64 = (0..4)
            .map(|i| (t.predict(&[x.get(i, 0)]) - y[i]).powi(2))
            .sum::<f64>()
            / 4.0;
        assert_eq!(mse, 0.0);
    }

    #[test]
    fn constant_target_is_leaf() {
        let x = col(&[0.0, 1.0, 2.0]);
        let t = fit_tree(&x, &[3.0; 3], &TreeParams::default(), &mut rng(), None).unwrap();
        assert_eq!(
            t,
            TreeNode::Leaf {
                value: 3.0,
                n: 3,
                cover: 3.0
            }
        );
    }

    #[test]
    fn single_sample_is_leaf() {
        let t = fit_tree(
            &col(&[5.0]),
            &[2.5],
            &TreeParams::default(),
            &mut rng(),
            None,
        )
        .unwrap();
        assert_eq!(t.predict(&[100.0]), 2.5);
    }

    #[test]
    fn empty_data() {
        let x = Matrix::from_rows(&[]).unwrap();
        assert_eq!(
            fit_tree(&x, &[], &TreeParams::default(), &mut rng(), None),
            Err(EnsembleError::EmptyData)
        );
        let x = col(&[1.0, 2.0]);
        assert_eq!(
            fit_tree(
                &x,
                &[1.0, 2.0],
                &TreeParams::default(),
                &mut rng(),
                Some(&[0.0, 0.0])
            ),
            Err(EnsembleError::EmptyData)
        );
    }

    #[test]
    fn weights_act_as_counts() {
        let x = col(&[0.0, 1.0, 2.0, 3.0]);
        let y = [1.0, 1.0, 5.0, 9.0];
        let p = TreeParams {
            max_depth: Some(0),
            ..Default::default()
        };
        let t = fit_tree(&x, &y, &p, &mut rng(), Some(&[2.0, 0.0, 1.0, 1.0])).unwrap();
        assert_eq!(
            t,
            TreeNode::Leaf {
                value: 4.0,
                n: 3,
                cover: 4.0
            }
        );
    }

    #[test]
    fn min_samples_leaf_respected() {
        let x = col(&[0.0, 1.0, 2.0, 3.0, 4.0, 5.0]);
        let y = [0.0, 9.0, 0.0, 0.0, 0.0, 0.0];
        let p = TreeParams {
            min_samples_leaf: 3,
            ..Default::default()
        };
        let t = fit_tree(&x, &y, &p, &mut rng(), None).unwrap();
        fn check(t: &TreeNode) {
            match t {
                TreeNode::Leaf { n, .. } => assert!(*n >= 3),
                TreeNode::Split { left, right, .. } => {
                    check(left);
                    check(right);
                }
            }
        }
        check(&t);
    }

    #[test]
    fn distinct_rows_fit_exactly() {
        let rows: Vec<Vec<f64>> = (0..30)
            .map(|i| vec![(i * 7 % 13) as f64, (i % 5) as f64, i as f64 / 3.0])
            .collect();
        let y: Vec<f64> = (0..30).map(|i| ((i * 31) % 17) as f64).collect();
        let x = Matrix::from_rows(&rows).unwrap();
        for mode in [SplitMode::Best, SplitMode::Random] {
            let p = TreeParams {
                mode,
                ..Default::default()
            };
            let t = fit_tree(&x, &y, &p, &mut rng(), None).unwrap();
            for (r, t_y) in rows.iter().zip(&y) {
                assert_eq!(t.predict(r), *t_y);
            }
        }
    }

    #[test]
    fn midpoint_stays_below_upper() {
        assert_eq!(midpoint(1.0, 3.0), 2.0);
        let a = 1.0f64;
        let b = f64::from_bits(a.to_bits() + 1);
        assert_eq!(midpoint(a, b), a);
    }

    #[test]
    fn width_checked() {
        assert!(Matrix::from_rows(&[vec![1.0, 2.0], vec![1.0]]).is_err());
        assert!(Matrix::from_rows(&[vec![f64::NAN]]).is_err());
    }
}
