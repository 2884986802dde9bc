//! Reference implementations shared by the oracle tests and the
//! acceptance suite. Each check returns the number of cases it covered.
#![allow(dead_code, clippy::neg_cmp_op_on_partial_ord)]

use std::collections::BTreeMap;

use abuse_forecast::balance::{smote_augment, SmoteConfig};
use abuse_forecast::ensembles::{
    fit_extra_trees, fit_random_forest, fit_tree, HyperParams, Matrix, MaxFeatures, Model,
    ModelKind, SplitMode, TreeNode, TreeParams,
};
use abuse_forecast::explain::TreeExplainer;
use abuse_forecast::features::{FeatureMask, FeatureVector};
use abuse_forecast::lexicons::{abuse_score, classify, AbuseVerdict, Lexicon, Threshold};
use abuse_forecast::textprep::{Preprocessor, StopwordSet, TokenStream};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Check = Result<usize, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

pub fn threshold_sweep() -> Check {
    let mut cases = 0;
    let pre = Preprocessor::new(StopwordSet::english());
    let lex = Lexicon::from_text("abusive", "idiot\n", &pre).unwrap();
    let hit = pre.preprocess("idiot").iter().next().unwrap().to_string();
    let filler = pre.preprocess("table").iter().next().unwrap().to_string();
    for tokens in 1..=40usize {
        for hits in 0..=20usize.min(tokens) {
            let mut t = vec![hit.clone(); hits];
            t.extend(std::iter::repeat_n(filler.clone(), tokens - hits));
            let score = abuse_score(&TokenStream::new(t, tokens), &lex).unwrap();
            ensure!(
                (score.hits, score.token_count) == (hits, tokens),
                "counted {score:?} for {hits}/{tokens}"
            );
            // hits/tokens against 1/10 in integers.
            let want = match (10 * hits).cmp(&tokens) {
                std::cmp::Ordering::Greater => AbuseVerdict::Abusive,
                std::cmp::Ordering::Equal => AbuseVerdict::FlagManual,
                std::cmp::Ordering::Less => AbuseVerdict::Neutral,
            };
            let got = classify(&score, Threshold::default());
            ensure!(got == want, "{hits}/{tokens}: {got:?} vs {want:?}");
            cases += 1;
        }
    }
    Ok(cases)
}

/// Lowest-SSE (feature, threshold) over every midpoint; near ties go to the
/// smaller pair.
pub fn exhaustive_split(rows: &[Vec<f64>], y: &[f64]) -> Option<(usize, f64)> {
    if y.iter().all(|&v| v == y[0]) {
        return None;
    }
    let sse = |ix: &[usize]| {
        let m = ix.iter().map(|&i| y[i]).sum::<f64>() / ix.len() as f64;
        ix.iter().map(|&i| (y[i] - m).powi(2)).sum::<f64>()
    };
    let mut cands = Vec::new();
    for f in 0..rows[0].len() {
        let mut vals: Vec<f64> = rows.iter().map(|r| r[f]).collect();
        vals.sort_by(f64::total_cmp);
        vals.dedup();
        for w in vals.windows(2) {
            let t = (w[0] + w[1]) / 2.0;
            let (l, r): (Vec<usize>, Vec<usize>) = (0..y.len()).partition(|&i| rows[i][f] <= t);
            cands.push((sse(&l) + sse(&r), f, t));
        }
    }
    let best = cands.iter().map(|c| c.0).fold(f64::INFINITY, f64::min);
    let tol = 1e-9 * y.iter().map(|v| v * v).sum::<f64>();
    cands
        .into_iter()
        .filter(|c| c.0 <= best + tol)
        .map(|c| (c.1, c.2))
        .min_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)))
}

pub fn split_search(cases: usize, seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = TreeParams {
        max_depth: Some(1),
        min_samples_leaf: 1,
        max_features: MaxFeatures::All,
        mode: SplitMode::Best,
    };
    for case in 0..cases {
        let n = rng.gen_range(2..=20);
        let d = rng.gen_range(1..=3);
        let discrete = case % 3 == 0;
        let draw = |rng: &mut ChaCha8Rng| {
            if discrete {
                rng.gen_range(0..4) as f64
            } else {
                rng.gen_range(-5.0..5.0)
            }
        };
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..d).map(|_| draw(&mut rng)).collect())
            .collect();
        let y: Vec<f64> = (0..n).map(|_| draw(&mut rng)).collect();
        let tree = fit_tree(
            &Matrix::from_rows(&rows).unwrap(),
            &y,
            &params,
            &mut rng,
            None,
        )
        .map_err(|e| e.to_string())?;
        let got = match tree {
            TreeNode::Split {
                feature, threshold, ..
            } => Some((feature, threshold)),
            TreeNode::Leaf { .. } => None,
        };
        let want = exhaustive_split(&rows, &y);
        match (got, want) {
            (None, None) => {}
            (Some((gf, gt)), Some((wf, wt))) => {
                ensure!(gf == wf, "case {case}: feature {gf} vs {wf}");
                ensure!((gt - wt).abs() < 1e-12, "case {case}: {gt} vs {wt}");
            }
            _ => return Err(format!("case {case}: {got:?} vs {want:?}")),
        }
    }
    Ok(cases)
}

/// Cover-weighted expectation with features in `s` fixed, covers taken
/// from the background rows reaching each node (training covers if none).
pub fn expected(node: &TreeNode, x: &[f64], s: usize, bg: &[&Vec<f64>]) -> f64 {
    match node {
        TreeNode::Leaf { value, .. } => *value,
        TreeNode::Split {
            feature,
            threshold,
            left,
            right,
            ..
        } => {
            let (l, r): (Vec<&Vec<f64>>, Vec<&Vec<f64>>) =
                bg.iter().partition(|row| row[*feature] <= *threshold);
            if s & (1 << feature) != 0 {
                return if x[*feature] <= *threshold {
                    expected(left, x, s, &l)
                } else {
                    expected(right, x, s, &r)
                };
            }
            let (wl, wr) = if bg.is_empty() {
                (left.cover() / node.cover(), right.cover() / node.cover())
            } else {
                (
                    l.len() as f64 / bg.len() as f64,
                    r.len() as f64 / bg.len() as f64,
                )
            };
            wl * expected(left, x, s, &l) + wr * expected(right, x, s, &r)
        }
    }
}

pub fn shapley(trees: &[TreeNode], x: &[f64], bg: &[Vec<f64>]) -> (Vec<f64>, f64, f64) {
    let m = x.len();
    let bg: Vec<&Vec<f64>> = bg.iter().collect();
    let v: Vec<f64> = (0..1usize << m)
        .map(|s| trees.iter().map(|t| expected(t, x, s, &bg)).sum::<f64>() / trees.len() as f64)
        .collect();
    let fact: Vec<f64> = (0..=m)
        .scan(1.0, |acc, i| {
            if i > 0 {
                *acc *= i as f64;
            }
            Some(*acc)
        })
        .collect();
    let phi = (0..m)
        .map(|i| {
            (0..1usize << m)
                .filter(|s| s & (1 << i) == 0)
                .map(|s| {
                    let k = s.count_ones() as usize;
                    fact[k] * fact[m - k - 1] / fact[m] * (v[s | 1 << i] - v[s])
                })
                .sum()
        })
        .collect();
    (phi, v[0], v[(1 << m) - 1])
}

/// Fast attributions against enumeration, three queries per forest.
/// Also returns the largest efficiency gap seen.
pub fn shapley_check(forests: usize, seed: u64) -> Result<(usize, f64), String> {
    let mut worst_gap = 0.0f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for case in 0..forests as u64 {
        let d = rng.gen_range(1..=12);
        let n = rng.gen_range(8..40);
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..d).map(|_| rng.gen_range(0.0..1.0)).collect())
            .collect();
        let y: Vec<f64> = rows
            .iter()
            .map(|r| {
                r.iter()
                    .enumerate()
                    .map(|(j, v)| v * (j % 3) as f64)
                    .sum::<f64>()
                    + rng.gen_range(0.0..0.5)
            })
            .collect();
        let kind = if case % 2 == 0 {
            ModelKind::RandomForest
        } else {
            ModelKind::ExtraTrees
        };
        let params = HyperParams {
            max_depth: Some(rng.gen_range(1..=4)),
            ..HyperParams::defaults(kind)
                .with_trees(rng.gen_range(1..=4))
                .with_seed(case)
        };
        let x = Matrix::from_rows(&rows).unwrap();
        let forest = match kind {
            ModelKind::RandomForest => fit_random_forest(&x, &y, &params),
            _ => fit_extra_trees(&x, &y, &params),
        }
        .unwrap();
        let bg: Vec<Vec<f64>> = rows.iter().take(rng.gen_range(1..=n)).cloned().collect();
        let trees = forest.trees.clone();
        let explainer = TreeExplainer::new(&Model::Forest(forest), &bg).unwrap();
        for _ in 0..3 {
            let q: Vec<f64> = (0..d).map(|_| rng.gen_range(-0.2..1.2)).collect();
            let fast = explainer.attribute(&q).unwrap();
            let (phi, base, pred) = shapley(&trees, &q, &bg);
            for (a, b) in fast.values.iter().zip(&phi) {
                ensure!((a - b).abs() < 1e-9, "forest {case}: {a} vs {b}");
            }
            ensure!(
                (fast.base_value - base).abs() < 1e-9,
                "forest {case}: base {} vs {base}",
                fast.base_value
            );
            ensure!(
                (fast.prediction - pred).abs() < 1e-9,
                "forest {case}: prediction {} vs {pred}",
                fast.prediction
            );
            worst_gap = worst_gap.max(fast.efficiency_gap().abs());
            ensure!(
                fast.efficiency_gap().abs() < 1e-6,
                "forest {case}: gap {}",
                fast.efficiency_gap()
            );
        }
    }
    Ok((forests, worst_gap))
}

fn vector(dense: Vec<f64>, bow: &[(usize, f64)]) -> FeatureVector {
    FeatureVector {
        dense,
        bow: bow.iter().copied().collect::<BTreeMap<_, _>>(),
        mask: FeatureMask::ALL,
    }
}

pub fn segment_distance(p: &[f64], a: &[f64], b: &[f64]) -> f64 {
    let ab: Vec<f64> = a.iter().zip(b).map(|(x, y)| y - x).collect();
    let len2: f64 = ab.iter().map(|v| v * v).sum();
    let t = if len2 == 0.0 {
        0.0
    } else {
        (p.iter()
            .zip(a)
            .zip(&ab)
            .map(|((p, a), d)| (p - a) * d)
            .sum::<f64>()
            / len2)
            .clamp(0.0, 1.0)
    };
    p.iter()
        .zip(a)
        .zip(&ab)
        .map(|((p, a), d)| (p - a - t * d).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// One random SMOTE instance: every synthetic sample must lie on some
/// minority-minority segment with its target between the endpoints, and
/// the classes must end within one of parity. Returns synthetic count.
pub fn smote_geometry(seed: u64, n_min: usize, n_maj: usize, d: usize) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = Vec::new();
    let mut y = Vec::new();
    let mut flags = Vec::new();
    for i in 0..n_min + n_maj {
        let minority = i < n_min;
        let dense = (0..d).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let mut bow = Vec::new();
        for c in 0..3 {
            if rng.gen_bool(0.5) {
                bow.push((c, rng.gen_range(0.0..2.0)));
            }
        }
        x.push(vector(dense, &bow));
        y.push(if minority {
            rng.gen_range(1..6) as f64
        } else {
            0.0
        });
        flags.push(minority);
    }
    let cfg = SmoteConfig {
        seed,
        ..SmoteConfig::default()
    };
    let out = smote_augment(&x, &y, &flags, &cfg).map_err(|e| e.to_string())?;
    let minority: Vec<usize> = (0..x.len()).filter(|&i| flags[i]).collect();
    let majority = x.len() - minority.len();
    let after = minority.len() + out.origins.len();
    ensure!(
        (after as i64 - majority as i64).abs() <= 1,
        "{after} minority vs {majority} majority"
    );
    ensure!(out.x[..x.len()] == x[..], "originals changed");
    let flat = |v: &FeatureVector| {
        let mut r = v.dense.clone();
        r.extend((0..3).map(|c| v.bow.get(&c).copied().unwrap_or(0.0)));
        r
    };
    for (k, o) in out.origins.iter().enumerate() {
        ensure!(
            flags[o.base] && flags[o.neighbor],
            "sample {k} uses a majority endpoint"
        );
        // Nearest segment among all minority pairs, independent of the
        // recorded origin.
        let p = flat(&out.x[x.len() + k]);
        let best = minority
            .iter()
            .flat_map(|&a| minority.iter().map(move |&b| (a, b)))
            .map(|(a, b)| segment_distance(&p, &flat(&x[a]), &flat(&x[b])))
            .fold(f64::INFINITY, f64::min);
        ensure!(best < 1e-9, "sample {k} is {best} off every segment");
        let t = out.y[x.len() + k];
        let (lo, hi) = (y[o.base].min(y[o.neighbor]), y[o.base].max(y[o.neighbor]));
        ensure!(
            t >= lo - 1e-12 && t <= hi + 1e-12,
            "sample {k} target {t} outside [{lo}, {hi}]"
        );
    }
    Ok(out.origins.len())
}
