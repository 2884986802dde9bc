//! SMOTE oversampling for a regression target.
//!
//! Minority samples (conversations that drew at least one abusive reply)
//! are synthesized by interpolating between a minority base point and one
//! of its k nearest minority neighbors. The target is interpolated with the
//! same λ as the features.

use std::collections::BTreeMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::features::FeatureVector;

#[derive(Debug, Error, PartialEq)]
pub enum BalanceError {
    #[error("need at least {needed} minority samples, got {got}")]
    TooFewMinority { needed: usize, got: usize },
    #[error("width mismatch at sample {index}: expected {expected}, got {got}")]
    WidthMismatch {
        index: usize,
        expected: usize,
        got: usize,
    },
    #[error("invalid SMOTE config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SmoteConfig {
    pub k_neighbors: usize,
    /// Desired minority/majority ratio after augmentation.
    pub target_ratio: f64,
    pub seed: u64,
}

impl Default for SmoteConfig {
    fn default() -> Self {
        Self {
            k_neighbors: 5,
            target_ratio: 1.0,
            seed: 0,
        }
    }
}

impl SmoteConfig {
    pub fn validate(&self) -> Result<(), BalanceError> {
        if self.k_neighbors == 0 {
            return Err(BalanceError::Config(
                "k_neighbors must be at least 1".into(),
            ));
        }
        if !(self.target_ratio > 0.0 && self.target_ratio.is_finite()) {
            return Err(BalanceError::Config(format!(
                "target_ratio must be positive, got {}",
                self.target_ratio
            )));
        }
        Ok(())
    }
}

/// Where a synthetic sample came from (indices into the input).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticOrigin {
    pub base: usize,
    pub neighbor: usize,
    pub lambda: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmoteOutput {
    pub x: Vec<FeatureVector>,
    pub y: Vec<f64>,
    /// One entry per synthetic sample, which follow the originals.
    pub origins: Vec<SyntheticOrigin>,
}

impl SmoteOutput {
    pub fn n_original(&self) -> usize {
        self.x.len() - self.origins.len()
    }

    /// Hash of every sample, for reproducibility and leakage audits.
    pub fn digest(&self) -> String {
        sample_digest(&self.x, &self.y)
    }
}

pub fn sample_digest(x: &[FeatureVector], y: &[f64]) -> String {
    let mut h = Sha256::new();
    for (v, t) in x.iter().zip(y) {
        for d in &v.dense {
            h.update(d.to_le_bytes());
        }
        for (c, b) in &v.bow {
            h.update((*c as u64).to_le_bytes());
            h.update(b.to_le_bytes());
        }
        h.update(t.to_le_bytes());
        h.update([0xff]);
    }
    hex::encode(h.finalize())
}

/// `base + λ(nbr − base)` on the dense block, on the BoW block (over the
/// columns nonzero in either endpoint) and on the target.
pub fn interpolate(
    base: &FeatureVector,
    y_base: f64,
    nbr: &FeatureVector,
    y_nbr: f64,
    lambda: f64,
) -> (FeatureVector, f64) {
    let dense = base
        .dense
        .iter()
        .zip(&nbr.dense)
        .map(|(a, b)| a + lambda * (b - a))
        .collect();
    let mut bow = BTreeMap::new();
    for col in base.bow.keys().chain(nbr.bow.keys()) {
        let a = base.bow.get(col).copied().unwrap_or(0.0);
        let b = nbr.bow.get(col).copied().unwrap_or(0.0);
        let v = (a + lambda * (b - a)).max(0.0);
        if v != 0.0 {
            bow.insert(*col, v);
        }
    }
    (
        FeatureVector {
            dense,
            bow,
            mask: base.mask,
        },
        y_base + lambda * (y_nbr - y_base),
    )
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Indices (into `pool`) of the k nearest members to `pool[i]`, excluding
/// itself. Ties go to the lower index.
fn nearest(x: &[FeatureVector], pool: &[usize], i: usize, k: usize) -> Vec<usize> {
    let me = &x[pool[i]].dense;
    let mut d: Vec<(f64, usize)> = pool
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != i)
        .map(|(j, &p)| (sq_dist(me, &x[p].dense), j))
        .collect();
    d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    d.truncate(k);
    d.into_iter().map(|(_, j)| j).collect()
}

/// Augment until `#minority = round(target_ratio × #majority)`. Originals
/// come first, unchanged. Nothing is generated if the minority is already
/// large enough.
pub fn smote_augment(
    x: &[FeatureVector],
    y: &[f64],
    minority: &[bool],
    cfg: &SmoteConfig,
) -> Result<SmoteOutput, BalanceError> {
    cfg.validate()?;
    if x.len() != y.len() || x.len() != minority.len() {
        return Err(BalanceError::Config(format!(
            "length mismatch: {} vectors, {} targets, {} flags",
            x.len(),
            y.len(),
            minority.len()
        )));
    }
    if let Some(first) = x.first() {
        for (index, v) in x.iter().enumerate() {
            if v.dense.len() != first.dense.len() {
                return Err(BalanceError::WidthMismatch {
                    index,
                    expected: first.dense.len(),
                    got: v.dense.len(),
                });
            }
        }
    }
    let pool: Vec<usize> = (0..x.len()).filter(|&i| minority[i]).collect();
    if pool.len() < cfg.k_neighbors + 1 {
        return Err(BalanceError::TooFewMinority {
            needed: cfg.k_neighbors + 1,
            got: pool.len(),
        });
    }
    let majority = x.len() - pool.len();
    let wanted = (cfg.target_ratio * majority as f64).round() as usize;
    let n_new = wanted.saturating_sub(pool.len());

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut neighbors: Vec<Option<Vec<usize>>> = vec![None; pool.len()];
    let mut out_x = x.to_vec();
    let mut out_y = y.to_vec();
    let mut origins = Vec::with_capacity(n_new);
    for _ in 0..n_new {
        let b = rng.gen_range(0..pool.len());
        let nn = neighbors[b].get_or_insert_with(|| nearest(x, &pool, b, cfg.k_neighbors));
        let n = nn[rng.gen_range(0..nn.len())];
        let lambda: f64 = rng.gen();
        let (base, nbr) = (pool[b], pool[n]);
        let (v, t) = interpolate(&x[base], y[base], &x[nbr], y[nbr], lambda);
        out_x.push(v);
        out_y.push(t);
        origins.push(SyntheticOrigin {
            base,
            neighbor: nbr,
            lambda,
        });
    }
    log::debug!(
        "smote: {} minority, {} majority, {} synthesized",
        pool.len(),
        majority,
        n_new
    );
    Ok(SmoteOutput {
        x: out_x,
        y: out_y,
        origins,
    })
}

/// Minority flags for the usual class view: y ≥ 1.
pub fn minority_flags(y: &[f64]) -> Vec<bool> {
    y.iter().map(|&t| t >= 1.0).collect()
}
