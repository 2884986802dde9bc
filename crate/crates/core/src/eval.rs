//! Metrics, stratified k-fold cross-validation and the feature-family
//! ablation grid.
//!
//! Vocabulary, scaler and oversampling are fit on each training split
//! only, never on the whole corpus. Every report records this in its
//! manifest.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::balance::{minority_flags, sample_digest, smote_augment, BalanceError, SmoteConfig};
use crate::corpus::{to_jsonl_string, Corpus, CorpusError};
use crate::ensembles::{
    fit_model, ArtifactError, EnsembleError, HyperParams, Matrix, Model, ModelArtifact, ModelKind,
    TrainingManifest, ARTIFACT_FORMAT_VERSION,
};
use crate::features::{
    apply_scaler, fit_bow, fit_scaler, BoWVocabulary, ExtractedFeatures, FeatureError,
    FeatureExtractor, FeatureLayout, FeatureMask, FeatureVector, ScalerState, Stage, BOW_CAP,
};

/// Recorded in every manifest.
pub const PREPROCESSING_PROTOCOL: &str =
    "vocabulary, scaler and oversampling fit on each training split only";

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("length mismatch: {truth} targets, {pred} predictions")]
    LengthMismatch { truth: usize, pred: usize },
    #[error("no values to score")]
    Empty,
    #[error("R² is undefined: the targets have zero variance")]
    ZeroVariance,
    #[error("too little data for {k} folds: {0}", k = .1)]
    TooSmall(String, usize),
    #[error("model {0} failed: {1}")]
    Model(String, String),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Balance(#[from] BalanceError),
    #[error(transparent)]
    Ensemble(#[from] EnsembleError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Artifact(#[from] ArtifactError),
}

type Result<T> = std::result::Result<T, EvalError>;

fn check_lengths(y: &[f64], p: &[f64]) -> Result<()> {
    if y.len() != p.len() {
        return Err(EvalError::LengthMismatch {
            truth: y.len(),
            pred: p.len(),
        });
    }
    if y.is_empty() {
        return Err(EvalError::Empty);
    }
    Ok(())
}

pub fn mse(y: &[f64], pred: &[f64]) -> Result<f64> {
    check_lengths(y, pred)?;
    Ok(y.iter()
        .zip(pred)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / y.len() as f64)
}

pub fn mae(y: &[f64], pred: &[f64]) -> Result<f64> {
    check_lengths(y, pred)?;
    Ok(y.iter().zip(pred).map(|(a, b)| (a - b).abs()).sum::<f64>() / y.len() as f64)
}

/// `1 − SS_res / SS_tot`; negative when worse than predicting the mean.
pub fn r_squared(y: &[f64], pred: &[f64]) -> Result<f64> {
    check_lengths(y, pred)?;
    if y.len() < 2 {
        return Err(EvalError::ZeroVariance);
    }
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let ss_tot: f64 = y.iter().map(|v| (v - mean) * (v - mean)).sum();
    if ss_tot == 0.0 {
        return Err(EvalError::ZeroVariance);
    }
    let ss_res: f64 = y.iter().zip(pred).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

/// Fold of every conversation, by id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldAssignment {
    pub k: usize,
    pub fold_of: BTreeMap<String, usize>,
}

impl FoldAssignment {
    /// Corpus positions in fold `f`, in corpus order.
    pub fn test_indices(&self, corpus: &Corpus, f: usize) -> Vec<usize> {
        self.positions(corpus, |g| g == f)
    }

    pub fn train_indices(&self, corpus: &Corpus, f: usize) -> Vec<usize> {
        self.positions(corpus, |g| g != f)
    }

    fn positions(&self, corpus: &Corpus, keep: impl Fn(usize) -> bool) -> Vec<usize> {
        corpus
            .iter()
            .enumerate()
            .filter(|(_, c)| self.fold_of.get(c.id()).is_some_and(|&g| keep(g)))
            .map(|(i, _)| i)
            .collect()
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &f in self.fold_of.values() {
            sizes[f] += 1;
        }
        sizes
    }
}

/// Shuffle each class (y ≥ 1 and y = 0) by `seed` and deal round-robin
/// into `k` folds. The second class continues dealing where the first
/// stopped, so fold sizes differ by at most one.
pub fn stratified_kfold(corpus: &Corpus, k: usize, seed: u64) -> Result<FoldAssignment> {
    if k < 2 {
        return Err(EvalError::TooSmall("k must be at least 2".into(), k));
    }
    let (mut pos, mut neg): (Vec<usize>, Vec<usize>) =
        (0..corpus.len()).partition(|&i| corpus.conversations()[i].y() >= 1);
    if corpus.len() < k || pos.len() < k || neg.len() < k {
        return Err(EvalError::TooSmall(
            format!(
                "{} conversations, {} with abusive replies, {} without",
                corpus.len(),
                pos.len(),
                neg.len()
            ),
            k,
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    pos.shuffle(&mut rng);
    neg.shuffle(&mut rng);
    let fold_of = pos
        .iter()
        .chain(&neg)
        .enumerate()
        .map(|(n, &i)| (corpus.conversations()[i].id().to_string(), n % k))
        .collect();
    Ok(FoldAssignment { k, fold_of })
}

/// What to train in each fold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ModelSpec {
    Ensemble {
        kind: ModelKind,
        params: HyperParams,
    },
    /// Predicts the mean target of the (unaugmented) training split.
    MeanBaseline,
}

impl ModelSpec {
    pub fn ensemble(kind: ModelKind, params: HyperParams) -> Self {
        ModelSpec::Ensemble { kind, params }
    }

    pub fn name(&self) -> &str {
        match self {
            ModelSpec::Ensemble { kind, .. } => kind.short_name(),
            ModelSpec::MeanBaseline => "mean",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CvConfig {
    pub k: usize,
    /// Fold shuffling seed; oversampling uses `smote.seed + fold`.
    pub seed: u64,
    /// `None` trains on the unaugmented split.
    pub smote: Option<SmoteConfig>,
    pub bow_cap: usize,
}

impl Default for CvConfig {
    fn default() -> Self {
        Self {
            k: 5,
            seed: 0,
            smote: Some(SmoteConfig::default()),
            bow_cap: BOW_CAP,
        }
    }
}

/// Scores of one test fold. `r2` is `None` when the fold's targets are
/// constant, with the reason in `r2_error`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldMetrics {
    pub fold: usize,
    pub mse: f64,
    pub r2: Option<f64>,
    pub r2_error: Option<String>,
    pub mae: f64,
}

/// Means over folds. `r2` averages the folds where it is defined.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub mse: f64,
    pub r2: Option<f64>,
    pub mae: f64,
    pub per_fold: Vec<FoldMetrics>,
}

impl MetricReport {
    fn from_folds(per_fold: Vec<FoldMetrics>) -> Self {
        let n = per_fold.len() as f64;
        let r2s: Vec<f64> = per_fold.iter().filter_map(|f| f.r2).collect();
        Self {
            mse: per_fold.iter().map(|f| f.mse).sum::<f64>() / n,
            r2: (!r2s.is_empty()).then(|| r2s.iter().sum::<f64>() / r2s.len() as f64),
            mae: per_fold.iter().map(|f| f.mae).sum::<f64>() / n,
            per_fold,
        }
    }
}

/// Digests of all state fit on one training split.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldTrace {
    pub fold: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub vocab_digest: Option<String>,
    pub scaler_digest: String,
    /// Training samples after oversampling.
    pub training_set_digest: String,
    pub n_synthetic: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvManifest {
    pub corpus_digest: String,
    pub k: usize,
    pub fold_seed: u64,
    pub mask: FeatureMask,
    pub stage: Stage,
    pub model: ModelSpec,
    pub smote: Option<SmoteConfig>,
    pub bow_cap: usize,
    pub protocol: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub report: MetricReport,
    pub traces: Vec<FoldTrace>,
    pub manifest: CvManifest,
}

/// SHA-256 of the corpus in its JSONL form.
pub fn corpus_digest(corpus: &Corpus) -> String {
    hex::encode(Sha256::digest(to_jsonl_string(corpus).as_bytes()))
}

/// Extracted features for every conversation, computed once.
pub fn extract_all(corpus: &Corpus, extractor: &FeatureExtractor) -> Vec<ExtractedFeatures> {
    corpus
        .conversations()
        .par_iter()
        .map(|c| extractor.extract(c))
        .collect()
}

/// Scaled, possibly augmented training data for one split.
struct Prepared {
    layout: FeatureLayout,
    scaler: ScalerState,
    x: Vec<FeatureVector>,
    y: Vec<f64>,
    n_original: usize,
    digest: String,
}

fn prepare(
    features: &[ExtractedFeatures],
    y: &[f64],
    train: &[usize],
    mask: FeatureMask,
    stage: Stage,
    vocab: Option<&BoWVocabulary>,
    smote: Option<&SmoteConfig>,
) -> Result<Prepared> {
    let layout = FeatureLayout::new(mask, stage, vocab.cloned())?;
    let raw: Vec<FeatureVector> = train.iter().map(|&i| layout.vector(&features[i])).collect();
    let scaler = fit_scaler(&raw)?;
    let x = raw
        .iter()
        .map(|v| apply_scaler(v, &scaler))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let y: Vec<f64> = train.iter().map(|&i| y[i]).collect();
    let n_original = x.len();
    let (x, y) = match smote {
        Some(cfg) => {
            let out = smote_augment(&x, &y, &minority_flags(&y), cfg)?;
            (out.x, out.y)
        }
        None => (x, y),
    };
    let digest = sample_digest(&x, &y);
    Ok(Prepared {
        layout,
        scaler,
        x,
        y,
        n_original,
        digest,
    })
}

fn to_matrix(x: &[FeatureVector], bow_width: usize) -> Result<Matrix> {
    let rows: Vec<Vec<f64>> = x.iter().map(|v| v.to_row(bow_width)).collect();
    Ok(Matrix::from_rows(&rows)?)
}

fn fit_vocab(features: &[ExtractedFeatures], train: &[usize], cap: usize) -> Result<BoWVocabulary> {
    Ok(fit_bow(train.iter().map(|&i| &features[i].tokens), cap)?)
}

enum Fitted {
    Model(Model),
    Constant(f64),
}

fn fit_spec(spec: &ModelSpec, p: &Prepared) -> Result<Fitted> {
    match spec {
        ModelSpec::MeanBaseline => {
            let y = &p.y[..p.n_original];
            Ok(Fitted::Constant(y.iter().sum::<f64>() / y.len() as f64))
        }
        ModelSpec::Ensemble { kind, params } => {
            let m = to_matrix(&p.x, p.layout.bow_width())?;
            let digest = p.layout.manifest().digest();
            fit_model(*kind, &m, &p.y, params, &digest)
                .map(Fitted::Model)
                .map_err(|e| EvalError::Model(kind.to_string(), e.to_string()))
        }
    }
}

fn fold_smote(smote: Option<&SmoteConfig>, fold: usize) -> Option<SmoteConfig> {
    smote.map(|c| SmoteConfig {
        seed: c.seed.wrapping_add(fold as u64),
        ..c.clone()
    })
}

/// Fit `spec` on a prepared training split and score the test split.
fn score_fold(
    features: &[ExtractedFeatures],
    y: &[f64],
    test: &[usize],
    fold: usize,
    prepared: &Prepared,
    spec: &ModelSpec,
) -> Result<FoldMetrics> {
    let fitted = fit_spec(spec, prepared)?;
    let bow_width = prepared.layout.bow_width();
    let mut truth = Vec::with_capacity(test.len());
    let mut pred = Vec::with_capacity(test.len());
    for &i in test {
        let v = apply_scaler(&prepared.layout.vector(&features[i]), &prepared.scaler)?;
        pred.push(match &fitted {
            Fitted::Constant(c) => *c,
            Fitted::Model(m) => m.predict(&v.to_row(bow_width))?,
        });
        truth.push(y[i]);
    }
    let (r2, r2_error) = match r_squared(&truth, &pred) {
        Ok(r) => (Some(r), None),
        Err(EvalError::ZeroVariance) => (None, Some(EvalError::ZeroVariance.to_string())),
        Err(e) => return Err(e),
    };
    Ok(FoldMetrics {
        fold,
        mse: mse(&truth, &pred)?,
        r2,
        r2_error,
        mae: mae(&truth, &pred)?,
    })
}

fn trace(fold: usize, n_test: usize, p: &Prepared) -> FoldTrace {
    FoldTrace {
        fold,
        n_train: p.n_original,
        n_test,
        vocab_digest: p.layout.vocab.as_ref().map(BoWVocabulary::digest),
        scaler_digest: p.scaler.digest(),
        training_set_digest: p.digest.clone(),
        n_synthetic: p.x.len() - p.n_original,
    }
}

fn split_all(corpus: &Corpus, folds: &FoldAssignment) -> Vec<(Vec<usize>, Vec<usize>)> {
    (0..folds.k)
        .map(|f| {
            (
                folds.train_indices(corpus, f),
                folds.test_indices(corpus, f),
            )
        })
        .collect()
}

/// Stratified k-fold cross-validation of one model on one mask.
pub fn cross_validate(
    corpus: &Corpus,
    mask: FeatureMask,
    stage: Stage,
    spec: &ModelSpec,
    cfg: &CvConfig,
    extractor: &FeatureExtractor,
) -> Result<CvResult> {
    let folds = stratified_kfold(corpus, cfg.k, cfg.seed)?;
    cross_validate_with_folds(corpus, &folds, mask, stage, spec, cfg, extractor)
}

/// As [`cross_validate`] with a given fold assignment.
pub fn cross_validate_with_folds(
    corpus: &Corpus,
    folds: &FoldAssignment,
    mask: FeatureMask,
    stage: Stage,
    spec: &ModelSpec,
    cfg: &CvConfig,
    extractor: &FeatureExtractor,
) -> Result<CvResult> {
    let features = extract_all(corpus, extractor);
    let y = corpus.targets();
    let results = split_all(corpus, folds)
        .into_par_iter()
        .enumerate()
        .map(|(f, (train, test))| {
            let vocab = mask
                .te
                .then(|| fit_vocab(&features, &train, cfg.bow_cap))
                .transpose()?;
            let smote = match spec {
                ModelSpec::MeanBaseline => None,
                ModelSpec::Ensemble { .. } => fold_smote(cfg.smote.as_ref(), f),
            };
            let p = prepare(
                &features,
                &y,
                &train,
                mask,
                stage,
                vocab.as_ref(),
                smote.as_ref(),
            )?;
            let m = score_fold(&features, &y, &test, f, &p, spec)?;
            Ok((m, trace(f, test.len(), &p)))
        })
        .collect::<Result<Vec<_>>>()?;
    let (per_fold, traces): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    Ok(CvResult {
        report: MetricReport::from_folds(per_fold),
        traces,
        manifest: CvManifest {
            corpus_digest: corpus_digest(corpus),
            k: folds.k,
            fold_seed: cfg.seed,
            mask,
            stage,
            model: spec.clone(),
            smote: cfg.smote.clone(),
            bow_cap: cfg.bow_cap,
            protocol: PREPROCESSING_PROTOCOL.into(),
        },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationCell {
    /// 1-based row in the fixed mask order.
    pub row: usize,
    pub mask: FeatureMask,
    pub model: String,
    pub report: MetricReport,
    /// Lowest (or joint lowest) mean MSE for this model.
    pub best_mse: bool,
    /// Highest (or joint highest) mean R² for this model.
    pub best_r2: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationManifest {
    pub corpus_digest: String,
    pub stage: Stage,
    pub k: usize,
    pub fold_seed: u64,
    pub smote: Option<SmoteConfig>,
    pub bow_cap: usize,
    pub models: Vec<ModelSpec>,
    pub protocol: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationGrid {
    pub rows: Vec<FeatureMask>,
    pub models: Vec<String>,
    /// Row-major: all models for row 1, then row 2, …
    pub cells: Vec<AblationCell>,
    pub manifest: AblationManifest,
}

impl AblationGrid {
    pub fn cell(&self, mask: FeatureMask, model: &str) -> Option<&AblationCell> {
        self.cells
            .iter()
            .find(|c| c.mask == mask && c.model == model)
    }

    /// Rows ordered by mean R² for `model`, worst first.
    pub fn rows_by_r2(&self, model: &str) -> Vec<(FeatureMask, Option<f64>)> {
        let mut rows: Vec<_> = self
            .cells
            .iter()
            .filter(|c| c.model == model)
            .map(|c| (c.mask, c.report.r2))
            .collect();
        rows.sort_by(|a, b| {
            let key = |r: Option<f64>| r.unwrap_or(f64::NEG_INFINITY);
            key(a.1).total_cmp(&key(b.1))
        });
        rows
    }

    pub fn to_csv(&self) -> String {
        let k = self.manifest.k;
        let mut out = String::from("row,mask,te,mt,tw,ac,model,mse,r2,mae,best_mse,best_r2");
        for metric in ["mse", "r2", "mae"] {
            for f in 1..=k {
                write!(out, ",{metric}_fold{f}").unwrap();
            }
        }
        out.push('\n');
        let r2_cell = |r: Option<f64>| r.map_or("error:zero_variance".to_string(), fmt);
        for c in &self.cells {
            let m = c.mask;
            write!(
                out,
                "{},\"{}\",{},{},{},{},{},{},{},{},{},{}",
                c.row,
                m,
                u8::from(m.te),
                u8::from(m.mt),
                u8::from(m.tw),
                u8::from(m.ac),
                c.model,
                fmt(c.report.mse),
                r2_cell(c.report.r2),
                fmt(c.report.mae),
                u8::from(c.best_mse),
                u8::from(c.best_r2),
            )
            .unwrap();
            for f in &c.report.per_fold {
                write!(out, ",{}", fmt(f.mse)).unwrap();
            }
            for f in &c.report.per_fold {
                write!(out, ",{}", r2_cell(f.r2)).unwrap();
            }
            for f in &c.report.per_fold {
                write!(out, ",{}", fmt(f.mae)).unwrap();
            }
            out.push('\n');
        }
        out
    }
}

fn fmt(v: f64) -> String {
    format!("{v:.6}")
}

/// Cross-validate every mask in table order against every model. Features
/// are extracted once; vocabularies are fit once per fold; scaled and
/// oversampled training sets are shared by the models of a (fold, mask).
pub fn run_ablation(
    corpus: &Corpus,
    stage: Stage,
    models: &[ModelSpec],
    cfg: &CvConfig,
    extractor: &FeatureExtractor,
) -> Result<AblationGrid> {
    if models.is_empty() {
        return Err(EvalError::Model("none".into(), "no models given".into()));
    }
    let folds = stratified_kfold(corpus, cfg.k, cfg.seed)?;
    let features = extract_all(corpus, extractor);
    let y = corpus.targets();
    let splits = split_all(corpus, &folds);
    let vocabs = splits
        .par_iter()
        .map(|(train, _)| fit_vocab(&features, train, cfg.bow_cap))
        .collect::<Result<Vec<_>>>()?;

    let jobs: Vec<(usize, usize)> = (0..FeatureMask::TABLE_ROWS.len())
        .flat_map(|r| (0..folds.k).map(move |f| (r, f)))
        .collect();
    let done = jobs
        .par_iter()
        .map(|&(r, f)| {
            let mask = FeatureMask::TABLE_ROWS[r];
            let (train, test) = &splits[f];
            let vocab = mask.te.then_some(&vocabs[f]);
            // The baseline ignores synthetic rows, so one training set
            // serves every model.
            let p = prepare(
                &features,
                &y,
                train,
                mask,
                stage,
                vocab,
                fold_smote(cfg.smote.as_ref(), f).as_ref(),
            )?;
            let scores = models
                .iter()
                .map(|spec| score_fold(&features, &y, test, f, &p, spec))
                .collect::<Result<Vec<_>>>()?;
            log::info!("ablation row {} fold {} done", r + 1, f + 1);
            Ok(((r, f), scores))
        })
        .collect::<Result<Vec<_>>>()?;
    let by_key: HashMap<(usize, usize), Vec<FoldMetrics>> = done.into_iter().collect();

    let mut cells = Vec::with_capacity(15 * models.len());
    for (r, &mask) in FeatureMask::TABLE_ROWS.iter().enumerate() {
        for (m, spec) in models.iter().enumerate() {
            let per_fold = (0..folds.k).map(|f| by_key[&(r, f)][m].clone()).collect();
            cells.push(AblationCell {
                row: r + 1,
                mask,
                model: spec.name().to_string(),
                report: MetricReport::from_folds(per_fold),
                best_mse: false,
                best_r2: false,
            });
        }
    }
    mark_best(&mut cells, models);
    Ok(AblationGrid {
        rows: FeatureMask::TABLE_ROWS.to_vec(),
        models: models.iter().map(|m| m.name().to_string()).collect(),
        cells,
        manifest: AblationManifest {
            corpus_digest: corpus_digest(corpus),
            stage,
            k: cfg.k,
            fold_seed: cfg.seed,
            smote: cfg.smote.clone(),
            bow_cap: cfg.bow_cap,
            models: models.to_vec(),
            protocol: PREPROCESSING_PROTOCOL.into(),
        },
    })
}

fn mark_best(cells: &mut [AblationCell], models: &[ModelSpec]) {
    for spec in models {
        let name = spec.name();
        let ours = || cells.iter().filter(|c| c.model == name);
        let best_mse = ours().map(|c| c.report.mse).fold(f64::INFINITY, f64::min);
        let best_r2 = ours()
            .filter_map(|c| c.report.r2)
            .fold(f64::NEG_INFINITY, f64::max);
        for c in cells.iter_mut().filter(|c| c.model == name) {
            c.best_mse = c.report.mse == best_mse;
            c.best_r2 = c.report.r2 == Some(best_r2);
        }
    }
}

/// Number of conversations per abusive-reply count.
pub fn reply_distribution(corpus: &Corpus) -> BTreeMap<usize, usize> {
    let mut h = BTreeMap::new();
    for c in corpus.iter() {
        *h.entry(c.y()).or_insert(0) += 1;
    }
    h
}

pub fn distribution_csv(h: &BTreeMap<usize, usize>) -> String {
    let mut out = String::from("y,count\n");
    for (y, n) in h {
        writeln!(out, "{y},{n}").unwrap();
    }
    out
}

/// Whole-corpus training settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub kind: ModelKind,
    pub params: HyperParams,
    pub mask: FeatureMask,
    pub stage: Stage,
    pub smote: Option<SmoteConfig>,
    pub bow_cap: usize,
    /// Rows kept as the attribution background.
    pub background_size: usize,
    pub background_seed: u64,
}

impl TrainConfig {
    pub fn new(kind: ModelKind, mask: FeatureMask, stage: Stage) -> Self {
        Self {
            kind,
            params: HyperParams::defaults(kind),
            mask,
            stage,
            smote: Some(SmoteConfig::default()),
            bow_cap: BOW_CAP,
            background_size: 100,
            background_seed: 0,
        }
    }
}

/// Fit vocabulary, scaler, oversampling and model on the whole corpus and
/// package them.
pub fn fit_artifact(
    corpus: &Corpus,
    cfg: &TrainConfig,
    extractor: &FeatureExtractor,
) -> Result<ModelArtifact> {
    let features = extract_all(corpus, extractor);
    let y = corpus.targets();
    let all: Vec<usize> = (0..corpus.len()).collect();
    let vocab = cfg
        .mask
        .te
        .then(|| fit_vocab(&features, &all, cfg.bow_cap))
        .transpose()?;
    let p = prepare(
        &features,
        &y,
        &all,
        cfg.mask,
        cfg.stage,
        vocab.as_ref(),
        cfg.smote.as_ref(),
    )?;
    let manifest = p.layout.manifest();
    let digest = manifest.digest();
    let bow_width = p.layout.bow_width();
    let model = fit_model(
        cfg.kind,
        &to_matrix(&p.x, bow_width)?,
        &p.y,
        &cfg.params,
        &digest,
    )?;

    let mut pick: Vec<usize> = (0..p.n_original).collect();
    if pick.len() > cfg.background_size {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.background_seed);
        pick.shuffle(&mut rng);
        pick.truncate(cfg.background_size);
        pick.sort_unstable();
    }
    let background = pick.iter().map(|&i| p.x[i].to_row(bow_width)).collect();
    let (target_min, target_max) =
        p.y.iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                (lo.min(*v), hi.max(*v))
            });
    let artifact = ModelArtifact {
        format_version: ARTIFACT_FORMAT_VERSION,
        kind: cfg.kind,
        params: cfg.params.clone(),
        mask: cfg.mask,
        stage: cfg.stage,
        feature_manifest: manifest,
        feature_manifest_digest: digest,
        vocab: p.layout.vocab.clone(),
        scaler: p.scaler,
        lexicons: extractor.registry().clone(),
        model,
        training: TrainingManifest {
            corpus_digest: corpus_digest(corpus),
            n_conversations: corpus.len(),
            n_training_rows: p.x.len(),
            smote: cfg.smote.clone(),
            target_min,
            target_max,
            tagger: extractor.tagger_name().to_string(),
            lexicon_digests: extractor.registry().digests(),
        },
        background,
    };
    artifact.validate()?;
    Ok(artifact)
}
