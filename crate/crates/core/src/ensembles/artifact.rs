//! Self-contained, versioned model file: everything needed to turn a raw
//! post into a model row and score it.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::{EnsembleError, HyperParams, Model, ModelKind};
use crate::balance::SmoteConfig;
use crate::features::{
    apply_scaler, BoWVocabulary, ExtractedFeatures, FeatureError, FeatureExtractor, FeatureLayout,
    FeatureManifest, FeatureMask, ScalerState, Stage,
};
use crate::lexicons::LexiconRegistry;

pub const ARTIFACT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ArtifactError {
    #[error("cannot read or write model file: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed model file: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unsupported model format version {0} (this build reads {ARTIFACT_FORMAT_VERSION})")]
    Version(u32),
    #[error("inconsistent model file: {0}")]
    Invalid(String),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Ensemble(#[from] EnsembleError),
}

/// How the model was trained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingManifest {
    pub corpus_digest: String,
    pub n_conversations: usize,
    /// Rows after oversampling.
    pub n_training_rows: usize,
    pub smote: Option<SmoteConfig>,
    pub target_min: f64,
    pub target_max: f64,
    pub tagger: String,
    pub lexicon_digests: Vec<(String, String)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelArtifact {
    pub format_version: u32,
    pub kind: ModelKind,
    pub params: HyperParams,
    pub mask: FeatureMask,
    pub stage: Stage,
    pub feature_manifest: FeatureManifest,
    pub feature_manifest_digest: String,
    pub vocab: Option<BoWVocabulary>,
    pub scaler: ScalerState,
    pub lexicons: LexiconRegistry,
    pub model: Model,
    pub training: TrainingManifest,
    /// Scaled training rows used as the attribution background.
    pub background: Vec<Vec<f64>>,
}

impl ModelArtifact {
    pub fn layout(&self) -> FeatureLayout {
        FeatureLayout {
            mask: self.mask,
            stage: self.stage,
            vocab: self.vocab.clone(),
        }
    }

    pub fn extractor(&self) -> FeatureExtractor {
        FeatureExtractor::new(self.lexicons.clone())
    }

    /// Checks every cross-reference inside the file.
    pub fn validate(&self) -> Result<(), ArtifactError> {
        if self.format_version != ARTIFACT_FORMAT_VERSION {
            return Err(ArtifactError::Version(self.format_version));
        }
        let invalid = |m: String| Err(ArtifactError::Invalid(m));
        let digest = self.feature_manifest.digest();
        if digest != self.feature_manifest_digest {
            return invalid("feature manifest digest does not match its contents".into());
        }
        if self.model.feature_manifest_hash() != digest {
            return invalid("model was trained against a different feature manifest".into());
        }
        if self.model.kind() != self.kind {
            return invalid(format!(
                "declared kind {} but model is {}",
                self.kind,
                self.model.kind()
            ));
        }
        let layout = FeatureLayout::new(self.mask, self.stage, self.vocab.clone())?;
        if layout.manifest() != self.feature_manifest {
            return invalid("feature manifest does not match mask, stage and vocabulary".into());
        }
        if self.model.n_features() != self.feature_manifest.len() {
            return invalid(format!(
                "model expects {} features, manifest lists {}",
                self.model.n_features(),
                self.feature_manifest.len()
            ));
        }
        if self.scaler.width() != layout.dense_width()
            || self.scaler.std.len() != self.scaler.mean.len()
        {
            return invalid("scaler width does not match the dense feature block".into());
        }
        if self.model.trees().is_empty() {
            return invalid("model has no trees".into());
        }
        if let Some(r) = self
            .background
            .iter()
            .find(|r| r.len() != self.feature_manifest.len())
        {
            return invalid(format!("background row of width {}", r.len()));
        }
        Ok(())
    }

    /// Scaled model row for extracted features.
    pub fn row(&self, features: &ExtractedFeatures) -> Result<Vec<f64>, ArtifactError> {
        let layout = self.layout();
        let v = apply_scaler(&layout.vector(features), &self.scaler)?;
        Ok(v.to_row(layout.bow_width()))
    }

    pub fn predict_row(&self, row: &[f64]) -> Result<f64, ArtifactError> {
        Ok(self
            .model
            .predict_checked(row, &self.feature_manifest_digest)?)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("artifact serializes")
    }

    /// Writes the file and returns its id (hex SHA-256 of the bytes).
    pub fn save(&self, path: impl AsRef<Path>) -> Result<String, ArtifactError> {
        let bytes = self.to_bytes();
        fs::write(path, &bytes)?;
        Ok(artifact_id(&bytes))
    }

    /// Parses and validates. Tree nesting depth is unbounded.
    pub fn from_slice(bytes: &[u8]) -> Result<Self, ArtifactError> {
        let mut de = serde_json::Deserializer::from_slice(bytes);
        de.disable_recursion_limit();
        let de = serde_stacker::Deserializer::new(&mut de);
        let artifact = ModelArtifact::deserialize(de)?;
        artifact.validate()?;
        Ok(artifact)
    }

    /// Loads, validates and returns the artifact with its id.
    pub fn load(path: impl AsRef<Path>) -> Result<(Self, String), ArtifactError> {
        let bytes = fs::read(path)?;
        let artifact = Self::from_slice(&bytes)?;
        Ok((artifact, artifact_id(&bytes)))
    }
}

pub fn artifact_id(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}
