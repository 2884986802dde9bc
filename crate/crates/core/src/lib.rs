//! Forecast how many abusive replies a post will attract, from features
//! available before it is posted.
//!
//! The pipeline: [`corpus`] ingestion or synthesis, [`textprep`]
//! preprocessing, [`lexicons`] labeling, [`features`] extraction,
//! [`balance`] oversampling, [`ensembles`] training, [`eval`]
//! cross-validation and ablation, [`explain`] attribution and analytics.

pub mod balance;
pub mod corpus;
pub mod ensembles;
pub mod eval;
pub mod explain;
pub mod features;
pub mod lexicons;
pub mod textprep;
