//! Locale-aware multi-objective learning to rank.
//!
//! A linear ranker is trained on a weighted combination of a click-based
//! RankNet loss and a graded-label ListNet loss. Locale boosting up-weights
//! clicked-over-unclicked pairs where only the clicked item matches the
//! query locale, and scales the graded labels of locale-matching items
//! before the ListNet target is formed. A synthetic simulator produces
//! click logs with cross-locale exposure imbalance, and the evaluation
//! module reports ranking quality, locality and paired significance tests.

pub mod commands;
pub mod data;
pub mod error;
pub mod eval;
pub mod io;
pub mod locale;
pub mod model;
pub mod objectives;
pub mod par;
pub mod simulator;
pub mod trainer;

pub use data::{Dataset, FeatureVector, FrequencyBucket, Item, QueryGroup, Regions, Violation};
pub use error::{Error, Result};
pub use model::LinearModel;
pub use par::Execution;
pub use trainer::{train, train_variant, TrainConfig, TrainHistory, Variant};
