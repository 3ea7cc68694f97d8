//! Linear scoring model `s(q, d) = w . phi(q, d)`.

use std::cmp::Ordering;

use crate::data::{Dataset, FeatureVector, QueryGroup};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    weights: Vec<f64>,
    feature_names: Vec<String>,
}

impl LinearModel {
    pub fn new(weights: Vec<f64>, feature_names: Vec<String>) -> Result<Self> {
        if weights.len() != feature_names.len() {
            return Err(Error::LengthMismatch {
                context: "model weights vs feature names",
                left: weights.len(),
                right: feature_names.len(),
            });
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::NonFinite("model weights"));
        }
        Ok(LinearModel {
            weights,
            feature_names,
        })
    }

    pub fn zeros(feature_names: Vec<String>) -> Self {
        LinearModel {
            weights: vec![0.0; feature_names.len()],
            feature_names,
        }
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn score(&self, features: &FeatureVector) -> Result<f64> {
        score(self, features)
    }

    pub fn scores(&self, group: &QueryGroup) -> Result<Vec<f64>> {
        group
            .items
            .iter()
            .map(|it| self.score(&it.features))
            .collect()
    }

    pub fn rank(&self, group: &QueryGroup) -> Result<Vec<usize>> {
        rank(self, group)
    }

    pub(crate) fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    /// Errors unless the model was trained on the same feature columns.
    pub fn check_compatible(&self, dataset: &Dataset) -> Result<()> {
        if self.dim() != dataset.feature_dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: dataset.feature_dim,
            });
        }
        if self.feature_names != dataset.feature_names {
            let first = self
                .feature_names
                .iter()
                .zip(&dataset.feature_names)
                .position(|(a, b)| a != b)
                .unwrap_or(0);
            return Err(Error::FeatureNames(format!(
                "column {first}: model has `{}`, dataset has `{}`",
                self.feature_names[first], dataset.feature_names[first]
            )));
        }
        Ok(())
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn score(model: &LinearModel, features: &FeatureVector) -> Result<f64> {
    if features.len() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            actual: features.len(),
        });
    }
    Ok(dot(&model.weights, features.as_slice()))
}

/// Orders item indices by descending score; equal scores fall back to
/// ascending `item_id`.
pub fn rank(model: &LinearModel, group: &QueryGroup) -> Result<Vec<usize>> {
    let scores = model.scores(group)?;
    Ok(rank_by_scores(group, &scores))
}

pub fn rank_by_scores(group: &QueryGroup, scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .unwrap_or(Ordering::Equal)
            .then_with(|| group.items[a].item_id.cmp(&group.items[b].item_id))
    });
    order
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureImportance {
    pub index: usize,
    pub name: String,
    pub weight: f64,
    pub stddev: f64,
    pub importance: f64,
}

/// Standardized weight magnitude `|w_k| * std(x_k)` for every feature, most
/// important first. The standard deviation is the population one over all
/// items in the dataset. Ties keep column order.
pub fn feature_importance(
    model: &LinearModel,
    dataset: &Dataset,
) -> Result<Vec<FeatureImportance>> {
    model.check_compatible(dataset)?;
    let dim = model.dim();
    let count = dataset.item_count();
    let mut mean = vec![0.0; dim];
    let mut m2 = vec![0.0; dim];
    let mut seen = 0usize;
    for item in dataset.queries.iter().flat_map(|q| &q.items) {
        seen += 1;
        for (k, &x) in item.features.as_slice().iter().enumerate() {
            // Welford
            let delta = x - mean[k];
            mean[k] += delta / seen as f64;
            m2[k] += delta * (x - mean[k]);
        }
    }
    let mut table: Vec<FeatureImportance> = (0..dim)
        .map(|k| {
            let stddev = if count == 0 {
                0.0
            } else {
                (m2[k] / count as f64).sqrt()
            };
            let weight = model.weights[k];
            FeatureImportance {
                index: k,
                name: model.feature_names[k].clone(),
                weight,
                stddev,
                importance: weight.abs() * stddev,
            }
        })
        .collect();
    table.sort_by(|a, b| {
        b.importance
            .partial_cmp(&a.importance)
            .unwrap_or(Ordering::Equal)
            .then(a.index.cmp(&b.index))
    });
    Ok(table)
}

/// 1-based position of `name` in an importance table.
pub fn importance_rank(table: &[FeatureImportance], name: &str) -> Option<usize> {
    table.iter().position(|f| f.name == name).map(|p| p + 1)
}
