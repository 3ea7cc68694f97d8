//! Training losses and their exact gradients for a linear scorer.
//!
//! Every loss is computed on the score vector `s = X w` of one query list;
//! the gradient with respect to `w` is `X^T (dL/ds)`.
//!
//! | Loss | Form |
//! |------|------|
//! | [`pairwise_loss`] | weighted RankNet over clicked x unclicked pairs, normalized by the weight sum |
//! | [`listnet_loss`] | top-1 ListNet cross-entropy against a temperature softmax of labels |
//! | [`combined_loss`] | `lambda_rank * pairwise + lambda_list * listwise` with locale boosting |

use std::fmt;

use crate::data::QueryGroup;
use crate::error::{Error, Result};
use crate::locale;
use crate::model::LinearModel;
use crate::trainer::TrainConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SkipReason {
    NoPositives,
    NoNegatives,
    ZeroWeight,
    NoLabels,
    UniformLabels,
}

impl fmt::Display for SkipReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SkipReason::NoPositives => "no clicked items",
            SkipReason::NoNegatives => "no unclicked items",
            SkipReason::ZeroWeight => "pair weights sum to zero",
            SkipReason::NoLabels => "graded labels missing",
            SkipReason::UniformLabels => "all graded labels identical",
        })
    }
}

/// Per-pair weights for [`pairwise_loss`].
#[derive(Debug, Clone, Copy)]
pub enum PairWeights<'a> {
    Uniform,
    /// `weights[a][b]` weighs the pair `(P[a], N[b])`, with `P` and `N` in
    /// list order.
    Explicit(&'a [Vec<f64>]),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairwiseLossResult {
    pub loss: f64,
    /// `dL/ds`, one entry per item.
    pub score_gradient: Vec<f64>,
    /// `dL/dw`.
    pub gradient: Vec<f64>,
    pub pair_count: usize,
    pub weight_sum: f64,
    pub skipped: Option<SkipReason>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ListwiseLossResult {
    pub loss: f64,
    pub score_gradient: Vec<f64>,
    pub gradient: Vec<f64>,
    pub target: Vec<f64>,
    pub skipped: Option<SkipReason>,
}

/// `log(1 + exp(-delta))` without overflow.
pub fn softplus_neg(delta: f64) -> f64 {
    (-delta).max(0.0) + (-delta.abs()).exp().ln_1p()
}

/// Logistic function, stable for large `|x|`.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn check_shape(features: &[&[f64]], n: usize) -> Result<usize> {
    if features.len() != n {
        return Err(Error::LengthMismatch {
            context: "feature rows vs scores",
            left: features.len(),
            right: n,
        });
    }
    let dim = features.first().map_or(0, |row| row.len());
    if let Some(row) = features.iter().find(|row| row.len() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            actual: row.len(),
        });
    }
    Ok(dim)
}

/// `X^T g` for the rows of one query list.
pub fn backprop(features: &[&[f64]], score_gradient: &[f64], dim: usize) -> Vec<f64> {
    let mut grad = vec![0.0; dim];
    for (row, &g) in features.iter().zip(score_gradient) {
        if g == 0.0 {
            continue;
        }
        for (acc, &x) in grad.iter_mut().zip(row.iter()) {
            *acc += g * x;
        }
    }
    grad
}

/// Weighted RankNet loss over all clicked/unclicked pairs of one list,
/// normalized by the total pair weight. With uniform weights this is the
/// plain `1/(|P||N|)` average.
pub fn pairwise_loss(
    scores: &[f64],
    features: &[&[f64]],
    clicks: &[bool],
    weights: PairWeights<'_>,
) -> Result<PairwiseLossResult> {
    let n = scores.len();
    if clicks.len() != n {
        return Err(Error::LengthMismatch {
            context: "clicks vs scores",
            left: clicks.len(),
            right: n,
        });
    }
    let dim = check_shape(features, n)?;
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::NonFinite("scores"));
    }
    let positives: Vec<usize> = (0..n).filter(|&i| clicks[i]).collect();
    let negatives: Vec<usize> = (0..n).filter(|&i| !clicks[i]).collect();

    if let PairWeights::Explicit(w) = weights {
        if w.len() != positives.len() || w.iter().any(|row| row.len() != negatives.len()) {
            return Err(Error::invalid(
                "pair_weights",
                format!("expected a {}x{} matrix", positives.len(), negatives.len()),
            ));
        }
        if w.iter().flatten().any(|&x| !x.is_finite() || x < 0.0) {
            return Err(Error::invalid(
                "pair_weights",
                "weights must be finite and >= 0",
            ));
        }
    }

    let skip = |reason| PairwiseLossResult {
        loss: 0.0,
        score_gradient: vec![0.0; n],
        gradient: vec![0.0; dim],
        pair_count: positives.len() * negatives.len(),
        weight_sum: 0.0,
        skipped: Some(reason),
    };
    if positives.is_empty() {
        return Ok(skip(SkipReason::NoPositives));
    }
    if negatives.is_empty() {
        return Ok(skip(SkipReason::NoNegatives));
    }

    // A constant weight matrix normalizes away; use the unweighted sum so the
    // result is bit-identical to the uniform case.
    let (weights, scale) = match weights {
        PairWeights::Explicit(w) if is_constant_positive(w) => (PairWeights::Uniform, w[0][0]),
        other => (other, 1.0),
    };
    let weight_of = |a: usize, b: usize| match weights {
        PairWeights::Uniform => 1.0,
        PairWeights::Explicit(w) => w[a][b],
    };
    let mut weight_sum = 0.0;
    let mut total = 0.0;
    let mut score_gradient = vec![0.0; n];
    for (a, &i) in positives.iter().enumerate() {
        for (b, &j) in negatives.iter().enumerate() {
            let w = weight_of(a, b);
            if w == 0.0 {
                continue;
            }
            let delta = scores[i] - scores[j];
            weight_sum += w;
            total += w * softplus_neg(delta);
            // d/d(delta) log(1 + e^-delta) = -sigmoid(-delta)
            let slope = -w * sigmoid(-delta);
            score_gradient[i] += slope;
            score_gradient[j] -= slope;
        }
    }
    if weight_sum <= 0.0 {
        return Ok(skip(SkipReason::ZeroWeight));
    }
    for g in &mut score_gradient {
        *g /= weight_sum;
    }
    let gradient = backprop(features, &score_gradient, dim);
    Ok(PairwiseLossResult {
        loss: total / weight_sum,
        score_gradient,
        gradient,
        pair_count: positives.len() * negatives.len(),
        weight_sum: weight_sum * scale,
        skipped: None,
    })
}

fn is_constant_positive(w: &[Vec<f64>]) -> bool {
    let first = w
        .first()
        .and_then(|row| row.first())
        .copied()
        .unwrap_or(0.0);
    first > 0.0 && w.iter().flatten().all(|&x| x == first)
}

/// Numerically stable softmax.
pub fn softmax(values: &[f64]) -> Vec<f64> {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = values.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

fn log_softmax(values: &[f64]) -> Vec<f64> {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    values.iter().map(|v| v - lse).collect()
}

/// Target distribution `softmax(labels / tau)`.
pub fn listnet_target(labels: &[f64], tau: f64) -> Result<Vec<f64>> {
    if tau <= 0.0 || !tau.is_finite() {
        return Err(Error::invalid(
            "tau",
            format!("must be finite and > 0, got {tau}"),
        ));
    }
    if labels.is_empty() {
        return Err(Error::invalid("labels", "empty list"));
    }
    if labels.iter().any(|r| !r.is_finite() || *r < 0.0) {
        return Err(Error::invalid("labels", "labels must be finite and >= 0"));
    }
    let scaled: Vec<f64> = labels.iter().map(|r| r / tau).collect();
    Ok(softmax(&scaled))
}

/// Top-1 ListNet cross-entropy `-sum p log softmax(s)`.
pub fn listnet_loss(
    scores: &[f64],
    features: &[&[f64]],
    target: &[f64],
) -> Result<ListwiseLossResult> {
    let n = scores.len();
    if target.len() != n {
        return Err(Error::LengthMismatch {
            context: "target vs scores",
            left: target.len(),
            right: n,
        });
    }
    let dim = check_shape(features, n)?;
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::NonFinite("scores"));
    }
    if target.iter().any(|p| !p.is_finite()) {
        return Err(Error::NonFinite("target distribution"));
    }
    let mass: f64 = target.iter().sum();
    if target.iter().any(|&p| p < 0.0) || (mass - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(
            "target",
            format!("not a distribution (sum = {mass})"),
        ));
    }
    let log_q = log_softmax(scores);
    let loss: f64 = -target
        .iter()
        .zip(&log_q)
        .filter(|(&p, _)| p > 0.0)
        .map(|(p, lq)| p * lq)
        .sum::<f64>();
    let score_gradient: Vec<f64> = log_q
        .iter()
        .zip(target)
        .map(|(lq, p)| lq.exp() - p)
        .collect();
    let gradient = backprop(features, &score_gradient, dim);
    Ok(ListwiseLossResult {
        loss,
        score_gradient,
        gradient,
        target: target.to_vec(),
        skipped: None,
    })
}

/// Listwise term for one list: no labels or identical labels skip it;
/// otherwise labels of locale-matching items are boosted by `eta` before
/// forming the target.
pub fn listwise_term(
    scores: &[f64],
    features: &[&[f64]],
    labels: Option<&[u8]>,
    matches: &[u8],
    tau: f64,
    eta: f64,
) -> Result<ListwiseLossResult> {
    let n = scores.len();
    let dim = check_shape(features, n)?;
    let skip = |reason| ListwiseLossResult {
        loss: 0.0,
        score_gradient: vec![0.0; n],
        gradient: vec![0.0; dim],
        target: Vec::new(),
        skipped: Some(reason),
    };
    let Some(labels) = labels else {
        return Ok(skip(SkipReason::NoLabels));
    };
    if labels.len() != n {
        return Err(Error::LengthMismatch {
            context: "labels vs scores",
            left: labels.len(),
            right: n,
        });
    }
    if labels.iter().all(|&r| r == labels[0]) {
        return Ok(skip(SkipReason::UniformLabels));
    }
    let raw: Vec<f64> = labels.iter().map(|&r| f64::from(r)).collect();
    let boosted = locale::boost_labels(&raw, matches, eta)?;
    let target = listnet_target(&boosted, tau)?;
    listnet_loss(scores, features, &target)
}

/// Combined objective for one query list.
#[derive(Debug, Clone, PartialEq)]
pub struct CombinedLoss {
    pub loss: f64,
    pub gradient: Vec<f64>,
    /// Unweighted pairwise term, when it applied.
    pub pairwise: Option<f64>,
    /// Unweighted listwise term, when it applied.
    pub listwise: Option<f64>,
    /// The list had no (complete) graded labels.
    pub label_fallback: bool,
}

impl CombinedLoss {
    pub fn contributes(&self) -> bool {
        self.pairwise.is_some() || self.listwise.is_some()
    }
}

/// `lambda_rank * L_pair^loc + lambda_list * L_list^loc` for one list at
/// boost factor `eta`. A term that does not apply (no clicks or no negatives;
/// missing or identical labels) is dropped without renormalizing the lambdas.
pub fn combined_loss(
    group: &QueryGroup,
    model: &LinearModel,
    config: &TrainConfig,
    eta: f64,
) -> Result<CombinedLoss> {
    let scores = model.scores(group)?;
    let features: Vec<&[f64]> = group
        .items
        .iter()
        .map(|it| it.features.as_slice())
        .collect();
    let matches = locale::group_matches(group);
    let dim = model.dim();
    let mut loss = 0.0;
    let mut gradient = vec![0.0; dim];
    let mut pairwise = None;
    let mut listwise = None;

    if config.lambda_rank > 0.0 {
        let (positives, negatives) = group.partition_pairs();
        let weights = locale::pair_weight_matrix(&positives, &negatives, &matches, eta)?;
        let result = pairwise_loss(
            &scores,
            &features,
            &group.clicks(),
            PairWeights::Explicit(&weights),
        )?;
        if result.skipped.is_none() {
            loss += config.lambda_rank * result.loss;
            for (g, d) in gradient.iter_mut().zip(&result.gradient) {
                *g += config.lambda_rank * d;
            }
            pairwise = Some(result.loss);
        }
    }

    let labels = group.graded_labels();
    if config.lambda_list > 0.0 {
        let result = listwise_term(
            &scores,
            &features,
            labels.as_deref(),
            &matches,
            config.tau,
            eta,
        )?;
        if result.skipped.is_none() {
            loss += config.lambda_list * result.loss;
            for (g, d) in gradient.iter_mut().zip(&result.gradient) {
                *g += config.lambda_list * d;
            }
            listwise = Some(result.loss);
        }
    }

    Ok(CombinedLoss {
        loss,
        gradient,
        pairwise,
        listwise,
        label_fallback: labels.is_none(),
    })
}
