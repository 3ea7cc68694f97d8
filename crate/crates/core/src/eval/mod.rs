//! Evaluation: per-query metrics aggregated by locale and frequency bucket,
//! and paired significance testing between two models.

pub mod metrics;
pub mod report;
pub mod stats;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, FrequencyBucket, QueryGroup};
use crate::error::{Error, Result};
use crate::model::LinearModel;
use crate::par::Execution;

pub use metrics::{local_at_k, ndcg_at_k, precision_recall_at_k};
pub use stats::{benjamini_hochberg, significance_stars, wilcoxon_signed_rank};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Local,
    Ndcg,
    Precision,
    Recall,
}

impl Metric {
    pub const ALL: [Metric; 4] = [
        Metric::Local,
        Metric::Ndcg,
        Metric::Precision,
        Metric::Recall,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Metric::Local => "local",
            Metric::Ndcg => "ndcg",
            Metric::Precision => "precision",
            Metric::Recall => "recall",
        }
    }

    /// Per-query value under `ranking`; `None` when the metric needs
    /// ground truth the list does not have.
    pub fn evaluate(self, group: &QueryGroup, ranking: &[usize], k: usize) -> Option<f64> {
        match self {
            Metric::Local => Some(local_at_k(group, ranking, k)),
            _ => {
                let truth = metrics::ground_truth(group)?;
                Some(match self {
                    Metric::Ndcg => ndcg_at_k(ranking, &truth, k),
                    Metric::Precision => {
                        precision_recall_at_k(
                            ranking,
                            &truth,
                            k,
                            metrics::DEFAULT_RELEVANCE_THRESHOLD,
                        )
                        .0
                    }
                    Metric::Recall => {
                        precision_recall_at_k(
                            ranking,
                            &truth,
                            k,
                            metrics::DEFAULT_RELEVANCE_THRESHOLD,
                        )
                        .1
                    }
                    Metric::Local => unreachable!(),
                })
            }
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "local" | "local%" | "region_match" => Ok(Metric::Local),
            "ndcg" => Ok(Metric::Ndcg),
            "precision" | "prec" => Ok(Metric::Precision),
            "recall" => Ok(Metric::Recall),
            other => Err(Error::invalid(
                "metric",
                format!("unknown metric `{other}` (expected local, ndcg, precision or recall)"),
            )),
        }
    }
}

/// Key of one metric column, e.g. `ndcg@20`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MetricKey {
    pub metric: Metric,
    pub k: usize,
}

impl fmt::Display for MetricKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}@{}", self.metric, self.k)
    }
}

impl FromStr for MetricKey {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (metric, k) = s
            .split_once('@')
            .ok_or_else(|| Error::invalid("metric", format!("`{s}` is not of the form name@k")))?;
        let k: usize = k
            .parse()
            .map_err(|_| Error::invalid("metric", format!("bad cutoff in `{s}`")))?;
        Ok(MetricKey {
            metric: metric.parse()?,
            k,
        })
    }
}

impl Serialize for MetricKey {
    fn serialize<S: serde::Serializer>(
        &self,
        serializer: S,
    ) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for MetricKey {
    fn deserialize<D: serde::Deserializer<'de>>(
        deserializer: D,
    ) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Display name for an optional query locale.
pub fn locale_label(locale: Option<&str>) -> &str {
    locale.unwrap_or("-")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryScores {
    pub qid: String,
    pub locale: Option<String>,
    pub bucket: FrequencyBucket,
    pub values: BTreeMap<MetricKey, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub locale: Option<String>,
    pub bucket: FrequencyBucket,
    pub key: MetricKey,
    pub mean: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub ks: Vec<usize>,
    pub metrics: Vec<Metric>,
    /// Locales in dataset order.
    pub locales: Vec<Option<String>>,
    pub cells: Vec<Cell>,
    /// Per-query values in dataset order, kept for paired tests.
    pub queries: Vec<QueryScores>,
}

impl EvalReport {
    pub fn cell(
        &self,
        locale: Option<&str>,
        bucket: FrequencyBucket,
        key: MetricKey,
    ) -> Option<&Cell> {
        self.cells
            .iter()
            .find(|c| c.locale.as_deref() == locale && c.bucket == bucket && c.key == key)
    }

    /// Mean over all queries of `locale` (all buckets) that define `key`.
    pub fn locale_mean(&self, locale: Option<&str>, key: MetricKey) -> Option<f64> {
        let values: Vec<f64> = self
            .queries
            .iter()
            .filter(|q| q.locale.as_deref() == locale)
            .filter_map(|q| q.values.get(&key).copied())
            .collect();
        if values.is_empty() {
            None
        } else {
            Some(values.iter().sum::<f64>() / values.len() as f64)
        }
    }

    pub fn query(&self, qid: &str) -> Option<&QueryScores> {
        self.queries.iter().find(|q| q.qid == qid)
    }
}

/// Scores every query under `model`'s ranking for each metric and cutoff,
/// then averages by locale x bucket.
pub fn evaluate(
    dataset: &Dataset,
    model: &LinearModel,
    ks: &[usize],
    metric_set: &[Metric],
    execution: Execution,
) -> Result<EvalReport> {
    if ks.is_empty() || ks.contains(&0) {
        return Err(Error::invalid("k", "cutoffs must be >= 1"));
    }
    model.check_compatible(dataset)?;
    let queries = execution.try_map(&dataset.queries, |q| -> Result<QueryScores> {
        let ranking = model.rank(q)?;
        let mut values = BTreeMap::new();
        for &metric in metric_set {
            for &k in ks {
                if let Some(v) = metric.evaluate(q, &ranking, k) {
                    values.insert(MetricKey { metric, k }, v);
                }
            }
        }
        Ok(QueryScores {
            qid: q.qid.clone(),
            locale: q.locale.clone(),
            bucket: q.frequency_bucket,
            values,
        })
    })?;

    let locales = dataset.locales();
    let mut cells = Vec::new();
    for locale in &locales {
        for bucket in FrequencyBucket::ALL {
            let members: Vec<&QueryScores> = queries
                .iter()
                .filter(|q| &q.locale == locale && q.bucket == bucket)
                .collect();
            if members.is_empty() {
                continue;
            }
            for &metric in metric_set {
                for &k in ks {
                    let key = MetricKey { metric, k };
                    let vals: Vec<f64> = members
                        .iter()
                        .filter_map(|q| q.values.get(&key).copied())
                        .collect();
                    if vals.is_empty() {
                        continue;
                    }
                    cells.push(Cell {
                        locale: locale.clone(),
                        bucket,
                        key,
                        mean: vals.iter().sum::<f64>() / vals.len() as f64,
                        count: vals.len(),
                    });
                }
            }
        }
    }
    Ok(EvalReport {
        ks: ks.to_vec(),
        metrics: metric_set.to_vec(),
        locales,
        cells,
        queries,
    })
}

/// Local%@K per locale x bucket.
pub fn region_match_report(
    dataset: &Dataset,
    model: &LinearModel,
    ks: &[usize],
) -> Result<EvalReport> {
    evaluate(dataset, model, ks, &[Metric::Local], Execution::default())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignificanceRow {
    pub locale: Option<String>,
    pub n: usize,
    pub mean_a: f64,
    pub mean_b: f64,
    pub delta: f64,
    pub raw_p: f64,
    pub adjusted_p: f64,
    pub reject: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignificanceResult {
    pub key: MetricKey,
    pub alpha: f64,
    pub rows: Vec<SignificanceRow>,
}

/// Paired one-sided test of "model B beats model A" per locale, with BH
/// adjustment across locales. A locale whose differences are all zero gets
/// `raw_p = 1`.
pub fn compare_models(
    dataset: &Dataset,
    model_a: &LinearModel,
    model_b: &LinearModel,
    metric: Metric,
    k: usize,
    alpha: f64,
) -> Result<SignificanceResult> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::invalid("alpha", format!("{alpha} outside (0, 1)")));
    }
    let key = MetricKey { metric, k };
    let a = evaluate(dataset, model_a, &[k], &[metric], Execution::default())?;
    let b = evaluate(dataset, model_b, &[k], &[metric], Execution::default())?;
    let mut rows = Vec::new();
    for locale in &a.locales {
        let mut va = Vec::new();
        let mut vb = Vec::new();
        for (qa, qb) in a.queries.iter().zip(&b.queries) {
            if &qa.locale != locale {
                continue;
            }
            if let (Some(&x), Some(&y)) = (qa.values.get(&key), qb.values.get(&key)) {
                va.push(x);
                vb.push(y);
            }
        }
        if va.is_empty() {
            continue;
        }
        let diffs: Vec<f64> = va.iter().zip(&vb).map(|(x, y)| y - x).collect();
        let raw_p = match wilcoxon_signed_rank(&diffs) {
            Ok(r) => r.p_value,
            Err(Error::NoSignal) => 1.0,
            Err(e) => return Err(e),
        };
        let n = va.len() as f64;
        let mean_a = va.iter().sum::<f64>() / n;
        let mean_b = vb.iter().sum::<f64>() / n;
        rows.push(SignificanceRow {
            locale: locale.clone(),
            n: va.len(),
            mean_a,
            mean_b,
            delta: mean_b - mean_a,
            raw_p,
            adjusted_p: raw_p,
            reject: false,
        });
    }
    let raw: Vec<f64> = rows.iter().map(|r| r.raw_p).collect();
    for (row, (adj, reject)) in rows.iter_mut().zip(benjamini_hochberg(&raw, alpha)?) {
        row.adjusted_p = adj;
        row.reject = reject;
    }
    Ok(SignificanceResult { key, alpha, rows })
}

/// Queries whose top-`k` item sets under the two models overlap by at most
/// `max_jaccard` (Jaccard index).
pub fn low_overlap_subset(
    dataset: &Dataset,
    model_a: &LinearModel,
    model_b: &LinearModel,
    k: usize,
    max_jaccard: f64,
) -> Result<Dataset> {
    let mut kept = Vec::new();
    for q in &dataset.queries {
        let top = |m: &LinearModel| -> Result<BTreeSet<usize>> {
            Ok(m.rank(q)?.into_iter().take(k).collect())
        };
        let (ta, tb) = (top(model_a)?, top(model_b)?);
        let union = ta.union(&tb).count();
        let jaccard = if union == 0 {
            1.0
        } else {
            ta.intersection(&tb).count() as f64 / union as f64
        };
        if jaccard <= max_jaccard {
            kept.push(q.clone());
        }
    }
    Ok(Dataset::new(dataset.feature_names.clone(), kept))
}
