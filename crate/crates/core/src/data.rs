//! Shared data model: query impression lists, their candidate items, labels
//! and locale metadata.

use std::collections::{BTreeSet, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

/// Highest grade on the 0..=3 relevance scale.
pub const MAX_GRADE: u8 = 3;

/// Precomputed query-item features `phi(q, d)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FeatureVector(pub Vec<f64>);

impl FeatureVector {
    pub fn new(values: Vec<f64>) -> Self {
        FeatureVector(values)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

impl From<Vec<f64>> for FeatureVector {
    fn from(values: Vec<f64>) -> Self {
        FeatureVector(values)
    }
}

/// Region eligibility of a template.
///
/// `Unknown` records that the metadata was missing, which is different from a
/// template known to be eligible nowhere. Both produce a locale match of 0.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(from = "Option<BTreeSet<String>>", into = "Option<BTreeSet<String>>")]
pub enum Regions {
    #[default]
    Unknown,
    Known(BTreeSet<String>),
}

impl Regions {
    pub fn known<I, S>(codes: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Regions::Known(codes.into_iter().map(Into::into).collect())
    }

    pub fn contains(&self, locale: &str) -> bool {
        match self {
            Regions::Unknown => false,
            Regions::Known(set) => set.contains(locale),
        }
    }

    pub fn as_set(&self) -> Option<&BTreeSet<String>> {
        match self {
            Regions::Unknown => None,
            Regions::Known(set) => Some(set),
        }
    }
}

impl From<Option<BTreeSet<String>>> for Regions {
    fn from(value: Option<BTreeSet<String>>) -> Self {
        value.map_or(Regions::Unknown, Regions::Known)
    }
}

impl From<Regions> for Option<BTreeSet<String>> {
    fn from(value: Regions) -> Self {
        match value {
            Regions::Unknown => None,
            Regions::Known(set) => Some(set),
        }
    }
}

/// One candidate template within a query list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Item {
    pub item_id: String,
    pub features: FeatureVector,
    pub clicked: bool,
    #[serde(default)]
    pub graded_label: Option<u8>,
    #[serde(default)]
    pub eligible_regions: Regions,
    #[serde(default)]
    pub logged_position: Option<u32>,
    /// Simulator ground truth; absent for logged data.
    #[serde(default)]
    pub true_relevance: Option<u8>,
}

impl Item {
    pub fn new(item_id: impl Into<String>, features: Vec<f64>) -> Self {
        Item {
            item_id: item_id.into(),
            features: FeatureVector(features),
            clicked: false,
            graded_label: None,
            eligible_regions: Regions::Unknown,
            logged_position: None,
            true_relevance: None,
        }
    }
}

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize,
)]
#[serde(rename_all = "lowercase")]
pub enum FrequencyBucket {
    Head,
    Torso,
    Tail,
    #[default]
    Unknown,
}

impl FrequencyBucket {
    pub const ALL: [FrequencyBucket; 4] = [
        FrequencyBucket::Head,
        FrequencyBucket::Torso,
        FrequencyBucket::Tail,
        FrequencyBucket::Unknown,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FrequencyBucket::Head => "head",
            FrequencyBucket::Torso => "torso",
            FrequencyBucket::Tail => "tail",
            FrequencyBucket::Unknown => "unknown",
        }
    }
}

impl fmt::Display for FrequencyBucket {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A single query impression list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QueryGroup {
    pub qid: String,
    #[serde(default)]
    pub locale: Option<String>,
    #[serde(rename = "bucket")]
    pub frequency_bucket: FrequencyBucket,
    pub items: Vec<Item>,
}

impl QueryGroup {
    pub fn new(qid: impl Into<String>, locale: Option<&str>, items: Vec<Item>) -> Self {
        QueryGroup {
            qid: qid.into(),
            locale: locale.map(str::to_owned),
            frequency_bucket: FrequencyBucket::Unknown,
            items,
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Splits item indices into clicked (`P`) and unclicked (`N`), each in
    /// list order.
    pub fn partition_pairs(&self) -> (Vec<usize>, Vec<usize>) {
        let mut positives = Vec::new();
        let mut negatives = Vec::new();
        for (idx, item) in self.items.iter().enumerate() {
            if item.clicked {
                positives.push(idx);
            } else {
                negatives.push(idx);
            }
        }
        (positives, negatives)
    }

    /// Graded labels for the whole list, or `None` if any item lacks one.
    pub fn graded_labels(&self) -> Option<Vec<u8>> {
        self.items.iter().map(|item| item.graded_label).collect()
    }

    pub fn clicks(&self) -> Vec<bool> {
        self.items.iter().map(|item| item.clicked).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub feature_dim: usize,
    pub feature_names: Vec<String>,
    pub queries: Vec<QueryGroup>,
}

impl Dataset {
    pub fn new(feature_names: Vec<String>, queries: Vec<QueryGroup>) -> Self {
        Dataset {
            feature_dim: feature_names.len(),
            feature_names,
            queries,
        }
    }

    pub fn item_count(&self) -> usize {
        self.queries.iter().map(QueryGroup::len).sum()
    }

    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.feature_names.iter().position(|n| n == name)
    }

    /// Distinct query locales in first-appearance order.
    pub fn locales(&self) -> Vec<Option<String>> {
        let mut seen = Vec::new();
        for q in &self.queries {
            if !seen.contains(&q.locale) {
                seen.push(q.locale.clone());
            }
        }
        seen
    }

    /// Checks every dataset invariant; returns all violations found.
    pub fn validate(&self) -> Vec<Violation> {
        validate(self)
    }
}

/// One broken invariant, with the query and item it was found on.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub qid: Option<String>,
    pub item_id: Option<String>,
    pub message: String,
}

impl Violation {
    fn dataset(message: impl Into<String>) -> Self {
        Violation {
            qid: None,
            item_id: None,
            message: message.into(),
        }
    }

    fn query(qid: &str, message: impl Into<String>) -> Self {
        Violation {
            qid: Some(qid.to_owned()),
            item_id: None,
            message: message.into(),
        }
    }

    fn item(qid: &str, item_id: &str, message: impl Into<String>) -> Self {
        Violation {
            qid: Some(qid.to_owned()),
            item_id: Some(item_id.to_owned()),
            message: message.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (&self.qid, &self.item_id) {
            (Some(q), Some(i)) => write!(f, "query {q}, item {i}: {}", self.message),
            (Some(q), None) => write!(f, "query {q}: {}", self.message),
            _ => f.write_str(&self.message),
        }
    }
}

pub fn validate(dataset: &Dataset) -> Vec<Violation> {
    let mut out = Vec::new();
    let dim = dataset.feature_dim;
    if dataset.feature_names.len() != dim {
        out.push(Violation::dataset(format!(
            "feature_names has {} entries but feature_dim is {dim}",
            dataset.feature_names.len()
        )));
    }

    let mut qids = HashSet::new();
    for q in &dataset.queries {
        if !qids.insert(q.qid.as_str()) {
            out.push(Violation::query(&q.qid, "duplicate qid"));
        }
        if q.items.is_empty() {
            out.push(Violation::query(&q.qid, "query has no items"));
        }

        let mut ids = HashSet::new();
        let mut positions = HashSet::new();
        for item in &q.items {
            let id = item.item_id.as_str();
            if !ids.insert(id) {
                out.push(Violation::item(
                    &q.qid,
                    id,
                    "duplicate item_id within query",
                ));
            }
            if item.features.len() != dim {
                out.push(Violation::item(
                    &q.qid,
                    id,
                    format!(
                        "feature length {} != feature_dim {dim}",
                        item.features.len()
                    ),
                ));
            }
            if !item.features.is_finite() {
                out.push(Violation::item(&q.qid, id, "non-finite feature value"));
            }
            if let Some(label) = item.graded_label {
                if label > MAX_GRADE {
                    out.push(Violation::item(
                        &q.qid,
                        id,
                        format!("graded_label {label} outside 0..={MAX_GRADE}"),
                    ));
                }
            }
            if let Some(rel) = item.true_relevance {
                if rel > MAX_GRADE {
                    out.push(Violation::item(
                        &q.qid,
                        id,
                        format!("true_relevance {rel} outside 0..={MAX_GRADE}"),
                    ));
                }
            }
            if let Some(pos) = item.logged_position {
                if pos == 0 {
                    out.push(Violation::item(&q.qid, id, "logged_position must be >= 1"));
                } else if !positions.insert(pos) {
                    out.push(Violation::item(
                        &q.qid,
                        id,
                        format!("logged_position {pos} repeated within query"),
                    ));
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn item(id: &str, clicked: bool) -> Item {
        let mut it = Item::new(id, vec![0.0, 1.0]);
        it.clicked = clicked;
        it
    }

    fn dataset(queries: Vec<QueryGroup>) -> Dataset {
        Dataset::new(vec!["a".into(), "b".into()], queries)
    }

    #[test]
    fn valid_dataset_has_no_violations() {
        let ds = dataset(vec![QueryGroup::new(
            "q1",
            Some("US"),
            vec![item("a", true), item("b", false)],
        )]);
        assert!(validate(&ds).is_empty());
    }

    #[test]
    fn out_of_range_label_is_reported() {
        let mut bad = item("x", false);
        bad.graded_label = Some(5);
        let ds = dataset(vec![QueryGroup::new(
            "q1",
            None,
            vec![item("a", true), bad],
        )]);
        let v = validate(&ds);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].item_id.as_deref(), Some("x"));
        assert_eq!(v[0].qid.as_deref(), Some("q1"));
    }

    #[test]
    fn duplicate_item_id_is_reported_once() {
        let ds = dataset(vec![QueryGroup::new(
            "q1",
            None,
            vec![item("a", true), item("a", false)],
        )]);
        let v = validate(&ds);
        assert_eq!(v.len(), 1);
        assert!(v[0].message.contains("duplicate item_id"));
    }

    #[test]
    fn other_invariants() {
        let mut nan = item("n", false);
        nan.features = FeatureVector(vec![f64::NAN, 0.0]);
        let mut short = item("s", false);
        short.features = FeatureVector(vec![1.0]);
        let mut p1 = item("p1", false);
        p1.logged_position = Some(1);
        let mut p2 = item("p2", false);
        p2.logged_position = Some(1);
        let mut p0 = item("p0", false);
        p0.logged_position = Some(0);
        let ds = dataset(vec![
            QueryGroup::new("q", None, vec![nan, short, p1, p2, p0]),
            QueryGroup::new("q", None, vec![item("a", false)]),
        ]);
        let v = validate(&ds);
        assert_eq!(v.len(), 5, "{v:?}");
        // idempotent
        assert_eq!(v, validate(&ds));
    }

    #[test]
    fn partition_examples() {
        let q = |clicks: &[bool]| {
            let items = clicks
                .iter()
                .enumerate()
                .map(|(i, &c)| item(&i.to_string(), c))
                .collect();
            QueryGroup::new("q", None, items)
        };
        assert_eq!(
            q(&[true, false, true, false]).partition_pairs(),
            (vec![0, 2], vec![1, 3])
        );
        assert_eq!(q(&[false, false]).partition_pairs(), (vec![], vec![0, 1]));
        assert_eq!(q(&[true, true]).partition_pairs(), (vec![0, 1], vec![]));
    }

    #[test]
    fn unknown_regions_differ_from_empty() {
        assert_ne!(Regions::Unknown, Regions::Known(BTreeSet::new()));
        assert!(!Regions::Unknown.contains("US"));
        assert!(!Regions::known(Vec::<String>::new()).contains("US"));
        assert!(Regions::known(["US", "JP"]).contains("JP"));
    }
}
