//! Synthetic multi-locale template corpus with exposure-biased click logs.
//!
//! The generator builds one template pool per locale, draws query lists that
//! mix local templates with foreign ones (dominant-locale templates for the
//! other locales), and assigns ground-truth grades that favour
//! locale-matching templates. Template popularity is independent of
//! relevance but tilted upwards for dominant-locale templates; a logging
//! ranker that leans on popularity then decides what gets examined, so click
//! logs over-credit dominant-locale content.

use std::collections::BTreeSet;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, FeatureVector, FrequencyBucket, Item, QueryGroup, Regions, MAX_GRADE};
use crate::error::{Error, Result};
use crate::model::{self, LinearModel};

/// Click attractiveness of grades 0..=3 before noise blending.
pub const RELEVANCE_CLICK_PROB: [f64; 4] = [0.0, 0.2, 0.5, 0.9];

/// Cut points on the latent relevance score separating grades 0|1|2|3.
const GRADE_CUTS: [f64; 3] = [-0.3, 0.6, 1.4];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LocaleSpec {
    pub code: String,
    pub query_count: usize,
    pub template_count: usize,
}

impl LocaleSpec {
    pub fn new(code: &str, query_count: usize, template_count: usize) -> Self {
        LocaleSpec {
            code: code.to_owned(),
            query_count,
            template_count,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub seed: u64,
    pub locales: Vec<LocaleSpec>,
    pub dominant_locale: String,
    /// Total feature dimension; columns other than the three designated ones
    /// carry relevance-free noise.
    pub feature_dim: usize,
    pub semantic_column: usize,
    pub popularity_column: usize,
    pub locale_match_column: usize,
    /// Candidates per query list.
    pub list_size: usize,
    /// Fraction of each list drawn from the query's own locale.
    pub local_share: f64,
    pub sessions_per_query: usize,
    /// Examination at rank k is `(1/k)^gamma`.
    pub position_bias_exponent: f64,
    /// Share of uniform noise blended into click attractiveness.
    pub click_noise: f64,
    /// Probability of a +-1 perturbation of each graded label.
    pub label_noise: f64,
    /// Fraction of queries whose graded labels are withheld entirely.
    pub label_withhold_fraction: f64,
    /// Popularity advantage of dominant-locale templates.
    pub exposure_tilt: f64,
    /// Shift of the latent relevance score for locale-matching templates.
    pub local_relevance_bonus: f64,
    /// Noise on the semantic-similarity feature.
    pub semantic_noise: f64,
    /// Noise on the locale-match feature.
    pub locale_feature_noise: f64,
    /// Logging ranker weight on popularity.
    pub logging_popularity_weight: f64,
    /// Logging ranker weight on semantic similarity.
    pub logging_semantic_weight: f64,
    /// Per-locale share of queries assigned to the training split.
    pub train_fraction: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            seed: 7,
            locales: vec![
                LocaleSpec::new("US", 900, 3000),
                LocaleSpec::new("JP", 400, 600),
                LocaleSpec::new("FR", 400, 600),
                LocaleSpec::new("DE", 400, 600),
                LocaleSpec::new("GB", 400, 600),
            ],
            dominant_locale: "US".to_owned(),
            feature_dim: 6,
            semantic_column: 0,
            popularity_column: 1,
            locale_match_column: 2,
            list_size: 20,
            local_share: 0.5,
            sessions_per_query: 3,
            position_bias_exponent: 1.0,
            click_noise: 0.05,
            label_noise: 0.1,
            label_withhold_fraction: 0.0,
            exposure_tilt: 1.0,
            local_relevance_bonus: 0.5,
            semantic_noise: 0.4,
            locale_feature_noise: 0.5,
            logging_popularity_weight: 1.0,
            logging_semantic_weight: 0.2,
            train_fraction: 0.8,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.locales.is_empty() {
            return Err(Error::config("locales", "at least one locale is required"));
        }
        let mut codes = BTreeSet::new();
        for (i, l) in self.locales.iter().enumerate() {
            if !codes.insert(l.code.as_str()) {
                return Err(Error::config(
                    format!("locales[{i}].code"),
                    format!("duplicate `{}`", l.code),
                ));
            }
            if l.template_count < self.list_size {
                return Err(Error::config(
                    format!("locales[{i}].template_count"),
                    format!("{} < list_size {}", l.template_count, self.list_size),
                ));
            }
        }
        if !codes.contains(self.dominant_locale.as_str()) {
            return Err(Error::config(
                "dominant_locale",
                format!("`{}` is not among locales", self.dominant_locale),
            ));
        }
        if self.feature_dim < 3 {
            return Err(Error::config("feature_dim", "must be >= 3"));
        }
        let cols = [
            self.semantic_column,
            self.popularity_column,
            self.locale_match_column,
        ];
        if cols.iter().any(|&c| c >= self.feature_dim) {
            return Err(Error::config(
                "semantic_column",
                "designated columns must be < feature_dim",
            ));
        }
        if cols[0] == cols[1] || cols[0] == cols[2] || cols[1] == cols[2] {
            return Err(Error::config(
                "semantic_column",
                "designated columns must be distinct",
            ));
        }
        if self.list_size == 0 {
            return Err(Error::config("list_size", "must be >= 1"));
        }
        if self.sessions_per_query == 0 {
            return Err(Error::config("sessions_per_query", "must be >= 1"));
        }
        if self.position_bias_exponent.is_nan() || self.position_bias_exponent <= 0.0 {
            return Err(Error::config("position_bias_exponent", "must be > 0"));
        }
        if !(0.0..1.0).contains(&self.click_noise) {
            return Err(Error::config("click_noise", "must lie in [0, 1)"));
        }
        let unit = [
            ("label_noise", self.label_noise),
            ("label_withhold_fraction", self.label_withhold_fraction),
            ("local_share", self.local_share),
            ("train_fraction", self.train_fraction),
        ];
        for (field, v) in unit {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::config(field, format!("{v} outside [0, 1]")));
            }
        }
        let nonneg = [
            ("exposure_tilt", self.exposure_tilt),
            ("semantic_noise", self.semantic_noise),
            ("locale_feature_noise", self.locale_feature_noise),
        ];
        for (field, v) in nonneg {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::config(
                    field,
                    format!("must be finite and >= 0, got {v}"),
                ));
            }
        }
        for (field, v) in [
            ("local_relevance_bonus", self.local_relevance_bonus),
            ("logging_popularity_weight", self.logging_popularity_weight),
            ("logging_semantic_weight", self.logging_semantic_weight),
        ] {
            if !v.is_finite() {
                return Err(Error::config(field, "must be finite"));
            }
        }
        Ok(())
    }

    pub fn feature_names(&self) -> Vec<String> {
        (0..self.feature_dim)
            .map(|k| {
                if k == self.semantic_column {
                    crate::trainer::SEMANTIC_FEATURE.to_owned()
                } else if k == self.popularity_column {
                    "popularity".to_owned()
                } else if k == self.locale_match_column {
                    "locale_match".to_owned()
                } else {
                    format!("aux_{k}")
                }
            })
            .collect()
    }

    /// The popularity-leaning ranker that produced the click logs.
    pub fn logging_model(&self) -> LinearModel {
        let mut weights = vec![0.0; self.feature_dim];
        weights[self.popularity_column] = self.logging_popularity_weight;
        weights[self.semantic_column] = self.logging_semantic_weight;
        LinearModel::new(weights, self.feature_names()).expect("finite logging weights")
    }
}

/// Independent random streams derived from the master seed.
#[derive(Debug, Clone, Copy)]
enum Stream {
    Templates = 1,
    Queries = 2,
    Clicks = 3,
    Labels = 4,
}

fn derive_seed(seed: u64, stream: Stream, index: u64) -> u64 {
    // splitmix64 finalizer over (seed, stream, index)
    let mut z = seed
        ^ (stream as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ index.wrapping_mul(0xD1B5_4A32_D192_ED03);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn rng_for(seed: u64, stream: Stream, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, stream, index))
}

#[derive(Debug, Clone)]
struct Template {
    id: String,
    locale: String,
    popularity: f64,
    aux: Vec<f64>,
}

fn standard_normal() -> Normal<f64> {
    Normal::new(0.0, 1.0).expect("unit normal")
}

fn gaussian(rng: &mut ChaCha8Rng, sd: f64) -> f64 {
    if sd == 0.0 {
        0.0
    } else {
        sd * standard_normal().sample(rng)
    }
}

fn build_pools(config: &SimConfig) -> Vec<Vec<Template>> {
    let aux_cols = config.feature_dim - 3;
    config
        .locales
        .iter()
        .enumerate()
        .map(|(li, spec)| {
            let mut rng = rng_for(config.seed, Stream::Templates, li as u64);
            let tilt = if spec.code == config.dominant_locale {
                config.exposure_tilt
            } else {
                0.0
            };
            (0..spec.template_count)
                .map(|t| Template {
                    id: format!("{}-t{t:05}", spec.code),
                    locale: spec.code.clone(),
                    popularity: gaussian(&mut rng, 1.0) + tilt,
                    aux: (0..aux_cols).map(|_| gaussian(&mut rng, 1.0)).collect(),
                })
                .collect()
        })
        .collect()
}

fn grade(latent: f64) -> u8 {
    GRADE_CUTS.iter().filter(|&&c| latent >= c).count() as u8
}

/// Head, torso and tail terciles of query frequency within one locale.
fn assign_buckets(groups: &mut [QueryGroup], frequencies: &[f64]) {
    let mut order: Vec<usize> = (0..groups.len()).collect();
    order.sort_by(|&a, &b| {
        frequencies[b]
            .total_cmp(&frequencies[a])
            .then_with(|| groups[a].qid.cmp(&groups[b].qid))
    });
    let n = order.len();
    for (rank, &idx) in order.iter().enumerate() {
        groups[idx].frequency_bucket = match rank * 3 / n.max(1) {
            0 => FrequencyBucket::Head,
            1 => FrequencyBucket::Torso,
            _ => FrequencyBucket::Tail,
        };
    }
}

/// Query lists with features and ground-truth grades; no clicks or labels.
pub fn generate_corpus(config: &SimConfig) -> Result<Dataset> {
    config.validate()?;
    let pools = build_pools(config);
    let dominant = config
        .locales
        .iter()
        .position(|l| l.code == config.dominant_locale)
        .expect("validated");
    let n = config.list_size;
    let frequency = LogNormal::new(0.0, 1.5).expect("valid lognormal");
    let mut queries = Vec::new();

    for (li, spec) in config.locales.iter().enumerate() {
        let mut rng = rng_for(config.seed, Stream::Queries, li as u64);
        let foreign: Vec<&Template> = if li == dominant {
            pools
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != li)
                .flat_map(|(_, p)| p.iter())
                .collect()
        } else {
            pools[dominant].iter().collect()
        };
        let n_local = if foreign.is_empty() {
            n
        } else {
            ((n as f64 * config.local_share).round() as usize).min(n)
        };
        let n_foreign = (n - n_local).min(foreign.len());

        let mut groups = Vec::with_capacity(spec.query_count);
        let mut frequencies = Vec::with_capacity(spec.query_count);
        for q in 0..spec.query_count {
            let mut candidates: Vec<&Template> = index::sample(&mut rng, pools[li].len(), n_local)
                .into_iter()
                .map(|i| &pools[li][i])
                .collect();
            candidates.extend(
                index::sample(&mut rng, foreign.len(), n_foreign)
                    .into_iter()
                    .map(|i| foreign[i]),
            );
            let items = candidates
                .into_iter()
                .map(|t| {
                    let local = t.locale == spec.code;
                    let m = if local { 1.0 } else { 0.0 };
                    let latent = gaussian(&mut rng, 1.0) + config.local_relevance_bonus * m;
                    let rel = grade(latent);
                    let mut features = vec![0.0; config.feature_dim];
                    let mut aux = t.aux.iter();
                    for (k, slot) in features.iter_mut().enumerate() {
                        *slot = if k == config.semantic_column {
                            f64::from(rel) / f64::from(MAX_GRADE)
                                + gaussian(&mut rng, config.semantic_noise)
                        } else if k == config.popularity_column {
                            t.popularity + gaussian(&mut rng, 0.3)
                        } else if k == config.locale_match_column {
                            m + gaussian(&mut rng, config.locale_feature_noise)
                        } else {
                            aux.next().copied().unwrap_or(0.0) + gaussian(&mut rng, 0.3)
                        };
                    }
                    Item {
                        item_id: t.id.clone(),
                        features: FeatureVector(features),
                        clicked: false,
                        graded_label: None,
                        eligible_regions: Regions::known([t.locale.as_str()]),
                        logged_position: None,
                        true_relevance: Some(rel),
                    }
                })
                .collect();
            groups.push(QueryGroup::new(
                format!("{}-q{q:05}", spec.code),
                Some(&spec.code),
                items,
            ));
            frequencies.push(frequency.sample(&mut rng));
        }
        assign_buckets(&mut groups, &frequencies);
        queries.extend(groups);
    }
    Ok(Dataset::new(config.feature_names(), queries))
}

/// Probability of examining the item shown at 1-based `rank`.
pub fn examination_probability(rank: usize, gamma: f64) -> f64 {
    (1.0 / rank as f64).powf(gamma)
}

/// Click probability once examined.
pub fn attractiveness(relevance: u8, click_noise: f64) -> f64 {
    let base = RELEVANCE_CLICK_PROB[usize::from(relevance.min(MAX_GRADE))];
    (1.0 - click_noise) * base + click_noise
}

/// Replays `sessions_per_query` impressions of each list under the logging
/// ranker with rank-discounted examination. An item counts as clicked if it
/// was clicked in any session. Every item gets its logged position.
pub fn simulate_logs(
    corpus: &Dataset,
    logging_model: &LinearModel,
    config: &SimConfig,
) -> Result<Dataset> {
    config.validate()?;
    logging_model.check_compatible(corpus)?;
    let mut out = corpus.clone();
    for (qi, group) in out.queries.iter_mut().enumerate() {
        for item in &group.items {
            if item.true_relevance.is_none() {
                return Err(Error::MissingRelevance {
                    qid: group.qid.clone(),
                    item_id: item.item_id.clone(),
                });
            }
        }
        let mut rng = rng_for(config.seed, Stream::Clicks, qi as u64);
        let order = model::rank(logging_model, group)?;
        let mut clicked = vec![false; group.items.len()];
        for _ in 0..config.sessions_per_query {
            for (pos, &idx) in order.iter().enumerate() {
                let rel = group.items[idx].true_relevance.expect("checked above");
                let p = examination_probability(pos + 1, config.position_bias_exponent)
                    * attractiveness(rel, config.click_noise);
                // always draw, so streams line up across parameter settings
                let u: f64 = rng.random();
                if u < p {
                    clicked[idx] = true;
                }
            }
        }
        for (pos, &idx) in order.iter().enumerate() {
            let item = &mut group.items[idx];
            item.clicked = clicked[idx];
            item.logged_position = Some(pos as u32 + 1);
        }
    }
    Ok(out)
}

/// Noisy graded labels standing in for model-generated judgments: each
/// label moves one grade away from the truth with probability
/// `label_noise` (inwards at the ends of the scale), and a
/// `label_withhold_fraction` share of queries gets no labels at all.
pub fn corrupt_labels(corpus: &Dataset, config: &SimConfig) -> Result<Dataset> {
    let mut out = corpus.clone();
    for (qi, group) in out.queries.iter_mut().enumerate() {
        let mut rng = rng_for(config.seed, Stream::Labels, qi as u64);
        let withhold = rng.random::<f64>() < config.label_withhold_fraction;
        for item in &mut group.items {
            let Some(truth) = item.true_relevance else {
                return Err(Error::MissingRelevance {
                    qid: group.qid.clone(),
                    item_id: item.item_id.clone(),
                });
            };
            let flip = rng.random::<f64>() < config.label_noise;
            let up = rng.random::<bool>();
            item.graded_label = if withhold {
                None
            } else if !flip {
                Some(truth)
            } else if truth == 0 || (up && truth < MAX_GRADE) {
                Some(truth + 1)
            } else {
                Some(truth - 1)
            };
        }
    }
    Ok(out)
}

/// Corpus, click logs under the configured logging ranker, and labels.
pub fn simulate(config: &SimConfig) -> Result<Dataset> {
    let corpus = generate_corpus(config)?;
    let logged = simulate_logs(&corpus, &config.logging_model(), config)?;
    corrupt_labels(&logged, config)
}

/// Deterministic per-locale split: queries are ordered by a hash of their
/// qid and the first `round(train_fraction * count)` go to training.
pub fn split_by_qid(dataset: &Dataset, train_fraction: f64) -> (Dataset, Dataset) {
    use sha2::{Digest, Sha256};
    let key = |qid: &str| {
        let digest = Sha256::digest(qid.as_bytes());
        u64::from_be_bytes(digest[..8].try_into().expect("8 bytes"))
    };
    let mut train_ids = BTreeSet::new();
    for locale in dataset.locales() {
        let mut members: Vec<(u64, &str)> = dataset
            .queries
            .iter()
            .filter(|q| q.locale == locale)
            .map(|q| (key(&q.qid), q.qid.as_str()))
            .collect();
        members.sort_unstable();
        let take = (members.len() as f64 * train_fraction).round() as usize;
        train_ids.extend(members[..take].iter().map(|&(_, id)| id.to_owned()));
    }
    let (train, eval): (Vec<QueryGroup>, Vec<QueryGroup>) = dataset
        .queries
        .iter()
        .cloned()
        .partition(|q| train_ids.contains(&q.qid));
    (
        Dataset::new(dataset.feature_names.clone(), train),
        Dataset::new(dataset.feature_names.clone(), eval),
    )
}
