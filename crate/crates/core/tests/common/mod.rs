#![allow(dead_code)]

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use localrank::trainer::SEMANTIC_FEATURE;
use localrank::{Dataset, FrequencyBucket, Item, QueryGroup, Regions};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal(rng: &mut impl Rng, scale: f64) -> f64 {
    scale * rng.sample::<f64, _>(StandardNormal)
}

pub fn feature_names(dim: usize) -> Vec<String> {
    let mut names: Vec<String> = (0..dim).map(|k| format!("f{k}")).collect();
    names[0] = SEMANTIC_FEATURE.to_owned();
    names
}

fn random_regions(rng: &mut impl Rng) -> Regions {
    match rng.random_range(0..5) {
        0 => Regions::Unknown,
        1 => Regions::known(Vec::<String>::new()),
        2 => Regions::known(["JP"]),
        3 => Regions::known(["US"]),
        _ => Regions::known(["US", "GB"]),
    }
}

/// A US query list with at least one click and one non-click, non-uniform
/// graded labels, ground truth and mixed eligibility.
pub fn random_group(rng: &mut impl Rng, qid: &str, n: usize, dim: usize) -> QueryGroup {
    assert!(n >= 2);
    let mut items: Vec<Item> = (0..n)
        .map(|i| {
            let mut it = Item::new(
                format!("{qid}-i{i}"),
                (0..dim).map(|_| normal(rng, 1.0)).collect(),
            );
            it.clicked = rng.random_bool(0.4);
            it.graded_label = Some(rng.random_range(0..=3));
            it.true_relevance = Some(rng.random_range(0..=3));
            it.eligible_regions = random_regions(rng);
            it.logged_position = Some(i as u32 + 1);
            it
        })
        .collect();
    items[0].clicked = true;
    items[1].clicked = false;
    items[0].graded_label = Some(3);
    items[1].graded_label = Some(0);
    items.shuffle(rng);
    let mut group = QueryGroup::new(qid, Some("US"), items);
    group.frequency_bucket = FrequencyBucket::ALL[rng.random_range(0..3)];
    group
}

pub fn random_dataset(seed: u64, queries: usize, dim: usize) -> Dataset {
    let mut rng = rng(seed);
    let groups = (0..queries)
        .map(|q| {
            let n = rng.random_range(2..=12);
            random_group(&mut rng, &format!("q{q}"), n, dim)
        })
        .collect();
    Dataset::new(feature_names(dim), groups)
}

pub fn feature_rows(group: &QueryGroup) -> Vec<&[f64]> {
    group
        .items
        .iter()
        .map(|it| it.features.as_slice())
        .collect()
}

pub fn scores(group: &QueryGroup, weights: &[f64]) -> Vec<f64> {
    group
        .items
        .iter()
        .map(|it| {
            it.features
                .as_slice()
                .iter()
                .zip(weights)
                .map(|(x, w)| x * w)
                .sum()
        })
        .collect()
}
