//! Per-query ranking metrics. Every function takes a ranking as a list of
//! item indices, best first, so metrics depend on scores only through the
//! induced order.

use crate::data::{QueryGroup, MAX_GRADE};
use crate::locale;

/// Grade at or above which an item counts as relevant for precision/recall.
pub const DEFAULT_RELEVANCE_THRESHOLD: u8 = 2;

/// Share of the top `k` that is eligible in the query locale. Lists shorter
/// than `k` still divide by `k`.
pub fn local_at_k(group: &QueryGroup, ranking: &[usize], k: usize) -> f64 {
    assert!(k >= 1, "k must be >= 1");
    let hits = ranking
        .iter()
        .take(k)
        .filter(|&&i| {
            locale::locale_match(group.locale.as_deref(), &group.items[i].eligible_regions) == 1
        })
        .count();
    hits as f64 / k as f64
}

fn gain(rel: u8) -> f64 {
    f64::from((1u32 << rel.min(MAX_GRADE)) - 1)
}

fn discount(rank: usize) -> f64 {
    // rank is 1-based
    (rank as f64 + 1.0).log2()
}

fn dcg(grades: impl Iterator<Item = u8>) -> f64 {
    grades
        .enumerate()
        .map(|(r, g)| gain(g) / discount(r + 1))
        .sum()
}

/// NDCG@k with gain `2^rel - 1` and discount `log2(rank + 1)`, normalized by
/// the ideal ordering of the same list. Lists without any positive grade
/// score 0.
pub fn ndcg_at_k(ranking: &[usize], relevance: &[u8], k: usize) -> f64 {
    let mut ideal = relevance.to_vec();
    ideal.sort_unstable_by(|a, b| b.cmp(a));
    let idcg = dcg(ideal.into_iter().take(k));
    if idcg == 0.0 {
        return 0.0;
    }
    dcg(ranking.iter().take(k).map(|&i| relevance[i])) / idcg
}

/// `(precision@k, recall@k)` with grades binarized at `threshold`.
/// Precision divides by `k` even for shorter lists; recall is 0 when the
/// list holds no relevant item.
pub fn precision_recall_at_k(
    ranking: &[usize],
    relevance: &[u8],
    k: usize,
    threshold: u8,
) -> (f64, f64) {
    let total = relevance.iter().filter(|&&r| r >= threshold).count();
    let hits = ranking
        .iter()
        .take(k)
        .filter(|&&i| relevance[i] >= threshold)
        .count();
    let precision = hits as f64 / k as f64;
    let recall = if total == 0 {
        0.0
    } else {
        hits as f64 / total as f64
    };
    (precision, recall)
}

/// Ground-truth grades for a list: simulator truth when every item has it,
/// otherwise complete graded labels, otherwise none.
pub fn ground_truth(group: &QueryGroup) -> Option<Vec<u8>> {
    group
        .items
        .iter()
        .map(|it| it.true_relevance)
        .collect::<Option<Vec<u8>>>()
        .or_else(|| group.graded_labels())
}
