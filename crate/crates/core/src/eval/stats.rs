//! Paired one-sided Wilcoxon signed-rank test and Benjamini-Hochberg
//! adjustment.

use std::cmp::Ordering;

use statrs::function::erf::erfc;

use crate::error::{Error, Result};

/// Largest sample size (after dropping zeros) tested exactly.
pub const EXACT_MAX_N: usize = 25;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WilcoxonMethod {
    Exact,
    Normal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WilcoxonResult {
    /// Nonzero differences used.
    pub n: usize,
    /// Sum of ranks of the positive differences.
    pub w_plus: f64,
    /// One-sided p-value for "differences tend to be positive".
    pub p_value: f64,
    pub method: WilcoxonMethod,
}

/// Midranks of `|d|`, doubled so that tied ranks stay integral. Also returns
/// the tie group sizes.
pub fn doubled_ranks(abs_values: &[f64]) -> (Vec<u64>, Vec<usize>) {
    let n = abs_values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        abs_values[a]
            .partial_cmp(&abs_values[b])
            .unwrap_or(Ordering::Equal)
    });
    let mut ranks = vec![0u64; n];
    let mut ties = Vec::new();
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && abs_values[order[end]] == abs_values[order[start]] {
            end += 1;
        }
        // ranks start+1 ..= end, doubled midrank = start + 1 + end
        let doubled = (start + 1 + end) as u64;
        for &idx in &order[start..end] {
            ranks[idx] = doubled;
        }
        ties.push(end - start);
        start = end;
    }
    (ranks, ties)
}

fn nonzero(diffs: &[f64]) -> Result<Vec<f64>> {
    if diffs.iter().any(|d| !d.is_finite()) {
        return Err(Error::NonFinite("paired differences"));
    }
    let kept: Vec<f64> = diffs.iter().copied().filter(|&d| d != 0.0).collect();
    if kept.is_empty() {
        return Err(Error::NoSignal);
    }
    Ok(kept)
}

/// Exact null distribution via a subset-sum count over doubled ranks. This
/// counts the same `2^n` equally likely sign assignments as brute-force
/// enumeration, in `O(n * sum of ranks)`.
pub fn wilcoxon_exact(diffs: &[f64]) -> Result<WilcoxonResult> {
    let d = nonzero(diffs)?;
    let n = d.len();
    if n > 62 {
        return Err(Error::invalid(
            "diffs",
            "exact test supports at most 62 nonzero differences",
        ));
    }
    let abs: Vec<f64> = d.iter().map(|x| x.abs()).collect();
    let (ranks, _) = doubled_ranks(&abs);
    let observed: u64 = d
        .iter()
        .zip(&ranks)
        .filter(|(x, _)| **x > 0.0)
        .map(|(_, r)| r)
        .sum();
    let total: u64 = ranks.iter().sum();
    let mut counts = vec![0u64; total as usize + 1];
    counts[0] = 1;
    let mut reach = 0usize;
    for &r in &ranks {
        let r = r as usize;
        for s in (0..=reach).rev() {
            if counts[s] > 0 {
                counts[s + r] += counts[s];
            }
        }
        reach += r;
    }
    let tail: u64 = counts[observed as usize..].iter().sum();
    Ok(WilcoxonResult {
        n,
        w_plus: observed as f64 / 2.0,
        p_value: tail as f64 / (1u64 << n) as f64,
        method: WilcoxonMethod::Exact,
    })
}

/// Normal approximation with tie-corrected variance and a 0.5 continuity
/// correction.
pub fn wilcoxon_normal(diffs: &[f64]) -> Result<WilcoxonResult> {
    let d = nonzero(diffs)?;
    let n = d.len() as f64;
    let abs: Vec<f64> = d.iter().map(|x| x.abs()).collect();
    let (ranks, ties) = doubled_ranks(&abs);
    let w_plus = d
        .iter()
        .zip(&ranks)
        .filter(|(x, _)| **x > 0.0)
        .map(|(_, &r)| r as f64)
        .sum::<f64>()
        / 2.0;
    let mean = n * (n + 1.0) / 4.0;
    let tie_term: f64 = ties
        .iter()
        .map(|&t| (t as f64).powi(3) - t as f64)
        .sum::<f64>()
        / 48.0;
    let var = n * (n + 1.0) * (2.0 * n + 1.0) / 24.0 - tie_term;
    let p_value = if var <= 0.0 {
        if w_plus > mean {
            0.0
        } else {
            1.0
        }
    } else {
        let z = (w_plus - mean - 0.5) / var.sqrt();
        0.5 * erfc(z / std::f64::consts::SQRT_2)
    };
    Ok(WilcoxonResult {
        n: d.len(),
        w_plus,
        p_value: p_value.clamp(0.0, 1.0),
        method: WilcoxonMethod::Normal,
    })
}

/// One-sided signed-rank test that the paired differences are shifted
/// above zero. Zeros are dropped first; exact for up to
/// [`EXACT_MAX_N`] remaining differences, normal approximation beyond.
pub fn wilcoxon_signed_rank(diffs: &[f64]) -> Result<WilcoxonResult> {
    let n = nonzero(diffs)?.len();
    if n <= EXACT_MAX_N {
        wilcoxon_exact(diffs)
    } else {
        wilcoxon_normal(diffs)
    }
}

/// Benjamini-Hochberg step-up adjustment. Returns `(adjusted_p, reject)` in
/// input order.
pub fn benjamini_hochberg(p_values: &[f64], alpha: f64) -> Result<Vec<(f64, bool)>> {
    if let Some(p) = p_values.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::invalid("p_values", format!("{p} outside [0, 1]")));
    }
    let m = p_values.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| p_values[a].total_cmp(&p_values[b]).then(a.cmp(&b)));
    let mut adjusted = vec![0.0; m];
    let mut running = 1.0f64;
    for (pos, &idx) in order.iter().enumerate().rev() {
        let rank = pos + 1;
        let scaled = (p_values[idx] * (m as f64 / rank as f64)).min(1.0);
        running = running.min(scaled);
        adjusted[idx] = running;
    }
    Ok(adjusted.into_iter().map(|a| (a, a <= alpha)).collect())
}

/// Table-style significance marker.
pub fn significance_stars(p: f64) -> &'static str {
    if p < 0.001 {
        "***"
    } else if p < 0.01 {
        "**"
    } else if p < 0.05 {
        "*"
    } else if p < 0.10 {
        "\u{2020}"
    } else {
        ""
    }
}
