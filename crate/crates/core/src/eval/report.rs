//! Plain-text renderings of evaluation and significance results.

use std::fmt::Write as _;

use super::{locale_label, EvalReport, Metric, MetricKey, SignificanceResult};
use crate::data::FrequencyBucket;
use crate::eval::stats::significance_stars;

/// One region-match row: percentages at two cutoffs, e.g. `US head 46.0 / 45.9`.
pub fn format_region_row(locale: &str, bucket: FrequencyBucket, first: f64, second: f64) -> String {
    format!(
        "{locale} {bucket} {:.1} / {:.1}",
        100.0 * first,
        100.0 * second
    )
}

fn buckets_of(report: &EvalReport, locale: Option<&str>) -> Vec<FrequencyBucket> {
    FrequencyBucket::ALL
        .into_iter()
        .filter(|&b| {
            report
                .cells
                .iter()
                .any(|c| c.locale.as_deref() == locale && c.bucket == b)
        })
        .collect()
}

/// Region match rate (%) by locale and bucket, one column per model and
/// cutoff. Models are compared on the locales of the first report.
pub fn render_region_table(models: &[(&str, &EvalReport)], ks: &[usize]) -> String {
    let mut out = String::new();
    let Some((_, first)) = models.first() else {
        return out;
    };
    let _ = write!(out, "{:<6} {:<7}", "Loc.", "Freq.");
    for &k in ks {
        for (name, _) in models {
            let _ = write!(out, " {:>10}", format!("{name}@{k}"));
        }
    }
    out.push('\n');
    for locale in &first.locales {
        for bucket in buckets_of(first, locale.as_deref()) {
            let _ = write!(
                out,
                "{:<6} {:<7}",
                locale_label(locale.as_deref()),
                bucket.as_str()
            );
            for &k in ks {
                let key = MetricKey {
                    metric: Metric::Local,
                    k,
                };
                for (_, report) in models {
                    match report.cell(locale.as_deref(), bucket, key) {
                        Some(c) => {
                            let _ = write!(out, " {:>10.1}", 100.0 * c.mean);
                        }
                        None => {
                            let _ = write!(out, " {:>10}", "-");
                        }
                    }
                }
            }
            out.push('\n');
        }
    }
    out
}

/// Precision, recall and NDCG at `k` per locale, one row per model.
pub fn render_quality_table(models: &[(&str, &EvalReport)], k: usize) -> String {
    let mut out = String::new();
    let Some((_, first)) = models.first() else {
        return out;
    };
    let _ = writeln!(
        out,
        "{:<6} {:<8} {:>10} {:>10} {:>10}",
        "Region",
        "Model",
        format!("Prec.@{k}"),
        format!("Recall@{k}"),
        format!("NDCG@{k}")
    );
    for locale in &first.locales {
        for (name, report) in models {
            let val = |metric| {
                report
                    .locale_mean(locale.as_deref(), MetricKey { metric, k })
                    .map_or_else(|| "-".to_owned(), |v| format!("{v:.4}"))
            };
            let _ = writeln!(
                out,
                "{:<6} {:<8} {:>10} {:>10} {:>10}",
                locale_label(locale.as_deref()),
                name,
                val(Metric::Precision),
                val(Metric::Recall),
                val(Metric::Ndcg)
            );
        }
    }
    out
}

/// Human-readable summary of a single model's report.
pub fn render_report(name: &str, report: &EvalReport) -> String {
    let mut out = String::new();
    let quality_k = report.ks.iter().copied().max().unwrap_or(20);
    if report.metrics.iter().any(|m| *m != Metric::Local) {
        let _ = writeln!(out, "Ranking quality vs ground truth (@{quality_k})");
        out.push_str(&render_quality_table(&[(name, report)], quality_k));
        out.push('\n');
    }
    if report.metrics.contains(&Metric::Local) {
        let _ = writeln!(out, "Region match rate (%)");
        out.push_str(&render_region_table(&[(name, report)], &report.ks));
    }
    out
}

/// Per-locale significance table with stars on the BH-adjusted p-value.
pub fn render_significance(result: &SignificanceResult, name_a: &str, name_b: &str) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{} paired Wilcoxon signed-rank (one-sided, {name_b} > {name_a}), BH at alpha = {}",
        result.key, result.alpha
    );
    let _ = writeln!(
        out,
        "{:<6} {:>5} {:>9} {:>9} {:>9} {:>10} {:>10} {:<4}",
        "Region", "N", name_a, name_b, "Delta", "raw p", "adj. p", "sig"
    );
    for row in &result.rows {
        let _ = writeln!(
            out,
            "{:<6} {:>5} {:>9.4} {:>9.4} {:>+9.4} {:>10} {:>10} {:<4}",
            locale_label(row.locale.as_deref()),
            row.n,
            row.mean_a,
            row.mean_b,
            row.delta,
            format_p(row.raw_p),
            format_p(row.adjusted_p),
            significance_stars(row.adjusted_p)
        );
    }
    let _ = writeln!(
        out,
        "Significance levels: *** p<0.001, ** p<0.01, * p<0.05, \u{2020} p<0.10"
    );
    out
}

fn format_p(p: f64) -> String {
    if p < 0.001 {
        "<0.001".to_owned()
    } else {
        format!("{p:.3}")
    }
}
