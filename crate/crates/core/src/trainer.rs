//! Deterministic full-batch gradient descent on the combined objective.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::locale::CurriculumSchedule;
use crate::model::LinearModel;
use crate::objectives::{combined_loss, CombinedLoss};
use crate::par::Execution;

/// Column masked out of the click-only baseline.
pub const SEMANTIC_FEATURE: &str = "semantic_similarity";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Init {
    #[default]
    Zeros,
    SmallUniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lambda_rank: f64,
    pub lambda_list: f64,
    /// ListNet target temperature.
    pub tau: f64,
    /// Final locale boost factor.
    pub eta: f64,
    /// Per-locale overrides of `eta`.
    pub per_locale_eta: BTreeMap<String, f64>,
    pub epochs: usize,
    pub warmup_epochs: usize,
    pub learning_rate: f64,
    pub l2: f64,
    pub seed: u64,
    pub init: Init,
    /// Feature column hidden from the click-only baseline.
    pub semantic_feature: String,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lambda_rank: 1.0,
            lambda_list: 1.0,
            tau: 1.0,
            eta: 2.0,
            per_locale_eta: BTreeMap::new(),
            epochs: 50,
            warmup_epochs: 0,
            learning_rate: 0.1,
            l2: 0.0,
            seed: 0,
            init: Init::Zeros,
            semantic_feature: SEMANTIC_FEATURE.to_owned(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let nonneg = |field: &str, v: f64| {
            if v.is_finite() && v >= 0.0 {
                Ok(())
            } else {
                Err(Error::config(
                    field,
                    format!("must be finite and >= 0, got {v}"),
                ))
            }
        };
        nonneg("lambda_rank", self.lambda_rank)?;
        nonneg("lambda_list", self.lambda_list)?;
        nonneg("l2", self.l2)?;
        if self.lambda_rank + self.lambda_list <= 0.0 {
            return Err(Error::config(
                "lambda_rank",
                "lambda_rank and lambda_list cannot both be 0",
            ));
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::config(
                "tau",
                format!("must be > 0, got {}", self.tau),
            ));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config(
                "learning_rate",
                format!("must be > 0, got {}", self.learning_rate),
            ));
        }
        if !(self.eta >= 1.0 && self.eta.is_finite()) {
            return Err(Error::config(
                "eta",
                format!("must be >= 1, got {}", self.eta),
            ));
        }
        for (locale, &eta) in &self.per_locale_eta {
            if !(eta >= 1.0 && eta.is_finite()) {
                return Err(Error::config(
                    format!("per_locale_eta.{locale}"),
                    format!("must be >= 1, got {eta}"),
                ));
            }
        }
        if self.epochs == 0 {
            return Err(Error::config("epochs", "must be >= 1"));
        }
        if self.warmup_epochs >= self.epochs {
            return Err(Error::config(
                "warmup_epochs",
                format!("{} must be < epochs ({})", self.warmup_epochs, self.epochs),
            ));
        }
        Ok(())
    }

    pub fn schedule(&self) -> Result<CurriculumSchedule> {
        CurriculumSchedule::new(self.epochs, self.warmup_epochs, self.eta)
    }

    /// Final boost for queries from `locale`.
    pub fn eta_for(&self, locale: Option<&str>) -> f64 {
        locale
            .and_then(|l| self.per_locale_eta.get(l))
            .copied()
            .unwrap_or(self.eta)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub eta_effective: f64,
    pub mean_pairwise: f64,
    pub mean_listwise: f64,
    pub mean_combined: f64,
    pub gradient_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainHistory {
    pub records: Vec<EpochRecord>,
    /// Queries trained without a listwise term because labels were missing.
    pub label_fallback_queries: usize,
    /// Queries that contributed at least one loss term.
    pub contributing_queries: usize,
}

impl TrainHistory {
    pub fn first(&self) -> Option<&EpochRecord> {
        self.records.first()
    }

    pub fn last(&self) -> Option<&EpochRecord> {
        self.records.last()
    }
}

#[derive(Debug, Clone, Default)]
pub struct TrainOptions {
    /// Feature columns held at weight 0.
    pub masked_features: Vec<usize>,
    pub execution: Execution,
}

pub fn train(dataset: &Dataset, config: &TrainConfig) -> Result<(LinearModel, TrainHistory)> {
    train_with(dataset, config, &TrainOptions::default())
}

/// Mean per-query loss terms and gradient at the current weights.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchGradient {
    pub mean_pairwise: f64,
    pub mean_listwise: f64,
    pub mean_combined: f64,
    pub gradient: Vec<f64>,
    pub contributing: usize,
    pub label_fallback: usize,
}

/// Evaluates the combined objective over every query at progress `rho` of
/// the boost ramp. Per-query terms are summed in dataset order.
pub fn batch_gradient(
    dataset: &Dataset,
    model: &LinearModel,
    config: &TrainConfig,
    rho: f64,
    execution: Execution,
) -> Result<BatchGradient> {
    let per_query: Vec<CombinedLoss> = execution.try_map(&dataset.queries, |q| {
        let eta = config.eta_for(q.locale.as_deref());
        let eta_e = if rho == 1.0 {
            eta
        } else {
            1.0 + rho * (eta - 1.0)
        };
        combined_loss(q, model, config, eta_e)
    })?;

    let dim = model.dim();
    let mut gradient = vec![0.0; dim];
    let (mut pair_sum, mut pair_n) = (0.0, 0usize);
    let (mut list_sum, mut list_n) = (0.0, 0usize);
    let mut total = 0.0;
    let mut contributing = 0usize;
    let mut label_fallback = 0usize;
    for r in &per_query {
        if r.label_fallback {
            label_fallback += 1;
        }
        if !r.contributes() {
            continue;
        }
        contributing += 1;
        total += r.loss;
        for (g, d) in gradient.iter_mut().zip(&r.gradient) {
            *g += d;
        }
        if let Some(p) = r.pairwise {
            pair_sum += p;
            pair_n += 1;
        }
        if let Some(l) = r.listwise {
            list_sum += l;
            list_n += 1;
        }
    }
    let mean = |sum: f64, n: usize| if n == 0 { 0.0 } else { sum / n as f64 };
    if contributing > 0 {
        for g in &mut gradient {
            *g /= contributing as f64;
        }
    }
    Ok(BatchGradient {
        mean_pairwise: mean(pair_sum, pair_n),
        mean_listwise: mean(list_sum, list_n),
        mean_combined: mean(total, contributing),
        gradient,
        contributing,
        label_fallback,
    })
}

fn initial_model(dataset: &Dataset, config: &TrainConfig, masked: &[usize]) -> LinearModel {
    let mut model = LinearModel::zeros(dataset.feature_names.clone());
    if config.init == Init::SmallUniform {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        for w in model.weights_mut() {
            *w = rng.random_range(-0.01..0.01);
        }
    }
    for &k in masked {
        model.weights_mut()[k] = 0.0;
    }
    model
}

pub fn train_with(
    dataset: &Dataset,
    config: &TrainConfig,
    options: &TrainOptions,
) -> Result<(LinearModel, TrainHistory)> {
    config.validate()?;
    let violations = dataset.validate();
    if !violations.is_empty() {
        return Err(Error::InvalidDataset(
            violations.iter().map(ToString::to_string).collect(),
        ));
    }
    if let Some(&k) = options
        .masked_features
        .iter()
        .find(|&&k| k >= dataset.feature_dim)
    {
        return Err(Error::invalid(
            "masked_features",
            format!("column {k} out of range"),
        ));
    }
    let schedule = config.schedule()?;
    let mut model = initial_model(dataset, config, &options.masked_features);
    let mut history = TrainHistory::default();

    for epoch in 1..=config.epochs {
        let rho = schedule.progress(epoch)?;
        let batch = match batch_gradient(dataset, &model, config, rho, options.execution) {
            Err(Error::NonFinite(_)) => {
                return Err(Error::Diverged {
                    epoch,
                    loss: f64::NAN,
                })
            }
            other => other?,
        };
        if batch.contributing == 0 {
            return Err(Error::NoSupervision);
        }
        if !batch.mean_combined.is_finite() || batch.gradient.iter().any(|g| !g.is_finite()) {
            return Err(Error::Diverged {
                epoch,
                loss: batch.mean_combined,
            });
        }
        let mut step = batch.gradient;
        for &k in &options.masked_features {
            step[k] = 0.0;
        }
        let gradient_norm = step.iter().map(|g| g * g).sum::<f64>().sqrt();
        for (w, g) in model.weights_mut().iter_mut().zip(&step) {
            *w -= config.learning_rate * (g + config.l2 * *w);
        }
        if model.weights().iter().any(|w| !w.is_finite()) {
            return Err(Error::Diverged {
                epoch,
                loss: batch.mean_combined,
            });
        }
        history.label_fallback_queries = batch.label_fallback;
        history.contributing_queries = batch.contributing;
        history.records.push(EpochRecord {
            epoch,
            eta_effective: schedule.effective_eta(epoch)?,
            mean_pairwise: batch.mean_pairwise,
            mean_listwise: batch.mean_listwise,
            mean_combined: batch.mean_combined,
            gradient_norm,
        });
    }
    Ok((model, history))
}

/// The three compared training recipes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    /// Click-only RankNet without the semantic feature and without boosting.
    #[serde(rename = "prod")]
    ProdBaseline,
    /// Clicks plus graded labels, no locale boost.
    Mo,
    /// Clicks plus graded labels with locale boosting.
    LaMo,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::ProdBaseline, Variant::Mo, Variant::LaMo];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::ProdBaseline => "prod",
            Variant::Mo => "mo",
            Variant::LaMo => "la-mo",
        }
    }

    /// The variant's config derived from a shared base.
    pub fn config(self, base: &TrainConfig) -> TrainConfig {
        let mut config = base.clone();
        match self {
            Variant::ProdBaseline => {
                config.lambda_list = 0.0;
                config.eta = 1.0;
                config.per_locale_eta.clear();
            }
            Variant::Mo => {
                config.eta = 1.0;
                config.per_locale_eta.clear();
            }
            Variant::LaMo => {}
        }
        config
    }

    pub fn masked_features(self, dataset: &Dataset, base: &TrainConfig) -> Vec<usize> {
        match self {
            Variant::ProdBaseline => dataset
                .feature_index(&base.semantic_feature)
                .into_iter()
                .collect(),
            _ => Vec::new(),
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "prod" | "prod-baseline" | "prod_baseline" => Ok(Variant::ProdBaseline),
            "mo" => Ok(Variant::Mo),
            "la-mo" | "la_mo" => Ok(Variant::LaMo),
            other => Err(Error::invalid(
                "variant",
                format!("unknown variant `{other}` (expected prod, mo or la-mo)"),
            )),
        }
    }
}

pub fn train_variant(
    dataset: &Dataset,
    variant: Variant,
    base: &TrainConfig,
) -> Result<(LinearModel, TrainHistory)> {
    train_variant_with(dataset, variant, base, Execution::default())
}

pub fn train_variant_with(
    dataset: &Dataset,
    variant: Variant,
    base: &TrainConfig,
    execution: Execution,
) -> Result<(LinearModel, TrainHistory)> {
    let options = TrainOptions {
        masked_features: variant.masked_features(dataset, base),
        execution,
    };
    train_with(dataset, &variant.config(base), &options)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Item, QueryGroup, Regions};

    fn names(d: usize) -> Vec<String> {
        let mut n: Vec<String> = (0..d).map(|k| format!("f{k}")).collect();
        n[0] = SEMANTIC_FEATURE.to_owned();
        n
    }

    /// 20 queries where the clicked item always has the larger first feature.
    fn separable() -> Dataset {
        let queries = (0..20)
            .map(|q| {
                let items = (0..4)
                    .map(|i| {
                        let signal = if i == 0 { 1.0 } else { -0.5 + 0.1 * i as f64 };
                        let mut it = Item::new(
                            format!("d{i}"),
                            vec![signal, ((q * 7 + i) % 5) as f64 * 0.1],
                        );
                        it.clicked = i == 0;
                        it.graded_label = Some(if i == 0 { 3 } else { (i % 2) as u8 });
                        it.eligible_regions =
                            Regions::known([if i % 2 == 0 { "JP" } else { "US" }]);
                        it
                    })
                    .collect();
                QueryGroup::new(format!("q{q:02}"), Some("JP"), items)
            })
            .collect();
        Dataset::new(names(2), queries)
    }

    #[test]
    fn separable_clicks_drive_loss_down() {
        let config = TrainConfig {
            lambda_list: 0.0,
            eta: 1.0,
            epochs: 200,
            learning_rate: 1.0,
            ..TrainConfig::default()
        };
        let (_, h) = train(&separable(), &config).unwrap();
        let first = h.first().unwrap().mean_pairwise;
        let last = h.last().unwrap().mean_pairwise;
        assert!(last < 0.1 * first, "{first} -> {last}");
    }

    #[test]
    fn identical_features_do_not_move_weights() {
        let mut a = Item::new("a", vec![0.4, -1.0]);
        a.clicked = true;
        let b = Item::new("b", vec![0.4, -1.0]);
        let ds = Dataset::new(names(2), vec![QueryGroup::new("q", None, vec![a, b])]);
        let config = TrainConfig {
            lambda_list: 0.0,
            ..TrainConfig::default()
        };
        let (m, h) = train(&ds, &config).unwrap();
        assert_eq!(m.weights(), &[0.0, 0.0]);
        assert_eq!(h.records.len(), config.epochs);
        assert!(h
            .records
            .iter()
            .all(|r| (r.mean_pairwise - std::f64::consts::LN_2).abs() < 1e-15));
    }

    #[test]
    fn warmup_holds_first_epoch_at_unit_eta() {
        let ds = separable();
        let base = TrainConfig {
            eta: 3.0,
            epochs: 10,
            ..TrainConfig::default()
        };
        let (_, h0) = train(
            &ds,
            &TrainConfig {
                warmup_epochs: 0,
                ..base.clone()
            },
        )
        .unwrap();
        let (_, h9) = train(
            &ds,
            &TrainConfig {
                warmup_epochs: 9,
                ..base.clone()
            },
        )
        .unwrap();
        let (_, h_unit) = train(&ds, &TrainConfig { eta: 1.0, ..base }).unwrap();
        assert_eq!(h9.records[0].mean_combined, h_unit.records[0].mean_combined);
        assert_eq!(h9.records[0].eta_effective, 1.0);
        // Without warm-up the ramp is already above 1 at epoch 1.
        assert!(h0.records[0].eta_effective > 1.0);
        assert_eq!(h9.records[9].eta_effective, 3.0);
    }

    #[test]
    fn no_supervision_is_an_error() {
        let items = vec![
            Item::new("a", vec![1.0, 0.0]),
            Item::new("b", vec![0.0, 1.0]),
        ];
        let ds = Dataset::new(names(2), vec![QueryGroup::new("q", Some("US"), items)]);
        assert!(matches!(
            train(&ds, &TrainConfig::default()),
            Err(Error::NoSupervision)
        ));
    }

    #[test]
    fn divergence_reports_epoch() {
        let mut ds = separable();
        for q in &mut ds.queries {
            for it in &mut q.items {
                it.features.0[1] = 1e300;
            }
        }
        let config = TrainConfig {
            learning_rate: 1e10,
            lambda_list: 0.0,
            ..TrainConfig::default()
        };
        assert!(matches!(train(&ds, &config), Err(Error::Diverged { .. })));
    }

    #[test]
    fn training_is_deterministic_across_execution_modes() {
        let ds = separable();
        let config = TrainConfig {
            init: Init::SmallUniform,
            seed: 9,
            ..TrainConfig::default()
        };
        let seq = TrainOptions {
            execution: Execution::Sequential,
            ..TrainOptions::default()
        };
        let par = TrainOptions {
            execution: Execution::Parallel,
            ..TrainOptions::default()
        };
        let a = train_with(&ds, &config, &seq).unwrap();
        let b = train_with(&ds, &config, &par).unwrap();
        let c = train_with(&ds, &config, &par).unwrap();
        assert_eq!(a, b);
        assert_eq!(b, c);
    }

    #[test]
    fn small_steps_never_increase_loss() {
        let ds = separable();
        let config = TrainConfig {
            eta: 1.0,
            learning_rate: 1e-3,
            epochs: 100,
            ..TrainConfig::default()
        };
        let (_, h) = train(&ds, &config).unwrap();
        for w in h.records.windows(2) {
            assert!(w[1].mean_combined <= w[0].mean_combined + 1e-9);
        }
    }

    #[test]
    fn variants() {
        let ds = separable();
        let base = TrainConfig {
            init: Init::SmallUniform,
            ..TrainConfig::default()
        };
        let (prod, _) = train_variant(&ds, Variant::ProdBaseline, &base).unwrap();
        assert_eq!(prod.weights()[0], 0.0);
        let unit = TrainConfig { eta: 1.0, ..base };
        let mo = train_variant(&ds, Variant::Mo, &unit).unwrap();
        let la = train_variant(&ds, Variant::LaMo, &unit).unwrap();
        assert_eq!(mo, la);
        assert_eq!("la-mo".parse::<Variant>().unwrap(), Variant::LaMo);
        assert!("lamo".parse::<Variant>().is_err());
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let bad = [
            TrainConfig {
                lambda_rank: 0.0,
                lambda_list: 0.0,
                ..TrainConfig::default()
            },
            TrainConfig {
                tau: 0.0,
                ..TrainConfig::default()
            },
            TrainConfig {
                eta: 0.5,
                ..TrainConfig::default()
            },
            TrainConfig {
                warmup_epochs: 50,
                ..TrainConfig::default()
            },
            TrainConfig {
                learning_rate: 0.0,
                ..TrainConfig::default()
            },
            TrainConfig {
                l2: -1.0,
                ..TrainConfig::default()
            },
        ];
        for c in bad {
            assert!(c.validate().is_err(), "{c:?}");
        }
        let mut c = TrainConfig::default();
        c.per_locale_eta.insert("JP".into(), 0.2);
        assert!(c.validate().is_err());
        c.per_locale_eta.insert("JP".into(), 4.0);
        assert_eq!(c.eta_for(Some("JP")), 4.0);
        assert_eq!(c.eta_for(Some("US")), 2.0);
        assert_eq!(c.eta_for(None), 2.0);
    }
}
