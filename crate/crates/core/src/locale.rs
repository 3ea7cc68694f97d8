//! Locale matching, locale-aware pair weights and label boosting, and the
//! curriculum ramp of the boost factor.

use serde::{Deserialize, Serialize};

use crate::data::{QueryGroup, Regions};
use crate::error::{Error, Result};

/// `1` iff the query locale is known, the regions are known, and the locale
/// is one of the regions.
pub fn locale_match(query_locale: Option<&str>, eligible_regions: &Regions) -> u8 {
    match query_locale {
        Some(locale) if eligible_regions.contains(locale) => 1,
        _ => 0,
    }
}

/// Match indicators for every item of a query list.
pub fn group_matches(group: &QueryGroup) -> Vec<u8> {
    group
        .items
        .iter()
        .map(|item| locale_match(group.locale.as_deref(), &item.eligible_regions))
        .collect()
}

fn check_eta(eta: f64) -> Result<()> {
    if !eta.is_finite() || eta < 1.0 {
        return Err(Error::invalid(
            "eta",
            format!("must be finite and >= 1, got {eta}"),
        ));
    }
    Ok(())
}

/// Weight of a clicked/unclicked pair: `eta` when the clicked item matches
/// the query locale and the unclicked one does not, else 1.
pub fn pair_weight(m_pos: u8, m_neg: u8, eta: f64) -> Result<f64> {
    check_eta(eta)?;
    Ok(if m_pos == 1 && m_neg == 0 { eta } else { 1.0 })
}

/// Weights for every `(P[a], N[b])` pair, laid out as `weights[a][b]`.
pub fn pair_weight_matrix(
    positives: &[usize],
    negatives: &[usize],
    matches: &[u8],
    eta: f64,
) -> Result<Vec<Vec<f64>>> {
    check_eta(eta)?;
    positives
        .iter()
        .map(|&i| {
            negatives
                .iter()
                .map(|&j| pair_weight(matches[i], matches[j], eta))
                .collect()
        })
        .collect()
}

/// Scales labels of locale-matching items by `eta`. Zero labels stay zero.
pub fn boost_labels(labels: &[f64], matches: &[u8], eta: f64) -> Result<Vec<f64>> {
    check_eta(eta)?;
    if labels.len() != matches.len() {
        return Err(Error::LengthMismatch {
            context: "labels vs locale matches",
            left: labels.len(),
            right: matches.len(),
        });
    }
    Ok(labels
        .iter()
        .zip(matches)
        .map(|(&r, &m)| if m == 1 { eta * r } else { r })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Ramp {
    #[default]
    Linear,
}

/// Epoch schedule for the effective boost: held at 1 through warm-up, then
/// ramped to `final_eta`, which is reached exactly at the last epoch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurriculumSchedule {
    total_epochs: usize,
    warmup_epochs: usize,
    final_eta: f64,
    ramp: Ramp,
}

impl CurriculumSchedule {
    pub fn new(total_epochs: usize, warmup_epochs: usize, final_eta: f64) -> Result<Self> {
        if total_epochs == 0 {
            return Err(Error::invalid("epochs", "must be >= 1"));
        }
        if warmup_epochs >= total_epochs {
            return Err(Error::invalid(
                "warmup_epochs",
                format!("{warmup_epochs} must be < epochs ({total_epochs})"),
            ));
        }
        check_eta(final_eta)?;
        Ok(CurriculumSchedule {
            total_epochs,
            warmup_epochs,
            final_eta,
            ramp: Ramp::Linear,
        })
    }

    pub fn total_epochs(&self) -> usize {
        self.total_epochs
    }

    pub fn warmup_epochs(&self) -> usize {
        self.warmup_epochs
    }

    pub fn final_eta(&self) -> f64 {
        self.final_eta
    }

    /// Same shape, different target boost.
    pub fn with_final_eta(&self, final_eta: f64) -> Result<Self> {
        CurriculumSchedule::new(self.total_epochs, self.warmup_epochs, final_eta)
    }

    /// Ramp progress in `[0, 1]` at 1-based `epoch`.
    pub fn progress(&self, epoch: usize) -> Result<f64> {
        if epoch == 0 || epoch > self.total_epochs {
            return Err(Error::invalid(
                "epoch",
                format!("{epoch} outside 1..={}", self.total_epochs),
            ));
        }
        Ok(match self.ramp {
            Ramp::Linear => {
                if epoch <= self.warmup_epochs {
                    0.0
                } else if epoch == self.total_epochs {
                    1.0
                } else {
                    (epoch - self.warmup_epochs) as f64
                        / (self.total_epochs - self.warmup_epochs) as f64
                }
            }
        })
    }

    pub fn effective_eta(&self, epoch: usize) -> Result<f64> {
        effective_eta(epoch, self)
    }
}

pub fn effective_eta(epoch: usize, schedule: &CurriculumSchedule) -> Result<f64> {
    let rho = schedule.progress(epoch)?;
    if rho == 1.0 {
        return Ok(schedule.final_eta);
    }
    Ok(1.0 + rho * (schedule.final_eta - 1.0))
}
