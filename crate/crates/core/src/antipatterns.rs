//! The five development anti-patterns and their thresholds.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::MetricVector;

#[derive(Debug, Error, PartialEq)]
pub enum AntiPatternError {
    #[error("metric table is empty")]
    EmptyTable,
    #[error("invalid threshold: {0}")]
    InvalidThreshold(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AntiPattern {
    BossNotAround,
    ManyCooks,
    MinorsSpoilers,
    Silos,
    Unfocused,
}

impl AntiPattern {
    pub const ALL: [AntiPattern; 5] = [
        AntiPattern::BossNotAround,
        AntiPattern::ManyCooks,
        AntiPattern::MinorsSpoilers,
        AntiPattern::Silos,
        AntiPattern::Unfocused,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AntiPattern::BossNotAround => "boss_not_around",
            AntiPattern::ManyCooks => "many_cooks",
            AntiPattern::MinorsSpoilers => "minors_spoilers",
            AntiPattern::Silos => "silos",
            AntiPattern::Unfocused => "unfocused",
        }
    }

    /// Whether the threshold is relative to the dataset rather than fixed.
    pub fn is_dataset_relative(self) -> bool {
        matches!(self, AntiPattern::Silos | AntiPattern::Unfocused)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ThresholdConfig {
    pub max_developers: usize,
    pub max_minors: usize,
    pub min_highest_contrib: f64,
    pub disjointness_quantile: f64,
    pub unfocused_quantile: f64,
}

impl Default for ThresholdConfig {
    fn default() -> Self {
        Self {
            max_developers: 11,
            max_minors: 7,
            min_highest_contrib: 0.8,
            disjointness_quantile: 0.75,
            unfocused_quantile: 0.75,
        }
    }
}

impl ThresholdConfig {
    pub fn validate(&self) -> Result<(), AntiPatternError> {
        for (name, q) in [
            ("disjointness_quantile", self.disjointness_quantile),
            ("unfocused_quantile", self.unfocused_quantile),
        ] {
            if !(q > 0.0 && q < 1.0) {
                return Err(AntiPatternError::InvalidThreshold(format!("{name} must lie in (0, 1), got {q}")));
            }
        }
        if !(0.0..=1.0).contains(&self.min_highest_contrib) {
            return Err(AntiPatternError::InvalidThreshold(format!(
                "min_highest_contrib must lie in [0, 1], got {}",
                self.min_highest_contrib
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AntiPatternFlag {
    pub script_path: String,
    pub pattern: AntiPattern,
    pub triggered: bool,
    /// `None` when the metric is undefined for the script.
    pub value: Option<f64>,
    pub threshold: f64,
}

/// Sample quantile with linear interpolation between order statistics
/// (`h = (n - 1) q`).
pub fn quantile(values: &[f64], q: f64) -> Option<f64> {
    if values.is_empty() || !(0.0..=1.0).contains(&q) {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let h = (v.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(v.len() - 1);
    Some(v[lo] + (h - lo as f64) * (v[hi] - v[lo]))
}

/// Five flags per script, in script order then pattern order.
pub fn flag_antipatterns(
    table: &[MetricVector],
    config: &ThresholdConfig,
) -> Result<Vec<AntiPatternFlag>, AntiPatternError> {
    if table.is_empty() {
        return Err(AntiPatternError::EmptyTable);
    }
    config.validate()?;
    let disjointness: Vec<f64> = table.iter().map(|m| m.disjointness).collect();
    let unfocused: Vec<f64> = table.iter().map(|m| m.unfocused_contribution).collect();
    let silos_at = quantile(&disjointness, config.disjointness_quantile).unwrap_or(f64::INFINITY);
    let unfocused_at = quantile(&unfocused, config.unfocused_quantile).unwrap_or(f64::INFINITY);

    let mut flags = Vec::with_capacity(table.len() * 5);
    for m in table {
        for pattern in AntiPattern::ALL {
            let (value, threshold, triggered) = match pattern {
                AntiPattern::BossNotAround => {
                    let t = config.min_highest_contrib;
                    (m.highest_contrib_code, t, m.highest_contrib_code.is_some_and(|v| v < t))
                }
                AntiPattern::ManyCooks => {
                    let v = m.developer_count;
                    (Some(v as f64), config.max_developers as f64, v > config.max_developers)
                }
                AntiPattern::MinorsSpoilers => {
                    let v = m.minor_contributors;
                    (v.map(|c| c as f64), config.max_minors as f64, v.is_some_and(|c| c > config.max_minors))
                }
                AntiPattern::Silos => (Some(m.disjointness), silos_at, m.disjointness > silos_at),
                AntiPattern::Unfocused => (
                    Some(m.unfocused_contribution),
                    unfocused_at,
                    m.unfocused_contribution > unfocused_at,
                ),
            };
            flags.push(AntiPatternFlag {
                script_path: m.script_path.clone(),
                pattern,
                triggered,
                value,
                threshold,
            });
        }
    }
    Ok(flags)
}
