//! Defect prediction: feature matrices, PCA, learners, repeated
//! cross-validation with optional tuning, and Scott-Knott comparison.

pub mod cv;
pub mod de;
pub mod learners;
pub mod pca;
pub mod scott_knott;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{BowVector, CodeQualityVector};
use crate::metrics::{MetricVector, ACTIVITY_METRICS};

pub use cv::{cross_validate, cross_validate_10x10, de_tune, stratified_folds, CvOptions, FoldScore};
pub use de::{differential_evolution, DeResult};
pub use learners::{predict, train, Hyperparams, LearnerKind, Model};
pub use pca::{pca_fit, pca_transform, PcaModel};
pub use scott_knott::scott_knott_rank;

#[derive(Debug, Error)]
pub enum PredictError {
    #[error("need at least {needed} rows, got {got}")]
    TooFewRows { needed: usize, got: usize },
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("training failed: {0}")]
    Training(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("data error: {0}")]
    Data(String),
}

/// Scripts x named numeric features, with the defect label of each script.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub scripts: Vec<String>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub labels: Vec<bool>,
}

impl FeatureMatrix {
    pub fn new(
        scripts: Vec<String>,
        columns: Vec<String>,
        rows: Vec<Vec<f64>>,
        labels: Vec<bool>,
    ) -> Result<Self, PredictError> {
        if scripts.len() != rows.len() || rows.len() != labels.len() {
            return Err(PredictError::Data("scripts, rows and labels differ in length".into()));
        }
        if rows.iter().any(|r| r.len() != columns.len()) {
            return Err(PredictError::Data("row width does not match column count".into()));
        }
        if rows.iter().flatten().any(|v| !v.is_finite()) {
            return Err(PredictError::Data("feature matrix contains a missing or non-finite value".into()));
        }
        Ok(Self {
            scripts,
            columns,
            rows,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Applies `ln(1 + x)` to every cell.
    pub fn log1p(mut self) -> Result<Self, PredictError> {
        for v in self.rows.iter_mut().flatten() {
            if *v <= -1.0 {
                return Err(PredictError::Data(format!("value {v} below the log1p domain")));
            }
            *v = v.ln_1p();
        }
        Ok(self)
    }

    fn restrict(&self, keep: &BTreeSet<&str>) -> Self {
        let idx: Vec<usize> = (0..self.len()).filter(|&i| keep.contains(self.scripts[i].as_str())).collect();
        Self {
            scripts: idx.iter().map(|&i| self.scripts[i].clone()).collect(),
            columns: self.columns.clone(),
            rows: idx.iter().map(|&i| self.rows[i].clone()).collect(),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
        }
    }
}

/// Activity metric columns. Scripts without line ownership (zero LOC) are
/// skipped because two of the metrics are undefined for them.
pub fn activity_matrix(table: &[MetricVector]) -> Result<FeatureMatrix, PredictError> {
    let mut rows: Vec<&MetricVector> = table
        .iter()
        .filter(|m| ACTIVITY_METRICS.iter().all(|name| m.metric(name).is_some()))
        .collect();
    rows.sort_by(|a, b| a.script_path.cmp(&b.script_path));
    FeatureMatrix::new(
        rows.iter().map(|m| m.script_path.clone()).collect(),
        ACTIVITY_METRICS.iter().map(|s| s.to_string()).collect(),
        rows.iter()
            .map(|m| ACTIVITY_METRICS.iter().map(|name| m.metric(name).unwrap_or(0.0)).collect())
            .collect(),
        rows.iter().map(|m| m.is_defective).collect(),
    )
}

/// One column per token seen anywhere in the corpus.
pub fn bow_matrix(
    table: &BTreeMap<String, BowVector>,
    labels: &BTreeMap<String, bool>,
) -> Result<FeatureMatrix, PredictError> {
    let vocab: BTreeSet<&str> = table.values().flat_map(|b| b.token_counts.keys().map(String::as_str)).collect();
    let scripts: Vec<&String> = table.keys().filter(|s| labels.contains_key(*s)).collect();
    FeatureMatrix::new(
        scripts.iter().map(|s| s.to_string()).collect(),
        vocab.iter().map(|s| s.to_string()).collect(),
        scripts
            .iter()
            .map(|s| {
                let counts = &table[*s].token_counts;
                vocab.iter().map(|t| counts.get(*t).copied().unwrap_or(0) as f64).collect()
            })
            .collect(),
        scripts.iter().map(|s| labels[*s]).collect(),
    )
}

pub const QUALITY_COLUMNS: [&str; 6] = ["filelength", "complexity", "parameters", "execs", "lint_warnings", "fan_in"];

pub fn quality_matrix(
    table: &BTreeMap<String, CodeQualityVector>,
    labels: &BTreeMap<String, bool>,
) -> Result<FeatureMatrix, PredictError> {
    let scripts: Vec<&String> = table.keys().filter(|s| labels.contains_key(*s)).collect();
    FeatureMatrix::new(
        scripts.iter().map(|s| s.to_string()).collect(),
        QUALITY_COLUMNS.iter().map(|s| s.to_string()).collect(),
        scripts
            .iter()
            .map(|s| {
                let q = &table[*s];
                [q.filelength, q.complexity, q.parameters, q.execs, q.lint_warnings, q.fan_in]
                    .iter()
                    .map(|&v| v as f64)
                    .collect()
            })
            .collect(),
        scripts.iter().map(|s| labels[*s]).collect(),
    )
}

pub const FEATURE_SETS: [&str; 3] = ["activity", "bow", "quality"];

/// Builds the three log1p-transformed feature sets over the scripts common
/// to all of them.
pub fn build_feature_sets(
    metrics: &[MetricVector],
    bow: &BTreeMap<String, BowVector>,
    quality: &BTreeMap<String, CodeQualityVector>,
) -> Result<BTreeMap<String, FeatureMatrix>, PredictError> {
    let activity = activity_matrix(metrics)?;
    let labels: BTreeMap<String, bool> = activity.scripts.iter().cloned().zip(activity.labels.iter().copied()).collect();
    let bow = bow_matrix(bow, &labels)?;
    let quality = quality_matrix(quality, &labels)?;
    let in_bow: BTreeSet<&str> = bow.scripts.iter().map(String::as_str).collect();
    let in_quality: BTreeSet<&str> = quality.scripts.iter().map(String::as_str).collect();
    let common: BTreeSet<String> = activity
        .scripts
        .iter()
        .filter(|s| in_bow.contains(s.as_str()) && in_quality.contains(s.as_str()))
        .cloned()
        .collect();
    let common: BTreeSet<&str> = common.iter().map(String::as_str).collect();
    let mut out = BTreeMap::new();
    for (name, m) in FEATURE_SETS.iter().zip([activity, bow, quality]) {
        out.insert(name.to_string(), m.restrict(&common).log1p()?);
    }
    Ok(out)
}

pub const MEASURES: [&str; 3] = ["precision", "recall", "f1"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub precision: Vec<f64>,
    pub recall: Vec<f64>,
    pub f1: Vec<f64>,
    pub median: BTreeMap<String, f64>,
    pub sk_rank: BTreeMap<String, usize>,
    /// Fold indices whose precision was undefined and recorded as 0.
    pub undefined_precision: Vec<usize>,
}

impl CellReport {
    pub fn measure(&self, name: &str) -> Option<&[f64]> {
        match name {
            "precision" => Some(&self.precision),
            "recall" => Some(&self.recall),
            "f1" => Some(&self.f1),
            _ => None,
        }
    }
}

/// feature set -> learner -> cell.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EvalReport(pub BTreeMap<String, BTreeMap<String, CellReport>>);

impl EvalReport {
    pub fn cells(&self) -> impl Iterator<Item = (&str, &str, &CellReport)> {
        self.0
            .iter()
            .flat_map(|(fs, m)| m.iter().map(move |(l, c)| (fs.as_str(), l.as_str(), c)))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

pub(crate) fn median_of(values: &[f64]) -> f64 {
    crate::ingest::median(values).unwrap_or(0.0)
}

/// Cross-validates every (feature set, learner) pair and ranks the cells
/// per measure with Scott-Knott.
pub fn compare_feature_sets(
    sets: &BTreeMap<String, FeatureMatrix>,
    opts: &CvOptions,
) -> Result<EvalReport, PredictError> {
    let mut report = EvalReport::default();
    for (name, matrix) in sets {
        let scores = cross_validate(matrix, &LearnerKind::ALL, opts)?;
        let cells = report.0.entry(name.clone()).or_default();
        for (kind, folds) in scores {
            let precision: Vec<f64> = folds.iter().map(|f| f.precision).collect();
            let recall: Vec<f64> = folds.iter().map(|f| f.recall).collect();
            let f1: Vec<f64> = folds.iter().map(|f| f.f1).collect();
            let median = MEASURES
                .iter()
                .zip([&precision, &recall, &f1])
                .map(|(m, v)| (m.to_string(), median_of(v)))
                .collect();
            let undefined_precision = folds
                .iter()
                .enumerate()
                .filter(|(_, f)| f.undefined_precision)
                .map(|(i, _)| i)
                .collect();
            cells.insert(
                kind.name().to_string(),
                CellReport {
                    precision,
                    recall,
                    f1,
                    median,
                    sk_rank: BTreeMap::new(),
                    undefined_precision,
                },
            );
        }
    }
    for measure in MEASURES {
        let groups: BTreeMap<String, Vec<f64>> = report
            .cells()
            .map(|(fs, l, c)| (format!("{fs}/{l}"), c.measure(measure).unwrap_or_default().to_vec()))
            .collect();
        let ranks = scott_knott_rank(&groups);
        for (fs, cells) in report.0.iter_mut() {
            for (l, c) in cells.iter_mut() {
                c.sk_rank.insert(measure.to_string(), ranks[&format!("{fs}/{l}")]);
            }
        }
    }
    Ok(report)
}
