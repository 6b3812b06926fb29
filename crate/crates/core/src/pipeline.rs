//! End-to-end orchestration driven by a TOML configuration file.
//!
//! Stages run in order (ingest, label, metrics, analyze, features, predict,
//! report) and each writes its artifact into the output directory, so any
//! stage can be re-run from the files of the previous one.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::antipatterns::{flag_antipatterns, AntiPatternError, ThresholdConfig};
use crate::features::{bow_to_csv, quality_to_csv, FeatureError, ScriptCorpus};
use crate::ingest::{
    apply_selection_criteria, ingest_repository, log_export_string, AliasMap, CriteriaVerdict, IacMatcher,
    IngestError, IngestOptions, MonthCount, SourceFormat,
};
use crate::labeling::{
    import_labels_file, label_commits, label_scripts, labels_jsonl_string, FileIssueStore, LabelError, Ruleset,
};
use crate::metrics::{metric_table, table_to_csv, Dataset, MetricError, MetricOptions};
use crate::predict::{build_feature_sets, compare_feature_sets, CvOptions, PredictError};
use crate::report::{read_survey, render_survey, tally_survey, Report, ReportError};
use crate::stats::{analyze_table, StatsError};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_STAGE: i32 = 3;
pub const EXIT_VALIDATION: i32 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Config,
    Ingest,
    Label,
    Metrics,
    Analyze,
    Features,
    Predict,
    Report,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Stage::Config => "config",
            Stage::Ingest => "ingest",
            Stage::Label => "label",
            Stage::Metrics => "metrics",
            Stage::Analyze => "analyze",
            Stage::Features => "features",
            Stage::Predict => "predict",
            Stage::Report => "report",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FailureKind {
    Input,
    Stage,
    Validation,
}

impl FailureKind {
    pub fn exit_code(self) -> i32 {
        match self {
            FailureKind::Input => EXIT_INPUT,
            FailureKind::Stage => EXIT_STAGE,
            FailureKind::Validation => EXIT_VALIDATION,
        }
    }
}

#[derive(Debug, Error)]
#[error("stage {stage}: {message}")]
pub struct PipelineError {
    pub stage: Stage,
    pub kind: FailureKind,
    pub message: String,
}

impl PipelineError {
    pub fn new(stage: Stage, kind: FailureKind, message: impl Into<String>) -> Self {
        Self {
            stage,
            kind,
            message: message.into(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        self.kind.exit_code()
    }
}

/// Maps a module error to the failure class that picks the exit code.
pub trait Classify {
    fn kind(&self) -> FailureKind;
}

impl Classify for IngestError {
    fn kind(&self) -> FailureKind {
        match self {
            IngestError::Unreadable { .. } | IngestError::Parse { .. } | IngestError::AliasMap(_) => FailureKind::Input,
            IngestError::DuplicateCommit(_) => FailureKind::Validation,
            IngestError::Git(_) | IngestError::Write(_) => FailureKind::Stage,
        }
    }
}

impl Classify for LabelError {
    fn kind(&self) -> FailureKind {
        match self {
            LabelError::Io { .. } | LabelError::IssueStore(_) | LabelError::Rules(_) => FailureKind::Input,
            LabelError::Schema { .. }
            | LabelError::Unresolved { .. }
            | LabelError::Conflict(_)
            | LabelError::DanglingCommit(_)
            | LabelError::EmptyRuleset => FailureKind::Validation,
            _ => FailureKind::Stage,
        }
    }
}

impl Classify for MetricError {
    fn kind(&self) -> FailureKind {
        match self {
            MetricError::Table { .. } => FailureKind::Input,
            _ => FailureKind::Stage,
        }
    }
}

impl Classify for FeatureError {
    fn kind(&self) -> FailureKind {
        FailureKind::Input
    }
}

impl Classify for StatsError {
    fn kind(&self) -> FailureKind {
        FailureKind::Stage
    }
}

impl Classify for PredictError {
    fn kind(&self) -> FailureKind {
        match self {
            PredictError::InvalidArgument(_) => FailureKind::Validation,
            _ => FailureKind::Stage,
        }
    }
}

impl Classify for AntiPatternError {
    fn kind(&self) -> FailureKind {
        FailureKind::Validation
    }
}

impl Classify for ReportError {
    fn kind(&self) -> FailureKind {
        FailureKind::Input
    }
}

impl Classify for std::io::Error {
    fn kind(&self) -> FailureKind {
        FailureKind::Stage
    }
}

/// Attaches a stage to any classified error.
pub trait AtStage<T> {
    fn at(self, stage: Stage) -> Result<T, PipelineError>;
}

impl<T, E: Classify + fmt::Display> AtStage<T> for Result<T, E> {
    fn at(self, stage: Stage) -> Result<T, PipelineError> {
        self.map_err(|e| PipelineError::new(stage, e.kind(), e.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum FormatName {
    Git,
    #[default]
    Jsonl,
}

impl From<FormatName> for SourceFormat {
    fn from(f: FormatName) -> Self {
        match f {
            FormatName::Git => SourceFormat::Git,
            FormatName::Jsonl => SourceFormat::Jsonl,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IngestConfig {
    pub source: Option<PathBuf>,
    pub format: FormatName,
    pub extensions: Vec<String>,
    pub alias_map: Option<PathBuf>,
    /// Directory holding the current script texts; defaults to the
    /// repository itself in git mode.
    pub scripts_dir: Option<PathBuf>,
    pub lint_warnings: Option<PathBuf>,
    pub normalize_edge_betweenness: bool,
}

impl Default for IngestConfig {
    fn default() -> Self {
        Self {
            source: None,
            format: FormatName::Jsonl,
            extensions: vec![".pp".into()],
            alias_map: None,
            scripts_dir: None,
            lint_warnings: None,
            normalize_edge_betweenness: true,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LabelConfig {
    pub rules: Option<PathBuf>,
    pub import: Option<PathBuf>,
    pub issues: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PredictConfig {
    pub seed: u64,
    pub tune: bool,
    pub budget: usize,
    pub repeats: usize,
    pub folds: usize,
}

impl Default for PredictConfig {
    fn default() -> Self {
        let cv = CvOptions::default();
        Self {
            seed: cv.seed,
            tune: cv.tune,
            budget: cv.budget,
            repeats: cv.repeats,
            folds: cv.folds,
        }
    }
}

impl PredictConfig {
    pub fn cv_options(&self) -> CvOptions {
        CvOptions {
            repeats: self.repeats,
            folds: self.folds,
            tune: self.tune,
            budget: self.budget,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub output_dir: PathBuf,
    pub survey: Option<PathBuf>,
    pub ingest: IngestConfig,
    pub label: LabelConfig,
    pub thresholds: ThresholdConfig,
    pub predict: PredictConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            output_dir: PathBuf::from("out"),
            survey: None,
            ingest: IngestConfig::default(),
            label: LabelConfig::default(),
            thresholds: ThresholdConfig::default(),
            predict: PredictConfig::default(),
        }
    }
}

fn rebase(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self, PipelineError> {
        let cfg: Self =
            toml::from_str(text).map_err(|e| PipelineError::new(Stage::Config, FailureKind::Validation, e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Loads a config file; relative paths inside it are taken relative to
    /// the file's directory.
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = fs::read_to_string(path).map_err(|e| {
            PipelineError::new(Stage::Config, FailureKind::Input, format!("{}: {e}", path.display()))
        })?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.rebase(base);
        Ok(cfg)
    }

    pub fn rebase(&mut self, base: &Path) {
        rebase(base, &mut self.output_dir);
        for p in [
            &mut self.survey,
            &mut self.ingest.source,
            &mut self.ingest.alias_map,
            &mut self.ingest.scripts_dir,
            &mut self.ingest.lint_warnings,
            &mut self.label.rules,
            &mut self.label.import,
            &mut self.label.issues,
        ]
        .into_iter()
        .flatten()
        {
            rebase(base, p);
        }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let invalid = |m: String| Err(PipelineError::new(Stage::Config, FailureKind::Validation, m));
        self.thresholds.validate().at(Stage::Config)?;
        if self.predict.folds < 2 {
            return invalid(format!("predict.folds must be at least 2, got {}", self.predict.folds));
        }
        if self.predict.repeats < 1 {
            return invalid("predict.repeats must be at least 1".into());
        }
        if self.predict.tune && self.predict.budget < 1 {
            return invalid("predict.budget must be at least 1 when tuning".into());
        }
        if self.ingest.extensions.is_empty() {
            return invalid("ingest.extensions is empty".into());
        }
        Ok(())
    }

    pub fn iac(&self) -> IacMatcher {
        IacMatcher::new(&self.ingest.extensions)
    }
}

/// Repository summary without the commit list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestSummary {
    pub repo_id: String,
    pub commits: usize,
    pub total_files: usize,
    pub iac_files: usize,
    pub commit_months: Vec<MonthCount>,
    pub criteria: CriteriaVerdict,
}

/// Names of the files each stage writes under the output directory.
pub mod artifacts {
    pub const COMMITS: &str = "commits.jsonl";
    pub const SUMMARY: &str = "summary.json";
    pub const LABELS: &str = "labels.jsonl";
    pub const CLASSES: &str = "classes.json";
    pub const METRICS: &str = "metrics.csv";
    pub const STATS: &str = "stats.json";
    pub const BOW: &str = "bow.csv";
    pub const QUALITY: &str = "quality.csv";
    pub const EVAL: &str = "eval.json";
    pub const FLAGS: &str = "flags.json";
    pub const REPORT_JSON: &str = "report.json";
    pub const REPORT_TEXT: &str = "report.txt";
    pub const SURVEY: &str = "survey.txt";

    pub const ALL: [&str; 12] =
        [COMMITS, SUMMARY, LABELS, CLASSES, METRICS, STATS, BOW, QUALITY, EVAL, FLAGS, REPORT_JSON, REPORT_TEXT];
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunOutcome {
    pub written: Vec<PathBuf>,
}

fn write(out: &Path, name: &str, contents: &str, stage: Stage, written: &mut Vec<PathBuf>) -> Result<(), PipelineError> {
    let path = out.join(name);
    fs::write(&path, contents)
        .map_err(|e| PipelineError::new(stage, FailureKind::Stage, format!("{}: {e}", path.display())))?;
    written.push(path);
    Ok(())
}

fn to_json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("artifact serializes");
    s.push('\n');
    s
}

/// Runs every stage of the configured pipeline.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<RunOutcome, PipelineError> {
    cfg.validate()?;
    let out = &cfg.output_dir;
    fs::create_dir_all(out).map_err(|e| {
        PipelineError::new(Stage::Config, FailureKind::Input, format!("{}: {e}", out.display()))
    })?;
    let mut written = Vec::new();
    let iac = cfg.iac();

    // ingest
    let source = cfg
        .ingest
        .source
        .as_deref()
        .ok_or_else(|| PipelineError::new(Stage::Ingest, FailureKind::Input, "ingest.source is not set"))?;
    let aliases = match &cfg.ingest.alias_map {
        Some(p) => AliasMap::from_file(p).at(Stage::Ingest)?,
        None => AliasMap::default(),
    };
    let opts = IngestOptions {
        iac: iac.clone(),
        aliases,
        repo_id: None,
    };
    let summary = ingest_repository(source, cfg.ingest.format.into(), &opts).at(Stage::Ingest)?;
    let criteria = apply_selection_criteria(&summary);
    write(out, artifacts::COMMITS, &log_export_string(&summary.commits), Stage::Ingest, &mut written)?;
    let brief = IngestSummary {
        repo_id: summary.repo_id.clone(),
        commits: summary.commits.len(),
        total_files: summary.total_files,
        iac_files: summary.iac_files,
        commit_months: summary.commit_months.clone(),
        criteria,
    };
    write(out, artifacts::SUMMARY, &to_json(&brief), Stage::Ingest, &mut written)?;
    let commits = summary.commits;

    // label
    let ruleset = match &cfg.label.rules {
        Some(p) => Ruleset::from_file(p).at(Stage::Label)?,
        None => Ruleset::default(),
    };
    let store = match &cfg.label.issues {
        Some(p) => FileIssueStore::from_file(p).at(Stage::Label)?,
        None => FileIssueStore::default(),
    };
    let imported = match &cfg.label.import {
        Some(p) => import_labels_file(p).at(Stage::Label)?,
        None => Vec::new(),
    };
    let labels = label_commits(&commits, &store, &ruleset, &imported).at(Stage::Label)?;
    let classes = label_scripts(&labels, &commits, &iac).at(Stage::Label)?;
    write(out, artifacts::LABELS, &labels_jsonl_string(&labels), Stage::Label, &mut written)?;
    write(out, artifacts::CLASSES, &to_json(&classes), Stage::Label, &mut written)?;

    // metrics
    let dataset = Dataset {
        commits,
        classes,
        iac: iac.clone(),
    };
    let table = metric_table(
        &dataset,
        MetricOptions {
            normalize_edge_betweenness: cfg.ingest.normalize_edge_betweenness,
        },
    )
    .at(Stage::Metrics)?;
    if table.is_empty() {
        return Err(PipelineError::new(Stage::Metrics, FailureKind::Stage, "no IaC scripts in the history"));
    }
    write(out, artifacts::METRICS, &table_to_csv(&table), Stage::Metrics, &mut written)?;

    // analyze
    let analysis = analyze_table(&table).at(Stage::Analyze)?;
    write(out, artifacts::STATS, &to_json(&analysis), Stage::Analyze, &mut written)?;

    // features
    let scripts_dir = match (&cfg.ingest.scripts_dir, cfg.ingest.format) {
        (Some(d), _) => d.clone(),
        (None, FormatName::Git) => source.to_path_buf(),
        (None, FormatName::Jsonl) => {
            return Err(PipelineError::new(
                Stage::Features,
                FailureKind::Input,
                "ingest.scripts_dir is required for log-export input",
            ))
        }
    };
    let mut corpus = ScriptCorpus::from_dir(&scripts_dir, |p| iac.is_iac_script(p)).at(Stage::Features)?;
    if let Some(lint) = &cfg.ingest.lint_warnings {
        let file = fs::File::open(lint)
            .map_err(|e| PipelineError::new(Stage::Features, FailureKind::Input, format!("{}: {e}", lint.display())))?;
        corpus.load_lint_warnings(file).at(Stage::Features)?;
    }
    let bow = corpus.bow_table();
    let quality = corpus.quality_table();
    write(out, artifacts::BOW, &bow_to_csv(&bow), Stage::Features, &mut written)?;
    write(out, artifacts::QUALITY, &quality_to_csv(&quality), Stage::Features, &mut written)?;

    // predict
    let sets = build_feature_sets(&table, &bow, &quality).at(Stage::Predict)?;
    let eval = compare_feature_sets(&sets, &cfg.predict.cv_options()).at(Stage::Predict)?;
    write(out, artifacts::EVAL, &format!("{}\n", eval.to_json()), Stage::Predict, &mut written)?;

    // report
    let flags = flag_antipatterns(&table, &cfg.thresholds).at(Stage::Report)?;
    write(out, artifacts::FLAGS, &to_json(&flags), Stage::Report, &mut written)?;
    let report = Report {
        analysis,
        flags,
        eval: Some(eval),
    };
    write(out, artifacts::REPORT_JSON, &format!("{}\n", report.to_json()), Stage::Report, &mut written)?;
    let mut text = report.to_text();
    if let Some(survey) = &cfg.survey {
        let file = fs::File::open(survey)
            .map_err(|e| PipelineError::new(Stage::Report, FailureKind::Input, format!("{}: {e}", survey.display())))?;
        let tallies = tally_survey(&read_survey(file).at(Stage::Report)?);
        let rendered = render_survey(&tallies);
        write(out, artifacts::SURVEY, &rendered, Stage::Report, &mut written)?;
        text.push('\n');
        text.push_str(&rendered);
    }
    write(out, artifacts::REPORT_TEXT, &text, Stage::Report, &mut written)?;
    Ok(RunOutcome { written })
}

/// Per-script defect classes keyed by path, as written by the label stage.
pub fn read_classes(path: &Path) -> Result<BTreeMap<String, bool>, PipelineError> {
    let text = fs::read_to_string(path)
        .map_err(|e| PipelineError::new(Stage::Label, FailureKind::Input, format!("{}: {e}", path.display())))?;
    let classes: Vec<crate::labeling::ScriptClass> = serde_json::from_str(&text)
        .map_err(|e| PipelineError::new(Stage::Label, FailureKind::Input, format!("{}: {e}", path.display())))?;
    Ok(classes.into_iter().map(|c| (c.script_path, c.is_defective)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_defaults_and_overrides() {
        let cfg = PipelineConfig::from_toml("[predict]\nseed = 5\ntune = false\n").unwrap();
        assert_eq!(cfg.predict.seed, 5);
        assert!(!cfg.predict.tune);
        assert_eq!(cfg.predict.repeats, 10);
        assert_eq!(cfg.thresholds.max_developers, 11);
    }

    #[test]
    fn invalid_config_is_a_validation_error() {
        let err = PipelineConfig::from_toml("[thresholds]\nunfocused_quantile = 1.5\n").unwrap_err();
        assert_eq!(err.exit_code(), EXIT_VALIDATION);
        let err = PipelineConfig::from_toml("[predict]\nbogus = 1\n").unwrap_err();
        assert_eq!(err.exit_code(), EXIT_VALIDATION);
    }

    #[test]
    fn missing_source_fails_at_ingest() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = PipelineConfig::default();
        cfg.ingest.source = Some(dir.path().join("missing.jsonl"));
        cfg.output_dir = dir.path().join("out");
        let err = run_pipeline(&cfg).unwrap_err();
        assert_eq!(err.stage, Stage::Ingest);
        assert_eq!(err.exit_code(), EXIT_INPUT);
    }
}
