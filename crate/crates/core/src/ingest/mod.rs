//! Commit-history ingestion.
//!
//! Everything downstream works on the JSON Lines log-export form of a
//! history: one [`CommitRecord`] per line. Live repositories are read by
//! shelling out to `git` (see [`git`]) and converted into the same records.

pub mod git;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Datelike};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Minimum share of IaC files for a repository to be selected.
pub const MIN_IAC_FILE_RATIO: f64 = 0.11;
/// Minimum (median) number of commits per month for a repository to be selected.
pub const MIN_MONTHLY_COMMITS: f64 = 2.0;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("cannot read {path}: {source}")]
    Unreadable {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("duplicate commit id {0}")]
    DuplicateCommit(String),
    #[error("git: {0}")]
    Git(String),
    #[error("alias map: {0}")]
    AliasMap(String),
    #[error("write failed: {0}")]
    Write(#[from] std::io::Error),
}

/// Per-file churn of one commit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileChange {
    pub path: String,
    #[serde(rename = "add")]
    pub lines_added: u32,
    #[serde(rename = "del")]
    pub lines_deleted: u32,
    /// 1-based post-image line numbers touched by the commit's hunks.
    #[serde(rename = "lines")]
    pub modified_line_indices: BTreeSet<u32>,
}

impl FileChange {
    pub fn new(path: impl Into<String>, added: u32, deleted: u32, lines: impl IntoIterator<Item = u32>) -> Self {
        Self {
            path: path.into(),
            lines_added: added,
            lines_deleted: deleted,
            modified_line_indices: lines.into_iter().collect(),
        }
    }

    pub fn churn(&self) -> u64 {
        u64::from(self.lines_added) + u64::from(self.lines_deleted)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommitRecord {
    #[serde(rename = "id")]
    pub commit_id: String,
    #[serde(rename = "author")]
    pub author_id: String,
    /// UTC seconds since the epoch.
    #[serde(rename = "ts")]
    pub timestamp: i64,
    #[serde(rename = "msg")]
    pub message: String,
    pub changes: Vec<FileChange>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MonthCount {
    pub year: i32,
    pub month: u32,
    pub commits: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepositorySummary {
    pub repo_id: String,
    pub total_files: usize,
    pub iac_files: usize,
    pub commit_months: Vec<MonthCount>,
    pub commits: Vec<CommitRecord>,
}

/// Decides which paths are IaC scripts, by exact terminal extension.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IacMatcher {
    extensions: Vec<String>,
}

impl Default for IacMatcher {
    fn default() -> Self {
        Self::new([".pp"])
    }
}

impl IacMatcher {
    pub fn new<S: AsRef<str>>(extensions: impl IntoIterator<Item = S>) -> Self {
        let extensions = extensions
            .into_iter()
            .map(|e| {
                let e = e.as_ref().trim().to_ascii_lowercase();
                if e.starts_with('.') {
                    e
                } else {
                    format!(".{e}")
                }
            })
            .collect();
        Self { extensions }
    }

    pub fn is_iac_script(&self, path: &str) -> bool {
        let file_name = path.rsplit(['/', '\\']).next().unwrap_or(path);
        let Some(dot) = file_name.rfind('.') else {
            return false;
        };
        if dot == 0 {
            // dotfiles such as `.pp` have no extension
            return false;
        }
        let ext = file_name[dot..].to_ascii_lowercase();
        self.extensions.iter().any(|e| *e == ext)
    }
}

/// Shorthand for the default `.pp` matcher.
pub fn is_iac_script(path: &str) -> bool {
    IacMatcher::default().is_iac_script(path)
}

/// Author identity normalization: lowercased email, then alias substitution.
#[derive(Debug, Clone, Default)]
pub struct AliasMap {
    aliases: HashMap<String, String>,
}

impl AliasMap {
    /// Loads a JSON object mapping alias identities to canonical ones.
    pub fn from_file(path: &Path) -> Result<Self, IngestError> {
        let text = fs::read_to_string(path).map_err(|source| IngestError::Unreadable {
            path: path.to_path_buf(),
            source,
        })?;
        let raw: BTreeMap<String, String> =
            serde_json::from_str(&text).map_err(|e| IngestError::AliasMap(e.to_string()))?;
        Ok(Self::from_pairs(raw))
    }

    pub fn from_pairs<K: AsRef<str>, V: AsRef<str>>(pairs: impl IntoIterator<Item = (K, V)>) -> Self {
        let aliases = pairs
            .into_iter()
            .map(|(k, v)| (k.as_ref().trim().to_lowercase(), v.as_ref().trim().to_lowercase()))
            .collect();
        Self { aliases }
    }

    pub fn normalize(&self, raw: &str) -> String {
        let id = raw.trim().to_lowercase();
        match self.aliases.get(&id) {
            Some(canonical) => canonical.clone(),
            None => id,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SourceFormat {
    Git,
    Jsonl,
}

#[derive(Debug, Clone, Default)]
pub struct IngestOptions {
    pub iac: IacMatcher,
    pub aliases: AliasMap,
    pub repo_id: Option<String>,
}

/// Reads a repository (via `git`) or a log export into a [`RepositorySummary`].
pub fn ingest_repository(
    source: &Path,
    format: SourceFormat,
    opts: &IngestOptions,
) -> Result<RepositorySummary, IngestError> {
    let (commits, all_paths) = match format {
        SourceFormat::Jsonl => {
            let commits = read_log_export(source)?;
            let paths = commits
                .iter()
                .flat_map(|c| c.changes.iter().map(|ch| ch.path.clone()))
                .collect::<BTreeSet<_>>();
            (commits, paths)
        }
        SourceFormat::Git => {
            let commits = git::read_history(source)?;
            let paths = git::tracked_files(source)?;
            (commits, paths)
        }
    };
    let repo_id = opts.repo_id.clone().unwrap_or_else(|| {
        source
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default()
    });
    summarize(repo_id, normalize_authors(commits, &opts.aliases), &all_paths, &opts.iac)
}

fn normalize_authors(mut commits: Vec<CommitRecord>, aliases: &AliasMap) -> Vec<CommitRecord> {
    for c in &mut commits {
        c.author_id = aliases.normalize(&c.author_id);
    }
    commits
}

/// Builds a summary from an already-parsed commit stream.
pub fn summarize(
    repo_id: String,
    commits: Vec<CommitRecord>,
    all_paths: &BTreeSet<String>,
    iac: &IacMatcher,
) -> Result<RepositorySummary, IngestError> {
    let mut seen = BTreeSet::new();
    for c in &commits {
        if !seen.insert(c.commit_id.as_str()) {
            return Err(IngestError::DuplicateCommit(c.commit_id.clone()));
        }
    }
    let iac_files = all_paths.iter().filter(|p| iac.is_iac_script(p)).count();
    Ok(RepositorySummary {
        repo_id,
        total_files: all_paths.len(),
        iac_files,
        commit_months: monthly_commit_counts(&commits),
        commits,
    })
}

fn year_month(ts: i64) -> (i32, u32) {
    let dt = DateTime::from_timestamp(ts, 0).unwrap_or_default();
    (dt.year(), dt.month())
}

/// Commit counts per calendar month (UTC), covering first to last commit
/// inclusive with empty months present as zero.
pub fn monthly_commit_counts(commits: &[CommitRecord]) -> Vec<MonthCount> {
    let Some(first) = commits.iter().map(|c| c.timestamp).min() else {
        return Vec::new();
    };
    let last = commits.iter().map(|c| c.timestamp).max().unwrap_or(first);
    let mut counts: BTreeMap<(i32, u32), u32> = BTreeMap::new();
    for c in commits {
        *counts.entry(year_month(c.timestamp)).or_default() += 1;
    }
    let (mut y, mut m) = year_month(first);
    let end = year_month(last);
    let mut out = Vec::new();
    loop {
        out.push(MonthCount {
            year: y,
            month: m,
            commits: counts.get(&(y, m)).copied().unwrap_or(0),
        });
        if (y, m) == end {
            break;
        }
        if m == 12 {
            y += 1;
            m = 1;
        } else {
            m += 1;
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriteriaVerdict {
    /// Repository could be read.
    pub available: bool,
    pub iac_ratio: Option<f64>,
    pub zero_files: bool,
    pub iac_share: bool,
    pub median_monthly_commits: Option<f64>,
    pub commit_activity: bool,
    pub selected: bool,
}

/// Applies the three repository selection criteria to an ingested summary.
pub fn apply_selection_criteria(summary: &RepositorySummary) -> CriteriaVerdict {
    let zero_files = summary.total_files == 0;
    let iac_ratio = (!zero_files).then(|| summary.iac_files as f64 / summary.total_files as f64);
    let iac_share = iac_ratio.is_some_and(|r| r >= MIN_IAC_FILE_RATIO);
    let monthly: Vec<f64> = summary.commit_months.iter().map(|m| f64::from(m.commits)).collect();
    let median_monthly_commits = median(&monthly);
    let commit_activity = median_monthly_commits.is_some_and(|m| m >= MIN_MONTHLY_COMMITS);
    CriteriaVerdict {
        available: true,
        iac_ratio,
        zero_files,
        iac_share,
        median_monthly_commits,
        commit_activity,
        selected: iac_share && commit_activity,
    }
}

pub(crate) fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    })
}

/// Parses a JSON Lines log export. Blank lines are skipped.
pub fn parse_log_export<R: BufRead>(reader: R) -> Result<Vec<CommitRecord>, IngestError> {
    let mut commits = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| IngestError::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let commit: CommitRecord = serde_json::from_str(&line).map_err(|e| IngestError::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        for ch in &commit.changes {
            if ch.modified_line_indices.contains(&0) {
                return Err(IngestError::Parse {
                    line: line_no,
                    message: format!("{}: line numbers are 1-based", ch.path),
                });
            }
            if ch.modified_line_indices.len() as u64 > ch.churn() {
                return Err(IngestError::Parse {
                    line: line_no,
                    message: format!("{}: more touched lines than added+deleted", ch.path),
                });
            }
        }
        commits.push(commit);
    }
    Ok(commits)
}

pub fn read_log_export(path: &Path) -> Result<Vec<CommitRecord>, IngestError> {
    let file = fs::File::open(path).map_err(|source| IngestError::Unreadable {
        path: path.to_path_buf(),
        source,
    })?;
    parse_log_export(BufReader::new(file))
}

pub fn write_log_export<W: Write>(mut out: W, commits: &[CommitRecord]) -> Result<(), IngestError> {
    for c in commits {
        serde_json::to_writer(&mut out, c).map_err(|e| IngestError::Write(e.into()))?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn log_export_string(commits: &[CommitRecord]) -> String {
    let mut buf = Vec::new();
    write_log_export(&mut buf, commits).expect("writing to a Vec cannot fail");
    String::from_utf8(buf).expect("serde_json emits UTF-8")
}
