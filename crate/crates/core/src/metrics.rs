//! Per-script development-activity metrics.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::io::Read;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{CommitRecord, FileChange, IacMatcher};
use crate::labeling::ScriptClass;
use crate::networks::{build_contribution_network, build_developer_network, NetworkError};

/// Ownership share at or below which a developer counts as a minor contributor.
pub const MINOR_OWNERSHIP: f64 = 0.05;
/// Days per month used for script age.
pub const DAYS_PER_MONTH: f64 = 30.44;

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("commit {commit_id} on {path}: {message}")]
    Replay {
        path: String,
        commit_id: String,
        message: String,
    },
    #[error("{0} has no lines of code; ownership is undefined")]
    EmptyScript(String),
    #[error("{0} has no commits")]
    NoCommits(String),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error("metric table row {row}: {message}")]
    Table { row: usize, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScriptCommit {
    pub commit_id: String,
    pub author_id: String,
    pub timestamp: i64,
    pub change: FileChange,
}

/// The commits touching one script, ordered by timestamp then commit id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScriptHistory {
    pub path: String,
    pub commits: Vec<ScriptCommit>,
}

impl ScriptHistory {
    pub fn new(path: impl Into<String>, mut commits: Vec<ScriptCommit>) -> Self {
        commits.sort_by(|a, b| (a.timestamp, &a.commit_id).cmp(&(b.timestamp, &b.commit_id)));
        Self {
            path: path.into(),
            commits,
        }
    }

    pub fn authors(&self) -> BTreeSet<&str> {
        self.commits.iter().map(|c| c.author_id.as_str()).collect()
    }
}

/// Splits a commit stream into per-script histories for every IaC path.
pub fn script_histories(commits: &[CommitRecord], iac: &IacMatcher) -> BTreeMap<String, ScriptHistory> {
    let mut per_path: BTreeMap<String, Vec<ScriptCommit>> = BTreeMap::new();
    for c in commits {
        let mut merged: BTreeMap<&str, FileChange> = BTreeMap::new();
        for ch in c.changes.iter().filter(|ch| iac.is_iac_script(&ch.path)) {
            merged
                .entry(ch.path.as_str())
                .and_modify(|m| {
                    m.lines_added += ch.lines_added;
                    m.lines_deleted += ch.lines_deleted;
                    m.modified_line_indices.extend(&ch.modified_line_indices);
                })
                .or_insert_with(|| ch.clone());
        }
        for (path, change) in merged {
            per_path.entry(path.to_string()).or_default().push(ScriptCommit {
                commit_id: c.commit_id.clone(),
                author_id: c.author_id.clone(),
                timestamp: c.timestamp,
                change,
            });
        }
    }
    per_path
        .into_iter()
        .map(|(path, commits)| (path.clone(), ScriptHistory::new(path, commits)))
        .collect()
}

/// Author of every line in the script's final snapshot.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LineAttribution {
    pub script_path: String,
    pub per_line_author: Vec<String>,
}

impl LineAttribution {
    pub fn loc(&self) -> usize {
        self.per_line_author.len()
    }

    /// Attributed line count per author.
    pub fn line_counts(&self) -> BTreeMap<&str, usize> {
        let mut counts = BTreeMap::new();
        for a in &self.per_line_author {
            *counts.entry(a.as_str()).or_default() += 1;
        }
        counts
    }

    /// Share of the final snapshot owned by each author.
    pub fn ownership(&self) -> BTreeMap<&str, f64> {
        let total = self.loc() as f64;
        self.line_counts()
            .into_iter()
            .map(|(a, c)| (a, c as f64 / total))
            .collect()
    }
}

/// Applies one commit's change to a snapshot of line authors.
///
/// Touched post-image lines take the commit's author. Untouched lines keep
/// their pre-image authors in order. Pre-image lines that disappear are taken
/// first at touched lines (in-place rewrites), and any surplus immediately
/// after the last touched line, or at the end of the file for changes that
/// touch no surviving line.
fn replay(snapshot: &[String], change: &FileChange, author: &str) -> Result<Vec<String>, String> {
    let pre_len = snapshot.len() as i64;
    let post_len = pre_len + i64::from(change.lines_added) - i64::from(change.lines_deleted);
    if post_len < 0 {
        return Err(format!(
            "deletes {} lines from a {pre_len}-line file",
            change.lines_deleted
        ));
    }
    let post_len = post_len as usize;
    let touched = &change.modified_line_indices;
    if let Some(&max) = touched.iter().next_back() {
        if max as usize > post_len || touched.contains(&0) {
            return Err(format!("line {max} outside the {post_len}-line post-image"));
        }
    }
    let kept = post_len - touched.len();
    if kept > snapshot.len() {
        return Err(format!(
            "{kept} untouched lines but only {} lines before the change",
            snapshot.len()
        ));
    }
    let drops = snapshot.len() - kept;
    let replaced = drops.min(touched.len());
    let mut surplus = drops - replaced;
    let last_touched = touched.iter().next_back().map(|&l| l as usize);

    let mut out = Vec::with_capacity(post_len);
    let mut cursor = 0usize;
    let mut replace_left = replaced;
    for line in 1..=post_len {
        if touched.contains(&(line as u32)) {
            out.push(author.to_string());
            if replace_left > 0 {
                cursor += 1;
                replace_left -= 1;
            }
            continue;
        }
        if last_touched.is_some_and(|l| line > l) && surplus > 0 {
            cursor += surplus;
            surplus = 0;
        }
        out.push(snapshot[cursor].clone());
        cursor += 1;
    }
    debug_assert_eq!(cursor + surplus, snapshot.len());
    Ok(out)
}

/// Last-writer-wins line attribution over the script's history.
pub fn attribute_lines(history: &ScriptHistory) -> Result<LineAttribution, MetricError> {
    let mut snapshot: Vec<String> = Vec::new();
    for c in &history.commits {
        snapshot = replay(&snapshot, &c.change, &c.author_id).map_err(|message| MetricError::Replay {
            path: history.path.clone(),
            commit_id: c.commit_id.clone(),
            message,
        })?;
    }
    Ok(LineAttribution {
        script_path: history.path.clone(),
        per_line_author: snapshot,
    })
}

/// Share of the final snapshot authored by its largest owner.
pub fn highest_contrib_code(attr: &LineAttribution) -> Result<f64, MetricError> {
    if attr.loc() == 0 {
        return Err(MetricError::EmptyScript(attr.script_path.clone()));
    }
    let max = attr.line_counts().into_values().max().unwrap_or(0);
    Ok(max as f64 / attr.loc() as f64)
}

/// Developers with at least one commit who own at most 5% of the final lines.
pub fn minor_contributors(attr: &LineAttribution, history: &ScriptHistory) -> Result<usize, MetricError> {
    if attr.loc() == 0 {
        return Err(MetricError::EmptyScript(attr.script_path.clone()));
    }
    let counts = attr.line_counts();
    let total = attr.loc() as f64;
    Ok(history
        .authors()
        .into_iter()
        .filter(|a| counts.get(a).copied().unwrap_or(0) as f64 / total <= MINOR_OWNERSHIP)
        .count())
}

pub fn developer_count(history: &ScriptHistory) -> usize {
    history.authors().len()
}

/// Lines added plus deleted per commit, over this script's changes only.
pub fn norm_commit_size(history: &ScriptHistory) -> Result<f64, MetricError> {
    if history.commits.is_empty() {
        return Err(MetricError::NoCommits(history.path.clone()));
    }
    let churn: u64 = history.commits.iter().map(|c| c.change.churn()).sum();
    Ok(churn as f64 / history.commits.len() as f64)
}

/// Entropy-style spread of modifications over line positions:
/// `-Σ x_i log2 x_i` where `x_i` is the fraction of the script's commits
/// that touched line `i`.
pub fn scatteredness(history: &ScriptHistory) -> Result<f64, MetricError> {
    if history.commits.is_empty() {
        return Err(MetricError::NoCommits(history.path.clone()));
    }
    let total = history.commits.len() as f64;
    let mut touches: BTreeMap<u32, u32> = BTreeMap::new();
    for c in &history.commits {
        for &line in &c.change.modified_line_indices {
            *touches.entry(line).or_default() += 1;
        }
    }
    Ok(touches
        .values()
        .map(|&k| {
            let x = f64::from(k) / total;
            if x <= 0.0 {
                0.0
            } else {
                -x * x.log2()
            }
        })
        .sum::<f64>()
        // -0.0 when every x is 1
        .abs())
}

/// Final line count and months between first and last commit.
pub fn size_and_age(history: &ScriptHistory, attr: &LineAttribution) -> Result<(usize, f64), MetricError> {
    let first = history.commits.iter().map(|c| c.timestamp).min();
    let last = history.commits.iter().map(|c| c.timestamp).max();
    let (Some(first), Some(last)) = (first, last) else {
        return Err(MetricError::NoCommits(history.path.clone()));
    };
    let months = (last - first) as f64 / (DAYS_PER_MONTH * 86_400.0);
    Ok((attr.loc(), months))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricVector {
    pub script_path: String,
    pub developer_count: usize,
    pub disjointness: f64,
    /// `None` for scripts with no surviving lines.
    pub highest_contrib_code: Option<f64>,
    pub minor_contributors: Option<usize>,
    pub norm_commit_size: f64,
    pub scatteredness: f64,
    pub unfocused_contribution: f64,
    pub size_loc: usize,
    pub age_months: f64,
    pub is_defective: bool,
}

/// Names of the seven activity metrics, in table order.
pub const ACTIVITY_METRICS: [&str; 7] = [
    "developers",
    "disjointness",
    "highest_contrib",
    "minors",
    "norm_commit_size",
    "scatteredness",
    "unfocused",
];

impl MetricVector {
    /// Value of an activity metric by its table column name.
    pub fn metric(&self, name: &str) -> Option<f64> {
        match name {
            "developers" => Some(self.developer_count as f64),
            "disjointness" => Some(self.disjointness),
            "highest_contrib" => self.highest_contrib_code,
            "minors" => self.minor_contributors.map(|m| m as f64),
            "norm_commit_size" => Some(self.norm_commit_size),
            "scatteredness" => Some(self.scatteredness),
            "unfocused" => Some(self.unfocused_contribution),
            "size_loc" => Some(self.size_loc as f64),
            "age_months" => Some(self.age_months),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MetricOptions {
    /// Divide edge betweenness by the number of developer pairs.
    pub normalize_edge_betweenness: bool,
}

impl Default for MetricOptions {
    fn default() -> Self {
        Self {
            normalize_edge_betweenness: true,
        }
    }
}

/// Commits plus script classes: the input to [`metric_table`].
#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub commits: Vec<CommitRecord>,
    pub classes: Vec<ScriptClass>,
    pub iac: IacMatcher,
}

/// One metric row per labeled script.
pub fn metric_table(dataset: &Dataset, opts: MetricOptions) -> Result<Vec<MetricVector>, MetricError> {
    let histories = script_histories(&dataset.commits, &dataset.iac);
    let scripts: BTreeSet<String> = histories.keys().cloned().collect();
    let dev_net = build_developer_network(&dataset.commits, &scripts);
    let edge_scores = dev_net.edge_betweenness_with(opts.normalize_edge_betweenness);
    let unfocused = build_contribution_network(&dataset.commits, &scripts).script_betweenness();

    let mut rows = Vec::with_capacity(dataset.classes.len());
    for class in &dataset.classes {
        let Some(history) = histories.get(&class.script_path) else {
            continue;
        };
        let attr = attribute_lines(history)?;
        let (size_loc, age_months) = size_and_age(history, &attr)?;
        let (highest, minors) = if attr.loc() == 0 {
            (None, None)
        } else {
            (
                Some(highest_contrib_code(&attr)?),
                Some(minor_contributors(&attr, history)?),
            )
        };
        rows.push(MetricVector {
            script_path: class.script_path.clone(),
            developer_count: developer_count(history),
            disjointness: dev_net.max_edge_betweenness_for_script(&edge_scores, &class.script_path)?,
            highest_contrib_code: highest,
            minor_contributors: minors,
            norm_commit_size: norm_commit_size(history)?,
            scatteredness: scatteredness(history)?,
            unfocused_contribution: unfocused.get(&class.script_path).copied().unwrap_or(0.0),
            size_loc,
            age_months,
            is_defective: class.is_defective,
        });
    }
    Ok(rows)
}

pub const TABLE_HEADER: &str =
    "script,developers,disjointness,highest_contrib,minors,norm_commit_size,scatteredness,unfocused,size_loc,age_months,defective";

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Renders the metric table as CSV. Floats use the shortest text that
/// parses back to the same value, so the file round-trips exactly.
pub fn table_to_csv(rows: &[MetricVector]) -> String {
    let mut out = String::from(TABLE_HEADER);
    out.push('\n');
    let num = |v: f64| format!("{v}");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            csv_field(&r.script_path),
            r.developer_count,
            num(r.disjointness),
            r.highest_contrib_code.map(num).unwrap_or_default(),
            r.minor_contributors.map(|m| m.to_string()).unwrap_or_default(),
            num(r.norm_commit_size),
            num(r.scatteredness),
            num(r.unfocused_contribution),
            r.size_loc,
            num(r.age_months),
            u8::from(r.is_defective),
        );
    }
    out
}

/// Parses a table written by [`table_to_csv`].
pub fn table_from_csv<R: Read>(reader: R) -> Result<Vec<MetricVector>, MetricError> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr.headers().map_err(|e| MetricError::Table {
        row: 1,
        message: e.to_string(),
    })?;
    if headers.iter().collect::<Vec<_>>().join(",") != TABLE_HEADER {
        return Err(MetricError::Table {
            row: 1,
            message: format!("expected header {TABLE_HEADER}"),
        });
    }
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 2;
        let rec = rec.map_err(|e| MetricError::Table {
            row,
            message: e.to_string(),
        })?;
        let num = |idx: usize| -> Result<f64, MetricError> {
            rec[idx].trim().parse::<f64>().map_err(|_| MetricError::Table {
                row,
                message: format!("column {idx}: not a number: {:?}", &rec[idx]),
            })
        };
        let opt = |idx: usize| -> Result<Option<f64>, MetricError> {
            if rec[idx].trim().is_empty() {
                Ok(None)
            } else {
                num(idx).map(Some)
            }
        };
        let defective = match rec[10].trim() {
            "1" | "true" => true,
            "0" | "false" => false,
            other => {
                return Err(MetricError::Table {
                    row,
                    message: format!("defective must be 0 or 1, got {other:?}"),
                })
            }
        };
        rows.push(MetricVector {
            script_path: rec[0].to_string(),
            developer_count: num(1)?.round() as usize,
            disjointness: num(2)?,
            highest_contrib_code: opt(3)?,
            minor_contributors: opt(4)?.map(|m| m.round() as usize),
            norm_commit_size: num(5)?,
            scatteredness: num(6)?,
            unfocused_contribution: num(7)?,
            size_loc: num(8)?.round() as usize,
            age_months: num(9)?,
            is_defective: defective,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sc(id: &str, author: &str, ts: i64, add: u32, del: u32, lines: impl IntoIterator<Item = u32>) -> ScriptCommit {
        ScriptCommit {
            commit_id: id.into(),
            author_id: author.into(),
            timestamp: ts,
            change: FileChange::new("s.pp", add, del, lines),
        }
    }

    fn hist(commits: Vec<ScriptCommit>) -> ScriptHistory {
        ScriptHistory::new("s.pp", commits)
    }

    #[test]
    fn single_author_owns_everything() {
        let h = hist(vec![sc("1", "a", 0, 10, 0, 1..=10)]);
        let attr = attribute_lines(&h).unwrap();
        assert_eq!(attr.loc(), 10);
        assert!(attr.per_line_author.iter().all(|a| a == "a"));
        assert_eq!(highest_contrib_code(&attr).unwrap(), 1.0);
        assert_eq!(minor_contributors(&attr, &h).unwrap(), 0);
    }

    #[test]
    fn rewrite_moves_ownership() {
        let h = hist(vec![sc("1", "a", 0, 10, 0, 1..=10), sc("2", "b", 1, 3, 3, 1..=3)]);
        let attr = attribute_lines(&h).unwrap();
        let counts = attr.line_counts();
        assert_eq!(counts["a"], 7);
        assert_eq!(counts["b"], 3);
        assert_eq!(&attr.per_line_author[..4], &["b", "b", "b", "a"]);
        assert!((highest_contrib_code(&attr).unwrap() - 0.7).abs() < 1e-15);
    }

    #[test]
    fn deletion_shrinks_without_new_authorship() {
        let h = hist(vec![sc("1", "a", 0, 10, 0, 1..=10), sc("2", "b", 1, 0, 4, [])]);
        let attr = attribute_lines(&h).unwrap();
        assert_eq!(attr.loc(), 6);
        assert!(attr.per_line_author.iter().all(|a| a == "a"));
        // b has commits but owns nothing: a minor contributor
        assert_eq!(minor_contributors(&attr, &h).unwrap(), 1);
    }

    #[test]
    fn insertion_shifts_following_lines() {
        let h = hist(vec![
            sc("1", "a", 0, 4, 0, 1..=4),
            sc("2", "b", 1, 2, 0, [3, 4]),
        ]);
        let attr = attribute_lines(&h).unwrap();
        assert_eq!(attr.per_line_author, vec!["a", "a", "b", "b", "a", "a"]);
    }

    #[test]
    fn shrinking_rewrite_drops_lines_after_the_edit() {
        // a: 1..=6 ; b replaces lines 2-4 with a single line
        let h = hist(vec![sc("1", "a", 0, 6, 0, 1..=6), sc("2", "b", 1, 1, 3, [2])]);
        let attr = attribute_lines(&h).unwrap();
        assert_eq!(attr.per_line_author, vec!["a", "b", "a", "a"]);
    }

    #[test]
    fn replay_errors_name_the_commit() {
        let h = hist(vec![sc("1", "a", 0, 2, 0, 1..=2), sc("bad", "b", 1, 1, 0, [7])]);
        match attribute_lines(&h) {
            Err(MetricError::Replay { commit_id, .. }) => assert_eq!(commit_id, "bad"),
            other => panic!("unexpected {other:?}"),
        }
        let h = hist(vec![sc("x", "a", 0, 0, 3, [])]);
        assert!(matches!(attribute_lines(&h), Err(MetricError::Replay { .. })));
    }

    #[test]
    fn minor_boundary_is_inclusive() {
        // a owns 95 lines, b owns exactly 5 of 100
        let h = hist(vec![sc("1", "a", 0, 100, 0, 1..=100), sc("2", "b", 1, 5, 5, 96..=100)]);
        let attr = attribute_lines(&h).unwrap();
        assert_eq!(attr.line_counts()["b"], 5);
        assert_eq!(minor_contributors(&attr, &h).unwrap(), 1);
        // six lines is above the threshold
        let h = hist(vec![sc("1", "a", 0, 100, 0, 1..=100), sc("2", "b", 1, 6, 6, 95..=100)]);
        let attr = attribute_lines(&h).unwrap();
        assert_eq!(minor_contributors(&attr, &h).unwrap(), 0);
    }

    #[test]
    fn empty_script_has_undefined_ownership() {
        let h = hist(vec![sc("1", "a", 0, 3, 0, 1..=3), sc("2", "a", 5, 0, 3, [])]);
        let attr = attribute_lines(&h).unwrap();
        assert!(matches!(highest_contrib_code(&attr), Err(MetricError::EmptyScript(_))));
        assert!(matches!(minor_contributors(&attr, &h), Err(MetricError::EmptyScript(_))));
        assert_eq!(size_and_age(&h, &attr).unwrap().0, 0);
    }

    #[test]
    fn developer_counts() {
        let h = hist(vec![sc("1", "a", 0, 1, 0, [1]), sc("2", "a", 1, 1, 0, [1]), sc("3", "a", 2, 1, 0, [1])]);
        assert_eq!(developer_count(&h), 1);
        let h = hist(vec![sc("1", "a", 0, 1, 0, [1]), sc("2", "b", 1, 1, 0, [1]), sc("3", "c", 2, 1, 0, [1])]);
        assert_eq!(developer_count(&h), 3);
    }

    #[test]
    fn commit_size_examples() {
        assert_eq!(norm_commit_size(&hist(vec![sc("1", "a", 0, 40, 0, [])])).unwrap(), 40.0);
        let h = hist(vec![
            sc("1", "a", 0, 10, 0, []),
            sc("2", "a", 1, 15, 5, []),
            sc("3", "a", 2, 0, 30, []),
        ]);
        assert_eq!(norm_commit_size(&h).unwrap(), 20.0);
        assert_eq!(norm_commit_size(&hist(vec![sc("1", "a", 0, 0, 0, [])])).unwrap(), 0.0);
    }

    #[test]
    fn scatteredness_without_modified_lines_is_zero() {
        assert_eq!(scatteredness(&hist(vec![sc("1", "a", 0, 0, 0, [])])).unwrap(), 0.0);
        // one commit touching every line: x = 1 for each, entropy 0
        assert_eq!(scatteredness(&hist(vec![sc("1", "a", 0, 5, 0, 1..=5)])).unwrap(), 0.0);
    }

    #[test]
    fn age_in_months() {
        let h = hist(vec![sc("1", "a", 0, 1, 0, [1])]);
        let attr = attribute_lines(&h).unwrap();
        assert_eq!(size_and_age(&h, &attr).unwrap(), (1, 0.0));
        // 2019-01-01 to 2020-01-01
        let h = hist(vec![sc("1", "a", 1_546_300_800, 1, 0, [1]), sc("2", "a", 1_577_836_800, 0, 0, [])]);
        let attr = attribute_lines(&h).unwrap();
        let (_, age) = size_and_age(&h, &attr).unwrap();
        assert!((age - 12.0).abs() <= 0.02, "{age}");
    }

    #[test]
    fn csv_round_trip_keeps_missing_ownership() {
        let rows = vec![
            MetricVector {
                script_path: "a,b.pp".into(),
                developer_count: 3,
                disjointness: 0.25,
                highest_contrib_code: Some(0.5),
                minor_contributors: Some(1),
                norm_commit_size: 12.5,
                scatteredness: 1.0,
                unfocused_contribution: 2.0,
                size_loc: 40,
                age_months: 3.25,
                is_defective: true,
            },
            MetricVector {
                script_path: "gone.pp".into(),
                developer_count: 1,
                disjointness: 0.0,
                highest_contrib_code: None,
                minor_contributors: None,
                norm_commit_size: 1.0,
                scatteredness: 0.0,
                unfocused_contribution: 0.0,
                size_loc: 0,
                age_months: 0.0,
                is_defective: false,
            },
        ];
        let text = table_to_csv(&rows);
        assert!(text.starts_with(TABLE_HEADER));
        assert!(text.contains("\"a,b.pp\",3,0.25,0.5,1,12.5"));
        assert_eq!(table_from_csv(text.as_bytes()).unwrap(), rows);
    }
}
