//! Defect-related commit labeling.
//!
//! A commit's message is extended with the summaries of any issues it
//! references, then either classified by keyword rules or matched against
//! imported human ratings. Scripts touched by at least one defect-related
//! commit are defective; every other touched script is neutral.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::io::Read;
use std::path::Path;

use regex::{Regex, RegexBuilder};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{CommitRecord, IacMatcher};

#[derive(Debug, Error)]
pub enum LabelError {
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error("issue store: {0}")]
    IssueStore(String),
    #[error("label csv row {row}: {message}")]
    Schema { row: usize, message: String },
    #[error("label csv row {row}: raters disagree on {commit_id} and no resolver verdict is given")]
    Unresolved { row: usize, commit_id: String },
    #[error("conflicting labels for commit {0}")]
    Conflict(String),
    #[error("label references unknown commit {0}")]
    DanglingCommit(String),
    #[error("ruleset has no keywords")]
    EmptyRuleset,
    #[error("rules file: {0}")]
    Rules(String),
    #[error("rating vectors differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("rating vectors are empty")]
    EmptyRatings,
}

/// Source of issue summaries keyed by issue identifier.
pub trait IssueStore {
    fn summary(&self, issue_id: &str) -> Option<&str>;
}

/// Issue store backed by a JSON object `{ "<id>": "<summary>" }`.
#[derive(Debug, Clone, Default)]
pub struct FileIssueStore {
    issues: HashMap<String, String>,
}

impl FileIssueStore {
    pub fn from_file(path: &Path) -> Result<Self, LabelError> {
        let text = fs::read_to_string(path).map_err(|e| LabelError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self, LabelError> {
        let issues = serde_json::from_str(text).map_err(|e| LabelError::IssueStore(e.to_string()))?;
        Ok(Self { issues })
    }

    pub fn from_pairs<K: Into<String>, V: Into<String>>(pairs: impl IntoIterator<Item = (K, V)>) -> Self {
        Self {
            issues: pairs.into_iter().map(|(k, v)| (k.into(), v.into())).collect(),
        }
    }
}

impl IssueStore for FileIssueStore {
    fn summary(&self, issue_id: &str) -> Option<&str> {
        self.issues.get(issue_id).map(String::as_str)
    }
}

/// Regular expressions whose first capture group is an issue identifier.
#[derive(Debug, Clone)]
pub struct IssuePatterns {
    patterns: Vec<Regex>,
}

impl Default for IssuePatterns {
    fn default() -> Self {
        let patterns = vec![
            Regex::new(r"#(\d+)").unwrap(),
            Regex::new(r"\b([A-Z]+-\d+)\b").unwrap(),
            RegexBuilder::new(r"\bbug[ :#]*(\d+)")
                .case_insensitive(true)
                .build()
                .unwrap(),
        ];
        Self { patterns }
    }
}

impl IssuePatterns {
    pub fn new(patterns: Vec<Regex>) -> Self {
        Self { patterns }
    }

    /// Identifiers in order of first appearance, deduplicated.
    pub fn extract(&self, text: &str) -> Vec<String> {
        let mut found: Vec<(usize, String)> = Vec::new();
        for re in &self.patterns {
            for caps in re.captures_iter(text) {
                if let Some(m) = caps.get(1).or_else(|| caps.get(0)) {
                    found.push((m.start(), m.as_str().to_string()));
                }
            }
        }
        found.sort();
        let mut seen = BTreeSet::new();
        found
            .into_iter()
            .filter_map(|(_, id)| seen.insert(id.clone()).then_some(id))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtendedCommitMessage {
    pub commit_id: String,
    pub text: String,
    pub issue_ids: Vec<String>,
}

/// Concatenates a commit message with the summaries of the issues it names.
pub fn build_ecm(commit: &CommitRecord, store: &dyn IssueStore, patterns: &IssuePatterns) -> ExtendedCommitMessage {
    let issue_ids = patterns.extract(&commit.message);
    let mut text = commit.message.clone();
    for id in &issue_ids {
        if let Some(summary) = store.summary(id) {
            text.push('\n');
            text.push_str(summary);
        }
    }
    ExtendedCommitMessage {
        commit_id: commit.commit_id.clone(),
        text,
        issue_ids,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelSource {
    Heuristic,
    Imported,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DefectLabel {
    pub commit_id: String,
    pub is_defect_related: bool,
    pub source: LabelSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rater_votes: Option<Vec<bool>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resolver: Option<bool>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub matched_keywords: Vec<String>,
}

pub const DEFAULT_KEYWORDS: [&str; 14] = [
    "bug", "fix", "fixes", "fixed", "defect", "error", "fail", "failure", "crash", "wrong", "incorrect", "fault",
    "patch", "revert",
];

/// Keyword rules for the heuristic classifier.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ruleset {
    pub keywords: Vec<String>,
    /// Phrases removed from the text before keyword matching.
    #[serde(default)]
    pub negations: Vec<String>,
}

impl Default for Ruleset {
    fn default() -> Self {
        Self {
            keywords: DEFAULT_KEYWORDS.iter().map(|s| s.to_string()).collect(),
            negations: Vec::new(),
        }
    }
}

impl Ruleset {
    /// Reads a TOML file with `keywords = [...]` and optional `negations = [...]`.
    pub fn from_file(path: &Path) -> Result<Self, LabelError> {
        let text = fs::read_to_string(path).map_err(|e| LabelError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        toml::from_str(&text).map_err(|e| LabelError::Rules(e.to_string()))
    }

    fn compile(&self) -> Result<CompiledRules, LabelError> {
        if self.keywords.is_empty() {
            return Err(LabelError::EmptyRuleset);
        }
        let word = |s: &str| {
            RegexBuilder::new(&format!(r"\b{}\b", regex::escape(s.trim())))
                .case_insensitive(true)
                .build()
                .expect("escaped literal is a valid regex")
        };
        let phrase = |s: &str| {
            RegexBuilder::new(&regex::escape(s.trim()))
                .case_insensitive(true)
                .build()
                .expect("escaped literal is a valid regex")
        };
        Ok(CompiledRules {
            keywords: self.keywords.iter().map(|k| (k.to_lowercase(), word(k))).collect(),
            negations: self.negations.iter().map(|n| phrase(n)).collect(),
        })
    }
}

#[derive(Debug)]
struct CompiledRules {
    keywords: Vec<(String, Regex)>,
    negations: Vec<Regex>,
}

/// Keyword classifier compiled from a [`Ruleset`].
#[derive(Debug)]
pub struct Classifier {
    rules: CompiledRules,
}

impl Classifier {
    pub fn new(ruleset: &Ruleset) -> Result<Self, LabelError> {
        Ok(Self {
            rules: ruleset.compile()?,
        })
    }

    pub fn classify(&self, ecm: &ExtendedCommitMessage) -> DefectLabel {
        let mut text = ecm.text.clone();
        for neg in &self.rules.negations {
            text = neg.replace_all(&text, " ").into_owned();
        }
        let matched_keywords: Vec<String> = self
            .rules
            .keywords
            .iter()
            .filter(|(_, re)| re.is_match(&text))
            .map(|(k, _)| k.clone())
            .collect();
        DefectLabel {
            commit_id: ecm.commit_id.clone(),
            is_defect_related: !matched_keywords.is_empty(),
            source: LabelSource::Heuristic,
            rater_votes: None,
            resolver: None,
            matched_keywords,
        }
    }
}

pub fn classify_ecm(ecm: &ExtendedCommitMessage, ruleset: &Ruleset) -> Result<DefectLabel, LabelError> {
    Ok(Classifier::new(ruleset)?.classify(ecm))
}

fn parse_vote(value: &str, row: usize, column: &str) -> Result<Option<bool>, LabelError> {
    match value.trim().to_ascii_lowercase().as_str() {
        "yes" => Ok(Some(true)),
        "no" => Ok(Some(false)),
        "" => Ok(None),
        other => Err(LabelError::Schema {
            row,
            message: format!("{column} must be yes, no or empty, got {other:?}"),
        }),
    }
}

/// Reads human ratings from a `commit_id,rater_1,rater_2,resolver` CSV.
///
/// Row numbers in errors count the header as row 1.
pub fn import_labels<R: Read>(reader: R) -> Result<Vec<DefectLabel>, LabelError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).flexible(false).from_reader(reader);
    let headers = rdr.headers().map_err(|e| LabelError::Schema {
        row: 1,
        message: e.to_string(),
    })?;
    let expected = ["commit_id", "rater_1", "rater_2", "resolver"];
    if headers.iter().map(str::trim).ne(expected) {
        return Err(LabelError::Schema {
            row: 1,
            message: format!("expected header {}", expected.join(",")),
        });
    }
    let mut labels: Vec<DefectLabel> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    for (i, record) in rdr.records().enumerate() {
        let row = i + 2;
        let record = record.map_err(|e| LabelError::Schema {
            row,
            message: e.to_string(),
        })?;
        let commit_id = record[0].trim().to_string();
        if commit_id.is_empty() {
            return Err(LabelError::Schema {
                row,
                message: "empty commit_id".into(),
            });
        }
        let r1 = parse_vote(&record[1], row, "rater_1")?;
        let r2 = parse_vote(&record[2], row, "rater_2")?;
        let resolver = parse_vote(&record[3], row, "resolver")?;
        let votes: Vec<bool> = [r1, r2].into_iter().flatten().collect();
        let verdict = match votes.as_slice() {
            [] => resolver.ok_or_else(|| LabelError::Schema {
                row,
                message: "no rater verdict".into(),
            })?,
            [v] => *v,
            [a, b] if a == b => *a,
            _ => resolver.ok_or_else(|| LabelError::Unresolved {
                row,
                commit_id: commit_id.clone(),
            })?,
        };
        if let Some(&prev) = index.get(&commit_id) {
            if labels[prev].is_defect_related != verdict {
                return Err(LabelError::Conflict(commit_id));
            }
            continue;
        }
        index.insert(commit_id.clone(), labels.len());
        labels.push(DefectLabel {
            commit_id,
            is_defect_related: verdict,
            source: LabelSource::Imported,
            rater_votes: Some(votes),
            resolver,
            matched_keywords: Vec::new(),
        });
    }
    Ok(labels)
}

pub fn import_labels_file(path: &Path) -> Result<Vec<DefectLabel>, LabelError> {
    let file = fs::File::open(path).map_err(|e| LabelError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    import_labels(file)
}

/// Cohen's kappa for two raters on a yes/no scale.
pub fn cohens_kappa(a: &[bool], b: &[bool]) -> Result<f64, LabelError> {
    if a.len() != b.len() {
        return Err(LabelError::LengthMismatch(a.len(), b.len()));
    }
    if a.is_empty() {
        return Err(LabelError::EmptyRatings);
    }
    let n = a.len() as f64;
    let agree = a.iter().zip(b).filter(|(x, y)| x == y).count() as f64;
    let a_yes = a.iter().filter(|&&x| x).count() as f64 / n;
    let b_yes = b.iter().filter(|&&x| x).count() as f64 / n;
    let p_o = agree / n;
    let p_e = a_yes * b_yes + (1.0 - a_yes) * (1.0 - b_yes);
    if (1.0 - p_e).abs() < f64::EPSILON {
        // both raters constant and identical: agreement is perfect
        return Ok(if p_o == 1.0 { 1.0 } else { 0.0 });
    }
    Ok((p_o - p_e) / (1.0 - p_e))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptClass {
    pub script_path: String,
    pub is_defective: bool,
}

/// Marks every IaC script touched by a commit as defective or neutral.
pub fn label_scripts(
    labels: &[DefectLabel],
    commits: &[CommitRecord],
    iac: &IacMatcher,
) -> Result<Vec<ScriptClass>, LabelError> {
    let by_id: HashMap<&str, &CommitRecord> = commits.iter().map(|c| (c.commit_id.as_str(), c)).collect();
    let mut classes: BTreeMap<&str, bool> = BTreeMap::new();
    for c in commits {
        for ch in &c.changes {
            if iac.is_iac_script(&ch.path) {
                classes.entry(ch.path.as_str()).or_insert(false);
            }
        }
    }
    for label in labels {
        let commit = by_id
            .get(label.commit_id.as_str())
            .ok_or_else(|| LabelError::DanglingCommit(label.commit_id.clone()))?;
        if !label.is_defect_related {
            continue;
        }
        for ch in &commit.changes {
            if let Some(flag) = classes.get_mut(ch.path.as_str()) {
                *flag = true;
            }
        }
    }
    Ok(classes
        .into_iter()
        .map(|(path, is_defective)| ScriptClass {
            script_path: path.to_string(),
            is_defective,
        })
        .collect())
}

/// Heuristic labels for every commit, with imported labels taking precedence.
pub fn label_commits(
    commits: &[CommitRecord],
    store: &dyn IssueStore,
    ruleset: &Ruleset,
    imported: &[DefectLabel],
) -> Result<Vec<DefectLabel>, LabelError> {
    let classifier = Classifier::new(ruleset)?;
    let patterns = IssuePatterns::default();
    let known: BTreeSet<&str> = commits.iter().map(|c| c.commit_id.as_str()).collect();
    let mut imported_by_id: HashMap<&str, &DefectLabel> = HashMap::new();
    for l in imported {
        if !known.contains(l.commit_id.as_str()) {
            return Err(LabelError::DanglingCommit(l.commit_id.clone()));
        }
        imported_by_id.insert(l.commit_id.as_str(), l);
    }
    Ok(commits
        .iter()
        .map(|c| match imported_by_id.get(c.commit_id.as_str()) {
            Some(l) => (*l).clone(),
            None => classifier.classify(&build_ecm(c, store, &patterns)),
        })
        .collect())
}

pub fn read_labels_jsonl(path: &Path) -> Result<Vec<DefectLabel>, LabelError> {
    let text = fs::read_to_string(path).map_err(|e| LabelError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| LabelError::Schema {
                row: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

pub fn labels_jsonl_string(labels: &[DefectLabel]) -> String {
    let mut out = String::new();
    for l in labels {
        out.push_str(&serde_json::to_string(l).expect("labels serialize"));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::FileChange;

    fn commit(id: &str, msg: &str, paths: &[&str]) -> CommitRecord {
        CommitRecord {
            commit_id: id.into(),
            author_id: "a".into(),
            timestamp: 0,
            message: msg.into(),
            changes: paths.iter().map(|p| FileChange::new(*p, 1, 0, [1])).collect(),
        }
    }

    fn ecm(text: &str) -> ExtendedCommitMessage {
        ExtendedCommitMessage {
            commit_id: "c".into(),
            text: text.into(),
            issue_ids: vec![],
        }
    }

    #[test]
    fn ecm_passthrough_without_ids() {
        let e = build_ecm(&commit("c", "fix typo", &[]), &FileIssueStore::default(), &IssuePatterns::default());
        assert_eq!(e.text, "fix typo");
        assert!(e.issue_ids.is_empty());
    }

    #[test]
    fn ecm_appends_summary() {
        let store = FileIssueStore::from_pairs([("1423", "agent crashes on reload")]);
        let e = build_ecm(
            &commit("c", "Closes-Bug: #1423 restart agent", &[]),
            &store,
            &IssuePatterns::default(),
        );
        assert_eq!(e.issue_ids, vec!["1423"]);
        assert_eq!(e.text, "Closes-Bug: #1423 restart agent\nagent crashes on reload");
    }

    #[test]
    fn ecm_missing_summary_keeps_id() {
        let e = build_ecm(&commit("c", "see PUP-77", &[]), &FileIssueStore::default(), &IssuePatterns::default());
        assert_eq!(e.text, "see PUP-77");
        assert_eq!(e.issue_ids, vec!["PUP-77"]);
    }

    #[test]
    fn issue_patterns() {
        let p = IssuePatterns::default();
        assert_eq!(p.extract("Bug 99 and #12, also OPS-3"), vec!["99", "12", "OPS-3"]);
        assert_eq!(p.extract("bug:#5"), vec!["5"]);
        assert!(p.extract("no refs here").is_empty());
    }

    #[test]
    fn classify_examples() {
        let rules = Ruleset::default();
        let l = classify_ecm(&ecm("fix agent crash on reload"), &rules).unwrap();
        assert!(l.is_defect_related);
        assert_eq!(l.matched_keywords, vec!["fix", "crash"]);
        assert!(!classify_ecm(&ecm("add new dashboard module"), &rules).unwrap().is_defect_related);
        assert!(!classify_ecm(&ecm(""), &rules).unwrap().is_defect_related);
        // word boundaries: "prefix" does not contain the word "fix"
        assert!(!classify_ecm(&ecm("prefix handling"), &rules).unwrap().is_defect_related);
        assert!(classify_ecm(&ecm("FIXED it"), &rules).unwrap().is_defect_related);
    }

    #[test]
    fn negation_phrases_removed_before_matching() {
        let rules = Ruleset {
            keywords: vec!["fix".into()],
            negations: vec!["fix typo".into()],
        };
        assert!(!classify_ecm(&ecm("Fix typo in comment"), &rules).unwrap().is_defect_related);
        assert!(classify_ecm(&ecm("fix typo and fix crash"), &rules).unwrap().is_defect_related);
    }

    #[test]
    fn empty_ruleset_rejected() {
        let rules = Ruleset {
            keywords: vec![],
            negations: vec![],
        };
        assert!(matches!(classify_ecm(&ecm("x"), &rules), Err(LabelError::EmptyRuleset)));
    }

    #[test]
    fn import_resolves_votes() {
        let csv = "commit_id,rater_1,rater_2,resolver\nc1,yes,yes,\nc2,yes,no,yes\nc3,no,no,\n";
        let labels = import_labels(csv.as_bytes()).unwrap();
        assert_eq!(
            labels.iter().map(|l| l.is_defect_related).collect::<Vec<_>>(),
            vec![true, true, false]
        );
        assert!(labels.iter().all(|l| l.source == LabelSource::Imported));
    }

    #[test]
    fn import_errors() {
        let unresolved = "commit_id,rater_1,rater_2,resolver\nc1,yes,no,\n";
        assert!(matches!(
            import_labels(unresolved.as_bytes()),
            Err(LabelError::Unresolved { row: 2, .. })
        ));
        let bad = "commit_id,rater_1,rater_2,resolver\nc1,yes,maybe,\n";
        assert!(matches!(import_labels(bad.as_bytes()), Err(LabelError::Schema { row: 2, .. })));
        let header = "id,a,b\nc1,yes,no\n";
        assert!(matches!(import_labels(header.as_bytes()), Err(LabelError::Schema { row: 1, .. })));
        let conflict = "commit_id,rater_1,rater_2,resolver\nc1,yes,yes,\nc1,no,no,\n";
        assert!(matches!(import_labels(conflict.as_bytes()), Err(LabelError::Conflict(_))));
        let dup = "commit_id,rater_1,rater_2,resolver\nc1,yes,yes,\nc1,yes,,\n";
        assert_eq!(import_labels(dup.as_bytes()).unwrap().len(), 1);
    }

    #[test]
    fn kappa_examples() {
        let x = [true, false, true, true, false];
        assert_eq!(cohens_kappa(&x, &x).unwrap(), 1.0);
        let a = [true, true, false, false];
        let b = [false, false, true, true];
        assert_eq!(cohens_kappa(&a, &b).unwrap(), -1.0);
        assert_eq!(cohens_kappa(&[true; 3], &[true; 3]).unwrap(), 1.0);
        assert!(matches!(cohens_kappa(&a, &b[..3]), Err(LabelError::LengthMismatch(4, 3))));
        assert!(matches!(cohens_kappa(&[], &[]), Err(LabelError::EmptyRatings)));
    }

    #[test]
    fn kappa_hand_evaluated() {
        // 10 items, 8 agreements, both raters say yes 5 times:
        // p_o = 0.8, p_e = 0.5*0.5 + 0.5*0.5 = 0.5, kappa = 0.3/0.5 = 0.6
        let a = [true, true, true, true, true, false, false, false, false, false];
        let b = [true, true, true, true, false, true, false, false, false, false];
        assert!((cohens_kappa(&a, &b).unwrap() - 0.6).abs() < 1e-12);
    }

    #[test]
    fn script_labels() {
        let commits = vec![
            commit("d", "fix", &["a.pp", "b.pp"]),
            commit("n", "feature", &["b.pp", "c.pp", "README"]),
        ];
        let labels = vec![
            DefectLabel {
                commit_id: "d".into(),
                is_defect_related: true,
                source: LabelSource::Heuristic,
                rater_votes: None,
                resolver: None,
                matched_keywords: vec!["fix".into()],
            },
            DefectLabel {
                commit_id: "n".into(),
                is_defect_related: false,
                source: LabelSource::Heuristic,
                rater_votes: None,
                resolver: None,
                matched_keywords: vec![],
            },
        ];
        let classes = label_scripts(&labels, &commits, &IacMatcher::default()).unwrap();
        let got: Vec<_> = classes.iter().map(|c| (c.script_path.as_str(), c.is_defective)).collect();
        assert_eq!(got, vec![("a.pp", true), ("b.pp", true), ("c.pp", false)]);

        let mut dangling = labels.clone();
        dangling[0].commit_id = "zzz".into();
        assert!(matches!(
            label_scripts(&dangling, &commits, &IacMatcher::default()),
            Err(LabelError::DanglingCommit(_))
        ));
    }
}
