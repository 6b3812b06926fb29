//! Live-repository reader built on the `git` command-line tool.
//!
//! History is read along first-parent links; merge commits contribute their
//! diff against the first parent. Renames are not followed.

use std::collections::BTreeSet;
use std::path::Path;
use std::process::Command;

use super::{CommitRecord, FileChange, IngestError};

const RECORD_SEP: char = '\u{1e}';
const FIELD_SEP: char = '\u{1f}';

fn run_git(repo: &Path, args: &[&str]) -> Result<String, IngestError> {
    let output = Command::new("git")
        .arg("-C")
        .arg(repo)
        .args(["-c", "core.quotePath=false"])
        .args(args)
        .output()
        .map_err(|e| IngestError::Git(format!("cannot run git: {e}")))?;
    if !output.status.success() {
        return Err(IngestError::Git(String::from_utf8_lossy(&output.stderr).trim().to_string()));
    }
    Ok(String::from_utf8_lossy(&output.stdout).into_owned())
}

fn has_head(repo: &Path) -> Result<bool, IngestError> {
    if !repo.exists() {
        return Err(IngestError::Unreadable {
            path: repo.to_path_buf(),
            source: std::io::Error::new(std::io::ErrorKind::NotFound, "no such repository"),
        });
    }
    let status = Command::new("git")
        .arg("-C")
        .arg(repo)
        .args(["rev-parse", "--verify", "--quiet", "HEAD"])
        .output()
        .map_err(|e| IngestError::Git(format!("cannot run git: {e}")))?;
    Ok(status.status.success())
}

/// Reads the first-parent history of `repo`, oldest commit first.
pub fn read_history(repo: &Path) -> Result<Vec<CommitRecord>, IngestError> {
    if !has_head(repo)? {
        return Ok(Vec::new());
    }
    let format = format!("--format={RECORD_SEP}%H{FIELD_SEP}%ae{FIELD_SEP}%at{FIELD_SEP}%B{FIELD_SEP}");
    let text = run_git(
        repo,
        &[
            "log",
            "--first-parent",
            "--diff-merges=first-parent",
            "--reverse",
            "--no-color",
            "--no-renames",
            "--no-ext-diff",
            "--unified=0",
            "-p",
            &format,
        ],
    )?;
    parse_git_log(&text)
}

/// Paths tracked at `HEAD`.
pub fn tracked_files(repo: &Path) -> Result<BTreeSet<String>, IngestError> {
    if !has_head(repo)? {
        return Ok(BTreeSet::new());
    }
    let text = run_git(repo, &["ls-tree", "-r", "--name-only", "HEAD"])?;
    Ok(text.lines().filter(|l| !l.is_empty()).map(str::to_string).collect())
}

/// Parses output of `git log -p --unified=0` in the record format used by
/// [`read_history`].
pub fn parse_git_log(text: &str) -> Result<Vec<CommitRecord>, IngestError> {
    let mut commits = Vec::new();
    for record in text.split(RECORD_SEP).filter(|r| !r.trim().is_empty()) {
        let mut fields = record.splitn(5, FIELD_SEP);
        let (Some(id), Some(author), Some(ts), Some(msg)) = (fields.next(), fields.next(), fields.next(), fields.next())
        else {
            return Err(IngestError::Git(format!("truncated log record: {:.60}", record)));
        };
        let patch = fields.next().unwrap_or("");
        let timestamp = ts
            .trim()
            .parse::<i64>()
            .map_err(|_| IngestError::Git(format!("bad timestamp {ts:?} in {id}")))?;
        commits.push(CommitRecord {
            commit_id: id.trim().to_string(),
            author_id: author.trim().to_string(),
            timestamp,
            message: msg.trim_end().to_string(),
            changes: parse_patch(patch)?,
        });
    }
    Ok(commits)
}

fn parse_hunk_header(line: &str) -> Option<u32> {
    // @@ -a[,b] +c[,d] @@
    let plus = line.split_whitespace().find(|t| t.starts_with('+'))?;
    let start = plus[1..].split(',').next()?;
    start.parse().ok()
}

fn parse_patch(patch: &str) -> Result<Vec<FileChange>, IngestError> {
    let mut changes: Vec<FileChange> = Vec::new();
    let mut in_hunk = false;
    let mut post_line = 0u32;
    let mut old_path: Option<String> = None;
    for line in patch.lines() {
        if let Some(rest) = line.strip_prefix("diff --git ") {
            in_hunk = false;
            old_path = None;
            // fallback path for diffs without ---/+++ headers (binary, mode-only)
            let path = rest
                .rsplit_once(" b/")
                .map(|(_, b)| b.to_string())
                .unwrap_or_else(|| rest.to_string());
            changes.push(FileChange::new(path, 0, 0, []));
            continue;
        }
        let Some(current) = changes.last_mut() else {
            continue;
        };
        if !in_hunk {
            if let Some(p) = line.strip_prefix("--- ") {
                old_path = p.strip_prefix("a/").map(str::to_string);
            } else if let Some(p) = line.strip_prefix("+++ ") {
                match p.strip_prefix("b/") {
                    Some(new) => current.path = new.to_string(),
                    None => {
                        if let Some(old) = old_path.take() {
                            current.path = old;
                        }
                    }
                }
            }
        }
        if line.starts_with("@@") {
            in_hunk = true;
            post_line = parse_hunk_header(line)
                .ok_or_else(|| IngestError::Git(format!("bad hunk header {line:?}")))?;
            continue;
        }
        if !in_hunk {
            continue;
        }
        if line.starts_with('+') {
            current.lines_added += 1;
            current.modified_line_indices.insert(post_line);
            post_line += 1;
        } else if line.starts_with('-') {
            current.lines_deleted += 1;
        } else if line.starts_with(' ') {
            post_line += 1;
        }
    }
    Ok(changes)
}
