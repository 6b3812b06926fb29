use std::fs;
use std::path::Path;
use std::process::Command;

use devminer::ingest::{ingest_repository, AliasMap, IngestOptions, SourceFormat};
use devminer::pipeline::{run_pipeline, FormatName, PipelineConfig};

fn git(dir: &Path, args: &[&str], author: &str, ts: i64) {
    let date = format!("@{ts} +0000");
    let status = Command::new("git")
        .args(["-c", "init.defaultBranch=main", "-c", "commit.gpgsign=false"])
        .args(args)
        .current_dir(dir)
        .env("GIT_AUTHOR_NAME", "dev")
        .env("GIT_AUTHOR_EMAIL", author)
        .env("GIT_COMMITTER_NAME", "dev")
        .env("GIT_COMMITTER_EMAIL", author)
        .env("GIT_AUTHOR_DATE", &date)
        .env("GIT_COMMITTER_DATE", &date)
        .env("GIT_CONFIG_NOSYSTEM", "1")
        .env("HOME", dir)
        .output()
        .expect("git on PATH");
    assert!(status.status.success(), "git {args:?}: {}", String::from_utf8_lossy(&status.stderr));
}

fn commit_file(dir: &Path, path: &str, text: &str, author: &str, ts: i64, msg: &str) {
    let full = dir.join(path);
    fs::create_dir_all(full.parent().unwrap()).unwrap();
    fs::write(full, text).unwrap();
    git(dir, &["add", path], author, ts);
    git(dir, &["commit", "-q", "-m", msg], author, ts);
}

#[test]
fn hunks_authors_and_file_counts() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    git(d, &["init", "-q"], "x@y", 0);
    commit_file(d, "manifests/a.pp", "class a {\n  x\n}\n", "Alice@Example.ORG", 1_500_000_000, "add a");
    commit_file(d, "README.md", "hello\n", "bob@example.org", 1_500_086_400, "docs");
    commit_file(d, "manifests/a.pp", "class a {\n  y\n}\n", "bob@example.org", 1_500_172_800, "fix crash in a");

    let s = ingest_repository(d, SourceFormat::Git, &IngestOptions::default()).unwrap();
    assert_eq!(s.commits.len(), 3);
    assert_eq!(s.total_files, 2);
    assert_eq!(s.iac_files, 1);
    let first = &s.commits[0];
    assert_eq!(first.author_id, "alice@example.org");
    assert_eq!(first.changes[0].path, "manifests/a.pp");
    assert_eq!(first.changes[0].lines_added, 3);
    assert_eq!(first.changes[0].modified_line_indices.iter().copied().collect::<Vec<_>>(), vec![1, 2, 3]);
    let last = &s.commits[2];
    assert_eq!(last.message.trim(), "fix crash in a");
    assert_eq!((last.changes[0].lines_added, last.changes[0].lines_deleted), (1, 1));
    assert_eq!(last.changes[0].modified_line_indices.iter().copied().collect::<Vec<_>>(), vec![2]);
    assert_eq!(last.timestamp, 1_500_172_800);

    let aliases = AliasMap::from_pairs([("bob@example.org", "alice@example.org")]);
    let opts = IngestOptions {
        aliases,
        ..IngestOptions::default()
    };
    let s = ingest_repository(d, SourceFormat::Git, &opts).unwrap();
    assert!(s.commits.iter().all(|c| c.author_id == "alice@example.org"));
}

#[test]
fn empty_repository_has_no_commits() {
    let tmp = tempfile::tempdir().unwrap();
    git(tmp.path(), &["init", "-q"], "x@y", 0);
    let s = ingest_repository(tmp.path(), SourceFormat::Git, &IngestOptions::default()).unwrap();
    assert!(s.commits.is_empty());
    assert_eq!(s.total_files, 0);
}

#[test]
fn full_pipeline_on_a_live_repository() {
    let tmp = tempfile::tempdir().unwrap();
    let repo = tmp.path().join("repo");
    fs::create_dir(&repo).unwrap();
    git(&repo, &["init", "-q"], "x@y", 0);
    let mut ts = 1_500_000_000;
    for i in 0..24 {
        let path = format!("modules/m{i}/manifests/init.pp");
        let mut body: String = (0..5 + i).map(|l| format!("  file {{ '/etc/m{i}/{l}': ensure => present }}\n")).collect();
        if i % 3 == 0 {
            body.push_str("  if $facts['os'] { exec { 'reload': command => '/bin/true' } }\n");
        }
        let owner = format!("dev{}@example.org", i % 5);
        commit_file(&repo, &path, &format!("class m{i} {{\n{body}}}\n"), &owner, ts, "add module");
        ts += 86_400;
        let other = format!("dev{}@example.org", (i + 1) % 5);
        let msg = if i % 2 == 0 { "fix bug in service ordering" } else { "update settings" };
        let body2 = body.replacen("present", "latest", 1);
        commit_file(&repo, &path, &format!("class m{i} {{\n{body2}}}\n"), &other, ts, msg);
        ts += 86_400;
    }
    let cfg = PipelineConfig {
        output_dir: tmp.path().join("out"),
        ingest: devminer::pipeline::IngestConfig {
            source: Some(repo.clone()),
            format: FormatName::Git,
            ..Default::default()
        },
        predict: devminer::pipeline::PredictConfig {
            tune: false,
            repeats: 1,
            ..Default::default()
        },
        ..Default::default()
    };
    let outcome = run_pipeline(&cfg).unwrap();
    assert_eq!(outcome.written.len(), devminer::pipeline::artifacts::ALL.len());
    let classes = fs::read_to_string(tmp.path().join("out/classes.json")).unwrap();
    assert_eq!(classes.matches("\"is_defective\": true").count(), 12);
    let bow = fs::read_to_string(tmp.path().join("out/bow.csv")).unwrap();
    assert!(bow.contains("modules/m0/manifests/init.pp,latest,1"));
}
