use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn devminer(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_devminer"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str], cwd: &Path) -> Output {
    let out = devminer(args, cwd);
    assert!(
        out.status.success(),
        "devminer {args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn read(p: impl AsRef<Path>) -> String {
    fs::read_to_string(p.as_ref()).unwrap_or_else(|e| panic!("{}: {e}", p.as_ref().display()))
}

fn synth(dir: &Path, scripts: &str) {
    ok(&["synth", "-o", "repo", "--scripts", scripts, "--violators", "3", "--seed", "4"], dir);
    // keep prediction cheap in these tests
    let cfg = read(dir.join("repo/devminer.toml")).replace("repeats = 10", "repeats = 2");
    fs::write(dir.join("repo/devminer.toml"), cfg).unwrap();
}

#[test]
fn staged_commands_reproduce_the_run() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    synth(d, "30");
    ok(&["run", "repo/devminer.toml", "--output-dir", "all"], d);

    ok(&["ingest", "repo/commits.jsonl", "--format", "jsonl", "-o", "s/commits.jsonl", "--summary", "s/summary.json"], d);
    ok(&["label", "--commits", "s/commits.jsonl", "--issues", "repo/issues.json", "-o", "s/labels.jsonl"], d);
    ok(&["metrics", "--commits", "s/commits.jsonl", "--labels", "s/labels.jsonl", "-o", "s/metrics.csv"], d);
    ok(&["analyze", "--metrics", "s/metrics.csv", "-o", "s/stats.json"], d);
    ok(&["features", "--kind", "bow", "--scripts", "repo/scripts", "-o", "s/bow.csv"], d);
    ok(&["features", "--kind", "quality", "--scripts", "repo/scripts", "-o", "s/quality.csv"], d);
    ok(&["flag", "--metrics", "s/metrics.csv", "-o", "s/flags.json"], d);
    ok(
        &[
            "predict", "--metrics", "s/metrics.csv", "--bow", "s/bow.csv", "--quality", "s/quality.csv", "--seed", "7",
            "--tune", "off", "--repeats", "2", "-o", "s/eval.json",
        ],
        d,
    );
    ok(
        &["report", "--stats", "s/stats.json", "--flags", "s/flags.json", "--eval", "s/eval.json", "--json", "s/report.json", "-o", "s/report.txt"],
        d,
    );
    for name in ["commits.jsonl", "summary.json", "labels.jsonl", "metrics.csv", "stats.json", "bow.csv", "quality.csv", "flags.json", "eval.json", "report.json", "report.txt"] {
        assert_eq!(read(d.join("s").join(name)), read(d.join("all").join(name)), "{name}");
    }
}

#[test]
fn rerun_is_idempotent() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    synth(d, "24");
    ok(&["run", "repo/devminer.toml"], d);
    let first = read(d.join("repo/out/report.json"));
    ok(&["run", "repo/devminer.toml"], d);
    assert_eq!(first, read(d.join("repo/out/report.json")));
    let text = read(d.join("repo/out/report.txt"));
    assert!(text.contains("== Anti-patterns =="));
    assert!(text.contains("many_cooks"));
    assert!(text.contains("== Defect prediction"));
}

#[test]
fn cli_overrides_config() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    synth(d, "24");
    ok(&["run", "repo/devminer.toml", "--output-dir", "a", "--seed", "1"], d);
    ok(&["run", "repo/devminer.toml", "--output-dir", "b", "--seed", "2"], d);
    assert_eq!(read(d.join("a/metrics.csv")), read(d.join("b/metrics.csv")));
    assert_ne!(read(d.join("a/eval.json")), read(d.join("b/eval.json")));

    // a config supplies flag thresholds; the command line wins over it
    fs::write(d.join("strict.toml"), "[thresholds]\nmax_developers = 1\n").unwrap();
    ok(&["--config", "strict.toml", "flag", "--metrics", "a/metrics.csv", "-o", "strict.json"], d);
    ok(&["--config", "strict.toml", "flag", "--metrics", "a/metrics.csv", "--max-developers", "50", "-o", "loose.json"], d);
    let count = |p: &str| read(d.join(p)).matches("\"many_cooks\",\n    \"triggered\": true").count();
    assert!(count("strict.json") > count("loose.json"));
    assert_eq!(count("loose.json"), 0);
}

#[test]
fn exit_codes_follow_failure_class() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let code = |args: &[&str]| devminer(args, d).status.code();

    // input errors
    assert_eq!(code(&["ingest", "missing.jsonl", "-o", "x.jsonl"]), Some(2));
    assert_eq!(code(&["run", "missing.toml"]), Some(2));
    assert_eq!(code(&["frobnicate"]), Some(2));
    fs::write(d.join("bad.jsonl"), "{not json}\n").unwrap();
    assert_eq!(code(&["ingest", "bad.jsonl", "-o", "x.jsonl"]), Some(2));

    // validation errors
    fs::write(d.join("folds.toml"), "[ingest]\nsource = \"c.jsonl\"\n[predict]\nfolds = 1\n").unwrap();
    assert_eq!(code(&["run", "folds.toml"]), Some(4));
    fs::write(d.join("unknown.toml"), "[thresholds]\nmax_cooks = 3\n").unwrap();
    assert_eq!(code(&["run", "unknown.toml"]), Some(4));
    assert_eq!(code(&["synth", "-o", "r", "--noise", "2"]), Some(4));

    // stage failure: too few scripts to cross-validate
    ok(&["synth", "-o", "tiny", "--scripts", "8", "--seed", "2"], d);
    let out = devminer(&["run", "tiny/devminer.toml"], d);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("predict"));
}

#[test]
fn graph_and_survey_commands() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    synth(d, "10");
    ok(&["graph", "--kind", "dev", "--commits", "repo/commits.jsonl", "-o", "dev.json"], d);
    ok(&["graph", "--kind", "contrib", "--commits", "repo/commits.jsonl", "-o", "contrib.json"], d);
    let dev: serde_json::Value = serde_json::from_str(&read(d.join("dev.json"))).unwrap();
    let contrib: serde_json::Value = serde_json::from_str(&read(d.join("contrib.json"))).unwrap();
    assert!(!dev["nodes"].as_array().unwrap().is_empty());
    assert!(contrib["edges"].as_array().unwrap().len() >= 10);

    fs::write(
        d.join("survey.csv"),
        "respondent,metric,likert\nr1,scatteredness,5\nr2,scatteredness,4\nr3,scatteredness,2\nr1,unfocused,1\n",
    )
    .unwrap();
    let out = ok(&["survey", "survey.csv"], d);
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("scatteredness"));
    assert!(text.contains("66.7%"));
    fs::write(d.join("bad.csv"), "respondent,metric,likert\nr1,x,9\n").unwrap();
    assert_eq!(devminer(&["survey", "bad.csv"], d).status.code(), Some(2));
}
