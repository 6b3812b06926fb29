//! Synthetic Puppet repositories with known developer structure.
//!
//! Each script is created by one owner, then rewritten in blocks by other
//! major developers (each block above the 5% ownership line) and touched on
//! a single line by minor contributors. The developer and minor-contributor
//! counts of every script are therefore known exactly. Defect labels follow
//! `developers + minors` with optional label flips, and are expressed as a
//! keyword-bearing commit whose issue summary mentions a bug.
//!
//! Script texts are drawn independently of the labels, so bag-of-words and
//! size features carry no signal.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::seq::{IteratorRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ingest::{log_export_string, CommitRecord, FileChange};

const BASE_TS: i64 = 1_420_070_400; // 2015-01-01
const DAY: i64 = 86_400;

const RESOURCES: [&str; 6] = ["package", "file", "service", "user", "cron", "exec"];
const NOUNS: [&str; 16] = [
    "nginx", "apache", "mysql", "ntp", "ssh", "rsyslog", "postfix", "redis", "haproxy", "keystone", "nova", "glance",
    "memcached", "rabbitmq", "logrotate", "sudo",
];
const ATTRS: [&str; 8] = ["ensure", "owner", "group", "mode", "content", "require", "notify", "source"];
const VALUES: [&str; 8] = ["present", "absent", "root", "running", "stopped", "latest", "0644", "true"];
const ROLES: [&str; 8] = ["server", "client", "config", "install", "params", "service", "repo", "agent"];
const NEUTRAL_VERBS: [&str; 5] = ["add", "update", "refactor", "tune", "document"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthOptions {
    pub scripts: usize,
    /// Extra scripts beyond the neutral bounds: more than 11 developers and
    /// more than 7 minor contributors.
    pub violators: usize,
    pub developers: usize,
    /// Probability of flipping each label.
    pub label_noise: f64,
    /// Randomly permute labels after generation, destroying the signal.
    pub shuffle_labels: bool,
    pub seed: u64,
}

impl Default for SynthOptions {
    fn default() -> Self {
        Self {
            scripts: 60,
            violators: 0,
            developers: 40,
            label_noise: 0.05,
            shuffle_labels: false,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptTruth {
    pub path: String,
    pub developers: usize,
    pub minors: usize,
    pub loc: usize,
    pub is_defective: bool,
    pub violator: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticRepo {
    pub commits: Vec<CommitRecord>,
    /// Issue id -> summary.
    pub issues: BTreeMap<String, String>,
    /// Path -> final text of the script.
    pub texts: BTreeMap<String, String>,
    pub truth: Vec<ScriptTruth>,
}

struct Plan {
    path: String,
    class: String,
    majors: usize,
    minors: usize,
    loc: usize,
    violator: bool,
    score: f64,
}

fn script_text(rng: &mut ChaCha8Rng, module: &str, loc: usize) -> String {
    let mut lines = Vec::with_capacity(loc);
    lines.push(format!("class {module} {{"));
    while lines.len() + 1 < loc {
        let line = match rng.gen_range(0..4) {
            0 => format!(
                "  {} {{ '{}': {} => {} }}",
                RESOURCES.choose(rng).unwrap(),
                NOUNS.choose(rng).unwrap(),
                ATTRS.choose(rng).unwrap(),
                VALUES.choose(rng).unwrap()
            ),
            1 => format!("  # manage {}", NOUNS.choose(rng).unwrap()),
            2 => format!("  ${}_{} = '{}'", NOUNS.choose(rng).unwrap(), ATTRS.choose(rng).unwrap(), VALUES.choose(rng).unwrap()),
            _ => format!("  include {}::{}", NOUNS.choose(rng).unwrap(), ROLES.choose(rng).unwrap()),
        };
        lines.push(line);
    }
    if loc > 1 {
        lines.push("}".to_string());
    }
    let mut text = lines.join("\n");
    text.push('\n');
    text
}

/// Generates a synthetic repository. Deterministic for a given seed.
pub fn generate(opts: &SynthOptions) -> SyntheticRepo {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let devs: Vec<String> = (0..opts.developers.max(17)).map(|i| format!("dev{i:03}@example.org")).collect();

    let mut plans = Vec::with_capacity(opts.scripts + opts.violators);
    for i in 0..opts.scripts + opts.violators {
        let violator = i >= opts.scripts;
        let (developers, minors) = if violator {
            let minors = rng.gen_range(8..=10);
            (rng.gen_range(12..=16).max(minors + 1), minors)
        } else {
            let developers = rng.gen_range(1..=11);
            (developers, rng.gen_range(0..=7.min(developers - 1)))
        };
        let noun = NOUNS[i % NOUNS.len()];
        let role = ROLES[(i / NOUNS.len()) % ROLES.len()];
        plans.push(Plan {
            path: format!("modules/{noun}/manifests/{role}_{i:03}.pp"),
            class: format!("{noun}::{role}"),
            majors: developers - minors - 1,
            minors,
            loc: rng.gen_range(300..=700),
            violator,
            score: (developers + minors) as f64 + rng.gen_range(-0.5..0.5),
        });
    }

    let mut sorted: Vec<f64> = plans.iter().filter(|p| !p.violator).map(|p| p.score).collect();
    sorted.sort_by(f64::total_cmp);
    let cut = sorted.get(sorted.len() / 2).copied().unwrap_or(0.0);
    let mut labels: Vec<bool> = plans
        .iter()
        .map(|p| {
            let truth = p.violator || p.score >= cut;
            if rng.gen::<f64>() < opts.label_noise {
                !truth
            } else {
                truth
            }
        })
        .collect();
    if opts.shuffle_labels {
        labels.shuffle(&mut rng);
    }

    let mut commits = Vec::new();
    let mut issues = BTreeMap::new();
    let mut texts = BTreeMap::new();
    let mut truth = Vec::new();
    for (p, &defective) in plans.iter().zip(&labels) {
        let module = &p.class;
        let people: Vec<&String> = devs.iter().choose_multiple(&mut rng, 1 + p.majors + p.minors);
        let (owner, rest) = people.split_first().expect("at least one developer");
        let (majors, minors) = rest.split_at(p.majors);
        let loc = p.loc as u32;
        let block = loc / 20 + 1;

        let mut ts = BASE_TS + rng.gen_range(0..730) * DAY;
        let mut push = |author: &str, msg: String, change: FileChange, rng: &mut ChaCha8Rng| {
            ts += rng.gen_range(1..=20) * DAY + rng.gen_range(0..DAY);
            commits.push(CommitRecord {
                commit_id: String::new(),
                author_id: author.to_string(),
                timestamp: ts,
                message: msg,
                changes: vec![change],
            });
        };
        push(owner, format!("add {module} manifest"), FileChange::new(&p.path, loc, 0, 1..=loc), &mut rng);
        for (j, dev) in majors.iter().enumerate() {
            let start = 1 + j as u32 * block;
            let verb = NEUTRAL_VERBS.choose(&mut rng).unwrap();
            push(dev, format!("{verb} {module} settings"), FileChange::new(&p.path, block, block, start..start + block), &mut rng);
        }
        for (j, dev) in minors.iter().enumerate() {
            let line = loc - j as u32;
            let verb = NEUTRAL_VERBS.choose(&mut rng).unwrap();
            push(dev, format!("{verb} {module} value"), FileChange::new(&p.path, 1, 1, [line]), &mut rng);
        }
        // every script gets one closing owner commit inside the owner's region
        let line = 1 + p.majors as u32 * block;
        let msg = if defective {
            let id = (issues.len() + 1).to_string();
            issues.insert(id.clone(), format!("{module} service fails to start after upgrade"));
            format!("fix bug #{id} in {module}")
        } else {
            format!("{} {module} layout", NEUTRAL_VERBS.choose(&mut rng).unwrap())
        };
        push(owner, msg, FileChange::new(&p.path, 1, 1, [line]), &mut rng);

        texts.insert(p.path.clone(), script_text(&mut rng, module, p.loc));
        truth.push(ScriptTruth {
            path: p.path.clone(),
            developers: 1 + p.majors + p.minors,
            minors: p.minors,
            loc: p.loc,
            is_defective: defective,
            violator: p.violator,
        });
    }
    commits.sort_by_key(|c| c.timestamp);
    for (i, c) in commits.iter_mut().enumerate() {
        c.commit_id = format!("{:040x}", (i as u128 + 1) * 0x9e37_79b9_7f4a_7c15);
    }
    SyntheticRepo {
        commits,
        issues,
        texts,
        truth,
    }
}

/// Configuration written next to a generated repository.
pub const SYNTH_CONFIG: &str = r#"output_dir = "out"

[ingest]
source = "commits.jsonl"
format = "jsonl"
scripts_dir = "scripts"

[label]
issues = "issues.json"

[thresholds]
max_developers = 11
max_minors = 7
min_highest_contrib = 0.8
disjointness_quantile = 0.75
unfocused_quantile = 0.75

[predict]
seed = 7
tune = false
budget = 10
repeats = 10
folds = 10
"#;

impl SyntheticRepo {
    /// Writes `commits.jsonl`, `issues.json`, `truth.json`, the scripts under
    /// `scripts/` and a `devminer.toml`.
    pub fn write_to(&self, dir: &Path) -> std::io::Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("commits.jsonl"), log_export_string(&self.commits))?;
        fs::write(dir.join("issues.json"), serde_json::to_string_pretty(&self.issues)?)?;
        fs::write(dir.join("truth.json"), serde_json::to_string_pretty(&self.truth)?)?;
        for (path, text) in &self.texts {
            let target = dir.join("scripts").join(path);
            if let Some(parent) = target.parent() {
                fs::create_dir_all(parent)?;
            }
            fs::write(target, text)?;
        }
        fs::write(dir.join("devminer.toml"), SYNTH_CONFIG)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::IacMatcher;
    use crate::metrics::{attribute_lines, developer_count, minor_contributors, script_histories};

    #[test]
    fn planned_counts_are_realized() {
        let repo = generate(&SynthOptions {
            scripts: 25,
            violators: 5,
            ..SynthOptions::default()
        });
        let histories = script_histories(&repo.commits, &IacMatcher::default());
        for t in &repo.truth {
            let h = &histories[&t.path];
            let attr = attribute_lines(h).unwrap();
            assert_eq!(attr.loc(), t.loc);
            assert_eq!(developer_count(h), t.developers, "{}", t.path);
            assert_eq!(minor_contributors(&attr, h).unwrap(), t.minors, "{}", t.path);
            assert_eq!(repo.texts[&t.path].lines().count(), t.loc);
        }
    }

    #[test]
    fn deterministic() {
        let o = SynthOptions::default();
        assert_eq!(generate(&o), generate(&o));
    }
}
