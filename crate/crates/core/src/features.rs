//! Baseline feature sets: bag-of-words token counts and lexical code-quality
//! counts for Puppet manifests.
//!
//! The quality scanner works line by line on comment-stripped text. It does
//! not parse Puppet, so keywords inside string literals are counted too.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::io::Read;
use std::path::Path;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("{path}: invalid UTF-8 at byte offset {offset}")]
    Encoding { path: String, offset: usize },
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error("{file} row {row}: {message}")]
    Csv { file: String, row: usize, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct BowVector {
    pub script_path: String,
    pub token_counts: BTreeMap<String, u32>,
}

/// Lowercased alphanumeric tokens and their counts.
pub fn bow_tokens(text: &str) -> BTreeMap<String, u32> {
    let mut counts = BTreeMap::new();
    for token in text.split(|c: char| !c.is_alphanumeric()).filter(|t| !t.is_empty()) {
        *counts.entry(token.to_lowercase()).or_default() += 1;
    }
    counts
}

pub fn bow_extract(script_path: &str, bytes: &[u8]) -> Result<BowVector, FeatureError> {
    let text = decode(script_path, bytes)?;
    Ok(BowVector {
        script_path: script_path.to_string(),
        token_counts: bow_tokens(text),
    })
}

fn decode<'a>(path: &str, bytes: &'a [u8]) -> Result<&'a str, FeatureError> {
    std::str::from_utf8(bytes).map_err(|e| FeatureError::Encoding {
        path: path.to_string(),
        offset: e.valid_up_to(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CodeQualityVector {
    pub filelength: u32,
    pub complexity: u32,
    pub parameters: u32,
    pub execs: u32,
    pub lint_warnings: u32,
    pub fan_in: u32,
}

/// Removes `#` comments outside of quoted strings.
fn strip_comment(line: &str) -> &str {
    let mut quote: Option<char> = None;
    let mut escaped = false;
    for (i, c) in line.char_indices() {
        if escaped {
            escaped = false;
            continue;
        }
        match (quote, c) {
            (Some(_), '\\') => escaped = true,
            (Some(q), c) if c == q => quote = None,
            (None, '\'' | '"') => quote = Some(c),
            (None, '#') => return &line[..i],
            _ => {}
        }
    }
    line
}

fn regexes() -> &'static Regexes {
    static RE: OnceLock<Regexes> = OnceLock::new();
    RE.get_or_init(|| Regexes {
        control: Regex::new(r"\b(if|elsif|unless|case)\b").unwrap(),
        case_open: Regex::new(r"\bcase\b[^{]*\{").unwrap(),
        exec: Regex::new(r"\bexec\s*\{").unwrap(),
        signature: Regex::new(r"\b(class|define)\s+([A-Za-z0-9_:]+)\s*\(").unwrap(),
        class_decl: Regex::new(r"\bclass\s+([A-Za-z0-9_:]+)").unwrap(),
        include: Regex::new(r"\b(?:include|require)\s+((?:::)?[A-Za-z0-9_]+(?:::[A-Za-z0-9_]+)*(?:\s*,\s*(?:::)?[A-Za-z0-9_]+(?:::[A-Za-z0-9_]+)*)*)")
            .unwrap(),
        param: Regex::new(r"\$([A-Za-z_][A-Za-z0-9_]*)").unwrap(),
    })
}

struct Regexes {
    control: Regex,
    case_open: Regex,
    exec: Regex,
    signature: Regex,
    class_decl: Regex,
    include: Regex,
    param: Regex,
}

fn code_lines(text: &str) -> Vec<&str> {
    text.lines().map(strip_comment).collect()
}

fn brace_delta(line: &str) -> i32 {
    line.chars().fold(0, |d, c| match c {
        '{' => d + 1,
        '}' => d - 1,
        _ => d,
    })
}

/// `true` for lines such as `'debian', 'ubuntu': {` or `default: {`.
fn is_case_alternative(line: &str) -> bool {
    let t = line.trim_start();
    if t.is_empty() || t.starts_with('}') {
        return false;
    }
    let head = t.split('{').next().unwrap_or(t);
    let bytes = head.as_bytes();
    let mut quote: Option<u8> = None;
    for (i, &b) in bytes.iter().enumerate() {
        match (quote, b) {
            (Some(q), b) if b == q => quote = None,
            (Some(_), _) => {}
            (None, b'\'' | b'"') => quote = Some(b),
            (None, b':') => {
                let prev_colon = i > 0 && bytes[i - 1] == b':';
                let next_colon = bytes.get(i + 1) == Some(&b':');
                if !prev_colon && !next_colon {
                    return i > 0;
                }
            }
            (None, b'=') if bytes.get(i + 1) == Some(&b'>') => return false,
            _ => {}
        }
    }
    false
}

/// Counts control statements plus case alternatives.
fn complexity(lines: &[&str]) -> u32 {
    let re = regexes();
    let mut count = 0u32;
    let mut depth = 0i32;
    // brace depth of each open case body
    let mut case_bodies: Vec<i32> = Vec::new();
    for line in lines {
        count += re.control.find_iter(line).count() as u32;
        if let Some(&body) = case_bodies.last() {
            if depth == body && is_case_alternative(line) {
                count += 1;
            }
        }
        let opens_case = re.case_open.is_match(line);
        depth += brace_delta(line);
        if opens_case {
            case_bodies.push(depth);
        }
        while case_bodies.last().is_some_and(|&b| depth < b) {
            case_bodies.pop();
        }
    }
    count
}

/// Parameter declarations in class/define signatures.
fn parameters(text: &str) -> u32 {
    let re = regexes();
    let mut total = 0;
    for m in re.signature.find_iter(text) {
        // scan the balanced parenthesis starting at the match end
        let rest = &text[m.end()..];
        let mut depth = 1i32;
        let mut end = rest.len();
        let mut seg_start = 0;
        let mut segments = Vec::new();
        for (i, c) in rest.char_indices() {
            match c {
                '(' | '[' | '{' => depth += 1,
                ')' | ']' | '}' => {
                    depth -= 1;
                    if depth == 0 {
                        end = i;
                        break;
                    }
                }
                ',' if depth == 1 => {
                    segments.push(&rest[seg_start..i]);
                    seg_start = i + 1;
                }
                _ => {}
            }
        }
        segments.push(&rest[seg_start..end]);
        total += segments
            .iter()
            .filter(|seg| {
                let decl = seg.split('=').next().unwrap_or("");
                re.param.is_match(decl)
            })
            .count() as u32;
    }
    total
}

fn normalize_class(name: &str) -> String {
    name.trim().trim_start_matches("::").to_ascii_lowercase()
}

/// Classes declared in a script.
pub fn declared_classes(text: &str) -> BTreeSet<String> {
    let re = regexes();
    code_lines(text)
        .iter()
        .flat_map(|l| re.class_decl.captures_iter(l).map(|c| normalize_class(&c[1])))
        .collect()
}

/// Classes named by `include`/`require` statements.
pub fn referenced_classes(text: &str) -> BTreeSet<String> {
    let re = regexes();
    let mut out = BTreeSet::new();
    for line in code_lines(text) {
        for caps in re.include.captures_iter(line) {
            for name in caps[1].split(',') {
                out.insert(normalize_class(name));
            }
        }
    }
    out
}

/// Script texts plus the class symbol table used for fan-in.
#[derive(Debug, Clone, Default)]
pub struct ScriptCorpus {
    pub scripts: BTreeMap<String, String>,
    /// Precomputed lint warnings per script.
    pub lint_warnings: BTreeMap<String, u32>,
}

impl ScriptCorpus {
    pub fn from_texts<K: Into<String>, V: Into<String>>(items: impl IntoIterator<Item = (K, V)>) -> Self {
        Self {
            scripts: items.into_iter().map(|(k, v)| (k.into(), v.into())).collect(),
            lint_warnings: BTreeMap::new(),
        }
    }

    /// Loads every file under `dir` accepted by `keep`, keyed by path relative to `dir`.
    pub fn from_dir(dir: &Path, keep: impl Fn(&str) -> bool) -> Result<Self, FeatureError> {
        let mut scripts = BTreeMap::new();
        let mut stack = vec![dir.to_path_buf()];
        while let Some(d) = stack.pop() {
            let entries = std::fs::read_dir(&d).map_err(|e| FeatureError::Io {
                path: d.display().to_string(),
                message: e.to_string(),
            })?;
            for entry in entries {
                let entry = entry.map_err(|e| FeatureError::Io {
                    path: d.display().to_string(),
                    message: e.to_string(),
                })?;
                let path = entry.path();
                if path.file_name().is_some_and(|n| n == ".git") {
                    continue;
                }
                if path.is_dir() {
                    stack.push(path);
                    continue;
                }
                let rel = path
                    .strip_prefix(dir)
                    .unwrap_or(&path)
                    .to_string_lossy()
                    .replace('\\', "/");
                if !keep(&rel) {
                    continue;
                }
                let bytes = std::fs::read(&path).map_err(|e| FeatureError::Io {
                    path: path.display().to_string(),
                    message: e.to_string(),
                })?;
                scripts.insert(rel.clone(), decode(&rel, &bytes)?.to_string());
            }
        }
        Ok(Self {
            scripts,
            lint_warnings: BTreeMap::new(),
        })
    }

    /// Reads a `script,lint_warnings` CSV.
    pub fn load_lint_warnings<R: Read>(&mut self, reader: R) -> Result<(), FeatureError> {
        let mut rdr = csv::Reader::from_reader(reader);
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| FeatureError::Csv {
                file: "lint".into(),
                row: i + 2,
                message: e.to_string(),
            })?;
            let count = rec
                .get(1)
                .and_then(|v| v.trim().parse().ok())
                .ok_or_else(|| FeatureError::Csv {
                    file: "lint".into(),
                    row: i + 2,
                    message: "expected script,lint_warnings".into(),
                })?;
            self.lint_warnings.insert(rec[0].to_string(), count);
        }
        Ok(())
    }

    /// Incoming include/require edges per script, from distinct other scripts.
    pub fn fan_in(&self) -> BTreeMap<&str, u32> {
        let mut declaring: BTreeMap<String, Vec<&str>> = BTreeMap::new();
        for (path, text) in &self.scripts {
            for class in declared_classes(text) {
                declaring.entry(class).or_default().push(path.as_str());
            }
        }
        let mut incoming: BTreeMap<&str, BTreeSet<&str>> =
            self.scripts.keys().map(|k| (k.as_str(), BTreeSet::new())).collect();
        for (path, text) in &self.scripts {
            for class in referenced_classes(text) {
                for &target in declaring.get(&class).map(Vec::as_slice).unwrap_or(&[]) {
                    if target != path {
                        incoming.get_mut(target).expect("known script").insert(path.as_str());
                    }
                }
            }
        }
        incoming.into_iter().map(|(k, v)| (k, v.len() as u32)).collect()
    }

    pub fn quality_table(&self) -> BTreeMap<String, CodeQualityVector> {
        let fan_in = self.fan_in();
        self.scripts
            .iter()
            .map(|(path, text)| {
                let mut v = scan_quality(text);
                v.fan_in = fan_in.get(path.as_str()).copied().unwrap_or(0);
                v.lint_warnings = self.lint_warnings.get(path).copied().unwrap_or(0);
                (path.clone(), v)
            })
            .collect()
    }

    pub fn bow_table(&self) -> BTreeMap<String, BowVector> {
        self.scripts
            .iter()
            .map(|(path, text)| {
                (
                    path.clone(),
                    BowVector {
                        script_path: path.clone(),
                        token_counts: bow_tokens(text),
                    },
                )
            })
            .collect()
    }
}

/// Script-local quality counts. `fan_in` and `lint_warnings` need the whole
/// corpus and are left at zero; see [`ScriptCorpus::quality_table`].
pub fn scan_quality(text: &str) -> CodeQualityVector {
    let re = regexes();
    let lines = code_lines(text);
    let stripped = lines.join("\n");
    CodeQualityVector {
        filelength: text.lines().count() as u32,
        complexity: complexity(&lines),
        parameters: parameters(&stripped),
        execs: re.exec.find_iter(&stripped).count() as u32,
        lint_warnings: 0,
        fan_in: 0,
    }
}

pub const QUALITY_HEADER: &str = "script,filelength,complexity,parameters,execs,lint_warnings,fan_in";
pub const BOW_HEADER: &str = "script,token,count";

pub fn quality_to_csv(table: &BTreeMap<String, CodeQualityVector>) -> String {
    let mut out = format!("{QUALITY_HEADER}\n");
    for (path, v) in table {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            path, v.filelength, v.complexity, v.parameters, v.execs, v.lint_warnings, v.fan_in
        );
    }
    out
}

pub fn bow_to_csv(table: &BTreeMap<String, BowVector>) -> String {
    let mut out = format!("{BOW_HEADER}\n");
    for (path, v) in table {
        for (token, count) in &v.token_counts {
            let _ = writeln!(out, "{path},{token},{count}");
        }
    }
    out
}

fn csv_err(file: &str, row: usize, message: impl ToString) -> FeatureError {
    FeatureError::Csv {
        file: file.into(),
        row,
        message: message.to_string(),
    }
}

pub fn quality_from_csv<R: Read>(reader: R) -> Result<BTreeMap<String, CodeQualityVector>, FeatureError> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut out = BTreeMap::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 2;
        let rec = rec.map_err(|e| csv_err("quality", row, e))?;
        if rec.len() != 7 {
            return Err(csv_err("quality", row, format!("expected 7 columns, got {}", rec.len())));
        }
        let n = |k: usize| rec[k].trim().parse::<u32>().map_err(|e| csv_err("quality", row, e));
        out.insert(
            rec[0].to_string(),
            CodeQualityVector {
                filelength: n(1)?,
                complexity: n(2)?,
                parameters: n(3)?,
                execs: n(4)?,
                lint_warnings: n(5)?,
                fan_in: n(6)?,
            },
        );
    }
    Ok(out)
}

pub fn bow_from_csv<R: Read>(reader: R) -> Result<BTreeMap<String, BowVector>, FeatureError> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut out: BTreeMap<String, BowVector> = BTreeMap::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 2;
        let rec = rec.map_err(|e| csv_err("bow", row, e))?;
        if rec.len() != 3 {
            return Err(csv_err("bow", row, "expected script,token,count"));
        }
        let count: u32 = rec[2].trim().parse().map_err(|e| csv_err("bow", row, e))?;
        let entry = out.entry(rec[0].to_string()).or_insert_with(|| BowVector {
            script_path: rec[0].to_string(),
            token_counts: BTreeMap::new(),
        });
        *entry.token_counts.entry(rec[1].to_string()).or_default() += count;
    }
    Ok(out)
}
