//! Human-readable and JSON reports, plus the Likert survey tally.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Read;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::antipatterns::AntiPatternFlag;
use crate::predict::{EvalReport, MEASURES};
use crate::stats::MetricAnalysis;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("survey line {line}: {message}")]
    Survey { line: usize, message: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub analysis: BTreeMap<String, MetricAnalysis>,
    pub flags: Vec<AntiPatternFlag>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eval: Option<EvalReport>,
}

impl Report {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn to_text(&self) -> String {
        render_text(&self.analysis, &self.flags, self.eval.as_ref())
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.4}"))
}

/// Renders the text report; [`render_report`] pairs it with JSON.
pub fn render_text(
    analysis: &BTreeMap<String, MetricAnalysis>,
    flags: &[AntiPatternFlag],
    eval: Option<&EvalReport>,
) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "== Activity metrics: defective vs neutral ==");
    if analysis.is_empty() {
        let _ = writeln!(out, "no metrics analyzed");
    }
    for (name, a) in analysis {
        let _ = writeln!(
            out,
            "{name:<18} p={:.3e} {} delta={:+.3} ({}) omanova_p={}",
            a.test.p_value,
            if a.test.significant { "significant" } else { "not-significant" },
            a.effect.delta,
            a.effect.magnitude.as_str(),
            fmt_opt(a.omanova.as_ref().map(|o| o.metric.p_value)),
        );
    }

    let _ = writeln!(out, "\n== Anti-patterns ==");
    let hits: Vec<&AntiPatternFlag> = flags.iter().filter(|f| f.triggered).collect();
    if hits.is_empty() {
        let _ = writeln!(out, "no anti-patterns triggered");
    }
    for f in hits {
        let _ = writeln!(
            out,
            "{:<40} {:<16} value={} threshold={:.4}{}",
            f.script_path,
            f.pattern.as_str(),
            fmt_opt(f.value),
            f.threshold,
            if f.pattern.is_dataset_relative() {
                " (dataset-relative quantile threshold; a proposal, not an established cutoff)"
            } else {
                ""
            },
        );
    }

    if let Some(eval) = eval {
        let _ = writeln!(out, "\n== Defect prediction (median, Scott-Knott rank) ==");
        let _ = writeln!(out, "{:<10} {:<6} {:>16} {:>16} {:>16}", "features", "model", MEASURES[0], MEASURES[1], MEASURES[2]);
        for (fs, learner, cell) in eval.cells() {
            let col = |m: &str| format!("{:.3} [{}]", cell.median.get(m).copied().unwrap_or(0.0), cell.sk_rank.get(m).copied().unwrap_or(0));
            let _ = writeln!(
                out,
                "{fs:<10} {learner:<6} {:>16} {:>16} {:>16}",
                col("precision"),
                col("recall"),
                col("f1")
            );
        }
    }
    out
}

/// Text and JSON views of the same report.
pub fn render_report(
    analysis: &BTreeMap<String, MetricAnalysis>,
    flags: &[AntiPatternFlag],
    eval: Option<&EvalReport>,
) -> (String, String) {
    let report = Report {
        analysis: analysis.clone(),
        flags: flags.to_vec(),
        eval: eval.cloned(),
    };
    (report.to_text(), report.to_json())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurveyResponse {
    pub respondent: String,
    pub metric: String,
    pub likert: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LikertTally {
    pub metric: String,
    pub responses: usize,
    /// Counts for answers 1 (strongly disagree) to 5 (strongly agree).
    pub counts: [usize; 5],
    /// Share answering agree or strongly agree, in percent.
    pub agree_percent: f64,
}

pub fn read_survey<R: Read>(reader: R) -> Result<Vec<SurveyResponse>, ReportError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers()?.clone();
    if header.iter().collect::<Vec<_>>() != ["respondent", "metric", "likert"] {
        return Err(ReportError::Survey {
            line: 1,
            message: "expected header respondent,metric,likert".into(),
        });
    }
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let likert: u8 = rec.get(2).and_then(|v| v.parse().ok()).filter(|v| (1..=5).contains(v)).ok_or_else(|| {
            ReportError::Survey {
                line,
                message: "likert must be an integer from 1 to 5".into(),
            }
        })?;
        out.push(SurveyResponse {
            respondent: rec.get(0).unwrap_or_default().to_string(),
            metric: rec.get(1).unwrap_or_default().to_string(),
            likert,
        });
    }
    Ok(out)
}

pub fn tally_survey(responses: &[SurveyResponse]) -> Vec<LikertTally> {
    let mut by_metric: BTreeMap<&str, [usize; 5]> = BTreeMap::new();
    for r in responses {
        by_metric.entry(&r.metric).or_default()[(r.likert - 1) as usize] += 1;
    }
    by_metric
        .into_iter()
        .map(|(metric, counts)| {
            let n: usize = counts.iter().sum();
            LikertTally {
                metric: metric.to_string(),
                responses: n,
                counts,
                agree_percent: 100.0 * (counts[3] + counts[4]) as f64 / n as f64,
            }
        })
        .collect()
}

/// One percentage bar per metric, 40 characters at 100%.
pub fn render_survey(tallies: &[LikertTally]) -> String {
    let mut out = String::from("== Practitioner agreement (agree + strongly agree) ==\n");
    for t in tallies {
        let width = (t.agree_percent / 2.5).round() as usize;
        let _ = writeln!(
            out,
            "{:<18} {:<40} {:5.1}% (n={})",
            t.metric,
            "#".repeat(width),
            t.agree_percent,
            t.responses
        );
    }
    out
}
