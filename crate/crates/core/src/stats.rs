//! Two-sample tests and effect sizes used to relate metrics to defects.

use std::collections::BTreeMap;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, FisherSnedecor, Normal};
use thiserror::Error;

/// Significance level for the Mann-Whitney and OMANOVA tests.
pub const ALPHA: f64 = 0.01;

/// Samples with at most this many observations on a side use the exact
/// permutation distribution of the rank sum.
pub const EXACT_MAX_SIDE: usize = 8;
const EXACT_MAX_WORK: usize = 50_000_000;

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("{0} sample is empty")]
    EmptySample(&'static str),
    #[error("sample contains NaN")]
    NaN,
    #[error("log transform of negative value {0}")]
    NegativeValue(f64),
    #[error("{0} has no variance")]
    DegenerateVariance(String),
    #[error("each class needs at least two observations (got {defective} defective, {neutral} neutral)")]
    TooFewObservations { defective: usize, neutral: usize },
    #[error("responses and labels differ in length")]
    LengthMismatch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    DefectiveGreater,
    NeutralGreater,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PMethod {
    Exact,
    Normal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub metric_name: String,
    pub u_statistic: f64,
    pub p_value: f64,
    pub direction: Direction,
    pub significant: bool,
    pub method: PMethod,
    pub sample_sizes: (usize, usize),
}

fn check(sample: &[f64], name: &'static str) -> Result<(), StatsError> {
    if sample.is_empty() {
        return Err(StatsError::EmptySample(name));
    }
    if sample.iter().any(|v| v.is_nan()) {
        return Err(StatsError::NaN);
    }
    Ok(())
}

/// Midranks (1-based) of the pooled values, with the tie group sizes.
fn midranks(pooled: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let mut order: Vec<usize> = (0..pooled.len()).collect();
    order.sort_by(|&a, &b| pooled[a].total_cmp(&pooled[b]));
    let mut ranks = vec![0.0; pooled.len()];
    let mut ties = Vec::new();
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && pooled[order[j + 1]] == pooled[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = rank;
        }
        ties.push(j - i + 1);
        i = j + 1;
    }
    (ranks, ties)
}

/// Number of size-`m` subsets of `items` (doubled midranks) by rank sum.
fn subset_sum_counts(items: &[u64], m: usize) -> Vec<u128> {
    let max_sum: u64 = {
        let mut sorted = items.to_vec();
        sorted.sort_unstable_by(|a, b| b.cmp(a));
        sorted.iter().take(m).sum()
    };
    let width = max_sum as usize + 1;
    // table[k][s]: subsets of size k with sum s
    let mut table = vec![vec![0u128; width]; m + 1];
    table[0][0] = 1;
    for &item in items {
        let item = item as usize;
        for k in (1..=m).rev() {
            let (lower, upper) = table.split_at_mut(k);
            let prev = &lower[k - 1];
            let cur = &mut upper[0];
            for s in (item..width).rev() {
                if prev[s - item] != 0 {
                    cur[s] += prev[s - item];
                }
            }
        }
    }
    table.swap_remove(m)
}

/// One-sided Mann-Whitney U test of `defective` against `neutral`.
///
/// Ties receive midranks. When either sample has at most
/// [`EXACT_MAX_SIDE`] observations the p-value comes from the exact
/// permutation distribution of the rank sum; otherwise from the normal
/// approximation with tie-corrected variance and continuity correction.
pub fn mann_whitney_one_sided(
    metric_name: &str,
    defective: &[f64],
    neutral: &[f64],
    direction: Direction,
) -> Result<TestResult, StatsError> {
    check(defective, "defective")?;
    check(neutral, "neutral")?;
    let (n1, n2) = (defective.len(), neutral.len());
    let n = n1 + n2;
    let pooled: Vec<f64> = defective.iter().chain(neutral).copied().collect();
    let (ranks, ties) = midranks(&pooled);
    let r1: f64 = ranks[..n1].iter().sum();
    let u = r1 - (n1 * (n1 + 1)) as f64 / 2.0;

    let small = n1.min(n2);
    let work = n * small * 2 * n * small;
    let (p, method) = if small <= EXACT_MAX_SIDE && work <= EXACT_MAX_WORK {
        (exact_p(&ranks, n1, direction), PMethod::Exact)
    } else {
        (normal_p(n1, n2, &ties, u, direction), PMethod::Normal)
    };
    let p = p.clamp(0.0, 1.0);
    Ok(TestResult {
        metric_name: metric_name.to_string(),
        u_statistic: u,
        p_value: p,
        direction,
        significant: p < ALPHA,
        method,
        sample_sizes: (n1, n2),
    })
}

fn exact_p(ranks: &[f64], n1: usize, direction: Direction) -> f64 {
    let n2 = ranks.len() - n1;
    // doubled midranks are integers
    let doubled: Vec<u64> = ranks.iter().map(|r| (r * 2.0).round() as u64).collect();
    let total_doubled: i64 = doubled.iter().sum::<u64>() as i64;
    let obs_r1 = doubled[..n1].iter().sum::<u64>() as i64;
    // enumerate subsets of the smaller side; the other side's sum is the complement
    let enumerate_first = n1 <= n2;
    let counts = subset_sum_counts(&doubled, if enumerate_first { n1 } else { n2 });
    let total: u128 = counts.iter().sum();
    let tail: u128 = counts
        .iter()
        .enumerate()
        .filter(|(_, &c)| c > 0)
        .filter(|(s, _)| {
            let s = *s as i64;
            let r1 = if enumerate_first { s } else { total_doubled - s };
            match direction {
                Direction::DefectiveGreater => r1 >= obs_r1,
                Direction::NeutralGreater => r1 <= obs_r1,
            }
        })
        .map(|(_, &c)| c)
        .sum();
    tail as f64 / total as f64
}

fn normal_p(n1: usize, n2: usize, ties: &[usize], u: f64, direction: Direction) -> f64 {
    let (a, b) = (n1 as f64, n2 as f64);
    let n = a + b;
    let mean = a * b / 2.0;
    let tie_term: f64 = ties.iter().map(|&t| (t * t * t - t) as f64).sum::<f64>() / (n * (n - 1.0));
    let var = a * b / 12.0 * ((n + 1.0) - tie_term);
    if var <= 0.0 {
        return 1.0;
    }
    let sd = var.sqrt();
    let std_normal = Normal::new(0.0, 1.0).expect("valid normal");
    match direction {
        Direction::DefectiveGreater => std_normal.sf((u - mean - 0.5) / sd),
        Direction::NeutralGreater => std_normal.cdf((u - mean + 0.5) / sd),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Magnitude {
    Negligible,
    Small,
    Medium,
    Large,
}

impl Magnitude {
    /// Interpretation bins for |δ|.
    pub fn from_delta(delta: f64) -> Self {
        let d = delta.abs();
        if d >= 0.47 {
            Magnitude::Large
        } else if d >= 0.33 {
            Magnitude::Medium
        } else if d >= 0.14 {
            Magnitude::Small
        } else {
            Magnitude::Negligible
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Magnitude::Negligible => "negligible",
            Magnitude::Small => "small",
            Magnitude::Medium => "medium",
            Magnitude::Large => "large",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectSize {
    pub metric_name: String,
    pub delta: f64,
    pub magnitude: Magnitude,
}

/// Cliff's delta: `(#(x > y) - #(x < y)) / (|x| |y|)`.
pub fn cliffs_delta_value(x: &[f64], y: &[f64]) -> Result<f64, StatsError> {
    check(x, "first")?;
    check(y, "second")?;
    let mut ys = y.to_vec();
    ys.sort_by(f64::total_cmp);
    let mut dominance: i64 = 0;
    for &v in x {
        let below = ys.partition_point(|&w| w < v);
        let not_above = ys.partition_point(|&w| w <= v);
        let above = ys.len() - not_above;
        dominance += below as i64 - above as i64;
    }
    Ok(dominance as f64 / (x.len() * y.len()) as f64)
}

pub fn cliffs_delta(metric_name: &str, x: &[f64], y: &[f64]) -> Result<EffectSize, StatsError> {
    let delta = cliffs_delta_value(x, y)?;
    Ok(EffectSize {
        metric_name: metric_name.to_string(),
        delta,
        magnitude: Magnitude::from_delta(delta),
    })
}

pub fn log1p_transform(values: &[f64]) -> Result<Vec<f64>, StatsError> {
    values
        .iter()
        .map(|&v| {
            if v < 0.0 {
                Err(StatsError::NegativeValue(v))
            } else if v.is_nan() {
                Err(StatsError::NaN)
            } else {
                Ok(v.ln_1p())
            }
        })
        .collect()
}

/// Sample skewness `m3 / m2^1.5` from central moments.
pub fn skewness(values: &[f64]) -> Option<f64> {
    let n = values.len() as f64;
    if values.is_empty() {
        return None;
    }
    let mean = values.iter().sum::<f64>() / n;
    let m2 = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let m3 = values.iter().map(|v| (v - mean).powi(3)).sum::<f64>() / n;
    (m2 > 0.0).then(|| m3 / m2.powf(1.5))
}

/// |skewness| above which a response is log-transformed.
pub const SKEW_LIMIT: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseTest {
    pub f_statistic: f64,
    pub p_value: f64,
    pub transform_applied: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OmanovaResult {
    pub metric_name: String,
    pub size: ResponseTest,
    pub age: ResponseTest,
    pub metric: ResponseTest,
    /// Pillai's trace of the three-response one-way MANOVA.
    pub pillai_trace: Option<f64>,
    pub pillai_p_value: Option<f64>,
}

fn prepare_response(name: &str, values: &[f64]) -> Result<(Vec<f64>, bool), StatsError> {
    if values.iter().any(|v| v.is_nan()) {
        return Err(StatsError::NaN);
    }
    let skew = skewness(values).ok_or_else(|| StatsError::DegenerateVariance(name.to_string()))?;
    if skew.abs() > SKEW_LIMIT && values.iter().all(|&v| v >= 0.0) {
        let t = log1p_transform(values)?;
        if skewness(&t).is_none() {
            return Err(StatsError::DegenerateVariance(name.to_string()));
        }
        Ok((t, true))
    } else {
        Ok((values.to_vec(), false))
    }
}

/// One-way ANOVA F test of a response across two classes.
fn two_group_f(values: &[f64], labels: &[bool]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let mut sums = [0.0f64; 2];
    let mut counts = [0usize; 2];
    for (&v, &l) in values.iter().zip(labels) {
        sums[usize::from(l)] += v;
        counts[usize::from(l)] += 1;
    }
    let means = [sums[0] / counts[0] as f64, sums[1] / counts[1] as f64];
    let ssb: f64 = (0..2).map(|g| counts[g] as f64 * (means[g] - mean).powi(2)).sum();
    let ssw: f64 = values
        .iter()
        .zip(labels)
        .map(|(&v, &l)| (v - means[usize::from(l)]).powi(2))
        .sum();
    let df_w = n - 2.0;
    if ssw <= 0.0 {
        return if ssb > 0.0 { (f64::INFINITY, 0.0) } else { (0.0, 1.0) };
    }
    let f = ssb / (ssw / df_w);
    let dist = FisherSnedecor::new(1.0, df_w).expect("df > 0");
    (f, dist.sf(f).clamp(0.0, 1.0))
}

fn pillai(responses: &[Vec<f64>; 3], labels: &[bool]) -> Option<(f64, f64)> {
    let n = labels.len();
    let obs = |i: usize| Vector3::new(responses[0][i], responses[1][i], responses[2][i]);
    let grand = (0..n).map(obs).sum::<Vector3<f64>>() / n as f64;
    let mut group_sum = [Vector3::zeros(); 2];
    let mut counts = [0usize; 2];
    for (i, &l) in labels.iter().enumerate() {
        group_sum[usize::from(l)] += obs(i);
        counts[usize::from(l)] += 1;
    }
    let means = [group_sum[0] / counts[0] as f64, group_sum[1] / counts[1] as f64];
    let mut h = Matrix3::zeros();
    for g in 0..2 {
        let d = means[g] - grand;
        h += counts[g] as f64 * d * d.transpose();
    }
    let mut e = Matrix3::zeros();
    for (i, &l) in labels.iter().enumerate() {
        let d = obs(i) - means[usize::from(l)];
        e += d * d.transpose();
    }
    let inv = (h + e).try_inverse()?;
    let v = (h * inv).trace();
    let p = 3.0;
    let df2 = n as f64 - p - 1.0;
    if df2 <= 0.0 || v >= 1.0 {
        return Some((v, 0.0));
    }
    let f = (v / (1.0 - v)) * df2 / p;
    let dist = FisherSnedecor::new(p, df2).ok()?;
    Some((v, dist.sf(f).clamp(0.0, 1.0)))
}

/// One-way MANOVA of (size, age, metric) on the defective/neutral factor,
/// reported as one univariate F-test p-value per response.
pub fn omanova(
    metric_name: &str,
    metric: &[f64],
    size: &[f64],
    age: &[f64],
    is_defective: &[bool],
) -> Result<OmanovaResult, StatsError> {
    let n = is_defective.len();
    if metric.len() != n || size.len() != n || age.len() != n {
        return Err(StatsError::LengthMismatch);
    }
    let defective = is_defective.iter().filter(|&&d| d).count();
    let neutral = n - defective;
    if defective < 2 || neutral < 2 {
        return Err(StatsError::TooFewObservations { defective, neutral });
    }
    let (size_t, size_tr) = prepare_response("size", size)?;
    let (age_t, age_tr) = prepare_response("age", age)?;
    let (metric_t, metric_tr) = prepare_response(metric_name, metric)?;
    let test = |v: &[f64], transformed: bool| {
        let (f, p) = two_group_f(v, is_defective);
        ResponseTest {
            f_statistic: f,
            p_value: p,
            transform_applied: transformed,
        }
    };
    let responses = [size_t, age_t, metric_t];
    let pil = pillai(&responses, is_defective);
    Ok(OmanovaResult {
        metric_name: metric_name.to_string(),
        size: test(&responses[0], size_tr),
        age: test(&responses[1], age_tr),
        metric: test(&responses[2], metric_tr),
        pillai_trace: pil.map(|p| p.0),
        pillai_p_value: pil.map(|p| p.1),
    })
}

/// Everything computed for one metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricAnalysis {
    pub test: TestResult,
    pub effect: EffectSize,
    pub omanova: Option<OmanovaResult>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub omanova_error: Option<String>,
}

/// Hypothesized direction of each activity metric.
pub fn hypothesis_direction(metric: &str) -> Direction {
    if metric == "highest_contrib" {
        Direction::NeutralGreater
    } else {
        Direction::DefectiveGreater
    }
}

/// Runs the full statistical battery over a metric table.
pub fn analyze_table(rows: &[crate::metrics::MetricVector]) -> Result<BTreeMap<String, MetricAnalysis>, StatsError> {
    let mut out = BTreeMap::new();
    for name in crate::metrics::ACTIVITY_METRICS {
        let usable: Vec<_> = rows.iter().filter_map(|r| r.metric(name).map(|v| (r, v))).collect();
        let defective: Vec<f64> = usable.iter().filter(|(r, _)| r.is_defective).map(|(_, v)| *v).collect();
        let neutral: Vec<f64> = usable.iter().filter(|(r, _)| !r.is_defective).map(|(_, v)| *v).collect();
        let test = mann_whitney_one_sided(name, &defective, &neutral, hypothesis_direction(name))?;
        let effect = cliffs_delta(name, &defective, &neutral)?;
        let metric: Vec<f64> = usable.iter().map(|(_, v)| *v).collect();
        let size: Vec<f64> = usable.iter().map(|(r, _)| r.size_loc as f64).collect();
        let age: Vec<f64> = usable.iter().map(|(r, _)| r.age_months).collect();
        let labels: Vec<bool> = usable.iter().map(|(r, _)| r.is_defective).collect();
        let (omanova, omanova_error) = match omanova(name, &metric, &size, &age, &labels) {
            Ok(o) => (Some(o), None),
            Err(e) => (None, Some(e.to_string())),
        };
        out.insert(
            name.to_string(),
            MetricAnalysis {
                test,
                effect,
                omanova,
                omanova_error,
            },
        );
    }
    Ok(out)
}
