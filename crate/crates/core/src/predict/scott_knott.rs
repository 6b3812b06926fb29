//! Scott-Knott ranking with a bootstrap significance test and a Cliff's
//! delta effect-size gate.
//!
//! Groups are ordered best first (median, then mean, then the sorted values
//! themselves), then split recursively at the cut that maximizes the
//! between-part sum of squares. A split stands only if the bootstrap test
//! rejects equal means at α = 0.05 and the two parts differ by a
//! non-negligible Cliff's delta.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::stats::cliffs_delta_value;

pub const SK_ALPHA: f64 = 0.05;
pub const NEGLIGIBLE_DELTA: f64 = 0.147;
pub const BOOTSTRAP_RESAMPLES: usize = 1000;
const BOOTSTRAP_SEED: u64 = 0x5c07_7e4b;

#[derive(Debug, Clone)]
struct Group<'a> {
    name: &'a str,
    values: Vec<f64>,
    median: f64,
    mean: f64,
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn best_first(a: &Group, b: &Group) -> Ordering {
    b.median
        .total_cmp(&a.median)
        .then(b.mean.total_cmp(&a.mean))
        .then_with(|| {
            for (x, y) in b.values.iter().zip(&a.values) {
                let c = x.total_cmp(y);
                if c != Ordering::Equal {
                    return c;
                }
            }
            b.values.len().cmp(&a.values.len())
        })
}

/// Bootstrap p-value for equal means of two samples.
fn bootstrap_p(left: &[f64], right: &[f64], rng: &mut ChaCha8Rng) -> f64 {
    let (ml, mr) = (mean(left), mean(right));
    let observed = (ml - mr).abs();
    if observed == 0.0 {
        return 1.0;
    }
    let pooled = (ml * left.len() as f64 + mr * right.len() as f64) / (left.len() + right.len()) as f64;
    let l: Vec<f64> = left.iter().map(|v| v - ml + pooled).collect();
    let r: Vec<f64> = right.iter().map(|v| v - mr + pooled).collect();
    let resample_mean = |s: &[f64], rng: &mut ChaCha8Rng| {
        (0..s.len()).map(|_| s[rng.gen_range(0..s.len())]).sum::<f64>() / s.len() as f64
    };
    let mut extreme = 0usize;
    for _ in 0..BOOTSTRAP_RESAMPLES {
        let d = (resample_mean(&l, rng) - resample_mean(&r, rng)).abs();
        if d >= observed - 1e-12 * observed.abs() {
            extreme += 1;
        }
    }
    (extreme + 1) as f64 / (BOOTSTRAP_RESAMPLES + 1) as f64
}

fn pooled(groups: &[Group]) -> Vec<f64> {
    groups.iter().flat_map(|g| g.values.iter().copied()).collect()
}

/// Cut index maximizing the between-part sum of squares, skipping cuts
/// between indistinguishable neighbours.
fn best_cut(groups: &[Group]) -> Option<usize> {
    let all = pooled(groups);
    let grand = mean(&all);
    let mut best: Option<(f64, usize)> = None;
    for cut in 1..groups.len() {
        let (a, b) = (&groups[cut - 1], &groups[cut]);
        if a.median == b.median && a.mean == b.mean {
            continue;
        }
        let left = pooled(&groups[..cut]);
        let right = pooled(&groups[cut..]);
        let ss = left.len() as f64 * (mean(&left) - grand).powi(2) + right.len() as f64 * (mean(&right) - grand).powi(2);
        if best.is_none_or(|(s, _)| ss > s) {
            best = Some((ss, cut));
        }
    }
    best.map(|(_, c)| c)
}

fn partition(groups: &[Group], rng: &mut ChaCha8Rng, clusters: &mut Vec<usize>) {
    if groups.len() >= 2 {
        if let Some(cut) = best_cut(groups) {
            let left = pooled(&groups[..cut]);
            let right = pooled(&groups[cut..]);
            let p = bootstrap_p(&left, &right, rng);
            let delta = cliffs_delta_value(&left, &right).unwrap_or(0.0);
            if p < SK_ALPHA && delta.abs() >= NEGLIGIBLE_DELTA {
                partition(&groups[..cut], rng, clusters);
                partition(&groups[cut..], rng, clusters);
                return;
            }
        }
    }
    clusters.push(groups.len());
}

/// Ranks named score lists; rank 1 holds the best groups.
pub fn scott_knott_rank(groups: &BTreeMap<String, Vec<f64>>) -> BTreeMap<String, usize> {
    let mut list: Vec<Group> = groups
        .iter()
        .filter(|(_, v)| !v.is_empty())
        .map(|(name, v)| {
            let mut values = v.clone();
            values.sort_by(f64::total_cmp);
            Group {
                name,
                median: median(&values),
                mean: mean(&values),
                values,
            }
        })
        .collect();
    list.sort_by(best_first);
    let mut rng = ChaCha8Rng::seed_from_u64(BOOTSTRAP_SEED);
    let mut sizes = Vec::new();
    partition(&list, &mut rng, &mut sizes);
    let mut ranks = BTreeMap::new();
    let mut it = list.iter();
    for (rank, size) in sizes.into_iter().enumerate() {
        for g in it.by_ref().take(size) {
            ranks.insert(g.name.to_string(), rank + 1);
        }
    }
    for (name, v) in groups {
        if v.is_empty() {
            ranks.insert(name.clone(), ranks.len() + 1);
        }
    }
    ranks
}

#[cfg(test)]
mod tests {
    use super::*;

    fn groups(items: &[(&str, Vec<f64>)]) -> BTreeMap<String, Vec<f64>> {
        items.iter().map(|(n, v)| (n.to_string(), v.clone())).collect()
    }

    #[test]
    fn constant_groups_split() {
        let r = scott_knott_rank(&groups(&[("hi", vec![1.0; 30]), ("lo", vec![0.0; 30])]));
        assert_eq!(r["hi"], 1);
        assert_eq!(r["lo"], 2);
    }

    #[test]
    fn single_group_is_rank_one() {
        let r = scott_knott_rank(&groups(&[("a", vec![0.2, 0.4])]));
        assert_eq!(r["a"], 1);
    }

    #[test]
    fn two_pairs_form_two_ranks() {
        // high pair overlaps internally, low pair overlaps internally
        let hi1: Vec<f64> = (0..20).map(|i| 0.80 + 0.01 * (i % 10) as f64).collect();
        let hi2: Vec<f64> = (0..20).map(|i| 0.81 + 0.01 * (i % 10) as f64).collect();
        let lo1: Vec<f64> = (0..20).map(|i| 0.30 + 0.01 * (i % 10) as f64).collect();
        let lo2: Vec<f64> = (0..20).map(|i| 0.31 + 0.01 * (i % 10) as f64).collect();
        let r = scott_knott_rank(&groups(&[("h1", hi1), ("h2", hi2), ("l1", lo1), ("l2", lo2)]));
        assert_eq!((r["h1"], r["h2"], r["l1"], r["l2"]), (1, 1, 2, 2));
    }
}
