//! Independent oracles and fixture builders shared by the integration tests.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use devminer::features::ScriptCorpus;
use devminer::ingest::{CommitRecord, FileChange, IacMatcher};
use devminer::labeling::{label_commits, label_scripts, FileIssueStore, Ruleset};
use devminer::metrics::{metric_table, Dataset, MetricOptions, MetricVector};
use devminer::predict::{build_feature_sets, FeatureMatrix};
use devminer::synth::SyntheticRepo;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random simple undirected graph with `n` nodes and edge probability `p`.
pub fn random_graph(rng: &mut ChaCha8Rng, n: usize, p: f64) -> Vec<(usize, usize)> {
    let mut edges = Vec::new();
    for a in 0..n {
        for b in a + 1..n {
            if rng.gen::<f64>() < p {
                edges.push((a, b));
            }
        }
    }
    edges
}

/// All-pairs shortest distances by Floyd-Warshall; `u64::MAX` = unreachable.
pub fn floyd_warshall(n: usize, edges: &[(usize, usize, u64)]) -> Vec<Vec<u64>> {
    let mut d = vec![vec![u64::MAX; n]; n];
    for (i, row) in d.iter_mut().enumerate() {
        row[i] = 0;
    }
    for &(a, b, w) in edges {
        d[a][b] = d[a][b].min(w);
        d[b][a] = d[b][a].min(w);
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                if d[i][k] != u64::MAX && d[k][j] != u64::MAX && d[i][k] + d[k][j] < d[i][j] {
                    d[i][j] = d[i][k] + d[k][j];
                }
            }
        }
    }
    d
}

/// Every shortest path from `a` to `b`, listed explicitly as node sequences.
pub fn shortest_paths(n: usize, edges: &[(usize, usize, u64)], a: usize, b: usize) -> Vec<Vec<usize>> {
    let d = floyd_warshall(n, edges);
    let mut adj = vec![Vec::new(); n];
    for &(x, y, w) in edges {
        adj[x].push((y, w));
        adj[y].push((x, w));
    }
    let mut out = Vec::new();
    if d[a][b] == u64::MAX || a == b {
        return out;
    }
    let mut path = vec![a];
    fn walk(
        v: usize,
        b: usize,
        len: u64,
        d: &[Vec<u64>],
        adj: &[Vec<(usize, u64)>],
        path: &mut Vec<usize>,
        out: &mut Vec<Vec<usize>>,
    ) {
        if v == b {
            out.push(path.clone());
            return;
        }
        for &(w, wt) in &adj[v] {
            // only extend along edges that stay on some shortest a-b path
            if d[w][b] != u64::MAX && len + wt + d[w][b] == d[path[0]][b] && !path.contains(&w) {
                path.push(w);
                walk(w, b, len + wt, d, adj, path, out);
                path.pop();
            }
        }
    }
    walk(a, b, 0, &d, &adj, &mut path, &mut out);
    out
}

/// Every simple path from `a` to `b` with its total weight, no pruning.
pub fn all_simple_paths(n: usize, edges: &[(usize, usize, u64)], a: usize, b: usize) -> Vec<(u64, Vec<usize>)> {
    let mut adj = vec![Vec::new(); n];
    for &(x, y, w) in edges {
        adj[x].push((y, w));
        adj[y].push((x, w));
    }
    let mut out = Vec::new();
    let mut path = vec![a];
    fn walk(v: usize, b: usize, len: u64, adj: &[Vec<(usize, u64)>], path: &mut Vec<usize>, out: &mut Vec<(u64, Vec<usize>)>) {
        if v == b {
            out.push((len, path.clone()));
            return;
        }
        for &(w, wt) in &adj[v] {
            if !path.contains(&w) {
                path.push(w);
                walk(w, b, len + wt, adj, path, out);
                path.pop();
            }
        }
    }
    if a != b {
        walk(a, b, 0, &adj, &mut path, &mut out);
    }
    out
}

/// Normalized edge betweenness by explicit shortest-path enumeration.
pub fn edge_betweenness_oracle(n: usize, edges: &[(usize, usize)]) -> BTreeMap<(usize, usize), f64> {
    let weighted: Vec<(usize, usize, u64)> = edges.iter().map(|&(a, b)| (a, b, 1)).collect();
    let mut score: BTreeMap<(usize, usize), f64> = edges.iter().map(|&(a, b)| ((a.min(b), a.max(b)), 0.0)).collect();
    for a in 0..n {
        for b in a + 1..n {
            let paths = shortest_paths(n, &weighted, a, b);
            if paths.is_empty() {
                continue;
            }
            let total = paths.len() as f64;
            for (e, s) in score.iter_mut() {
                let through = paths
                    .iter()
                    .filter(|p| p.windows(2).any(|w| (w[0].min(w[1]), w[0].max(w[1])) == *e))
                    .count();
                *s += through as f64 / total;
            }
        }
    }
    let pairs = (n * n.saturating_sub(1) / 2).max(1) as f64;
    score.values_mut().for_each(|v| *v /= pairs);
    score
}

/// Betweenness of each node over developer endpoint pairs (`0..devs`),
/// using `paths` to list the shortest paths of a pair.
pub fn developer_pair_oracle(
    n: usize,
    devs: usize,
    paths: impl Fn(usize, usize) -> Vec<Vec<usize>>,
) -> Vec<f64> {
    let mut score = vec![0.0; n];
    for a in 0..devs {
        for b in a + 1..devs {
            let ps = paths(a, b);
            if ps.is_empty() {
                continue;
            }
            for (x, s) in score.iter_mut().enumerate() {
                if x == a || x == b {
                    continue;
                }
                let through = ps.iter().filter(|p| p[1..p.len() - 1].contains(&x)).count();
                *s += through as f64 / ps.len() as f64;
            }
        }
    }
    score
}

/// Shortest paths by filtering the full simple-path enumeration.
pub fn brute_shortest(n: usize, edges: &[(usize, usize, u64)], a: usize, b: usize) -> Vec<Vec<usize>> {
    let all = all_simple_paths(n, edges, a, b);
    let Some(best) = all.iter().map(|(l, _)| *l).min() else {
        return Vec::new();
    };
    all.into_iter().filter(|(l, _)| *l == best).map(|(_, p)| p).collect()
}

/// One-sided Mann-Whitney p-value by enumerating every relabelling of the
/// pooled sample. U counts pairs with x > y plus half the ties.
pub fn permutation_p(x: &[f64], y: &[f64], greater: bool) -> (f64, f64) {
    let pooled: Vec<f64> = x.iter().chain(y).copied().collect();
    let n = pooled.len();
    let m = x.len();
    let u_of = |sel: &[usize]| -> f64 {
        let mut u = 0.0;
        for &i in sel {
            for (j, &v) in pooled.iter().enumerate() {
                if sel.contains(&j) {
                    continue;
                }
                if pooled[i] > v {
                    u += 1.0;
                } else if pooled[i] == v {
                    u += 0.5;
                }
            }
        }
        u
    };
    let observed = u_of(&(0..m).collect::<Vec<_>>());
    let (mut hits, mut total) = (0u64, 0u64);
    let mut sel: Vec<usize> = (0..m).collect();
    loop {
        let u = u_of(&sel);
        let extreme = if greater { u >= observed - 1e-9 } else { u <= observed + 1e-9 };
        hits += u64::from(extreme);
        total += 1;
        // next m-combination of 0..n in lexicographic order
        let mut i = m;
        loop {
            if i == 0 {
                return (observed, hits as f64 / total as f64);
            }
            i -= 1;
            if sel[i] < n - m + i {
                break;
            }
        }
        sel[i] += 1;
        for k in i + 1..m {
            sel[k] = sel[k - 1] + 1;
        }
    }
}

/// Cliff's delta by counting every pair.
pub fn cliffs_oracle(x: &[f64], y: &[f64]) -> f64 {
    let mut s = 0i64;
    for a in x {
        for b in y {
            s += match a.partial_cmp(b).unwrap() {
                std::cmp::Ordering::Greater => 1,
                std::cmp::Ordering::Less => -1,
                std::cmp::Ordering::Equal => 0,
            };
        }
    }
    s as f64 / (x.len() * y.len()) as f64
}

pub fn commit(id: &str, author: &str, ts: i64, msg: &str, changes: Vec<FileChange>) -> CommitRecord {
    CommitRecord {
        commit_id: id.into(),
        author_id: author.into(),
        timestamp: ts,
        message: msg.into(),
        changes,
    }
}

/// Runs labeling and metrics on a synthetic repository in memory.
pub fn synthetic_table(repo: &SyntheticRepo) -> Vec<MetricVector> {
    let store = FileIssueStore::from_pairs(repo.issues.clone());
    let labels = label_commits(&repo.commits, &store, &Ruleset::default(), &[]).unwrap();
    let iac = IacMatcher::default();
    let classes = label_scripts(&labels, &repo.commits, &iac).unwrap();
    metric_table(
        &Dataset {
            commits: repo.commits.clone(),
            classes,
            iac,
        },
        MetricOptions::default(),
    )
    .unwrap()
}

/// The three prediction feature sets of a synthetic repository.
pub fn synthetic_feature_sets(repo: &SyntheticRepo) -> BTreeMap<String, FeatureMatrix> {
    let table = synthetic_table(repo);
    let corpus = ScriptCorpus::from_texts(repo.texts.clone());
    build_feature_sets(&table, &corpus.bow_table(), &corpus.quality_table()).unwrap()
}

pub fn scripts(names: &[&str]) -> BTreeSet<String> {
    names.iter().map(|s| s.to_string()).collect()
}
