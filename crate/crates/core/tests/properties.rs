mod common;

use std::collections::BTreeSet;

use proptest::collection::vec;
use proptest::prelude::*;

use devminer::antipatterns::{flag_antipatterns, quantile, ThresholdConfig};
use devminer::ingest::{log_export_string, parse_log_export, summarize, FileChange, IacMatcher};
use devminer::labeling::cohens_kappa;
use devminer::metrics::{
    attribute_lines, developer_count, highest_contrib_code, minor_contributors, scatteredness, script_histories,
    table_from_csv, table_to_csv,
};
use devminer::networks::{ContributionNetwork, DeveloperNetwork};
use devminer::predict::{pca_fit, stratified_folds, FoldScore};
use devminer::stats::{cliffs_delta_value, log1p_transform, mann_whitney_one_sided, Direction, Magnitude};
use devminer::synth::{generate, SynthOptions};

use common::*;

fn sample() -> impl Strategy<Value = Vec<f64>> {
    vec((0u8..20).prop_map(f64::from), 1..25)
}

fn edges(max_nodes: usize) -> impl Strategy<Value = (usize, Vec<(usize, usize)>)> {
    (2..=max_nodes).prop_flat_map(|n| {
        let pairs: Vec<(usize, usize)> = (0..n).flat_map(|a| (a + 1..n).map(move |b| (a, b))).collect();
        let len = pairs.len();
        (Just(n), proptest::sample::subsequence(pairs, 0..=len))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn p_values_are_probabilities_and_directions_cover(x in sample(), y in sample()) {
        let g = mann_whitney_one_sided("m", &x, &y, Direction::DefectiveGreater).unwrap();
        let l = mann_whitney_one_sided("m", &x, &y, Direction::NeutralGreater).unwrap();
        prop_assert!((0.0..=1.0).contains(&g.p_value));
        prop_assert!((0.0..=1.0).contains(&l.p_value));
        // P(U >= u) + P(U <= u) >= 1 for any discrete or corrected-normal tail pair
        prop_assert!(g.p_value + l.p_value >= 1.0 - 1e-9);
        prop_assert_eq!(g.significant, g.p_value < 0.01);
    }

    #[test]
    fn cliffs_delta_is_bounded_and_antisymmetric(x in sample(), y in sample()) {
        let d = cliffs_delta_value(&x, &y).unwrap();
        prop_assert!((-1.0..=1.0).contains(&d));
        prop_assert_eq!(d, -cliffs_delta_value(&y, &x).unwrap());
        prop_assert_eq!(d, cliffs_oracle(&x, &y));
        let m = Magnitude::from_delta(d);
        prop_assert_eq!(m, Magnitude::from_delta(-d));
    }

    #[test]
    fn log1p_is_monotone(x in vec(0.0f64..1e6, 1..30)) {
        let t = log1p_transform(&x).unwrap();
        for (a, b) in x.iter().zip(&t) {
            prop_assert!((b - a.ln_1p()).abs() < 1e-12);
        }
    }

    #[test]
    fn normalized_edge_betweenness_in_unit_interval((n, e) in edges(9)) {
        let net = DeveloperNetwork::from_edges(n, &e);
        let norm = net.edge_betweenness();
        let raw = net.raw_edge_betweenness();
        prop_assert_eq!(norm.len(), e.len());
        for v in norm.values() {
            prop_assert!((0.0..=1.0 + 1e-12).contains(v));
        }
        // every shortest path of length d spreads exactly d units over edges
        let weighted: Vec<_> = e.iter().map(|&(a, b)| (a, b, 1u64)).collect();
        let dist = floyd_warshall(n, &weighted);
        let want: u64 = (0..n)
            .flat_map(|a| (a + 1..n).map(move |b| (a, b)))
            .filter_map(|(a, b)| (dist[a][b] != u64::MAX).then_some(dist[a][b]))
            .sum();
        let got: f64 = raw.values().sum();
        prop_assert!((got - want as f64).abs() < 1e-9);
    }

    #[test]
    fn script_betweenness_is_non_negative_and_bounded(
        raw in vec((0usize..4, 0usize..4, 1u64..5), 1..12)
    ) {
        let named: Vec<_> = raw.iter().map(|&(d, s, w)| (format!("d{d}"), format!("s{s}"), w)).collect();
        let mut seen = BTreeSet::new();
        let named: Vec<_> = named.into_iter().filter(|(d, s, _)| seen.insert((d.clone(), s.clone()))).collect();
        let net = ContributionNetwork::from_weighted_edges(&named);
        let devs = net.developers.len() as f64;
        for v in net.script_betweenness().values() {
            prop_assert!(*v >= 0.0);
            prop_assert!(*v <= devs * (devs - 1.0) / 2.0 + 1e-12);
        }
    }

    #[test]
    fn synthetic_ownership_invariants(seed in 0u64..500, scripts in 3usize..15, violators in 0usize..3) {
        let repo = generate(&SynthOptions { scripts, violators, seed, ..SynthOptions::default() });
        for (path, h) in script_histories(&repo.commits, &IacMatcher::default()) {
            let attr = attribute_lines(&h).unwrap();
            let devs = developer_count(&h);
            let hc = highest_contrib_code(&attr).unwrap();
            let minors = minor_contributors(&attr, &h).unwrap();
            prop_assert!(devs >= 1);
            prop_assert!(hc > 0.0 && hc <= 1.0, "{}: {}", path, hc);
            prop_assert!(minors <= devs);
            prop_assert!(scatteredness(&h).unwrap() >= 0.0);
            let authors = h.authors();
            prop_assert!(attr.per_line_author.iter().all(|a| authors.contains(a.as_str())));
            let total: f64 = attr.ownership().values().sum();
            prop_assert!((total - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn log_export_round_trips(seed in 0u64..200) {
        let repo = generate(&SynthOptions { scripts: 6, seed, ..SynthOptions::default() });
        let text = log_export_string(&repo.commits);
        let back = parse_log_export(text.as_bytes()).unwrap();
        prop_assert_eq!(back, repo.commits.clone());
        let paths: BTreeSet<String> = repo.texts.keys().cloned().chain(["README.md".to_string()]).collect();
        let s = summarize("r".into(), repo.commits, &paths, &IacMatcher::default()).unwrap();
        prop_assert!(s.iac_files <= s.total_files);
    }

    #[test]
    fn metric_table_csv_round_trips(seed in 0u64..100) {
        let repo = generate(&SynthOptions { scripts: 8, violators: 1, seed, ..SynthOptions::default() });
        let table = synthetic_table(&repo);
        let back = table_from_csv(table_to_csv(&table).as_bytes()).unwrap();
        prop_assert_eq!(back, table);
    }

    #[test]
    fn five_flags_per_script_and_quantile_within_range(seed in 0u64..100, q in 0.05f64..0.95) {
        let repo = generate(&SynthOptions { scripts: 10, violators: 2, seed, ..SynthOptions::default() });
        let table = synthetic_table(&repo);
        let cfg = ThresholdConfig { disjointness_quantile: q, unfocused_quantile: q, ..ThresholdConfig::default() };
        let flags = flag_antipatterns(&table, &cfg).unwrap();
        prop_assert_eq!(flags.len(), table.len() * 5);
        let values: Vec<f64> = table.iter().map(|m| m.disjointness).collect();
        let t = quantile(&values, q).unwrap();
        let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(t >= lo && t <= hi);
        prop_assert!(quantile(&values, q / 2.0).unwrap() <= t);
    }

    #[test]
    fn kappa_is_symmetric_and_perfect_on_self(a in vec(any::<bool>(), 1..40), flip in vec(any::<bool>(), 40)) {
        let b: Vec<bool> = a.iter().zip(&flip).map(|(x, f)| x ^ f).collect();
        prop_assert_eq!(cohens_kappa(&a, &a).unwrap(), 1.0);
        let k = cohens_kappa(&a, &b).unwrap();
        prop_assert_eq!(k, cohens_kappa(&b, &a).unwrap());
        prop_assert!(k <= 1.0 + 1e-12 && k >= -1.0 - 1e-12);
    }

    #[test]
    fn f_measure_lies_between_precision_and_recall(pairs in vec((any::<bool>(), any::<bool>()), 1..60)) {
        let (p, a): (Vec<bool>, Vec<bool>) = pairs.into_iter().unzip();
        let s = FoldScore::from_predictions(&p, &a);
        prop_assert!((0.0..=1.0).contains(&s.precision) && (0.0..=1.0).contains(&s.recall));
        if s.precision + s.recall > 0.0 {
            prop_assert!((s.f1 - 2.0 * s.precision * s.recall / (s.precision + s.recall)).abs() < 1e-12);
            prop_assert!(s.f1 <= s.precision.max(s.recall) + 1e-12);
            prop_assert!(s.f1 >= s.precision.min(s.recall) - 1e-12);
        } else {
            prop_assert_eq!(s.f1, 0.0);
        }
    }

    #[test]
    fn stratified_folds_partition_rows(labels in vec(any::<bool>(), 4..80), k in 2usize..10, seed in any::<u64>()) {
        let pos = labels.iter().filter(|&&l| l).count();
        prop_assume!(pos >= 2 && labels.len() - pos >= 2 && labels.len() >= k);
        let folds = stratified_folds(&labels, k, seed).unwrap();
        prop_assert_eq!(folds.len(), k);
        let mut all: Vec<usize> = folds.iter().flatten().copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..labels.len()).collect::<Vec<_>>());
        // positives are dealt round-robin: fold counts differ by at most one
        let counts: Vec<usize> = folds.iter().map(|f| f.iter().filter(|&&i| labels[i]).count()).collect();
        prop_assert!(counts.iter().max().unwrap() - counts.iter().min().unwrap() <= 1);
        prop_assert_eq!(folds, stratified_folds(&labels, k, seed).unwrap());
    }

    #[test]
    fn pca_components_orthonormal_and_cover_95(rows in 2usize..25, cols in 1usize..30, seed in any::<u64>()) {
        use rand::Rng;
        let mut r = rng(seed);
        let data: Vec<Vec<f64>> = (0..rows).map(|_| (0..cols).map(|_| r.gen_range(-5.0..5.0)).collect()).collect();
        let m = pca_fit(&data).unwrap();
        let kept: f64 = m.explained_variance_ratio[..m.retained_count].iter().sum();
        prop_assert!(kept >= 0.95 - 1e-12);
        prop_assert!(m.retained_count >= 1);
        for i in 0..m.basis.ncols() {
            for j in 0..m.basis.ncols() {
                let dot = m.basis.column(i).dot(&m.basis.column(j));
                let want = if i == j { 1.0 } else { 0.0 };
                prop_assert!((dot - want).abs() < 1e-9, "({}, {}) = {}", i, j, dot);
            }
        }
        prop_assert_eq!(m.transform(&data)[0].len(), m.retained_count);
    }

    #[test]
    fn modified_lines_bounded_by_churn(added in 0u32..30, deleted in 0u32..30, lines in vec(1u32..100, 0..80)) {
        let keep = (added + deleted) as usize;
        let ch = FileChange::new("a.pp", added, deleted, lines.into_iter().take(keep));
        prop_assert!(ch.modified_line_indices.len() <= keep);
    }
}
