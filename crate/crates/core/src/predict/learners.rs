//! The four statistical learners: CART, logistic regression, Gaussian naive
//! Bayes and random forest.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::PredictError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum LearnerKind {
    #[serde(rename = "CART")]
    Cart,
    #[serde(rename = "LR")]
    Lr,
    #[serde(rename = "NB")]
    Nb,
    #[serde(rename = "RF")]
    Rf,
}

impl LearnerKind {
    pub const ALL: [LearnerKind; 4] = [LearnerKind::Cart, LearnerKind::Lr, LearnerKind::Nb, LearnerKind::Rf];

    pub fn name(self) -> &'static str {
        match self {
            LearnerKind::Cart => "CART",
            LearnerKind::Lr => "LR",
            LearnerKind::Nb => "NB",
            LearnerKind::Rf => "RF",
        }
    }

    pub fn default_params(self) -> Hyperparams {
        match self {
            LearnerKind::Cart => Hyperparams::Cart(TreeParams::default()),
            LearnerKind::Lr => Hyperparams::Lr { l2: 1e-2 },
            LearnerKind::Nb => Hyperparams::Nb { var_smoothing: 1e-9 },
            LearnerKind::Rf => Hyperparams::Rf(ForestParams::default()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    /// `None` grows until leaves are pure.
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
}

impl Default for TreeParams {
    fn default() -> Self {
        Self {
            max_depth: None,
            min_samples_split: 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    /// Share of features drawn at each node; `None` means √p.
    pub feature_fraction: Option<f64>,
    pub tree: TreeParams,
    /// Draw a bootstrap sample per tree; otherwise every tree sees all rows.
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            n_trees: 100,
            feature_fraction: None,
            tree: TreeParams::default(),
            bootstrap: true,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Hyperparams {
    Cart(TreeParams),
    Lr { l2: f64 },
    Nb { var_smoothing: f64 },
    Rf(ForestParams),
}

impl Hyperparams {
    pub fn kind(&self) -> LearnerKind {
        match self {
            Hyperparams::Cart(_) => LearnerKind::Cart,
            Hyperparams::Lr { .. } => LearnerKind::Lr,
            Hyperparams::Nb { .. } => LearnerKind::Nb,
            Hyperparams::Rf(_) => LearnerKind::Rf,
        }
    }

    /// Sets the random seed for learners that use one.
    pub fn with_seed(self, seed: u64) -> Self {
        match self {
            Hyperparams::Rf(mut f) => {
                f.seed = seed;
                Hyperparams::Rf(f)
            }
            other => other,
        }
    }
}

#[derive(Debug, Clone)]
enum Node {
    Leaf { positive_rate: f64 },
    Split { feature: usize, threshold: f64, left: Box<Node>, right: Box<Node> },
}

#[derive(Debug, Clone)]
pub struct DecisionTree {
    root: Node,
}

fn gini(pos: usize, total: usize) -> f64 {
    if total == 0 {
        return 0.0;
    }
    let p = pos as f64 / total as f64;
    2.0 * p * (1.0 - p)
}

struct TreeBuilder<'a> {
    /// Column-major copy of the training matrix.
    cols: &'a [Vec<f64>],
    y: &'a [bool],
    params: TreeParams,
    max_features: usize,
    rng: Option<ChaCha8Rng>,
    scratch: Vec<(f64, bool)>,
}

fn columns(x: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let p = x[0].len();
    (0..p).map(|j| x.iter().map(|r| r[j]).collect()).collect()
}

impl TreeBuilder<'_> {
    fn candidate_features(&mut self) -> Vec<usize> {
        let p = self.cols.len();
        let mut all: Vec<usize> = (0..p).collect();
        match &mut self.rng {
            Some(rng) if self.max_features < p => {
                all.shuffle(rng);
                all.truncate(self.max_features);
                all.sort_unstable();
                all
            }
            _ => all,
        }
    }

    fn build(&mut self, rows: &mut [usize], depth: usize) -> Node {
        let pos = rows.iter().filter(|&&r| self.y[r]).count();
        let rate = pos as f64 / rows.len() as f64;
        let leaf = Node::Leaf { positive_rate: rate };
        if pos == 0 || pos == rows.len() || rows.len() < self.params.min_samples_split.max(2) {
            return leaf;
        }
        if self.params.max_depth.is_some_and(|d| depth >= d) {
            return leaf;
        }
        let parent = gini(pos, rows.len());
        let n = rows.len();
        let mut best: Option<(f64, usize, f64)> = None;
        for feature in self.candidate_features() {
            let col = &self.cols[feature];
            self.scratch.clear();
            self.scratch.extend(rows.iter().map(|&r| (col[r], self.y[r])));
            self.scratch.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
            let mut left_pos = 0;
            for i in 1..n {
                if self.scratch[i - 1].1 {
                    left_pos += 1;
                }
                let (lo, hi) = (self.scratch[i - 1].0, self.scratch[i].0);
                if lo == hi {
                    continue;
                }
                let impurity = (i as f64 * gini(left_pos, i) + (n - i) as f64 * gini(pos - left_pos, n - i)) / n as f64;
                let gain = parent - impurity;
                if best.is_none_or(|(g, _, _)| gain > g + 1e-15) {
                    best = Some((gain, feature, lo + (hi - lo) / 2.0));
                }
            }
        }
        let Some((gain, feature, threshold)) = best else {
            return leaf;
        };
        if gain <= 0.0 && self.params.max_depth.is_some() {
            return leaf;
        }
        let col = &self.cols[feature];
        let mut split = 0;
        for i in 0..n {
            if col[rows[i]] <= threshold {
                rows.swap(i, split);
                split += 1;
            }
        }
        let (left_rows, right_rows) = rows.split_at_mut(split);
        let left = self.build(left_rows, depth + 1);
        let right = self.build(right_rows, depth + 1);
        Node::Split {
            feature,
            threshold,
            left: Box::new(left),
            right: Box::new(right),
        }
    }
}

impl DecisionTree {
    fn fit_rows(
        cols: &[Vec<f64>],
        y: &[bool],
        rows: &mut [usize],
        params: TreeParams,
        max_features: usize,
        rng: Option<ChaCha8Rng>,
    ) -> Self {
        let mut builder = TreeBuilder {
            cols,
            y,
            params,
            max_features,
            rng,
            scratch: Vec::with_capacity(rows.len()),
        };
        Self {
            root: builder.build(rows, 0),
        }
    }

    pub fn fit(x: &[Vec<f64>], y: &[bool], params: TreeParams) -> Self {
        let mut rows: Vec<usize> = (0..x.len()).collect();
        let cols = columns(x);
        Self::fit_rows(&cols, y, &mut rows, params, cols.len(), None)
    }

    pub fn positive_rate(&self, row: &[f64]) -> f64 {
        let mut node = &self.root;
        loop {
            match node {
                Node::Leaf { positive_rate } => return *positive_rate,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => node = if row[*feature] <= *threshold { left } else { right },
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn d(n: &Node) -> usize {
            match n {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + d(left).max(d(right)),
            }
        }
        d(&self.root)
    }
}

#[derive(Debug, Clone)]
pub struct RandomForest {
    trees: Vec<DecisionTree>,
}

impl RandomForest {
    pub fn fit(x: &[Vec<f64>], y: &[bool], params: ForestParams) -> Self {
        let n = x.len();
        let p = x[0].len();
        let max_features = match params.feature_fraction {
            Some(f) => ((f * p as f64).ceil() as usize).clamp(1, p),
            None => ((p as f64).sqrt().round() as usize).clamp(1, p),
        };
        let cols = columns(x);
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        let trees = (0..params.n_trees.max(1))
            .map(|_| {
                let mut rows: Vec<usize> = if params.bootstrap {
                    (0..n).map(|_| rng.gen_range(0..n)).collect()
                } else {
                    (0..n).collect()
                };
                let tree_rng = ChaCha8Rng::seed_from_u64(rng.gen());
                DecisionTree::fit_rows(&cols, y, &mut rows, params.tree, max_features, Some(tree_rng))
            })
            .collect();
        Self { trees }
    }

    /// Share of trees voting defective.
    pub fn vote(&self, row: &[f64]) -> f64 {
        let votes = self.trees.iter().filter(|t| t.positive_rate(row) > 0.5).count();
        votes as f64 / self.trees.len() as f64
    }
}

/// L2-regularized logistic regression fit by batch gradient ascent on
/// standardized features.
#[derive(Debug, Clone)]
pub struct LogisticRegression {
    mean: Vec<f64>,
    scale: Vec<f64>,
    weights: Vec<f64>,
    bias: f64,
}

const LR_ITERATIONS: usize = 500;
const LR_STEP: f64 = 0.5;
const LR_TOLERANCE: f64 = 1e-8;

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

impl LogisticRegression {
    pub fn fit(x: &[Vec<f64>], y: &[bool], l2: f64) -> Self {
        let n = x.len() as f64;
        let p = x[0].len();
        let mean: Vec<f64> = (0..p).map(|j| x.iter().map(|r| r[j]).sum::<f64>() / n).collect();
        let scale: Vec<f64> = (0..p)
            .map(|j| {
                let var = x.iter().map(|r| (r[j] - mean[j]).powi(2)).sum::<f64>() / n;
                if var > 0.0 {
                    var.sqrt()
                } else {
                    1.0
                }
            })
            .collect();
        let z: Vec<Vec<f64>> = x
            .iter()
            .map(|r| (0..p).map(|j| (r[j] - mean[j]) / scale[j]).collect())
            .collect();
        let mut w = vec![0.0; p];
        let mut b = 0.0;
        for _ in 0..LR_ITERATIONS {
            let mut gw = vec![0.0; p];
            let mut gb = 0.0;
            for (row, &label) in z.iter().zip(y) {
                let pred = sigmoid(b + row.iter().zip(&w).map(|(a, c)| a * c).sum::<f64>());
                let err = f64::from(u8::from(label)) - pred;
                gb += err;
                for j in 0..p {
                    gw[j] += err * row[j];
                }
            }
            let mut norm = (gb / n).powi(2);
            b += LR_STEP * gb / n;
            for j in 0..p {
                let g = gw[j] / n - l2 * w[j];
                norm += g * g;
                w[j] += LR_STEP * g;
            }
            if norm < LR_TOLERANCE * LR_TOLERANCE {
                break;
            }
        }
        Self {
            mean,
            scale,
            weights: w,
            bias: b,
        }
    }

    pub fn probability(&self, row: &[f64]) -> f64 {
        let z: f64 = row
            .iter()
            .enumerate()
            .map(|(j, v)| (v - self.mean[j]) / self.scale[j] * self.weights[j])
            .sum();
        sigmoid(self.bias + z)
    }
}

/// Gaussian naive Bayes with variance smoothing.
#[derive(Debug, Clone)]
pub struct GaussianNb {
    log_prior: [f64; 2],
    mean: [Vec<f64>; 2],
    var: [Vec<f64>; 2],
}

impl GaussianNb {
    pub fn fit(x: &[Vec<f64>], y: &[bool], var_smoothing: f64) -> Self {
        let p = x[0].len();
        let n = x.len() as f64;
        let overall_mean: Vec<f64> = (0..p).map(|j| x.iter().map(|r| r[j]).sum::<f64>() / n).collect();
        let max_var = (0..p)
            .map(|j| x.iter().map(|r| (r[j] - overall_mean[j]).powi(2)).sum::<f64>() / n)
            .fold(0.0f64, f64::max);
        let epsilon = var_smoothing * max_var.max(f64::MIN_POSITIVE);
        let mut log_prior = [0.0; 2];
        let mut mean: [Vec<f64>; 2] = [vec![0.0; p], vec![0.0; p]];
        let mut var: [Vec<f64>; 2] = [vec![0.0; p], vec![0.0; p]];
        for class in 0..2 {
            let rows: Vec<&Vec<f64>> = x.iter().zip(y).filter(|(_, &l)| usize::from(l) == class).map(|(r, _)| r).collect();
            let count = rows.len() as f64;
            log_prior[class] = (count / n).ln();
            for j in 0..p {
                let m = rows.iter().map(|r| r[j]).sum::<f64>() / count;
                mean[class][j] = m;
                var[class][j] = rows.iter().map(|r| (r[j] - m).powi(2)).sum::<f64>() / count + epsilon;
            }
        }
        Self { log_prior, mean, var }
    }

    /// Joint log likelihood of each class.
    pub fn log_joint(&self, row: &[f64]) -> [f64; 2] {
        let mut out = self.log_prior;
        for (class, score) in out.iter_mut().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                let var = self.var[class][j];
                *score += -0.5 * (2.0 * std::f64::consts::PI * var).ln() - (v - self.mean[class][j]).powi(2) / (2.0 * var);
            }
        }
        out
    }
}

#[derive(Debug, Clone)]
pub enum Model {
    Cart(DecisionTree),
    Lr(LogisticRegression),
    Nb(GaussianNb),
    Rf(RandomForest),
}

/// Trains a learner. Both classes must be present.
pub fn train(x: &[Vec<f64>], y: &[bool], params: &Hyperparams) -> Result<Model, PredictError> {
    if x.is_empty() || x.len() != y.len() {
        return Err(PredictError::Training("feature rows and labels differ in length or are empty".into()));
    }
    let pos = y.iter().filter(|&&l| l).count();
    if pos == 0 || pos == y.len() {
        return Err(PredictError::Training("training data contains a single class".into()));
    }
    if x[0].is_empty() {
        return Err(PredictError::Training("no features".into()));
    }
    Ok(match *params {
        Hyperparams::Cart(t) => Model::Cart(DecisionTree::fit(x, y, t)),
        Hyperparams::Lr { l2 } => Model::Lr(LogisticRegression::fit(x, y, l2)),
        Hyperparams::Nb { var_smoothing } => Model::Nb(GaussianNb::fit(x, y, var_smoothing)),
        Hyperparams::Rf(f) => Model::Rf(RandomForest::fit(x, y, f)),
    })
}

impl Model {
    pub fn predict_one(&self, row: &[f64]) -> bool {
        match self {
            Model::Cart(t) => t.positive_rate(row) > 0.5,
            Model::Lr(m) => m.probability(row) >= 0.5,
            Model::Nb(m) => {
                let [neg, pos] = m.log_joint(row);
                pos > neg
            }
            Model::Rf(f) => f.vote(row) > 0.5,
        }
    }

    pub fn predict(&self, x: &[Vec<f64>]) -> Vec<bool> {
        x.iter().map(|r| self.predict_one(r)).collect()
    }
}

pub fn predict(model: &Model, x: &[Vec<f64>]) -> Vec<bool> {
    model.predict(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_class_rejected() {
        let x = vec![vec![1.0], vec![2.0]];
        for kind in LearnerKind::ALL {
            assert!(matches!(
                train(&x, &[true, true], &kind.default_params()),
                Err(PredictError::Training(_))
            ));
        }
    }

    #[test]
    fn naive_bayes_matches_hand_posterior() {
        // class 0: {0, 2} mean 1 var 1; class 1: {4, 8} mean 6 var 4
        let x = vec![vec![0.0], vec![2.0], vec![4.0], vec![8.0]];
        let y = [false, false, true, true];
        let nb = GaussianNb::fit(&x, &y, 0.0);
        let log_pdf = |v: f64, m: f64, s2: f64| -0.5 * (2.0 * std::f64::consts::PI * s2).ln() - (v - m).powi(2) / (2.0 * s2);
        for v in [0.5, 3.0, 3.5, 5.0] {
            let hand0 = 0.5f64.ln() + log_pdf(v, 1.0, 1.0);
            let hand1 = 0.5f64.ln() + log_pdf(v, 6.0, 4.0);
            let [a, b] = nb.log_joint(&[v]);
            assert!((a - hand0).abs() < 1e-12 && (b - hand1).abs() < 1e-12);
            assert_eq!(Model::Nb(nb.clone()).predict_one(&[v]), hand1 > hand0);
        }
    }

    #[test]
    fn unbounded_tree_fits_training_data() {
        let x: Vec<Vec<f64>> = (0..40).map(|i| vec![(i * 7 % 13) as f64, (i * 3 % 5) as f64]).collect();
        let y: Vec<bool> = (0..40).map(|i| (i * 11) % 3 == 0).collect();
        // make labels consistent with feature vectors
        let mut seen = std::collections::HashMap::new();
        let y: Vec<bool> = x
            .iter()
            .zip(&y)
            .map(|(r, &l)| *seen.entry(format!("{r:?}")).or_insert(l))
            .collect();
        let model = train(&x, &y, &LearnerKind::Cart.default_params()).unwrap();
        assert_eq!(model.predict(&x), y);
    }

    #[test]
    fn depth_limit_respected() {
        let x: Vec<Vec<f64>> = (0..32).map(|i| vec![i as f64]).collect();
        let y: Vec<bool> = (0..32).map(|i| i % 2 == 0).collect();
        let t = DecisionTree::fit(
            &x,
            &y,
            TreeParams {
                max_depth: Some(3),
                min_samples_split: 2,
            },
        );
        assert!(t.depth() <= 3);
    }

    #[test]
    fn one_tree_full_bag_forest_equals_cart() {
        let x: Vec<Vec<f64>> = (0..50)
            .map(|i| vec![(i * 13 % 17) as f64, (i * 5 % 11) as f64, (i % 4) as f64])
            .collect();
        let y: Vec<bool> = (0..50).map(|i| (i * 13 % 17) + (i % 4) > 9).collect();
        let cart = train(&x, &y, &LearnerKind::Cart.default_params()).unwrap();
        let rf = train(
            &x,
            &y,
            &Hyperparams::Rf(ForestParams {
                n_trees: 1,
                feature_fraction: Some(1.0),
                tree: TreeParams::default(),
                bootstrap: false,
                seed: 42,
            }),
        )
        .unwrap();
        let probe: Vec<Vec<f64>> = (0..200)
            .map(|i| vec![(i % 18) as f64 - 0.5, (i % 12) as f64 * 0.9, (i % 5) as f64])
            .collect();
        assert_eq!(cart.predict(&probe), rf.predict(&probe));
    }

    #[test]
    fn logistic_regression_separates_blobs() {
        let mut x = Vec::new();
        let mut y = Vec::new();
        for i in 0..30 {
            let jitter = (i as f64 * 0.37).sin() * 0.3;
            x.push(vec![-3.0 + jitter, 1.0 - jitter]);
            y.push(false);
            x.push(vec![3.0 - jitter, -1.0 + jitter]);
            y.push(true);
        }
        let m = train(&x, &y, &LearnerKind::Lr.default_params()).unwrap();
        assert_eq!(m.predict(&x), y);
    }
}
