//! Repeated stratified k-fold cross-validation and hyperparameter tuning.

use std::collections::{BTreeMap, HashMap};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::de::{decode, differential_evolution, search_space, DEFAULT_BUDGET};
use super::learners::{train, Hyperparams, LearnerKind};
use super::pca::pca_fit;
use super::{median_of, FeatureMatrix, PredictError};

pub const MIN_ROWS: usize = 20;
const INNER_FOLDS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FoldScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// No positive predictions on the fold; precision recorded as 0.
    pub undefined_precision: bool,
}

impl FoldScore {
    /// Scores predictions with the defective class as positive.
    pub fn from_predictions(predicted: &[bool], actual: &[bool]) -> Self {
        let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
        for (&p, &a) in predicted.iter().zip(actual) {
            match (p, a) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fn_ += 1,
                _ => {}
            }
        }
        let undefined_precision = tp + fp == 0;
        let precision = if undefined_precision { 0.0 } else { tp as f64 / (tp + fp) as f64 };
        let recall = if tp + fn_ == 0 { 0.0 } else { tp as f64 / (tp + fn_) as f64 };
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Self {
            precision,
            recall,
            f1,
            undefined_precision,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CvOptions {
    pub repeats: usize,
    pub folds: usize,
    pub tune: bool,
    pub budget: usize,
    pub seed: u64,
}

impl Default for CvOptions {
    fn default() -> Self {
        Self {
            repeats: 10,
            folds: 10,
            tune: true,
            budget: DEFAULT_BUDGET,
            seed: 0,
        }
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives an independent seed for one position of the schedule.
pub fn derive_seed(master: u64, parts: &[u64]) -> u64 {
    parts.iter().fold(splitmix(master), |acc, &p| splitmix(acc ^ splitmix(p)))
}

/// Shuffles each class separately and deals rows round-robin into `k`
/// folds, so every fold gets its share of both classes.
pub fn stratified_folds(labels: &[bool], k: usize, seed: u64) -> Result<Vec<Vec<usize>>, PredictError> {
    if k < 2 {
        return Err(PredictError::InvalidArgument("need at least 2 folds".into()));
    }
    if labels.len() < k {
        return Err(PredictError::TooFewRows {
            needed: k,
            got: labels.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pos: Vec<usize> = (0..labels.len()).filter(|&i| labels[i]).collect();
    let mut neg: Vec<usize> = (0..labels.len()).filter(|&i| !labels[i]).collect();
    if pos.len() < 2 || neg.len() < 2 {
        return Err(PredictError::Data(
            "each class needs at least 2 rows so every training fold contains both".into(),
        ));
    }
    pos.shuffle(&mut rng);
    neg.shuffle(&mut rng);
    let mut folds = vec![Vec::new(); k];
    for (slot, row) in pos.into_iter().chain(neg).enumerate() {
        folds[slot % k].push(row);
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    Ok(folds)
}

fn select(rows: &[Vec<f64>], idx: &[usize]) -> Vec<Vec<f64>> {
    idx.iter().map(|&i| rows[i].clone()).collect()
}

fn complement(n: usize, fold: &[usize]) -> Vec<usize> {
    let mut mask = vec![true; n];
    for &i in fold {
        mask[i] = false;
    }
    (0..n).filter(|&i| mask[i]).collect()
}

fn fit_and_score(
    x_train: &[Vec<f64>],
    y_train: &[bool],
    x_test: &[Vec<f64>],
    y_test: &[bool],
    params: &Hyperparams,
) -> Result<FoldScore, PredictError> {
    let model = train(x_train, y_train, params)?;
    Ok(FoldScore::from_predictions(&model.predict(x_test), y_test))
}

/// Tunes a learner with differential evolution. The objective is the median
/// F-measure of a 3-fold cross-validation on the given training data only.
pub fn de_tune(
    kind: LearnerKind,
    x: &[Vec<f64>],
    y: &[bool],
    budget: usize,
    seed: u64,
) -> Result<Hyperparams, PredictError> {
    if budget < 1 {
        return Err(PredictError::InvalidArgument("tuning budget must be at least 1".into()));
    }
    let folds = match stratified_folds(y, INNER_FOLDS, derive_seed(seed, &[1])) {
        Ok(f) => f,
        Err(PredictError::Data(_)) | Err(PredictError::TooFewRows { .. }) => {
            return Ok(kind.default_params().with_seed(seed))
        }
        Err(e) => return Err(e),
    };
    let splits: Vec<_> = folds
        .iter()
        .map(|test| {
            let train_idx = complement(y.len(), test);
            (
                select(x, &train_idx),
                train_idx.iter().map(|&i| y[i]).collect::<Vec<_>>(),
                select(x, test),
                test.iter().map(|&i| y[i]).collect::<Vec<_>>(),
            )
        })
        .collect();
    let model_seed = derive_seed(seed, &[2]);
    let mut cache: HashMap<String, f64> = HashMap::new();
    let result = differential_evolution(&search_space(kind), budget, derive_seed(seed, &[3]), |point| {
        let params = decode(kind, point).with_seed(model_seed);
        let key = format!("{params:?}");
        if let Some(&s) = cache.get(&key) {
            return s;
        }
        let f: Vec<f64> = splits
            .iter()
            .map(|(xt, yt, xv, yv)| fit_and_score(xt, yt, xv, yv, &params).map_or(0.0, |s| s.f1))
            .collect();
        let s = median_of(&f);
        cache.insert(key, s);
        s
    })?;
    Ok(decode(kind, &result.best).with_seed(model_seed))
}

/// Repeated stratified cross-validation of several learners on one feature
/// matrix. PCA is fit on each training split and shared by the learners.
///
/// Results are ordered repeat-major, fold-minor, and do not depend on the
/// number of worker threads.
pub fn cross_validate(
    matrix: &FeatureMatrix,
    kinds: &[LearnerKind],
    opts: &CvOptions,
) -> Result<BTreeMap<LearnerKind, Vec<FoldScore>>, PredictError> {
    if matrix.len() < MIN_ROWS {
        return Err(PredictError::TooFewRows {
            needed: MIN_ROWS,
            got: matrix.len(),
        });
    }
    if opts.repeats < 1 {
        return Err(PredictError::InvalidArgument("need at least one repeat".into()));
    }
    if opts.tune && opts.budget < 1 {
        return Err(PredictError::InvalidArgument("tuning budget must be at least 1".into()));
    }
    let mut tasks = Vec::with_capacity(opts.repeats * opts.folds);
    for r in 0..opts.repeats {
        let folds = stratified_folds(&matrix.labels, opts.folds, derive_seed(opts.seed, &[r as u64]))?;
        for (f, test) in folds.into_iter().enumerate() {
            tasks.push((r, f, test));
        }
    }
    let n = matrix.len();
    let per_task: Vec<Result<Vec<FoldScore>, PredictError>> = tasks
        .par_iter()
        .map(|(r, f, test)| {
            let train_idx = complement(n, test);
            let y_train: Vec<bool> = train_idx.iter().map(|&i| matrix.labels[i]).collect();
            let y_test: Vec<bool> = test.iter().map(|&i| matrix.labels[i]).collect();
            let pca = pca_fit(&select(&matrix.rows, &train_idx))?;
            let x_train = pca.transform(&select(&matrix.rows, &train_idx));
            let x_test = pca.transform(&select(&matrix.rows, test));
            kinds
                .iter()
                .map(|&kind| {
                    let seed = derive_seed(opts.seed, &[*r as u64, *f as u64, kind as u64 + 100]);
                    let params = if opts.tune {
                        de_tune(kind, &x_train, &y_train, opts.budget, seed)?
                    } else {
                        kind.default_params().with_seed(seed)
                    };
                    fit_and_score(&x_train, &y_train, &x_test, &y_test, &params)
                })
                .collect()
        })
        .collect();
    let mut out: BTreeMap<LearnerKind, Vec<FoldScore>> = kinds.iter().map(|&k| (k, Vec::new())).collect();
    for scores in per_task {
        for (kind, s) in kinds.iter().zip(scores?) {
            out.get_mut(kind).expect("kind present").push(s);
        }
    }
    Ok(out)
}

/// 10 repeats of 10-fold cross-validation for one learner.
pub fn cross_validate_10x10(
    matrix: &FeatureMatrix,
    kind: LearnerKind,
    tune: bool,
    seed: u64,
) -> Result<Vec<FoldScore>, PredictError> {
    let opts = CvOptions {
        tune,
        seed,
        ..CvOptions::default()
    };
    Ok(cross_validate(matrix, &[kind], &opts)?.remove(&kind).unwrap_or_default())
}
