//! Differential evolution (DE/rand/1/bin) and the learner search spaces it
//! tunes.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::learners::{ForestParams, Hyperparams, LearnerKind, TreeParams};
use super::PredictError;

pub const POPULATION: usize = 10;
pub const MUTATION: f64 = 0.75;
pub const CROSSOVER: f64 = 0.3;
pub const DEFAULT_BUDGET: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct DeResult {
    pub best: Vec<f64>,
    pub score: f64,
    pub evaluations: usize,
}

/// Maximizes `objective` over the box `bounds` for `generations` generations.
///
/// Each candidate is clamped to its bounds. Ties keep the incumbent.
pub fn differential_evolution<F>(
    bounds: &[(f64, f64)],
    generations: usize,
    seed: u64,
    mut objective: F,
) -> Result<DeResult, PredictError>
where
    F: FnMut(&[f64]) -> f64,
{
    if generations < 1 {
        return Err(PredictError::InvalidArgument("tuning budget must be at least 1".into()));
    }
    if bounds.is_empty() || bounds.iter().any(|(lo, hi)| !(lo <= hi)) {
        return Err(PredictError::InvalidArgument("invalid search bounds".into()));
    }
    let dims = bounds.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut population: Vec<Vec<f64>> = (0..POPULATION)
        .map(|_| bounds.iter().map(|&(lo, hi)| if lo == hi { lo } else { rng.gen_range(lo..=hi) }).collect())
        .collect();
    let mut scores: Vec<f64> = population.iter().map(|c| objective(c)).collect();
    let mut evaluations = POPULATION;

    for _ in 0..generations {
        for i in 0..POPULATION {
            let mut pick = || loop {
                let k = rng.gen_range(0..POPULATION);
                if k != i {
                    break k;
                }
            };
            let a = pick();
            let b = loop {
                let k = pick();
                if k != a {
                    break k;
                }
            };
            let c = loop {
                let k = pick();
                if k != a && k != b {
                    break k;
                }
            };
            let forced = rng.gen_range(0..dims);
            let trial: Vec<f64> = (0..dims)
                .map(|d| {
                    let (lo, hi) = bounds[d];
                    if d == forced || rng.gen::<f64>() < CROSSOVER {
                        let v = population[a][d] + MUTATION * (population[b][d] - population[c][d]);
                        v.clamp(lo, hi)
                    } else {
                        population[i][d]
                    }
                })
                .collect();
            let s = objective(&trial);
            evaluations += 1;
            if s > scores[i] {
                population[i] = trial;
                scores[i] = s;
            }
        }
    }
    let best = (0..POPULATION)
        .max_by(|&x, &y| scores[x].total_cmp(&scores[y]).then(y.cmp(&x)))
        .expect("population is non-empty");
    Ok(DeResult {
        best: population[best].clone(),
        score: scores[best],
        evaluations,
    })
}

/// Box bounds of a learner's tuning space. Log-scale parameters are searched
/// in log10.
pub fn search_space(kind: LearnerKind) -> Vec<(f64, f64)> {
    match kind {
        LearnerKind::Cart => vec![(1.0, 20.0), (2.0, 20.0)],
        LearnerKind::Rf => vec![(10.0, 150.0), (0.1, 1.0)],
        LearnerKind::Lr => vec![(-4.0, 2.0)],
        LearnerKind::Nb => vec![(-12.0, -3.0)],
    }
}

/// Decodes a point of [`search_space`] into hyperparameters.
pub fn decode(kind: LearnerKind, point: &[f64]) -> Hyperparams {
    match kind {
        LearnerKind::Cart => Hyperparams::Cart(TreeParams {
            max_depth: Some(point[0].round() as usize),
            min_samples_split: point[1].round() as usize,
        }),
        LearnerKind::Rf => Hyperparams::Rf(ForestParams {
            n_trees: point[0].round() as usize,
            feature_fraction: Some(point[1]),
            ..ForestParams::default()
        }),
        LearnerKind::Lr => Hyperparams::Lr { l2: 10f64.powf(point[0]) },
        LearnerKind::Nb => Hyperparams::Nb {
            var_smoothing: 10f64.powf(point[0]),
        },
    }
}
