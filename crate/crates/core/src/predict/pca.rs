//! Principal component analysis by eigendecomposition.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::Serialize;

use super::PredictError;

/// Share of total variance the retained components must explain.
pub const VARIANCE_TARGET: f64 = 0.95;

#[derive(Debug, Clone, Serialize)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    /// Principal axes as columns (features x components), all non-null
    /// components in decreasing variance order.
    #[serde(skip)]
    pub basis: DMatrix<f64>,
    pub retained_count: usize,
    pub explained_variance_ratio: Vec<f64>,
}

fn to_matrix(rows: &[Vec<f64>]) -> DMatrix<f64> {
    let n = rows.len();
    let p = rows.first().map_or(0, Vec::len);
    DMatrix::from_fn(n, p, |i, j| rows[i][j])
}

/// Fits PCA on the rows of `data`, retaining the smallest number of
/// components whose cumulative explained variance reaches 95%.
///
/// The eigenproblem is solved on the covariance matrix when there are no
/// more features than rows, otherwise on the (smaller) Gram matrix of the
/// centered rows; both share their non-zero spectrum.
pub fn pca_fit(data: &[Vec<f64>]) -> Result<PcaModel, PredictError> {
    let n = data.len();
    if n < 2 {
        return Err(PredictError::TooFewRows { needed: 2, got: n });
    }
    let x = to_matrix(data);
    let p = x.ncols();
    let mean: DVector<f64> = x.row_mean().transpose();
    let centered = DMatrix::from_fn(n, p, |i, j| x[(i, j)] - mean[j]);
    let denom = (n - 1) as f64;

    let (values, vectors) = if p <= n {
        let cov = centered.transpose() * &centered / denom;
        let eig = SymmetricEigen::new(cov);
        (eig.eigenvalues, eig.eigenvectors)
    } else {
        let gram = &centered * centered.transpose() / denom;
        let eig = SymmetricEigen::new(gram);
        let axes = centered.transpose() * &eig.eigenvectors;
        (eig.eigenvalues, axes)
    };

    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
    let total: f64 = values.iter().map(|v| v.max(0.0)).sum();
    let scale = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if total <= 0.0 || !total.is_finite() {
        return Err(PredictError::Degenerate("feature matrix has zero variance".into()));
    }
    let tol = scale * 1e-12 * (n.max(p) as f64);
    let kept: Vec<usize> = order.into_iter().filter(|&i| values[i] > tol).collect();

    let mut basis = DMatrix::zeros(p, kept.len());
    let mut ratios = Vec::with_capacity(kept.len());
    for (col, &i) in kept.iter().enumerate() {
        let mut axis = vectors.column(i).clone_owned();
        let norm = axis.norm();
        axis /= norm;
        // deterministic sign: largest-magnitude loading positive
        let pivot = axis.iter().copied().fold(0.0f64, |m, v| if v.abs() > m.abs() { v } else { m });
        if pivot < 0.0 {
            axis.neg_mut();
        }
        basis.set_column(col, &axis);
        ratios.push(values[i] / total);
    }

    let mut cumulative = 0.0;
    let mut retained = ratios.len();
    for (k, r) in ratios.iter().enumerate() {
        cumulative += r;
        if cumulative >= VARIANCE_TARGET {
            retained = k + 1;
            break;
        }
    }
    Ok(PcaModel {
        mean: mean.iter().copied().collect(),
        basis,
        retained_count: retained,
        explained_variance_ratio: ratios,
    })
}

impl PcaModel {
    pub fn retained_variance(&self) -> f64 {
        self.explained_variance_ratio[..self.retained_count].iter().sum()
    }

    /// Projects rows onto the retained components.
    pub fn transform(&self, data: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let k = self.retained_count;
        data.iter()
            .map(|row| {
                (0..k)
                    .map(|c| {
                        row.iter()
                            .zip(&self.mean)
                            .enumerate()
                            .map(|(j, (v, m))| (v - m) * self.basis[(j, c)])
                            .sum()
                    })
                    .collect()
            })
            .collect()
    }

    /// Maps projected rows back to feature space.
    pub fn inverse_transform(&self, scores: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let p = self.mean.len();
        scores
            .iter()
            .map(|z| {
                (0..p)
                    .map(|j| self.mean[j] + z.iter().enumerate().map(|(c, s)| s * self.basis[(j, c)]).sum::<f64>())
                    .collect()
            })
            .collect()
    }
}

pub fn pca_transform(model: &PcaModel, data: &[Vec<f64>]) -> Vec<Vec<f64>> {
    model.transform(data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rank_one_data_keeps_one_component() {
        let dir = [1.0, -2.0, 0.5];
        let data: Vec<Vec<f64>> = (0..12)
            .map(|i| dir.iter().map(|d| 3.0 + d * (i as f64 - 4.0)).collect())
            .collect();
        let m = pca_fit(&data).unwrap();
        assert_eq!(m.retained_count, 1);
        assert!((m.retained_variance() - 1.0).abs() < 1e-9);
        let back = m.inverse_transform(&m.transform(&data));
        for (a, b) in data.iter().zip(&back) {
            for (x, y) in a.iter().zip(b) {
                assert!((x - y).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn zero_variance_is_degenerate() {
        let data = vec![vec![1.0, 2.0]; 5];
        assert!(matches!(pca_fit(&data), Err(PredictError::Degenerate(_))));
        assert!(matches!(pca_fit(&[vec![1.0]]), Err(PredictError::TooFewRows { .. })));
    }

    #[test]
    fn wide_and_tall_routes_agree() {
        // 4 rows, 6 features (Gram route) vs the transposed problem's spectrum
        let data = vec![
            vec![1.0, 0.0, 2.0, 3.0, 0.0, 1.0],
            vec![0.0, 1.0, 1.0, 0.0, 2.0, 2.0],
            vec![2.0, 2.0, 0.0, 1.0, 1.0, 0.0],
            vec![1.0, 3.0, 1.0, 2.0, 0.0, 1.0],
        ];
        let wide = pca_fit(&data).unwrap();
        // duplicate rows double n but keep covariance directions; spectrum ratios equal
        let tall_data: Vec<Vec<f64>> = data.iter().chain(&data).chain(&data).cloned().collect();
        let tall = pca_fit(&tall_data).unwrap();
        assert_eq!(wide.explained_variance_ratio.len(), tall.explained_variance_ratio.len());
        for (a, b) in wide.explained_variance_ratio.iter().zip(&tall.explained_variance_ratio) {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
        for c in 0..wide.basis.ncols() {
            let dot: f64 = wide.basis.column(c).dot(&tall.basis.column(c));
            assert!((dot.abs() - 1.0).abs() < 1e-9);
        }
    }
}
