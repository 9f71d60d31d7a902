use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Principal axes of a centered training matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Pca {
    /// `k x dims`, orthonormal rows ordered by decreasing variance.
    pub components: Tensor,
    pub mean: Vec<f64>,
    /// Sample variance (denominator `n - 1`) along each component.
    pub explained_variance: Vec<f64>,
}

/// Fits the top-`k` principal components by SVD of the centered rows.
///
/// Each component's largest-magnitude entry is made positive so repeated
/// fits give bit-identical transforms.
pub fn fit_pca(rows: &Tensor, k: usize) -> Result<Pca> {
    let (n, d) = (rows.rows(), rows.cols());
    if n < 2 {
        return Err(Error::Dimension(format!("PCA needs at least 2 rows, got {n}")));
    }
    let max = n.min(d);
    if k == 0 || k > max {
        return Err(Error::Rank { requested: k, max });
    }
    let mut mean = vec![0.0; d];
    for r in 0..n {
        for (m, v) in mean.iter_mut().zip(rows.row(r)) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    let centered = DMatrix::from_fn(n, d, |r, c| rows.get(r, c) - mean[c]);
    let svd = centered.svd(false, true);
    let v_t = svd.v_t.expect("v_t requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]).then(a.cmp(&b)));

    let mut comps = Vec::with_capacity(k * d);
    let mut explained = Vec::with_capacity(k);
    for &i in order.iter().take(k) {
        let mut axis: Vec<f64> = v_t.row(i).iter().copied().collect();
        let pivot = axis
            .iter()
            .enumerate()
            .fold((0, 0.0f64), |(bi, bv), (j, &v)| if v.abs() > bv.abs() { (j, v) } else { (bi, bv) })
            .1;
        if pivot < 0.0 {
            axis.iter_mut().for_each(|v| *v = -*v);
        }
        comps.extend(axis);
        let s = svd.singular_values[i];
        explained.push(s * s / (n - 1) as f64);
    }
    Ok(Pca {
        components: Tensor::matrix(k, d, comps)?,
        mean,
        explained_variance: explained,
    })
}

impl Pca {
    pub fn k(&self) -> usize {
        self.components.rows()
    }

    pub fn dims(&self) -> usize {
        self.components.cols()
    }

    /// Projects rows onto the fitted components: `(x - mean) C^T`.
    pub fn apply(&self, rows: &Tensor) -> Result<Tensor> {
        if rows.cols() != self.dims() {
            return Err(Error::Dimension(format!(
                "PCA fitted on width {}, got width {}",
                self.dims(),
                rows.cols()
            )));
        }
        let (n, k, d) = (rows.rows(), self.k(), self.dims());
        let mut out = Vec::with_capacity(n * k);
        let mut centered = vec![0.0; d];
        for r in 0..n {
            for ((c, x), m) in centered.iter_mut().zip(rows.row(r)).zip(&self.mean) {
                *c = x - m;
            }
            for j in 0..k {
                out.push(centered.iter().zip(self.components.row(j)).map(|(a, b)| a * b).sum());
            }
        }
        Tensor::matrix(n, k, out)
    }

    /// Maps projected rows back to the centered input space.
    pub fn reconstruct_centered(&self, projected: &Tensor) -> Result<Tensor> {
        projected.matmul(&self.components)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(n: usize, d: usize, seed: u64) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor::matrix(n, d, (0..n * d).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    /// Covariance of the projected data, computed directly.
    fn projected_covariance(p: &Tensor) -> Vec<Vec<f64>> {
        let (n, k) = (p.rows(), p.cols());
        let means: Vec<f64> = (0..k).map(|j| (0..n).map(|r| p.get(r, j)).sum::<f64>() / n as f64).collect();
        (0..k)
            .map(|a| {
                (0..k)
                    .map(|b| {
                        (0..n)
                            .map(|r| (p.get(r, a) - means[a]) * (p.get(r, b) - means[b]))
                            .sum::<f64>()
                            / (n - 1) as f64
                    })
                    .collect()
            })
            .collect()
    }

    #[test]
    fn collinear_points_have_one_component() {
        let rows = Tensor::matrix(4, 2, vec![0.0, 0.0, 1.0, 2.0, 2.0, 4.0, 3.0, 6.0]).unwrap();
        let p = fit_pca(&rows, 2).unwrap();
        let total: f64 = p.explained_variance.iter().sum();
        assert!((p.explained_variance[0] / total - 1.0).abs() < 1e-12);
        let c = p.components.row(0);
        assert!((c[0] - 1.0 / 5f64.sqrt()).abs() < 1e-12 && (c[1] - 2.0 / 5f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn projected_covariance_is_diagonal_and_matches_explained() {
        let rows = random(50, 10, 1);
        let p = fit_pca(&rows, 10).unwrap();
        let proj = p.apply(&rows).unwrap();
        let cov = projected_covariance(&proj);
        for a in 0..10 {
            for b in 0..10 {
                if a == b {
                    assert!((cov[a][a] - p.explained_variance[a]).abs() < 1e-6);
                } else {
                    assert!(cov[a][b].abs() < 1e-8, "cov[{a}][{b}] = {}", cov[a][b]);
                }
            }
        }
        assert!(p.explained_variance.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn full_rank_reconstructs_centered_data() {
        let rows = random(20, 6, 2);
        let p = fit_pca(&rows, 6).unwrap();
        let back = p.reconstruct_centered(&p.apply(&rows).unwrap()).unwrap();
        for r in 0..20 {
            for c in 0..6 {
                assert!((back.get(r, c) - (rows.get(r, c) - p.mean[c])).abs() < 1e-8);
            }
        }
        for a in 0..6 {
            for b in 0..6 {
                let dot: f64 = p.components.row(a).iter().zip(p.components.row(b)).map(|(x, y)| x * y).sum();
                assert!((dot - if a == b { 1.0 } else { 0.0 }).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn mean_projects_to_zero_and_errors() {
        let rows = random(8, 3, 3);
        let p = fit_pca(&rows, 2).unwrap();
        let m = Tensor::row_vector(p.mean.clone());
        assert!(p.apply(&m).unwrap().data().iter().all(|v| v.abs() < 1e-15));
        assert!(matches!(fit_pca(&rows, 4), Err(Error::Rank { .. })));
        assert!(p.apply(&random(2, 4, 0)).is_err());
        let again = fit_pca(&rows, 2).unwrap();
        assert_eq!(again, p);
    }
}
