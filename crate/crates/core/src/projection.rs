//! 2-D projection of embeddings: top-2 principal components via power
//! iteration with deflation on the covariance matrix.

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct Projection {
    /// 2 x dim orthonormal axes.
    pub axes: Array2<f64>,
    pub mean: Array1<f64>,
    pub eigenvalues: [f64; 2],
}

impl Projection {
    /// n x 2 coordinates of mean-centered rows on the two axes.
    pub fn transform(&self, x: &Array2<f64>) -> Array2<f64> {
        let centered = x - &self.mean;
        centered.dot(&self.axes.t())
    }
}

/// Deterministic, seed-free start vector: alternating signs keep it
/// from being orthogonal to an axis-aligned eigenvector.
fn start_vector(dim: usize, component: usize) -> Array1<f64> {
    Array1::from_shape_fn(dim, |i| {
        if (i + component) % 2 == 0 {
            1.0
        } else {
            0.5
        }
    })
}

fn power_iterate(cov: &Array2<f64>, start: Array1<f64>) -> (Array1<f64>, f64) {
    let mut v = start;
    let norm = v.dot(&v).sqrt();
    v.mapv_inplace(|x| x / norm);
    let mut eigenvalue = 0.0;
    let mut best_residual = f64::INFINITY;
    let mut stagnant = 0;
    for _ in 0..100_000 {
        let mut next = cov.dot(&v);
        let norm = next.dot(&next).sqrt();
        if norm < 1e-300 {
            return (v, 0.0);
        }
        next.mapv_inplace(|x| x / norm);
        let image = cov.dot(&next);
        let new_eigenvalue = next.dot(&image);
        // residual bounds the axis error directly; the Rayleigh
        // quotient alone converges quadratically and flattens too early
        let residual = (&image - &(new_eigenvalue * &next))
            .iter()
            .map(|r| r * r)
            .sum::<f64>()
            .sqrt();
        v = next;
        eigenvalue = new_eigenvalue;
        if residual <= 1e-15 * new_eigenvalue.abs().max(1e-300) {
            break;
        }
        // close eigenvalue pairs converge slowly; bail once the
        // residual stops improving at floating-point resolution
        if residual < best_residual * (1.0 - 1e-6) {
            best_residual = residual;
            stagnant = 0;
        } else {
            stagnant += 1;
            if stagnant >= 100 {
                break;
            }
        }
    }
    (v, eigenvalue)
}

/// Largest-magnitude loading made positive, ties broken by the lowest
/// index winning.
fn fix_sign(v: &mut Array1<f64>) {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v[best] < 0.0 {
        v.mapv_inplace(|x| -x);
    }
}

/// Top-2 PCA of the rows of `x`.
pub fn fit_pca2(x: &Array2<f64>) -> Result<Projection> {
    let n = x.nrows();
    if n < 3 {
        return Err(Error::Model(format!(
            "projection needs at least 3 rows, got {n}"
        )));
    }
    let dim = x.ncols();
    let mean = x.mean_axis(ndarray::Axis(0)).unwrap();
    let centered = x - &mean;
    let mut cov = centered.t().dot(&centered) / (n as f64 - 1.0);
    let total_variance = (0..dim).map(|i| cov[[i, i]]).sum::<f64>();
    if total_variance <= 0.0 {
        return Err(Error::Model(
            "projection input has rank < 2 after centering".into(),
        ));
    }

    let mut axes = Array2::zeros((2, dim));
    let mut eigenvalues = [0.0; 2];
    for component in 0..2 {
        let (mut v, eigenvalue) = power_iterate(&cov, start_vector(dim, component));
        if eigenvalue <= 1e-12 * total_variance {
            return Err(Error::Model(
                "projection input has rank < 2 after centering".into(),
            ));
        }
        fix_sign(&mut v);
        for (j, &x) in v.iter().enumerate() {
            axes[[component, j]] = x;
        }
        eigenvalues[component] = eigenvalue;
        // deflate: cov -= lambda v v^T
        for i in 0..dim {
            for j in 0..dim {
                cov[[i, j]] -= eigenvalue * v[i] * v[j];
            }
        }
    }

    Ok(Projection {
        axes,
        mean,
        eigenvalues,
    })
}
