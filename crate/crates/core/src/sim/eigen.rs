//! Smallest-eigenvalue diagnostic of the design after removing the part of
//! each column explained by a smooth function of `z`.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::Result;
use crate::spline::{build_spline_basis, SplineSmoother};
use crate::tuning::mu_default;

/// Default ridge weight inside the smoothness penalty.
const DEFAULT_C: f64 = 1e-3;

/// Smallest eigenvalue of `X̃ᵀX̃/n`, `X̃ = X − smooth_z(X)`, with the
/// default smoothing weight `μ² = mu_default(n)²`. Returns 0 when `p > n`.
pub fn min_eigen_diagnostic(x: &DMatrix<f64>, z: &[f64]) -> Result<f64> {
    let mu = mu_default(x.nrows());
    min_eigen_with(x, z, None, mu * mu, DEFAULT_C)
}

/// Same diagnostic restricted to the columns in `support`.
pub fn min_eigen_restricted(x: &DMatrix<f64>, z: &[f64], support: &[usize]) -> Result<f64> {
    let mu = mu_default(x.nrows());
    min_eigen_with(x, z, Some(support), mu * mu, DEFAULT_C)
}

pub fn min_eigen_with(
    x: &DMatrix<f64>,
    z: &[f64],
    support: Option<&[usize]>,
    mu_sq: f64,
    c: f64,
) -> Result<f64> {
    let cols = match support {
        Some(s) => x.select_columns(s),
        None => x.clone(),
    };
    let (n, p) = cols.shape();
    if p == 0 {
        return Ok(0.0);
    }
    if p > n {
        return Ok(0.0);
    }
    let basis = build_spline_basis(z)?;
    let smoother = SplineSmoother::new(&basis, z, mu_sq, c)?;
    let mut resid = cols;
    for j in 0..p {
        let col: Vec<f64> = resid.column(j).iter().copied().collect();
        let fitted = smoother.fitted_values(&smoother.fit(&col)?);
        for (i, f) in fitted.iter().enumerate() {
            resid[(i, j)] -= f;
        }
    }
    let gram = resid.transpose() * &resid / n as f64;
    let eig = SymmetricEigen::new(gram);
    Ok(eig
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
        .max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn p_larger_than_n_is_zero() {
        let x = DMatrix::from_fn(5, 8, |i, j| ((i * 3 + j) % 7) as f64);
        let z = [0.1, 0.2, 0.3, 0.4, 0.5];
        assert_eq!(min_eigen_diagnostic(&x, &z).unwrap(), 0.0);
    }

    #[test]
    fn duplicated_column_is_singular() {
        let mut x = DMatrix::from_fn(20, 3, |i, j| ((i * 7 + j * 5) % 11) as f64 - 5.0);
        let c0 = x.column(0).clone_owned();
        x.set_column(2, &c0);
        let z: Vec<f64> = (0..20).map(|i| i as f64 / 20.0 - 0.5).collect();
        assert!(min_eigen_diagnostic(&x, &z).unwrap() < 1e-8);
    }
}
