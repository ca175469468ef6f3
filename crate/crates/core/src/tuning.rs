//! Default tuning rules and the oracle-inequality diagnostic.

use nalgebra::{DMatrix, DVector};

use crate::dpl::{block_descent, dp_fit, Nuisance};
use crate::error::{Error, Result};
use crate::lasso::lasso_fit;
use crate::model::{mat_vec, norm_sq_n, DesignData, PenaltyConfig};
use crate::spline::{build_spline_basis, SplineSmoother};

/// Multiplier of the `√(2 log(2p)/n)` rate used when none is given.
pub const DEFAULT_LAMBDA_SCALE: f64 = 2.0;

/// λ multiplier for the conservative pass of [`sigma_estimate`].
pub const SIGMA_LAMBDA_SCALE: f64 = 4.0;

const SIGMA_FLOOR: f64 = 1e-6;
const SIGMA_ROUNDS: usize = 4;

/// `scale · σ̂ · √(2·log(2p)/n)`.
pub fn lambda_default(n: usize, p: usize, sigma_hat: f64, scale: f64) -> f64 {
    assert!(n >= 1 && p >= 1, "lambda_default needs n >= 1 and p >= 1");
    scale * sigma_hat * (2.0 * (2.0 * p as f64).ln() / n as f64).sqrt()
}

/// `μ = n^{−2/5} / 100`; the penalty weight is its square.
pub fn mu_default(n: usize) -> f64 {
    assert!(n >= 1, "mu_default needs n >= 1");
    (n as f64).powf(-0.4) / 100.0
}

/// `s₀·λ² / Λ²_min`, the right-hand side of the oracle inequality.
///
/// The constants behind it are not sharp, so callers compare against it
/// rather than assert it.
pub fn oracle_bound(s0: usize, lambda: f64, lambda_min_sq: f64) -> Result<f64> {
    if lambda_min_sq.is_nan() || lambda_min_sq <= 0.0 {
        return Err(Error::domain(format!(
            "smallest eigenvalue must be positive, got {lambda_min_sq}"
        )));
    }
    Ok(s0 as f64 * lambda * lambda / lambda_min_sq)
}

/// Residual noise scale from a conservative fit followed by a refit on the
/// selected support.
///
/// Starting from the scale of `y` around its spline smooth, each round fits
/// DP with `λ = 4·σ·√(2 log(2p)/n)`, refits `(β_S, g)` without the ℓ1
/// penalty on the selected support `S`, and sets
/// `σ = √(‖y − X_Sβ_S − ĝ‖²ₙ · n/(n − df))` with
/// `df = |S| + tr(smoother)`. Rounds stop when the support repeats.
pub fn sigma_estimate(data: &DesignData, cfg: &PenaltyConfig) -> Result<f64> {
    let n = data.n();
    if n <= 10 {
        return Err(Error::domain(format!(
            "sigma estimate needs n > 10, got {n}"
        )));
    }
    let basis = build_spline_basis(data.z())?;
    let smoother = SplineSmoother::new(&basis, data.z(), cfg.mu_sq, cfg.c)?;
    let trace = smoother.trace();
    let trend = smoother.fitted_values(&smoother.fit(data.y())?);
    let detrended: Vec<f64> = data.y().iter().zip(&trend).map(|(y, g)| y - g).collect();
    let mut sigma = corrected_scale(norm_sq_n(&detrended), n, trace);
    if sigma <= SIGMA_FLOOR {
        return Ok(SIGMA_FLOOR);
    }

    let mut last_support: Option<Vec<usize>> = None;
    for _ in 0..SIGMA_ROUNDS {
        let lambda = lambda_default(n, data.p(), sigma, SIGMA_LAMBDA_SCALE);
        let fit = dp_fit(
            data,
            &PenaltyConfig {
                lambda,
                ..cfg.clone()
            },
        )?;
        let support: Vec<usize> = (0..data.p()).filter(|&j| fit.beta[j] != 0.0).collect();
        if last_support.as_ref() == Some(&support) {
            break;
        }
        let df = support.len() as f64 + trace;
        let rss = if df + 1.0 > n as f64 {
            // Refit would interpolate; fall back to the penalized fit.
            let g = smoother.fitted_values(&fit.spline);
            let xb = mat_vec(data.x(), &fit.beta);
            let r: Vec<f64> = data
                .y()
                .iter()
                .zip(&xb)
                .zip(&g)
                .map(|((y, a), b)| y - a - b)
                .collect();
            norm_sq_n(&r)
        } else {
            refit_rss(data, &support, cfg)?
        };
        sigma = corrected_scale(rss, n, df);
        last_support = Some(support);
        if sigma <= SIGMA_FLOOR {
            return Ok(SIGMA_FLOOR);
        }
    }
    Ok(sigma.max(SIGMA_FLOOR))
}

/// The linear-model counterpart of [`sigma_estimate`]: the same rounds with
/// the lasso in place of the DP fit, a least-squares refit on the support and
/// `df = |S|`. The starting scale is the standard deviation of `r`.
pub fn sigma_estimate_lasso(x: &DMatrix<f64>, r: &[f64], cfg: &PenaltyConfig) -> Result<f64> {
    let (n, p) = x.shape();
    if n <= 10 {
        return Err(Error::domain(format!(
            "sigma estimate needs n > 10, got {n}"
        )));
    }
    if r.len() != n {
        return Err(Error::domain(format!(
            "response has length {}, X has {n} rows",
            r.len()
        )));
    }
    let mean = r.iter().sum::<f64>() / n as f64;
    let centered: Vec<f64> = r.iter().map(|v| v - mean).collect();
    let mut sigma = corrected_scale(norm_sq_n(&centered), n, 1.0);
    if sigma <= SIGMA_FLOOR {
        return Ok(SIGMA_FLOOR);
    }

    let mut last_support: Option<Vec<usize>> = None;
    for _ in 0..SIGMA_ROUNDS {
        let lambda = lambda_default(n, p, sigma, SIGMA_LAMBDA_SCALE);
        let fit = lasso_fit(x, r, lambda, cfg, None)?;
        let support: Vec<usize> = (0..p).filter(|&j| fit.beta[j] != 0.0).collect();
        if last_support.as_ref() == Some(&support) {
            break;
        }
        let df = support.len() as f64;
        let refit = if df + 1.0 > n as f64 {
            None
        } else {
            least_squares_rss(x, r, &support)
        };
        let rss = refit.unwrap_or_else(|| {
            let xb = mat_vec(x, &fit.beta);
            norm_sq_n(&r.iter().zip(&xb).map(|(a, b)| a - b).collect::<Vec<_>>())
        });
        sigma = corrected_scale(rss, n, df);
        last_support = Some(support);
        if sigma <= SIGMA_FLOOR {
            return Ok(SIGMA_FLOOR);
        }
    }
    Ok(sigma.max(SIGMA_FLOOR))
}

/// `√(rss·n/(n − df))`, with `n − df` kept at least 1.
fn corrected_scale(rss: f64, n: usize, df: f64) -> f64 {
    (rss * n as f64 / (n as f64 - df).max(1.0)).sqrt()
}

/// `‖r − X_Sb‖²ₙ` at the least-squares `b`; `None` if `X_S` is rank deficient.
fn least_squares_rss(x: &DMatrix<f64>, r: &[f64], support: &[usize]) -> Option<f64> {
    if support.is_empty() {
        return Some(norm_sq_n(r));
    }
    let xs = x.select_columns(support);
    let rv = DVector::from_column_slice(r);
    let b = (xs.transpose() * &xs)
        .cholesky()?
        .solve(&(xs.transpose() * &rv));
    let resid = rv - xs * b;
    Some(resid.norm_squared() / r.len() as f64)
}

/// Residual `‖·‖²ₙ` of the unpenalized-β partial linear fit on `support`.
fn refit_rss(data: &DesignData, support: &[usize], cfg: &PenaltyConfig) -> Result<f64> {
    let basis = build_spline_basis(data.z())?;
    let smoother = SplineSmoother::new(&basis, data.z(), cfg.mu_sq, cfg.c)?;
    if support.is_empty() {
        let g = smoother.fitted_values(&smoother.fit(data.y())?);
        let r: Vec<f64> = data.y().iter().zip(&g).map(|(y, g)| y - g).collect();
        return Ok(norm_sq_n(&r));
    }
    let xs = data.x().select_columns(support);
    let sub = DesignData::new(xs, data.z().to_vec(), data.y().to_vec())?;
    // λ = 0 on the support; needs μ² > 0 to stay well posed.
    let fit = block_descent(
        &sub,
        &PenaltyConfig {
            lambda: 0.0,
            ..cfg.clone()
        },
        Nuisance::Spline,
    )?;
    let xb = mat_vec(sub.x(), &fit.beta);
    let r: Vec<f64> = sub
        .y()
        .iter()
        .zip(&xb)
        .zip(&fit.g_values)
        .map(|((y, a), g)| y - a - g)
        .collect();
    Ok(norm_sq_n(&r))
}
