//! Block coordinate descent for the doubly penalized objective.
//!
//! The β-block is a warm-started lasso on `y − ĝ(z)`; the g-block is the
//! closed-form smoothing-spline solve on `y − Xβ̂`. The nuisance block can
//! also be frozen at known values, which turns one β-step into the lasso with
//! known nuisance (LK) and, for zero values, the plain lasso (LN).

use crate::error::{Error, Result};
use crate::lasso::{kkt_from_residual, lasso_fit};
use crate::model::{l1_norm, mat_vec, norm_sq_n, DesignData, PartialLinearFit, PenaltyConfig};
use crate::spline::{build_spline_basis, SplineModel, SplineSmoother};

/// How the nuisance block is handled.
#[derive(Debug, Clone, Copy)]
pub enum Nuisance<'a> {
    /// Estimated by the penalized spline smoother.
    Spline,
    /// Held fixed at the given values `g(zᵢ)`.
    Fixed(&'a [f64]),
}

/// Outcome of block descent before it is packaged for a specific estimator.
#[derive(Debug, Clone)]
pub struct BlockDescentFit {
    pub beta: Vec<f64>,
    pub g_values: Vec<f64>,
    pub spline: Option<SplineModel>,
    pub objective: f64,
    pub objective_trace: Vec<f64>,
    pub outer_iters: usize,
    pub kkt_beta: f64,
    pub kkt_g: f64,
    pub converged: bool,
}

fn residual(y: &[f64], a: &[f64], b: &[f64]) -> Vec<f64> {
    y.iter()
        .zip(a)
        .zip(b)
        .map(|((y, a), b)| y - a - b)
        .collect()
}

fn sub(y: &[f64], a: &[f64]) -> Vec<f64> {
    y.iter().zip(a).map(|(y, a)| y - a).collect()
}

struct SplineBlock {
    smoother: SplineSmoother,
    mu_sq: f64,
    c: f64,
}

impl SplineBlock {
    fn penalty(&self, model: &SplineModel) -> f64 {
        self.mu_sq * model.j_squared(self.c)
    }
}

/// Alternates β- and g-steps until the relative objective decrease drops
/// below `tol_objective` with both KKT residuals at most `tol_kkt`, or
/// `max_outer_iters` is reached.
pub fn block_descent(
    data: &DesignData,
    cfg: &PenaltyConfig,
    nuisance: Nuisance<'_>,
) -> Result<BlockDescentFit> {
    cfg.validate()?;
    let x = data.x();
    let y = data.y();

    match nuisance {
        Nuisance::Fixed(g) => {
            if g.len() != data.n() {
                return Err(Error::domain(format!(
                    "nuisance values have length {}, expected {}",
                    g.len(),
                    data.n()
                )));
            }
            if g.iter().any(|v| !v.is_finite()) {
                return Err(Error::domain("non-finite nuisance values"));
            }
            // With g fixed one exact β-step is the block minimizer.
            let target = sub(y, g);
            let start = norm_sq_n(&target);
            let fit = lasso_fit(x, &target, cfg.lambda, cfg, None)?;
            let objective = *fit.objective_trace.last().unwrap_or(&start);
            if !objective.is_finite() {
                return Err(Error::NonFiniteObjective { iteration: 1 });
            }
            Ok(BlockDescentFit {
                converged: fit.kkt_residual <= cfg.tol_kkt,
                kkt_beta: fit.kkt_residual,
                beta: fit.beta,
                g_values: g.to_vec(),
                spline: None,
                objective,
                objective_trace: vec![start, objective],
                outer_iters: 1,
                kkt_g: 0.0,
            })
        }
        Nuisance::Spline => spline_descent(data, cfg),
    }
}

fn spline_descent(data: &DesignData, cfg: &PenaltyConfig) -> Result<BlockDescentFit> {
    if cfg.lambda == 0.0 && cfg.mu_sq == 0.0 {
        return Err(Error::domain(
            "at least one of lambda and mu_sq must be positive",
        ));
    }
    let x = data.x();
    let y = data.y();
    let basis = build_spline_basis(data.z())?;
    let block = SplineBlock {
        smoother: SplineSmoother::new(&basis, data.z(), cfg.mu_sq, cfg.c)?,
        mu_sq: cfg.mu_sq,
        c: cfg.c,
    };

    let mut beta = vec![0.0; data.p()];
    let mut spline = block.smoother.fit(y)?;
    let mut g_values = block.smoother.fitted_values(&spline);
    let zero_xb = vec![0.0; data.n()];
    let mut objective = norm_sq_n(&residual(y, &zero_xb, &g_values)) + block.penalty(&spline);
    if !objective.is_finite() {
        return Err(Error::NonFiniteObjective { iteration: 0 });
    }
    let mut trace = vec![objective];

    let mut converged = false;
    let mut kkt_beta = f64::INFINITY;
    let mut kkt_g = f64::INFINITY;
    let mut outer_iters = 0;

    for iteration in 1..=cfg.max_outer_iters {
        outer_iters = iteration;
        let target = sub(y, &g_values);
        beta = lasso_fit(x, &target, cfg.lambda, cfg, Some(&beta))?.beta;
        let xb = mat_vec(x, &beta);
        let partial = sub(y, &xb);
        spline = block.smoother.fit(&partial)?;
        g_values = block.smoother.fitted_values(&spline);

        let resid = residual(y, &xb, &g_values);
        let next = norm_sq_n(&resid) + cfg.lambda * l1_norm(&beta) + block.penalty(&spline);
        if !next.is_finite() {
            return Err(Error::NonFiniteObjective { iteration });
        }
        trace.push(next);
        let decrease = (objective - next) / objective.abs().max(f64::MIN_POSITIVE);
        objective = next;

        if decrease < cfg.tol_objective {
            kkt_beta = kkt_from_residual(x, &resid, &beta, cfg.lambda);
            kkt_g = block.smoother.normal_equation_residual(&spline, &partial);
            if kkt_beta <= cfg.tol_kkt && kkt_g <= cfg.tol_kkt {
                converged = true;
                break;
            }
        }
    }
    if !converged {
        let xb = mat_vec(x, &beta);
        let partial = sub(y, &xb);
        kkt_beta = kkt_from_residual(x, &sub(&partial, &g_values), &beta, cfg.lambda);
        kkt_g = block.smoother.normal_equation_residual(&spline, &partial);
    }

    Ok(BlockDescentFit {
        beta,
        g_values,
        spline: Some(spline),
        objective,
        objective_trace: trace,
        outer_iters,
        kkt_beta,
        kkt_g,
        converged,
    })
}

/// Doubly penalized least-squares fit `(β̂, ĝ)`.
pub fn dp_fit(data: &DesignData, cfg: &PenaltyConfig) -> Result<PartialLinearFit> {
    let fit = block_descent(data, cfg, Nuisance::Spline)?;
    let spline = fit.spline.expect("spline block always yields a model");
    Ok(PartialLinearFit {
        beta: fit.beta,
        spline,
        objective: fit.objective,
        objective_trace: fit.objective_trace,
        outer_iters: fit.outer_iters,
        kkt_beta: fit.kkt_beta,
        kkt_g: fit.kkt_g,
        kkt_max_residual: fit.kkt_beta.max(fit.kkt_g),
        converged: fit.converged,
    })
}

/// `(β-block, g-block)` stationarity residuals of a fit on `data`.
pub fn kkt_residuals(
    data: &DesignData,
    fit: &PartialLinearFit,
    cfg: &PenaltyConfig,
) -> Result<(f64, f64)> {
    if fit.beta.len() != data.p() {
        return Err(Error::domain(
            "fit and data disagree on the number of covariates",
        ));
    }
    let smoother = SplineSmoother::new(&fit.spline, data.z(), cfg.mu_sq, cfg.c)?;
    let g_values = smoother.fitted_values(&fit.spline);
    let xb = mat_vec(data.x(), &fit.beta);
    let partial = sub(data.y(), &xb);
    let beta_block = kkt_from_residual(data.x(), &sub(&partial, &g_values), &fit.beta, cfg.lambda);
    let g_block = smoother.normal_equation_residual(&fit.spline, &partial);
    Ok((beta_block, g_block))
}

/// Lasso with known nuisance: `argmin ‖y − g⁰(z) − Xβ‖²ₙ + λ‖β‖₁`.
pub fn fit_lk(data: &DesignData, g0_values: &[f64], cfg: &PenaltyConfig) -> Result<Vec<f64>> {
    Ok(block_descent(data, cfg, Nuisance::Fixed(g0_values))?.beta)
}

/// Lasso ignoring the nuisance: `argmin ‖y − Xβ‖²ₙ + λ‖β‖₁`.
pub fn fit_ln(data: &DesignData, cfg: &PenaltyConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    Ok(lasso_fit(data.x(), data.y(), cfg.lambda, cfg, None)?.beta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};

    fn toy() -> DesignData {
        let x = DMatrix::from_fn(12, 3, |i, j| {
            ((i * 7 + j * 3) % 5) as f64 - 2.0 + 0.1 * j as f64
        });
        let z: Vec<f64> = (0..12).map(|i| (i as f64 * 0.37).sin()).collect();
        let y: Vec<f64> = (0..12)
            .map(|i| x[(i, 0)] - 0.5 * x[(i, 2)] + 2.0 * z[i] * z[i] + 0.1 * (i % 3) as f64)
            .collect();
        DesignData::new(x, z, y).unwrap()
    }

    #[test]
    fn zero_response_gives_zero_fit() {
        let d = toy();
        let d = d.with_response(vec![0.0; 12]).unwrap();
        let fit = dp_fit(&d, &PenaltyConfig::new(0.1, 0.01)).unwrap();
        assert!(fit.beta.iter().all(|&b| b == 0.0));
        assert!(fit.spline.coeffs().iter().all(|&a| a == 0.0));
        assert_eq!(fit.objective, 0.0);
        assert!(fit.converged);
    }

    #[test]
    fn converges_and_certifies() {
        let d = toy();
        let cfg = PenaltyConfig::new(0.05, 0.01);
        let fit = dp_fit(&d, &cfg).unwrap();
        assert!(fit.converged);
        assert!(fit.kkt_max_residual <= cfg.tol_kkt);
        let (kb, kg) = kkt_residuals(&d, &fit, &cfg).unwrap();
        assert!(kb <= cfg.tol_kkt && kg <= cfg.tol_kkt);
        for w in fit.objective_trace.windows(2) {
            assert!(w[1] <= w[0]);
        }
    }

    #[test]
    fn perturbations_break_kkt() {
        let d = toy();
        let cfg = PenaltyConfig::new(0.05, 0.01);
        let fit = dp_fit(&d, &cfg).unwrap();
        let j = fit
            .beta
            .iter()
            .position(|&b| b != 0.0)
            .expect("some active coordinate");
        let mut moved = fit.clone();
        moved.beta[j] += 0.1;
        assert!(kkt_residuals(&d, &moved, &cfg).unwrap().0 > cfg.tol_kkt);

        let mut flat = fit.clone();
        flat.spline = fit
            .spline
            .with_coeffs(DVector::zeros(fit.spline.coeffs().len()))
            .unwrap();
        assert!(kkt_residuals(&d, &flat, &cfg).unwrap().1 > cfg.tol_kkt);
    }

    #[test]
    fn requires_some_penalty() {
        let d = toy();
        assert!(matches!(
            dp_fit(&d, &PenaltyConfig::new(0.0, 0.0)),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn lk_ln_relations() {
        let d = toy();
        let cfg = PenaltyConfig::new(0.1, 0.0);
        let ln = fit_ln(&d, &cfg).unwrap();
        let lk0 = fit_lk(&d, &[0.0; 12], &cfg).unwrap();
        assert_eq!(ln, lk0);
        let direct = lasso_fit(d.x(), d.y(), 0.1, &cfg, None).unwrap().beta;
        assert_eq!(ln, direct);

        let g0: Vec<f64> = d.z().iter().map(|z| 3.0 * z).collect();
        let pure = d.with_response(g0.clone()).unwrap();
        assert!(fit_lk(&pure, &g0, &cfg).unwrap().iter().all(|&b| b == 0.0));
        assert!(fit_lk(&pure, &g0[..5], &cfg).is_err());
    }
}
