//! Shared data model: observations, penalty settings, fitted objects and the
//! doubly penalized objective
//!
//! ```text
//! ‖y − Xβ − g(z)‖²ₙ + λ‖β‖₁ + μ²·J²(g),   J²(g) = ∫(g″)² + c∫g²
//! ```
//!
//! Every norm over observations is an empirical norm: `‖v‖²ₙ = (1/n)·Σ vᵢ²`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::spline::{spline_eval, SplineModel};

/// Observed triple `(X, z, y)` of a partial linear model with a scalar
/// nuisance covariate.
#[derive(Debug, Clone)]
pub struct DesignData {
    x: DMatrix<f64>,
    z: Vec<f64>,
    y: Vec<f64>,
}

impl DesignData {
    pub fn new(x: DMatrix<f64>, z: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        let n = x.nrows();
        if n < 2 {
            return Err(Error::domain(format!(
                "need at least 2 observations, got {n}"
            )));
        }
        if x.ncols() < 1 {
            return Err(Error::domain("design matrix has no columns"));
        }
        if z.len() != n || y.len() != n {
            return Err(Error::domain(format!(
                "dimension mismatch: X has {n} rows, z has {}, y has {}",
                z.len(),
                y.len()
            )));
        }
        if !x.iter().chain(&z).chain(&y).all(|v| v.is_finite()) {
            return Err(Error::domain("non-finite entry in X, z or y"));
        }
        Ok(Self { x, z, y })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn z(&self) -> &[f64] {
        &self.z
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    /// Same observations with the response replaced.
    pub fn with_response(&self, y: Vec<f64>) -> Result<Self> {
        Self::new(self.x.clone(), self.z.clone(), y)
    }
}

/// Penalty weights and solver tolerances.
///
/// The ℓ1 weight multiplies `‖β‖₁` against the `1/n`-scaled squared loss, so
/// the coordinate-wise stationarity threshold is `λ/2` (not `λ` as with the
/// common `1/(2n)` convention).
#[derive(Debug, Clone, PartialEq)]
pub struct PenaltyConfig {
    pub lambda: f64,
    pub mu_sq: f64,
    pub c: f64,
    pub tol_objective: f64,
    pub tol_kkt: f64,
    pub max_outer_iters: usize,
    pub max_cd_passes: usize,
}

impl Default for PenaltyConfig {
    fn default() -> Self {
        Self {
            lambda: 0.0,
            mu_sq: 0.0,
            c: 1e-3,
            tol_objective: 1e-8,
            tol_kkt: 1e-6,
            max_outer_iters: 200,
            max_cd_passes: 10_000,
        }
    }
}

impl PenaltyConfig {
    pub fn new(lambda: f64, mu_sq: f64) -> Self {
        Self {
            lambda,
            mu_sq,
            ..Self::default()
        }
    }

    pub fn with_c(mut self, c: f64) -> Self {
        self.c = c;
        self
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("lambda", self.lambda),
            ("mu_sq", self.mu_sq),
            ("c", self.c),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::domain(format!(
                    "{name} must be finite and >= 0, got {v}"
                )));
            }
        }
        for (name, v) in [
            ("tol_objective", self.tol_objective),
            ("tol_kkt", self.tol_kkt),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::domain(format!("{name} must be > 0, got {v}")));
            }
        }
        if self.max_outer_iters == 0 || self.max_cd_passes == 0 {
            return Err(Error::domain("iteration limits must be positive"));
        }
        Ok(())
    }
}

/// Fitted pair `(β̂, ĝ)` from block coordinate descent.
#[derive(Debug, Clone)]
pub struct PartialLinearFit {
    pub beta: Vec<f64>,
    pub spline: SplineModel,
    pub objective: f64,
    /// Objective after initialisation followed by one entry per outer iteration.
    pub objective_trace: Vec<f64>,
    pub outer_iters: usize,
    pub kkt_beta: f64,
    pub kkt_g: f64,
    pub kkt_max_residual: f64,
    pub converged: bool,
}

/// `(1/n)·Σ vᵢ²`.
pub fn empirical_norm_sq(v: &[f64]) -> Result<f64> {
    if v.is_empty() {
        return Err(Error::domain("empirical norm of an empty vector"));
    }
    Ok(v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64)
}

pub(crate) fn norm_sq_n(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64
}

pub(crate) fn l1_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x.abs()).sum()
}

/// `X·β` for a column-major design.
pub(crate) fn mat_vec(x: &DMatrix<f64>, beta: &[f64]) -> Vec<f64> {
    let n = x.nrows();
    let cols = x.as_slice();
    let mut out = vec![0.0; n];
    for (j, &b) in beta.iter().enumerate() {
        if b != 0.0 {
            for (o, xij) in out.iter_mut().zip(&cols[j * n..(j + 1) * n]) {
                *o += xij * b;
            }
        }
    }
    out
}

/// Doubly penalized objective evaluated for an arbitrary `(β, g)`.
pub fn dp_objective(
    data: &DesignData,
    beta: &[f64],
    spline: &SplineModel,
    cfg: &PenaltyConfig,
) -> Result<f64> {
    if beta.len() != data.p() {
        return Err(Error::domain(format!(
            "beta has length {}, design has {} columns",
            beta.len(),
            data.p()
        )));
    }
    let fitted_g = spline_eval(spline, data.z()).values;
    let xb = mat_vec(data.x(), beta);
    let resid: Vec<f64> = data
        .y()
        .iter()
        .zip(&xb)
        .zip(&fitted_g)
        .map(|((y, xb), g)| y - xb - g)
        .collect();
    Ok(norm_sq_n(&resid) + cfg.lambda * l1_norm(beta) + cfg.mu_sq * spline.j_squared(cfg.c))
}
