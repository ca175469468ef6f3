//! Cyclic coordinate descent for
//!
//! ```text
//! min_β ‖r − Xβ‖²ₙ + λ‖β‖₁
//! ```
//!
//! Note the loss is scaled by `1/n`, not `1/(2n)`: a coordinate is zero at
//! the optimum iff `|X_jᵀ(r − Xβ)/n| ≤ λ/2`, and the update is
//! `β_j ← S(X_jᵀ(res + X_jβ_j)/n, λ/2) / ‖X_j‖²ₙ`.
//!
//! Coordinates are visited in ascending order. After each full sweep the
//! solver iterates over the current active set until it settles, then
//! sweeps all coordinates again; it stops once a full sweep changes no
//! coefficient by more than an internal step tolerance and the KKT residual
//! is below `tol_kkt`. Columns with zero norm keep a zero coefficient.
//!
//! Once the active-set iterations keep the same sign pattern for a few
//! passes, the solver also tries the exact minimiser on that face,
//! `β_A = (X_AᵀX_A)⁻¹(X_Aᵀr − (nλ/2)s_A)`, keeping it only when the signs
//! survive and the objective does not increase.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::{l1_norm, mat_vec, norm_sq_n, PenaltyConfig};

/// Full recomputation of the residual after this many passes.
const RESIDUAL_REFRESH: usize = 50;

/// Ratio between consecutive penalties of the warm-up path.
const PATH_RATIO: f64 = 0.7;
const PATH_MAX_STEPS: usize = 40;
/// KKT tolerance of a warm-up level, relative to its penalty.
const PATH_TOL: f64 = 1e-3;

/// Active-set passes with an unchanged sign pattern before the first exact
/// face step; doubled after each rejected step.
const FACE_WAIT: usize = 4;

/// `sign(v)·max(|v| − γ, 0)`.
#[inline]
pub fn soft_threshold(v: f64, gamma: f64) -> f64 {
    debug_assert!(gamma >= 0.0);
    if v > gamma {
        v - gamma
    } else if v < -gamma {
        v + gamma
    } else {
        0.0
    }
}

#[derive(Debug, Clone)]
pub struct LassoFit {
    pub beta: Vec<f64>,
    pub kkt_residual: f64,
    /// Coordinate passes performed (full and active-set).
    pub passes: usize,
    /// Objective after each pass.
    pub objective_trace: Vec<f64>,
}

/// Solver state: column norms, coefficients and the running residual.
#[derive(Debug, Clone)]
pub struct LassoWorkspace<'a> {
    x: &'a DMatrix<f64>,
    r: &'a [f64],
    col_norms_sq: Vec<f64>,
    residual: Vec<f64>,
    beta: Vec<f64>,
}

impl<'a> LassoWorkspace<'a> {
    pub fn new(x: &'a DMatrix<f64>, r: &'a [f64], warm_start: Option<&[f64]>) -> Result<Self> {
        let (n, p) = x.shape();
        if r.len() != n {
            return Err(Error::domain(format!(
                "response has length {}, X has {n} rows",
                r.len()
            )));
        }
        if n == 0 || p == 0 {
            return Err(Error::domain("empty design"));
        }
        if !x.iter().chain(r).all(|v| v.is_finite()) {
            return Err(Error::domain("non-finite entry in lasso inputs"));
        }
        let cols = x.as_slice();
        let col_norms_sq: Vec<f64> = (0..p)
            .map(|j| norm_sq_n(&cols[j * n..(j + 1) * n]))
            .collect();
        let mut beta = match warm_start {
            Some(w) if w.len() != p => {
                return Err(Error::domain(format!(
                    "warm start has length {}, expected {p}",
                    w.len()
                )))
            }
            Some(w) if w.iter().any(|v| !v.is_finite()) => {
                return Err(Error::domain("non-finite warm start"))
            }
            Some(w) => w.to_vec(),
            None => vec![0.0; p],
        };
        for (b, &cn) in beta.iter_mut().zip(&col_norms_sq) {
            if cn == 0.0 {
                *b = 0.0;
            }
        }
        let mut ws = Self {
            x,
            r,
            col_norms_sq,
            residual: Vec::new(),
            beta,
        };
        ws.refresh_residual();
        Ok(ws)
    }

    pub fn refresh_residual(&mut self) {
        let xb = mat_vec(self.x, &self.beta);
        self.residual = self.r.iter().zip(&xb).map(|(r, f)| r - f).collect();
    }

    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    pub fn residual(&self) -> &[f64] {
        &self.residual
    }

    pub fn col_norms_sq(&self) -> &[f64] {
        &self.col_norms_sq
    }

    fn objective(&self, lambda: f64) -> f64 {
        norm_sq_n(&self.residual) + lambda * l1_norm(&self.beta)
    }

    /// Smallest penalty with an all-zero solution, `2‖Xᵀr‖_∞/n`.
    pub fn lambda_max(&self) -> f64 {
        let n = self.x.nrows();
        let cols = self.x.as_slice();
        (0..self.beta.len())
            .map(|j| {
                2.0 * cols[j * n..(j + 1) * n]
                    .iter()
                    .zip(self.r)
                    .map(|(a, b)| a * b)
                    .sum::<f64>()
                    .abs()
                    / n as f64
            })
            .fold(0.0, f64::max)
    }

    /// Moves along null directions of `X_A` until at most `n` coefficients
    /// are nonzero. The fit is unchanged along such a direction and the
    /// direction is oriented so the ℓ1 norm does not grow.
    fn shrink_support(&mut self, support: &mut Vec<(usize, bool)>, lambda: f64) -> bool {
        let n = self.x.nrows();
        let before = self.objective(lambda);
        let saved = self.beta.clone();
        let cols = self.x.as_slice();
        while support.len() > n {
            let basis = DMatrix::from_fn(n, n, |i, a| cols[support[a].0 * n + i]);
            let extra = support[n].0;
            let rhs = DVector::from_fn(n, |i, _| -cols[extra * n + i]);
            let Some(head) = basis.lu().solve(&rhs) else {
                break;
            };
            let mut dir: Vec<f64> = head.iter().copied().collect();
            dir.push(1.0);
            let sign = |positive: bool| if positive { 1.0 } else { -1.0 };
            let slope: f64 = support
                .iter()
                .zip(&dir)
                .map(|(&(_, pos), d)| sign(pos) * d)
                .sum();
            if slope > 0.0 {
                dir.iter_mut().for_each(|d| *d = -*d);
            }
            let mut step = f64::INFINITY;
            let mut blocking = None;
            for (a, (&(j, _), &d)) in support.iter().zip(&dir).enumerate() {
                let b = self.beta[j];
                if b * d < 0.0 && -b / d < step {
                    step = -b / d;
                    blocking = Some(a);
                }
            }
            let Some(blocking) = blocking else {
                break;
            };
            for (a, (&(j, _), &d)) in support.iter().zip(&dir).enumerate() {
                self.beta[j] = if a == blocking {
                    0.0
                } else {
                    self.beta[j] + step * d
                };
            }
            support.remove(blocking);
        }
        self.refresh_residual();
        if support.len() > n || self.objective(lambda) > before {
            self.beta = saved;
            self.refresh_residual();
            return false;
        }
        true
    }

    /// Moves the active coefficients towards the exact minimiser on their
    /// sign face. If that point leaves the face, the move stops where the
    /// first coefficient reaches zero and that coefficient is set to zero.
    /// Steps that would raise the objective are undone.
    fn face_step(&mut self, support: &[(usize, bool)], lambda: f64) -> FaceStep {
        let n = self.x.nrows();
        let mut reduced;
        let mut support = support;
        if support.len() > n {
            reduced = support.to_vec();
            if !self.shrink_support(&mut reduced, lambda) {
                return FaceStep::Rejected;
            }
            support = &reduced;
        }
        let k = support.len();
        if k == 0 {
            return FaceStep::Rejected;
        }
        let cols = self.x.as_slice();
        let col = |j: usize| &cols[j * n..(j + 1) * n];
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(u, v)| u * v).sum::<f64>();
        let gram = DMatrix::from_fn(k, k, |a, b| {
            dot(col(support[a].0), col(support[b].0)) / n as f64
        });
        let rhs = DVector::from_fn(k, |a, _| {
            let (j, positive) = support[a];
            let s = if positive { 1.0 } else { -1.0 };
            dot(col(j), self.r) / n as f64 - 0.5 * lambda * s
        });
        let Some(chol) = gram.cholesky() else {
            return FaceStep::Rejected;
        };
        let target = chol.solve(&rhs);
        if target.iter().any(|v| !v.is_finite()) {
            return FaceStep::Rejected;
        }

        // Largest step in [0, 1] that keeps every sign.
        let mut step = 1.0;
        let mut blocking = None;
        for (a, (&(j, positive), &v)) in support.iter().zip(target.iter()).enumerate() {
            if (v > 0.0) != positive || v == 0.0 {
                let b = self.beta[j];
                let t = b / (b - v);
                if t < step {
                    step = t;
                    blocking = Some(a);
                }
            }
        }
        if step <= 0.0 {
            return FaceStep::Rejected;
        }

        let before = self.objective(lambda);
        let saved = self.beta.clone();
        for (a, (&(j, _), &v)) in support.iter().zip(target.iter()).enumerate() {
            self.beta[j] = if Some(a) == blocking {
                0.0
            } else {
                saved[j] + step * (v - saved[j])
            };
        }
        self.refresh_residual();
        if self.objective(lambda) > before {
            self.beta = saved;
            self.refresh_residual();
            FaceStep::Rejected
        } else if blocking.is_some() {
            FaceStep::Partial
        } else {
            FaceStep::Full
        }
    }

    /// Exact minimisation along coordinate `j`; returns `|Δβ_j|`.
    fn update(&mut self, j: usize, half_lambda: f64) -> f64 {
        let cn = self.col_norms_sq[j];
        if cn == 0.0 {
            return 0.0;
        }
        let n = self.x.nrows();
        let col = &self.x.as_slice()[j * n..(j + 1) * n];
        let old = self.beta[j];
        let rho = col
            .iter()
            .zip(&self.residual)
            .map(|(a, b)| a * b)
            .sum::<f64>()
            / n as f64
            + cn * old;
        let new = soft_threshold(rho, half_lambda) / cn;
        let delta = new - old;
        if delta != 0.0 {
            for (res, xij) in self.residual.iter_mut().zip(col) {
                *res -= xij * delta;
            }
            self.beta[j] = new;
        }
        delta.abs()
    }
}

/// Max violation of the lasso stationarity conditions at `beta`.
///
/// For `β_j ≠ 0`: `|−(2/n)X_jᵀ(r − Xβ) + λ·sign(β_j)|`;
/// for `β_j = 0`: `max(|(2/n)X_jᵀ(r − Xβ)| − λ, 0)`.
pub fn lasso_kkt_residual(x: &DMatrix<f64>, r: &[f64], beta: &[f64], lambda: f64) -> f64 {
    let xb = mat_vec(x, beta);
    let resid: Vec<f64> = r.iter().zip(&xb).map(|(r, f)| r - f).collect();
    kkt_from_residual(x, &resid, beta, lambda)
}

pub(crate) fn kkt_from_residual(x: &DMatrix<f64>, resid: &[f64], beta: &[f64], lambda: f64) -> f64 {
    let n = x.nrows();
    let cols = x.as_slice();
    beta.iter()
        .enumerate()
        .map(|(j, &b)| {
            let grad = 2.0
                * cols[j * n..(j + 1) * n]
                    .iter()
                    .zip(resid)
                    .map(|(a, r)| a * r)
                    .sum::<f64>()
                / n as f64;
            if b != 0.0 {
                (-grad + lambda * b.signum()).abs()
            } else {
                (grad.abs() - lambda).max(0.0)
            }
        })
        .fold(0.0, f64::max)
}

/// `‖r − Xβ‖²ₙ + λ‖β‖₁`.
pub fn lasso_objective(x: &DMatrix<f64>, r: &[f64], beta: &[f64], lambda: f64) -> f64 {
    let xb = mat_vec(x, beta);
    let resid: Vec<f64> = r.iter().zip(&xb).map(|(r, f)| r - f).collect();
    norm_sq_n(&resid) + lambda * l1_norm(beta)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum FaceStep {
    /// Reached the face minimiser.
    Full,
    /// Stopped at the face boundary.
    Partial,
    Rejected,
}

struct Descent {
    passes: usize,
    kkt: f64,
}

/// Coordinate descent at one penalty level, starting from the workspace state.
fn descend(
    ws: &mut LassoWorkspace<'_>,
    lambda: f64,
    tol_kkt: f64,
    max_passes: usize,
    mut trace: Option<&mut Vec<f64>>,
) -> Descent {
    let p = ws.beta.len();
    let half_lambda = lambda / 2.0;
    // Coefficient-change threshold; tightened whenever the KKT check fails.
    let mut step_tol = tol_kkt * 1e-3;
    let mut passes = 0;
    let mut since_refresh = 0;
    let mut kkt = f64::INFINITY;

    let mut record =
        |ws: &mut LassoWorkspace<'_>, passes: &mut usize, trace: &mut Option<&mut Vec<f64>>| {
            *passes += 1;
            since_refresh += 1;
            if since_refresh == RESIDUAL_REFRESH {
                ws.refresh_residual();
                since_refresh = 0;
            }
            if let Some(t) = trace.as_deref_mut() {
                t.push(ws.objective(lambda));
            }
        };

    while passes < max_passes {
        let mut max_change = 0.0f64;
        for j in 0..p {
            max_change = max_change.max(ws.update(j, half_lambda));
        }
        record(ws, &mut passes, &mut trace);

        if max_change < step_tol {
            ws.refresh_residual();
            kkt = kkt_from_residual(ws.x, &ws.residual, &ws.beta, lambda);
            if kkt <= tol_kkt {
                break;
            }
            step_tol *= 1e-2;
            if step_tol < 1e-300 {
                break;
            }
            continue;
        }

        let active: Vec<usize> = (0..p).filter(|&j| ws.beta[j] != 0.0).collect();
        let signs = |ws: &LassoWorkspace<'_>| -> Vec<(usize, bool)> {
            active
                .iter()
                .filter(|&&j| ws.beta[j] != 0.0)
                .map(|&j| (j, ws.beta[j] > 0.0))
                .collect()
        };
        let mut face = signs(ws);
        let mut stable = 0;
        let mut wait = FACE_WAIT;
        while passes < max_passes {
            let mut max_change = 0.0f64;
            for &j in &active {
                max_change = max_change.max(ws.update(j, half_lambda));
            }
            record(ws, &mut passes, &mut trace);
            if max_change < step_tol {
                break;
            }
            let current = signs(ws);
            if current == face {
                stable += 1;
            } else {
                face = current;
                stable = 0;
            }
            if stable >= wait {
                stable = 0;
                let outcome = ws.face_step(&face, lambda);
                if outcome != FaceStep::Rejected {
                    if let Some(t) = trace.as_deref_mut() {
                        t.push(ws.objective(lambda));
                    }
                }
                match outcome {
                    FaceStep::Full => break,
                    FaceStep::Partial => face = signs(ws),
                    FaceStep::Rejected => wait *= 2,
                }
            }
        }
    }
    Descent { passes, kkt }
}

/// Runs cyclic coordinate descent to KKT tolerance `cfg.tol_kkt` or until
/// `cfg.max_cd_passes` passes.
///
/// Without a warm start the solver first walks a short geometric sequence of
/// penalties down from `λ_max = 2‖Xᵀr‖_∞/n`, each level warm-starting the
/// next; only passes at the requested `λ` enter the objective trace.
pub fn lasso_fit(
    x: &DMatrix<f64>,
    r: &[f64],
    lambda: f64,
    cfg: &PenaltyConfig,
    warm_start: Option<&[f64]>,
) -> Result<LassoFit> {
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(Error::domain(format!(
            "lambda must be finite and >= 0, got {lambda}"
        )));
    }
    let mut ws = LassoWorkspace::new(x, r, warm_start)?;
    let mut passes = 0;

    if warm_start.is_none() {
        let lambda_max = ws.lambda_max();
        if lambda < lambda_max {
            let steps = if lambda > 0.0 {
                ((lambda_max / lambda).ln() / PATH_RATIO.recip().ln()).ceil() as usize
            } else {
                PATH_MAX_STEPS
            }
            .min(PATH_MAX_STEPS);
            for k in 1..steps {
                let level = if lambda > 0.0 {
                    lambda_max * (lambda / lambda_max).powf(k as f64 / steps as f64)
                } else {
                    lambda_max * PATH_RATIO.powi(k as i32)
                };
                let tol = cfg.tol_kkt.max(PATH_TOL * level);
                passes += descend(&mut ws, level, tol, cfg.max_cd_passes - passes, None).passes;
            }
        }
    }

    let mut trace = Vec::new();
    let out = descend(
        &mut ws,
        lambda,
        cfg.tol_kkt,
        cfg.max_cd_passes.saturating_sub(passes),
        Some(&mut trace),
    );
    passes += out.passes;
    let mut kkt = out.kkt;
    ws.refresh_residual();
    if !kkt.is_finite() || passes >= cfg.max_cd_passes {
        kkt = kkt_from_residual(x, &ws.residual, &ws.beta, lambda);
    }
    Ok(LassoFit {
        beta: ws.beta,
        kkt_residual: kkt,
        passes,
        objective_trace: trace,
    })
}
