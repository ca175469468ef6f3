//! Per-replicate accuracy and selection metrics.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::model::{mat_vec, norm_sq_n};

/// Coefficients with `|β̂_j|` above this count as selected.
pub const SUPPORT_THRESHOLD: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Estimator {
    /// Lasso with known nuisance.
    LK,
    /// Lasso ignoring the nuisance.
    LN,
    /// Doubly penalized fit, independent design.
    DPi,
    /// Doubly penalized fit, dependent design.
    DPd,
}

impl Estimator {
    pub const ALL: [Estimator; 4] = [Estimator::LK, Estimator::LN, Estimator::DPi, Estimator::DPd];

    pub fn as_str(self) -> &'static str {
        match self {
            Estimator::LK => "LK",
            Estimator::LN => "LN",
            Estimator::DPi => "DPi",
            Estimator::DPd => "DPd",
        }
    }

    pub fn is_dp(self) -> bool {
        matches!(self, Estimator::DPi | Estimator::DPd)
    }
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Estimator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Estimator::ALL
            .into_iter()
            .find(|e| e.as_str() == s)
            .ok_or_else(|| Error::domain(format!("unknown estimator {s:?}")))
    }
}

/// Ground truth of one dataset.
#[derive(Debug, Clone, Copy)]
pub struct Truth<'a> {
    pub x: &'a DMatrix<f64>,
    pub beta0: &'a [f64],
    pub g0_values: &'a [f64],
}

/// Accuracy of one fit; absent entries are undefined for the fit.
#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    pub pred_error: f64,
    pub est_error_l1: f64,
    pub tpr: Option<f64>,
    pub fpr: Option<f64>,
    pub g_error: Option<f64>,
}

/// One row of the per-replicate result table.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateResult {
    pub design_id: u32,
    pub replicate: u32,
    pub estimator: Estimator,
    /// `None` when the fit failed.
    pub metrics: Option<Metrics>,
    pub tsnr: f64,
    /// Convergence flag of the block descent (DP) or lasso (LK/LN).
    pub converged: bool,
    pub failure: Option<String>,
    pub runtime_ms: f64,
}

/// `(TPR, FPR)` of the support of `beta_hat` against the support of `beta0`.
pub fn selection_rates(beta_hat: &[f64], beta0: &[f64]) -> (Option<f64>, Option<f64>) {
    let p = beta0.len();
    let truth: Vec<bool> = beta0.iter().map(|&b| b != 0.0).collect();
    let s0 = truth.iter().filter(|&&t| t).count();
    let (mut tp, mut fp) = (0usize, 0usize);
    for (b, &t) in beta_hat.iter().zip(&truth) {
        if b.abs() > SUPPORT_THRESHOLD {
            if t {
                tp += 1;
            } else {
                fp += 1;
            }
        }
    }
    let tpr = (s0 > 0).then(|| tp as f64 / s0 as f64);
    let fpr = (s0 < p).then(|| fp as f64 / (p - s0) as f64);
    (tpr, fpr)
}

/// Metrics of a fit whose nuisance estimate at the observations is
/// `g_hat` (`g⁰` for LK, zero for LN, `ĝ(z)` for DP). `g_error` is reported
/// only when `report_g_error` is set.
pub fn metrics(
    beta_hat: &[f64],
    g_hat: &[f64],
    truth: Truth<'_>,
    report_g_error: bool,
) -> Result<Metrics> {
    let (n, p) = truth.x.shape();
    if beta_hat.len() != p || truth.beta0.len() != p {
        return Err(Error::domain("coefficient vectors do not match the design"));
    }
    if g_hat.len() != n || truth.g0_values.len() != n {
        return Err(Error::domain("nuisance vectors do not match the design"));
    }
    let diff: Vec<f64> = beta_hat
        .iter()
        .zip(truth.beta0)
        .map(|(a, b)| a - b)
        .collect();
    let xd = mat_vec(truth.x, &diff);
    let g_diff: Vec<f64> = g_hat
        .iter()
        .zip(truth.g0_values)
        .map(|(a, b)| a - b)
        .collect();
    let pred: Vec<f64> = xd.iter().zip(&g_diff).map(|(a, b)| a + b).collect();
    let (tpr, fpr) = selection_rates(beta_hat, truth.beta0);
    Ok(Metrics {
        pred_error: norm_sq_n(&pred).sqrt(),
        est_error_l1: diff.iter().map(|d| d.abs()).sum(),
        tpr,
        fpr,
        g_error: report_g_error.then(|| norm_sq_n(&g_diff).sqrt()),
    })
}
