//! Replicate execution: data generation, the four fits, metrics and the
//! nuisance curves behind the plot files.
//!
//! Replicates are independent; [`Executor::Parallel`] dispatches them on a
//! rayon pool and collects results in replicate order, so outputs do not
//! depend on the thread count. Without the `parallel` feature both executors
//! run sequentially.

use std::time::Instant;

use nalgebra::DMatrix;
use serde::Deserialize;

use crate::dpl::{block_descent, dp_fit, Nuisance};
use crate::error::Result;
use crate::lasso::lasso_fit;
use crate::model::{norm_sq_n, PenaltyConfig};
use crate::sim::design::{
    gen_design, gen_nuisance, load_matrix_csv, tsnr, DesignSpec, SimData, XSource,
};
use crate::sim::metrics::{metrics, Estimator, Metrics, ReplicateResult, Truth};
use crate::spline::spline_eval;
use crate::tuning::{
    lambda_default, mu_default, sigma_estimate, sigma_estimate_lasso, DEFAULT_LAMBDA_SCALE,
};

/// Number of equispaced points of the plot grid on `[−0.5, 0.5]`.
pub const PLOT_GRID_POINTS: usize = 201;

/// Source of the noise level σ̂ in `λ = scale·σ̂·√(2 log(2p)/n)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseScale {
    /// The error scale of each estimator's working model: σ for LK and DP,
    /// `√(σ² + ‖g⁰‖²ₙ)` for LN, which treats `g⁰(z)` as part of the error.
    #[default]
    Oracle,
    /// Each estimator estimates σ under its own model: [`sigma_estimate`]
    /// for DP, [`sigma_estimate_lasso`] on `y − g⁰` for LK and on `y` for LN.
    Estimated,
}

/// Tuning shared by all estimators of a study.
#[derive(Debug, Clone, PartialEq)]
pub struct FitSettings {
    pub lambda_scale: f64,
    /// Fixed μ²; `None` uses `mu_default(n)²`.
    pub mu_sq: Option<f64>,
    pub c: f64,
    pub noise: NoiseScale,
}

impl Default for FitSettings {
    fn default() -> Self {
        Self {
            lambda_scale: DEFAULT_LAMBDA_SCALE,
            mu_sq: None,
            c: 1e-3,
            noise: NoiseScale::default(),
        }
    }
}

impl FitSettings {
    pub fn penalty(&self, n: usize, p: usize, sigma: f64) -> PenaltyConfig {
        let mu_sq = self.mu_sq.unwrap_or_else(|| mu_default(n).powi(2));
        PenaltyConfig::new(lambda_default(n, p, sigma, self.lambda_scale), mu_sq).with_c(self.c)
    }

    /// Penalty for `estimator` on `data`, with σ̂ chosen per [`NoiseScale`].
    pub fn penalty_for(&self, estimator: Estimator, data: &SimData) -> Result<PenaltyConfig> {
        let (n, p) = data.x.shape();
        let base = self.penalty(n, p, data.sigma);
        let sigma = match self.noise {
            NoiseScale::Oracle => match estimator {
                Estimator::LN => (data.sigma.powi(2) + norm_sq_n(&data.g0_values)).sqrt(),
                _ => return Ok(base),
            },
            NoiseScale::Estimated => match estimator {
                Estimator::LK => {
                    let r: Vec<f64> = data
                        .y
                        .iter()
                        .zip(&data.g0_values)
                        .map(|(y, g)| y - g)
                        .collect();
                    sigma_estimate_lasso(&data.x, &r, &base)?
                }
                Estimator::LN => sigma_estimate_lasso(&data.x, &data.y, &base)?,
                Estimator::DPi | Estimator::DPd => sigma_estimate(&data.design_data()?, &base)?,
            },
        };
        Ok(self.penalty(n, p, sigma))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Executor {
    Sequential,
    /// `threads: None` uses the global pool.
    Parallel {
        threads: Option<usize>,
    },
}

impl Executor {
    /// `f(0), …, f(count − 1)` in index order.
    pub fn map<T, F>(&self, count: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        match self {
            Executor::Sequential => (0..count).map(f).collect(),
            Executor::Parallel { threads } => parallel_map(*threads, count, f),
        }
    }
}

#[cfg(feature = "parallel")]
fn parallel_map<T, F>(threads: Option<usize>, count: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;
    let run = || (0..count).into_par_iter().map(&f).collect();
    match threads {
        Some(t) => match rayon::ThreadPoolBuilder::new().num_threads(t).build() {
            Ok(pool) => pool.install(run),
            Err(_) => run(),
        },
        None => run(),
    }
}

#[cfg(not(feature = "parallel"))]
fn parallel_map<T, F>(_threads: Option<usize>, count: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..count).map(f).collect()
}

/// Results of one replicate plus `ĝ` on the plot grid for each DP variant.
#[derive(Debug, Clone)]
pub struct ReplicateOutput {
    pub results: Vec<ReplicateResult>,
    pub dpi_curve: Option<Vec<f64>>,
    pub dpd_curve: Option<Vec<f64>>,
}

/// Pointwise mean and 5%/95% quantiles across replicates.
#[derive(Debug, Clone, PartialEq)]
pub struct Envelope {
    pub mean: Vec<f64>,
    pub q05: Vec<f64>,
    pub q95: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlotData {
    pub grid: Vec<f64>,
    pub g0: Vec<f64>,
    pub dpi: Option<Envelope>,
    pub dpd: Option<Envelope>,
}

#[derive(Debug, Clone)]
pub struct DesignOutcome {
    pub spec: DesignSpec,
    /// Ordered by replicate, then estimator.
    pub results: Vec<ReplicateResult>,
    pub plot: PlotData,
}

pub fn plot_grid() -> Vec<f64> {
    let last = (PLOT_GRID_POINTS - 1) as f64;
    (0..PLOT_GRID_POINTS)
        .map(|i| -0.5 + i as f64 / last)
        .collect()
}

struct Fitted {
    metrics: Metrics,
    converged: bool,
    curve: Option<Vec<f64>>,
}

fn fit_one(
    estimator: Estimator,
    data: &SimData,
    cfg: &PenaltyConfig,
    grid: &[f64],
) -> Result<Fitted> {
    let design = data.design_data()?;
    let truth = Truth {
        x: &data.x,
        beta0: &data.beta0,
        g0_values: &data.g0_values,
    };
    match estimator {
        Estimator::LK => {
            let fit = block_descent(&design, cfg, Nuisance::Fixed(&data.g0_values))?;
            Ok(Fitted {
                metrics: metrics(&fit.beta, &data.g0_values, truth, false)?,
                converged: fit.converged,
                curve: None,
            })
        }
        Estimator::LN => {
            let fit = lasso_fit(&data.x, &data.y, cfg.lambda, cfg, None)?;
            let zeros = vec![0.0; data.y.len()];
            Ok(Fitted {
                metrics: metrics(&fit.beta, &zeros, truth, false)?,
                converged: fit.kkt_residual <= cfg.tol_kkt,
                curve: None,
            })
        }
        Estimator::DPi | Estimator::DPd => {
            let fit = dp_fit(&design, cfg)?;
            let g_hat = spline_eval(&fit.spline, &data.z).values;
            Ok(Fitted {
                metrics: metrics(&fit.beta, &g_hat, truth, true)?,
                converged: fit.converged,
                curve: Some(spline_eval(&fit.spline, grid).values),
            })
        }
    }
}

fn fit_timed(
    estimator: Estimator,
    data: &SimData,
    settings: &FitSettings,
    grid: &[f64],
) -> (std::result::Result<(Fitted, f64), String>, f64) {
    let start = Instant::now();
    let outcome = (|| {
        let cfg = settings.penalty_for(estimator, data)?;
        let t = tsnr(&data.x, &data.beta0, &data.g0_values, data.sigma)?;
        Ok((fit_one(estimator, data, &cfg, grid)?, t))
    })()
    .map_err(|e: crate::error::Error| e.to_string());
    (outcome, start.elapsed().as_secs_f64() * 1e3)
}

/// Mean of the metrics of the same estimator on several datasets.
fn mean_metrics(all: &[Metrics]) -> Metrics {
    let k = all.len() as f64;
    let avg = |f: fn(&Metrics) -> f64| all.iter().map(f).sum::<f64>() / k;
    let avg_opt = |f: fn(&Metrics) -> Option<f64>| {
        all.iter()
            .map(f)
            .collect::<Option<Vec<f64>>>()
            .map(|v| v.iter().sum::<f64>() / k)
    };
    Metrics {
        pred_error: avg(|m| m.pred_error),
        est_error_l1: avg(|m| m.est_error_l1),
        tpr: avg_opt(|m| m.tpr),
        fpr: avg_opt(|m| m.fpr),
        g_error: avg_opt(|m| m.g_error),
    }
}

/// Runs every estimator on replicate `replicate` of `spec`.
///
/// DPi is fitted on the independent variant and DPd on the dependent one.
/// The nuisance plays no role for LK and LN given `X`, so when the design
/// has a dependent variant their row is the mean over both variants.
pub fn run_replicate(
    spec: &DesignSpec,
    settings: &FitSettings,
    pool: Option<&DMatrix<f64>>,
    replicate: u32,
) -> ReplicateOutput {
    let grid = plot_grid();
    let independent = gen_design(spec, replicate, false, pool).map_err(|e| e.to_string());
    let dependent = spec
        .dependent
        .then(|| gen_design(spec, replicate, true, pool).map_err(|e| e.to_string()));

    let mut results = Vec::with_capacity(4);
    let mut dpi_curve = None;
    let mut dpd_curve = None;
    let row = |estimator,
               outcome: std::result::Result<(Metrics, f64, bool), String>,
               runtime_ms| match outcome {
        Ok((metrics, tsnr, converged)) => ReplicateResult {
            design_id: spec.id,
            replicate,
            estimator,
            metrics: Some(metrics),
            tsnr,
            converged,
            failure: None,
            runtime_ms,
        },
        Err(message) => ReplicateResult {
            design_id: spec.id,
            replicate,
            estimator,
            metrics: None,
            tsnr: f64::NAN,
            converged: false,
            failure: Some(message),
            runtime_ms,
        },
    };

    for estimator in [Estimator::LK, Estimator::LN] {
        let mut runtime = 0.0;
        let mut fits = Vec::with_capacity(2);
        let mut failure = None;
        for data in std::iter::once(&independent).chain(dependent.as_ref()) {
            match data {
                Ok(d) => {
                    let (outcome, ms) = fit_timed(estimator, d, settings, &grid);
                    runtime += ms;
                    match outcome {
                        Ok(f) => fits.push(f),
                        Err(e) => failure = failure.or(Some(e)),
                    }
                }
                Err(e) => failure = failure.or(Some(e.clone())),
            }
        }
        let outcome = match failure {
            Some(e) => Err(e),
            None => {
                let metrics: Vec<Metrics> = fits.iter().map(|(f, _)| f.metrics.clone()).collect();
                let tsnr = fits.iter().map(|(_, t)| t).sum::<f64>() / fits.len() as f64;
                Ok((
                    mean_metrics(&metrics),
                    tsnr,
                    fits.iter().all(|(f, _)| f.converged),
                ))
            }
        };
        results.push(row(estimator, outcome, runtime));
    }

    let dp_variants = std::iter::once((Estimator::DPi, &independent))
        .chain(dependent.as_ref().map(|d| (Estimator::DPd, d)));
    for (estimator, data) in dp_variants {
        let (outcome, runtime) = match data {
            Ok(d) => fit_timed(estimator, d, settings, &grid),
            Err(e) => (Err(e.clone()), 0.0),
        };
        let outcome = outcome.map(|(fitted, t)| {
            match estimator {
                Estimator::DPi => dpi_curve = fitted.curve,
                _ => dpd_curve = fitted.curve,
            }
            (fitted.metrics, t, fitted.converged)
        });
        results.push(row(estimator, outcome, runtime));
    }
    ReplicateOutput {
        results,
        dpi_curve,
        dpd_curve,
    }
}

/// Type-7 (linear interpolation) sample quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn envelope(curves: &[&Vec<f64>]) -> Option<Envelope> {
    if curves.is_empty() {
        return None;
    }
    let m = curves[0].len();
    let mut env = Envelope {
        mean: vec![0.0; m],
        q05: vec![0.0; m],
        q95: vec![0.0; m],
    };
    let mut column = Vec::with_capacity(curves.len());
    for k in 0..m {
        column.clear();
        column.extend(curves.iter().map(|c| c[k]));
        env.mean[k] = column.iter().sum::<f64>() / column.len() as f64;
        column.sort_by(f64::total_cmp);
        env.q05[k] = quantile_sorted(&column, 0.05);
        env.q95[k] = quantile_sorted(&column, 0.95);
    }
    Some(env)
}

/// Runs all replicates of one design.
pub fn run_design(
    spec: &DesignSpec,
    settings: &FitSettings,
    executor: Executor,
) -> Result<DesignOutcome> {
    spec.validate()?;
    let pool = match &spec.source {
        XSource::Synthetic => None,
        XSource::Csv(path) => Some(load_matrix_csv(path)?),
    };
    let outputs = executor.map(spec.replicates, |r| {
        run_replicate(spec, settings, pool.as_ref(), r as u32)
    });

    let grid = plot_grid();
    let g0 = gen_nuisance(spec.g, &grid);
    let dpi: Vec<&Vec<f64>> = outputs
        .iter()
        .filter_map(|o| o.dpi_curve.as_ref())
        .collect();
    let dpd: Vec<&Vec<f64>> = outputs
        .iter()
        .filter_map(|o| o.dpd_curve.as_ref())
        .collect();
    let plot = PlotData {
        g0,
        dpi: envelope(&dpi),
        dpd: envelope(&dpd),
        grid,
    };
    let results = outputs.into_iter().flat_map(|o| o.results).collect();
    Ok(DesignOutcome {
        spec: spec.clone(),
        results,
        plot,
    })
}
