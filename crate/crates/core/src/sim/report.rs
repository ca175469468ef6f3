//! CSV output of a study.
//!
//! Every file starts with a header row and carries `schema_version` as its
//! first column. Reals are written with 17 significant digits; absent values
//! are empty fields.
//!
//! | file                    | columns |
//! |-------------------------|---------|
//! | `results.csv`           | schema_version, design_id, replicate, estimator, pred_error, est_error_l1, tpr, fpr, g_error, tsnr, converged, failed, failure |
//! | `summary.csv`           | schema_version, design_id, p, s0, lsnr, g, n, estimator, replicates_ok, replicates_failed, est_error_l1, pred_error, g_error, tpr, fpr, tsnr, converged_fraction |
//! | `plot_design_<id>.csv`  | schema_version, z, g0, dpi_mean, dpi_q05, dpi_q95, dpd_mean, dpd_q05, dpd_q95 |
//! | `timings.csv`           | schema_version, design_id, replicate, estimator, runtime_ms |
//!
//! Wall-clock timings live in their own file so that the other files are a
//! deterministic function of the configuration and seed.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::sim::metrics::{Estimator, ReplicateResult};
use crate::sim::runner::{DesignOutcome, Envelope};

pub const SCHEMA_VERSION: u32 = 1;

pub const RESULTS_HEADER: [&str; 13] = [
    "schema_version",
    "design_id",
    "replicate",
    "estimator",
    "pred_error",
    "est_error_l1",
    "tpr",
    "fpr",
    "g_error",
    "tsnr",
    "converged",
    "failed",
    "failure",
];

pub const SUMMARY_HEADER: [&str; 17] = [
    "schema_version",
    "design_id",
    "p",
    "s0",
    "lsnr",
    "g",
    "n",
    "estimator",
    "replicates_ok",
    "replicates_failed",
    "est_error_l1",
    "pred_error",
    "g_error",
    "tpr",
    "fpr",
    "tsnr",
    "converged_fraction",
];

pub const PLOT_HEADER: [&str; 9] = [
    "schema_version",
    "z",
    "g0",
    "dpi_mean",
    "dpi_q05",
    "dpi_q95",
    "dpd_mean",
    "dpd_q05",
    "dpd_q95",
];

/// 17 significant digits.
pub fn fmt_real(v: f64) -> String {
    format!("{v:.16e}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_real).unwrap_or_default()
}

/// Means over the successful replicates of one estimator in one design.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub design_id: u32,
    pub estimator: Estimator,
    pub replicates_ok: usize,
    pub replicates_failed: usize,
    pub est_error_l1: Option<f64>,
    pub pred_error: Option<f64>,
    pub g_error: Option<f64>,
    pub tpr: Option<f64>,
    pub fpr: Option<f64>,
    pub tsnr: Option<f64>,
    pub converged_fraction: Option<f64>,
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (mut sum, mut count) = (0.0, 0usize);
    for v in values {
        sum += v;
        count += 1;
    }
    (count > 0).then(|| sum / count as f64)
}

/// Per-estimator means of a design, in `LK, LN, DPi, DPd` order.
pub fn summarize(outcome: &DesignOutcome) -> Vec<SummaryRow> {
    Estimator::ALL
        .into_iter()
        .filter_map(|est| {
            let rows: Vec<&ReplicateResult> = outcome
                .results
                .iter()
                .filter(|r| r.estimator == est)
                .collect();
            if rows.is_empty() {
                return None;
            }
            let ok: Vec<&ReplicateResult> = rows
                .iter()
                .copied()
                .filter(|r| r.metrics.is_some())
                .collect();
            let m = |f: fn(&ReplicateResult) -> Option<f64>| mean(ok.iter().filter_map(|r| f(r)));
            Some(SummaryRow {
                design_id: outcome.spec.id,
                estimator: est,
                replicates_ok: ok.len(),
                replicates_failed: rows.len() - ok.len(),
                est_error_l1: m(|r| r.metrics.as_ref().map(|m| m.est_error_l1)),
                pred_error: m(|r| r.metrics.as_ref().map(|m| m.pred_error)),
                g_error: m(|r| r.metrics.as_ref().and_then(|m| m.g_error)),
                tpr: m(|r| r.metrics.as_ref().and_then(|m| m.tpr)),
                fpr: m(|r| r.metrics.as_ref().and_then(|m| m.fpr)),
                tsnr: m(|r| Some(r.tsnr)),
                converged_fraction: m(|r| Some(if r.converged { 1.0 } else { 0.0 })),
            })
        })
        .collect()
}

fn csv_error(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Csv {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

fn writer<W: Write>(inner: W) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(inner)
}

pub fn write_results<W: Write>(out: W, outcomes: &[DesignOutcome]) -> csv::Result<()> {
    let mut w = writer(out);
    w.write_record(RESULTS_HEADER)?;
    for r in outcomes.iter().flat_map(|o| &o.results) {
        let m = r.metrics.as_ref();
        w.write_record([
            SCHEMA_VERSION.to_string(),
            r.design_id.to_string(),
            r.replicate.to_string(),
            r.estimator.to_string(),
            fmt_opt(m.map(|m| m.pred_error)),
            fmt_opt(m.map(|m| m.est_error_l1)),
            fmt_opt(m.and_then(|m| m.tpr)),
            fmt_opt(m.and_then(|m| m.fpr)),
            fmt_opt(m.and_then(|m| m.g_error)),
            fmt_opt(Some(r.tsnr).filter(|t| t.is_finite())),
            (r.converged as u8).to_string(),
            (r.failure.is_some() as u8).to_string(),
            r.failure.clone().unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_summary<W: Write>(out: W, outcomes: &[DesignOutcome]) -> csv::Result<()> {
    let mut w = writer(out);
    w.write_record(SUMMARY_HEADER)?;
    for o in outcomes {
        let s = &o.spec;
        for row in summarize(o) {
            w.write_record([
                SCHEMA_VERSION.to_string(),
                s.id.to_string(),
                s.p.to_string(),
                s.s0.to_string(),
                s.lsnr.to_string(),
                s.g.to_string(),
                s.n.to_string(),
                row.estimator.to_string(),
                row.replicates_ok.to_string(),
                row.replicates_failed.to_string(),
                fmt_opt(row.est_error_l1),
                fmt_opt(row.pred_error),
                fmt_opt(row.g_error),
                fmt_opt(row.tpr),
                fmt_opt(row.fpr),
                fmt_opt(row.tsnr),
                fmt_opt(row.converged_fraction),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_plot<W: Write>(out: W, outcome: &DesignOutcome) -> csv::Result<()> {
    let mut w = writer(out);
    w.write_record(PLOT_HEADER)?;
    let plot = &outcome.plot;
    let env = |e: &Option<Envelope>, k: usize| -> [String; 3] {
        match e {
            Some(e) => [fmt_real(e.mean[k]), fmt_real(e.q05[k]), fmt_real(e.q95[k])],
            None => Default::default(),
        }
    };
    for (k, (&z, &g0)) in plot.grid.iter().zip(&plot.g0).enumerate() {
        let [a, b, c] = env(&plot.dpi, k);
        let [d, e, f] = env(&plot.dpd, k);
        w.write_record([
            SCHEMA_VERSION.to_string(),
            fmt_real(z),
            fmt_real(g0),
            a,
            b,
            c,
            d,
            e,
            f,
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_timings<W: Write>(out: W, outcomes: &[DesignOutcome]) -> csv::Result<()> {
    let mut w = writer(out);
    w.write_record([
        "schema_version",
        "design_id",
        "replicate",
        "estimator",
        "runtime_ms",
    ])?;
    for r in outcomes.iter().flat_map(|o| &o.results) {
        w.write_record([
            SCHEMA_VERSION.to_string(),
            r.design_id.to_string(),
            r.replicate.to_string(),
            r.estimator.to_string(),
            fmt_real(r.runtime_ms),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Files written by [`write_study`].
#[derive(Debug, Clone)]
pub struct StudyFiles {
    pub results: PathBuf,
    pub summary: PathBuf,
    pub timings: PathBuf,
    pub plots: Vec<PathBuf>,
}

pub fn plot_file_name(design_id: u32) -> String {
    format!("plot_design_{design_id}.csv")
}

/// Writes every output file of a study into `dir` (created if missing).
pub fn write_study(dir: &Path, outcomes: &[DesignOutcome]) -> Result<StudyFiles> {
    fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let create = |name: &str| -> Result<(PathBuf, std::io::BufWriter<fs::File>)> {
        let path = dir.join(name);
        let file = fs::File::create(&path).map_err(|source| Error::Io {
            path: path.clone(),
            source,
        })?;
        Ok((path, std::io::BufWriter::new(file)))
    };

    let (results, f) = create("results.csv")?;
    write_results(f, outcomes).map_err(|e| csv_error(&results, e))?;
    let (summary, f) = create("summary.csv")?;
    write_summary(f, outcomes).map_err(|e| csv_error(&summary, e))?;
    let (timings, f) = create("timings.csv")?;
    write_timings(f, outcomes).map_err(|e| csv_error(&timings, e))?;
    let mut plots = Vec::with_capacity(outcomes.len());
    for o in outcomes {
        let (path, f) = create(&plot_file_name(o.spec.id))?;
        write_plot(f, o).map_err(|e| csv_error(&path, e))?;
        plots.push(path);
    }
    Ok(StudyFiles {
        results,
        summary,
        timings,
        plots,
    })
}
