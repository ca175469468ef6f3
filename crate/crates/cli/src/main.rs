use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use plm_dp::sim::report::fmt_real;
use plm_dp::sim::{load_matrix_csv, run_study, write_study, Executor, StudyConfig};
use plm_dp::{
    dp_fit, fit_ln, lambda_default, lasso_kkt_residual, lasso_objective, mu_default,
    sigma_estimate, sigma_estimate_lasso, DesignData, Error, PenaltyConfig,
};

/// Doubly penalized least squares for partial linear models.
#[derive(Debug, Parser)]
#[command(name = "plm-dp", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a simulation study described by a TOML config.
    Run(RunArgs),
    /// Fit one dataset given as headerless CSV files.
    Fit(FitArgs),
    /// Print the default λ and μ for a problem size.
    Tune(TuneArgs),
}

#[derive(Debug, Args)]
struct Tuning {
    /// Multiplier of the λ rate `σ̂·√(2 log(2p)/n)`.
    #[arg(long)]
    lambda_scale: Option<f64>,
    /// Smoothing weight μ²; defaults to `(n^(-2/5)/100)²`.
    #[arg(long)]
    mu_sq: Option<f64>,
    /// Weight of `∫g²` in the roughness penalty.
    #[arg(long)]
    c: Option<f64>,
}

#[derive(Debug, Args)]
struct RunArgs {
    config: PathBuf,
    /// Overrides `base_seed` of the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; defaults to the available parallelism.
    #[arg(long, env = "PLM_DP_THREADS")]
    threads: Option<usize>,
    /// Exit with status 1 if any replicate fails.
    #[arg(long)]
    strict: bool,
    #[arg(long, default_value = "results")]
    out_dir: PathBuf,
    #[command(flatten)]
    tuning: Tuning,
}

#[derive(Debug, Args)]
struct FitArgs {
    /// n×p design matrix.
    #[arg(long)]
    x: PathBuf,
    /// n values of the nonparametric covariate.
    #[arg(long)]
    z: PathBuf,
    /// n responses.
    #[arg(long)]
    y: PathBuf,
    /// Fixed λ; otherwise chosen from an estimated noise scale.
    #[arg(long)]
    lambda: Option<f64>,
    /// Drop the nuisance and fit the plain lasso of y on X.
    #[arg(long)]
    g_zero: bool,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    #[command(flatten)]
    tuning: Tuning,
}

#[derive(Debug, Args)]
struct TuneArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    p: usize,
    /// Noise scale entering λ.
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,
    #[arg(long, default_value_t = plm_dp::tuning::DEFAULT_LAMBDA_SCALE)]
    lambda_scale: f64,
}

/// A failure and the exit status it maps to.
#[derive(Debug)]
enum Failure {
    /// Unusable input: status 2.
    Input(anyhow::Error),
    /// Anything else: status 1.
    Runtime(anyhow::Error),
}

impl Failure {
    fn from_core(err: Error) -> Self {
        match err {
            Error::Domain(_) | Error::Csv { .. } | Error::Config(_) => Failure::Input(err.into()),
            Error::Io { .. } | Error::Numerical(_) | Error::NonFiniteObjective { .. } => {
                Failure::Runtime(err.into())
            }
        }
    }
}

type CliResult<T> = Result<T, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run(args) => run(args),
        Command::Fit(args) => fit(args),
        Command::Tune(args) => tune(args),
    };
    match outcome {
        Ok(code) => code,
        Err(Failure::Input(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn check_nonnegative(name: &str, value: Option<f64>) -> CliResult<()> {
    match value {
        Some(v) if !(v.is_finite() && v >= 0.0) => Err(Failure::Input(anyhow!(
            "--{name} must be finite and >= 0, got {v}"
        ))),
        _ => Ok(()),
    }
}

fn check_tuning(t: &Tuning) -> CliResult<()> {
    if let Some(s) = t.lambda_scale {
        if !(s.is_finite() && s > 0.0) {
            return Err(Failure::Input(anyhow!(
                "--lambda-scale must be positive, got {s}"
            )));
        }
    }
    check_nonnegative("mu-sq", t.mu_sq)?;
    check_nonnegative("c", t.c)
}

fn run(args: RunArgs) -> CliResult<ExitCode> {
    check_tuning(&args.tuning)?;
    let mut config = StudyConfig::load(&args.config).map_err(|e| match e {
        Error::Io { .. } => Failure::Input(e.into()),
        other => Failure::from_core(other),
    })?;
    if let Some(seed) = args.seed {
        config = config.with_seed(seed);
    }
    let settings = &mut config.settings;
    if let Some(s) = args.tuning.lambda_scale {
        settings.lambda_scale = s;
    }
    if let Some(m) = args.tuning.mu_sq {
        settings.mu_sq = Some(m);
    }
    if let Some(c) = args.tuning.c {
        settings.c = c;
    }
    let executor = match args.threads {
        Some(0) => return Err(Failure::Input(anyhow!("--threads must be positive"))),
        Some(1) => Executor::Sequential,
        threads => Executor::Parallel { threads },
    };

    let outcomes = run_study(&config, executor).map_err(Failure::from_core)?;
    let files = write_study(&args.out_dir, &outcomes).map_err(Failure::from_core)?;

    let failed: usize = outcomes
        .iter()
        .flat_map(|o| &o.results)
        .filter(|r| r.failure.is_some())
        .count();
    let total: usize = outcomes.iter().map(|o| o.results.len()).sum();
    println!("designs:  {}", outcomes.len());
    println!("fits:     {total} ({failed} failed)");
    println!("results:  {}", files.results.display());
    println!("summary:  {}", files.summary.display());
    println!("timings:  {}", files.timings.display());
    for p in &files.plots {
        println!("plot:     {}", p.display());
    }
    if failed > 0 && args.strict {
        eprintln!("error: {failed} fits failed");
        return Ok(ExitCode::FAILURE);
    }
    Ok(ExitCode::SUCCESS)
}

fn load_vector(path: &Path, name: &str) -> CliResult<Vec<f64>> {
    let m = load_matrix_csv(path).map_err(Failure::from_core)?;
    if m.ncols() != 1 {
        return Err(Failure::Input(anyhow!(
            "{name} file {} must have one column, found {}",
            path.display(),
            m.ncols()
        )));
    }
    Ok(m.column(0).iter().copied().collect())
}

fn fit(args: FitArgs) -> CliResult<ExitCode> {
    check_tuning(&args.tuning)?;
    check_nonnegative("lambda", args.lambda)?;
    let x = load_matrix_csv(&args.x).map_err(Failure::from_core)?;
    let z = load_vector(&args.z, "z")?;
    let y = load_vector(&args.y, "y")?;
    let data = DesignData::new(x, z, y).map_err(Failure::from_core)?;
    let (n, p) = (data.n(), data.p());

    let mut cfg = PenaltyConfig::new(
        0.0,
        args.tuning.mu_sq.unwrap_or_else(|| mu_default(n).powi(2)),
    );
    if let Some(c) = args.tuning.c {
        cfg.c = c;
    }
    let scale = args
        .tuning
        .lambda_scale
        .unwrap_or(plm_dp::tuning::DEFAULT_LAMBDA_SCALE);
    cfg.lambda = match args.lambda {
        Some(l) => l,
        None => {
            let sigma = if args.g_zero {
                sigma_estimate_lasso(data.x(), data.y(), &cfg)
            } else {
                sigma_estimate(&data, &cfg)
            }
            .map_err(Failure::from_core)?;
            lambda_default(n, p, sigma, scale)
        }
    };

    fs::create_dir_all(&args.out_dir)
        .with_context(|| format!("creating {}", args.out_dir.display()))
        .map_err(Failure::Runtime)?;

    let (beta, objective, kkt_beta, kkt_g, converged, knots) = if args.g_zero {
        let beta = fit_ln(&data, &cfg).map_err(Failure::from_core)?;
        let objective = lasso_objective(data.x(), data.y(), &beta, cfg.lambda);
        let kkt = lasso_kkt_residual(data.x(), data.y(), &beta, cfg.lambda);
        (beta, objective, kkt, 0.0, kkt <= cfg.tol_kkt, None)
    } else {
        let f = dp_fit(&data, &cfg).map_err(Failure::from_core)?;
        let knots: Vec<(f64, f64)> = f
            .spline
            .knots()
            .iter()
            .copied()
            .zip(f.spline.coeffs().iter().copied())
            .collect();
        (
            f.beta,
            f.objective,
            f.kkt_beta,
            f.kkt_g,
            f.converged,
            Some(knots),
        )
    };

    let write = |name: &str, body: String| -> CliResult<()> {
        let path = args.out_dir.join(name);
        fs::write(&path, body)
            .with_context(|| format!("writing {}", path.display()))
            .map_err(Failure::Runtime)
    };

    let mut text = String::from("index,beta,nonzero\n");
    for (j, b) in beta.iter().enumerate() {
        text.push_str(&format!("{j},{},{}\n", fmt_real(*b), u8::from(*b != 0.0)));
    }
    write("beta.csv", text)?;
    if let Some(knots) = &knots {
        let mut text = String::from("z,g\n");
        for (t, g) in knots {
            text.push_str(&format!("{},{}\n", fmt_real(*t), fmt_real(*g)));
        }
        write("g_knots.csv", text)?;
    }
    let mode = if args.g_zero { "lasso" } else { "dp" };
    let summary = format!(
        "mode,n,p,lambda,mu_sq,c,objective,kkt_beta,kkt_g,converged,support_size\n{mode},{n},{p},{},{},{},{},{},{},{},{}\n",
        fmt_real(cfg.lambda),
        fmt_real(cfg.mu_sq),
        fmt_real(cfg.c),
        fmt_real(objective),
        fmt_real(kkt_beta),
        fmt_real(kkt_g),
        converged,
        beta.iter().filter(|b| **b != 0.0).count(),
    );
    write("fit.csv", summary)?;

    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "mode       {mode}");
    let _ = writeln!(out, "lambda     {:.6e}", cfg.lambda);
    if !args.g_zero {
        let _ = writeln!(out, "mu_sq      {:.6e}", cfg.mu_sq);
        let _ = writeln!(out, "c          {:.6e}", cfg.c);
    }
    let _ = writeln!(out, "objective  {objective:.10e}");
    let _ = writeln!(out, "kkt        beta {kkt_beta:.3e}, g {kkt_g:.3e}");
    let _ = writeln!(out, "converged  {converged}");
    let support: Vec<String> = beta
        .iter()
        .enumerate()
        .filter(|(_, b)| **b != 0.0)
        .map(|(j, _)| j.to_string())
        .collect();
    let _ = writeln!(out, "support    [{}]", support.join(", "));
    Ok(ExitCode::SUCCESS)
}

fn tune(args: TuneArgs) -> CliResult<ExitCode> {
    if args.n == 0 || args.p == 0 {
        return Err(Failure::Input(anyhow!("--n and --p must be positive")));
    }
    if !(args.sigma.is_finite() && args.sigma >= 0.0) {
        return Err(Failure::Input(anyhow!("--sigma must be finite and >= 0")));
    }
    if !(args.lambda_scale.is_finite() && args.lambda_scale > 0.0) {
        return Err(Failure::Input(anyhow!("--lambda-scale must be positive")));
    }
    let lambda = lambda_default(args.n, args.p, args.sigma, args.lambda_scale);
    let mu = mu_default(args.n);
    println!("lambda {}", fmt_real(lambda));
    println!("mu     {}", fmt_real(mu));
    println!("mu_sq  {}", fmt_real(mu * mu));
    Ok(ExitCode::SUCCESS)
}
