//! Experimental designs and seeded data generation.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::model::{mat_vec, norm_sq_n, DesignData};

/// Default sample size of the synthetic study.
pub const DEFAULT_N: usize = 72;

/// Standard deviation of the noise `V_j` in the dependent design
/// `X₁ = 2z + V₁, X₂ = 2z² + V₂, X₃ = −z + V₃`.
pub const DEFAULT_DEPENDENCE_NOISE_SD: f64 = 0.5;

/// Truncation bound of the synthetic standard-normal design entries.
const TRUNCATION: f64 = 3.0;

/// Nuisance functions of the study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NuisanceFn {
    /// `g(z) = 0`
    G1,
    /// `g(z) = −20z² − 10`
    G2,
    /// `g(z) = 3(e^{2z} + sin(12z))`
    G3,
}

impl NuisanceFn {
    pub fn eval(self, z: f64) -> f64 {
        match self {
            NuisanceFn::G1 => 0.0,
            NuisanceFn::G2 => -20.0 * z * z - 10.0,
            NuisanceFn::G3 => 3.0 * ((2.0 * z).exp() + (12.0 * z).sin()),
        }
    }
}

impl fmt::Display for NuisanceFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NuisanceFn::G1 => "G1",
            NuisanceFn::G2 => "G2",
            NuisanceFn::G3 => "G3",
        })
    }
}

impl FromStr for NuisanceFn {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "G1" => Ok(NuisanceFn::G1),
            "G2" => Ok(NuisanceFn::G2),
            "G3" => Ok(NuisanceFn::G3),
            other => Err(Error::domain(format!(
                "unknown nuisance function {other:?}, expected G1, G2 or G3"
            ))),
        }
    }
}

/// Pointwise evaluation of a nuisance function.
pub fn gen_nuisance(g: NuisanceFn, z: &[f64]) -> Vec<f64> {
    z.iter().map(|&v| g.eval(v)).collect()
}

/// Where the design matrix comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum XSource {
    /// i.i.d. standard normal entries truncated to `[−3, 3]`.
    Synthetic,
    /// Columns sampled without replacement from a headerless CSV matrix.
    Csv(PathBuf),
}

/// One experimental cell.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignSpec {
    pub id: u32,
    pub p: usize,
    pub s0: usize,
    pub lsnr: f64,
    pub g: NuisanceFn,
    /// Also generate the dependent variant (DPd).
    pub dependent: bool,
    pub n: usize,
    pub replicates: usize,
    pub base_seed: u64,
    pub source: XSource,
    pub dependence_noise_sd: f64,
}

impl DesignSpec {
    pub fn synthetic(id: u32, p: usize, s0: usize, lsnr: f64, g: NuisanceFn) -> Self {
        Self {
            id,
            p,
            s0,
            lsnr,
            g,
            dependent: true,
            n: DEFAULT_N,
            replicates: 100,
            base_seed: 0,
            source: XSource::Synthetic,
            dependence_noise_sd: DEFAULT_DEPENDENCE_NOISE_SD,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.p < 1 {
            return Err(Error::domain("p must be at least 1"));
        }
        if self.s0 > self.p {
            return Err(Error::domain(format!(
                "s0 = {} exceeds p = {}",
                self.s0, self.p
            )));
        }
        if self.n < 4 {
            return Err(Error::domain(format!(
                "n must be at least 4, got {}",
                self.n
            )));
        }
        if self.replicates < 1 {
            return Err(Error::domain("replicates must be at least 1"));
        }
        if !(self.lsnr.is_finite() && self.lsnr > 0.0) {
            return Err(Error::domain(format!(
                "lsnr must be positive, got {}",
                self.lsnr
            )));
        }
        if !(self.dependence_noise_sd.is_finite() && self.dependence_noise_sd >= 0.0) {
            return Err(Error::domain("dependence noise sd must be >= 0"));
        }
        if self.dependent && self.p < 3 {
            return Err(Error::domain(
                "the dependent design rewrites three columns; needs p >= 3",
            ));
        }
        Ok(())
    }
}

/// Generator for replicate `replicate` of design `design_id`: ChaCha20 keyed
/// by `base_seed` with the stream selected by `(design_id, replicate)`.
pub fn replicate_rng(base_seed: u64, design_id: u32, replicate: u32) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(base_seed);
    rng.set_stream(((design_id as u64) << 32) | replicate as u64);
    rng
}

/// One simulated dataset together with its ground truth.
#[derive(Debug, Clone)]
pub struct SimData {
    pub x: DMatrix<f64>,
    pub z: Vec<f64>,
    pub beta0: Vec<f64>,
    pub g0_values: Vec<f64>,
    pub sigma: f64,
    pub noise: Vec<f64>,
    pub y: Vec<f64>,
}

impl SimData {
    pub fn design_data(&self) -> Result<DesignData> {
        DesignData::new(self.x.clone(), self.z.clone(), self.y.clone())
    }

    /// `Xβ⁰ + g⁰(z)`.
    pub fn signal(&self) -> Vec<f64> {
        mat_vec(&self.x, &self.beta0)
            .iter()
            .zip(&self.g0_values)
            .map(|(a, b)| a + b)
            .collect()
    }
}

/// Reads a headerless CSV of reals (rows are samples).
pub fn load_matrix_csv(path: &Path) -> Result<DMatrix<f64>> {
    let csv_err = |message: String| Error::Csv {
        path: path.to_path_buf(),
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_err(e.to_string()))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| csv_err(e.to_string()))?;
        let row = record
            .iter()
            .enumerate()
            .map(|(col, field)| {
                field
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| {
                        csv_err(format!(
                            "row {}, column {}: {field:?} is not a finite number",
                            line + 1,
                            col + 1
                        ))
                    })
            })
            .collect::<Result<Vec<f64>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(csv_err(format!(
                    "row {} has {} fields, expected {}",
                    line + 1,
                    row.len(),
                    first.len()
                )));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() || rows[0].is_empty() {
        return Err(csv_err("empty matrix".into()));
    }
    let (n, p) = (rows.len(), rows[0].len());
    Ok(DMatrix::from_fn(n, p, |i, j| rows[i][j]))
}

fn truncated_normal<R: Rng>(rng: &mut R) -> f64 {
    loop {
        let v: f64 = rng.sample(StandardNormal);
        if v.abs() <= TRUNCATION {
            return v;
        }
    }
}

/// `σ = ‖Xβ⁰‖ₙ / lSNR`; falls back to 1 when the linear signal vanishes.
pub fn sigma_from_lsnr(linear_signal: &[f64], lsnr: f64) -> f64 {
    let s = norm_sq_n(linear_signal).sqrt() / lsnr;
    if s > 0.0 {
        s
    } else {
        1.0
    }
}

/// Draws one replicate.
///
/// Draw order: z, X, signs of β⁰, ε, then (dependent variant only) the three
/// `V_j`. The independent and dependent variants of a replicate therefore
/// share z, X (outside the rewritten columns), β⁰ and ε.
pub fn gen_design(
    spec: &DesignSpec,
    replicate: u32,
    dependent: bool,
    pool: Option<&DMatrix<f64>>,
) -> Result<SimData> {
    spec.validate()?;
    let mut rng = replicate_rng(spec.base_seed, spec.id, replicate);
    let (n, p) = match (&spec.source, pool) {
        (XSource::Synthetic, _) => (spec.n, spec.p),
        (XSource::Csv(path), Some(m)) => {
            if m.ncols() < spec.p {
                return Err(Error::domain(format!(
                    "{} has {} columns, design needs p = {}",
                    path.display(),
                    m.ncols(),
                    spec.p
                )));
            }
            (m.nrows(), spec.p)
        }
        (XSource::Csv(path), None) => {
            return Err(Error::domain(format!(
                "matrix {} was not loaded",
                path.display()
            )))
        }
    };
    if n < 4 {
        return Err(Error::domain(format!("need at least 4 samples, got {n}")));
    }
    if dependent && p < 3 {
        return Err(Error::domain(
            "the dependent design rewrites three columns; needs p >= 3",
        ));
    }

    let z: Vec<f64> = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
    let mut x = match pool {
        Some(m) if matches!(spec.source, XSource::Csv(_)) => {
            let cols = sample(&mut rng, m.ncols(), p).into_vec();
            m.select_columns(&cols)
        }
        _ => DMatrix::from_fn(n, p, |_, _| truncated_normal(&mut rng)),
    };
    let mut beta0 = vec![0.0; p];
    for b in beta0.iter_mut().take(spec.s0) {
        *b = if rng.random::<bool>() { 1.0 } else { -1.0 };
    }
    let noise: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();

    if dependent {
        let sd = spec.dependence_noise_sd;
        let shapes: [fn(f64) -> f64; 3] = [|z| 2.0 * z, |z| 2.0 * z * z, |z| -z];
        for (j, shape) in shapes.iter().enumerate() {
            for i in 0..n {
                let v: f64 = rng.sample(StandardNormal);
                x[(i, j)] = shape(z[i]) + sd * v;
            }
        }
    }

    let g0_values = gen_nuisance(spec.g, &z);
    let linear = mat_vec(&x, &beta0);
    let sigma = sigma_from_lsnr(&linear, spec.lsnr);
    let y = linear
        .iter()
        .zip(&g0_values)
        .zip(&noise)
        .map(|((l, g), e)| l + g + sigma * e)
        .collect();
    Ok(SimData {
        x,
        z,
        beta0,
        g0_values,
        sigma,
        noise,
        y,
    })
}

/// `√(‖Xβ⁰ + g⁰‖²ₙ / σ²)`.
pub fn tsnr(x: &DMatrix<f64>, beta0: &[f64], g0_values: &[f64], sigma: f64) -> Result<f64> {
    if sigma.is_nan() || sigma <= 0.0 {
        return Err(Error::domain(format!(
            "sigma must be positive, got {sigma}"
        )));
    }
    let signal: Vec<f64> = mat_vec(x, beta0)
        .iter()
        .zip(g0_values)
        .map(|(a, b)| a + b)
        .collect();
    Ok((norm_sq_n(&signal) / (sigma * sigma)).sqrt())
}

/// Pearson correlation.
pub fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    sab / (saa * sbb).sqrt()
}
