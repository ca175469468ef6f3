//! Natural cubic smoothing splines in the value (Reinsch) representation.
//!
//! A natural cubic spline with knots `t₁ < … < t_K` is stored through its
//! values `a_k = g(t_k)`. The second derivatives at the interior knots are
//! `γ = R⁻¹Qᵀa` where `Q` holds divided second differences and `R` is the
//! tridiagonal matrix of knot gaps, so that
//!
//! ```text
//! ∫(g″)² = aᵀΩa,   Ω = QR⁻¹Qᵀ
//! ∫g²    = aᵀGa    (exact piecewise-cubic integration over [t₁, t_K])
//! ```
//!
//! Outside the knot range the spline continues linearly.

use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

/// Gauss–Legendre nodes and weights on `[0, 1]`, exact up to degree 7.
const GL_NODES: [f64; 4] = [
    0.069_431_844_202_973_71,
    0.330_009_478_207_571_87,
    0.669_990_521_792_428_1,
    0.930_568_155_797_026_3,
];
const GL_WEIGHTS: [f64; 4] = [
    0.173_927_422_568_726_93,
    0.326_072_577_431_273_07,
    0.326_072_577_431_273_07,
    0.173_927_422_568_726_93,
];

/// Symmetric tridiagonal positive definite system, factored as `LDLᵀ`.
#[derive(Debug, Clone)]
struct TridiagonalLdl {
    /// Pivots `d_i`.
    pivots: Vec<f64>,
    /// Sub-diagonal multipliers `l_i` (length `m − 1`).
    lower: Vec<f64>,
}

impl TridiagonalLdl {
    fn factor(diag: &[f64], off: &[f64]) -> Result<Self> {
        let m = diag.len();
        let mut pivots = Vec::with_capacity(m);
        let mut lower = Vec::with_capacity(m.saturating_sub(1));
        for i in 0..m {
            let d = if i == 0 {
                diag[0]
            } else {
                let l = off[i - 1] / pivots[i - 1];
                lower.push(l);
                diag[i] - l * off[i - 1]
            };
            if d.is_nan() || d <= 0.0 {
                return Err(Error::Numerical(format!(
                    "tridiagonal system not positive definite at row {i}"
                )));
            }
            pivots.push(d);
        }
        Ok(Self { pivots, lower })
    }

    fn solve_in_place(&self, b: &mut [f64]) {
        let m = self.pivots.len();
        for i in 1..m {
            b[i] -= self.lower[i - 1] * b[i - 1];
        }
        for (v, p) in b.iter_mut().zip(&self.pivots) {
            *v /= p;
        }
        for i in (0..m.saturating_sub(1)).rev() {
            b[i] -= self.lower[i] * b[i + 1];
        }
    }
}

/// Knot-dependent part of a natural cubic spline: knot positions and the two
/// quadratic forms of the penalty.
#[derive(Debug)]
pub struct SplineBasis {
    knots: Vec<f64>,
    gaps: Vec<f64>,
    /// Factorisation of `R`, absent for two knots.
    r_factor: Option<TridiagonalLdl>,
    omega: DMatrix<f64>,
    gram: DMatrix<f64>,
}

impl SplineBasis {
    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn omega(&self) -> &DMatrix<f64> {
        &self.omega
    }

    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    pub fn len(&self) -> usize {
        self.knots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.knots.is_empty()
    }

    /// `R` as a `(K − 2) × (K − 2)` matrix.
    fn r_matrix(&self) -> DMatrix<f64> {
        let m = self.knots.len().saturating_sub(2);
        let h = &self.gaps;
        let mut r = DMatrix::zeros(m, m);
        for i in 0..m {
            r[(i, i)] = (h[i] + h[i + 1]) / 3.0;
            if i + 1 < m {
                r[(i, i + 1)] = h[i + 1] / 6.0;
                r[(i + 1, i)] = h[i + 1] / 6.0;
            }
        }
        r
    }

    /// `Qᵀv` for a vector over knots; result indexed by interior knot.
    fn qt_mul(&self, v: &[f64]) -> Vec<f64> {
        let h = &self.gaps;
        (0..self.knots.len() - 2)
            .map(|m| v[m] / h[m] - v[m + 1] * (1.0 / h[m] + 1.0 / h[m + 1]) + v[m + 2] / h[m + 1])
            .collect()
    }

    /// `Qγ` for a vector over interior knots; result indexed by knot.
    fn q_mul(&self, gamma: &[f64]) -> Vec<f64> {
        let h = &self.gaps;
        let mut out = vec![0.0; self.knots.len()];
        for (m, g) in gamma.iter().enumerate() {
            out[m] += g / h[m];
            out[m + 1] -= g * (1.0 / h[m] + 1.0 / h[m + 1]);
            out[m + 2] += g / h[m + 1];
        }
        out
    }

    /// Second derivatives at every knot (zero at both ends).
    pub fn second_derivatives(&self, values: &[f64]) -> Vec<f64> {
        let k = self.knots.len();
        let mut gamma = vec![0.0; k];
        if let Some(r) = &self.r_factor {
            let mut rhs = self.qt_mul(values);
            r.solve_in_place(&mut rhs);
            gamma[1..k - 1].copy_from_slice(&rhs);
        }
        gamma
    }

    /// `∫(g″)²` of the spline with knot values `values`, summed interval by
    /// interval from the piecewise-linear second derivative.
    pub fn roughness_of(&self, values: &[f64]) -> f64 {
        let gamma = self.second_derivatives(values);
        self.gaps
            .iter()
            .enumerate()
            .map(|(i, &h)| {
                let (p, q) = (gamma[i], gamma[i + 1]);
                h * (p * p + p * q + q * q) / 3.0
            })
            .sum()
    }

    /// `∫g²` over the knot range by Gauss–Legendre quadrature per interval.
    pub fn l2_of(&self, values: &[f64]) -> f64 {
        let gamma = self.second_derivatives(values);
        self.gaps
            .iter()
            .enumerate()
            .map(|(i, &h)| {
                GL_NODES
                    .iter()
                    .zip(&GL_WEIGHTS)
                    .map(|(&u, &w)| {
                        let phi = local_shape(u, h);
                        let g = phi[0] * values[i]
                            + phi[1] * values[i + 1]
                            + phi[2] * gamma[i]
                            + phi[3] * gamma[i + 1];
                        h * w * g * g
                    })
                    .sum::<f64>()
            })
            .sum()
    }

    /// Index of the knot equal to `t`, if any.
    pub fn knot_index(&self, t: f64) -> Option<usize> {
        self.knots.binary_search_by(|k| k.total_cmp(&t)).ok()
    }
}

/// Natural cubic spline: shared basis plus knot values.
#[derive(Debug, Clone)]
pub struct SplineModel {
    basis: Arc<SplineBasis>,
    coeffs: DVector<f64>,
}

impl SplineModel {
    pub fn from_coeffs(basis: Arc<SplineBasis>, coeffs: DVector<f64>) -> Result<Self> {
        if coeffs.len() != basis.len() {
            return Err(Error::domain(format!(
                "{} coefficients for {} knots",
                coeffs.len(),
                basis.len()
            )));
        }
        Ok(Self { basis, coeffs })
    }

    pub fn basis(&self) -> &Arc<SplineBasis> {
        &self.basis
    }

    pub fn knots(&self) -> &[f64] {
        self.basis.knots()
    }

    pub fn coeffs(&self) -> &DVector<f64> {
        &self.coeffs
    }

    pub fn omega(&self) -> &DMatrix<f64> {
        self.basis.omega()
    }

    pub fn gram(&self) -> &DMatrix<f64> {
        self.basis.gram()
    }

    /// Same knots, new values.
    pub fn with_coeffs(&self, coeffs: DVector<f64>) -> Result<Self> {
        Self::from_coeffs(self.basis.clone(), coeffs)
    }

    /// `∫(g″)² = aᵀΩa`, the curvature part of the penalty.
    pub fn roughness(&self) -> f64 {
        self.basis.roughness_of(self.coeffs.as_slice())
    }

    /// `∫(g″)² + c∫g² = aᵀ(Ω + cG)a`.
    ///
    /// Evaluated by integration rather than through the dense forms, whose
    /// entries grow like the inverse cube of the smallest knot gap.
    pub fn j_squared(&self, c: f64) -> f64 {
        let r = self.roughness();
        if c == 0.0 {
            r
        } else {
            r + c * self.basis.l2_of(self.coeffs.as_slice())
        }
    }
}

/// Values at query points; `extrapolated` counts queries outside the knot range.
#[derive(Debug, Clone, PartialEq)]
pub struct SplineEvaluation {
    pub values: Vec<f64>,
    pub extrapolated: usize,
}

/// Sorted distinct values of `z`.
pub fn distinct_sorted(z: &[f64]) -> Vec<f64> {
    let mut knots = z.to_vec();
    knots.sort_by(f64::total_cmp);
    knots.dedup();
    knots
}

/// Builds the natural cubic spline basis with knots at the distinct values
/// of `z`; the returned model has all coefficients set to zero.
pub fn build_spline_basis(z: &[f64]) -> Result<SplineModel> {
    if z.iter().any(|v| !v.is_finite()) {
        return Err(Error::domain("non-finite nuisance covariate"));
    }
    let knots = distinct_sorted(z);
    let k = knots.len();
    if k < 2 {
        return Err(Error::domain(format!(
            "need at least 2 distinct z values, got {k}"
        )));
    }
    let gaps: Vec<f64> = knots.windows(2).map(|w| w[1] - w[0]).collect();

    let r_factor = if k > 2 {
        let diag: Vec<f64> = (0..k - 2).map(|m| (gaps[m] + gaps[m + 1]) / 3.0).collect();
        let off: Vec<f64> = (0..k - 3).map(|m| gaps[m + 1] / 6.0).collect();
        Some(TridiagonalLdl::factor(&diag, &off)?)
    } else {
        None
    };

    let mut basis = SplineBasis {
        knots,
        gaps,
        r_factor,
        omega: DMatrix::zeros(k, k),
        gram: DMatrix::zeros(k, k),
    };

    // Γ maps knot values to second derivatives at all knots (rows 0, K-1 zero).
    let gamma = gamma_matrix(&basis);
    basis.omega = omega_from_gamma(&basis, &gamma);
    basis.gram = gram_from_gamma(&basis, &gamma);

    Ok(SplineModel {
        basis: Arc::new(basis),
        coeffs: DVector::zeros(k),
    })
}

fn gamma_matrix(basis: &SplineBasis) -> DMatrix<f64> {
    let k = basis.len();
    let mut gamma = DMatrix::zeros(k, k);
    let mut e = vec![0.0; k];
    for col in 0..k {
        e[col] = 1.0;
        let g = basis.second_derivatives(&e);
        gamma.column_mut(col).copy_from_slice(&g);
        e[col] = 0.0;
    }
    gamma
}

/// `Γᵀ·M = Q·R⁻¹·M_interior`; rows 0 and K−1 of `M` are ignored.
fn gamma_t_mul(basis: &SplineBasis, m: &DMatrix<f64>) -> DMatrix<f64> {
    let k = basis.len();
    let mut out = DMatrix::zeros(k, m.ncols());
    let Some(r) = &basis.r_factor else {
        return out;
    };
    let h = &basis.gaps;
    let mut col = vec![0.0; k - 2];
    for c in 0..m.ncols() {
        for i in 0..k - 2 {
            col[i] = m[(i + 1, c)];
        }
        r.solve_in_place(&mut col);
        for (i, &v) in col.iter().enumerate() {
            out[(i, c)] += v / h[i];
            out[(i + 1, c)] -= v * (1.0 / h[i] + 1.0 / h[i + 1]);
            out[(i + 2, c)] += v / h[i + 1];
        }
    }
    out
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let k = m.nrows();
    for i in 0..k {
        for j in i + 1..k {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

fn omega_from_gamma(basis: &SplineBasis, gamma: &DMatrix<f64>) -> DMatrix<f64> {
    // Ω = Q R⁻¹ Qᵀ = Q Γ_interior
    let k = basis.len();
    let h = &basis.gaps;
    let mut omega = DMatrix::zeros(k, k);
    for i in 0..k.saturating_sub(2) {
        let row = gamma.row(i + 1);
        let (a, b, c) = (1.0 / h[i], -(1.0 / h[i] + 1.0 / h[i + 1]), 1.0 / h[i + 1]);
        for col in 0..k {
            let v = row[col];
            omega[(i, col)] += a * v;
            omega[(i + 1, col)] += b * v;
            omega[(i + 2, col)] += c * v;
        }
    }
    symmetrize(&mut omega);
    omega
}

/// `T·M` for a tridiagonal `T` stored densely.
fn tridiagonal_mul(t: &DMatrix<f64>, m: &DMatrix<f64>) -> DMatrix<f64> {
    let k = t.nrows();
    let mut out = DMatrix::zeros(k, m.ncols());
    for c in 0..m.ncols() {
        for i in 0..k {
            let lo = i.saturating_sub(1);
            let hi = (i + 1).min(k - 1);
            out[(i, c)] = (lo..=hi).map(|j| t[(i, j)] * m[(j, c)]).sum();
        }
    }
    out
}

/// Local functions on one interval, `u ∈ [0, 1]`: coefficients of
/// `(a_i, a_{i+1}, γ_i, γ_{i+1})`.
fn local_shape(u: f64, h: f64) -> [f64; 4] {
    let w = -h * h / 6.0 * u * (1.0 - u);
    [1.0 - u, u, w * (2.0 - u), w * (1.0 + u)]
}

fn gram_from_gamma(basis: &SplineBasis, gamma: &DMatrix<f64>) -> DMatrix<f64> {
    let k = basis.len();
    // Tridiagonal blocks of the mass matrix of v = [a; γ].
    let mut m_aa = DMatrix::zeros(k, k);
    let mut m_ag = DMatrix::zeros(k, k);
    let mut m_gg = DMatrix::zeros(k, k);
    for (i, &h) in basis.gaps.iter().enumerate() {
        let mut local = [[0.0; 4]; 4];
        for (&u, &w) in GL_NODES.iter().zip(&GL_WEIGHTS) {
            let phi = local_shape(u, h);
            for a in 0..4 {
                for b in 0..4 {
                    local[a][b] += h * w * phi[a] * phi[b];
                }
            }
        }
        let idx = [i, i + 1];
        for a in 0..2 {
            for b in 0..2 {
                m_aa[(idx[a], idx[b])] += local[a][b];
                m_ag[(idx[a], idx[b])] += local[a][b + 2];
                m_gg[(idx[a], idx[b])] += local[a + 2][b + 2];
            }
        }
    }
    // G = Maa + Mag Γ + Γᵀ (Magᵀ + Mgg Γ)
    let mag_gamma = tridiagonal_mul(&m_ag, gamma);
    let h_mat = m_ag.transpose() + tridiagonal_mul(&m_gg, gamma);
    let mut gram = m_aa + mag_gamma + gamma_t_mul(basis, &h_mat);
    symmetrize(&mut gram);
    gram
}

/// Evaluates the natural cubic interpolant of `(knots, coeffs)`, continuing
/// linearly outside the knot range.
pub fn spline_eval(model: &SplineModel, zq: &[f64]) -> SplineEvaluation {
    let basis = &model.basis;
    let t = basis.knots();
    let a = model.coeffs.as_slice();
    let k = t.len();
    let gamma = basis.second_derivatives(a);
    let h = &basis.gaps;
    let left_slope = (a[1] - a[0]) / h[0] - h[0] * (2.0 * gamma[0] + gamma[1]) / 6.0;
    let right_slope =
        (a[k - 1] - a[k - 2]) / h[k - 2] + h[k - 2] * (gamma[k - 2] + 2.0 * gamma[k - 1]) / 6.0;

    let mut extrapolated = 0;
    let values = zq
        .iter()
        .map(|&q| {
            if q < t[0] {
                extrapolated += 1;
                a[0] + left_slope * (q - t[0])
            } else if q >= t[k - 1] {
                if q > t[k - 1] {
                    extrapolated += 1;
                }
                a[k - 1] + right_slope * (q - t[k - 1])
            } else {
                // t[i] <= q < t[i+1]
                let i = t.partition_point(|&x| x <= q) - 1;
                let u = (q - t[i]) / h[i];
                let phi = local_shape(u, h[i]);
                phi[0] * a[i] + phi[1] * a[i + 1] + phi[2] * gamma[i] + phi[3] * gamma[i + 1]
            }
        })
        .collect();
    SplineEvaluation {
        values,
        extrapolated,
    }
}

/// `aᵀΩa + c·aᵀGa`.
pub fn j_squared(model: &SplineModel, c: f64) -> f64 {
    model.j_squared(c)
}

/// Penalized least-squares smoother for fixed observation points and
/// penalty weights.
///
/// Solves `(NᵀN/n + μ²(Ω + cG))·a = Nᵀr/n` where `N` is the incidence
/// matrix from observations to knots. The system matrix is factored once.
#[derive(Debug, Clone)]
pub struct SplineSmoother {
    basis: Arc<SplineBasis>,
    knot_of_obs: Vec<usize>,
    counts: Vec<f64>,
    system: DMatrix<f64>,
    factor: Factor,
}

/// Factorization of the smoothing system `A = D + μ²(Ω + cG)`.
///
/// `Woodbury` splits `A = M + μ²QR⁻¹Qᵀ` with `M = D + μ²cG` and solves
/// through `S = R + μ²QᵀM⁻¹Q`, which never forms `Ω`. The dense `Ω` carries
/// rounding of order `ε·max|Ω|` into its affine null space, while `Q`
/// annihilates affine vectors up to relative rounding only.
///
/// `Direct` is a plain Cholesky factor of `A`, used when `M` is singular.
/// When rounding in `μ²P` swamps `D`, `Spectral` factors `A` in the
/// eigenbasis `V` of `P = Ω + cG`, where it reads `VᵀDV + μ²Λ` with `Λ`
/// clipped at zero.
#[derive(Debug, Clone)]
enum Factor {
    /// `A = M + μ²QR⁻¹Qᵀ` with `M = D + μ²cG = LLᵀ`, `W = L⁻¹Q` and
    /// `S = R + μ²WᵀW`.
    Woodbury {
        m: Cholesky<f64, Dyn>,
        w: DMatrix<f64>,
        s: Cholesky<f64, Dyn>,
        mu_sq: f64,
    },
    Direct(Cholesky<f64, Dyn>),
    Spectral {
        v: DMatrix<f64>,
        chol: Cholesky<f64, Dyn>,
    },
}

impl Factor {
    fn new(
        basis: &SplineBasis,
        diag: &[f64],
        mu_sq: f64,
        c: f64,
        system: &DMatrix<f64>,
    ) -> Option<Self> {
        Self::woodbury(basis, diag, mu_sq, c)
            .or_else(|| Cholesky::new(system.clone()).map(Self::Direct))
            .or_else(|| Self::spectral(diag, &(basis.omega() + basis.gram() * c), mu_sq))
    }

    fn woodbury(basis: &SplineBasis, diag: &[f64], mu_sq: f64, c: f64) -> Option<Self> {
        let mut m = basis.gram() * (mu_sq * c);
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] += d;
        }
        let m = Cholesky::new(m)?;
        let w = lower_solve_q(m.l_dirty(), basis);
        let mut s = basis.r_matrix() + (w.transpose() * &w) * mu_sq;
        symmetrize(&mut s);
        let s = Cholesky::new(s)?;
        Some(Self::Woodbury { m, w, s, mu_sq })
    }

    fn spectral(diag: &[f64], penalty: &DMatrix<f64>, mu_sq: f64) -> Option<Self> {
        let eig = penalty.clone().symmetric_eigen();
        let v = eig.eigenvectors;
        let mut m = v.transpose() * DMatrix::from_diagonal(&DVector::from_column_slice(diag)) * &v;
        for (i, &l) in eig.eigenvalues.iter().enumerate() {
            m[(i, i)] += mu_sq * l.max(0.0);
        }
        symmetrize(&mut m);
        Cholesky::new(m).map(|chol| Self::Spectral { v, chol })
    }

    fn solve(&self, basis: &SplineBasis, b: &DVector<f64>) -> DVector<f64> {
        match self {
            Self::Woodbury { m, s, mu_sq, .. } => {
                let base = m.solve(b);
                let t = DVector::from_vec(basis.qt_mul(base.as_slice())) * *mu_sq;
                let gamma = s.solve(&t);
                let rhs = b - DVector::from_vec(basis.q_mul(gamma.as_slice()));
                m.solve(&rhs)
            }
            Self::Direct(chol) => chol.solve(b),
            Self::Spectral { v, chol } => v * chol.solve(&(v.transpose() * b)),
        }
    }

    fn inverse(&self) -> DMatrix<f64> {
        match self {
            Self::Woodbury { m, w, s, mu_sq } => {
                let u = m
                    .l_dirty()
                    .lower_triangle()
                    .tr_solve_lower_triangular(w)
                    .expect("Cholesky factor has a positive diagonal");
                let correction = &u * s.solve(&u.transpose()) * *mu_sq;
                m.inverse() - correction
            }
            Self::Direct(chol) => chol.inverse(),
            Self::Spectral { v, chol } => v * chol.inverse() * v.transpose(),
        }
    }
}

/// `L⁻¹Q` for lower-triangular `L`. Column `j` of `Q` vanishes above row
/// `j`, and so does column `j` of the result.
fn lower_solve_q(l: &DMatrix<f64>, basis: &SplineBasis) -> DMatrix<f64> {
    let k = basis.len();
    let cols = k.saturating_sub(2);
    let h = &basis.gaps;
    let l = l.as_slice();
    let mut w = DMatrix::zeros(k, cols);
    for (j, x) in w.as_mut_slice().chunks_exact_mut(k).enumerate() {
        x[j] = 1.0 / h[j];
        x[j + 1] = -(1.0 / h[j] + 1.0 / h[j + 1]);
        x[j + 2] = 1.0 / h[j + 1];
        for i in j..k {
            let col = &l[i * k..(i + 1) * k];
            let xi = x[i] / col[i];
            x[i] = xi;
            if xi != 0.0 {
                for (xr, lr) in x[i + 1..].iter_mut().zip(&col[i + 1..]) {
                    *xr -= lr * xi;
                }
            }
        }
    }
    w
}

impl SplineSmoother {
    pub fn new(model: &SplineModel, z: &[f64], mu_sq: f64, c: f64) -> Result<Self> {
        if !(mu_sq.is_finite() && mu_sq >= 0.0 && c.is_finite() && c >= 0.0) {
            return Err(Error::domain(format!(
                "invalid smoothing weights mu_sq={mu_sq}, c={c}"
            )));
        }
        if z.is_empty() {
            return Err(Error::domain("no observations to smooth"));
        }
        let basis = model.basis.clone();
        let k = basis.len();
        let n = z.len() as f64;
        let mut counts = vec![0.0; k];
        let knot_of_obs = z
            .iter()
            .map(|&zi| {
                basis.knot_index(zi).ok_or_else(|| {
                    Error::domain(format!(
                        "observation z={zi} is not a knot of the spline basis"
                    ))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        for &idx in &knot_of_obs {
            counts[idx] += 1.0;
        }

        let diag: Vec<f64> = counts.iter().map(|m| m / n).collect();
        let mut system = (basis.omega() + basis.gram() * c) * mu_sq;
        for (i, &d) in diag.iter().enumerate() {
            system[(i, i)] += d;
        }
        let factor = Factor::new(&basis, &diag, mu_sq, c, &system).ok_or_else(|| {
            Error::Numerical(format!(
                "smoothing system is singular (mu_sq={mu_sq}, c={c}, {} of {k} knots observed)",
                counts.iter().filter(|&&m| m > 0.0).count()
            ))
        })?;
        Ok(Self {
            basis,
            knot_of_obs,
            counts,
            system,
            factor,
        })
    }

    pub fn basis(&self) -> &Arc<SplineBasis> {
        &self.basis
    }

    pub fn knot_of_obs(&self) -> &[usize] {
        &self.knot_of_obs
    }

    /// `NᵀN/n + μ²(Ω + cG)`.
    pub fn system_matrix(&self) -> &DMatrix<f64> {
        &self.system
    }

    /// `Nᵀr/n`.
    pub fn project(&self, r: &[f64]) -> DVector<f64> {
        let n = r.len() as f64;
        let mut rhs = DVector::zeros(self.basis.len());
        for (&idx, &ri) in self.knot_of_obs.iter().zip(r) {
            rhs[idx] += ri;
        }
        rhs / n
    }

    pub fn fit(&self, r: &[f64]) -> Result<SplineModel> {
        if r.len() != self.knot_of_obs.len() {
            return Err(Error::domain(format!(
                "residual has length {}, smoother built for {}",
                r.len(),
                self.knot_of_obs.len()
            )));
        }
        let coeffs = self.factor.solve(&self.basis, &self.project(r));
        SplineModel::from_coeffs(self.basis.clone(), coeffs)
    }

    /// `g(zᵢ)` for every observation.
    pub fn fitted_values(&self, model: &SplineModel) -> Vec<f64> {
        self.knot_of_obs.iter().map(|&k| model.coeffs[k]).collect()
    }

    /// Max-norm of the normal-equation residual `A·a − Nᵀr/n`, divided by
    /// `max(1, ‖A‖∞)` so that rounding in a heavily penalized system does not
    /// register as a violation.
    pub fn normal_equation_residual(&self, model: &SplineModel, r: &[f64]) -> f64 {
        let scale = self
            .system
            .row_iter()
            .map(|row| row.iter().map(|v| v.abs()).sum::<f64>())
            .fold(1.0, f64::max);
        (&self.system * model.coeffs() - self.project(r)).amax() / scale
    }

    /// Trace of the smoother matrix `N A⁻¹ Nᵀ / n`.
    pub fn trace(&self) -> f64 {
        let inv = self.factor.inverse();
        let n = self.knot_of_obs.len() as f64;
        self.counts
            .iter()
            .enumerate()
            .map(|(k, m)| inv[(k, k)] * m / n)
            .sum()
    }
}

/// Fits `g` minimizing `‖r − g(z)‖²ₙ + μ²(∫(g″)² + c∫g²)` on the knots of `model`.
pub fn spline_fit(
    model: &SplineModel,
    z: &[f64],
    r: &[f64],
    mu_sq: f64,
    c: f64,
) -> Result<SplineModel> {
    SplineSmoother::new(model, z, mu_sq, c)?.fit(r)
}
