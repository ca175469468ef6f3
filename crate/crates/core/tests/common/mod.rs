//! Reference implementations shared by the integration tests.
//!
//! Nothing here calls into the solvers under test: the lasso oracle is a
//! refined grid search, the spline oracle works in the truncated-power
//! natural-spline basis with penalty matrices from Gauss–Legendre quadrature,
//! and random instances come from their own seeded generator.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use plm_dp::{DesignData, PenaltyConfig};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_matrix(rng: &mut ChaCha8Rng, n: usize, p: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, p, |_, _| rng.sample(StandardNormal))
}

pub fn gaussian_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

/// `n` draws from Uniform[−0.5, 0.5].
pub fn uniform_z(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random::<f64>() - 0.5).collect()
}

pub fn xb(x: &DMatrix<f64>, beta: &[f64]) -> Vec<f64> {
    (x * DVector::from_column_slice(beta)).as_slice().to_vec()
}

pub fn mean_sq(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>() / v.len() as f64
}

/// `‖r − Xβ‖²ₙ + λ‖β‖₁`, recomputed from scratch.
pub fn lasso_objective(x: &DMatrix<f64>, r: &[f64], beta: &[f64], lambda: f64) -> f64 {
    let fitted = xb(x, beta);
    let resid: Vec<f64> = r.iter().zip(&fitted).map(|(a, b)| a - b).collect();
    mean_sq(&resid) + lambda * beta.iter().map(|b| b.abs()).sum::<f64>()
}

/// Minimizes `f` over the box `lo ≤ x ≤ hi` by repeated grid search.
///
/// Each level evaluates a grid of `points` values per coordinate, then
/// recentres a window of five grid steps around the best point. Levels stop
/// once the grid step is below `final_step`.
pub fn refined_grid_min(
    f: &dyn Fn(&[f64]) -> f64,
    lo: &[f64],
    hi: &[f64],
    points: usize,
    final_step: f64,
) -> (Vec<f64>, f64) {
    let d = lo.len();
    let (mut lo, mut hi) = (lo.to_vec(), hi.to_vec());
    let (bound_lo, bound_hi) = (lo.clone(), hi.clone());
    let mut best = lo.clone();
    let mut best_val = f64::INFINITY;
    loop {
        let steps: Vec<f64> = (0..d)
            .map(|k| (hi[k] - lo[k]) / (points - 1) as f64)
            .collect();
        let mut idx = vec![0usize; d];
        let mut x = vec![0.0; d];
        loop {
            for k in 0..d {
                x[k] = lo[k] + steps[k] * idx[k] as f64;
            }
            let v = f(&x);
            if v < best_val {
                best_val = v;
                best.copy_from_slice(&x);
            }
            let mut k = 0;
            while k < d {
                idx[k] += 1;
                if idx[k] < points {
                    break;
                }
                idx[k] = 0;
                k += 1;
            }
            if k == d {
                break;
            }
        }
        if steps.iter().all(|&s| s < final_step) {
            return (best, best_val);
        }
        for k in 0..d {
            let w = 5.0 * steps[k];
            lo[k] = (best[k] - w).max(bound_lo[k]);
            hi[k] = (best[k] + w).min(bound_hi[k]);
        }
    }
}

/// Gauss–Legendre rule with 4 nodes on [0, 1]: exact up to degree 7.
pub fn gauss_legendre_01() -> ([f64; 4], [f64; 4]) {
    let a = (3.0 / 7.0 - 2.0 / 7.0 * (6.0f64 / 5.0).sqrt()).sqrt();
    let b = (3.0 / 7.0 + 2.0 / 7.0 * (6.0f64 / 5.0).sqrt()).sqrt();
    let wa = (18.0 + 30f64.sqrt()) / 36.0;
    let wb = (18.0 - 30f64.sqrt()) / 36.0;
    let nodes = [-b, -a, a, b].map(|t| 0.5 * (t + 1.0));
    let weights = [wb, wa, wa, wb].map(|w| 0.5 * w);
    (nodes, weights)
}

pub fn distinct_sorted(z: &[f64]) -> Vec<f64> {
    let mut k = z.to_vec();
    k.sort_by(f64::total_cmp);
    k.dedup();
    k
}

/// Natural cubic spline basis in truncated-power form:
/// `1, x, d_k(x) − d_{K−1}(x)` with
/// `d_k(x) = ((x − ξ_k)₊³ − (x − ξ_K)₊³)/(ξ_K − ξ_k)`.
pub struct PowerBasis {
    pub knots: Vec<f64>,
}

impl PowerBasis {
    pub fn new(knots: Vec<f64>) -> Self {
        assert!(knots.len() >= 2);
        Self { knots }
    }

    pub fn len(&self) -> usize {
        self.knots.len()
    }

    fn d(&self, k: usize, x: f64, deriv: u8) -> f64 {
        let t = &self.knots;
        let last = t[t.len() - 1];
        let pos = |a: f64| (x - a).max(0.0);
        let f = |a: f64| match deriv {
            0 => pos(a).powi(3),
            _ => 6.0 * pos(a),
        };
        (f(t[k]) - f(last)) / (last - t[k])
    }

    /// Value (`deriv = 0`) or second derivative (`deriv = 2`) of every basis
    /// function at `x`.
    pub fn row(&self, x: f64, deriv: u8) -> Vec<f64> {
        let k = self.len();
        let mut out = Vec::with_capacity(k);
        match deriv {
            0 => {
                out.push(1.0);
                out.push(x);
            }
            _ => {
                out.push(0.0);
                out.push(0.0);
            }
        }
        for j in 0..k - 2 {
            out.push(self.d(j, x, deriv) - self.d(k - 2, x, deriv));
        }
        out
    }

    /// `∫ b_i b_j` (`deriv = 0`) or `∫ b_i″ b_j″` (`deriv = 2`) over the knot
    /// range.
    pub fn gram(&self, deriv: u8) -> DMatrix<f64> {
        let k = self.len();
        let (nodes, weights) = gauss_legendre_01();
        let mut m = DMatrix::zeros(k, k);
        for w in self.knots.windows(2) {
            let h = w[1] - w[0];
            for (u, wt) in nodes.iter().zip(&weights) {
                let b = DVector::from_vec(self.row(w[0] + u * h, deriv));
                m += &b * b.transpose() * (wt * h);
            }
        }
        m
    }

    pub fn design(&self, z: &[f64]) -> DMatrix<f64> {
        let k = self.len();
        DMatrix::from_fn(z.len(), k, |i, j| self.row(z[i], 0)[j])
    }
}

/// Penalized spline regression solved with dense matrices and LU.
pub struct DenseSmoother {
    pub basis: PowerBasis,
    b: DMatrix<f64>,
    system: DMatrix<f64>,
    pub penalty: DMatrix<f64>,
}

impl DenseSmoother {
    pub fn new(z: &[f64], mu_sq: f64, c: f64) -> Self {
        let basis = PowerBasis::new(distinct_sorted(z));
        let n = z.len() as f64;
        let b = basis.design(z);
        let penalty = basis.gram(2) + basis.gram(0) * c;
        let system = b.transpose() * &b / n + &penalty * mu_sq;
        Self {
            basis,
            b,
            system,
            penalty,
        }
    }

    /// Basis coefficients of the fit to `r`.
    pub fn coefficients(&self, r: &[f64]) -> DVector<f64> {
        let n = r.len() as f64;
        let rhs = self.b.transpose() * DVector::from_column_slice(r) / n;
        self.system
            .clone()
            .lu()
            .solve(&rhs)
            .expect("dense smoothing system is singular")
    }

    /// Fitted function at the knots.
    pub fn knot_values(&self, theta: &DVector<f64>) -> Vec<f64> {
        self.basis
            .knots
            .iter()
            .map(|&t| DVector::from_vec(self.basis.row(t, 0)).dot(theta))
            .collect()
    }

    /// `min_g ‖u − g(z)‖²ₙ + μ²J²(g)` at the exact minimizer.
    pub fn profile(&self, u: &[f64], mu_sq: f64) -> f64 {
        let theta = self.coefficients(u);
        let fitted = &self.b * &theta;
        let resid: Vec<f64> = u.iter().zip(fitted.iter()).map(|(a, b)| a - b).collect();
        mean_sq(&resid) + mu_sq * theta.dot(&(&self.penalty * &theta))
    }
}

/// `∫ s″²` and `∫ s²` over the knot range for any piecewise-cubic `s` given
/// as a black box. Second derivatives come from central differences inside
/// each knot interval, which are exact for cubics.
pub fn quadrature_penalty(knots: &[f64], s: &dyn Fn(f64) -> f64) -> (f64, f64) {
    let (nodes, weights) = gauss_legendre_01();
    let (mut rough, mut l2) = (0.0, 0.0);
    for w in knots.windows(2) {
        let h = w[1] - w[0];
        for (u, wt) in nodes.iter().zip(&weights) {
            let x = w[0] + u * h;
            let step = 0.5 * h * u.min(1.0 - u);
            let second = (s(x + step) - 2.0 * s(x) + s(x - step)) / (step * step);
            rough += wt * h * second * second;
            let v = s(x);
            l2 += wt * h * v * v;
        }
    }
    (rough, l2)
}

/// `n = 8`, `p = 2`, four distinct covariate values each observed twice.
pub fn tiny_instance(seed: u64) -> DesignData {
    let mut g = rng(seed);
    let x = gaussian_matrix(&mut g, 8, 2);
    let base = uniform_z(&mut g, 4);
    let z: Vec<f64> = (0..8).map(|i| base[i % 4]).collect();
    let beta = [1.0, -0.5];
    let signal = xb(&x, &beta);
    let y = (0..8)
        .map(|i| signal[i] + z[i] * z[i] * 4.0 + 0.3 * gaussian_vec(&mut g, 1)[0])
        .collect();
    DesignData::new(x, z, y).unwrap()
}

/// Global minimizer of the DP objective over β by a refined grid search in
/// each closed orthant, with the g-block solved exactly for every β.
pub fn dp_oracle(data: &DesignData, cfg: &PenaltyConfig) -> (Vec<f64>, f64) {
    let dense = DenseSmoother::new(data.z(), cfg.mu_sq, cfg.c);
    let f = |b: &[f64]| {
        let fitted = xb(data.x(), b);
        let u: Vec<f64> = data.y().iter().zip(&fitted).map(|(y, v)| y - v).collect();
        dense.profile(&u, cfg.mu_sq) + cfg.lambda * b.iter().map(|v| v.abs()).sum::<f64>()
    };
    let bound = mean_sq(data.y()) / cfg.lambda;
    let mut best = (vec![0.0; 2], f64::INFINITY);
    for signs in [[1.0, 1.0], [1.0, -1.0], [-1.0, 1.0], [-1.0, -1.0]] {
        let orthant = |b: &[f64]| f(&[signs[0] * b[0], signs[1] * b[1]]);
        let (b, v) = refined_grid_min(&orthant, &[0.0, 0.0], &[bound, bound], 41, 1e-7);
        if v < best.1 {
            best = (vec![signs[0] * b[0], signs[1] * b[1]], v);
        }
    }
    best
}

/// Mixed-size partial linear instance with a `sin(6z)` nuisance.
pub fn random_instance(seed: u64) -> (DesignData, PenaltyConfig) {
    let mut g = rng(seed);
    let n = 10 + (seed % 30) as usize;
    let p = 2 + (seed % 47) as usize;
    let x = gaussian_matrix(&mut g, n, p);
    let z = uniform_z(&mut g, n);
    let mut beta = vec![0.0; p];
    beta[0] = 1.0;
    beta[p - 1] = -1.0;
    let signal = xb(&x, &beta);
    let noise = gaussian_vec(&mut g, n);
    let y = (0..n)
        .map(|i| signal[i] + (6.0 * z[i]).sin() + 0.5 * noise[i])
        .collect();
    let lambda = 0.05 + 0.3 * (seed % 7) as f64 / 7.0;
    let mu_sq = 10f64.powi(-((seed % 5) as i32) - 2);
    (
        DesignData::new(x, z, y).unwrap(),
        PenaltyConfig::new(lambda, mu_sq),
    )
}
