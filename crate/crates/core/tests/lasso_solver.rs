mod common;

use common::{gaussian_matrix, gaussian_vec, lasso_objective, refined_grid_min, rng};
use nalgebra::DMatrix;
use plm_dp::{lasso_fit, lasso_kkt_residual, PenaltyConfig};
use proptest::prelude::*;

fn lambda_max(x: &DMatrix<f64>, r: &[f64]) -> f64 {
    let n = r.len() as f64;
    (0..x.ncols())
        .map(|j| {
            2.0 * x
                .column(j)
                .iter()
                .zip(r)
                .map(|(a, b)| a * b)
                .sum::<f64>()
                .abs()
                / n
        })
        .fold(0.0, f64::max)
}

fn grid_oracle(x: &DMatrix<f64>, r: &[f64], lambda: f64) -> Vec<f64> {
    let p = x.ncols();
    let bound = r.iter().map(|v| v * v).sum::<f64>() / r.len() as f64 / lambda;
    let f = |b: &[f64]| lasso_objective(x, r, b, lambda);
    refined_grid_min(&f, &vec![-bound; p], &vec![bound; p], 41, 1e-7).0
}

#[test]
fn matches_grid_oracle_on_a_small_instance() {
    let mut g = rng(4);
    let x = gaussian_matrix(&mut g, 4, 2);
    let r = gaussian_vec(&mut g, 4);
    let lambda = 0.3 * lambda_max(&x, &r);
    let fit = lasso_fit(&x, &r, lambda, &PenaltyConfig::default(), None).unwrap();
    let oracle = grid_oracle(&x, &r, lambda);
    for (a, b) in fit.beta.iter().zip(&oracle) {
        assert!(
            (a - b).abs() <= 1e-4,
            "solver {:?} vs oracle {oracle:?}",
            fit.beta
        );
    }
}

#[test]
fn matches_grid_oracle_on_random_tiny_instances() {
    let mut g = rng(11);
    for case in 0..20 {
        let n = 4 + case % 5;
        let p = 1 + case % 3;
        let x = gaussian_matrix(&mut g, n, p);
        let r = gaussian_vec(&mut g, n);
        let lambda = (0.05 + 0.7 * (case as f64 / 20.0)) * lambda_max(&x, &r);
        let fit = lasso_fit(&x, &r, lambda, &PenaltyConfig::default(), None).unwrap();
        let oracle = grid_oracle(&x, &r, lambda);
        let gap = fit
            .beta
            .iter()
            .zip(&oracle)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(
            gap <= 1e-4,
            "case {case}: solver {:?} vs oracle {oracle:?}",
            fit.beta
        );
    }
}

#[test]
fn duplicated_column_split_does_not_beat_the_fit() {
    let mut g = rng(21);
    let x = gaussian_matrix(&mut g, 30, 6);
    let r = gaussian_vec(&mut g, 30);
    let lambda = 0.2 * lambda_max(&x, &r);
    let base = lasso_fit(&x, &r, lambda, &PenaltyConfig::default(), None).unwrap();

    let mut aug = DMatrix::zeros(30, 7);
    aug.columns_mut(0, 6).copy_from(&x);
    aug.set_column(6, &x.column(2));
    let fit = lasso_fit(&aug, &r, lambda, &PenaltyConfig::default(), None).unwrap();
    for share in [0.0, 0.25, 0.5, 1.0] {
        let mut split = base.beta.clone();
        split.push(share * base.beta[2]);
        split[2] *= 1.0 - share;
        let got = lasso_objective(&aug, &r, &fit.beta, lambda);
        let reference = lasso_objective(&aug, &r, &split, lambda);
        assert!(got <= reference + 1e-9, "{got} > {reference}");
    }
}

#[test]
fn high_dimensional_fit_is_certified() {
    let mut g = rng(31);
    let x = gaussian_matrix(&mut g, 50, 400);
    let mut beta0 = vec![0.0; 400];
    beta0[..5].copy_from_slice(&[1.0, -1.0, 1.0, 1.0, -1.0]);
    let signal = common::xb(&x, &beta0);
    let r: Vec<f64> = signal
        .iter()
        .zip(gaussian_vec(&mut g, 50))
        .map(|(s, e)| s + 0.3 * e)
        .collect();
    for frac in [0.5, 0.1, 0.01] {
        let lambda = frac * lambda_max(&x, &r);
        let cfg = PenaltyConfig::default();
        let fit = lasso_fit(&x, &r, lambda, &cfg, None).unwrap();
        assert!(
            fit.kkt_residual <= cfg.tol_kkt,
            "λ fraction {frac}: kkt {}",
            fit.kkt_residual
        );
        assert_eq!(
            fit.kkt_residual,
            lasso_kkt_residual(&x, &r, &fit.beta, lambda)
        );
    }
}

fn instance() -> impl Strategy<Value = (DMatrix<f64>, Vec<f64>, f64)> {
    (3usize..12, 1usize..8, any::<u64>(), 0.02f64..0.9).prop_map(|(n, p, seed, frac)| {
        let mut g = rng(seed);
        let x = gaussian_matrix(&mut g, n, p);
        let r = gaussian_vec(&mut g, n);
        let lambda = frac * lambda_max(&x, &r);
        (x, r, lambda)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn objective_never_increases_over_passes((x, r, lambda) in instance()) {
        let fit = lasso_fit(&x, &r, lambda, &PenaltyConfig::default(), None).unwrap();
        for w in fit.objective_trace.windows(2) {
            prop_assert!(w[1] <= w[0] * (1.0 + 1e-14) + 1e-300, "{} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn converged_fit_satisfies_kkt((x, r, lambda) in instance()) {
        let cfg = PenaltyConfig::default();
        let fit = lasso_fit(&x, &r, lambda, &cfg, None).unwrap();
        prop_assert!(fit.kkt_residual <= cfg.tol_kkt, "kkt {}", fit.kkt_residual);
    }

    #[test]
    fn scaling_response_and_lambda_scales_the_solution((x, r, lambda) in instance(), t in 0.1f64..10.0) {
        let cfg = PenaltyConfig::default();
        let base = lasso_fit(&x, &r, lambda, &cfg, None).unwrap();
        let rt: Vec<f64> = r.iter().map(|v| t * v).collect();
        let scaled = lasso_fit(&x, &rt, t * lambda, &cfg, None).unwrap();
        let norm = base.beta.iter().map(|b| b.abs()).fold(1.0, f64::max);
        for (a, b) in base.beta.iter().zip(&scaled.beta) {
            prop_assert!((t * a - b).abs() <= 1e-5 * t * norm, "{a} scaled by {t} vs {b}");
        }
    }

    #[test]
    fn lambda_at_least_lambda_max_gives_zero((x, r, _l) in instance(), bump in 1.0f64..3.0) {
        let fit = lasso_fit(&x, &r, bump * lambda_max(&x, &r), &PenaltyConfig::default(), None).unwrap();
        prop_assert!(fit.beta.iter().all(|&b| b == 0.0));
    }
}
