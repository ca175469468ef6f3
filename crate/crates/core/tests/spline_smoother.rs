mod common;

use common::{gaussian_vec, quadrature_penalty, rng, uniform_z, DenseSmoother};
use nalgebra::DVector;
use plm_dp::{build_spline_basis, j_squared, spline_eval, spline_fit, SplineModel};
use proptest::prelude::*;

fn penalized_loss(model: &SplineModel, z: &[f64], r: &[f64], mu_sq: f64, c: f64) -> f64 {
    let g = spline_eval(model, z).values;
    let resid: Vec<f64> = r.iter().zip(&g).map(|(a, b)| a - b).collect();
    common::mean_sq(&resid) + mu_sq * j_squared(model, c)
}

#[test]
fn matches_dense_assembly_on_the_six_point_example() {
    let mut g = rng(6);
    let z = uniform_z(&mut g, 6);
    let r = gaussian_vec(&mut g, 6);
    let fit = spline_fit(&build_spline_basis(&z).unwrap(), &z, &r, 0.1, 1e-3).unwrap();
    let dense = DenseSmoother::new(&z, 0.1, 1e-3);
    let oracle = dense.knot_values(&dense.coefficients(&r));
    for (a, b) in fit.coeffs().iter().zip(&oracle) {
        assert!((a - b).abs() <= 1e-8, "{a} vs {b}");
    }
}

#[test]
fn matches_dense_assembly_with_tied_covariates() {
    let mut g = rng(7);
    let mut z = uniform_z(&mut g, 10);
    z.extend_from_within(..5);
    let r = gaussian_vec(&mut g, 15);
    let fit = spline_fit(&build_spline_basis(&z).unwrap(), &z, &r, 1e-2, 1e-3).unwrap();
    assert_eq!(fit.knots().len(), 10);
    let dense = DenseSmoother::new(&z, 1e-2, 1e-3);
    let oracle = dense.knot_values(&dense.coefficients(&r));
    for (a, b) in fit.coeffs().iter().zip(&oracle) {
        assert!((a - b).abs() <= 1e-8, "{a} vs {b}");
    }
}

#[test]
fn matches_dense_assembly_with_nearly_coincident_knots() {
    let mut g = rng(12);
    for mu_sq in [1e-1, 1e-2, 1e-4] {
        let mut z = uniform_z(&mut g, 30);
        z[7] = z[3] + 7e-5;
        z[20] = z[11] - 2e-5;
        let r = gaussian_vec(&mut g, 30);
        let fit = spline_fit(&build_spline_basis(&z).unwrap(), &z, &r, mu_sq, 1e-3).unwrap();
        let dense = DenseSmoother::new(&z, mu_sq, 1e-3);
        let oracle = dense.knot_values(&dense.coefficients(&r));
        for (a, b) in fit.coeffs().iter().zip(&oracle) {
            assert!((a - b).abs() <= 1e-8, "mu_sq {mu_sq}: {a} vs {b}");
        }
    }
}

#[test]
fn omega_quadratic_form_matches_quadrature_for_t_squared() {
    let knots: Vec<f64> = (0..5).map(|i| i as f64 / 4.0).collect();
    let model = build_spline_basis(&knots).unwrap();
    let values = DVector::from_iterator(5, knots.iter().map(|t| t * t));
    let model = model.with_coeffs(values.clone()).unwrap();
    let form = values.dot(&(model.omega() * &values));
    let (rough, _) = quadrature_penalty(&knots, &|t| spline_eval(&model, &[t]).values[0]);
    assert!(
        (form - rough).abs() <= 1e-9 * rough.max(1.0),
        "{form} vs {rough}"
    );
    // The natural interpolant has zero curvature at the ends, so it is
    // smoother than t² itself.
    assert!(form < 4.0);
}

#[test]
fn penalty_matches_quadrature_on_random_coefficients() {
    let mut g = rng(8);
    for _ in 0..20 {
        let z = uniform_z(&mut g, 5);
        let model = build_spline_basis(&z).unwrap();
        let model = model
            .with_coeffs(DVector::from_vec(gaussian_vec(&mut g, 5)))
            .unwrap();
        let (rough, l2) =
            quadrature_penalty(model.knots(), &|t| spline_eval(&model, &[t]).values[0]);
        let expected = rough + 1e-3 * l2;
        let got = j_squared(&model, 1e-3);
        assert!(
            (got - expected).abs() <= 1e-5 * expected,
            "{got} vs {expected}"
        );
    }
}

#[test]
fn fitted_function_solves_the_dense_problem_between_knots() {
    let mut g = rng(9);
    let z = uniform_z(&mut g, 20);
    let r = gaussian_vec(&mut g, 20);
    let fit = spline_fit(&build_spline_basis(&z).unwrap(), &z, &r, 1e-3, 1e-3).unwrap();
    let dense = DenseSmoother::new(&z, 1e-3, 1e-3);
    let theta = dense.coefficients(&r);
    let grid: Vec<f64> = (0..=50).map(|i| -0.45 + 0.9 * i as f64 / 50.0).collect();
    let lo = fit.knots()[0];
    let hi = *fit.knots().last().unwrap();
    let ours = spline_eval(&fit, &grid).values;
    for (t, v) in grid.iter().zip(&ours) {
        if *t >= lo && *t <= hi {
            let expected = DVector::from_vec(dense.basis.row(*t, 0)).dot(&theta);
            assert!((v - expected).abs() <= 1e-8, "at {t}: {v} vs {expected}");
        }
    }
}

fn data() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (4usize..30, any::<u64>()).prop_map(|(n, seed)| {
        let mut g = rng(seed);
        (uniform_z(&mut g, n), gaussian_vec(&mut g, n))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn fit_is_the_unique_minimizer((z, r) in data(), seed in any::<u64>(), log_mu in -6.0f64..0.0) {
        let mu_sq = 10f64.powf(log_mu);
        let fit = spline_fit(&build_spline_basis(&z).unwrap(), &z, &r, mu_sq, 1e-3).unwrap();
        let best = penalized_loss(&fit, &z, &r, mu_sq, 1e-3);
        let mut g = rng(seed);
        let k = fit.knots().len();
        for _ in 0..20 {
            let dir = DVector::from_vec(gaussian_vec(&mut g, k)).normalize() * 1e-3;
            let moved = fit.with_coeffs(fit.coeffs() + dir).unwrap();
            let val = penalized_loss(&moved, &z, &r, mu_sq, 1e-3);
            prop_assert!(val >= best - 1e-12 * best.max(1.0), "{val} < {best}");
        }
    }

    #[test]
    fn curvature_shrinks_as_mu_grows((z, r) in data()) {
        let model = build_spline_basis(&z).unwrap();
        let mut last = f64::INFINITY;
        for mu_sq in [1e-6, 1e-4, 1e-2, 1.0, 100.0] {
            let fit = spline_fit(&model, &z, &r, mu_sq, 1e-3).unwrap();
            let rough = fit.roughness();
            prop_assert!(rough <= last * (1.0 + 1e-9) + 1e-12, "{rough} after {last}");
            last = rough;
        }
    }

    #[test]
    fn huge_mu_shrinks_to_zero((z, r) in data()) {
        let fit = spline_fit(&build_spline_basis(&z).unwrap(), &z, &r, 1e8, 1e-3).unwrap();
        let g = spline_eval(&fit, &z).values;
        prop_assert!(common::mean_sq(&g).sqrt() <= 1e-3 * common::mean_sq(&r).sqrt());
    }

    #[test]
    fn vanishing_mu_interpolates((z, r) in data()) {
        let fit = spline_fit(&build_spline_basis(&z).unwrap(), &z, &r, 0.0, 1e-3).unwrap();
        let g = spline_eval(&fit, &z).values;
        for (a, b) in g.iter().zip(&r) {
            prop_assert!((a - b).abs() <= 1e-6, "{a} vs {b}");
        }
    }

    #[test]
    fn omega_and_gram_are_symmetric_and_semidefinite((z, _r) in data()) {
        let model = build_spline_basis(&z).unwrap();
        let om = model.omega();
        let gr = model.gram();
        let scale = om.amax().max(1.0);
        prop_assert!((om - om.transpose()).amax() <= 1e-12 * scale);
        prop_assert!((gr - gr.transpose()).amax() <= 1e-14);
        let eig = gr.clone().symmetric_eigen().eigenvalues;
        prop_assert!(eig.min() > 0.0);
        let affine = DVector::from_iterator(model.knots().len(), model.knots().iter().map(|t| 3.0 * t + 1.0));
        prop_assert!(affine.dot(&(om * &affine)).abs() <= 1e-10 * scale);
    }
}
