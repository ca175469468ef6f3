//! Doubly penalized least squares for high-dimensional partial linear models
//!
//! ```text
//! y = Xβ⁰ + g⁰(z) + ε
//! (β̂, ĝ) = argmin ‖y − Xβ − g(z)‖²ₙ + λ‖β‖₁ + μ²(∫(g″)² + c∫g²)
//! ```
//!
//! The crate provides the coordinate-descent lasso ([`lasso`]), the natural
//! cubic smoothing spline ([`spline`]), the block-descent solver combining
//! them ([`dpl`]), default tuning rules ([`tuning`]) and a seeded simulation
//! harness comparing the estimator against two lasso baselines ([`sim`]).

pub mod dpl;
pub mod error;
pub mod lasso;
pub mod model;
pub mod sim;
pub mod spline;
pub mod tuning;

pub use dpl::{block_descent, dp_fit, fit_lk, fit_ln, kkt_residuals, BlockDescentFit, Nuisance};
pub use error::{Error, Result};
pub use lasso::{
    lasso_fit, lasso_kkt_residual, lasso_objective, soft_threshold, LassoFit, LassoWorkspace,
};
pub use model::{dp_objective, empirical_norm_sq, DesignData, PartialLinearFit, PenaltyConfig};
pub use spline::{
    build_spline_basis, j_squared, spline_eval, spline_fit, SplineBasis, SplineModel,
    SplineSmoother,
};
pub use tuning::{lambda_default, mu_default, oracle_bound, sigma_estimate, sigma_estimate_lasso};
