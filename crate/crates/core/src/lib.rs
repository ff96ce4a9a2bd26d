//! Robust estimation and testing for one-shot device accelerated life tests
//! with log-logistic lifetimes, based on the density power divergence.

// `!(x > 0)` comparisons are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod asymptotics;
pub mod datasets;
pub mod divergence;
pub mod error;
pub mod estimation;
pub mod hypothesis;
pub mod linalg;
pub mod model;
pub mod montecarlo;
mod optim;
pub mod scalar;

pub use asymptotics::{
    asymptotic_cov, condition_block_m, fisher_info, influence_all, influence_indicator, influence_single, j_gamma,
    k_gamma, restricted_bundle, CovarianceBundle, Outcome, RestrictedBundle,
};
pub use divergence::{
    dpd, estimating_vector, kl_divergence, log_likelihood, objective_gradient, weighted_divergence,
    weighted_objective, TuningGamma,
};
pub use datasets::{embedded_dataset, fan2009, sim_design};
pub use error::{Error, Result};
pub use estimation::{fit, fit_mle, fit_restricted, AffineConstraint, Estimate, FitOptions, FitStatus};
pub use hypothesis::{chi2_sf, gof_chisq, rao_statistic_at, rao_test, wald_test, TestKind, TestOutcome};
pub use model::{
    cell_probs, empirical_probs, link, ll_cdf, ll_hazard, ll_pdf, ll_quantile, ll_survival, mean_lifetime,
    LinkedParams, ProbPair, TestCondition, TestPlan, ThetaVector,
};
pub use scalar::Scalar;

pub type TestConditionF64 = TestCondition<f64>;
pub type TestPlanF64 = TestPlan<f64>;
pub type ThetaF64 = ThetaVector<f64>;
pub type EstimateF64 = Estimate<f64>;
pub type TestConditionF32 = TestCondition<f32>;
pub type TestPlanF32 = TestPlan<f32>;
pub type ThetaF32 = ThetaVector<f32>;
pub type EstimateF32 = Estimate<f32>;
