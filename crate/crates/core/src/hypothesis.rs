//! Wald-type and Rao-type tests of linear hypotheses `L theta = c`, and the
//! chi-square goodness-of-fit test.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::asymptotics::{asymptotic_cov, k_gamma, restricted_bundle};
use crate::divergence::{estimating_vector, TuningGamma};
use crate::error::{Error, Result};
use crate::estimation::{AffineConstraint, Estimate};
use crate::linalg::spd_inverse;
use crate::model::{cell_probs, TestPlan, ThetaVector};
use crate::scalar::Scalar;

/// Significance levels reported by default.
pub const DEFAULT_LEVELS: [f64; 3] = [0.10, 0.05, 0.01];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestKind {
    Wald,
    Rao,
    ChiSquareGof,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub alpha: f64,
    pub reject: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestOutcome {
    pub test: TestKind,
    pub gamma: Option<f64>,
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
    pub decisions: Vec<Decision>,
}

impl TestOutcome {
    fn new(test: TestKind, gamma: Option<f64>, statistic: f64, dof: usize) -> Result<Self> {
        let p_value = chi2_sf(statistic, dof)?;
        Ok(Self {
            test,
            gamma,
            statistic,
            dof,
            p_value,
            decisions: DEFAULT_LEVELS
                .iter()
                .map(|&alpha| Decision { alpha, reject: p_value <= alpha })
                .collect(),
        })
    }

    /// Rejection at level `alpha`: `p <= alpha`, so `alpha = 1` always rejects.
    pub fn reject_at(&self, alpha: f64) -> bool {
        self.p_value <= alpha
    }
}

/// Upper tail of the chi-square distribution with `dof` degrees of freedom.
pub fn chi2_sf(x: f64, dof: usize) -> Result<f64> {
    if dof == 0 {
        return Err(Error::Domain {
            what: "chi-square degrees of freedom must be positive",
            value: 0.0,
        });
    }
    if x.is_nan() || x < 0.0 {
        return Err(Error::Domain {
            what: "chi-square statistic must be non-negative",
            value: x,
        });
    }
    let dist = ChiSquared::new(dof as f64).expect("positive dof");
    Ok(dist.sf(x).clamp(0.0, 1.0))
}

/// Chi-square quantile `q` with `P(X <= q) = prob`.
pub fn chi2_quantile(prob: f64, dof: usize) -> Result<f64> {
    if dof == 0 || !(0.0..1.0).contains(&prob) {
        return Err(Error::Domain {
            what: "chi-square quantile needs dof > 0 and prob in [0, 1)",
            value: prob,
        });
    }
    Ok(ChiSquared::new(dof as f64).expect("positive dof").inverse_cdf(prob))
}

/// Kolmogorov-Smirnov distance between the empirical distribution of
/// `sample` and the chi-square distribution with `dof` degrees of freedom.
pub fn ks_distance_chi2(sample: &[f64], dof: usize) -> Result<f64> {
    if sample.is_empty() || dof == 0 {
        return Err(Error::Domain {
            what: "KS distance needs a non-empty sample and dof > 0",
            value: sample.len() as f64,
        });
    }
    let dist = ChiSquared::new(dof as f64).expect("positive dof");
    let mut sorted = sample.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    Ok(sorted.iter().enumerate().fold(0.0f64, |d, (i, &x)| {
        let c = dist.cdf(x.max(0.0));
        d.max((i as f64 + 1.0) / n - c).max(c - i as f64 / n)
    }))
}

fn quadratic_form<T: Scalar>(v: &DVector<T>, mat: &DMatrix<T>, what: &str) -> Result<T> {
    let inv = spd_inverse(mat, what)?;
    Ok(v.dot(&(inv * v)))
}

/// Wald-type statistic `K m' (L Sigma L')^-1 m` at an unrestricted estimate.
pub fn wald_test<T: Scalar>(
    estimate: &Estimate<T>,
    plan: &TestPlan<T>,
    constraint: &AffineConstraint<T>,
) -> Result<TestOutcome> {
    let r = constraint.rank();
    if r == 0 {
        return Err(Error::InvalidConstraint("a test needs at least one restriction".into()));
    }
    let theta = &estimate.theta_hat;
    let cov = asymptotic_cov(theta, plan, estimate.gamma)?;
    let m = DVector::from_vec(constraint.evaluate(theta)?);
    let l = constraint.matrix();
    let middle = l * &cov.sigma * l.transpose();
    let w = plan.total_devices_scalar() * quadratic_form(&m, &middle, "M' Sigma M")?;
    TestOutcome::new(TestKind::Wald, Some(estimate.gamma.value().as_f64()), w.as_f64().max(0.0), r)
}

/// Rao-type statistic `K u' Q (Q' K_gamma Q)^-1 Q' u` with `u = U_gamma / K`,
/// all at the restricted estimate. Needs no unrestricted fit.
pub fn rao_test<T: Scalar>(
    restricted: &Estimate<T>,
    plan: &TestPlan<T>,
    gamma: TuningGamma<T>,
    constraint: &AffineConstraint<T>,
) -> Result<TestOutcome> {
    rao_statistic_at(&restricted.theta_hat, plan, gamma, constraint)
}

/// Rao-type test evaluated at an arbitrary point satisfying the restriction,
/// e.g. the hypothesised value under a simple null.
pub fn rao_statistic_at<T: Scalar>(
    theta: &ThetaVector<T>,
    plan: &TestPlan<T>,
    gamma: TuningGamma<T>,
    constraint: &AffineConstraint<T>,
) -> Result<TestOutcome> {
    let r = constraint.rank();
    if r == 0 {
        return Err(Error::InvalidConstraint("a test needs at least one restriction".into()));
    }
    let bundle = restricted_bundle(theta, plan, gamma, constraint)?;
    let k_mat = k_gamma(theta, plan, gamma)?;
    let total = plan.total_devices_scalar();
    let u = DVector::from_vec(estimating_vector(theta, plan, gamma)?) / total;
    let qu = bundle.q_mat.transpose() * u;
    let middle = bundle.q_mat.transpose() * k_mat * &bundle.q_mat;
    let stat = total * quadratic_form(&qu, &middle, "Q' K Q")?;
    TestOutcome::new(TestKind::Rao, Some(gamma.value().as_f64()), stat.as_f64().max(0.0), r)
}

/// Pearson statistic over the `2I` failure/survival cells with plan-wide
/// cell probabilities `(K_i/N) F_i` and `(K_i/N) R_i`; `dof = 2I - (p - 1)`.
pub fn gof_chisq<T: Scalar>(theta: &ThetaVector<T>, plan: &TestPlan<T>) -> Result<TestOutcome> {
    let total = plan.total_devices_scalar();
    let mut stat = T::zero();
    for (i, cond) in plan.conditions().iter().enumerate() {
        let probs = cell_probs(theta, cond)?;
        let share = cond.devices_scalar() / total;
        let observed = [cond.failures(), cond.devices_scalar() - cond.failures()];
        for (obs, p) in observed.into_iter().zip([probs.fail, probs.survive]) {
            let expected = total * share * p;
            if !(expected > T::zero()) {
                return Err(Error::Domain {
                    what: "goodness-of-fit cell has zero model probability",
                    value: (i + 1) as f64,
                });
            }
            stat += (obs - expected) * (obs - expected) / expected;
        }
    }
    let cells = 2 * plan.len();
    let fitted = plan.param_dim() - 1;
    if cells <= fitted {
        return Err(Error::InvalidPlan(format!(
            "{cells} cells leave no degrees of freedom for {} parameters",
            plan.param_dim()
        )));
    }
    TestOutcome::new(TestKind::ChiSquareGof, None, stat.as_f64(), cells - fitted)
}
