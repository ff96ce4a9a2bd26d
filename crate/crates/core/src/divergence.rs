//! Density power divergence between observed and model failure proportions,
//! the device-weighted objective and its estimating equations.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{empirical_probs, CellState, ProbPair, TestPlan, ThetaVector};
use crate::scalar::Scalar;

/// DPD tuning parameter. Zero selects the Kullback-Leibler / likelihood path.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct TuningGamma<T>(T);

impl<T: Scalar> TuningGamma<T> {
    pub fn new(value: T) -> Result<Self> {
        if value >= T::zero() && value.is_finite() {
            Ok(Self(value))
        } else {
            Err(Error::Domain {
                what: "tuning parameter must be non-negative",
                value: value.as_f64(),
            })
        }
    }

    pub fn mle() -> Self {
        Self(T::zero())
    }

    pub fn value(self) -> T {
        self.0
    }

    pub fn is_mle(self) -> bool {
        self.0 == T::zero()
    }
}

/// Kullback-Leibler divergence with the `0 log 0 = 0` convention.
pub fn kl_divergence<T: Scalar>(p_hat: &ProbPair<T>, pi: &ProbPair<T>) -> Result<T> {
    let term = |p: T, q: T| -> Result<T> {
        if p == T::zero() {
            Ok(T::zero())
        } else if q == T::zero() {
            Err(Error::InfiniteDivergence {
                empirical: p.as_f64(),
            })
        } else {
            Ok(p * (p / q).ln())
        }
    };
    Ok(term(p_hat.fail, pi.fail)? + term(p_hat.survive, pi.survive)?)
}

/// Density power divergence `D_gamma(p_hat, pi)`; delegates to KL at zero.
pub fn dpd<T: Scalar>(p_hat: &ProbPair<T>, pi: &ProbPair<T>, gamma: TuningGamma<T>) -> Result<T> {
    if gamma.is_mle() {
        return kl_divergence(p_hat, pi);
    }
    Ok(dpd_star(p_hat, pi, gamma) + dpd_data_term(p_hat, gamma))
}

/// The model-dependent part of the DPD, `D*_gamma`, for `gamma > 0`.
pub fn dpd_star<T: Scalar>(p_hat: &ProbPair<T>, pi: &ProbPair<T>, gamma: TuningGamma<T>) -> T {
    let g = gamma.value();
    let one = T::one();
    pi.fail.powf(g + one) + pi.survive.powf(g + one)
        - (g + one) / g * (p_hat.fail * pi.fail.powf(g) + p_hat.survive * pi.survive.powf(g))
}

/// The term of the DPD that depends on the data only.
///
/// For `gamma = 0` this is the negative empirical entropy
/// `p log p + (1-p) log(1-p)`, the constant separating the weighted KL
/// divergence from `-(1/K) log L`.
pub fn dpd_data_term<T: Scalar>(p_hat: &ProbPair<T>, gamma: TuningGamma<T>) -> T {
    let g = gamma.value();
    if gamma.is_mle() {
        let xlogx = |p: T| if p > T::zero() { p * p.ln() } else { T::zero() };
        xlogx(p_hat.fail) + xlogx(p_hat.survive)
    } else {
        (p_hat.fail.powf(g + T::one()) + p_hat.survive.powf(g + T::one())) / g
    }
}

fn weights<T: Scalar>(plan: &TestPlan<T>) -> impl Iterator<Item = T> + '_ {
    let total = plan.total_devices_scalar();
    plan.conditions()
        .iter()
        .map(move |c| c.devices_scalar() / total)
}

/// Weighted objective minimised by the estimator.
///
/// For `gamma > 0` this is `sum_i (K_i / K) D*_gamma(p_hat_i, pi_i(theta))`;
/// for `gamma = 0` it is `-(1/K) log L(theta)`. Returns `+inf` if a model
/// probability underflows to zero against a nonzero observed count.
pub fn weighted_objective<T: Scalar>(
    theta: &ThetaVector<T>,
    plan: &TestPlan<T>,
    gamma: TuningGamma<T>,
) -> Result<T> {
    let g = gamma.value();
    let mut total = T::zero();
    for (cond, w) in plan.conditions().iter().zip(weights(plan)) {
        let s = CellState::evaluate(theta, cond)?;
        let p = empirical_probs(cond);
        let term = if gamma.is_mle() {
            let part = |p: T, log_q: T| {
                if p == T::zero() {
                    T::zero()
                } else {
                    -p * log_q
                }
            };
            part(p.fail, s.log_fail) + part(p.survive, s.log_survive)
        } else {
            let one = T::one();
            ((g + one) * s.log_fail).exp() + ((g + one) * s.log_survive).exp()
                - (g + one) / g
                    * (p.fail * (g * s.log_fail).exp() + p.survive * (g * s.log_survive).exp())
        };
        total += w * term;
    }
    if total.partial_cmp(&total).is_none() {
        return Ok(T::infinity());
    }
    Ok(total)
}

/// Sum of the data-only terms, so that `weighted_objective + this` equals the
/// full weighted divergence.
pub fn weighted_data_term<T: Scalar>(plan: &TestPlan<T>, gamma: TuningGamma<T>) -> T {
    plan.conditions()
        .iter()
        .zip(weights(plan))
        .fold(T::zero(), |acc, (c, w)| acc + w * dpd_data_term(&empirical_probs(c), gamma))
}

/// Full weighted divergence `sum_i (K_i/K) D_gamma(p_hat_i, pi_i(theta))`.
pub fn weighted_divergence<T: Scalar>(
    theta: &ThetaVector<T>,
    plan: &TestPlan<T>,
    gamma: TuningGamma<T>,
) -> Result<T> {
    Ok(weighted_objective(theta, plan, gamma)? + weighted_data_term(plan, gamma))
}

/// Binomial log-likelihood `sum_i n_i log F_i + (K_i - n_i) log R_i`.
pub fn log_likelihood<T: Scalar>(theta: &ThetaVector<T>, plan: &TestPlan<T>) -> Result<T> {
    let mut total = T::zero();
    for cond in plan.conditions() {
        let s = CellState::evaluate(theta, cond)?;
        let n = cond.failures();
        let m = cond.devices_scalar() - n;
        if n > T::zero() {
            total += n * s.log_fail;
        }
        if m > T::zero() {
            total += m * s.log_survive;
        }
    }
    Ok(total)
}

/// Estimating function `U_gamma(theta)`:
///
/// ```text
/// sum_i (-beta_i x_i, ln(tau_i/alpha_i) beta_i x_i) (K_i F_i - n_i) (F_i^g R_i + R_i^g F_i)
/// ```
///
/// The gradient of [`weighted_objective`] equals `(gamma + 1) / K * U_gamma`.
pub fn estimating_vector<T: Scalar>(
    theta: &ThetaVector<T>,
    plan: &TestPlan<T>,
    gamma: TuningGamma<T>,
) -> Result<Vec<T>> {
    let dim = theta.dim();
    if dim != plan.param_dim() {
        return Err(Error::DimensionMismatch {
            expected: plan.param_dim(),
            found: dim,
        });
    }
    let mut u = vec![T::zero(); dim];
    let mut dir = vec![T::zero(); dim];
    for (i, cond) in plan.conditions().iter().enumerate() {
        let s = CellState::evaluate(theta, cond)?;
        s.direction(cond.stress(), &mut dir);
        let residual = cond.devices_scalar() * s.fail - cond.failures();
        let factor = residual * s.weight(gamma.value());
        if !factor.is_finite() {
            return Err(Error::NonFinite {
                what: "estimating function",
                condition: i + 1,
            });
        }
        for (acc, d) in u.iter_mut().zip(&dir) {
            *acc += *d * factor;
        }
    }
    if let Some(i) = u.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            what: "estimating function component",
            condition: i + 1,
        });
    }
    Ok(u)
}

/// Analytic gradient of [`weighted_objective`].
pub fn objective_gradient<T: Scalar>(
    theta: &ThetaVector<T>,
    plan: &TestPlan<T>,
    gamma: TuningGamma<T>,
) -> Result<Vec<T>> {
    let scale = (gamma.value() + T::one()) / plan.total_devices_scalar();
    let mut u = estimating_vector(theta, plan, gamma)?;
    u.iter_mut().for_each(|v| *v *= scale);
    Ok(u)
}
