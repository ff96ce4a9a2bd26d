//! One-shot accelerated life test data and the log-logistic lifetime model.
//!
//! A test plan is a list of testing conditions. Each condition fixes an
//! inspection time `tau`, a stress vector `x` (leading intercept 1), the
//! number of devices `K_i` placed on test and the number `n_i` found failed
//! at inspection. Lifetimes under condition `i` are log-logistic with
//! scale `alpha_i = exp(a . x_i)` and shape `beta_i = exp(b . x_i)`.
//!
//! Powers `t^beta` are never formed directly: the CDF is evaluated as
//! `1 / (1 + exp(beta (ln alpha - ln t)))`, which stays finite for any
//! finite linear predictor.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// One row of a one-shot test plan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestCondition<T> {
    tau: T,
    stress: Vec<T>,
    devices: u64,
    failures: T,
}

impl<T: Scalar> TestCondition<T> {
    /// Builds a condition from a full stress vector whose first entry is the
    /// intercept `1`.
    pub fn new(tau: T, stress: Vec<T>, devices: u64, failures: u64) -> Result<Self> {
        Self::with_failure_count(tau, stress, devices, T::from_u64(failures).unwrap_or(T::zero()))
    }

    /// Builds a condition from covariates only; the intercept is prepended.
    pub fn from_covariates(tau: T, covariates: &[T], devices: u64, failures: u64) -> Result<Self> {
        let mut stress = Vec::with_capacity(covariates.len() + 1);
        stress.push(T::one());
        stress.extend_from_slice(covariates);
        Self::new(tau, stress, devices, failures)
    }

    /// Builds a condition whose failure count may be fractional, e.g. an
    /// expected count `K_i * F_i`. Used for functional (population-level)
    /// evaluations of estimators.
    pub fn with_failure_count(tau: T, stress: Vec<T>, devices: u64, failures: T) -> Result<Self> {
        if !(tau > T::zero()) || !tau.is_finite() {
            return Err(Error::InvalidCondition(format!(
                "inspection time must be positive and finite, got {tau}"
            )));
        }
        if stress.is_empty() || stress[0] != T::one() {
            return Err(Error::InvalidCondition(
                "stress vector must start with the intercept 1".into(),
            ));
        }
        if stress.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidCondition("stress values must be finite".into()));
        }
        if devices == 0 {
            return Err(Error::InvalidCondition("device count must be positive".into()));
        }
        let k = T::from_u64(devices).unwrap_or(T::zero());
        if !(failures >= T::zero()) || failures > k {
            return Err(Error::InvalidCondition(format!(
                "failures must lie in [0, {devices}], got {failures}"
            )));
        }
        Ok(Self {
            tau,
            stress,
            devices,
            failures,
        })
    }

    pub fn tau(&self) -> T {
        self.tau
    }

    /// Stress vector including the leading intercept.
    pub fn stress(&self) -> &[T] {
        &self.stress
    }

    /// Stress covariates without the intercept.
    pub fn covariates(&self) -> &[T] {
        &self.stress[1..]
    }

    pub fn devices(&self) -> u64 {
        self.devices
    }

    pub fn failures(&self) -> T {
        self.failures
    }

    /// `K_i` as a scalar.
    pub fn devices_scalar(&self) -> T {
        T::from_u64(self.devices).unwrap_or(T::zero())
    }

    /// Failure count rounded to an integer, if it is integral.
    pub fn failure_count(&self) -> Option<u64> {
        let f = self.failures.as_f64();
        (f.fract() == 0.0).then_some(f as u64)
    }

    /// Copy of this condition with a different failure count.
    pub fn with_failures(&self, failures: T) -> Result<Self> {
        Self::with_failure_count(self.tau, self.stress.clone(), self.devices, failures)
    }
}

/// An ordered collection of testing conditions sharing one stress dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestPlan<T> {
    conditions: Vec<TestCondition<T>>,
}

impl<T: Scalar> TestPlan<T> {
    pub fn new(conditions: Vec<TestCondition<T>>) -> Result<Self> {
        let first = conditions
            .first()
            .ok_or_else(|| Error::InvalidPlan("plan has no conditions".into()))?;
        let width = first.stress.len();
        if let Some((i, _)) = conditions
            .iter()
            .enumerate()
            .find(|(_, c)| c.stress.len() != width)
        {
            return Err(Error::InvalidPlan(format!(
                "condition {} has stress length {}, expected {width}",
                i + 1,
                conditions[i].stress.len()
            )));
        }
        Ok(Self { conditions })
    }

    pub fn conditions(&self) -> &[TestCondition<T>] {
        &self.conditions
    }

    pub fn len(&self) -> usize {
        self.conditions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.conditions.is_empty()
    }

    /// Number of stress factors `J` (excluding the intercept).
    pub fn stress_dim(&self) -> usize {
        self.conditions[0].stress.len() - 1
    }

    /// Dimension of the parameter vector, `2 (J + 1)`.
    pub fn param_dim(&self) -> usize {
        2 * (self.stress_dim() + 1)
    }

    /// Total number of devices `K`.
    pub fn total_devices(&self) -> u64 {
        self.conditions.iter().map(|c| c.devices).sum()
    }

    pub fn total_devices_scalar(&self) -> T {
        T::from_u64(self.total_devices()).unwrap_or(T::zero())
    }

    /// Same design with replaced failure counts.
    pub fn with_failures(&self, failures: &[T]) -> Result<Self> {
        if failures.len() != self.len() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                found: failures.len(),
            });
        }
        let conditions = self
            .conditions
            .iter()
            .zip(failures)
            .map(|(c, &n)| c.with_failures(n))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { conditions })
    }

    /// Number of distinct stress vectors in the design.
    pub fn distinct_stress_rows(&self) -> usize {
        let mut rows: Vec<&[T]> = Vec::new();
        for c in &self.conditions {
            if !rows.contains(&c.stress.as_slice()) {
                rows.push(&c.stress);
            }
        }
        rows.len()
    }
}

/// Model parameters `(a_0..a_J, b_0..b_J)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaVector<T> {
    values: Vec<T>,
}

impl<T: Scalar> ThetaVector<T> {
    pub fn new(a: &[T], b: &[T]) -> Result<Self> {
        if a.len() != b.len() || a.is_empty() {
            return Err(Error::DimensionMismatch {
                expected: a.len().max(1),
                found: b.len(),
            });
        }
        let mut values = a.to_vec();
        values.extend_from_slice(b);
        Ok(Self { values })
    }

    /// From the canonical flat ordering `(a_0..a_J, b_0..b_J)`.
    pub fn from_flat(values: Vec<T>) -> Result<Self> {
        if values.is_empty() || !values.len().is_multiple_of(2) {
            return Err(Error::DimensionMismatch {
                expected: 2 * (values.len() / 2 + 1),
                found: values.len(),
            });
        }
        Ok(Self { values })
    }

    pub fn zeros(stress_dim: usize) -> Self {
        Self {
            values: vec![T::zero(); 2 * (stress_dim + 1)],
        }
    }

    pub fn as_slice(&self) -> &[T] {
        &self.values
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn into_vec(self) -> Vec<T> {
        self.values
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn stress_dim(&self) -> usize {
        self.values.len() / 2 - 1
    }

    /// Scale coefficients `a`.
    pub fn a(&self) -> &[T] {
        &self.values[..self.values.len() / 2]
    }

    /// Shape coefficients `b`.
    pub fn b(&self) -> &[T] {
        &self.values[self.values.len() / 2..]
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.as_f64()).collect()
    }

    /// Conventional component names `a0.., b0..`.
    pub fn component_names(stress_dim: usize) -> Vec<String> {
        (0..=stress_dim)
            .map(|j| format!("a{j}"))
            .chain((0..=stress_dim).map(|j| format!("b{j}")))
            .collect()
    }
}

/// Per-condition log-logistic parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkedParams<T> {
    pub alpha: T,
    pub beta: T,
}

impl<T: Scalar> LinkedParams<T> {
    pub fn new(alpha: T, beta: T) -> Result<Self> {
        if !(alpha > T::zero()) || !(beta > T::zero()) {
            return Err(Error::Domain {
                what: "log-logistic scale and shape must be positive",
                value: alpha.min(beta).as_f64(),
            });
        }
        Ok(Self { alpha, beta })
    }
}

/// A Bernoulli probability vector `(P(T <= tau), P(T > tau))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbPair<T> {
    pub fail: T,
    pub survive: T,
}

impl<T: Scalar> ProbPair<T> {
    pub fn new(fail: T, survive: T) -> Result<Self> {
        let tol = T::lit(1e-12);
        if fail < T::zero() || survive < T::zero() || (fail + survive - T::one()).abs() > tol {
            return Err(Error::Domain {
                what: "probability pair must be non-negative and sum to one",
                value: (fail + survive).as_f64(),
            });
        }
        Ok(Self { fail, survive })
    }

    pub fn from_fail(fail: T) -> Self {
        Self {
            fail,
            survive: T::one() - fail,
        }
    }
}

fn check_time<T: Scalar>(t: T) -> Result<()> {
    if t > T::zero() && t.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain {
            what: "time must be positive",
            value: t.as_f64(),
        })
    }
}

/// `beta (ln alpha - ln t)`, the logit of the survival probability at `t`.
#[inline]
fn survival_logit<T: Scalar>(t: T, p: &LinkedParams<T>) -> T {
    p.beta * (p.alpha.ln() - t.ln())
}

/// Log-logistic density.
pub fn ll_pdf<T: Scalar>(t: T, p: &LinkedParams<T>) -> Result<T> {
    check_time(t)?;
    let z = survival_logit(t, p);
    let fail = T::one() / (T::one() + z.exp());
    let survive = T::one() / (T::one() + (-z).exp());
    Ok(p.beta / t * fail * survive)
}

/// Log-logistic distribution function `t^b / (t^b + a^b)`.
pub fn ll_cdf<T: Scalar>(t: T, p: &LinkedParams<T>) -> Result<T> {
    check_time(t)?;
    Ok(T::one() / (T::one() + survival_logit(t, p).exp()))
}

/// Reliability `a^b / (t^b + a^b)`.
pub fn ll_survival<T: Scalar>(t: T, p: &LinkedParams<T>) -> Result<T> {
    check_time(t)?;
    Ok(T::one() / (T::one() + (-survival_logit(t, p)).exp()))
}

/// Hazard rate, computed as density over survival.
pub fn ll_hazard<T: Scalar>(t: T, p: &LinkedParams<T>) -> Result<T> {
    Ok(p.beta / t * ll_cdf(t, p)?)
}

/// Inverse distribution function `alpha (u / (1 - u))^(1/beta)`.
pub fn ll_quantile<T: Scalar>(u: T, p: &LinkedParams<T>) -> Result<T> {
    if !(u > T::zero() && u < T::one()) {
        return Err(Error::Domain {
            what: "quantile level must lie in (0, 1)",
            value: u.as_f64(),
        });
    }
    Ok(p.alpha * ((u / (T::one() - u)).ln() / p.beta).exp())
}

/// Mean lifetime `alpha (pi / beta) / sin(pi / beta)`; finite only for `beta > 1`.
pub fn mean_lifetime<T: Scalar>(p: &LinkedParams<T>) -> Result<T> {
    if !(p.beta > T::one()) {
        return Err(Error::InfiniteMean {
            beta: p.beta.as_f64(),
        });
    }
    let ratio = T::pi() / p.beta;
    Ok(p.alpha * ratio / ratio.sin())
}

fn dot<T: Scalar>(coef: &[T], x: &[T]) -> T {
    coef.iter()
        .zip(x)
        .fold(T::zero(), |acc, (&c, &v)| acc + c * v)
}

/// Linear predictors `(a . x, b . x)` on the log scale.
pub fn linear_predictors<T: Scalar>(theta: &ThetaVector<T>, stress: &[T]) -> Result<(T, T)> {
    let width = theta.stress_dim() + 1;
    if stress.len() != width {
        return Err(Error::DimensionMismatch {
            expected: width,
            found: stress.len(),
        });
    }
    Ok((dot(theta.a(), stress), dot(theta.b(), stress)))
}

/// Log-linear link from parameters and a stress vector to `(alpha, beta)`.
pub fn link<T: Scalar>(theta: &ThetaVector<T>, stress: &[T]) -> Result<LinkedParams<T>> {
    if stress.first() != Some(&T::one()) {
        return Err(Error::InvalidCondition(
            "stress vector must start with the intercept 1".into(),
        ));
    }
    let (la, lb) = linear_predictors(theta, stress)?;
    Ok(LinkedParams {
        alpha: la.exp(),
        beta: lb.exp(),
    })
}

/// Everything the divergence and covariance code needs about one condition
/// at a given parameter value.
#[derive(Debug, Clone, Copy)]
pub(crate) struct CellState<T> {
    pub fail: T,
    pub survive: T,
    pub log_fail: T,
    pub log_survive: T,
    pub beta: T,
    /// `ln(tau / alpha)`.
    pub log_ratio: T,
}

impl<T: Scalar> CellState<T> {
    pub fn evaluate(theta: &ThetaVector<T>, cond: &TestCondition<T>) -> Result<Self> {
        let (la, lb) = linear_predictors(theta, &cond.stress)?;
        let beta = lb.exp();
        let log_ratio = cond.tau.ln() - la;
        // logit of failure
        let z = beta * log_ratio;
        let log_fail = -(-z).softplus();
        let log_survive = -z.softplus();
        Ok(Self {
            fail: log_fail.exp(),
            survive: log_survive.exp(),
            log_fail,
            log_survive,
            beta,
            log_ratio,
        })
    }

    /// `F^g R + R^g F`, i.e. `F R (F^(g-1) + R^(g-1))` without negative powers.
    pub fn weight(&self, gamma: T) -> T {
        (gamma * self.log_fail).exp() * self.survive + (gamma * self.log_survive).exp() * self.fail
    }

    /// Writes the direction `(-beta x, ln(tau/alpha) beta x)` into `out`.
    pub fn direction(&self, stress: &[T], out: &mut [T]) {
        let width = stress.len();
        for (j, &x) in stress.iter().enumerate() {
            out[j] = -self.beta * x;
            out[width + j] = self.log_ratio * self.beta * x;
        }
    }
}

/// Model probabilities `(F, R)` at the inspection time of a condition.
pub fn cell_probs<T: Scalar>(theta: &ThetaVector<T>, cond: &TestCondition<T>) -> Result<ProbPair<T>> {
    let s = CellState::evaluate(theta, cond)?;
    Ok(ProbPair {
        fail: s.fail,
        survive: s.survive,
    })
}

/// Observed proportions `(n_i / K_i, 1 - n_i / K_i)`.
pub fn empirical_probs<T: Scalar>(cond: &TestCondition<T>) -> ProbPair<T> {
    let k = cond.devices_scalar();
    let fail = cond.failures / k;
    ProbPair {
        fail,
        survive: (k - cond.failures) / k,
    }
}

/// Gradient of `F(tau_i; theta)` with respect to `theta` in canonical order.
pub fn cdf_gradient<T: Scalar>(theta: &ThetaVector<T>, cond: &TestCondition<T>) -> Result<Vec<T>> {
    let s = CellState::evaluate(theta, cond)?;
    let mut grad = vec![T::zero(); theta.dim()];
    s.direction(&cond.stress, &mut grad);
    let fr = s.fail * s.survive;
    grad.iter_mut().for_each(|g| *g *= fr);
    Ok(grad)
}
