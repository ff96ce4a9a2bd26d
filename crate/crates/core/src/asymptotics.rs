//! Asymptotic covariance of the estimator and influence functions.
//!
//! With `d_i = (-beta_i x_i, ln(tau_i/alpha_i) beta_i x_i)` and
//! `M_i = d_i d_i'`, the closed forms are
//!
//! ```text
//! J_gamma = sum_i (K_i/K) M_i (R_i F_i)^2 (F_i^(g-1) + R_i^(g-1))
//! K_gamma = sum_i (K_i/K) M_i (F_i^(g-1) + R_i^(g-1))^2 F_i^3 R_i^3
//! I_F     = sum_i  K_i    M_i (R_i F_i)^2 (1/F_i + 1/R_i)
//! ```
//!
//! and `sqrt(K) (theta_hat - theta_0)` is asymptotically normal with
//! covariance `J^-1 K J^-1`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::divergence::TuningGamma;
use crate::error::{Error, Result};
use crate::estimation::AffineConstraint;
use crate::linalg::{outer, spd_inverse, symmetrize};
use crate::model::{CellState, TestCondition, TestPlan, ThetaVector};
use crate::scalar::Scalar;

/// `J_gamma`, `K_gamma` and the sandwich `J^-1 K J^-1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovarianceBundle<T: Scalar> {
    pub j_mat: DMatrix<T>,
    pub k_mat: DMatrix<T>,
    pub sigma: DMatrix<T>,
    /// Total number of devices the sandwich refers to.
    pub total_devices: u64,
}

impl<T: Scalar> CovarianceBundle<T> {
    /// Standard errors `sqrt(diag(sigma) / K)`.
    pub fn standard_errors(&self) -> Vec<T> {
        let k = T::from_u64(self.total_devices).unwrap_or(T::one());
        self.sigma
            .diagonal()
            .iter()
            .map(|v| (v.max(T::zero()) / k).sqrt())
            .collect()
    }
}

/// Variance matrices of the restricted estimator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestrictedBundle<T: Scalar> {
    pub q_mat: DMatrix<T>,
    pub p_mat: DMatrix<T>,
    pub sigma_restricted: DMatrix<T>,
}

/// Observed outcome of one device at inspection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Failed,
    Survived,
}

impl Outcome {
    pub fn indicator<T: Scalar>(self) -> T {
        match self {
            Outcome::Failed => T::one(),
            Outcome::Survived => T::zero(),
        }
    }
}

/// `M_i`, the outer product of the direction `(-beta x, L beta x)`.
pub fn condition_block_m<T: Scalar>(
    theta: &ThetaVector<T>,
    cond: &TestCondition<T>,
) -> Result<DMatrix<T>> {
    let s = CellState::evaluate(theta, cond)?;
    let mut dir = vec![T::zero(); theta.dim()];
    s.direction(cond.stress(), &mut dir);
    Ok(outer(&dir))
}

fn accumulate<T: Scalar>(
    theta: &ThetaVector<T>,
    plan: &TestPlan<T>,
    per_condition: impl Fn(&CellState<T>, T) -> T,
) -> Result<DMatrix<T>> {
    let p = plan.param_dim();
    if theta.dim() != p {
        return Err(Error::DimensionMismatch {
            expected: p,
            found: theta.dim(),
        });
    }
    let mut acc = DMatrix::zeros(p, p);
    let mut dir = vec![T::zero(); p];
    for cond in plan.conditions() {
        let s = CellState::evaluate(theta, cond)?;
        s.direction(cond.stress(), &mut dir);
        let c = per_condition(&s, cond.devices_scalar());
        for i in 0..p {
            for j in 0..p {
                acc[(i, j)] += c * dir[i] * dir[j];
            }
        }
    }
    Ok(symmetrize(&acc))
}

/// `J_gamma(theta)`.
pub fn j_gamma<T: Scalar>(
    theta: &ThetaVector<T>,
    plan: &TestPlan<T>,
    gamma: TuningGamma<T>,
) -> Result<DMatrix<T>> {
    let total = plan.total_devices_scalar();
    accumulate(theta, plan, |s, k| {
        // (RF)^2 (F^(g-1) + R^(g-1)) = FR (F^g R + R^g F)
        k / total * s.fail * s.survive * s.weight(gamma.value())
    })
}

/// `K_gamma(theta)`.
pub fn k_gamma<T: Scalar>(
    theta: &ThetaVector<T>,
    plan: &TestPlan<T>,
    gamma: TuningGamma<T>,
) -> Result<DMatrix<T>> {
    let total = plan.total_devices_scalar();
    accumulate(theta, plan, |s, k| {
        // (F^(g-1) + R^(g-1))^2 F^3 R^3 = FR (F^g R + R^g F)^2
        let w = s.weight(gamma.value());
        k / total * s.fail * s.survive * w * w
    })
}

/// Fisher information `I_F(theta)` (unnormalised, `K_i` weights).
pub fn fisher_info<T: Scalar>(theta: &ThetaVector<T>, plan: &TestPlan<T>) -> Result<DMatrix<T>> {
    accumulate(theta, plan, |s, k| {
        let rf = s.fail * s.survive;
        k * rf * rf * (T::one() / s.fail + T::one() / s.survive)
    })
}

/// Sandwich covariance `J^-1 K J^-1` at `theta`.
pub fn asymptotic_cov<T: Scalar>(
    theta: &ThetaVector<T>,
    plan: &TestPlan<T>,
    gamma: TuningGamma<T>,
) -> Result<CovarianceBundle<T>> {
    let j_mat = j_gamma(theta, plan, gamma)?;
    let k_mat = k_gamma(theta, plan, gamma)?;
    let j_inv = spd_inverse(&j_mat, &design_label("J_gamma", plan))?;
    let sigma = symmetrize(&(&j_inv * &k_mat * &j_inv));
    Ok(CovarianceBundle {
        j_mat,
        k_mat,
        sigma,
        total_devices: plan.total_devices(),
    })
}

fn design_label<T: Scalar>(what: &str, plan: &TestPlan<T>) -> String {
    format!(
        "{what} ({} conditions, {} distinct stress vectors, {} parameters)",
        plan.len(),
        plan.distinct_stress_rows(),
        plan.param_dim()
    )
}

/// `Q_gamma`, `P_gamma` and `P K P'` for the restriction `L theta = c`
/// (`M = L'`).
pub fn restricted_bundle<T: Scalar>(
    theta: &ThetaVector<T>,
    plan: &TestPlan<T>,
    gamma: TuningGamma<T>,
    constraint: &AffineConstraint<T>,
) -> Result<RestrictedBundle<T>> {
    let p = plan.param_dim();
    if constraint.dim() != p {
        return Err(Error::DimensionMismatch {
            expected: p,
            found: constraint.dim(),
        });
    }
    let j_mat = j_gamma(theta, plan, gamma)?;
    let k_mat = k_gamma(theta, plan, gamma)?;
    let j_inv = spd_inverse(&j_mat, &design_label("J_gamma", plan))?;
    let m = constraint.matrix().transpose();
    let (q_mat, p_mat) = if constraint.rank() == 0 {
        (DMatrix::zeros(p, 0), j_inv.clone())
    } else {
        let mjm = m.transpose() * &j_inv * &m;
        let mjm_inv = spd_inverse(&mjm, "M' J^-1 M")?;
        let q = &j_inv * &m * mjm_inv;
        let pm = &j_inv - &q * m.transpose() * &j_inv;
        (q, pm)
    };
    let sigma_restricted = &p_mat * &k_mat * p_mat.transpose();
    Ok(RestrictedBundle {
        q_mat,
        p_mat,
        sigma_restricted,
    })
}

/// Influence of one observation of condition `index` (0-based) with failure
/// indicator `delta` in `[0, 1]`:
///
/// `J^-1 (K_i/K) d_i F R (F^(g-1) + R^(g-1)) (delta - F)`.
///
/// A failure pulls the fitted failure probability of that condition up.
/// Passing `delta = F_i` (the expected indicator) gives zero.
pub fn influence_indicator<T: Scalar>(
    theta: &ThetaVector<T>,
    plan: &TestPlan<T>,
    gamma: TuningGamma<T>,
    index: usize,
    delta: T,
) -> Result<Vec<T>> {
    let j_inv = spd_inverse(&j_gamma(theta, plan, gamma)?, &design_label("J_gamma", plan))?;
    influence_term(theta, plan, gamma, &j_inv, index, delta)
}

fn influence_term<T: Scalar>(
    theta: &ThetaVector<T>,
    plan: &TestPlan<T>,
    gamma: TuningGamma<T>,
    j_inv: &DMatrix<T>,
    index: usize,
    delta: T,
) -> Result<Vec<T>> {
    let cond = plan.conditions().get(index).ok_or(Error::DimensionMismatch {
        expected: plan.len(),
        found: index + 1,
    })?;
    if !(delta >= T::zero() && delta <= T::one()) {
        return Err(Error::Domain {
            what: "failure indicator must lie in [0, 1]",
            value: delta.as_f64(),
        });
    }
    let s = CellState::evaluate(theta, cond)?;
    let mut dir = vec![T::zero(); theta.dim()];
    s.direction(cond.stress(), &mut dir);
    let w = cond.devices_scalar() / plan.total_devices_scalar()
        * s.weight(gamma.value())
        * (delta - s.fail);
    let v = nalgebra::DVector::from_iterator(dir.len(), dir.iter().map(|d| *d * w));
    Ok((j_inv * v).iter().copied().collect())
}

/// Influence function of a single observation of condition `index`.
pub fn influence_single<T: Scalar>(
    theta: &ThetaVector<T>,
    plan: &TestPlan<T>,
    gamma: TuningGamma<T>,
    index: usize,
    outcome: Outcome,
) -> Result<Vec<T>> {
    influence_indicator(theta, plan, gamma, index, outcome.indicator())
}

/// Influence function with respect to all conditions, one failure indicator
/// per condition.
pub fn influence_all<T: Scalar>(
    theta: &ThetaVector<T>,
    plan: &TestPlan<T>,
    gamma: TuningGamma<T>,
    indicators: &[T],
) -> Result<Vec<T>> {
    if indicators.len() != plan.len() {
        return Err(Error::DimensionMismatch {
            expected: plan.len(),
            found: indicators.len(),
        });
    }
    let j_inv = spd_inverse(&j_gamma(theta, plan, gamma)?, &design_label("J_gamma", plan))?;
    let mut total = vec![T::zero(); theta.dim()];
    for (i, &delta) in indicators.iter().enumerate() {
        let term = influence_term(theta, plan, gamma, &j_inv, i, delta)?;
        total.iter_mut().zip(term).for_each(|(a, b)| *a += b);
    }
    Ok(total)
}
