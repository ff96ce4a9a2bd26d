//! Unrestricted and restricted minimum weighted DPD estimation.
//!
//! The optimiser works in standardized coordinates: each covariate is
//! centred and scaled over the conditions of the plan, so that a design such
//! as inverse temperature (magnitude `1/300`) does not force coefficients of
//! magnitude `10^3`. With `theta = A phi` the objective in `phi` is smooth and
//! well scaled, and restricted fits use `phi = phi_p + N z` where `N` spans the
//! null space of `L A`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::asymptotics::j_gamma;
use crate::divergence::{estimating_vector, objective_gradient, weighted_objective, TuningGamma};
use crate::error::{Error, Result};
use crate::linalg::{equilibrated_condition, inf_norm, null_space, spd_inverse, CONDITION_LIMIT, RANK_TOLERANCE};
use crate::model::{TestPlan, ThetaVector};
use crate::optim::{halton_point, minimize, polish, Settings};
use crate::scalar::Scalar;

pub use crate::optim::FitStatus;

/// Objective values closer than this are treated as ties between starts.
const TIE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitOptions<T> {
    pub max_iterations: usize,
    /// Tolerance on `||U_gamma||_inf` (projected for restricted fits).
    pub grad_tolerance: T,
    pub step_tolerance: T,
    pub initial_theta: Option<ThetaVector<T>>,
    /// Number of low-discrepancy starts tried in addition to the default one.
    pub multistart_count: usize,
}

impl<T: Scalar> Default for FitOptions<T> {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            grad_tolerance: T::lit(1e-8),
            step_tolerance: T::lit(1e-10),
            initial_theta: None,
            multistart_count: 4,
        }
    }
}

impl<T: Scalar> FitOptions<T> {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::InvalidConfig("max_iterations must be positive".into()));
        }
        if !(self.grad_tolerance > T::zero()) || !(self.step_tolerance > T::zero()) {
            return Err(Error::InvalidConfig("tolerances must be positive".into()));
        }
        Ok(())
    }
}

/// Linear restrictions `L theta = c` of full row rank.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffineConstraint<T: Scalar> {
    matrix_l: DMatrix<T>,
    target_c: Vec<T>,
}

impl<T: Scalar> AffineConstraint<T> {
    pub fn new(matrix_l: DMatrix<T>, target_c: Vec<T>) -> Result<Self> {
        if matrix_l.nrows() != target_c.len() {
            return Err(Error::InvalidConstraint(format!(
                "{} restrictions but {} targets",
                matrix_l.nrows(),
                target_c.len()
            )));
        }
        if matrix_l.ncols() == 0 || !matrix_l.ncols().is_multiple_of(2) {
            return Err(Error::InvalidConstraint(format!(
                "restriction matrix has {} columns, expected 2(J+1)",
                matrix_l.ncols()
            )));
        }
        if matrix_l.iter().chain(&target_c).any(|v| !v.is_finite()) {
            return Err(Error::InvalidConstraint("non-finite entry".into()));
        }
        let (rank, _) = null_space(&matrix_l);
        if rank != matrix_l.nrows() {
            return Err(Error::InvalidConstraint(format!(
                "restriction matrix has rank {rank}, expected full row rank {}",
                matrix_l.nrows()
            )));
        }
        Ok(Self { matrix_l, target_c })
    }

    /// The empty restriction set on a `dim`-dimensional parameter.
    pub fn none(dim: usize) -> Self {
        Self {
            matrix_l: DMatrix::zeros(0, dim),
            target_c: Vec::new(),
        }
    }

    /// Fixes the listed components `(index, value)`.
    pub fn fix(dim: usize, fixed: &[(usize, T)]) -> Result<Self> {
        let mut l = DMatrix::zeros(fixed.len(), dim);
        for (row, &(index, _)) in fixed.iter().enumerate() {
            if index >= dim {
                return Err(Error::InvalidConstraint(format!(
                    "component {index} out of range for dimension {dim}"
                )));
            }
            l[(row, index)] = T::one();
        }
        Self::new(l, fixed.iter().map(|&(_, v)| v).collect())
    }

    /// Fixes components by their conventional names (`a0`, `b1`, ...).
    pub fn fix_named(stress_dim: usize, fixed: &[(&str, T)]) -> Result<Self> {
        let names = ThetaVector::<T>::component_names(stress_dim);
        let pairs = fixed
            .iter()
            .map(|&(name, v)| {
                names
                    .iter()
                    .position(|n| n == name)
                    .map(|i| (i, v))
                    .ok_or_else(|| {
                        Error::InvalidConstraint(format!(
                            "unknown component `{name}` (expected one of {})",
                            names.join(", ")
                        ))
                    })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::fix(names.len(), &pairs)
    }

    pub fn matrix(&self) -> &DMatrix<T> {
        &self.matrix_l
    }

    pub fn target(&self) -> &[T] {
        &self.target_c
    }

    /// Number of restrictions `r`.
    pub fn rank(&self) -> usize {
        self.matrix_l.nrows()
    }

    /// Parameter dimension the restriction applies to.
    pub fn dim(&self) -> usize {
        self.matrix_l.ncols()
    }

    /// `m(theta) = L theta - c`.
    pub fn evaluate(&self, theta: &ThetaVector<T>) -> Result<Vec<T>> {
        if theta.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: theta.dim(),
            });
        }
        let m = &self.matrix_l * DVector::from_column_slice(theta.as_slice());
        Ok(m.iter().zip(&self.target_c).map(|(a, b)| *a - *b).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Estimate<T> {
    pub theta_hat: ThetaVector<T>,
    pub gamma: TuningGamma<T>,
    pub objective_value: T,
    /// `||U_gamma||_inf`, projected onto the constraint null space for
    /// restricted fits.
    pub grad_norm: T,
    pub converged: bool,
    pub status: FitStatus,
    pub iterations: usize,
    pub lagrange_multipliers: Option<Vec<T>>,
    /// Index of the winning start (0 is the default start).
    pub start_index: usize,
    /// Objective values of the accepted iterations of the winning start.
    pub trace: Vec<T>,
}

/// Minimum weighted DPD estimate.
pub fn fit<T: Scalar>(plan: &TestPlan<T>, gamma: TuningGamma<T>, opts: &FitOptions<T>) -> Result<Estimate<T>> {
    let mut est = solve(plan, gamma, &AffineConstraint::none(plan.param_dim()), opts)?;
    est.lagrange_multipliers = None;
    Ok(est)
}

/// Maximum likelihood estimate (`gamma = 0`).
pub fn fit_mle<T: Scalar>(plan: &TestPlan<T>, opts: &FitOptions<T>) -> Result<Estimate<T>> {
    fit(plan, TuningGamma::mle(), opts)
}

/// Minimum weighted DPD estimate subject to `L theta = c`.
pub fn fit_restricted<T: Scalar>(
    plan: &TestPlan<T>,
    gamma: TuningGamma<T>,
    constraint: &AffineConstraint<T>,
    opts: &FitOptions<T>,
) -> Result<Estimate<T>> {
    solve(plan, gamma, constraint, opts)
}

/// `theta = A phi` for centred and scaled covariates.
fn standardization<T: Scalar>(plan: &TestPlan<T>) -> DMatrix<T> {
    let j = plan.stress_dim();
    let n = T::from_usize(plan.len()).unwrap_or(T::one());
    let mut block = DMatrix::identity(j + 1, j + 1);
    for k in 1..=j {
        let xs = plan.conditions().iter().map(|c| c.stress()[k]);
        let mean = xs.clone().fold(T::zero(), |a, x| a + x) / n;
        let var = xs.fold(T::zero(), |a, x| a + (x - mean) * (x - mean)) / n;
        let sd = if var > T::zero() { var.sqrt() } else { T::one() };
        // a_k = phi_k / sd, a_0 = phi_0 - mean * phi_k / sd
        block[(k, k)] = T::one() / sd;
        block[(0, k)] = -mean / sd;
    }
    let p = 2 * (j + 1);
    let mut a = DMatrix::zeros(p, p);
    a.view_mut((0, 0), (j + 1, j + 1)).copy_from(&block);
    a.view_mut((j + 1, j + 1), (j + 1, j + 1)).copy_from(&block);
    a
}

fn check_identifiable<T: Scalar>(plan: &TestPlan<T>) -> Result<()> {
    let width = plan.stress_dim() + 1;
    let mut rows: Vec<&[T]> = Vec::new();
    for c in plan.conditions() {
        if !rows.contains(&c.stress()) {
            rows.push(c.stress());
        }
    }
    let design = DMatrix::from_fn(rows.len(), width, |i, k| rows[i][k]);
    let sv = design.singular_values();
    let max = sv.iter().fold(T::zero(), |a, &b| a.max(b));
    let rank = sv.iter().filter(|&&s| s > max * T::lit(RANK_TOLERANCE)).count();
    if rank < width {
        return Err(Error::NotIdentifiable(format!(
            "{} distinct stress vectors of rank {rank}; at least {width} linearly independent ones are needed",
            rows.len()
        )));
    }
    Ok(())
}

struct Reduced<T: Scalar> {
    /// Maps `z` to `theta`: `theta = offset + map z`.
    map: DMatrix<T>,
    offset: DVector<T>,
    /// Orthonormal basis of `null(L)` in theta coordinates.
    projector: DMatrix<T>,
}

impl<T: Scalar> Reduced<T> {
    fn new(a: &DMatrix<T>, constraint: &AffineConstraint<T>) -> Result<Self> {
        let p = a.nrows();
        let l = constraint.matrix();
        let (_, theta_null) = null_space(l);
        let projector = &theta_null * theta_null.transpose();
        if constraint.rank() == 0 {
            return Ok(Self {
                map: a.clone(),
                offset: DVector::zeros(p),
                projector,
            });
        }
        let la = l * a;
        let (_, null) = null_space(&la);
        // minimum-norm phi_p with (L A) phi_p = c
        let c = DVector::from_column_slice(constraint.target());
        let gram = &la * la.transpose();
        let gram_inv = spd_inverse(&gram, "restriction Gram matrix")?;
        let phi_p = la.transpose() * (gram_inv * c);
        Ok(Self {
            map: a * null,
            offset: a * phi_p,
            projector,
        })
    }

    fn theta(&self, z: &DVector<T>) -> Result<ThetaVector<T>> {
        let t = &self.offset + &self.map * z;
        ThetaVector::from_flat(t.iter().copied().collect())
    }

    /// Least-squares `z` whose image is closest to `theta`.
    fn project(&self, theta: &ThetaVector<T>) -> DVector<T> {
        let rhs = DVector::from_column_slice(theta.as_slice()) - &self.offset;
        let k = self.map.ncols();
        if k == 0 {
            return DVector::zeros(0);
        }
        let svd = self.map.clone().svd(true, true);
        svd.solve(&rhs, T::lit(1e-14)).unwrap_or_else(|_| DVector::zeros(k))
    }

    fn projected_norm(&self, u: &[T]) -> T {
        let v = &self.projector * DVector::from_column_slice(u);
        inf_norm(v.as_slice())
    }
}

fn solve<T: Scalar>(
    plan: &TestPlan<T>,
    gamma: TuningGamma<T>,
    constraint: &AffineConstraint<T>,
    opts: &FitOptions<T>,
) -> Result<Estimate<T>> {
    opts.validate()?;
    let p = plan.param_dim();
    if constraint.dim() != p {
        return Err(Error::DimensionMismatch {
            expected: p,
            found: constraint.dim(),
        });
    }
    if let Some(init) = &opts.initial_theta {
        if init.dim() != p {
            return Err(Error::DimensionMismatch {
                expected: p,
                found: init.dim(),
            });
        }
    }
    check_identifiable(plan)?;
    let all_boundary = plan
        .conditions()
        .iter()
        .all(|c| c.failures() == T::zero() || c.failures() == c.devices_scalar());
    if all_boundary && opts.multistart_count == 0 {
        return Err(Error::InvalidPlan(
            "every condition has all or no failures; enable multistart to attempt a fit".into(),
        ));
    }

    let a = standardization(plan);
    let reduced = Reduced::new(&a, constraint)?;
    let dim_z = reduced.map.ncols();
    let settings = Settings {
        max_iterations: opts.max_iterations,
        grad_tolerance: opts.grad_tolerance,
        step_tolerance: opts.step_tolerance,
    };

    let eval = |z: &DVector<T>| {
        let theta = reduced.theta(z)?;
        let f = weighted_objective(&theta, plan, gamma)?;
        let g = objective_gradient(&theta, plan, gamma)?;
        let gz = reduced.map.transpose() * DVector::from_column_slice(&g);
        let u = estimating_vector(&theta, plan, gamma)?;
        Ok((f, gz, reduced.projected_norm(&u)))
    };

    let mut starts = vec![match &opts.initial_theta {
        Some(init) => reduced.project(init),
        None => DVector::zeros(dim_z),
    }];
    for k in 1..=opts.multistart_count {
        let pt = halton_point(k as u64, dim_z, -2.0, 2.0);
        starts.push(DVector::from_iterator(dim_z, pt.into_iter().map(T::lit)));
    }

    let mut best: Option<(usize, crate::optim::Outcome<T>)> = None;
    for (index, z0) in starts.into_iter().enumerate() {
        let out = polish(minimize(z0, &settings, eval), &settings, eval);
        let better = match &best {
            None => true,
            Some((_, b)) => {
                out.value.is_finite()
                    && (!b.value.is_finite() || out.value < b.value - T::lit(TIE_TOLERANCE))
            }
        };
        if better {
            best = Some((index, out));
        }
    }
    let (start_index, out) = best.expect("at least one start");
    if out.status == FitStatus::NonFinite {
        return Err(Error::NonFinite {
            what: "objective at every start",
            condition: 0,
        });
    }

    let mut theta = reduced.theta(&out.x)?;
    snap_to_constraint(&mut theta, constraint)?;
    let u = estimating_vector(&theta, plan, gamma)?;
    let grad_norm = reduced.projected_norm(&u);
    let mut status = out.status;
    if status == FitStatus::StepTolerance && grad_norm <= opts.grad_tolerance {
        status = FitStatus::Converged;
    }
    if dim_z > 0 {
        let j = j_gamma(&theta, plan, gamma)?;
        let reduced_j = reduced.map.transpose() * j * &reduced.map;
        if !(equilibrated_condition(&reduced_j) <= CONDITION_LIMIT) {
            status = FitStatus::RankDeficient;
        }
    }
    let converged = status == FitStatus::Converged && grad_norm <= opts.grad_tolerance;

    let lagrange_multipliers = Some(multipliers(constraint, &u)?);
    Ok(Estimate {
        objective_value: weighted_objective(&theta, plan, gamma)?,
        theta_hat: theta,
        gamma,
        grad_norm,
        converged,
        status,
        iterations: out.iterations,
        lagrange_multipliers,
        start_index,
        trace: out.trace,
    })
}

/// Removes round-off violation of `L theta = c` by the minimum-norm correction.
fn snap_to_constraint<T: Scalar>(theta: &mut ThetaVector<T>, constraint: &AffineConstraint<T>) -> Result<()> {
    if constraint.rank() == 0 {
        return Ok(());
    }
    let l = constraint.matrix();
    let m = DVector::from_vec(constraint.evaluate(theta)?);
    let gram_inv = spd_inverse(&(l * l.transpose()), "restriction Gram matrix")?;
    let delta = l.transpose() * (gram_inv * m);
    for (t, d) in theta.as_mut_slice().iter_mut().zip(delta.iter()) {
        *t -= *d;
    }
    Ok(())
}

/// Least-squares solution of `U + L' lambda = 0`.
fn multipliers<T: Scalar>(constraint: &AffineConstraint<T>, u: &[T]) -> Result<Vec<T>> {
    if constraint.rank() == 0 {
        return Ok(Vec::new());
    }
    let l = constraint.matrix();
    let gram_inv = spd_inverse(&(l * l.transpose()), "restriction Gram matrix")?;
    let lambda = -(gram_inv * (l * DVector::from_column_slice(u)));
    Ok(lambda.iter().copied().collect())
}
