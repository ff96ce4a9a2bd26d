//! BFGS with backtracking (Armijo) line search.
//!
//! The caller supplies the objective, its gradient in optimisation
//! coordinates and a stationarity measure, which need not be the norm of
//! that gradient (the estimator tests `||U_gamma||_inf` in the original
//! parameterisation).

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitStatus {
    Converged,
    MaxIterations,
    /// No acceptable step along the search direction.
    LineSearchFailed,
    /// Steps fell below the step tolerance before the gradient test passed.
    StepTolerance,
    /// The information matrix at the solution is singular.
    RankDeficient,
    /// Every start produced a non-finite objective.
    NonFinite,
}

/// Objective value, gradient in optimisation coordinates, stationarity measure.
pub(crate) type Evaluation<T> = (T, DVector<T>, T);

#[derive(Debug, Clone)]
pub(crate) struct Settings<T> {
    pub max_iterations: usize,
    pub grad_tolerance: T,
    pub step_tolerance: T,
}

#[derive(Debug, Clone)]
pub(crate) struct Outcome<T> {
    pub x: DVector<T>,
    pub value: T,
    pub stationarity: T,
    pub iterations: usize,
    pub status: FitStatus,
    pub trace: Vec<T>,
}

const ARMIJO: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 60;

fn evaluate_finite<T: Scalar, F>(eval: &F, x: &DVector<T>) -> Option<Evaluation<T>>
where
    F: Fn(&DVector<T>) -> Result<Evaluation<T>>,
{
    match eval(x) {
        Ok((f, g, s)) if f.is_finite() && g.iter().all(|v| v.is_finite()) && s.is_finite() => {
            Some((f, g, s))
        }
        _ => None,
    }
}

pub(crate) fn minimize<T: Scalar, F>(x0: DVector<T>, settings: &Settings<T>, eval: F) -> Outcome<T>
where
    F: Fn(&DVector<T>) -> Result<Evaluation<T>>,
{
    let n = x0.len();
    let Some((mut f, mut g, mut stat)) = evaluate_finite(&eval, &x0) else {
        return Outcome {
            x: x0,
            value: T::infinity(),
            stationarity: T::infinity(),
            iterations: 0,
            status: FitStatus::NonFinite,
            trace: Vec::new(),
        };
    };
    let mut x = x0;
    let mut h = DMatrix::<T>::identity(n, n);
    let mut fresh = true;
    let mut trace = vec![f];
    let c1 = T::lit(ARMIJO);

    for iteration in 0..settings.max_iterations {
        if stat <= settings.grad_tolerance {
            return Outcome {
                x,
                value: f,
                stationarity: stat,
                iterations: iteration,
                status: FitStatus::Converged,
                trace,
            };
        }
        let mut dir = -(&h * &g);
        let mut slope = g.dot(&dir);
        if !(slope < T::zero()) {
            h = DMatrix::identity(n, n);
            fresh = true;
            dir = -g.clone();
            slope = g.dot(&dir);
        }

        // Backtracking; near the optimum round-off hides the Armijo decrease,
        // so a non-increasing step that shrinks the stationarity measure is
        // accepted as a fallback.
        let mut step = T::one();
        let mut accepted = None;
        let mut fallback = None;
        for _ in 0..MAX_BACKTRACKS {
            let trial = &x + &dir * step;
            if let Some((ft, gt, st)) = evaluate_finite(&eval, &trial) {
                if ft <= f + c1 * step * slope {
                    accepted = Some((trial, ft, gt, st));
                    break;
                }
                if fallback.is_none() && ft <= f && st < stat {
                    fallback = Some((trial, ft, gt, st));
                }
            }
            step *= T::lit(0.5);
        }
        let Some((x_new, f_new, g_new, s_new)) = accepted.or(fallback) else {
            if !fresh {
                h = DMatrix::identity(n, n);
                fresh = true;
                continue;
            }
            return Outcome {
                x,
                value: f,
                stationarity: stat,
                iterations: iteration,
                status: FitStatus::LineSearchFailed,
                trace,
            };
        };

        let s = &x_new - &x;
        let y = &g_new - &g;
        let step_size = s.amax();
        let stalled = !(s_new < stat);
        x = x_new;
        f = f_new;
        g = g_new;
        stat = s_new;
        trace.push(f);

        // Tiny steps are normal close to the optimum, where the objective is
        // flat to round-off; stop only once the stationarity measure stalls.
        if step_size < settings.step_tolerance && (stalled || stat <= settings.grad_tolerance) {
            let status = if stat <= settings.grad_tolerance {
                FitStatus::Converged
            } else {
                FitStatus::StepTolerance
            };
            return Outcome {
                x,
                value: f,
                stationarity: stat,
                iterations: iteration + 1,
                status,
                trace,
            };
        }

        let sy = s.dot(&y);
        if sy > T::lit(1e-14) * s.norm() * y.norm() {
            if fresh {
                h *= sy / y.dot(&y);
                fresh = false;
            }
            let rho = T::one() / sy;
            let hy = &h * &y;
            let yhy = y.dot(&hy);
            // H+ = H - rho (s (Hy)' + (Hy) s') + (rho^2 y'Hy + rho) s s'
            h -= (&s * hy.transpose() + &hy * s.transpose()) * rho;
            h += &s * s.transpose() * (rho * rho * yhy + rho);
        }
    }
    let status = if stat <= settings.grad_tolerance {
        FitStatus::Converged
    } else {
        FitStatus::MaxIterations
    };
    Outcome {
        x,
        value: f,
        stationarity: stat,
        iterations: settings.max_iterations,
        status,
        trace,
    }
}

const POLISH_STEPS: usize = 20;

/// Newton iterations on the gradient, with the Hessian from central
/// differences of the gradient. Used after BFGS when the objective is flat to
/// round-off but the stationarity test has not yet passed: a step is accepted
/// when it lowers the stationarity measure and raises the objective by no more
/// than round-off. These steps are counted as iterations but not logged in
/// the descent trace.
pub(crate) fn polish<T: Scalar, F>(mut out: Outcome<T>, settings: &Settings<T>, eval: F) -> Outcome<T>
where
    F: Fn(&DVector<T>) -> Result<Evaluation<T>>,
{
    let n = out.x.len();
    if n == 0 || out.stationarity <= settings.grad_tolerance || !out.value.is_finite() {
        return out;
    }
    let Some((_, mut g, _)) = evaluate_finite(&eval, &out.x) else {
        return out;
    };
    let slack = T::lit(64.0) * T::default_epsilon() * (T::one() + out.value.abs());
    for _ in 0..POLISH_STEPS {
        if out.stationarity <= settings.grad_tolerance {
            break;
        }
        let mut hess = DMatrix::zeros(n, n);
        for k in 0..n {
            let h = T::lit(1e-5) * (T::one() + out.x[k].abs());
            let mut up = out.x.clone();
            let mut down = out.x.clone();
            up[k] += h;
            down[k] -= h;
            let (Some((_, gu, _)), Some((_, gd, _))) = (evaluate_finite(&eval, &up), evaluate_finite(&eval, &down))
            else {
                return out;
            };
            hess.set_column(k, &((gu - gd) / (h + h)));
        }
        let hess = (&hess + hess.transpose()) * T::lit(0.5);
        let Some(chol) = hess.cholesky() else {
            return out;
        };
        let dir = -chol.solve(&g);
        let mut step = T::one();
        let mut moved = false;
        for _ in 0..10 {
            let trial = &out.x + &dir * step;
            if let Some((ft, gt, st)) = evaluate_finite(&eval, &trial) {
                if st < out.stationarity && ft <= out.value + slack {
                    out.x = trial;
                    out.value = ft;
                    out.stationarity = st;
                    out.iterations += 1;
                    g = gt;
                    moved = true;
                    break;
                }
            }
            step *= T::lit(0.5);
        }
        if !moved {
            break;
        }
    }
    if out.stationarity <= settings.grad_tolerance {
        out.status = FitStatus::Converged;
    }
    out
}

/// Radical inverse of `index` in `base` (van der Corput).
fn radical_inverse(mut index: u64, base: u64) -> f64 {
    let mut result = 0.0;
    let mut f = 1.0 / base as f64;
    while index > 0 {
        result += f * (index % base) as f64;
        index /= base;
        f /= base as f64;
    }
    result
}

const PRIMES: [u64; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];

/// Point `index` (1-based) of the Halton sequence in `dim` dimensions,
/// mapped to `[lo, hi]` per coordinate.
pub(crate) fn halton_point(index: u64, dim: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..dim)
        .map(|d| {
            let base = PRIMES.get(d).copied().unwrap_or(2 * d as u64 + 1);
            lo + (hi - lo) * radical_inverse(index, base)
        })
        .collect()
}
