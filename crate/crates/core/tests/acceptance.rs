//! Acceptance checks, one line per criterion.
//!
//! Runs as a plain binary (`harness = false`) so the summary is always shown.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use oneshot_dpd::asymptotics::{fisher_info, influence_indicator, j_gamma, k_gamma};
use oneshot_dpd::datasets::{fan2009, sim_design};
use oneshot_dpd::divergence::{objective_gradient, weighted_objective, TuningGamma};
use oneshot_dpd::estimation::{fit, fit_mle, fit_restricted, AffineConstraint, FitOptions};
use oneshot_dpd::hypothesis::{gof_chisq, ks_distance_chi2, TestKind};
use oneshot_dpd::linalg::relative_frobenius;
use oneshot_dpd::model::{cell_probs, link, mean_lifetime, TestCondition, TestPlan, ThetaVector};
use oneshot_dpd::montecarlo::{
    generating_probs, level_power_study, replicate, rmse_study, statistic_samples, ContaminationSpec, SimConfig,
    TestDesign,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SEED: u64 = 20_240_601;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict { pass, detail: detail.into() }
}

fn theta0() -> ThetaVector<f64> {
    ThetaVector::new(&[1.0, -0.5], &[0.8, 0.4]).unwrap()
}

fn gammas(v: &[f64]) -> Vec<TuningGamma<f64>> {
    v.iter().map(|&g| TuningGamma::new(g).unwrap()).collect()
}

fn printed_fan_estimate() -> ThetaVector<f64> {
    ThetaVector::new(&[-10.6674, 4291.109], &[4.3174, -1202.56]).unwrap()
}

/// Random plan with 1 or 2 stress factors and a random parameter whose
/// failure probabilities stay away from 0 and 1.
fn random_case(rng: &mut ChaCha8Rng) -> (ThetaVector<f64>, TestPlan<f64>) {
    loop {
        let j = rng.random_range(1..=2usize);
        let a: Vec<f64> = (0..=j).map(|_| rng.random_range(-1.0..1.5)).collect();
        let b: Vec<f64> = (0..=j).map(|_| rng.random_range(-0.5..0.8)).collect();
        let theta = ThetaVector::new(&a, &b).unwrap();
        let n = rng.random_range(2 * (j + 1)..=10);
        let conds: Vec<TestCondition<f64>> = (0..n)
            .map(|_| {
                let x: Vec<f64> = (0..j).map(|_| rng.random_range(0.0..1.0)).collect();
                let k = rng.random_range(10..200u64);
                let tau = rng.random_range(0.3..4.0);
                TestCondition::from_covariates(tau, &x, k, rng.random_range(0..=k)).unwrap()
            })
            .collect();
        let plan = TestPlan::new(conds).unwrap();
        let ok = plan.conditions().iter().all(|c| {
            let p = cell_probs(&theta, c).unwrap();
            p.fail > 1e-6 && p.survive > 1e-6
        });
        if ok {
            return (theta, plan);
        }
    }
}

fn criterion_1() -> Verdict {
    let start = Instant::now();
    let plan = fan2009::<f64>();
    let est = fit_mle(&plan, &FitOptions::default()).unwrap();
    let elapsed = start.elapsed().as_secs_f64();
    let printed_objective = weighted_objective(&printed_fan_estimate(), &plan, TuningGamma::mle()).unwrap();
    let targets = [62.2661, 32.1963, 18.3781];
    let mut worst = 0.0f64;
    let mut lifetimes = Vec::new();
    for (kelvin, target) in [308.0, 318.0, 328.0].into_iter().zip(targets) {
        let p = link(&est.theta_hat, &[1.0, 1.0 / kelvin]).unwrap();
        let m = mean_lifetime(&p).unwrap();
        lifetimes.push(m);
        worst = worst.max((m - target).abs() / target);
    }
    let objective_ok = est.objective_value <= printed_objective + 1e-9;
    let lifetimes_ok = worst < 0.02;
    verdict(
        est.converged && objective_ok && lifetimes_ok && elapsed < 5.0,
        format!(
            "objective {:.6} vs {:.6} at printed estimate ({}); lifetimes {:.2}/{:.2}/{:.2}, worst rel. err {:.3} ({}); {:.2}s",
            est.objective_value,
            printed_objective,
            if objective_ok { "ok" } else { "worse" },
            lifetimes[0],
            lifetimes[1],
            lifetimes[2],
            worst,
            if lifetimes_ok { "ok" } else { "outside 2%" },
            elapsed
        ),
    )
}

fn criterion_2() -> Verdict {
    let plan = fan2009::<f64>();
    let t = gof_chisq(&printed_fan_estimate(), &plan).unwrap();
    let mut listed: Vec<f64> = plan.conditions().iter().map(|c| c.failures()).collect();
    listed[4] = 5.0;
    let alt = gof_chisq(&printed_fan_estimate(), &plan.with_failures(&listed).unwrap()).unwrap();
    verdict(
        (t.statistic - 5.2979).abs() <= 5e-3 && t.dof == 15,
        format!(
            "T = {:.4}, dof {}, p = {:.4} on the tabulated counts; with the listed frequencies (group 5: 5 failures) T = {:.4}",
            t.statistic, t.dof, t.p_value, alt.statistic
        ),
    )
}

fn criterion_3() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let (mut worst_i, mut worst_k) = (0.0f64, 0.0f64);
    for _ in 0..100 {
        let (theta, plan) = random_case(&mut rng);
        let g0 = TuningGamma::mle();
        let j0 = j_gamma(&theta, &plan, g0).unwrap();
        let k0 = k_gamma(&theta, &plan, g0).unwrap();
        let fi = fisher_info(&theta, &plan).unwrap();
        worst_i = worst_i.max(relative_frobenius(&(&j0 * plan.total_devices() as f64), &fi));
        worst_k = worst_k.max(relative_frobenius(&k0, &j0));
    }
    verdict(
        worst_i < 1e-12 && worst_k < 1e-12,
        format!("max ||K J0 - I_F||/||I_F|| = {worst_i:.2e}, max ||J0 - K0||/||J0|| = {worst_k:.2e}"),
    )
}

/// Gradient of `F(tau)` from the log-logistic cdf directly:
/// dF/dalpha = -(beta/alpha) F R, dF/dbeta = F R ln(tau/alpha).
fn cdf_gradient_oracle(theta: &ThetaVector<f64>, c: &TestCondition<f64>) -> Vec<f64> {
    let p = link(theta, c.stress()).unwrap();
    let tb = c.tau().powf(p.beta);
    let ab = p.alpha.powf(p.beta);
    let f = tb / (tb + ab);
    let r = ab / (tb + ab);
    let d_alpha = -(p.beta / p.alpha) * f * r;
    let d_beta = f * r * (c.tau() / p.alpha).ln();
    let x = c.stress();
    x.iter()
        .map(|xj| d_alpha * p.alpha * xj)
        .chain(x.iter().map(|xj| d_beta * p.beta * xj))
        .collect()
}

fn criterion_4() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 1);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let (theta, plan) = random_case(&mut rng);
        let g = rng.random_range(0.0..1.0);
        let p = theta.dim();
        let k = plan.total_devices() as f64;
        let (mut jo, mut ko) = (DMatrix::zeros(p, p), DMatrix::zeros(p, p));
        for c in plan.conditions() {
            let grad = DVector::from_vec(cdf_gradient_oracle(&theta, c));
            let gg = &grad * grad.transpose();
            let pr = cell_probs(&theta, c).unwrap();
            let s = pr.fail.powf(g - 1.0) + pr.survive.powf(g - 1.0);
            let w = c.devices() as f64 / k;
            jo += &gg * (w * s);
            ko += &gg * (w * pr.fail * pr.survive * s * s);
        }
        let gm = TuningGamma::new(g).unwrap();
        worst = worst.max(relative_frobenius(&j_gamma(&theta, &plan, gm).unwrap(), &jo));
        worst = worst.max(relative_frobenius(&k_gamma(&theta, &plan, gm).unwrap(), &ko));
    }
    verdict(worst < 1e-10, format!("max relative Frobenius error {worst:.2e}"))
}

fn criterion_5() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 2);
    let mut worst = 0.0f64;
    for g in [0.0, 0.2, 0.5, 1.0] {
        let gm = TuningGamma::new(g).unwrap();
        for _ in 0..50 {
            let (theta, plan) = random_case(&mut rng);
            let analytic = objective_gradient(&theta, &plan, gm).unwrap();
            let scale = analytic.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            for (i, a) in analytic.iter().enumerate() {
                let h = 1e-6 * theta.as_slice()[i].abs().max(1.0);
                let shifted = |d: f64| {
                    let mut t = theta.clone();
                    t.as_mut_slice()[i] += d;
                    weighted_objective(&t, &plan, gm).unwrap()
                };
                let fd = (shifted(h) - shifted(-h)) / (2.0 * h);
                worst = worst.max((fd - a).abs() / scale.max(1e-8));
            }
        }
    }
    verdict(worst < 1e-5, format!("max relative error {worst:.2e} over 200 points"))
}

fn rmse_b0(cfg: &SimConfig, degree: f64) -> Vec<(f64, f64, usize)> {
    let mut cfg = cfg.clone();
    cfg.contamination = Some(ContaminationSpec::first_condition_b0(1, degree));
    rmse_study(&cfg)
        .unwrap()
        .into_iter()
        .filter(|r| r.component == "b0")
        .map(|r| (r.gamma, r.rmse, r.excluded))
        .collect()
}

fn criterion_6() -> Verdict {
    let start = Instant::now();
    let mut cfg = SimConfig::new(sim_design(100), theta0(), gammas(&[0.0, 0.6, 1.0]));
    cfg.replications = 500;
    cfg.seed = SEED;
    let pick = |rows: &[(f64, f64, usize)], g: f64| rows.iter().find(|r| r.0 == g).unwrap().1;
    let pure = rmse_b0(&cfg, 0.0);
    let mut pass = pick(&pure, 0.0) <= 1.1 * pick(&pure, 1.0);
    let mut detail = format!(
        "degree 0: b0 RMSE {:.4}/{:.4}/{:.4} at gamma 0/0.6/1",
        pick(&pure, 0.0),
        pick(&pure, 0.6),
        pick(&pure, 1.0)
    );
    let mut excluded = pure.iter().map(|r| r.2).sum::<usize>();
    for degree in [0.4, 0.6, 0.8] {
        let rows = rmse_b0(&cfg, degree);
        excluded += rows.iter().map(|r| r.2).sum::<usize>();
        pass &= pick(&rows, 0.6) < pick(&rows, 0.0);
        detail += &format!("; degree {degree}: {:.4} (gamma 0) vs {:.4} (gamma 0.6)", pick(&rows, 0.0), pick(&rows, 0.6));
    }
    let elapsed = start.elapsed().as_secs_f64();
    pass &= elapsed < 600.0;
    verdict(pass, format!("{detail}; {excluded} excluded fits; {elapsed:.1}s"))
}

fn criterion_7() -> Verdict {
    let mut cfg = SimConfig::new(sim_design(100), theta0(), gammas(&[0.0, 0.2, 0.4, 0.6]));
    cfg.replications = 500;
    cfg.seed = SEED + 7;
    let design = TestDesign {
        component: 2,
        null_value: 0.8,
        alt_value: 0.35,
        alpha: 0.05,
        tests: vec![TestKind::Wald],
    };
    let pure = level_power_study(&cfg, &design).unwrap();
    let at = |rows: &[oneshot_dpd::montecarlo::LevelPowerRow], g: f64| rows.iter().find(|r| r.gamma == g).unwrap().clone();
    let mut pass = pure.iter().all(|r| (0.02..=0.09).contains(&r.level));
    let mut detail = format!(
        "pure levels {}",
        pure.iter().map(|r| format!("{:.3}", r.level)).collect::<Vec<_>>().join("/")
    );
    let (p0, p6) = (at(&pure, 0.0).power, at(&pure, 0.6).power);
    pass &= p0 >= p6 - 0.05;
    detail += &format!("; pure power {p0:.3} (gamma 0) vs {p6:.3} (gamma 0.6)");
    cfg.gammas = gammas(&[0.0, 0.6]);
    for degree in [0.3, 0.5, 0.7] {
        cfg.contamination = Some(ContaminationSpec::first_condition_b0(1, degree));
        let rows = level_power_study(&cfg, &design).unwrap();
        let (l0, l6) = (at(&rows, 0.0).level, at(&rows, 0.6).level);
        pass &= l0 > l6;
        detail += &format!("; degree {degree}: level {l0:.3} vs {l6:.3}");
    }
    verdict(pass, detail)
}

fn criterion_8() -> Verdict {
    let mut cfg = SimConfig::new(sim_design(100), theta0(), gammas(&[0.2]));
    cfg.replications = 500;
    cfg.seed = SEED + 8;
    let constraint = AffineConstraint::fix(4, &[(2, 0.8)]).unwrap();
    let g = TuningGamma::new(0.2).unwrap();
    let mut pass = true;
    let mut parts = Vec::new();
    for kind in [TestKind::Wald, TestKind::Rao] {
        let stats: Vec<f64> = statistic_samples(&cfg, &theta0(), &constraint, g, kind)
            .unwrap()
            .into_iter()
            .flatten()
            .collect();
        let d = ks_distance_chi2(&stats, 1).unwrap();
        pass &= d < 0.08;
        parts.push(format!("{kind:?} KS {d:.4} ({} of 500 usable)", stats.len()));
    }
    verdict(pass, parts.join("; "))
}

/// Damped Newton on the objective in the free coordinates `z`, with
/// `theta = base + E z`, finite-difference gradient and Hessian.
fn reduced_newton(
    plan: &TestPlan<f64>,
    gamma: TuningGamma<f64>,
    base: &DVector<f64>,
    embed: &DMatrix<f64>,
    z0: DVector<f64>,
) -> DVector<f64> {
    let obj = |z: &DVector<f64>| {
        let t = base + embed * z;
        weighted_objective(&ThetaVector::from_flat(t.iter().copied().collect()).unwrap(), plan, gamma).unwrap()
    };
    let n = z0.len();
    let mut z = z0;
    for _ in 0..100 {
        let h = 1e-4;
        let mut grad = DVector::zeros(n);
        let mut hess = DMatrix::zeros(n, n);
        let f0 = obj(&z);
        let e = |k: usize| DVector::from_fn(n, |i, _| if i == k { h } else { 0.0 });
        for i in 0..n {
            let (fp, fm) = (obj(&(&z + e(i))), obj(&(&z - e(i))));
            grad[i] = (fp - fm) / (2.0 * h);
            hess[(i, i)] = (fp - 2.0 * f0 + fm) / (h * h);
            for j in 0..i {
                let v = (obj(&(&z + e(i) + e(j))) - obj(&(&z + e(i) - e(j))) - obj(&(&z - e(i) + e(j)))
                    + obj(&(&z - e(i) - e(j))))
                    / (4.0 * h * h);
                hess[(i, j)] = v;
                hess[(j, i)] = v;
            }
        }
        let step = hess.cholesky().map(|c| c.solve(&grad)).unwrap_or_else(|| grad.clone());
        let mut t = 1.0;
        while obj(&(&z - &step * t)) > f0 && t > 1e-8 {
            t *= 0.5;
        }
        z -= &step * t;
        if step.amax() * t < 1e-12 {
            break;
        }
    }
    z
}

fn criterion_9() -> Verdict {
    let design = sim_design::<f64>(100);
    let probs = generating_probs(&theta0(), &design, None).unwrap();
    let data = replicate(&design, &probs, SEED, 9).unwrap();
    let g = TuningGamma::new(0.2).unwrap();
    let opts = FitOptions::default();
    // (constraint, base, embedding of the free coordinates, label)
    let e = |rows: usize, cols: usize, entries: &[(usize, usize, f64)]| {
        let mut m = DMatrix::zeros(rows, cols);
        for &(i, j, v) in entries {
            m[(i, j)] = v;
        }
        m
    };
    let cases = [
        (
            AffineConstraint::fix(4, &[(2, 0.8)]).unwrap(),
            DVector::from_vec(vec![0.0, 0.0, 0.8, 0.0]),
            e(4, 3, &[(0, 0, 1.0), (1, 1, 1.0), (3, 2, 1.0)]),
            "b0 = 0.8",
        ),
        (
            AffineConstraint::fix(4, &[(1, -0.5)]).unwrap(),
            DVector::from_vec(vec![0.0, -0.5, 0.0, 0.0]),
            e(4, 3, &[(0, 0, 1.0), (2, 1, 1.0), (3, 2, 1.0)]),
            "a1 = -0.5",
        ),
        (
            AffineConstraint::new(DMatrix::from_row_slice(1, 4, &[1.0, 0.0, 0.0, 1.0]), vec![1.4]).unwrap(),
            // b1 = 1.4 - a0
            DVector::from_vec(vec![0.0, 0.0, 0.0, 1.4]),
            e(4, 3, &[(0, 0, 1.0), (3, 0, -1.0), (1, 1, 1.0), (2, 2, 1.0)]),
            "a0 + b1 = 1.4",
        ),
    ];
    let mut worst = 0.0f64;
    let mut pass = true;
    for (constraint, base, embed, _) in &cases {
        let est = fit_restricted(&data, g, constraint, &opts).unwrap();
        pass &= est.converged;
        let z0 = embed.transpose() * (DVector::from_column_slice(theta0().as_slice()) - base);
        let z = reduced_newton(&data, g, base, embed, z0);
        let oracle = base + embed * z;
        for (a, b) in est.theta_hat.as_slice().iter().zip(oracle.iter()) {
            worst = worst.max((a - b).abs());
        }
    }
    pass &= worst < 1e-6;
    verdict(
        pass,
        format!(
            "max |restricted - reduced refit| = {worst:.2e} over {}",
            cases.iter().map(|c| c.3).collect::<Vec<_>>().join(", ")
        ),
    )
}

fn criterion_10() -> Verdict {
    let design = sim_design::<f64>(100);
    let f: Vec<f64> = design
        .conditions()
        .iter()
        .map(|c| cell_probs(&theta0(), c).unwrap().fail)
        .collect();
    let expected: Vec<f64> = f.iter().map(|p| 100.0 * p).collect();
    let plan = design.with_failures(&expected).unwrap();
    let opts = FitOptions {
        grad_tolerance: 1e-11,
        initial_theta: Some(theta0()),
        multistart_count: 0,
        ..FitOptions::default()
    };
    let mut worst = 0.0f64;
    let mut pass = true;
    for g in [0.2, 0.5] {
        let gm = TuningGamma::new(g).unwrap();
        let base = fit(&plan, gm, &opts).unwrap();
        pass &= base.converged;
        for i0 in [0usize, 4, 8] {
            for delta in [0.0, 1.0] {
                let refit = |eps: f64| {
                    let mut n = expected.clone();
                    n[i0] = 100.0 * ((1.0 - eps) * f[i0] + eps * delta);
                    let e = fit(&plan.with_failures(&n).unwrap(), gm, &opts).unwrap();
                    assert!(e.converged, "refit at eps {eps} did not converge");
                    e.theta_hat
                        .as_slice()
                        .iter()
                        .zip(base.theta_hat.as_slice())
                        .map(|(a, b)| (a - b) / eps)
                        .collect::<Vec<f64>>()
                };
                let (d1, d2) = (refit(1e-3), refit(5e-4));
                let numeric: Vec<f64> = d1.iter().zip(&d2).map(|(a, b)| 2.0 * b - a).collect();
                let analytic = influence_indicator(&theta0(), &plan, gm, i0, delta).unwrap();
                let scale = analytic.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                let err = numeric
                    .iter()
                    .zip(&analytic)
                    .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
                    / scale;
                worst = worst.max(err);
            }
        }
    }
    pass &= worst < 1e-2;
    verdict(pass, format!("max relative error {worst:.2e} over 12 (gamma, condition, outcome) cases"))
}

fn main() {
    type Criterion = (&'static str, fn() -> Verdict);
    let criteria: [Criterion; 10] = [
        ("temperature data MLE functionals", criterion_1),
        ("goodness-of-fit statistic", criterion_2),
        ("Fisher identity", criterion_3),
        ("closed-form vs outer-product covariance", criterion_4),
        ("gradient oracle", criterion_5),
        ("RMSE robustness ordering", criterion_6),
        ("Wald level and power ordering", criterion_7),
        ("Wald/Rao chi-square calibration", criterion_8),
        ("restricted fit vs reduced refit", criterion_9),
        ("influence function vs contaminated refit", criterion_10),
    ];
    let mut failed = 0;
    for (k, (name, run)) in criteria.iter().enumerate() {
        let v = run();
        if !v.pass {
            failed += 1;
        }
        println!(
            "criterion {:>2} [{}] {name}: {}",
            k + 1,
            if v.pass { "PASS" } else { "FAIL" },
            v.detail
        );
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
