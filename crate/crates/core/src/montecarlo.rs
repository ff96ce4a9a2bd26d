//! Seeded simulation of contaminated one-shot device data, RMSE curves and
//! empirical level/power of the Wald- and Rao-type tests.
//!
//! Randomness: replication `r` uses `ChaCha8Rng::seed_from_u64(seed)` with
//! stream `r`, and condition `i` draws from word position `i << 32` of that
//! stream. Each binomial draw therefore depends only on `(seed, r, i)`, so
//! results do not depend on scheduling, and the same uniforms are reused
//! across contamination degrees and tuning parameters.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::divergence::TuningGamma;
use crate::error::{Error, Result};
use crate::estimation::{fit, fit_restricted, AffineConstraint, FitOptions};
use crate::hypothesis::{rao_test, wald_test, TestKind};
use crate::model::{cell_probs, TestPlan, ThetaVector};

/// Parameter decrease applied to some conditions of the generating model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContaminationSpec {
    pub target_component: usize,
    /// 0-based condition indices generated from the contaminated parameter.
    pub target_conditions: Vec<usize>,
    /// Relative decrease `|theta_c - theta| / |theta|`.
    pub degree: f64,
}

impl ContaminationSpec {
    /// Shape intercept `b0` decreased in the first condition, as in the
    /// robustness study.
    pub fn first_condition_b0(stress_dim: usize, degree: f64) -> Self {
        Self {
            target_component: stress_dim + 1,
            target_conditions: vec![0],
            degree,
        }
    }
}

/// Multiplies the target component by `1 - degree`.
pub fn contaminate(theta: &ThetaVector<f64>, spec: &ContaminationSpec) -> Result<ThetaVector<f64>> {
    if !(spec.degree >= 0.0) || !spec.degree.is_finite() {
        return Err(Error::Domain {
            what: "contamination degree must be non-negative",
            value: spec.degree,
        });
    }
    let j = spec.target_component;
    if j >= theta.dim() {
        return Err(Error::DimensionMismatch {
            expected: theta.dim(),
            found: j + 1,
        });
    }
    if spec.degree > 0.0 && theta.as_slice()[j] == 0.0 {
        return Err(Error::InvalidConfig(
            "cannot contaminate a zero component by relative deviation".into(),
        ));
    }
    let mut out = theta.clone();
    out.as_mut_slice()[j] *= 1.0 - spec.degree;
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    /// Design whose failure counts are ignored.
    pub design: TestPlan<f64>,
    pub theta_true: ThetaVector<f64>,
    pub gammas: Vec<TuningGamma<f64>>,
    pub replications: usize,
    pub seed: u64,
    pub contamination: Option<ContaminationSpec>,
    pub fit_options: FitOptions<f64>,
}

impl SimConfig {
    pub fn new(design: TestPlan<f64>, theta_true: ThetaVector<f64>, gammas: Vec<TuningGamma<f64>>) -> Self {
        Self {
            design,
            theta_true,
            gammas,
            replications: 500,
            seed: 0,
            contamination: None,
            fit_options: FitOptions::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(Error::InvalidConfig("replications must be at least 1".into()));
        }
        if self.gammas.is_empty() {
            return Err(Error::InvalidConfig("at least one tuning parameter is needed".into()));
        }
        if self.theta_true.dim() != self.design.param_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.design.param_dim(),
                found: self.theta_true.dim(),
            });
        }
        if let Some(spec) = &self.contamination {
            if let Some(&i) = spec.target_conditions.iter().find(|&&i| i >= self.design.len()) {
                return Err(Error::InvalidConfig(format!(
                    "contaminated condition {} outside a plan of {} conditions",
                    i + 1,
                    self.design.len()
                )));
            }
            contaminate(&self.theta_true, spec)?;
        }
        self.fit_options.validate()
    }

    pub fn degree(&self) -> f64 {
        self.contamination.as_ref().map_or(0.0, |c| c.degree)
    }
}

/// RNG of replication `rep`.
pub fn replication_rng(seed: u64, rep: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(rep);
    rng
}

fn binomial(rng: &mut ChaCha8Rng, devices: u64, p: f64) -> u64 {
    Binomial::new(devices, p.clamp(0.0, 1.0))
        .expect("probability clamped to [0, 1]")
        .sample(rng)
}

/// Fills the design with independent binomial failure counts drawn
/// sequentially from `rng`.
pub fn sample_counts(theta: &ThetaVector<f64>, design: &TestPlan<f64>, rng: &mut ChaCha8Rng) -> Result<TestPlan<f64>> {
    let counts = design
        .conditions()
        .iter()
        .map(|c| Ok(binomial(rng, c.devices(), cell_probs(theta, c)?.fail) as f64))
        .collect::<Result<Vec<_>>>()?;
    design.with_failures(&counts)
}

/// Per-condition generating failure probabilities under optional contamination.
pub fn generating_probs(
    theta: &ThetaVector<f64>,
    design: &TestPlan<f64>,
    contamination: Option<&ContaminationSpec>,
) -> Result<Vec<f64>> {
    let dirty = contamination.map(|spec| contaminate(theta, spec)).transpose()?;
    design
        .conditions()
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let th = match (&dirty, contamination) {
                (Some(d), Some(spec)) if spec.target_conditions.contains(&i) => d,
                _ => theta,
            };
            Ok(cell_probs(th, c)?.fail)
        })
        .collect()
}

/// Data set of replication `rep`: condition `i` is drawn from word position
/// `i << 32` of the replication stream.
pub fn replicate(design: &TestPlan<f64>, probs: &[f64], seed: u64, rep: u64) -> Result<TestPlan<f64>> {
    let mut rng = replication_rng(seed, rep);
    let counts: Vec<f64> = design
        .conditions()
        .iter()
        .zip(probs)
        .enumerate()
        .map(|(i, (c, &p))| {
            rng.set_word_pos((i as u128) << 32);
            binomial(&mut rng, c.devices(), p) as f64
        })
        .collect();
    design.with_failures(&counts)
}

/// One cell of an RMSE table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RmseRow {
    pub gamma: f64,
    pub degree: f64,
    pub component: String,
    pub rmse: f64,
    pub replications: usize,
    pub excluded: usize,
}

/// Root mean squared error of each component of the estimate, per tuning
/// parameter: `sqrt((1/R) sum_r (theta_hat_r - theta)^2)` over converged fits.
pub fn rmse_study(cfg: &SimConfig) -> Result<Vec<RmseRow>> {
    cfg.validate()?;
    let probs = generating_probs(&cfg.theta_true, &cfg.design, cfg.contamination.as_ref())?;
    let fits: Vec<Vec<Option<Vec<f64>>>> = (0..cfg.replications as u64)
        .into_par_iter()
        .map(|rep| {
            let data = replicate(&cfg.design, &probs, cfg.seed, rep)?;
            Ok(cfg
                .gammas
                .iter()
                .map(|&g| match fit(&data, g, &cfg.fit_options) {
                    Ok(e) if e.converged => Some(e.theta_hat.into_vec()),
                    _ => None,
                })
                .collect())
        })
        .collect::<Result<_>>()?;

    let names = ThetaVector::<f64>::component_names(cfg.design.stress_dim());
    let truth = cfg.theta_true.as_slice();
    let mut rows = Vec::new();
    for (k, g) in cfg.gammas.iter().enumerate() {
        let mut sums = vec![0.0; truth.len()];
        let mut used = 0usize;
        for rep in &fits {
            if let Some(theta) = &rep[k] {
                used += 1;
                for (s, (a, b)) in sums.iter_mut().zip(theta.iter().zip(truth)) {
                    *s += (a - b) * (a - b);
                }
            }
        }
        for (name, s) in names.iter().zip(&sums) {
            rows.push(RmseRow {
                gamma: g.value(),
                degree: cfg.degree(),
                component: name.clone(),
                rmse: if used > 0 { (s / used as f64).sqrt() } else { f64::NAN },
                replications: cfg.replications,
                excluded: cfg.replications - used,
            });
        }
    }
    Ok(rows)
}

/// Hypothesis and data-generating alternatives for a level/power study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestDesign {
    /// Single-component null `theta_component = null_value`.
    pub component: usize,
    pub null_value: f64,
    pub alt_value: f64,
    pub alpha: f64,
    pub tests: Vec<TestKind>,
}

impl TestDesign {
    pub fn constraint(&self, dim: usize) -> Result<AffineConstraint<f64>> {
        AffineConstraint::fix(dim, &[(self.component, self.null_value)])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelPowerRow {
    pub test: TestKind,
    pub gamma: f64,
    pub degree: f64,
    pub level: f64,
    pub power: f64,
    pub replications: usize,
    pub excluded_level: usize,
    pub excluded_power: usize,
}

/// Test statistic per replication (`None` when the fit or the test failed).
pub fn statistic_samples(
    cfg: &SimConfig,
    generating: &ThetaVector<f64>,
    constraint: &AffineConstraint<f64>,
    gamma: TuningGamma<f64>,
    kind: TestKind,
) -> Result<Vec<Option<f64>>> {
    cfg.validate()?;
    let probs = generating_probs(generating, &cfg.design, cfg.contamination.as_ref())?;
    (0..cfg.replications as u64)
        .into_par_iter()
        .map(|rep| {
            let data = replicate(&cfg.design, &probs, cfg.seed, rep)?;
            Ok(run_test(&data, constraint, gamma, kind, &cfg.fit_options))
        })
        .collect()
}

fn run_test(
    data: &TestPlan<f64>,
    constraint: &AffineConstraint<f64>,
    gamma: TuningGamma<f64>,
    kind: TestKind,
    opts: &FitOptions<f64>,
) -> Option<f64> {
    let outcome = match kind {
        TestKind::Wald => {
            let e = fit(data, gamma, opts).ok().filter(|e| e.converged)?;
            wald_test(&e, data, constraint)
        }
        TestKind::Rao => {
            let e = fit_restricted(data, gamma, constraint, opts).ok().filter(|e| e.converged)?;
            rao_test(&e, data, gamma, constraint)
        }
        TestKind::ChiSquareGof => return None,
    };
    outcome.ok().map(|t| t.statistic)
}

fn rejection_rate(stats: &[Option<f64>], dof: usize, alpha: f64) -> Result<(f64, usize)> {
    let mut used = 0usize;
    let mut rejected = 0usize;
    for s in stats.iter().flatten() {
        used += 1;
        if crate::hypothesis::chi2_sf(*s, dof)? <= alpha {
            rejected += 1;
        }
    }
    let rate = if used > 0 { rejected as f64 / used as f64 } else { f64::NAN };
    Ok((rate, stats.len() - used))
}

/// Empirical level (data generated at the null value) and power (data
/// generated at the alternative value) of each test and tuning parameter.
/// The configured contamination applies to both generating models.
pub fn level_power_study(cfg: &SimConfig, design: &TestDesign) -> Result<Vec<LevelPowerRow>> {
    cfg.validate()?;
    if !(design.alpha > 0.0 && design.alpha <= 1.0) {
        return Err(Error::InvalidConfig(format!("significance level {} outside (0, 1]", design.alpha)));
    }
    let dim = cfg.theta_true.dim();
    let constraint = design.constraint(dim)?;
    let with_value = |v: f64| {
        let mut t = cfg.theta_true.clone();
        t.as_mut_slice()[design.component] = v;
        t
    };
    let null_theta = with_value(design.null_value);
    let alt_theta = with_value(design.alt_value);
    let mut rows = Vec::new();
    for &kind in &design.tests {
        for &g in &cfg.gammas {
            let under_null = statistic_samples(cfg, &null_theta, &constraint, g, kind)?;
            let under_alt = statistic_samples(cfg, &alt_theta, &constraint, g, kind)?;
            let (level, excluded_level) = rejection_rate(&under_null, constraint.rank(), design.alpha)?;
            let (power, excluded_power) = rejection_rate(&under_alt, constraint.rank(), design.alpha)?;
            rows.push(LevelPowerRow {
                test: kind,
                gamma: g.value(),
                degree: cfg.degree(),
                level,
                power,
                replications: cfg.replications,
                excluded_level,
                excluded_power,
            });
        }
    }
    Ok(rows)
}

/// Tidy long-format record: one metric value per row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TidyRow {
    pub gamma: f64,
    pub degree: f64,
    pub metric: String,
    pub value: f64,
    pub replications: usize,
    pub excluded: usize,
}

pub fn tidy_rmse(rows: &[RmseRow]) -> Vec<TidyRow> {
    rows.iter()
        .map(|r| TidyRow {
            gamma: r.gamma,
            degree: r.degree,
            metric: format!("rmse_{}", r.component),
            value: r.rmse,
            replications: r.replications,
            excluded: r.excluded,
        })
        .collect()
}

pub fn tidy_level_power(rows: &[LevelPowerRow]) -> Vec<TidyRow> {
    let name = |k: TestKind| match k {
        TestKind::Wald => "wald",
        TestKind::Rao => "rao",
        TestKind::ChiSquareGof => "gof",
    };
    rows.iter()
        .flat_map(|r| {
            [
                TidyRow {
                    gamma: r.gamma,
                    degree: r.degree,
                    metric: format!("{}_level", name(r.test)),
                    value: r.level,
                    replications: r.replications,
                    excluded: r.excluded_level,
                },
                TidyRow {
                    gamma: r.gamma,
                    degree: r.degree,
                    metric: format!("{}_power", name(r.test)),
                    value: r.power,
                    replications: r.replications,
                    excluded: r.excluded_power,
                },
            ]
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::sim_design;
    use crate::model::{link, ll_cdf};

    fn theta0() -> ThetaVector<f64> {
        ThetaVector::new(&[1.0, -0.5], &[0.8, 0.4]).unwrap()
    }

    fn gammas(v: &[f64]) -> Vec<TuningGamma<f64>> {
        v.iter().map(|&g| TuningGamma::new(g).unwrap()).collect()
    }

    #[test]
    fn contamination_arithmetic() {
        let spec = ContaminationSpec::first_condition_b0(1, 0.5);
        let c = contaminate(&theta0(), &spec).unwrap();
        assert_eq!(c.as_slice()[2], 0.4);
        assert_eq!(((c.as_slice()[2] - 0.8) / 0.8f64).abs(), 0.5);
        let c = contaminate(&theta0(), &ContaminationSpec { degree: 0.5625, ..spec.clone() }).unwrap();
        assert!((c.as_slice()[2] - 0.35).abs() < 1e-15);
        assert_eq!(contaminate(&theta0(), &ContaminationSpec { degree: 0.0, ..spec.clone() }).unwrap(), theta0());
        assert!(contaminate(&theta0(), &ContaminationSpec { degree: -0.1, ..spec }).is_err());
    }

    #[test]
    fn contamination_only_touches_targets() {
        let design = sim_design(100);
        let spec = ContaminationSpec::first_condition_b0(1, 0.5);
        let clean = generating_probs(&theta0(), &design, None).unwrap();
        let dirty = generating_probs(&theta0(), &design, Some(&spec)).unwrap();
        assert_ne!(clean[0], dirty[0]);
        assert_eq!(clean[1..], dirty[1..]);
        // condition 1 wiring: alpha = e, beta = e^0.8
        let p = link(&theta0(), design.conditions()[0].stress()).unwrap();
        assert_eq!(clean[0], ll_cdf(1.0, &p).unwrap());
    }

    #[test]
    fn degenerate_binomials() {
        let design = sim_design(100);
        let probs = [0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0];
        let data = replicate(&design, &probs, 7, 3).unwrap();
        let n: Vec<f64> = data.conditions().iter().map(|c| c.failures()).collect();
        assert_eq!(n, vec![0.0, 100.0, 0.0, 100.0, 0.0, 100.0, 0.0, 100.0, 0.0]);
    }

    #[test]
    fn binomial_moments() {
        let design = sim_design(100);
        let probs = generating_probs(&theta0(), &design, None).unwrap();
        let reps = 10_000;
        let mut mean = [0.0; 9];
        for r in 0..reps {
            let d = replicate(&design, &probs, 11, r).unwrap();
            for (m, c) in mean.iter_mut().zip(d.conditions()) {
                *m += c.failures() / 100.0 / reps as f64;
            }
        }
        for (m, p) in mean.iter().zip(&probs) {
            let se = (p * (1.0 - p) / (100.0 * reps as f64)).sqrt();
            assert!((m - p).abs() < 3.0 * se, "{m} vs {p}");
        }
    }

    #[test]
    fn streams_are_order_independent() {
        let design = sim_design(100);
        let probs = generating_probs(&theta0(), &design, None).unwrap();
        let a = replicate(&design, &probs, 5, 42).unwrap();
        let _ = replicate(&design, &probs, 5, 41).unwrap();
        assert_eq!(replicate(&design, &probs, 5, 42).unwrap(), a);
        assert_ne!(replicate(&design, &probs, 5, 43).unwrap(), a);
        // common random numbers: untouched conditions agree across degrees
        let spec = ContaminationSpec::first_condition_b0(1, 0.6);
        let dirty = generating_probs(&theta0(), &design, Some(&spec)).unwrap();
        let b = replicate(&design, &dirty, 5, 42).unwrap();
        assert_eq!(a.conditions()[1..], b.conditions()[1..]);
    }

    #[test]
    fn sequential_sampler_fills_counts() {
        let mut rng = replication_rng(1, 0);
        let d = sample_counts(&theta0(), &sim_design(100), &mut rng).unwrap();
        assert!(d.conditions().iter().all(|c| c.failures() <= 100.0));
    }

    #[test]
    fn single_replication_rmse_is_absolute_error() {
        let mut cfg = SimConfig::new(sim_design(100), theta0(), gammas(&[0.0, 0.5]));
        cfg.replications = 1;
        cfg.seed = 3;
        let rows = rmse_study(&cfg).unwrap();
        let data = replicate(&cfg.design, &generating_probs(&theta0(), &cfg.design, None).unwrap(), 3, 0).unwrap();
        let e = fit(&data, TuningGamma::new(0.5).unwrap(), &cfg.fit_options).unwrap();
        for (row, (a, b)) in rows[4..].iter().zip(e.theta_hat.as_slice().iter().zip(theta0().as_slice())) {
            assert_eq!(row.rmse, (a - b).abs());
            assert_eq!(row.excluded, 0);
        }
    }

    #[test]
    fn studies_are_reproducible_and_account_for_exclusions() {
        let mut cfg = SimConfig::new(sim_design(100), theta0(), gammas(&[0.0, 0.4]));
        cfg.replications = 20;
        cfg.seed = 99;
        cfg.contamination = Some(ContaminationSpec::first_condition_b0(1, 0.4));
        let a = rmse_study(&cfg).unwrap();
        let b = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap()
            .install(|| rmse_study(&cfg).unwrap());
        assert_eq!(a, b);
        assert!(a.iter().all(|r| r.excluded <= r.replications));
        assert_eq!(tidy_rmse(&a).len(), a.len());

        let design = TestDesign { component: 2, null_value: 0.8, alt_value: 0.35, alpha: 1.0, tests: vec![TestKind::Wald, TestKind::Rao] };
        let rows = level_power_study(&cfg, &design).unwrap();
        assert!(rows.iter().all(|r| r.level == 1.0 && r.power == 1.0));
        assert_eq!(tidy_level_power(&rows).len(), 2 * rows.len());
    }

    #[test]
    fn config_validation() {
        let mut cfg = SimConfig::new(sim_design(100), theta0(), vec![]);
        assert!(cfg.validate().is_err());
        cfg.gammas = gammas(&[0.0]);
        cfg.replications = 0;
        assert!(cfg.validate().is_err());
        cfg.replications = 1;
        cfg.contamination = Some(ContaminationSpec { target_component: 2, target_conditions: vec![9], degree: 0.1 });
        assert!(cfg.validate().is_err());
    }
}
