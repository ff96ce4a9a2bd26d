use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use oneshot_dpd::hypothesis::{rao_test, wald_test, TestKind, TestOutcome};
use oneshot_dpd::montecarlo::{
    level_power_study, rmse_study, tidy_level_power, tidy_rmse, ContaminationSpec, SimConfig, TestDesign, TidyRow,
};
use oneshot_dpd::{
    asymptotic_cov, embedded_dataset, fit, fit_restricted, gof_chisq, link, ll_cdf, ll_hazard, ll_pdf, ll_survival,
    mean_lifetime, sim_design, AffineConstraint, Error, Estimate, FitOptions, LinkedParams, TestPlan, ThetaVector,
    TuningGamma,
};
use serde::Serialize;

use crate::config;
use crate::output::{csv_artifact, emit, json_artifact, Format, RunManifest};
use crate::plan_io::{read_plan, write_plan};

/// Exit classes: usage (2), data (3), numerical failure (4).
#[derive(Debug)]
pub enum Failure {
    Usage(anyhow::Error),
    Data(anyhow::Error),
    Numerical(anyhow::Error),
}

type Outcome<T = ()> = std::result::Result<T, Failure>;

fn usage(msg: impl std::fmt::Display) -> Failure {
    Failure::Usage(anyhow!("{msg}"))
}

/// Classifies library errors; anything else (I/O, CSV) is a data error.
fn classify(e: anyhow::Error) -> Failure {
    match e.downcast_ref::<Error>() {
        Some(Error::InvalidConfig(_) | Error::InvalidConstraint(_) | Error::Domain { .. }) => Failure::Usage(e),
        Some(
            Error::Singular { .. }
            | Error::NonFinite { .. }
            | Error::InfiniteDivergence { .. }
            | Error::InfiniteMean { .. },
        ) => Failure::Numerical(e),
        _ => Failure::Data(e),
    }
}

trait OrFailure<T> {
    fn or_fail(self) -> Outcome<T>;
}

impl<T, E: Into<anyhow::Error>> OrFailure<T> for std::result::Result<T, E> {
    fn or_fail(self) -> Outcome<T> {
        self.map_err(|e| classify(e.into()))
    }
}

#[derive(Debug, Parser)]
#[command(name = "oneshot", version, about = "Robust DPD estimation and tests for one-shot device life tests")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Tuning parameters, comma separated
    #[arg(long, global = true, value_delimiter = ',', allow_negative_numbers = true)]
    pub gamma: Option<Vec<f64>>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output file (directory for `curves`); stdout when omitted
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    /// Embedded dataset: fan2009 or sim-design
    #[arg(long, global = true)]
    pub dataset: Option<String>,
    /// Plan CSV with header tau,x1,...,xJ,K,n
    #[arg(long, global = true)]
    pub input: Option<PathBuf>,
    /// Flat key = value file; command-line flags take precedence
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate the parameters for each tuning parameter
    Fit(FitArgs),
    /// Wald-type test of fixed components
    TestWald(TestArgs),
    /// Rao-type test of fixed components
    TestRao(TestArgs),
    /// Chi-square goodness of fit
    Gof(GofArgs),
    /// Monte Carlo RMSE or level/power study
    Simulate(SimArgs),
    /// Density, distribution, survival and hazard curves
    Curves(CurveArgs),
    /// Write the resolved plan as CSV
    Plan,
}

#[derive(Debug, Args, Clone)]
pub struct FitControl {
    #[arg(long, default_value_t = 500)]
    pub max_iterations: usize,
    #[arg(long, default_value_t = 1e-8)]
    pub grad_tolerance: f64,
    #[arg(long, default_value_t = 4)]
    pub multistart: usize,
}

impl FitControl {
    fn options(&self) -> FitOptions<f64> {
        FitOptions {
            max_iterations: self.max_iterations,
            grad_tolerance: self.grad_tolerance,
            multistart_count: self.multistart,
            ..FitOptions::default()
        }
    }

    fn echo(&self, map: &mut BTreeMap<String, String>) {
        map.insert("max_iterations".into(), self.max_iterations.to_string());
        map.insert("grad_tolerance".into(), self.grad_tolerance.to_string());
        map.insert("multistart".into(), self.multistart.to_string());
    }
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Extra covariate vector (comma separated x1..xJ) for mean lifetimes; repeatable
    #[arg(long = "at-stress")]
    pub at_stress: Vec<String>,
    #[command(flatten)]
    pub control: FitControl,
}

#[derive(Debug, Args)]
pub struct TestArgs {
    /// Null hypothesis component, e.g. b0=0.8; repeatable
    #[arg(long = "fix", required = true)]
    pub fix: Vec<String>,
    #[command(flatten)]
    pub control: FitControl,
}

#[derive(Debug, Args)]
pub struct GofArgs {
    /// Evaluate at this parameter (a0..aJ,b0..bJ) instead of fitting
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub theta: Option<Vec<f64>>,
    #[command(flatten)]
    pub control: FitControl,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Study {
    Rmse,
    LevelPower,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TestChoice {
    Wald,
    Rao,
}

#[derive(Debug, Args)]
pub struct SimArgs {
    #[arg(long, value_enum, default_value = "rmse")]
    pub study: Study,
    #[arg(long)]
    pub replications: Option<usize>,
    /// Contamination degrees, comma separated
    #[arg(long, value_delimiter = ',')]
    pub degrees: Option<Vec<f64>>,
    /// Devices per condition of the simulation design
    #[arg(long)]
    pub devices: Option<u64>,
    /// Generating parameter (a0..aJ,b0..bJ)
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_value = "1,-0.5,0.8,0.4")]
    pub theta: Vec<f64>,
    /// Contaminated (and tested) component
    #[arg(long, default_value = "b0")]
    pub component: String,
    /// Contaminated conditions, 1-based, comma separated
    #[arg(long, value_delimiter = ',', default_value = "1")]
    pub conditions: Vec<usize>,
    #[arg(long, default_value_t = 0.8)]
    pub null: f64,
    #[arg(long, default_value_t = 0.35)]
    pub alt: f64,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "wald")]
    pub tests: Vec<TestChoice>,
    #[command(flatten)]
    pub control: FitControl,
}

#[derive(Debug, Args)]
pub struct CurveArgs {
    /// Scale parameter
    #[arg(long, default_value_t = 2.0)]
    pub alpha: f64,
    /// Shape parameters, comma separated
    #[arg(long, value_delimiter = ',', default_value = "0.5,1,2,4")]
    pub betas: Vec<f64>,
    #[arg(long, default_value_t = 10.0)]
    pub t_max: f64,
    #[arg(long, default_value_t = 200)]
    pub points: usize,
}

/// Global settings after merging the config file under the flags.
struct Resolved {
    gammas: Option<Vec<f64>>,
    seed: Option<u64>,
    out: Option<PathBuf>,
    format: Format,
    dataset: Option<String>,
    input: Option<PathBuf>,
    file: BTreeMap<String, String>,
}

fn parse_value<T: FromStr>(key: &str, raw: &str) -> Outcome<T> {
    raw.trim()
        .parse()
        .map_err(|_| usage(format!("config key `{key}`: cannot parse {raw:?}")))
}

fn parse_list<T: FromStr>(key: &str, raw: &str) -> Outcome<Vec<T>> {
    raw.split(',').map(|v| parse_value(key, v)).collect()
}

impl Resolved {
    fn new(g: GlobalArgs) -> Outcome<Self> {
        let file = match &g.config {
            Some(path) => {
                let text = fs::read_to_string(path)
                    .with_context(|| format!("reading config {}", path.display()))
                    .map_err(Failure::Usage)?;
                config::parse(&text).map_err(Failure::Usage)?
            }
            None => BTreeMap::new(),
        };
        let format = match (g.format, file.get("format")) {
            (Some(f), _) => f,
            (None, Some(raw)) => Format::from_str(raw, true).map_err(usage)?,
            (None, None) => Format::Json,
        };
        let gammas = match (g.gamma, file.get("gamma")) {
            (Some(v), _) => Some(v),
            (None, Some(raw)) => Some(parse_list("gamma", raw)?),
            _ => None,
        };
        let seed = match (g.seed, file.get("seed")) {
            (Some(v), _) => Some(v),
            (None, Some(raw)) => Some(parse_value("seed", raw)?),
            _ => None,
        };
        let out = g.out.or_else(|| file.get("out").map(PathBuf::from));
        let (dataset, input) = match (g.dataset, g.input) {
            (None, None) => (file.get("dataset").cloned(), file.get("input").map(PathBuf::from)),
            (d, i) => (d, i),
        };
        if dataset.is_some() && input.is_some() {
            return Err(usage("--dataset and --input are mutually exclusive"));
        }
        Ok(Self { gammas, seed, out, format, dataset, input, file })
    }

    fn file_value<T: FromStr>(&self, key: &str) -> Outcome<Option<T>> {
        self.file.get(key).map(|raw| parse_value(key, raw)).transpose()
    }

    fn source(&self) -> Option<String> {
        match (&self.dataset, &self.input) {
            (Some(d), _) => Some(format!("dataset:{d}")),
            (_, Some(p)) => Some(p.display().to_string()),
            _ => None,
        }
    }

    fn plan(&self) -> Outcome<TestPlan<f64>> {
        match (&self.dataset, &self.input) {
            (Some(name), _) => embedded_dataset(name).or_fail(),
            (_, Some(path)) => {
                let file = fs::File::open(path)
                    .with_context(|| format!("opening {}", path.display()))
                    .map_err(Failure::Data)?;
                read_plan(file).map_err(classify)
            }
            _ => Err(usage("a plan is required: pass --dataset NAME or --input FILE")),
        }
    }

    fn gammas_or(&self, default: &[f64]) -> Outcome<Vec<TuningGamma<f64>>> {
        let raw = self.gammas.clone().unwrap_or_else(|| default.to_vec());
        if raw.is_empty() {
            return Err(usage("at least one tuning parameter is needed"));
        }
        raw.into_iter().map(|g| TuningGamma::new(g).or_fail()).collect()
    }

    fn manifest(&self, command: &str, gammas: &[TuningGamma<f64>], mut options: BTreeMap<String, String>) -> RunManifest {
        options.insert("format".into(), format!("{:?}", self.format).to_lowercase());
        if let Some(s) = self.seed {
            options.insert("seed".into(), s.to_string());
        }
        if let Some(o) = &self.out {
            options.insert("out".into(), o.display().to_string());
        }
        RunManifest::new(command, self.source(), gammas.iter().map(|g| g.value()).collect(), options)
    }

    fn write_json<B: Serialize>(&self, manifest: &RunManifest, body: &B) -> Outcome {
        let text = json_artifact(manifest, body).map_err(Failure::Data)?;
        emit(self.out.as_deref(), &text).map_err(Failure::Data)
    }
}

pub fn run(cli: Cli) -> Outcome {
    let resolved = Resolved::new(cli.global)?;
    match cli.command {
        Command::Fit(a) => cmd_fit(&resolved, a),
        Command::TestWald(a) => cmd_test(&resolved, a, TestKind::Wald),
        Command::TestRao(a) => cmd_test(&resolved, a, TestKind::Rao),
        Command::Gof(a) => cmd_gof(&resolved, a),
        Command::Simulate(a) => cmd_simulate(&resolved, a),
        Command::Curves(a) => cmd_curves(&resolved, a),
        Command::Plan => {
            let plan = resolved.plan()?;
            let mut buf = Vec::new();
            write_plan(&plan, &mut buf).map_err(Failure::Data)?;
            emit(resolved.out.as_deref(), &String::from_utf8_lossy(&buf)).map_err(Failure::Data)
        }
    }
}

/// The tuning grid 0, 0.1, ..., 1.
fn default_grid() -> Vec<f64> {
    (0..=10).map(|k| k as f64 / 10.0).collect()
}

fn parse_fixes(fixes: &[String], stress_dim: usize) -> Outcome<AffineConstraint<f64>> {
    let pairs = fixes
        .iter()
        .map(|f| {
            let (name, value) = f
                .split_once('=')
                .ok_or_else(|| usage(format!("--fix expects name=value, got {f:?}")))?;
            let value: f64 = value
                .trim()
                .parse()
                .map_err(|_| usage(format!("--fix {name}: {value:?} is not a number")))?;
            Ok((name.trim(), value))
        })
        .collect::<Outcome<Vec<_>>>()?;
    AffineConstraint::fix_named(stress_dim, &pairs).or_fail()
}

fn theta_from(values: Vec<f64>, plan: &TestPlan<f64>) -> Outcome<ThetaVector<f64>> {
    if values.len() != plan.param_dim() {
        return Err(usage(format!(
            "parameter needs {} values (a0..aJ,b0..bJ), got {}",
            plan.param_dim(),
            values.len()
        )));
    }
    ThetaVector::from_flat(values).or_fail()
}

#[derive(Serialize)]
struct EstimateRecord {
    gamma: f64,
    theta: Vec<f64>,
    standard_errors: Option<Vec<f64>>,
    covariance_error: Option<String>,
    objective: f64,
    grad_norm: f64,
    converged: bool,
    status: oneshot_dpd::FitStatus,
    iterations: usize,
    start_index: usize,
    /// Aligned with `stress_points`; null where the mean is infinite.
    mean_lifetimes: Vec<Option<f64>>,
}

#[derive(Serialize)]
struct FitBody {
    components: Vec<String>,
    stress_points: Vec<Vec<f64>>,
    results: Vec<EstimateRecord>,
}

fn stress_points(plan: &TestPlan<f64>, extra: &[String], dataset: Option<&str>) -> Outcome<Vec<Vec<f64>>> {
    let mut points: Vec<Vec<f64>> = Vec::new();
    for c in plan.conditions() {
        if !points.iter().any(|p| p.as_slice() == c.covariates()) {
            points.push(c.covariates().to_vec());
        }
    }
    if dataset == Some("fan2009") && extra.is_empty() {
        // normal operating temperature, 298 K
        points.push(vec![1.0 / 298.0]);
    }
    for raw in extra {
        let p = parse_list::<f64>("at-stress", raw).map_err(|_| usage(format!("--at-stress: cannot parse {raw:?}")))?;
        if p.len() != plan.stress_dim() {
            return Err(usage(format!("--at-stress needs {} covariates, got {}", plan.stress_dim(), p.len())));
        }
        points.push(p);
    }
    Ok(points)
}

fn estimate_record(plan: &TestPlan<f64>, e: &Estimate<f64>, points: &[Vec<f64>]) -> Outcome<EstimateRecord> {
    let (standard_errors, covariance_error) = match asymptotic_cov(&e.theta_hat, plan, e.gamma) {
        Ok(c) => (Some(c.standard_errors()), None),
        Err(err) => (None, Some(err.to_string())),
    };
    let mean_lifetimes = points
        .iter()
        .map(|x| {
            let mut stress = vec![1.0];
            stress.extend_from_slice(x);
            let p = link(&e.theta_hat, &stress).or_fail()?;
            Ok(mean_lifetime(&p).ok())
        })
        .collect::<Outcome<Vec<_>>>()?;
    Ok(EstimateRecord {
        gamma: e.gamma.value(),
        theta: e.theta_hat.to_f64(),
        standard_errors,
        covariance_error,
        objective: e.objective_value,
        grad_norm: e.grad_norm,
        converged: e.converged,
        status: e.status,
        iterations: e.iterations,
        start_index: e.start_index,
        mean_lifetimes,
    })
}

fn fmt4(v: Option<f64>) -> String {
    v.map_or_else(|| "inf".to_string(), |x| format!("{x:.4}"))
}

fn not_converged(count: usize, what: &str) -> Outcome {
    if count == 0 {
        Ok(())
    } else {
        Err(Failure::Numerical(anyhow!("{count} {what} did not converge; results were written and flagged")))
    }
}

fn cmd_fit(r: &Resolved, args: FitArgs) -> Outcome {
    let plan = r.plan()?;
    let gammas = r.gammas_or(&default_grid())?;
    let opts = args.control.options();
    opts.validate().or_fail()?;
    let points = stress_points(&plan, &args.at_stress, r.dataset.as_deref())?;
    let mut results = Vec::new();
    for &g in &gammas {
        let e = fit(&plan, g, &opts).or_fail()?;
        results.push(estimate_record(&plan, &e, &points)?);
    }
    let components = ThetaVector::<f64>::component_names(plan.stress_dim());

    // human summary at display precision
    for rec in &results {
        eprintln!(
            "gamma {:.1}: theta ({}) mean lifetimes ({}){}",
            rec.gamma,
            rec.theta.iter().map(|v| format!("{v:.4}")).collect::<Vec<_>>().join(", "),
            rec.mean_lifetimes.iter().map(|m| fmt4(*m)).collect::<Vec<_>>().join(", "),
            if rec.converged { "" } else { " [not converged]" }
        );
    }

    let mut options = BTreeMap::new();
    args.control.echo(&mut options);
    if !args.at_stress.is_empty() {
        options.insert("at_stress".into(), args.at_stress.join(";"));
    }
    let manifest = r.manifest("fit", &gammas, options);
    let failed = results.iter().filter(|x| !x.converged).count();
    match r.format {
        Format::Json => r.write_json(&manifest, &FitBody { components, stress_points: points, results })?,
        Format::Csv => {
            let mut header = vec!["gamma".to_string()];
            header.extend(components.iter().cloned());
            header.extend(components.iter().map(|c| format!("se_{c}")));
            header.extend(["objective", "grad_norm", "converged", "status"].map(String::from));
            header.extend((1..=points.len()).map(|k| format!("mean_lifetime_{k}")));
            let mut rows = Vec::new();
            for rec in &results {
                let mut row = vec![rec.gamma.to_string()];
                row.extend(rec.theta.iter().map(f64::to_string));
                match &rec.standard_errors {
                    Some(se) => row.extend(se.iter().map(f64::to_string)),
                    None => row.extend(components.iter().map(|_| String::new())),
                }
                row.extend([
                    rec.objective.to_string(),
                    rec.grad_norm.to_string(),
                    rec.converged.to_string(),
                    serde_json::to_value(rec.status).map_or(String::new(), |v| v.as_str().unwrap_or("").to_string()),
                ]);
                row.extend(rec.mean_lifetimes.iter().map(|m| m.map_or("inf".into(), |v| v.to_string())));
                rows.push(row);
            }
            let mut text = format!(
                "# manifest: {}\n# stress_points: {}\n",
                serde_json::to_string(&manifest).map_err(|e| Failure::Data(e.into()))?,
                serde_json::to_string(&points).map_err(|e| Failure::Data(e.into()))?
            );
            let mut wtr = csv::Writer::from_writer(Vec::new());
            wtr.write_record(&header).map_err(|e| Failure::Data(e.into()))?;
            for row in rows {
                wtr.write_record(&row).map_err(|e| Failure::Data(e.into()))?;
            }
            text += &String::from_utf8(wtr.into_inner().map_err(|e| Failure::Data(anyhow!("{e}")))?)
                .map_err(|e| Failure::Data(e.into()))?;
            emit(r.out.as_deref(), &text).map_err(Failure::Data)?;
        }
    }
    not_converged(failed, "fits")
}

#[derive(Serialize)]
struct TestRecord {
    #[serde(flatten)]
    outcome: TestOutcome,
    estimate: Vec<f64>,
    converged: bool,
    lagrange_multipliers: Option<Vec<f64>>,
}

#[derive(Serialize)]
struct TestBody {
    components: Vec<String>,
    hypothesis: Vec<String>,
    results: Vec<TestRecord>,
}

fn cmd_test(r: &Resolved, args: TestArgs, kind: TestKind) -> Outcome {
    let plan = r.plan()?;
    let gammas = r.gammas_or(&[0.0])?;
    let constraint = parse_fixes(&args.fix, plan.stress_dim())?;
    let opts = args.control.options();
    opts.validate().or_fail()?;
    let mut results = Vec::new();
    for &g in &gammas {
        let (e, outcome) = match kind {
            TestKind::Wald => {
                let e = fit(&plan, g, &opts).or_fail()?;
                let t = wald_test(&e, &plan, &constraint).or_fail()?;
                (e, t)
            }
            _ => {
                let e = fit_restricted(&plan, g, &constraint, &opts).or_fail()?;
                let t = rao_test(&e, &plan, g, &constraint).or_fail()?;
                (e, t)
            }
        };
        eprintln!(
            "gamma {:.1}: statistic {:.4}, dof {}, p-value {:.4}{}",
            g.value(),
            outcome.statistic,
            outcome.dof,
            outcome.p_value,
            if e.converged { "" } else { " [fit not converged]" }
        );
        results.push(TestRecord {
            outcome,
            estimate: e.theta_hat.to_f64(),
            converged: e.converged,
            lagrange_multipliers: e.lagrange_multipliers,
        });
    }
    let mut options = BTreeMap::new();
    args.control.echo(&mut options);
    options.insert("fix".into(), args.fix.join(";"));
    let command = if kind == TestKind::Wald { "test-wald" } else { "test-rao" };
    let manifest = r.manifest(command, &gammas, options);
    let failed = results.iter().filter(|x| !x.converged).count();
    let body = TestBody {
        components: ThetaVector::<f64>::component_names(plan.stress_dim()),
        hypothesis: args.fix.clone(),
        results,
    };
    write_records(r, &manifest, &body, |b| {
        b.results.iter().map(|t| flat_test_row(&t.outcome, t.converged)).collect()
    })?;
    not_converged(failed, "fits")
}

#[derive(Serialize)]
struct FlatTestRow {
    test: TestKind,
    gamma: Option<f64>,
    statistic: f64,
    dof: usize,
    p_value: f64,
    reject_10: bool,
    reject_05: bool,
    reject_01: bool,
    converged: bool,
}

fn flat_test_row(t: &TestOutcome, converged: bool) -> FlatTestRow {
    FlatTestRow {
        test: t.test,
        gamma: t.gamma,
        statistic: t.statistic,
        dof: t.dof,
        p_value: t.p_value,
        reject_10: t.reject_at(0.10),
        reject_05: t.reject_at(0.05),
        reject_01: t.reject_at(0.01),
        converged,
    }
}

fn write_records<B: Serialize, R: Serialize>(
    r: &Resolved,
    manifest: &RunManifest,
    body: &B,
    rows: impl FnOnce(&B) -> Vec<R>,
) -> Outcome {
    match r.format {
        Format::Json => r.write_json(manifest, body),
        Format::Csv => {
            let text = csv_artifact(manifest, &rows(body)).map_err(Failure::Data)?;
            emit(r.out.as_deref(), &text).map_err(Failure::Data)
        }
    }
}

#[derive(Serialize)]
struct GofRecord {
    #[serde(flatten)]
    outcome: TestOutcome,
    theta: Vec<f64>,
    converged: bool,
}

#[derive(Serialize)]
struct GofBody {
    results: Vec<GofRecord>,
}

fn cmd_gof(r: &Resolved, args: GofArgs) -> Outcome {
    let plan = r.plan()?;
    let opts = args.control.options();
    opts.validate().or_fail()?;
    let mut results = Vec::new();
    let gammas = match args.theta {
        Some(values) => {
            let theta = theta_from(values, &plan)?;
            let outcome = gof_chisq(&theta, &plan).or_fail()?;
            results.push(GofRecord { outcome, theta: theta.to_f64(), converged: true });
            Vec::new()
        }
        None => {
            let gammas = r.gammas_or(&[0.0])?;
            for &g in &gammas {
                let e = fit(&plan, g, &opts).or_fail()?;
                let mut outcome = gof_chisq(&e.theta_hat, &plan).or_fail()?;
                outcome.gamma = Some(g.value());
                results.push(GofRecord { outcome, theta: e.theta_hat.to_f64(), converged: e.converged });
            }
            gammas
        }
    };
    for rec in &results {
        eprintln!(
            "statistic {:.4}, dof {}, p-value {:.4}",
            rec.outcome.statistic, rec.outcome.dof, rec.outcome.p_value
        );
    }
    let mut options = BTreeMap::new();
    args.control.echo(&mut options);
    let manifest = r.manifest("gof", &gammas, options);
    let failed = results.iter().filter(|x| !x.converged).count();
    let body = GofBody { results };
    write_records(r, &manifest, &body, |b| {
        b.results.iter().map(|t| flat_test_row(&t.outcome, t.converged)).collect()
    })?;
    not_converged(failed, "fits")
}

#[derive(Serialize)]
struct SimBody {
    rows: Vec<TidyRow>,
}

fn cmd_simulate(r: &Resolved, args: SimArgs) -> Outcome {
    let replications = match args.replications {
        Some(v) => v,
        None => r.file_value("replications")?.unwrap_or(500),
    };
    let devices = match args.devices {
        Some(v) => v,
        None => r.file_value("devices")?.unwrap_or(100),
    };
    let degrees = match args.degrees.clone() {
        Some(v) => v,
        None => match r.file.get("degrees") {
            Some(raw) => parse_list("degrees", raw)?,
            None => vec![0.0],
        },
    };
    let design = if r.dataset.is_some() || r.input.is_some() { r.plan()? } else { sim_design(devices) };
    let theta = theta_from(args.theta.clone(), &design)?;
    let names = ThetaVector::<f64>::component_names(design.stress_dim());
    let component = names
        .iter()
        .position(|n| *n == args.component)
        .ok_or_else(|| usage(format!("unknown component `{}` (expected one of {})", args.component, names.join(", "))))?;
    if args.conditions.iter().any(|&c| c == 0 || c > design.len()) {
        return Err(usage(format!("--conditions must lie in 1..={}", design.len())));
    }
    let gammas = r.gammas_or(&[0.0, 0.2, 0.4, 0.6, 0.8, 1.0])?;
    let mut cfg = SimConfig::new(design, theta, gammas.clone());
    cfg.replications = replications;
    cfg.seed = r.seed.unwrap_or(0);
    cfg.fit_options = args.control.options();

    let mut rows = Vec::new();
    for &degree in &degrees {
        cfg.contamination = Some(ContaminationSpec {
            target_component: component,
            target_conditions: args.conditions.iter().map(|c| c - 1).collect(),
            degree,
        });
        match args.study {
            Study::Rmse => rows.extend(tidy_rmse(&rmse_study(&cfg).or_fail()?)),
            Study::LevelPower => {
                let design = TestDesign {
                    component,
                    null_value: args.null,
                    alt_value: args.alt,
                    alpha: args.alpha,
                    tests: args
                        .tests
                        .iter()
                        .map(|t| match t {
                            TestChoice::Wald => TestKind::Wald,
                            TestChoice::Rao => TestKind::Rao,
                        })
                        .collect(),
                };
                rows.extend(tidy_level_power(&level_power_study(&cfg, &design).or_fail()?));
            }
        }
    }
    let mut options = BTreeMap::new();
    args.control.echo(&mut options);
    let study = args.study.to_possible_value().map_or_else(String::new, |v| v.get_name().to_string());
    options.insert("study".into(), study);
    options.insert("replications".into(), replications.to_string());
    options.insert("devices".into(), devices.to_string());
    options.insert("degrees".into(), degrees.iter().map(f64::to_string).collect::<Vec<_>>().join(","));
    options.insert("theta".into(), args.theta.iter().map(f64::to_string).collect::<Vec<_>>().join(","));
    options.insert("component".into(), args.component.clone());
    options.insert("conditions".into(), args.conditions.iter().map(usize::to_string).collect::<Vec<_>>().join(","));
    if matches!(args.study, Study::LevelPower) {
        options.insert("null".into(), args.null.to_string());
        options.insert("alt".into(), args.alt.to_string());
        options.insert("alpha".into(), args.alpha.to_string());
    }
    let mut manifest = r.manifest("simulate", &gammas, options);
    manifest.options.entry("seed".into()).or_insert_with(|| cfg.seed.to_string());
    let excluded: usize = rows.iter().map(|x| x.excluded).sum();
    let body = SimBody { rows };
    write_records(r, &manifest, &body, |b| b.rows.clone())?;
    not_converged(excluded, "replication fits")
}

#[derive(Serialize, Clone)]
struct CurvePoint {
    t: f64,
    pdf: f64,
    cdf: f64,
    survival: f64,
    hazard: f64,
}

#[derive(Serialize)]
struct CurveBody {
    alpha: f64,
    beta: f64,
    points: Vec<CurvePoint>,
}

fn cmd_curves(r: &Resolved, args: CurveArgs) -> Outcome {
    if args.points < 2 || args.t_max.is_nan() || args.t_max <= 0.0 {
        return Err(usage("--points must be at least 2 and --t-max positive"));
    }
    let dir = r.out.clone().unwrap_or_else(|| PathBuf::from("curves"));
    let mut options = BTreeMap::new();
    options.insert("alpha".into(), args.alpha.to_string());
    options.insert("betas".into(), args.betas.iter().map(f64::to_string).collect::<Vec<_>>().join(","));
    options.insert("t_max".into(), args.t_max.to_string());
    options.insert("points".into(), args.points.to_string());
    let manifest = r.manifest("curves", &[], options);
    for &beta in &args.betas {
        let p = LinkedParams::new(args.alpha, beta).or_fail()?;
        let points = (1..=args.points)
            .map(|k| {
                let t = args.t_max * k as f64 / args.points as f64;
                Ok(CurvePoint {
                    t,
                    pdf: ll_pdf(t, &p)?,
                    cdf: ll_cdf(t, &p)?,
                    survival: ll_survival(t, &p)?,
                    hazard: ll_hazard(t, &p)?,
                })
            })
            .collect::<oneshot_dpd::Result<Vec<_>>>()
            .or_fail()?;
        let (ext, text) = match r.format {
            Format::Json => ("json", json_artifact(&manifest, &CurveBody { alpha: args.alpha, beta, points })),
            Format::Csv => ("csv", csv_artifact(&manifest, &points)),
        };
        let path = dir.join(format!("curve_alpha{}_beta{}.{ext}", args.alpha, beta));
        emit(Some(Path::new(&path)), &text.map_err(Failure::Data)?).map_err(Failure::Data)?;
        eprintln!("wrote {}", path.display());
    }
    Ok(())
}
