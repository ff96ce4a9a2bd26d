use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn oneshot(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_oneshot")).args(args).output().expect("binary runs")
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

#[test]
fn fit_fan2009_writes_manifest_and_lifetimes() {
    let out = oneshot(&["fit", "--dataset", "fan2009", "--gamma", "0,0.4"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v = json(&out);
    assert_eq!(v["manifest"]["command"], "fit");
    assert_eq!(v["manifest"]["source"], "dataset:fan2009");
    assert_eq!(v["manifest"]["gammas"], serde_json::json!([0.0, 0.4]));
    let results = v["results"].as_array().unwrap();
    assert_eq!(results.len(), 2);
    // three observed temperatures plus the 298 K operating point
    assert_eq!(v["stress_points"].as_array().unwrap().len(), 4);
    let first = &results[0];
    assert_eq!(first["converged"], true);
    let lifetimes: Vec<f64> =
        first["mean_lifetimes"].as_array().unwrap().iter().map(|m| m.as_f64().unwrap()).collect();
    assert!((lifetimes[0] - 50.45).abs() < 0.01, "{lifetimes:?}");
    assert!(lifetimes.windows(2).take(2).all(|w| w[0] > w[1]));
    assert_eq!(first["standard_errors"].as_array().unwrap().len(), 4);
    assert!(String::from_utf8_lossy(&out.stderr).contains("gamma 0.0"));
}

#[test]
fn gof_csv_reports_statistic() {
    let out = oneshot(&["gof", "--dataset", "fan2009", "--format", "csv"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("# manifest: {"));
    assert_eq!(lines.next().unwrap(), "test,gamma,statistic,dof,p_value,reject_10,reject_05,reject_01,converged");
    let fields: Vec<&str> = lines.next().unwrap().split(',').collect();
    let stat: f64 = fields[2].parse().unwrap();
    assert!((stat - 5.4783).abs() < 1e-3, "{stat}");
    assert_eq!(fields[3], "15");
}

#[test]
fn gof_at_given_theta_needs_no_fit() {
    let out = oneshot(&["gof", "--dataset", "fan2009", "--theta", "-6.0,2500,0.5,0"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v = json(&out);
    assert_eq!(v["results"][0]["theta"][1], 2500.0);
    assert!(v["results"][0]["gamma"].is_null());
}

#[test]
fn rao_fully_specified_null() {
    let out = oneshot(&["test-rao", "--dataset", "fan2009", "--fix", "b0=0.5", "--fix", "b1=0"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    let r = &v["results"][0];
    assert_eq!(r["test"], "rao");
    assert_eq!(r["dof"], 2);
    assert_eq!(r["estimate"][2], 0.5);
    assert_eq!(r["estimate"][3], 0.0);
    let p = r["p_value"].as_f64().unwrap();
    assert!(p > 0.0 && p <= 1.0);
}

#[test]
fn wald_and_rao_agree_roughly_on_shape_hypothesis() {
    let w = json(&oneshot(&["test-wald", "--dataset", "fan2009", "--fix", "b1=0"]));
    let r = json(&oneshot(&["test-rao", "--dataset", "fan2009", "--fix", "b1=0"]));
    let (w, r) = (w["results"][0]["statistic"].as_f64().unwrap(), r["results"][0]["statistic"].as_f64().unwrap());
    assert!(w.is_finite() && r.is_finite() && w >= 0.0 && r >= 0.0);
    assert!((w - r).abs() < 1.0, "wald {w} rao {r}");
}

#[test]
fn exit_codes() {
    // usage
    assert_eq!(oneshot(&["fit"]).status.code(), Some(2));
    assert_eq!(oneshot(&["fit", "--dataset", "fan2009", "--gamma", "-1"]).status.code(), Some(2));
    assert_eq!(oneshot(&["test-wald", "--dataset", "fan2009", "--fix", "zz=1"]).status.code(), Some(2));
    assert_eq!(oneshot(&["frobnicate"]).status.code(), Some(2));
    // data
    assert_eq!(oneshot(&["fit", "--dataset", "nope"]).status.code(), Some(3));
    assert_eq!(oneshot(&["fit", "--input", "/definitely/not/here.csv"]).status.code(), Some(3));
    // numerical: iteration budget too small to converge
    let out = oneshot(&["fit", "--dataset", "fan2009", "--gamma", "0", "--max-iterations", "1", "--multistart", "0"]);
    assert_eq!(out.status.code(), Some(4));
    assert_eq!(json(&out)["results"][0]["converged"], false, "results are still written");
}

#[test]
fn malformed_csv_reports_row() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.csv");
    fs::write(&path, "tau,x1,K,n\n10,0.5,10,3\n10,0.6,10,12\n").unwrap();
    let out = oneshot(&["fit", "--input", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("row 2"));
}

#[test]
fn plan_csv_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("fan.csv");
    let out = oneshot(&["plan", "--dataset", "fan2009", "--out", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let again = oneshot(&["plan", "--input", path.to_str().unwrap()]);
    assert_eq!(String::from_utf8(again.stdout).unwrap(), fs::read_to_string(&path).unwrap());

    let a = json(&oneshot(&["fit", "--dataset", "fan2009", "--gamma", "0.3"]));
    let b = json(&oneshot(&["fit", "--input", path.to_str().unwrap(), "--gamma", "0.3"]));
    assert_eq!(a["results"][0]["theta"], b["results"][0]["theta"]);
}

#[test]
fn curves_write_one_file_per_shape() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let out = oneshot(&["curves", "--out", d, "--format", "csv", "--betas", "1,2", "--points", "4", "--t-max", "8"]);
    assert_eq!(out.status.code(), Some(0));
    let text = fs::read_to_string(Path::new(d).join("curve_alpha2_beta2.csv")).unwrap();
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows[0], "t,pdf,cdf,survival,hazard");
    assert_eq!(rows.len(), 5);
    // at t = alpha the distribution function is one half
    assert!(rows[1].starts_with("2.0,0.25,0.5,0.5,0.5"));
    assert!(Path::new(d).join("curve_alpha2_beta1.csv").exists());
}

#[test]
fn config_file_values_yield_to_flags() {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("run.conf");
    fs::write(&conf, "# defaults\ngamma = 0.3\nformat = csv\ndataset = fan2009\n").unwrap();
    let c = conf.to_str().unwrap();

    let from_file = String::from_utf8(oneshot(&["gof", "--config", c]).stdout).unwrap();
    assert!(from_file.lines().nth(2).unwrap().starts_with("chi_square_gof,0.3,"));

    let overridden = oneshot(&["gof", "--config", c, "--gamma", "0.7", "--format", "json"]);
    assert_eq!(json(&overridden)["results"][0]["gamma"], 0.7);

    fs::write(&conf, "colour = red\n").unwrap();
    assert_eq!(oneshot(&["gof", "--config", c]).status.code(), Some(2));
}

#[test]
fn simulate_is_reproducible_for_a_seed() {
    let args = [
        "simulate", "--replications", "8", "--devices", "40", "--degrees", "0,0.5", "--gamma", "0,0.5", "--seed", "11",
        "--format", "csv",
    ];
    let strip = |o: Output| String::from_utf8(o.stdout).unwrap().lines().skip(1).collect::<Vec<_>>().join("\n");
    let a = strip(oneshot(&args));
    assert_eq!(a, strip(oneshot(&args)));
    assert!(a.starts_with("gamma,degree,metric,value,replications,excluded\n0.0,0.0,rmse_a0,"));
    assert_eq!(a.lines().count(), 1 + 2 * 2 * 4);
}
