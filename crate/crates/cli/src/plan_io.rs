//! Plan CSV with header `tau,x1,...,xJ,K,n`, one testing condition per row.

use std::io::{Read, Write};

use anyhow::{bail, Context, Result};
use oneshot_dpd::{Error, TestCondition, TestPlan};

pub fn read_plan<R: Read>(reader: R) -> Result<TestPlan<f64>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).comment(Some(b'#')).from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let j = check_header(&header)?;
    let mut conditions = Vec::new();
    for (k, record) in rdr.records().enumerate() {
        // data rows are numbered from 1, after the header
        let row = k + 1;
        let record = record.map_err(|e| Error::Row { row, message: e.to_string() })?;
        let field = |i: usize| -> Result<&str> {
            record.get(i).ok_or_else(|| Error::Row { row, message: format!("missing column `{}`", header[i]) }.into())
        };
        let real = |i: usize| -> Result<f64> {
            let s = field(i)?;
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::Row { row, message: format!("`{}` is not a finite number: {s:?}", header[i]) }.into())
        };
        let count = |i: usize| -> Result<u64> {
            let s = field(i)?;
            s.parse::<u64>()
                .map_err(|_| Error::Row { row, message: format!("`{}` is not a non-negative integer: {s:?}", header[i]) }.into())
        };
        let tau = real(0)?;
        let x = (1..=j).map(real).collect::<Result<Vec<_>>>()?;
        let devices = count(j + 1)?;
        let failures = count(j + 2)?;
        let cond = TestCondition::from_covariates(tau, &x, devices, failures)
            .map_err(|e| Error::Row { row, message: e.to_string() })?;
        conditions.push(cond);
    }
    if conditions.is_empty() {
        bail!(Error::InvalidPlan("no data rows".into()));
    }
    Ok(TestPlan::new(conditions)?)
}

fn check_header(header: &[String]) -> Result<usize> {
    let n = header.len();
    let expected = |j: usize| {
        let mut h = vec!["tau".to_string()];
        h.extend((1..=j).map(|k| format!("x{k}")));
        h.extend(["K".to_string(), "n".to_string()]);
        h
    };
    if n < 3 || header != expected(n - 3).as_slice() {
        bail!(Error::InvalidPlan(format!(
            "header must be `tau,x1,...,xJ,K,n`, found `{}`",
            header.join(",")
        )));
    }
    Ok(n - 3)
}

pub fn write_plan<W: Write>(plan: &TestPlan<f64>, writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let j = plan.stress_dim();
    let mut header = vec!["tau".to_string()];
    header.extend((1..=j).map(|k| format!("x{k}")));
    header.extend(["K".to_string(), "n".to_string()]);
    wtr.write_record(&header)?;
    for c in plan.conditions() {
        let n = c
            .failure_count()
            .context("plan CSV needs integer failure counts")?;
        let mut rec = vec![c.tau().to_string()];
        rec.extend(c.covariates().iter().map(f64::to_string));
        rec.extend([c.devices().to_string(), n.to_string()]);
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    Ok(())
}
