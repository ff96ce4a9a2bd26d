//! Embedded reference data.

use crate::error::{Error, Result};
use crate::model::{TestCondition, TestPlan};
use crate::scalar::Scalar;

/// Names accepted by [`embedded_dataset`].
pub const DATASET_NAMES: [&str; 2] = ["fan2009", "sim-design"];

/// One inspection group of the electro-explosive device experiment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FanGroup {
    pub tau: f64,
    pub kelvin: f64,
    pub devices: u64,
    pub failures: u64,
}

/// Electro-explosive devices inspected at 10, 20 and 30 hours under three
/// temperatures (Kelvin).
pub const FAN2009: [FanGroup; 9] = [
    FanGroup { tau: 10.0, kelvin: 308.0, devices: 10, failures: 3 },
    FanGroup { tau: 10.0, kelvin: 318.0, devices: 10, failures: 1 },
    FanGroup { tau: 10.0, kelvin: 328.0, devices: 10, failures: 6 },
    FanGroup { tau: 20.0, kelvin: 308.0, devices: 10, failures: 3 },
    FanGroup { tau: 20.0, kelvin: 318.0, devices: 10, failures: 7 },
    FanGroup { tau: 20.0, kelvin: 328.0, devices: 10, failures: 7 },
    FanGroup { tau: 30.0, kelvin: 308.0, devices: 10, failures: 7 },
    FanGroup { tau: 30.0, kelvin: 318.0, devices: 10, failures: 7 },
    FanGroup { tau: 30.0, kelvin: 328.0, devices: 10, failures: 9 },
];

/// The temperature data with covariate `x = 1 / Temp`.
pub fn fan2009<T: Scalar>() -> TestPlan<T> {
    let conditions = FAN2009
        .iter()
        .map(|g| {
            TestCondition::from_covariates(T::lit(g.tau), &[T::one() / T::lit(g.kelvin)], g.devices, g.failures)
                .expect("embedded data is valid")
        })
        .collect();
    TestPlan::new(conditions).expect("embedded data is valid")
}

/// The 3 x 3 simulation design: `tau` in {1, 1.5, 2.5} crossed with `x` in
/// {0, 0.5, 1}, `devices` units each and no failures recorded.
pub fn sim_design<T: Scalar>(devices: u64) -> TestPlan<T> {
    let mut conditions = Vec::with_capacity(9);
    for tau in [1.0, 1.5, 2.5] {
        for x in [0.0, 0.5, 1.0] {
            conditions.push(
                TestCondition::from_covariates(T::lit(tau), &[T::lit(x)], devices, 0).expect("valid design"),
            );
        }
    }
    TestPlan::new(conditions).expect("valid design")
}

pub fn embedded_dataset<T: Scalar>(name: &str) -> Result<TestPlan<T>> {
    match name {
        "fan2009" => Ok(fan2009()),
        "sim-design" => Ok(sim_design(100)),
        _ => Err(Error::UnknownDataset {
            name: name.to_string(),
            available: DATASET_NAMES.join(", "),
        }),
    }
}
