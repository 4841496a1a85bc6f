//! The finite-difference gradient suite behind `flsim gradcheck`.

use flsim_core::nn::{check_instance, gradcheck_tolerance, random_instance};
use flsim_core::{ModelKind, Precision};

use crate::error::CliError;

#[derive(Clone, Debug, PartialEq)]
pub struct GradcheckReport {
    pub kind: ModelKind,
    pub precision: Precision,
    pub instances: u64,
    pub max_relative_error: f64,
    pub tolerance: f64,
}

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        self.max_relative_error < self.tolerance
    }

    pub fn line(&self) -> String {
        let kind = match self.kind {
            ModelKind::Mlp => "mlp",
            ModelKind::Cnn => "cnn",
        };
        let precision = match self.precision {
            Precision::Single => "single",
            Precision::Double => "double",
        };
        format!(
            "model={kind} precision={precision} instances={} max_rel_error={:.3e} tolerance={:.0e} {}",
            self.instances,
            self.max_relative_error,
            self.tolerance,
            if self.passed() { "ok" } else { "FAIL" }
        )
    }
}

/// Checks `instances` random tiny networks of one family.
pub fn run_gradcheck(
    kind: ModelKind,
    precision: Precision,
    instances: u64,
    seed: u64,
) -> Result<GradcheckReport, CliError> {
    let mut worst = 0.0f64;
    for i in 0..instances {
        let inst = random_instance(kind, seed, i);
        let err = check_instance(&inst, precision)?;
        if err > worst || err.is_nan() {
            worst = err; // NaN sticks and fails the check
        }
    }
    Ok(GradcheckReport {
        kind,
        precision,
        instances,
        max_relative_error: worst,
        tolerance: gradcheck_tolerance(precision),
    })
}
