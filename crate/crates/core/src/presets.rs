//! Calibrated reference settings: five dose levels, a six-week window,
//! targets 0.25 (clinician) and 0.35 (patient), and the seven toxicity
//! scenarios with constant hazard, low association and two arrivals per window.

use crate::designs::{DesignConfig, DesignKind};
use crate::dose_model::{DoseLevel, PriorSpec, Skeleton, ToxicityTarget};
use crate::error::{Error, Result};
use crate::sim::Scenario;

pub const WINDOW_WEEKS: f64 = 6.0;
pub const CLINICIAN_TARGET: f64 = 0.25;
pub const PATIENT_TARGET: f64 = 0.35;
pub const SAMPLE_SIZES: [usize; 3] = [18, 30, 40];

/// Skeletons and prior SDs calibrated per sample size.
struct Calibration {
    clinician_skeleton: [f64; 5],
    clinician_sd: f64,
    patient_skeleton: [f64; 5],
    patient_sd: f64,
}

fn calibration(n: usize) -> Option<Calibration> {
    const U_A: [f64; 5] = [0.08, 0.16, 0.25, 0.35, 0.46];
    const U_B: [f64; 5] = [0.06, 0.14, 0.25, 0.38, 0.50];
    const V_A: [f64; 5] = [0.13, 0.23, 0.35, 0.47, 0.58];
    const V_B: [f64; 5] = [0.10, 0.21, 0.35, 0.49, 0.61];
    let (clinician_skeleton, clinician_sd, patient_skeleton, patient_sd) = match n {
        18 => (U_A, 0.522, V_A, 0.59),
        30 => (U_B, 0.627, V_A, 0.59),
        40 => (U_A, 0.522, V_B, 0.69),
        _ => return None,
    };
    Some(Calibration {
        clinician_skeleton,
        clinician_sd,
        patient_skeleton,
        patient_sd,
    })
}

/// Reference design for sample size 18, 30 or 40.
pub fn reference_design(kind: DesignKind, n: usize) -> Result<DesignConfig> {
    let cal = calibration(n).ok_or_else(|| {
        Error::invalid(format!("no calibrated skeleton for n = {n}; use 18, 30 or 40"))
    })?;
    let config = DesignConfig {
        kind,
        n_max: n,
        window: WINDOW_WEEKS,
        clinician_target: ToxicityTarget::new(CLINICIAN_TARGET)?,
        patient_target: ToxicityTarget::new(PATIENT_TARGET)?,
        clinician_skeleton: Skeleton::new(cal.clinician_skeleton.to_vec())?,
        patient_skeleton: Skeleton::new(cal.patient_skeleton.to_vec())?,
        clinician_prior: PriorSpec::centered(cal.clinician_sd)?,
        patient_prior: PriorSpec::centered(cal.patient_sd)?,
        start_dose: DoseLevel::LOWEST,
        no_skip: true,
    };
    config.validate()?;
    Ok(config)
}

const SCENARIOS: [([f64; 5], [f64; 5]); 7] = [
    ([0.05, 0.05, 0.25, 0.40, 0.55], [0.17, 0.18, 0.35, 0.50, 0.65]),
    ([0.05, 0.25, 0.40, 0.55, 0.70], [0.10, 0.15, 0.35, 0.50, 0.65]),
    ([0.01, 0.02, 0.05, 0.10, 0.25], [0.04, 0.09, 0.17, 0.20, 0.35]),
    ([0.02, 0.05, 0.10, 0.25, 0.40], [0.09, 0.17, 0.20, 0.35, 0.50]),
    ([0.05, 0.10, 0.16, 0.25, 0.40], [0.05, 0.20, 0.35, 0.50, 0.65]),
    ([0.05, 0.18, 0.20, 0.25, 0.40], [0.17, 0.35, 0.50, 0.65, 0.80]),
    ([0.01, 0.05, 0.10, 0.16, 0.25], [0.04, 0.05, 0.20, 0.35, 0.50]),
];

pub const REFERENCE_SHAPE: f64 = 1.0;
pub const REFERENCE_THETA: f64 = 0.1;
pub const REFERENCE_ACCRUAL: f64 = 2.0;

/// Scenario `number` (1 to 7).
pub fn reference_scenario(number: usize) -> Result<Scenario> {
    let (clin, pat) = number
        .checked_sub(1)
        .and_then(|i| SCENARIOS.get(i))
        .ok_or_else(|| Error::invalid(format!("scenario {number} does not exist; use 1 to 7")))?;
    Scenario::new(
        format!("scenario-{number}"),
        clin.to_vec(),
        pat.to_vec(),
        REFERENCE_SHAPE,
        REFERENCE_THETA,
        REFERENCE_ACCRUAL,
    )
}

pub fn reference_scenarios() -> Vec<Scenario> {
    (1..=SCENARIOS.len())
        .map(|i| reference_scenario(i).expect("static scenarios are valid"))
        .collect()
}
