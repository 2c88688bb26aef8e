//! Monte-Carlo operating characteristics of the designs.

mod engine;
pub mod rng;
pub mod sampling;

pub use engine::{run_simulation, run_trial, simulate_replicates, summarize, OperatingCharacteristics, TrialResult};
pub use rng::{Purpose, ReplicateStreams};
pub use sampling::{clayton_pair, draw_event_times, next_arrival, weibull_scale};

use serde::{Deserialize, Serialize};

use crate::designs::DesignConfig;
use crate::error::{Error, Result};

/// True toxicity model used to generate patients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ScenarioRaw", into = "ScenarioRaw")]
pub struct Scenario {
    pub name: String,
    /// P(clinician toxicity by the end of the window) per dose.
    pub clin_probs: Vec<f64>,
    /// P(patient toxicity by the end of the window) per dose.
    pub pat_probs: Vec<f64>,
    /// Weibull shape of both event-time margins.
    pub hazard_shape: f64,
    /// Clayton association between the clinician and patient event times.
    pub copula_theta: f64,
    /// Expected arrivals per observation window.
    pub accrual_per_window: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioRaw {
    #[serde(default)]
    name: String,
    clin_probs: Vec<f64>,
    pat_probs: Vec<f64>,
    hazard_shape: f64,
    copula_theta: f64,
    accrual_per_window: f64,
}

impl TryFrom<ScenarioRaw> for Scenario {
    type Error = Error;

    fn try_from(r: ScenarioRaw) -> Result<Self> {
        Scenario::new(
            r.name,
            r.clin_probs,
            r.pat_probs,
            r.hazard_shape,
            r.copula_theta,
            r.accrual_per_window,
        )
    }
}

impl From<Scenario> for ScenarioRaw {
    fn from(s: Scenario) -> Self {
        ScenarioRaw {
            name: s.name,
            clin_probs: s.clin_probs,
            pat_probs: s.pat_probs,
            hazard_shape: s.hazard_shape,
            copula_theta: s.copula_theta,
            accrual_per_window: s.accrual_per_window,
        }
    }
}

fn check_probs(label: &str, probs: &[f64]) -> Result<()> {
    if let Some(p) = probs.iter().find(|p| !(0.0..1.0).contains(*p)) {
        return Err(Error::invalid(format!("{label} value {p} outside [0, 1)")));
    }
    if probs.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::invalid(format!("{label} must be nondecreasing in dose")));
    }
    Ok(())
}

impl Scenario {
    pub fn new(
        name: impl Into<String>,
        clin_probs: Vec<f64>,
        pat_probs: Vec<f64>,
        hazard_shape: f64,
        copula_theta: f64,
        accrual_per_window: f64,
    ) -> Result<Self> {
        check_probs("clin_probs", &clin_probs)?;
        check_probs("pat_probs", &pat_probs)?;
        if clin_probs.len() != pat_probs.len() || clin_probs.is_empty() {
            return Err(Error::invalid(format!(
                "clin_probs and pat_probs must be non-empty and of equal length ({} vs {})",
                clin_probs.len(),
                pat_probs.len()
            )));
        }
        if !(hazard_shape > 0.0 && hazard_shape.is_finite()) {
            return Err(Error::invalid(format!("hazard_shape must be positive, got {hazard_shape}")));
        }
        if !(copula_theta >= 0.0 && copula_theta.is_finite()) {
            return Err(Error::invalid(format!("copula_theta must be non-negative, got {copula_theta}")));
        }
        if !(accrual_per_window > 0.0 && accrual_per_window.is_finite()) {
            return Err(Error::invalid(format!(
                "accrual_per_window must be positive, got {accrual_per_window}"
            )));
        }
        Ok(Self {
            name: name.into(),
            clin_probs,
            pat_probs,
            hazard_shape,
            copula_theta,
            accrual_per_window,
        })
    }

    pub fn dose_count(&self) -> usize {
        self.clin_probs.len()
    }

    pub fn with_hazard_shape(mut self, shape: f64) -> Result<Self> {
        self.hazard_shape = shape;
        Self::try_from(ScenarioRaw::from(self))
    }

    pub fn with_copula_theta(mut self, theta: f64) -> Result<Self> {
        self.copula_theta = theta;
        Self::try_from(ScenarioRaw::from(self))
    }

    pub fn with_accrual(mut self, per_window: f64) -> Result<Self> {
        self.accrual_per_window = per_window;
        Self::try_from(ScenarioRaw::from(self))
    }
}

/// One simulation cell: a scenario, a design and a replicate budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SimJobRaw", into = "SimJobRaw")]
pub struct SimJob {
    pub scenario: Scenario,
    pub design: DesignConfig,
    pub n_replicates: usize,
    pub seed: u64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SimJobRaw {
    scenario: Scenario,
    design: DesignConfig,
    n_replicates: usize,
    seed: u64,
}

impl TryFrom<SimJobRaw> for SimJob {
    type Error = Error;

    fn try_from(r: SimJobRaw) -> Result<Self> {
        SimJob::new(r.scenario, r.design, r.n_replicates, r.seed)
    }
}

impl From<SimJob> for SimJobRaw {
    fn from(j: SimJob) -> Self {
        SimJobRaw {
            scenario: j.scenario,
            design: j.design,
            n_replicates: j.n_replicates,
            seed: j.seed,
        }
    }
}

impl SimJob {
    pub fn new(scenario: Scenario, design: DesignConfig, n_replicates: usize, seed: u64) -> Result<Self> {
        if n_replicates == 0 {
            return Err(Error::invalid("n_replicates must be at least 1"));
        }
        if scenario.dose_count() != design.dose_count() {
            return Err(Error::invalid(format!(
                "scenario has {} dose levels but the design has {}",
                scenario.dose_count(),
                design.dose_count()
            )));
        }
        Ok(Self {
            scenario,
            design,
            n_replicates,
            seed,
        })
    }
}
