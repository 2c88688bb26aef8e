//! Dose-finding with clinician- and patient-reported toxicity constraints.
//!
//! Four sequential designs share one empiric working model per toxicity
//! stream: a clinician-only time-to-event CRM, a dual-constraint CRM that
//! waits for complete follow-up, its time-to-event extension, and a
//! clinician-driven design that adds the patient constraint only at the
//! final analysis.
//!
//! - [`dose_model`]: working model, weighted likelihood, posterior mean.
//! - [`designs`]: trial state, dose assignment and final selection.
//! - [`sim`]: correlated event-time generation and operating characteristics.
//! - [`store`]: event-sourced live trial documents.

pub mod designs;
pub mod dose_model;
mod error;
pub mod presets;
pub mod quadrature;
pub mod sim;
pub mod store;

pub use designs::{
    final_recommendation, next_dose, true_optimal_dose, DesignConfig, DesignKind, PatientRecord,
    Stream, TrialState,
};
pub use dose_model::{DoseLevel, PriorSpec, Skeleton, ToxicityTarget, WeightedObservation};
pub use error::{Error, Result};
pub use sim::{run_simulation, OperatingCharacteristics, Scenario, SimJob};
