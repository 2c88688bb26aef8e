//! Sequential dose-assignment and final-selection rules for the four designs.
//!
//! Every decision is a pure function of a [`TrialState`]. The state carries
//! event times relative to each patient's entry; the decision clock decides
//! which of them are visible and how much follow-up each patient contributes.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

use crate::dose_model::{
    follow_up_weight, posterior_mean, select_dose, DoseLevel, PriorSpec, Skeleton, ToxicityTarget,
    WeightedObservation,
};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DesignKind {
    /// Clinician outcomes only, weighted likelihood.
    TiteCrm,
    /// Both outcomes, complete follow-up before every assignment.
    ProCrm,
    /// Both outcomes, weighted likelihood during the trial.
    TiteProCrm,
    /// Clinician outcomes during the trial, both at the final analysis.
    TiteCrmPlusPro,
}

impl DesignKind {
    pub const ALL: [DesignKind; 4] = [
        DesignKind::TiteCrm,
        DesignKind::ProCrm,
        DesignKind::TiteProCrm,
        DesignKind::TiteCrmPlusPro,
    ];

    /// Whether patient-reported outcomes drive assignments during the trial.
    pub fn assigns_with_patient_outcomes(self) -> bool {
        matches!(self, DesignKind::ProCrm | DesignKind::TiteProCrm)
    }

    /// Whether patient-reported outcomes enter the final recommendation.
    pub fn recommends_with_patient_outcomes(self) -> bool {
        !matches!(self, DesignKind::TiteCrm)
    }

    /// Whether each enrolment waits for the previous patient's full window.
    pub fn requires_complete_follow_up(self) -> bool {
        matches!(self, DesignKind::ProCrm)
    }

    pub fn slug(self) -> &'static str {
        match self {
            DesignKind::TiteCrm => "tite_crm",
            DesignKind::ProCrm => "pro_crm",
            DesignKind::TiteProCrm => "tite_pro_crm",
            DesignKind::TiteCrmPlusPro => "tite_crm_plus_pro",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            DesignKind::TiteCrm => "TITE-CRM",
            DesignKind::ProCrm => "PRO-CRM",
            DesignKind::TiteProCrm => "TITE-PRO-CRM",
            DesignKind::TiteCrmPlusPro => "TITE-CRM + PRO",
        }
    }
}

impl fmt::Display for DesignKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for DesignKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm: String = s
            .trim()
            .to_ascii_lowercase()
            .chars()
            .map(|c| if c == '-' || c == ' ' { '_' } else { c })
            .collect();
        let norm = norm.replace("_+_", "_plus_").replace('+', "_plus_");
        DesignKind::ALL
            .into_iter()
            .find(|k| k.slug() == norm)
            .ok_or_else(|| {
                Error::invalid(format!(
                    "unknown design '{s}', expected one of tite_crm, pro_crm, tite_pro_crm, tite_crm_plus_pro"
                ))
            })
    }
}

/// Toxicity stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stream {
    Clinician,
    Patient,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DesignConfigRaw", into = "DesignConfigRaw")]
pub struct DesignConfig {
    pub kind: DesignKind,
    pub n_max: usize,
    /// Observation window in weeks.
    pub window: f64,
    pub clinician_target: ToxicityTarget,
    pub patient_target: ToxicityTarget,
    pub clinician_skeleton: Skeleton,
    pub patient_skeleton: Skeleton,
    pub clinician_prior: PriorSpec,
    pub patient_prior: PriorSpec,
    pub start_dose: DoseLevel,
    pub no_skip: bool,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DesignConfigRaw {
    kind: DesignKind,
    n_max: usize,
    window: f64,
    clinician_target: ToxicityTarget,
    patient_target: ToxicityTarget,
    clinician_skeleton: Skeleton,
    patient_skeleton: Skeleton,
    clinician_prior: PriorSpec,
    patient_prior: PriorSpec,
    #[serde(default = "default_start_dose")]
    start_dose: DoseLevel,
    #[serde(default = "default_no_skip")]
    no_skip: bool,
}

fn default_start_dose() -> DoseLevel {
    DoseLevel::LOWEST
}

fn default_no_skip() -> bool {
    true
}

impl TryFrom<DesignConfigRaw> for DesignConfig {
    type Error = Error;

    fn try_from(r: DesignConfigRaw) -> Result<Self> {
        let config = DesignConfig {
            kind: r.kind,
            n_max: r.n_max,
            window: r.window,
            clinician_target: r.clinician_target,
            patient_target: r.patient_target,
            clinician_skeleton: r.clinician_skeleton,
            patient_skeleton: r.patient_skeleton,
            clinician_prior: r.clinician_prior,
            patient_prior: r.patient_prior,
            start_dose: r.start_dose,
            no_skip: r.no_skip,
        };
        config.validate()?;
        Ok(config)
    }
}

impl From<DesignConfig> for DesignConfigRaw {
    fn from(c: DesignConfig) -> Self {
        DesignConfigRaw {
            kind: c.kind,
            n_max: c.n_max,
            window: c.window,
            clinician_target: c.clinician_target,
            patient_target: c.patient_target,
            clinician_skeleton: c.clinician_skeleton,
            patient_skeleton: c.patient_skeleton,
            clinician_prior: c.clinician_prior,
            patient_prior: c.patient_prior,
            start_dose: c.start_dose,
            no_skip: c.no_skip,
        }
    }
}

impl DesignConfig {
    pub fn validate(&self) -> Result<()> {
        if self.clinician_skeleton.len() != self.patient_skeleton.len() {
            return Err(Error::invalid(format!(
                "clinician and patient skeletons must have the same number of dose levels ({} vs {})",
                self.clinician_skeleton.len(),
                self.patient_skeleton.len()
            )));
        }
        if !self.clinician_skeleton.contains(self.start_dose) {
            return Err(Error::invalid(format!(
                "start_dose {} outside 1..={}",
                self.start_dose,
                self.dose_count()
            )));
        }
        if self.n_max == 0 {
            return Err(Error::invalid("n_max must be at least 1"));
        }
        if !(self.window > 0.0 && self.window.is_finite()) {
            return Err(Error::invalid(format!(
                "window must be positive, got {}",
                self.window
            )));
        }
        Ok(())
    }

    pub fn dose_count(&self) -> usize {
        self.clinician_skeleton.len()
    }

    pub fn with_kind(mut self, kind: DesignKind) -> Self {
        self.kind = kind;
        self
    }

    pub fn skeleton(&self, stream: Stream) -> &Skeleton {
        match stream {
            Stream::Clinician => &self.clinician_skeleton,
            Stream::Patient => &self.patient_skeleton,
        }
    }

    pub fn prior(&self, stream: Stream) -> &PriorSpec {
        match stream {
            Stream::Clinician => &self.clinician_prior,
            Stream::Patient => &self.patient_prior,
        }
    }

    pub fn target(&self, stream: Stream) -> ToxicityTarget {
        match stream {
            Stream::Clinician => self.clinician_target,
            Stream::Patient => self.patient_target,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PatientRecord {
    pub id: u32,
    pub entry_time: f64,
    pub dose: DoseLevel,
    /// Weeks from entry to the clinician-reported toxicity, if any.
    pub clin_event_time: Option<f64>,
    /// Weeks from entry to the patient-reported toxicity, if any.
    pub pat_event_time: Option<f64>,
}

impl PatientRecord {
    pub fn new(id: u32, entry_time: f64, dose: DoseLevel) -> Self {
        Self {
            id,
            entry_time,
            dose,
            clin_event_time: None,
            pat_event_time: None,
        }
    }

    pub fn event_time(&self, stream: Stream) -> Option<f64> {
        match stream {
            Stream::Clinician => self.clin_event_time,
            Stream::Patient => self.pat_event_time,
        }
    }

    pub fn set_event_time(&mut self, stream: Stream, time: Option<f64>) {
        match stream {
            Stream::Clinician => self.clin_event_time = time,
            Stream::Patient => self.pat_event_time = time,
        }
    }

    /// Whether a toxicity in `stream` inside the window has been seen by `now`.
    pub fn dlt_observed(&self, stream: Stream, now: f64, window: f64) -> bool {
        let horizon = (now - self.entry_time).min(window);
        self.event_time(stream).is_some_and(|t| t <= horizon)
    }

    /// Toxicity within the window, regardless of the clock.
    pub fn dlt_within_window(&self, stream: Stream, window: f64) -> bool {
        self.event_time(stream).is_some_and(|t| t <= window)
    }

    pub fn follow_up(&self, now: f64, window: f64) -> f64 {
        (now - self.entry_time).clamp(0.0, window)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrialState {
    pub config: DesignConfig,
    pub patients: Vec<PatientRecord>,
    /// Decision clock, weeks since trial start.
    pub now: f64,
}

impl TrialState {
    pub fn new(config: DesignConfig) -> Self {
        Self {
            config,
            patients: Vec::new(),
            now: 0.0,
        }
    }

    pub fn is_full(&self) -> bool {
        self.patients.len() >= self.config.n_max
    }

    pub fn highest_tried(&self) -> Option<DoseLevel> {
        self.patients.iter().map(|p| p.dose).max()
    }

    /// Whether every enrolled patient has been followed for the full window.
    pub fn follow_up_complete(&self) -> bool {
        self.patients
            .iter()
            .all(|p| self.now >= p.entry_time + self.config.window)
    }

    /// Appends a patient, checking the state invariants.
    pub fn enroll(&mut self, patient: PatientRecord) -> Result<()> {
        if self.is_full() {
            return Err(Error::TrialComplete {
                n_max: self.config.n_max,
            });
        }
        if !self.config.clinician_skeleton.contains(patient.dose) {
            return Err(Error::invalid(format!("dose {} does not exist", patient.dose)));
        }
        if let Some(last) = self.patients.last() {
            if patient.entry_time < last.entry_time {
                return Err(Error::State(format!(
                    "patient {} enters at {} before patient {} at {}",
                    patient.id, patient.entry_time, last.id, last.entry_time
                )));
            }
        }
        if patient.entry_time > self.now {
            return Err(Error::State(format!(
                "entry time {} is after the clock {}",
                patient.entry_time, self.now
            )));
        }
        for t in [patient.clin_event_time, patient.pat_event_time]
            .into_iter()
            .flatten()
        {
            if !(t > 0.0) {
                return Err(Error::State(format!(
                    "event times are measured from entry and must be positive, got {t}"
                )));
            }
        }
        self.patients.push(patient);
        Ok(())
    }
}

/// Weighted observations visible at `state.now` for one stream.
pub fn snapshot_observations(state: &TrialState, stream: Stream) -> Vec<WeightedObservation> {
    let window = state.config.window;
    state
        .patients
        .iter()
        .map(|p| {
            let dlt = p.dlt_observed(stream, state.now, window);
            let weight = follow_up_weight(p.follow_up(state.now, window), window, dlt)
                .expect("window validated with the config");
            WeightedObservation {
                dose: p.dose,
                weight,
                dlt,
            }
        })
        .collect()
}

/// Applies the start dose and the no-skip escalation rule to a model choice.
pub fn constrained_next_dose(model_choice: DoseLevel, state: &TrialState) -> DoseLevel {
    match state.highest_tried() {
        None => state.config.start_dose,
        Some(highest) if state.config.no_skip => model_choice.min(highest.next_up()),
        Some(_) => model_choice,
    }
}

/// Posterior summary for one stream.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StreamEstimate {
    pub stream: Stream,
    pub posterior_mean: f64,
    /// Estimated toxicity probability per dose level.
    pub curve: Vec<f64>,
    pub target: f64,
    /// Dose closest to the target under the plug-in estimate.
    pub choice: DoseLevel,
}

pub fn estimate_stream(state: &TrialState, stream: Stream) -> Result<StreamEstimate> {
    let config = &state.config;
    let obs = snapshot_observations(state, stream);
    let skeleton = config.skeleton(stream);
    let mean = posterior_mean(config.prior(stream), &obs, skeleton)?;
    Ok(StreamEstimate {
        stream,
        posterior_mean: mean,
        curve: skeleton.curve(mean),
        target: config.target(stream).value(),
        choice: select_dose(skeleton, mean, config.target(stream)),
    })
}

/// A dose assignment with the estimates behind it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Assignment {
    pub clinician: StreamEstimate,
    pub patient: StreamEstimate,
    /// Model choice before the escalation constraint.
    pub model_choice: DoseLevel,
    /// Whether the patient stream entered the model choice.
    pub patient_constrains: bool,
    pub dose: DoseLevel,
}

fn ensure_capacity(state: &TrialState) -> Result<()> {
    if state.is_full() {
        Err(Error::TrialComplete {
            n_max: state.config.n_max,
        })
    } else {
        Ok(())
    }
}

/// Dose for the next patient.
pub fn next_dose(state: &TrialState) -> Result<DoseLevel> {
    ensure_capacity(state)?;
    if state.patients.is_empty() {
        return Ok(state.config.start_dose);
    }
    let clinician = estimate_stream(state, Stream::Clinician)?.choice;
    let model_choice = if state.config.kind.assigns_with_patient_outcomes() {
        clinician.min(estimate_stream(state, Stream::Patient)?.choice)
    } else {
        clinician
    };
    Ok(constrained_next_dose(model_choice, state))
}

/// [`next_dose`] with both streams' estimates, for display.
pub fn next_assignment(state: &TrialState) -> Result<Assignment> {
    ensure_capacity(state)?;
    let clinician = estimate_stream(state, Stream::Clinician)?;
    let patient = estimate_stream(state, Stream::Patient)?;
    let patient_constrains = state.config.kind.assigns_with_patient_outcomes();
    let model_choice = if patient_constrains {
        clinician.choice.min(patient.choice)
    } else {
        clinician.choice
    };
    Ok(Assignment {
        dose: constrained_next_dose(model_choice, state),
        clinician,
        patient,
        model_choice,
        patient_constrains,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FinalSelection {
    pub clinician: StreamEstimate,
    pub patient: StreamEstimate,
    pub patient_constrains: bool,
    pub dose: DoseLevel,
}

fn ensure_final_ready(state: &TrialState) -> Result<()> {
    let n = state.patients.len();
    if n < state.config.n_max {
        return Err(Error::NotReady(format!(
            "{n} of {} patients enrolled",
            state.config.n_max
        )));
    }
    if !state.follow_up_complete() {
        let last = state.patients.last().map_or(0.0, |p| p.entry_time);
        return Err(Error::NotReady(format!(
            "follow-up completes at week {}, clock is {}",
            last + state.config.window,
            state.now
        )));
    }
    Ok(())
}

/// Recommended dose after every patient has completed follow-up.
pub fn final_recommendation(state: &TrialState) -> Result<DoseLevel> {
    ensure_final_ready(state)?;
    let clinician = estimate_stream(state, Stream::Clinician)?.choice;
    if state.config.kind.recommends_with_patient_outcomes() {
        Ok(clinician.min(estimate_stream(state, Stream::Patient)?.choice))
    } else {
        Ok(clinician)
    }
}

pub fn final_selection(state: &TrialState) -> Result<FinalSelection> {
    ensure_final_ready(state)?;
    let clinician = estimate_stream(state, Stream::Clinician)?;
    let patient = estimate_stream(state, Stream::Patient)?;
    let patient_constrains = state.config.kind.recommends_with_patient_outcomes();
    let dose = if patient_constrains {
        clinician.choice.min(patient.choice)
    } else {
        clinician.choice
    };
    Ok(FinalSelection {
        clinician,
        patient,
        patient_constrains,
        dose,
    })
}

/// Lowest of the two true MTDs; `None` when either stream has no admissible dose.
pub fn true_optimal_dose(
    clin_probs: &[f64],
    pat_probs: &[f64],
    clinician_target: ToxicityTarget,
    patient_target: ToxicityTarget,
) -> Option<DoseLevel> {
    let mtd = |probs: &[f64], target: ToxicityTarget| {
        probs
            .iter()
            .rposition(|&p| p <= target.value())
            .map(DoseLevel::from_index)
    };
    Some(mtd(clin_probs, clinician_target)?.min(mtd(pat_probs, patient_target)?))
}
