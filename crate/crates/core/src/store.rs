//! Event-sourced documents for live trials.
//!
//! A trial is an append-only list of [`TrialEvent`]s. The [`TrialState`] is a
//! fold over those events and is never edited directly. On disk each event
//! carries a SHA-256 chain digest so that edits and truncation are detected
//! and located.

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fs;
use std::path::{Path, PathBuf};

use crate::designs::{
    final_selection, next_assignment, next_dose, snapshot_observations, Assignment, DesignConfig,
    FinalSelection, Stream, TrialState,
};
use crate::dose_model::DoseLevel;
use crate::error::{Error, Result};

pub const SCHEMA: &str = "trial";
pub const VERSION: &str = "1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum EventKind {
    TrialCreated {
        config: DesignConfig,
    },
    PatientEnrolled {
        patient_id: u32,
        dose: DoseLevel,
        /// Set when the dose deliberately departs from the recommendation.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        override_note: Option<String>,
    },
    OutcomeReported {
        patient_id: u32,
        stream: Stream,
        /// Trial week at which the toxicity occurred.
        event_time: f64,
    },
    FollowupClockAdvanced {
        now: f64,
    },
    TrialFinalized {
        final_dose: DoseLevel,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrialEvent {
    pub seq: u64,
    /// Trial weeks since the trial was created.
    pub at: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub recorded_at: Option<DateTime<Utc>>,
    pub event: EventKind,
}

/// Checks a trial identifier; identifiers double as file names.
pub fn validate_trial_id(id: &str) -> Result<()> {
    let ok = !id.is_empty()
        && id.len() <= 128
        && id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_');
    if ok {
        Ok(())
    } else {
        Err(Error::invalid(format!(
            "trial id '{id}' must be 1-128 characters of [A-Za-z0-9_-]"
        )))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialDocument {
    trial_id: String,
    events: Vec<TrialEvent>,
    state: Option<TrialState>,
    finalized: Option<DoseLevel>,
}

impl TrialDocument {
    /// An empty document; its first event must be `TrialCreated`.
    pub fn new(trial_id: impl Into<String>) -> Result<Self> {
        let trial_id = trial_id.into();
        validate_trial_id(&trial_id)?;
        Ok(Self {
            trial_id,
            events: Vec::new(),
            state: None,
            finalized: None,
        })
    }

    pub fn create(trial_id: impl Into<String>, config: DesignConfig, at: f64) -> Result<Self> {
        let mut doc = Self::new(trial_id)?;
        doc.append(at, EventKind::TrialCreated { config }, None)?;
        Ok(doc)
    }

    /// Rebuilds a document by applying `events` in order.
    pub fn replay(trial_id: impl Into<String>, events: impl IntoIterator<Item = TrialEvent>) -> Result<Self> {
        let mut doc = Self::new(trial_id)?;
        for e in events {
            doc.apply(e)?;
        }
        Ok(doc)
    }

    pub fn trial_id(&self) -> &str {
        &self.trial_id
    }

    pub fn events(&self) -> &[TrialEvent] {
        &self.events
    }

    pub fn state(&self) -> Option<&TrialState> {
        self.state.as_ref()
    }

    pub fn finalized(&self) -> Option<DoseLevel> {
        self.finalized
    }

    pub fn last_seq(&self) -> u64 {
        self.events.len() as u64
    }

    pub fn now(&self) -> f64 {
        self.state.as_ref().map_or(0.0, |s| s.now)
    }

    /// Appends an event with the next sequence number.
    pub fn append(
        &mut self,
        at: f64,
        event: EventKind,
        recorded_at: Option<DateTime<Utc>>,
    ) -> Result<&TrialEvent> {
        self.apply(TrialEvent {
            seq: self.last_seq() + 1,
            at,
            recorded_at,
            event,
        })?;
        Ok(self.events.last().expect("just appended"))
    }

    /// Consuming form of [`TrialDocument::apply`].
    pub fn applied(mut self, event: TrialEvent) -> Result<Self> {
        self.apply(event)?;
        Ok(self)
    }

    /// Validates `event` against the current state and appends it.
    /// The document is unchanged when an error is returned.
    pub fn apply(&mut self, event: TrialEvent) -> Result<()> {
        let expected = self.last_seq() + 1;
        if event.seq != expected {
            return Err(Error::Conflict {
                expected,
                got: event.seq,
            });
        }
        let seq = event.seq;
        let invalid = |reason: String| Error::Validation { seq, reason };

        if let Some(dose) = self.finalized {
            return Err(Error::State(format!("trial finalized at dose {dose}")));
        }
        if !(event.at.is_finite() && event.at >= 0.0) {
            return Err(invalid(format!("event time {} must be a non-negative number", event.at)));
        }
        if event.at < self.now() {
            return Err(invalid(format!(
                "clock regression: event at week {} precedes week {}",
                event.at,
                self.now()
            )));
        }

        let next_state = match (&event.event, &self.state) {
            (EventKind::TrialCreated { config }, None) => {
                config.validate().map_err(|e| invalid(e.to_string()))?;
                let mut state = TrialState::new(config.clone());
                state.now = event.at;
                state
            }
            (EventKind::TrialCreated { .. }, Some(_)) => {
                return Err(invalid("trial already created".into()));
            }
            (_, None) => return Err(invalid("the first event must be trial_created".into())),
            (kind, Some(state)) => {
                let mut state = state.clone();
                state.now = event.at;
                self.transition(&mut state, kind, seq)?;
                state
            }
        };

        if let EventKind::TrialFinalized { final_dose } = event.event {
            self.finalized = Some(final_dose);
        }
        self.state = Some(next_state);
        self.events.push(event);
        Ok(())
    }

    fn transition(&self, state: &mut TrialState, kind: &EventKind, seq: u64) -> Result<()> {
        let invalid = |reason: String| Error::Validation { seq, reason };
        match kind {
            EventKind::TrialCreated { .. } => unreachable!("handled by apply"),
            EventKind::PatientEnrolled {
                patient_id,
                dose,
                override_note,
            } => {
                let expected_id = state.patients.len() as u32 + 1;
                if *patient_id != expected_id {
                    return Err(invalid(format!(
                        "patients are numbered in enrolment order; expected id {expected_id}, got {patient_id}"
                    )));
                }
                if state.is_full() {
                    return Err(invalid(format!(
                        "all {} patients already enrolled",
                        state.config.n_max
                    )));
                }
                if !state.config.clinician_skeleton.contains(*dose) {
                    return Err(invalid(format!("dose {dose} does not exist")));
                }
                let recommended = next_dose(state)?;
                let has_note = override_note.as_deref().is_some_and(|n| !n.trim().is_empty());
                if *dose != recommended && !has_note {
                    return Err(invalid(format!(
                        "dose {dose} differs from the recommended dose {recommended}; an override_note is required"
                    )));
                }
                let record = crate::designs::PatientRecord::new(*patient_id, state.now, *dose);
                state.enroll(record).map_err(|e| invalid(e.to_string()))?;
            }
            EventKind::OutcomeReported {
                patient_id,
                stream,
                event_time,
            } => {
                let now = state.now;
                let Some(patient) = state.patients.iter_mut().find(|p| p.id == *patient_id) else {
                    return Err(invalid(format!("unknown patient {patient_id}")));
                };
                if patient.event_time(*stream).is_some() {
                    return Err(invalid(format!(
                        "patient {patient_id} already has a {stream:?} outcome"
                    )));
                }
                if !(event_time.is_finite() && *event_time > patient.entry_time) {
                    return Err(invalid(format!(
                        "outcome at week {event_time} must follow entry at week {}",
                        patient.entry_time
                    )));
                }
                if *event_time > now {
                    return Err(invalid(format!(
                        "outcome at week {event_time} is reported before it happens (week {now})"
                    )));
                }
                patient.set_event_time(*stream, Some(event_time - patient.entry_time));
            }
            EventKind::FollowupClockAdvanced { now } => {
                if *now != state.now {
                    return Err(invalid(format!(
                        "clock advance to week {now} must be recorded at that week, not {}",
                        state.now
                    )));
                }
            }
            EventKind::TrialFinalized { final_dose } => {
                let selection = final_selection(state).map_err(|e| invalid(e.to_string()))?;
                if selection.dose != *final_dose {
                    return Err(invalid(format!(
                        "final dose {final_dose} differs from the recommended {}",
                        selection.dose
                    )));
                }
            }
        }
        Ok(())
    }

    /// Engine output at trial week `at` (defaults to the document clock).
    pub fn recommendation(&self, at: Option<f64>) -> Result<Recommendation> {
        let state = self
            .state
            .as_ref()
            .ok_or_else(|| Error::State("trial has not been created".into()))?;
        if let Some(dose) = self.finalized {
            return Err(Error::State(format!("trial finalized at dose {dose}")));
        }
        let at = at.unwrap_or(state.now);
        if !(at.is_finite() && at >= state.now) {
            return Err(Error::State(format!(
                "recommendation time {at} precedes the trial clock {}",
                state.now
            )));
        }
        let mut view = state.clone();
        view.now = at;
        let timeline = timeline(&view);
        if !view.is_full() {
            return Ok(Recommendation::NextDose {
                at,
                enrolled: view.patients.len(),
                n_max: view.config.n_max,
                assignment: next_assignment(&view)?,
                timeline,
            });
        }
        Ok(Recommendation::Final {
            at,
            selection: final_selection(&view)?,
            timeline,
        })
    }
}

/// Per-patient follow-up as seen by the engine.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PatientView {
    pub id: u32,
    pub entry_time: f64,
    pub dose: DoseLevel,
    pub follow_up_fraction: f64,
    pub clinician_weight: f64,
    pub clinician_dlt: bool,
    pub patient_weight: f64,
    pub patient_dlt: bool,
}

fn timeline(state: &TrialState) -> Vec<PatientView> {
    let clin = snapshot_observations(state, Stream::Clinician);
    let pat = snapshot_observations(state, Stream::Patient);
    state
        .patients
        .iter()
        .zip(clin.iter().zip(&pat))
        .map(|(p, (c, q))| PatientView {
            id: p.id,
            entry_time: p.entry_time,
            dose: p.dose,
            follow_up_fraction: p.follow_up(state.now, state.config.window) / state.config.window,
            clinician_weight: c.weight,
            clinician_dlt: c.dlt,
            patient_weight: q.weight,
            patient_dlt: q.dlt,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "phase", rename_all = "snake_case")]
pub enum Recommendation {
    NextDose {
        at: f64,
        enrolled: usize,
        n_max: usize,
        assignment: Assignment,
        timeline: Vec<PatientView>,
    },
    Final {
        at: f64,
        selection: FinalSelection,
        timeline: Vec<PatientView>,
    },
}

impl Recommendation {
    pub fn dose(&self) -> DoseLevel {
        match self {
            Recommendation::NextDose { assignment, .. } => assignment.dose,
            Recommendation::Final { selection, .. } => selection.dose,
        }
    }
}

// On-disk layout.

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StoredEvent {
    seq: u64,
    at: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    recorded_at: Option<DateTime<Utc>>,
    event: EventKind,
    digest: String,
}

#[derive(Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
struct Derived {
    last_seq: u64,
    finalized: Option<DoseLevel>,
    state: Option<TrialState>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TrialFile {
    schema: String,
    version: String,
    trial_id: String,
    events: Vec<StoredEvent>,
    derived: Derived,
}

fn chain_digest(previous: &str, event: &TrialEvent) -> String {
    let body = serde_json::to_vec(event).expect("events serialize");
    let mut h = Sha256::new();
    h.update(previous.as_bytes());
    h.update(&body);
    hex::encode(h.finalize())
}

impl TrialDocument {
    /// Canonical JSON form: fixed key order, chained digests, derived cache.
    pub fn to_json(&self) -> String {
        let mut previous = String::new();
        let events = self
            .events
            .iter()
            .map(|e| {
                previous = chain_digest(&previous, e);
                StoredEvent {
                    seq: e.seq,
                    at: e.at,
                    recorded_at: e.recorded_at,
                    event: e.event.clone(),
                    digest: previous.clone(),
                }
            })
            .collect();
        let file = TrialFile {
            schema: SCHEMA.into(),
            version: VERSION.into(),
            trial_id: self.trial_id.clone(),
            events,
            derived: self.derived(),
        };
        let mut out = serde_json::to_string_pretty(&file).expect("documents serialize");
        out.push('\n');
        out
    }

    fn derived(&self) -> Derived {
        Derived {
            last_seq: self.last_seq(),
            finalized: self.finalized,
            state: self.state.clone(),
        }
    }

    /// Parses, replays and verifies a document produced by [`TrialDocument::to_json`].
    pub fn from_json(text: &str) -> Result<Self> {
        let file: TrialFile = serde_json::from_str(text).map_err(|e| Error::Integrity {
            seq: 0,
            reason: format!("unreadable trial document: {e}"),
        })?;
        if file.schema != SCHEMA || file.version != VERSION {
            return Err(Error::Integrity {
                seq: 0,
                reason: format!(
                    "expected schema '{SCHEMA}' version '{VERSION}', found '{}' version '{}'",
                    file.schema, file.version
                ),
            });
        }

        let mut doc = Self::new(file.trial_id)?;
        let mut digests = Vec::with_capacity(file.events.len());
        for stored in file.events {
            digests.push(stored.digest);
            doc.apply(TrialEvent {
                seq: stored.seq,
                at: stored.at,
                recorded_at: stored.recorded_at,
                event: stored.event,
            })?;
        }

        let mut previous = String::new();
        for (event, stored) in doc.events.iter().zip(&digests) {
            previous = chain_digest(&previous, event);
            if &previous != stored {
                return Err(Error::Integrity {
                    seq: event.seq,
                    reason: "event digest does not match its content".into(),
                });
            }
        }

        if doc.derived() != file.derived {
            return Err(Error::Integrity {
                seq: file.derived.last_seq.min(doc.last_seq()),
                reason: "cached state differs from the replayed events".into(),
            });
        }
        Ok(doc)
    }

    pub fn file_name(trial_id: &str) -> String {
        format!("{trial_id}.json")
    }

    /// Writes `<dir>/<trial_id>.json` atomically.
    pub fn persist(&self, dir: &Path) -> Result<PathBuf> {
        fs::create_dir_all(dir)?;
        let path = dir.join(Self::file_name(&self.trial_id));
        let tmp = dir.join(format!(".{}.tmp", Self::file_name(&self.trial_id)));
        fs::write(&tmp, self.to_json())?;
        fs::rename(&tmp, &path)?;
        Ok(path)
    }

    pub fn load(dir: &Path, trial_id: &str) -> Result<Self> {
        validate_trial_id(trial_id)?;
        let doc = Self::load_path(&dir.join(Self::file_name(trial_id)))?;
        if doc.trial_id != trial_id {
            return Err(Error::Integrity {
                seq: 0,
                reason: format!("file holds trial '{}', not '{trial_id}'", doc.trial_id),
            });
        }
        Ok(doc)
    }

    pub fn load_path(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}
