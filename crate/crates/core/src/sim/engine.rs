use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::rng::{Purpose, ReplicateStreams};
use super::sampling::{draw_event_times, next_arrival};
use super::{Scenario, SimJob};
use crate::designs::{
    final_recommendation, next_dose, true_optimal_dose, DesignConfig, DesignKind, PatientRecord,
    Stream, TrialState,
};
use crate::dose_model::DoseLevel;
use crate::error::Result;

/// Outcome of one simulated trial.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialResult {
    pub final_dose: DoseLevel,
    pub doses: Vec<DoseLevel>,
    pub entry_times: Vec<f64>,
    pub clin_dlt: Vec<bool>,
    pub pat_dlt: Vec<bool>,
    pub duration_weeks: f64,
}

impl TrialResult {
    pub fn clin_dlt_count(&self) -> usize {
        self.clin_dlt.iter().filter(|&&y| y).count()
    }

    pub fn pat_dlt_count(&self) -> usize {
        self.pat_dlt.iter().filter(|&&y| y).count()
    }
}

/// Simulates one trial from its keyed random streams.
///
/// Arrivals follow a Poisson process. Designs that need complete follow-up
/// hold each arrival until the previous patient's window has elapsed.
pub fn run_trial(
    design: &DesignConfig,
    scenario: &Scenario,
    streams: &ReplicateStreams,
) -> Result<TrialResult> {
    let window = design.window;
    let n = design.n_max;
    let gated = design.kind.requires_complete_follow_up();
    let mut state = TrialState::new(design.clone());
    state.patients.reserve(n);

    let mut arrival = 0.0;
    let mut entry = 0.0;
    for i in 0..n {
        if i > 0 {
            let mut rng = streams.stream(i, Purpose::Arrival);
            arrival = next_arrival(arrival, scenario.accrual_per_window, window, &mut rng);
            entry = if gated {
                arrival.max(entry + window)
            } else {
                arrival
            };
        }
        state.now = entry;
        let dose = next_dose(&state)?;
        let mut rng = streams.stream(i, Purpose::EventTimes);
        let (clin, pat) = draw_event_times(dose, scenario, window, &mut rng)?;
        state.patients.push(PatientRecord {
            id: i as u32 + 1,
            entry_time: entry,
            dose,
            clin_event_time: clin,
            pat_event_time: pat,
        });
    }

    state.now = entry + window;
    let final_dose = final_recommendation(&state)?;
    let p = &state.patients;
    Ok(TrialResult {
        final_dose,
        doses: p.iter().map(|r| r.dose).collect(),
        entry_times: p.iter().map(|r| r.entry_time).collect(),
        clin_dlt: p.iter().map(|r| r.dlt_within_window(Stream::Clinician, window)).collect(),
        pat_dlt: p.iter().map(|r| r.dlt_within_window(Stream::Patient, window)).collect(),
        duration_weeks: state.now,
    })
}

/// Runs every replicate of `job`, in replicate order.
///
/// Replicates run on the current rayon pool; the output does not depend on
/// the number of worker threads.
pub fn simulate_replicates(job: &SimJob) -> Result<Vec<TrialResult>> {
    (0..job.n_replicates as u64)
        .into_par_iter()
        .map(|r| run_trial(&job.design, &job.scenario, &ReplicateStreams::new(job.seed, r)))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatingCharacteristics {
    pub scenario: String,
    pub design: DesignKind,
    pub n_max: usize,
    pub n_replicates: usize,
    pub seed: u64,
    /// Dose satisfying both true constraints, if any.
    pub true_optimal_dose: Option<DoseLevel>,
    /// Percent of trials recommending each dose level.
    pub selection_pct: Vec<f64>,
    /// Percent of trials recommending the true optimal dose.
    pub pcs: f64,
    /// Mean patients treated above the true optimal dose.
    pub mean_overdose_patients: f64,
    /// Mean patients treated at the true optimal dose.
    pub mean_mtd_patients: f64,
    pub mean_clin_dlt: f64,
    pub mean_pat_dlt: f64,
    pub mean_duration_weeks: f64,
}

/// Ordered reduction of replicate results.
///
/// With no admissible true dose every assignment counts as an overdose.
pub fn summarize(job: &SimJob, results: &[TrialResult]) -> OperatingCharacteristics {
    let config = &job.design;
    let best = true_optimal_dose(
        &job.scenario.clin_probs,
        &job.scenario.pat_probs,
        config.clinician_target,
        config.patient_target,
    );
    let m = config.dose_count();
    let reps = results.len() as f64;

    let mut selected = vec![0usize; m];
    let (mut overdose, mut at_best, mut clin, mut pat) = (0usize, 0usize, 0usize, 0usize);
    let mut duration = 0.0;
    for r in results {
        selected[r.final_dose.index()] += 1;
        overdose += r.doses.iter().filter(|&&d| best.is_none_or(|b| d > b)).count();
        at_best += r.doses.iter().filter(|&&d| Some(d) == best).count();
        clin += r.clin_dlt_count();
        pat += r.pat_dlt_count();
        duration += r.duration_weeks;
    }

    let selection_pct: Vec<f64> = selected.iter().map(|&c| 100.0 * c as f64 / reps).collect();
    OperatingCharacteristics {
        scenario: job.scenario.name.clone(),
        design: config.kind,
        n_max: config.n_max,
        n_replicates: results.len(),
        seed: job.seed,
        true_optimal_dose: best,
        pcs: best.map_or(0.0, |b| selection_pct[b.index()]),
        selection_pct,
        mean_overdose_patients: overdose as f64 / reps,
        mean_mtd_patients: at_best as f64 / reps,
        mean_clin_dlt: clin as f64 / reps,
        mean_pat_dlt: pat as f64 / reps,
        mean_duration_weeks: duration / reps,
    }
}

pub fn run_simulation(job: &SimJob) -> Result<OperatingCharacteristics> {
    let results = simulate_replicates(job)?;
    Ok(summarize(job, &results))
}
