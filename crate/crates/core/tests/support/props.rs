//! Property checks shared by the integration tests and the acceptance run.
//! Each returns `Err` with the shrunk counterexample on failure.

use proptest::prelude::*;
use proptest::test_runner::{Config, TestCaseError, TestRng, TestRunner};

use procrm_core::designs::{final_recommendation, next_assignment, next_dose, snapshot_observations};
use procrm_core::dose_model::{
    follow_up_weight, log_weighted_likelihood, model_probability, posterior_mean, select_dose, weighted_likelihood,
};
use procrm_core::presets::{reference_design, reference_scenario};
use procrm_core::sim::{run_trial, simulate_replicates, summarize, ReplicateStreams};
use procrm_core::store::{EventKind, Recommendation, TrialDocument};
use procrm_core::{
    run_simulation, DesignConfig, DesignKind, DoseLevel, PatientRecord, PriorSpec, Scenario, SimJob, Skeleton, Stream,
    ToxicityTarget, TrialState, WeightedObservation,
};

use super::oracles::unweighted_likelihood;

pub type Check = fn() -> Result<(), String>;

/// Every property, by name.
pub fn all() -> Vec<(&'static str, Check)> {
    vec![
        ("weight monotonicity", weight_monotonicity),
        ("model monotonicity", model_monotonicity),
        ("likelihood factorization", likelihood_factorization),
        ("complete-data likelihood reduction", complete_data_reduction),
        ("data monotonicity of dose selection", data_monotonicity),
        ("decision determinism", decision_determinism),
        ("escalation bound", escalation_bound),
        ("PRO dominance", pro_dominance),
        ("comparator assignment identity", comparator_identity),
        ("complete-data coincidence", complete_data_coincidence),
        ("small-state enumeration", small_state_enumeration),
        ("simulation determinism and thread invariance", simulation_determinism),
        ("patient conservation", conservation),
        ("top-dose scenario has no overdoses", top_dose_no_overdose),
        ("comparator column identity", comparator_columns),
        ("store replay and persist round-trip", store_round_trip),
        ("store facade purity", facade_purity),
        ("store append-only", append_only),
    ]
}

fn run<S: Strategy>(
    cases: u32,
    strategy: S,
    test: impl Fn(S::Value) -> Result<(), TestCaseError>,
) -> Result<(), String> {
    let config = Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    };
    let rng = TestRng::deterministic_rng(config.rng_algorithm);
    TestRunner::new_with_rng(config, rng).run(&strategy, test).map_err(|e| e.to_string())
}

fn skeleton_strategy() -> impl Strategy<Value = Skeleton> {
    prop::collection::vec(0.02f64..0.9, 2..=6).prop_map(|mut v| {
        v.sort_by(f64::total_cmp);
        for i in 1..v.len() {
            if v[i] <= v[i - 1] + 1e-3 {
                v[i] = v[i - 1] + 1e-2;
            }
        }
        Skeleton::new(v).unwrap()
    })
}

fn obs_strategy(max: usize) -> impl Strategy<Value = Vec<(usize, f64, bool)>> {
    prop::collection::vec((0usize..6, 0.0f64..=1.0, any::<bool>()), 0..max)
}

fn to_obs(raw: &[(usize, f64, bool)], levels: usize, complete: bool) -> Vec<WeightedObservation> {
    raw.iter()
        .map(|&(d, w, y)| {
            let w = if complete || y { 1.0 } else { w };
            WeightedObservation::new(DoseLevel::from_index(d % levels), w, y).unwrap()
        })
        .collect()
}

pub fn weight_monotonicity() -> Result<(), String> {
    run(512, (0.0f64..20.0, 0.0f64..20.0, 0.5f64..12.0, any::<bool>()), |(a, b, window, dlt)| {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let wl = follow_up_weight(lo, window, dlt).unwrap();
        let wh = follow_up_weight(hi, window, dlt).unwrap();
        prop_assert!(wl <= wh);
        prop_assert!((0.0..=1.0).contains(&wl));
        if hi >= window || dlt {
            prop_assert_eq!(wh, 1.0);
        }
        Ok(())
    })
}

pub fn model_monotonicity() -> Result<(), String> {
    run(512, (skeleton_strategy(), -3.0f64..3.0), |(sk, b)| {
        let curve = sk.curve(b);
        prop_assert!(curve.windows(2).all(|w| w[0] < w[1]), "{curve:?}");
        prop_assert!(curve.iter().all(|&p| p > 0.0 && p < 1.0));
        for (p, &u) in curve.iter().zip(sk.values()) {
            prop_assert_eq!(*p, model_probability(u, b));
        }
        Ok(())
    })
}

pub fn likelihood_factorization() -> Result<(), String> {
    run(512, (skeleton_strategy(), obs_strategy(20), obs_strategy(20), -3.0f64..3.0), |(sk, a, b, param)| {
        let a = to_obs(&a, sk.len(), false);
        let b = to_obs(&b, sk.len(), false);
        let both: Vec<_> = a.iter().chain(&b).cloned().collect();
        let (la, lb, lab) = (
            log_weighted_likelihood(param, &a, &sk).unwrap(),
            log_weighted_likelihood(param, &b, &sk).unwrap(),
            log_weighted_likelihood(param, &both, &sk).unwrap(),
        );
        prop_assert!((lab - (la + lb)).abs() <= 1e-9 * (1.0 + lab.abs()), "{lab} vs {la} + {lb}");
        let (pa, pb, pab) = (
            weighted_likelihood(param, &a, &sk).unwrap(),
            weighted_likelihood(param, &b, &sk).unwrap(),
            weighted_likelihood(param, &both, &sk).unwrap(),
        );
        prop_assert!((pab - pa * pb).abs() <= 1e-12 * pab.max(f64::MIN_POSITIVE) + 1e-300);
        Ok(())
    })
}

pub fn complete_data_reduction() -> Result<(), String> {
    run(512, (skeleton_strategy(), obs_strategy(30), -3.0f64..3.0), |(sk, raw, param)| {
        let obs = to_obs(&raw, sk.len(), true);
        let plain: Vec<(DoseLevel, bool)> = obs.iter().map(|o| (o.dose, o.dlt)).collect();
        let got = weighted_likelihood(param, &obs, &sk).unwrap();
        let want = unweighted_likelihood(param, &plain, &sk);
        prop_assert!((got - want).abs() <= 1e-12 * want + 1e-300, "{got} vs {want}");
        Ok(())
    })
}

pub fn data_monotonicity() -> Result<(), String> {
    let s = (skeleton_strategy(), obs_strategy(25), 0.3f64..1.2, 0.1f64..0.6);
    run(256, s, |(sk, raw, sd, target)| {
        let prior = PriorSpec::centered(sd).unwrap();
        let target = ToxicityTarget::new(target).unwrap();
        let obs = to_obs(&raw, sk.len(), false);
        let base = select_dose(&sk, posterior_mean(&prior, &obs, &sk).unwrap(), target);

        let mut more_tox = obs.clone();
        more_tox.push(WeightedObservation::complete(sk.highest(), true));
        let down = select_dose(&sk, posterior_mean(&prior, &more_tox, &sk).unwrap(), target);
        prop_assert!(down <= base, "DLT at top dose moved {base} to {down}");

        let mut more_safe = obs;
        more_safe.push(WeightedObservation::complete(base, false));
        let up = select_dose(&sk, posterior_mean(&prior, &more_safe, &sk).unwrap(), target);
        prop_assert!(up >= base, "non-DLT at {base} moved to {up}");
        Ok(())
    })
}

fn kind_strategy() -> impl Strategy<Value = DesignKind> {
    prop::sample::select(DesignKind::ALL.to_vec())
}

type RawPatient = (f64, u32, Option<f64>, Option<f64>);

fn patients_strategy(max: usize) -> impl Strategy<Value = Vec<RawPatient>> {
    prop::collection::vec(
        (0.0f64..6.0, 1u32..=5, prop::option::of(0.1f64..10.0), prop::option::of(0.1f64..10.0)),
        0..max,
    )
}

/// State with arbitrary (not necessarily design-chosen) doses.
fn build_state(config: DesignConfig, raw: &[RawPatient], extra: f64) -> TrialState {
    let mut state = TrialState::new(config);
    let mut t = 0.0;
    for (i, &(gap, dose, c, p)) in raw.iter().enumerate() {
        if i > 0 {
            t += gap;
        }
        state.now = t;
        let mut rec = PatientRecord::new(i as u32 + 1, t, DoseLevel::new(dose).unwrap());
        rec.set_event_time(Stream::Clinician, c);
        rec.set_event_time(Stream::Patient, p);
        state.enroll(rec).unwrap();
    }
    state.now = t + extra;
    state
}

fn state_strategy() -> impl Strategy<Value = TrialState> {
    (kind_strategy(), patients_strategy(18), 0.0f64..8.0)
        .prop_map(|(kind, raw, extra)| build_state(reference_design(kind, 18).unwrap(), &raw, extra))
}

pub fn decision_determinism() -> Result<(), String> {
    run(128, state_strategy(), |state| {
        let a = next_dose(&state).unwrap();
        prop_assert_eq!(a, next_dose(&state.clone()).unwrap());
        prop_assert_eq!(a, next_assignment(&state).unwrap().dose);
        let mut done = state.clone();
        done.config.n_max = done.patients.len().max(1);
        done.now += done.config.window + 10.0;
        if done.patients.len() == done.config.n_max {
            prop_assert_eq!(final_recommendation(&done).unwrap(), final_recommendation(&done.clone()).unwrap());
        }
        Ok(())
    })
}

pub fn escalation_bound() -> Result<(), String> {
    run(256, state_strategy(), |state| {
        let d = next_dose(&state).unwrap();
        match state.highest_tried() {
            None => prop_assert_eq!(d, state.config.start_dose),
            Some(h) => prop_assert!(d <= h.next_up(), "{d} after highest {h}"),
        }
        Ok(())
    })
}

pub fn pro_dominance() -> Result<(), String> {
    run(256, state_strategy(), |state| {
        let pro = next_assignment(&TrialState {
            config: state.config.clone().with_kind(DesignKind::TiteProCrm),
            ..state.clone()
        })
        .unwrap();
        let clin = next_assignment(&TrialState {
            config: state.config.clone().with_kind(DesignKind::TiteCrm),
            ..state.clone()
        })
        .unwrap();
        prop_assert!(pro.model_choice <= clin.model_choice);
        prop_assert!(pro.dose <= clin.dose);
        Ok(())
    })
}

fn scenario_strategy() -> impl Strategy<Value = Scenario> {
    let probs = || {
        prop::collection::vec(0.0f64..0.8, 5).prop_map(|mut v| {
            v.sort_by(f64::total_cmp);
            v
        })
    };
    (probs(), probs(), prop::sample::select(vec![0.3, 1.0, 3.0]), 0.0f64..2.0, 1.0f64..5.0)
        .prop_map(|(c, p, k, theta, acc)| Scenario::new("random", c, p, k, theta, acc).unwrap())
}

pub fn comparator_identity() -> Result<(), String> {
    run(48, (scenario_strategy(), any::<u64>(), prop::sample::select(vec![18usize, 30])), |(sc, seed, n)| {
        let streams = ReplicateStreams::new(seed, 0);
        let a = run_trial(&reference_design(DesignKind::TiteCrm, n).unwrap(), &sc, &streams).unwrap();
        let b = run_trial(&reference_design(DesignKind::TiteCrmPlusPro, n).unwrap(), &sc, &streams).unwrap();
        prop_assert_eq!(&a.doses, &b.doses);
        prop_assert_eq!(&a.entry_times, &b.entry_times);
        prop_assert_eq!(&a.clin_dlt, &b.clin_dlt);
        prop_assert_eq!(&a.pat_dlt, &b.pat_dlt);
        prop_assert!(b.final_dose <= a.final_dose);
        Ok(())
    })
}

pub fn complete_data_coincidence() -> Result<(), String> {
    run(256, (patients_strategy(18), 0.0f64..5.0), |(raw, extra)| {
        let tite = build_state(reference_design(DesignKind::TiteProCrm, 18).unwrap(), &raw, 0.0);
        let last = tite.patients.last().map_or(0.0, |p| p.entry_time);
        let now = last + tite.config.window + extra;
        let tite = TrialState { now, ..tite };
        let pro = TrialState {
            config: tite.config.clone().with_kind(DesignKind::ProCrm),
            ..tite.clone()
        };
        prop_assert_eq!(next_dose(&tite).unwrap(), next_dose(&pro).unwrap());
        let (mut tf, mut pf) = (tite.clone(), pro.clone());
        tf.config.n_max = tf.patients.len().max(1);
        pf.config.n_max = tf.config.n_max;
        if tf.patients.len() == tf.config.n_max {
            prop_assert_eq!(final_recommendation(&tf).unwrap(), final_recommendation(&pf).unwrap());
        }
        Ok(())
    })
}

/// Every trajectory of a three-patient trial in which each patient has no
/// toxicity, a clinician DLT, a patient DLT or both, one week after entry.
pub fn small_state_enumeration() -> Result<(), String> {
    let outcomes = [(false, false), (true, false), (false, true), (true, true)];
    for kind in DesignKind::ALL {
        let mut config = reference_design(kind, 18).unwrap();
        config.n_max = 3;
        let mut visited = 0;
        for code in 0..64usize {
            let mut state = TrialState::new(config.clone());
            let mut clin_only = TrialState::new(config.clone().with_kind(DesignKind::TiteCrm));
            for i in 0..3 {
                let entry = 2.5 * i as f64;
                state.now = entry;
                clin_only.now = entry;
                let dose = next_dose(&state).map_err(|e| e.to_string())?;
                let a = next_assignment(&state).map_err(|e| e.to_string())?;
                let c = next_assignment(&clin_only).map_err(|e| e.to_string())?;
                let bound = state.highest_tried().map_or(config.start_dose, DoseLevel::next_up);
                if dose > bound || a.dose != dose || (i > 0 && a.model_choice > c.model_choice) {
                    return Err(format!("{kind} trajectory {code} patient {}: dose {dose}, bound {bound}", i + 1));
                }
                let (yc, yp) = outcomes[(code >> (2 * i)) & 3];
                let mut rec = PatientRecord::new(i as u32 + 1, entry, dose);
                rec.set_event_time(Stream::Clinician, yc.then_some(1.0));
                rec.set_event_time(Stream::Patient, yp.then_some(1.0));
                state.enroll(rec.clone()).map_err(|e| e.to_string())?;
                clin_only.enroll(rec).map_err(|e| e.to_string())?;
                visited += 1;
            }
            state.now = 20.0;
            let obs = snapshot_observations(&state, Stream::Clinician);
            if obs.iter().any(|o| o.weight != 1.0) {
                return Err(format!("{kind} trajectory {code}: incomplete weights after follow-up"));
            }
            let fin = final_recommendation(&state).map_err(|e| e.to_string())?;
            clin_only.now = 20.0;
            let fin_clin = final_recommendation(&clin_only).map_err(|e| e.to_string())?;
            if kind.recommends_with_patient_outcomes() && fin > fin_clin {
                return Err(format!("{kind} trajectory {code}: final {fin} above clinician-only {fin_clin}"));
            }
        }
        assert_eq!(visited, 192);
    }
    Ok(())
}

fn job_strategy(max_reps: usize) -> impl Strategy<Value = SimJob> {
    (1usize..=7, kind_strategy(), 1usize..=max_reps, any::<u64>()).prop_map(|(sc, kind, reps, seed)| {
        SimJob::new(reference_scenario(sc).unwrap(), reference_design(kind, 18).unwrap(), reps, seed).unwrap()
    })
}

pub fn simulation_determinism() -> Result<(), String> {
    let pools: Vec<rayon::ThreadPool> = [1, 4]
        .into_iter()
        .map(|n| rayon::ThreadPoolBuilder::new().num_threads(n).build().unwrap())
        .collect();
    run(12, job_strategy(24), |job| {
        let one = pools[0].install(|| run_simulation(&job)).unwrap();
        let four = pools[1].install(|| run_simulation(&job)).unwrap();
        prop_assert_eq!(&one, &four);
        prop_assert_eq!(&one, &run_simulation(&job).unwrap());
        Ok(())
    })
}

pub fn conservation() -> Result<(), String> {
    run(16, job_strategy(24), |job| {
        let results = simulate_replicates(&job).unwrap();
        let oc = summarize(&job, &results);
        let best = oc.true_optimal_dose.unwrap();
        let mut below_total = 0usize;
        for r in &results {
            prop_assert_eq!(r.doses.len(), job.design.n_max);
            let below = r.doses.iter().filter(|&&d| d < best).count();
            let at = r.doses.iter().filter(|&&d| d == best).count();
            let above = r.doses.iter().filter(|&&d| d > best).count();
            prop_assert_eq!(below + at + above, job.design.n_max);
            below_total += below;
        }
        let mean_below = below_total as f64 / results.len() as f64;
        let total = oc.mean_overdose_patients + oc.mean_mtd_patients + mean_below;
        prop_assert!((total - job.design.n_max as f64).abs() < 1e-9);
        prop_assert!((oc.selection_pct.iter().sum::<f64>() - 100.0).abs() < 1e-9);
        Ok(())
    })
}

pub fn top_dose_no_overdose() -> Result<(), String> {
    for n in [18, 40] {
        for kind in DesignKind::ALL {
            let job = SimJob::new(reference_scenario(3).unwrap(), reference_design(kind, n).unwrap(), 200, 31).unwrap();
            let oc = run_simulation(&job).map_err(|e| e.to_string())?;
            if oc.mean_overdose_patients != 0.0 {
                return Err(format!("{kind} n={n}: No. OD {}", oc.mean_overdose_patients));
            }
        }
    }
    Ok(())
}

pub fn comparator_columns() -> Result<(), String> {
    run(8, (1usize..=7, any::<u64>(), prop::sample::select(vec![18usize, 40])), |(sc, seed, n)| {
        let job = |kind| {
            SimJob::new(reference_scenario(sc).unwrap(), reference_design(kind, n).unwrap(), 60, seed).unwrap()
        };
        let (ja, jb) = (job(DesignKind::TiteCrm), job(DesignKind::TiteCrmPlusPro));
        let (ra, rb) = (simulate_replicates(&ja).unwrap(), simulate_replicates(&jb).unwrap());
        for (a, b) in ra.iter().zip(&rb) {
            prop_assert!(b.final_dose <= a.final_dose);
        }
        let (a, b) = (summarize(&ja, &ra), summarize(&jb, &rb));
        prop_assert_eq!(a.mean_overdose_patients, b.mean_overdose_patients);
        prop_assert_eq!(a.mean_mtd_patients, b.mean_mtd_patients);
        prop_assert_eq!(a.mean_clin_dlt, b.mean_clin_dlt);
        prop_assert_eq!(a.mean_pat_dlt, b.mean_pat_dlt);
        prop_assert_eq!(a.mean_duration_weeks, b.mean_duration_weeks);
        Ok(())
    })
}

/// Instructions interpreted into a valid event sequence.
#[derive(Debug, Clone)]
pub enum Action {
    Advance(f64),
    Enroll { override_dose: Option<u32> },
    Report { patient: usize, stream: Stream, fraction: f64 },
}

fn action_strategy() -> impl Strategy<Value = Action> {
    prop_oneof![
        (0.0f64..4.0).prop_map(Action::Advance),
        prop::option::weighted(0.2, 1u32..=5).prop_map(|override_dose| Action::Enroll { override_dose }),
        (any::<usize>(), any::<bool>(), 0.01f64..=1.0).prop_map(|(patient, c, fraction)| Action::Report {
            patient,
            stream: if c { Stream::Clinician } else { Stream::Patient },
            fraction,
        }),
    ]
}

fn plan_strategy() -> impl Strategy<Value = (DesignConfig, Vec<Action>)> {
    (kind_strategy(), 1usize..=8, prop::collection::vec(action_strategy(), 0..40)).prop_map(|(kind, n_max, actions)| {
        let mut config = reference_design(kind, 18).unwrap();
        config.n_max = n_max;
        (config, actions)
    })
}

fn doc_strategy() -> impl Strategy<Value = (TrialDocument, f64)> {
    (plan_strategy(), 0.0f64..10.0).prop_map(|((config, actions), ahead)| (drive(config, &actions), ahead))
}

/// Applies the actions that are valid in the current state, skipping the rest.
pub fn drive(config: DesignConfig, actions: &[Action]) -> TrialDocument {
    let mut doc = TrialDocument::create("generated", config, 0.0).unwrap();
    for action in actions {
        let state = doc.state().unwrap().clone();
        let now = state.now;
        let event = match *action {
            Action::Advance(dt) => EventKind::FollowupClockAdvanced { now: now + dt },
            Action::Enroll { override_dose } => {
                if state.is_full() {
                    continue;
                }
                let recommended = next_dose(&state).unwrap();
                let dose = override_dose.map_or(recommended, |d| DoseLevel::new(d).unwrap());
                EventKind::PatientEnrolled {
                    patient_id: state.patients.len() as u32 + 1,
                    dose,
                    override_note: (dose != recommended).then(|| "clinical judgement".to_string()),
                }
            }
            Action::Report { patient, stream, fraction } => {
                if state.patients.is_empty() {
                    continue;
                }
                let p = &state.patients[patient % state.patients.len()];
                if p.event_time(stream).is_some() || now <= p.entry_time {
                    continue;
                }
                EventKind::OutcomeReported {
                    patient_id: p.id,
                    stream,
                    event_time: p.entry_time + fraction * (now - p.entry_time),
                }
            }
        };
        let at = match &event {
            EventKind::FollowupClockAdvanced { now } => *now,
            _ => now,
        };
        doc.append(at, event, None).unwrap();
    }
    doc
}

pub fn store_round_trip() -> Result<(), String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    run(128, doc_strategy(), |(doc, _)| {
        let text = doc.to_json();
        let back = TrialDocument::from_json(&text).unwrap();
        prop_assert_eq!(back.events(), doc.events());
        prop_assert_eq!(back.state(), doc.state());
        prop_assert_eq!(back.to_json(), text);
        let replayed = TrialDocument::replay("generated", doc.events().to_vec()).unwrap();
        prop_assert_eq!(replayed.state(), doc.state());
        let path = doc.persist(dir.path()).unwrap();
        let loaded = TrialDocument::load_path(&path).unwrap();
        prop_assert_eq!(loaded.state(), doc.state());
        prop_assert_eq!(loaded.events(), doc.events());
        Ok(())
    })
}

pub fn facade_purity() -> Result<(), String> {
    run(128, doc_strategy(), |(doc, ahead)| {
        let replayed = TrialDocument::replay("generated", doc.events().to_vec()).unwrap();
        let mut state = replayed.state().unwrap().clone();
        state.now += ahead;
        match doc.recommendation(Some(state.now)) {
            Ok(Recommendation::NextDose { assignment, .. }) => {
                prop_assert_eq!(assignment.dose, next_dose(&state).unwrap());
                prop_assert_eq!(assignment, next_assignment(&state).unwrap());
            }
            Ok(Recommendation::Final { selection, .. }) => {
                prop_assert_eq!(selection.dose, final_recommendation(&state).unwrap());
            }
            Err(e) => {
                prop_assert!(state.is_full() && !state.follow_up_complete(), "unexpected {e}");
                prop_assert!(final_recommendation(&state).is_err());
            }
        }
        Ok(())
    })
}

pub fn append_only() -> Result<(), String> {
    let extra = prop::collection::vec(action_strategy(), 1..6);
    run(64, (plan_strategy(), extra), |((config, actions), extra)| {
        let short = drive(config.clone(), &actions);
        let all: Vec<Action> = actions.iter().chain(&extra).cloned().collect();
        let mut long = drive(config, &all);
        let n = short.events().len();
        prop_assert_eq!(&long.events()[..n], short.events());
        let a: serde_json::Value = serde_json::from_str(&short.to_json()).unwrap();
        let b: serde_json::Value = serde_json::from_str(&long.to_json()).unwrap();
        prop_assert_eq!(&b["events"].as_array().unwrap()[..n], &a["events"].as_array().unwrap()[..]);
        // Rewriting history is refused.
        let old = long.events()[n - 1].clone();
        let last = long.last_seq();
        prop_assert!(long.apply(old).is_err());
        prop_assert_eq!(long.last_seq(), last);
        Ok(())
    })
}
