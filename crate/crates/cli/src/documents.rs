//! Versioned configuration documents read and written by the CLI.
//!
//! Every file is a JSON object with a `schema` tag and `version: "1"`:
//!
//! | schema      | payload                           |
//! |-------------|-----------------------------------|
//! | `scenarios` | `scenarios: [Scenario, ...]`      |
//! | `design`    | `design: DesignConfig`            |
//! | `sim-job`   | `job: SimJob`                     |
//! | `trial`     | persisted trial event log         |

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use procrm_core::presets::{reference_design, reference_scenarios, SAMPLE_SIZES};
use procrm_core::store::{validate_trial_id, TrialDocument};
use procrm_core::{DesignConfig, DesignKind, Scenario, SimJob};

use crate::CliError;

pub const VERSION: &str = "1";

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenariosFile {
    schema: String,
    version: String,
    scenarios: Vec<Scenario>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DesignFile {
    schema: String,
    version: String,
    design: DesignConfig,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SimJobFile {
    schema: String,
    version: String,
    job: SimJob,
}

#[derive(Debug)]
pub enum Document {
    Scenarios(Vec<Scenario>),
    Design(DesignConfig),
    SimJob(SimJob),
    Trial(TrialDocument),
}

impl Document {
    pub fn schema(&self) -> &'static str {
        match self {
            Document::Scenarios(_) => "scenarios",
            Document::Design(_) => "design",
            Document::SimJob(_) => "sim-job",
            Document::Trial(_) => "trial",
        }
    }

    pub fn summary(&self) -> String {
        match self {
            Document::Scenarios(s) => format!("{} scenarios", s.len()),
            Document::Design(d) => format!("{} with n_max {}", d.kind.label(), d.n_max),
            Document::SimJob(j) => format!(
                "{} on {}, {} replicates",
                j.design.kind.label(),
                j.scenario.name,
                j.n_replicates
            ),
            Document::Trial(t) => format!("trial {} with {} events", t.trial_id(), t.last_seq()),
        }
    }
}

fn typed<T: DeserializeOwned>(text: &str) -> Result<T, CliError> {
    serde_json::from_str(text).map_err(|e| CliError::Validation(e.to_string()))
}

fn check_header(schema: &str, version: &str, expected: &str) -> Result<(), CliError> {
    if schema != expected {
        return Err(CliError::Validation(format!("expected schema \"{expected}\", found \"{schema}\"")));
    }
    if version != VERSION {
        return Err(CliError::Validation(format!(
            "unsupported {schema} version \"{version}\"; this build reads version \"{VERSION}\""
        )));
    }
    Ok(())
}

/// Scenario names become file names, so they must be unique and path-safe.
fn check_scenario_names(scenarios: &[Scenario]) -> Result<(), CliError> {
    if scenarios.is_empty() {
        return Err(CliError::Validation("scenarios list is empty".into()));
    }
    let mut seen = HashSet::new();
    for (i, s) in scenarios.iter().enumerate() {
        validate_trial_id(&s.name)
            .map_err(|_| CliError::Validation(format!("scenario {} name {:?} must match [A-Za-z0-9_-]{{1,128}}", i + 1, s.name)))?;
        if !seen.insert(&s.name) {
            return Err(CliError::Validation(format!("duplicate scenario name {:?}", s.name)));
        }
    }
    Ok(())
}

/// Parses any supported document, dispatching on its `schema` field.
pub fn parse(text: &str) -> Result<Document, CliError> {
    let value: Value = typed(text)?;
    let schema = value
        .get("schema")
        .and_then(Value::as_str)
        .ok_or_else(|| CliError::Validation("missing string field \"schema\"".into()))?;
    match schema {
        "scenarios" => parse_scenarios(text).map(Document::Scenarios),
        "design" => parse_design(text).map(Document::Design),
        "sim-job" => {
            let f: SimJobFile = typed(text)?;
            check_header(&f.schema, &f.version, "sim-job")?;
            Ok(Document::SimJob(f.job))
        }
        "trial" => TrialDocument::from_json(text)
            .map(Document::Trial)
            .map_err(|e| CliError::Validation(e.to_string())),
        other => Err(CliError::Validation(format!(
            "unknown schema \"{other}\"; expected scenarios, design, sim-job or trial"
        ))),
    }
}

pub fn parse_scenarios(text: &str) -> Result<Vec<Scenario>, CliError> {
    let f: ScenariosFile = typed(text)?;
    check_header(&f.schema, &f.version, "scenarios")?;
    check_scenario_names(&f.scenarios)?;
    Ok(f.scenarios)
}

pub fn parse_design(text: &str) -> Result<DesignConfig, CliError> {
    let f: DesignFile = typed(text)?;
    check_header(&f.schema, &f.version, "design")?;
    Ok(f.design)
}

pub fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Runtime(format!("cannot read {}: {e}", path.display())))
}

/// Prefixes parse errors with the file they came from.
pub fn in_file<T>(path: &Path, r: Result<T, CliError>) -> Result<T, CliError> {
    r.map_err(|e| match e {
        CliError::Validation(m) => CliError::Validation(format!("{}: {m}", path.display())),
        other => other,
    })
}

pub fn scenarios_json(scenarios: &[Scenario]) -> String {
    pretty(&ScenariosFile {
        schema: "scenarios".into(),
        version: VERSION.into(),
        scenarios: scenarios.to_vec(),
    })
}

pub fn design_json(design: &DesignConfig) -> String {
    pretty(&DesignFile {
        schema: "design".into(),
        version: VERSION.into(),
        design: design.clone(),
    })
}

pub fn sim_job_json(job: &SimJob) -> String {
    pretty(&SimJobFile {
        schema: "sim-job".into(),
        version: VERSION.into(),
        job: job.clone(),
    })
}

fn pretty<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("documents serialize");
    s.push('\n');
    s
}

/// File name and contents of every bundled reference document.
pub fn bundled() -> Vec<(String, String)> {
    let mut files = vec![("scenarios.json".to_string(), scenarios_json(&reference_scenarios()))];
    for n in SAMPLE_SIZES {
        let design = reference_design(DesignKind::TiteProCrm, n).expect("reference designs are valid");
        files.push((format!("design-n{n}.json"), design_json(&design)));
    }
    files
}
