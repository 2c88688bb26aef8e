//! `procrm` command-line interface.

pub mod documents;
pub mod report;

use std::fmt;
use std::fs;
use std::io::{self, Write};
use std::net::IpAddr;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};

use procrm_core::presets::reference_design;
use procrm_core::store::TrialDocument;
use procrm_core::{run_simulation, DesignConfig, DesignKind, OperatingCharacteristics, Scenario, SimJob};
use procrm_service::ServiceConfig;

/// Failure classes, each with its own exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad input: exit code 2.
    Validation(String),
    /// Engine, numerical or I/O failure: exit code 3.
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Validation(m) | CliError::Runtime(m) => f.write_str(m),
        }
    }
}

impl From<procrm_core::Error> for CliError {
    fn from(e: procrm_core::Error) -> Self {
        use procrm_core::Error as E;
        match e {
            E::InvalidConfig(_) | E::Validation { .. } | E::Conflict { .. } | E::Integrity { .. } => {
                CliError::Validation(e.to_string())
            }
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

fn io_err(context: impl fmt::Display) -> impl FnOnce(io::Error) -> CliError {
    move |e| CliError::Runtime(format!("{context}: {e}"))
}

#[derive(Debug, Parser)]
#[command(name = "procrm", version, about = "Dose finding with clinician- and patient-reported toxicity")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Axis {
    Accrual,
    Shape,
    Theta,
}

impl Axis {
    fn default_values(self) -> Vec<f64> {
        match self {
            Axis::Accrual => vec![2.0, 4.0],
            Axis::Shape => vec![1.0, 0.3, 3.0],
            Axis::Theta => vec![0.1, 0.9],
        }
    }

    fn name(self) -> &'static str {
        match self {
            Axis::Accrual => "accrual",
            Axis::Shape => "shape",
            Axis::Theta => "theta",
        }
    }

    fn apply(self, scenario: Scenario, value: f64) -> procrm_core::Result<Scenario> {
        match self {
            Axis::Accrual => scenario.with_accrual(value),
            Axis::Shape => scenario.with_hazard_shape(value),
            Axis::Theta => scenario.with_copula_theta(value),
        }
    }
}

fn parse_kind(s: &str) -> Result<DesignKind, String> {
    s.parse().map_err(|e: procrm_core::Error| e.to_string())
}

/// Options shared by the simulation commands.
#[derive(Debug, clap::Args)]
pub struct GridArgs {
    /// Scenarios document.
    #[arg(long, env = "PROCRM_SCENARIOS")]
    pub scenarios: PathBuf,
    /// Restrict to these scenario names.
    #[arg(long, value_delimiter = ',')]
    pub only: Vec<String>,
    /// Designs to run (tite_crm, pro_crm, tite_pro_crm, tite_crm_plus_pro).
    #[arg(long, value_delimiter = ',', value_parser = parse_kind, default_value = "tite_crm,pro_crm,tite_pro_crm,tite_crm_plus_pro")]
    pub designs: Vec<DesignKind>,
    #[arg(long, default_value_t = 2000, env = "PROCRM_REPLICATES")]
    pub replicates: usize,
    #[arg(long, default_value_t = 1, env = "PROCRM_SEED")]
    pub seed: u64,
    /// Calibrated reference sample size (18, 30 or 40).
    #[arg(long, default_value_t = 18, conflicts_with = "config")]
    pub n: usize,
    /// Design document used instead of the calibrated reference; its kind is replaced by each of --designs.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Worker threads for replicates; 0 uses every core.
    #[arg(long, default_value_t = 0, env = "PROCRM_THREADS")]
    pub threads: usize,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Operating characteristics for every scenario and design.
    Simulate {
        #[command(flatten)]
        grid: GridArgs,
        /// Output directory for per-cell files and the combined table.
        #[arg(long)]
        out: PathBuf,
    },
    /// Correct-selection percentage across one simulation setting.
    Sensitivity {
        #[arg(long, value_enum)]
        axis: Axis,
        /// Axis values; defaults to accrual 2,4 or shape 1,0.3,3 or theta 0.1,0.9.
        #[arg(long, value_delimiter = ',')]
        values: Vec<f64>,
        #[command(flatten)]
        grid: GridArgs,
        /// Output file; stdout if omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the trial-conduct HTTP service.
    Serve {
        #[arg(long, default_value = "127.0.0.1", env = "PROCRM_BIND")]
        bind: IpAddr,
        #[arg(long, default_value_t = procrm_service::DEFAULT_PORT, env = "PROCRM_PORT")]
        port: u16,
        #[arg(long, default_value = "trials", env = "PROCRM_DATA_DIR")]
        data_dir: PathBuf,
        /// Simulation jobs run concurrently.
        #[arg(long, default_value_t = 2, env = "PROCRM_WORKERS")]
        workers: usize,
        /// Built UI assets to serve at `/`.
        #[arg(long, env = "PROCRM_STATIC_DIR")]
        static_dir: Option<PathBuf>,
    },
    /// Check a scenarios, design, sim-job or trial document.
    Validate { file: PathBuf },
    /// Next dose (or final selection) for a persisted trial.
    Recommend {
        #[arg(long)]
        trial: PathBuf,
        /// Trial clock in weeks; defaults to the last recorded time.
        #[arg(long)]
        at: Option<f64>,
    },
    /// Write the bundled reference documents.
    Presets {
        #[arg(long)]
        out: PathBuf,
    },
}

pub fn run<W: Write>(cli: Cli, stdout: &mut W) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate { grid, out } => simulate(&grid, &out, stdout),
        Command::Sensitivity { axis, values, grid, out } => sensitivity(axis, values, &grid, out.as_deref(), stdout),
        Command::Serve { bind, port, data_dir, workers, static_dir } => serve(ServiceConfig {
            bind,
            port,
            data_dir,
            workers: workers.max(1),
            static_dir,
        }),
        Command::Validate { file } => {
            let text = documents::read(&file)?;
            let doc = documents::in_file(&file, documents::parse(&text))?;
            writeln!(stdout, "ok: {} ({})", doc.schema(), doc.summary()).map_err(io_err("stdout"))
        }
        Command::Recommend { trial, at } => {
            let text = documents::read(&trial)?;
            let doc = documents::in_file(&trial, TrialDocument::from_json(&text).map_err(CliError::from))?;
            let rec = doc.recommendation(at)?;
            let json = serde_json::to_string_pretty(&rec).expect("recommendations serialize");
            writeln!(stdout, "{json}").map_err(io_err("stdout"))
        }
        Command::Presets { out } => {
            fs::create_dir_all(&out).map_err(io_err(out.display()))?;
            for (name, body) in documents::bundled() {
                let path = out.join(&name);
                fs::write(&path, body).map_err(io_err(path.display()))?;
                writeln!(stdout, "{}", path.display()).map_err(io_err("stdout"))?;
            }
            Ok(())
        }
    }
}

struct Grid {
    scenarios: Vec<Scenario>,
    base: DesignConfig,
    pool: rayon::ThreadPool,
}

fn load_grid(args: &GridArgs) -> Result<Grid, CliError> {
    let text = documents::read(&args.scenarios)?;
    let mut scenarios = documents::in_file(&args.scenarios, documents::parse_scenarios(&text))?;
    if !args.only.is_empty() {
        if let Some(missing) = args.only.iter().find(|n| !scenarios.iter().any(|s| &s.name == *n)) {
            return Err(CliError::Validation(format!("no scenario named {missing:?} in {}", args.scenarios.display())));
        }
        scenarios.retain(|s| args.only.contains(&s.name));
    }
    let base = match &args.config {
        Some(path) => documents::in_file(path, documents::parse_design(&documents::read(path)?))?,
        None => reference_design(DesignKind::TiteProCrm, args.n)?,
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.threads)
        .build()
        .map_err(|e| CliError::Runtime(format!("thread pool: {e}")))?;
    Ok(Grid { scenarios, base, pool })
}

impl Grid {
    fn job(&self, scenario: Scenario, kind: DesignKind, args: &GridArgs) -> Result<SimJob, CliError> {
        Ok(SimJob::new(scenario, self.base.clone().with_kind(kind), args.replicates, args.seed)?)
    }

    fn run(&self, job: &SimJob) -> Result<OperatingCharacteristics, CliError> {
        Ok(self.pool.install(|| run_simulation(job))?)
    }
}

fn to_json<T: serde::Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("results serialize");
    s.push('\n');
    s
}

fn write_file(path: &Path, body: &[u8]) -> Result<(), CliError> {
    fs::write(path, body).map_err(io_err(path.display()))
}

fn csv_bytes(header: &[String], rows: &[Vec<String>]) -> Result<Vec<u8>, CliError> {
    let mut buf = Vec::new();
    report::write_csv(&mut buf, header, rows)?;
    Ok(buf)
}

fn simulate<W: Write>(args: &GridArgs, out: &Path, stdout: &mut W) -> Result<(), CliError> {
    let grid = load_grid(args)?;
    let jobs = grid
        .scenarios
        .iter()
        .flat_map(|s| args.designs.iter().map(move |&k| (s.clone(), k)))
        .map(|(s, k)| grid.job(s, k, args))
        .collect::<Result<Vec<_>, _>>()?;
    fs::create_dir_all(out).map_err(io_err(out.display()))?;

    let header = report::oc_header(grid.base.dose_count());
    let mut all = Vec::with_capacity(jobs.len());
    for job in &jobs {
        let oc = grid.run(job)?;
        let stem = format!("{}_{}", oc.scenario, oc.design.slug());
        match args.format {
            Format::Csv => write_file(
                &out.join(format!("{stem}.csv")),
                &csv_bytes(&header, &[report::oc_record(&oc)])?,
            )?,
            Format::Json => write_file(&out.join(format!("{stem}.json")), to_json(&oc).as_bytes())?,
        }
        writeln!(
            stdout,
            "{:<12} {:<16} pcs {:>5}  od {:>5}  mtd {:>5}  weeks {:>6}",
            oc.scenario,
            oc.design.label(),
            report::pct(oc.pcs),
            report::mean(oc.mean_overdose_patients),
            report::mean(oc.mean_mtd_patients),
            report::mean(oc.mean_duration_weeks)
        )
        .map_err(io_err("stdout"))?;
        all.push(oc);
    }
    match args.format {
        Format::Csv => {
            let rows: Vec<_> = all.iter().map(report::oc_record).collect();
            write_file(&out.join("table.csv"), &csv_bytes(&header, &rows)?)
        }
        Format::Json => write_file(&out.join("table.json"), to_json(&all).as_bytes()),
    }
}

#[derive(serde::Serialize)]
struct SensitivityCell {
    axis: &'static str,
    value: f64,
    result: OperatingCharacteristics,
}

fn sensitivity<W: Write>(
    axis: Axis,
    values: Vec<f64>,
    args: &GridArgs,
    out: Option<&Path>,
    stdout: &mut W,
) -> Result<(), CliError> {
    let grid = load_grid(args)?;
    let values = if values.is_empty() { axis.default_values() } else { values };
    let mut cells = Vec::new();
    for scenario in &grid.scenarios {
        for &kind in &args.designs {
            for &value in &values {
                let varied = axis.apply(scenario.clone(), value)?;
                let job = grid.job(varied, kind, args)?;
                cells.push(SensitivityCell { axis: axis.name(), value, result: grid.run(&job)? });
            }
        }
    }
    let body = match args.format {
        Format::Csv => {
            let rows: Vec<Vec<String>> = cells
                .iter()
                .map(|c| {
                    vec![
                        c.result.scenario.clone(),
                        c.result.design.slug().to_string(),
                        c.result.n_max.to_string(),
                        c.axis.to_string(),
                        c.value.to_string(),
                        report::pct(c.result.pcs),
                    ]
                })
                .collect();
            csv_bytes(&report::sensitivity_header(), &rows)?
        }
        Format::Json => to_json(&cells).into_bytes(),
    };
    match out {
        Some(path) => write_file(path, &body),
        None => stdout.write_all(&body).map_err(io_err("stdout")),
    }
}

fn serve(config: ServiceConfig) -> Result<(), CliError> {
    let _ = tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .try_init();
    let runtime = tokio::runtime::Runtime::new().map_err(io_err("tokio runtime"))?;
    runtime.block_on(procrm_service::serve(config)).map_err(io_err("service"))
}
