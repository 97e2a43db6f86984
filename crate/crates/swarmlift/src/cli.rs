//! Command-line front end.
//!
//! Exit codes: 0 success, 1 failed assertion or bad input, 2 the simulation
//! produced a non-finite state (the partial trace is still written).

use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use swarmlift_core::worst_case::{gain_inequality, Gains, TensionModel, WorstCaseBudget, WorstCaseInputs};
use swarmlift_core::Error;

use crate::config::{self, ConfigError};
use crate::report::{check, summarize, summarize_run, Check, RunSummary};
use crate::serve::{serve, ServeOptions};
use crate::trace_io::{read_trace, write_trace};

pub const EXIT_OK: u8 = 0;
pub const EXIT_FAIL: u8 = 1;
pub const EXIT_NON_FINITE: u8 = 2;

#[derive(Debug, Parser)]
#[command(name = "swarmlift", version, about = "Formation flight simulator for a team of rotorcraft carrying a slung payload")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a scenario headless, write its trace and check its assertions.
    Run(RunArgs),
    /// Evaluate the worst-case force budget and the gain inequality.
    Analyze(AnalyzeArgs),
    /// Summarise a recorded trace.
    Replay(ReplayArgs),
    /// Run a scenario in real time behind the operator websocket.
    Serve(ServeArgs),
    /// List the bundled scenarios.
    Scenarios(ScenariosArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Scenario file, or the name of a bundled scenario.
    #[arg(long)]
    pub scenario: PathBuf,
    /// Trace output; `.csv` or `.jsonl`.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Override the noise seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Override the duration [s].
    #[arg(long)]
    pub duration: Option<f64>,
    /// Write the summary and checks as JSON to this file.
    #[arg(long)]
    pub summary: Option<PathBuf>,
    /// Print the summary as JSON instead of text.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TensionArg {
    Stated,
    Formula,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// Vehicle mass [kg].
    #[arg(long, default_value_t = WorstCaseInputs::default().m_vehicle)]
    pub vehicle_mass: f64,
    /// Payload mass [kg].
    #[arg(long, default_value_t = WorstCaseInputs::default().m_payload)]
    pub payload_mass: f64,
    /// Total thrust per vehicle [N].
    #[arg(long, default_value_t = WorstCaseInputs::default().f_max_total)]
    pub max_thrust: f64,
    /// Share of the payload weight carried by one vehicle.
    #[arg(long, default_value_t = WorstCaseInputs::default().share_fraction)]
    pub share: f64,
    /// [m]
    #[arg(long, default_value_t = WorstCaseInputs::default().rope_length)]
    pub rope_length: f64,
    /// Worst side length of the square [m].
    #[arg(long, default_value_t = WorstCaseInputs::default().z_side_worst)]
    pub worst_side: f64,
    /// [m/s]
    #[arg(long, default_value_t = WorstCaseInputs::default().max_speed)]
    pub max_speed: f64,
    /// [m]
    #[arg(long, default_value_t = WorstCaseInputs::default().max_edge_error)]
    pub max_edge_error: f64,
    /// Attitude clamp [rad].
    #[arg(long, default_value_t = WorstCaseInputs::default().attitude_limit)]
    pub attitude_limit: f64,
    /// [rad]
    #[arg(long, default_value_t = WorstCaseInputs::default().diagonal_angle)]
    pub diagonal_angle: f64,
    #[arg(long, default_value_t = WorstCaseInputs::default().diagonal_weight)]
    pub diagonal_weight: f64,
    #[arg(long, value_enum, default_value_t = TensionArg::Stated)]
    pub tension_model: TensionArg,
    /// Damping gain.
    #[arg(long, default_value_t = Gains::PAPER.c1)]
    pub c1: f64,
    /// Shape gain.
    #[arg(long, default_value_t = Gains::PAPER.c2)]
    pub c2: f64,
    /// Spin rate [rad/s].
    #[arg(long, default_value_t = Gains::PAPER.mu_r)]
    pub spin: f64,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    #[arg(long)]
    pub trace: PathBuf,
    /// Check the assertions of this scenario against the trace.
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub scenario: PathBuf,
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub bind: String,
    /// Simulated seconds per wall-clock second.
    #[arg(long, default_value_t = 1.0)]
    pub speed: f64,
}

#[derive(Debug, Args)]
pub struct ScenariosArgs {
    /// Print the source of one bundled scenario.
    #[arg(long)]
    pub show: Option<String>,
}

pub fn run(cli: Cli) -> u8 {
    let result = match cli.command {
        Command::Run(args) => cmd_run(&args),
        Command::Analyze(args) => Ok(cmd_analyze(&args)),
        Command::Replay(args) => cmd_replay(&args),
        Command::Serve(args) => cmd_serve(&args),
        Command::Scenarios(args) => cmd_scenarios(&args),
    };
    match result {
        Ok(code) => code,
        Err(message) => {
            eprintln!("error: {message}");
            EXIT_FAIL
        }
    }
}

#[derive(Serialize)]
struct RunReport<'a> {
    summary: &'a RunSummary,
    checks: &'a [Check],
    pass: bool,
}

fn print_report(summary: &RunSummary, checks: &[Check], json: bool) -> bool {
    let pass = checks.iter().all(|c| c.pass);
    if json {
        let report = RunReport { summary, checks, pass };
        println!("{}", serde_json::to_string_pretty(&report).expect("report serialises"));
    } else {
        println!("{summary}");
        for c in checks {
            println!("{c}");
        }
        if !checks.is_empty() {
            println!("{}", if pass { "all assertions passed" } else { "assertions FAILED" });
        }
    }
    pass
}

fn config_error(e: ConfigError) -> String {
    e.to_string()
}

fn cmd_run(args: &RunArgs) -> Result<u8, String> {
    let (file, mut scenario) = config::load(&args.scenario).map_err(config_error)?;
    if let Some(seed) = args.seed {
        scenario.seed = seed;
    }
    if let Some(duration) = args.duration {
        scenario.duration = duration;
        scenario.validate().map_err(|e| format!("--duration: {e}"))?;
    }
    let (trace, aborted) = match swarmlift_core::sim::run_scenario(scenario.clone()) {
        Ok(trace) => (trace, None),
        Err(a) => (a.partial, Some(a.error)),
    };
    if let Some(path) = &args.output {
        if !trace.records.is_empty() || aborted.is_none() {
            write_trace(path, &trace).map_err(|e| format!("{}: {e}", path.display()))?;
        }
    }
    if let Some(error) = aborted {
        eprintln!("simulation aborted after {} records: {error}", trace.records.len());
        return Ok(if matches!(error, Error::NonFiniteState { .. }) { EXIT_NON_FINITE } else { EXIT_FAIL });
    }
    let summary = summarize_run(&trace, &scenario, &file.assertions).map_err(|e| e.to_string())?;
    let checks = check(&summary, &file.assertions);
    if let Some(path) = &args.summary {
        let report = RunReport { summary: &summary, checks: &checks, pass: checks.iter().all(|c| c.pass) };
        let text = serde_json::to_string_pretty(&report).expect("report serialises");
        std::fs::write(path, text + "\n").map_err(|e| format!("{}: {e}", path.display()))?;
    }
    Ok(if print_report(&summary, &checks, args.json) { EXIT_OK } else { EXIT_FAIL })
}

impl AnalyzeArgs {
    pub fn inputs(&self) -> WorstCaseInputs {
        WorstCaseInputs {
            m_vehicle: self.vehicle_mass,
            m_payload: self.payload_mass,
            f_max_total: self.max_thrust,
            share_fraction: self.share,
            rope_length: self.rope_length,
            z_side_worst: self.worst_side,
            max_speed: self.max_speed,
            max_edge_error: self.max_edge_error,
            attitude_limit: self.attitude_limit,
            diagonal_angle: self.diagonal_angle,
            diagonal_weight: self.diagonal_weight,
            tension_model: match self.tension_model {
                TensionArg::Stated => TensionModel::Stated,
                TensionArg::Formula => TensionModel::Formula,
            },
        }
    }

    pub fn gains(&self) -> Gains {
        Gains { c1: self.c1, c2: self.c2, mu_r: self.spin }
    }
}

/// Machine-readable failure of the analyzer.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AnalyzeError {
    Overloaded { load: f64, available: f64 },
    NoMargin { budget: f64, tension: f64 },
    RopeInfeasible { separation: f64, rope_length: f64 },
    InvalidParameter { name: String, reason: String },
}

impl AnalyzeError {
    fn from_core(e: &Error) -> Self {
        match *e {
            Error::Overloaded { load, available } => Self::Overloaded { load, available },
            Error::NoMargin { budget, tension } => Self::NoMargin { budget, tension },
            Error::RopeInfeasible { separation, rope_length } => Self::RopeInfeasible { separation, rope_length },
            Error::InvalidParameter { name, reason } => Self::InvalidParameter { name: name.into(), reason: reason.into() },
            ref other => Self::InvalidParameter { name: "inputs".into(), reason: other.to_string() },
        }
    }
}

#[derive(Serialize)]
struct AnalyzeReport {
    inputs: WorstCaseInputs,
    gains: Gains,
    #[serde(skip_serializing_if = "Option::is_none")]
    budget: Option<WorstCaseBudget>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<AnalyzeError>,
}

fn print_budget(b: &WorstCaseBudget, gains: &Gains) {
    println!("tilt max            {:.4} rad", b.tilt_max);
    println!("tilt used           {:.4} rad", b.tilt_used);
    println!("horizontal budget   {:.4} N", b.horizontal_budget);
    println!("tension (stated)    {:.4} N", b.tension_stated);
    println!("tension (formula)   {:.4} N", b.tension_formula);
    println!("tension used        {:.4} N", b.tension_bound);
    println!("accel max           {:.4} m/s^2", b.accel_max);
    println!("accel per axis      {:.4} m/s^2", b.accel_axis_max);
    println!("gain demand         {:.4} m/s^2 (c1 {}, c2 {}, spin {})", b.inequality_lhs, gains.c1, gains.c2, gains.mu_r);
    println!("gains ok            {}", b.gains_ok);
}

fn cmd_analyze(args: &AnalyzeArgs) -> u8 {
    let inputs = args.inputs();
    let gains = args.gains();
    let result = gain_inequality(&gains, &inputs);
    let (budget, error) = match &result {
        Ok(b) => (Some(*b), None),
        Err(e) => (None, Some(AnalyzeError::from_core(e))),
    };
    if args.json {
        let report = AnalyzeReport { inputs, gains, budget, error };
        println!("{}", serde_json::to_string_pretty(&report).expect("report serialises"));
    } else {
        match &result {
            Ok(b) => print_budget(b, &gains),
            Err(e) => println!("error: {e}"),
        }
    }
    match result {
        Ok(b) if b.gains_ok => EXIT_OK,
        _ => EXIT_FAIL,
    }
}

fn cmd_replay(args: &ReplayArgs) -> Result<u8, String> {
    let trace = read_trace(&args.trace).map_err(|e| format!("{}: {e}", args.trace.display()))?;
    let loaded = match &args.scenario {
        Some(path) => Some(config::load(path).map_err(config_error)?),
        None => None,
    };
    let (summary, checks) = match &loaded {
        Some((file, scenario)) => {
            let summary = summarize_run(&trace, scenario, &file.assertions).map_err(|e| e.to_string())?;
            let checks = check(&summary, &file.assertions);
            (summary, checks)
        }
        None => (summarize(&trace, None, 5.0).map_err(|e| e.to_string())?, Vec::new()),
    };
    Ok(if print_report(&summary, &checks, args.json) { EXIT_OK } else { EXIT_FAIL })
}

fn cmd_serve(args: &ServeArgs) -> Result<u8, String> {
    let (_, scenario) = config::load(&args.scenario).map_err(config_error)?;
    let runtime = tokio::runtime::Runtime::new().map_err(|e| e.to_string())?;
    runtime.block_on(async {
        let addr = format!("{}:{}", args.bind, args.port);
        let listener = tokio::net::TcpListener::bind(&addr).await.map_err(|e| format!("cannot bind {addr}: {e}"))?;
        let local = listener.local_addr().map_err(|e| e.to_string())?;
        println!("listening on ws://{local}/ws");
        let _ = std::io::stdout().flush();
        let options = ServeOptions { speed: args.speed, ..Default::default() };
        serve(listener, scenario, options).await.map_err(|e| e.to_string())?;
        Ok(EXIT_OK)
    })
}

fn description(source: &str) -> String {
    source
        .lines()
        .take_while(|l| l.starts_with('#'))
        .map(|l| l.trim_start_matches('#').trim())
        .collect::<Vec<_>>()
        .join(" ")
}

fn cmd_scenarios(args: &ScenariosArgs) -> Result<u8, String> {
    if let Some(name) = &args.show {
        let source = config::bundled_source(name).ok_or_else(|| format!("no bundled scenario `{name}`"))?;
        print!("{source}");
        return Ok(EXIT_OK);
    }
    for name in config::bundled_names() {
        let source = config::bundled_source(name).unwrap_or_default();
        println!("{name:<18} {}", description(source));
    }
    Ok(EXIT_OK)
}
