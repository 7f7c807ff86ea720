use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use quadcbf::compare::{self, Comparison, ComparisonReport, SweepReport, DEFAULT_GAMMA_SWEEP};
use quadcbf::sim::{self, FilterKind, Metrics, ScenarioConfig};
use quadcbf::trace_io;

const EXIT_ERROR: u8 = 1;
const EXIT_VIOLATION: u8 = 2;

#[derive(Parser)]
#[command(name = "quadcbf", version, about = "Quadrotor safety-filter simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one scenario and write its trace and metrics.
    Run(RunArgs),
    /// Run a scenario under the collision-cone filter and a second filter.
    Compare(CompareArgs),
    /// Print the built-in scenarios.
    ListScenarios,
    /// Parse and check a scenario file without running it.
    ValidateConfig {
        #[arg(long, value_name = "PATH")]
        config: Option<PathBuf>,
        #[arg(value_name = "PATH", conflicts_with = "config")]
        path: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum FilterArg {
    None,
    C3bf,
    Hocbf,
}

#[derive(Args)]
struct ScenarioArgs {
    /// Built-in scenario name.
    #[arg(long, conflicts_with = "config", required_unless_present = "config")]
    scenario: Option<String>,
    /// Scenario file (TOML).
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    #[arg(long, value_name = "SECONDS")]
    dt: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Directory for output files; created if missing.
    #[arg(long, value_name = "DIR", default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    #[arg(long, value_enum)]
    filter: Option<FilterArg>,
    /// Penalty of the higher-order barrier [default: 1].
    #[arg(long, value_name = "GAMMA")]
    hocbf_gamma: Option<f64>,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// Filter compared against the collision-cone one.
    #[arg(long, value_enum, default_value = "hocbf")]
    filter: FilterArg,
    #[arg(long, value_name = "GAMMA")]
    hocbf_gamma: Option<f64>,
    /// Compare against the higher-order barrier at each penalty; without
    /// values, sweeps 0.5, 1 and 2.
    #[arg(long, value_name = "GAMMA", num_args = 0.., value_delimiter = ',')]
    sweep_gamma: Option<Vec<f64>>,
}

struct Failure(String);

impl<E: std::fmt::Display> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure(e.to_string())
    }
}

type CmdResult = Result<u8, Failure>;

fn filter_kind(filter: FilterArg, gamma: Option<f64>) -> FilterKind {
    match filter {
        FilterArg::None => FilterKind::None,
        FilterArg::C3bf => FilterKind::C3bf,
        FilterArg::Hocbf => FilterKind::Hocbf {
            gamma: gamma.unwrap_or(1.0),
        },
    }
}

fn load_scenario(args: &ScenarioArgs) -> Result<ScenarioConfig, Failure> {
    let mut config = match (&args.scenario, &args.config) {
        (Some(name), _) => sim::builtin(name).ok_or_else(|| {
            Failure(format!(
                "unknown scenario `{name}`; see `quadcbf list-scenarios`"
            ))
        })?,
        (None, Some(path)) => {
            let text = fs::read_to_string(path)
                .map_err(|e| Failure(format!("cannot read {}: {e}", path.display())))?;
            ScenarioConfig::from_toml_str(&text)
                .map_err(|e| Failure(format!("{}: {e}", path.display())))?
        }
        (None, None) => return Err(Failure("one of --scenario or --config is required".into())),
    };
    if let Some(dt) = args.dt {
        config.dt = dt;
    }
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    Ok(config)
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<(), Failure> {
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| Failure(format!("cannot write {}: {e}", path.display())))
}

fn prepare_dir(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir).map_err(|e| Failure(format!("cannot create {}: {e}", dir.display())))
}

#[derive(Serialize)]
struct MetricsDocument {
    scenario: String,
    filter: String,
    metrics: Metrics,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    peers: Vec<Metrics>,
}

fn cmd_run(args: &RunArgs) -> CmdResult {
    let mut config = load_scenario(&args.scenario)?;
    match (args.filter, &mut config.filter) {
        (Some(f), filter) => *filter = filter_kind(f, args.hocbf_gamma),
        (None, FilterKind::Hocbf { gamma }) => *gamma = args.hocbf_gamma.unwrap_or(*gamma),
        (None, _) => {}
    }
    config.validate()?;
    let traces = sim::run_agents(&config)?;

    let out = &args.scenario.out;
    prepare_dir(out)?;
    let mut all = Vec::with_capacity(traces.len());
    for (i, trace) in traces.iter().enumerate() {
        let name = if i == 0 {
            "trace.csv".to_string()
        } else {
            format!("trace_agent{i}.csv")
        };
        write_file(out, &name, &trace_io::trace_to_string(trace))?;
        all.push(sim::compute_metrics(trace));
    }
    let doc = MetricsDocument {
        scenario: config.name.clone(),
        filter: config.filter.name(),
        metrics: all[0],
        peers: all[1..].to_vec(),
    };
    write_file(out, "metrics.toml", &compare::report_to_toml(&doc))?;

    let safe = all.iter().all(|m| m.success);
    println!(
        "{} [{}]: min_separation {:.4} m, min_h {:.4}, {}",
        config.name,
        config.filter.name(),
        all.iter()
            .map(|m| m.min_separation)
            .fold(f64::INFINITY, f64::min),
        all.iter().map(|m| m.min_h).fold(f64::INFINITY, f64::min),
        if safe { "safe" } else { "SAFETY VIOLATION" }
    );
    Ok(if safe { 0 } else { EXIT_VIOLATION })
}

fn write_comparison(dir: &Path, cmp: &Comparison) -> Result<(), Failure> {
    prepare_dir(dir)?;
    for (side, run) in ["a", "b"].iter().zip(cmp.runs()) {
        if let Ok(trace) = &run.outcome {
            write_file(
                dir,
                &format!("trace_{side}.csv"),
                &trace_io::trace_to_string(trace),
            )?;
        }
        if let (Some(ratio), Ok(trace)) = (&run.cone_ratio, &run.outcome) {
            let mut csv = String::from("t,cone_ratio\n");
            for (rec, value) in trace.records.iter().zip(ratio) {
                let cell = value.map(trace_io::format_float).unwrap_or_default();
                csv.push_str(&format!("{},{cell}\n", trace_io::format_float(rec.t)));
            }
            write_file(dir, &format!("cone_ratio_{side}.csv"), &csv)?;
        }
    }
    Ok(())
}

fn print_section(report: &ComparisonReport) {
    let describe = |s: &compare::RunSummary| match (&s.metrics, &s.error) {
        (Some(m), _) => format!("{} min_separation {:.4} m", s.filter, m.min_separation),
        (None, Some(e)) => format!("{} aborted: {e}", s.filter),
        (None, None) => s.filter.clone(),
    };
    println!(
        "{}: {} | {}",
        report.scenario,
        describe(&report.a),
        describe(&report.b)
    );
}

fn comparison_status(reports: &[ComparisonReport]) -> u8 {
    let sides = || reports.iter().flat_map(|r| [&r.a, &r.b]);
    if sides().any(|s| s.error.is_some()) {
        EXIT_ERROR
    } else if sides().any(|s| s.metrics.is_some_and(|m| !m.success)) {
        EXIT_VIOLATION
    } else {
        0
    }
}

fn cmd_compare(args: &CompareArgs) -> CmdResult {
    let config = load_scenario(&args.scenario)?;
    let out = &args.scenario.out;
    let reports = if let Some(gammas) = &args.sweep_gamma {
        let gammas = if gammas.is_empty() {
            DEFAULT_GAMMA_SWEEP.to_vec()
        } else {
            gammas.clone()
        };
        let sweep = compare::gamma_sweep(&config, &gammas)?;
        let mut reports = Vec::new();
        for (gamma, cmp) in gammas.iter().zip(&sweep) {
            write_comparison(&out.join(format!("gamma_{gamma}")), cmp)?;
            reports.push(cmp.report());
        }
        prepare_dir(out)?;
        let doc = SweepReport {
            sections: reports.clone(),
        };
        write_file(out, "comparison.toml", &compare::report_to_toml(&doc))?;
        reports
    } else {
        let mut a = config.clone();
        a.filter = FilterKind::C3bf;
        let mut b = config;
        b.filter = filter_kind(args.filter, args.hocbf_gamma);
        let cmp = compare::compare(&a, &b)?;
        write_comparison(out, &cmp)?;
        let report = cmp.report();
        write_file(out, "comparison.toml", &compare::report_to_toml(&report))?;
        vec![report]
    };
    reports.iter().for_each(print_section);
    Ok(comparison_status(&reports))
}

fn cmd_list() -> CmdResult {
    for s in sim::builtin_scenarios() {
        println!("{:<16} {}", s.name, s.description);
    }
    Ok(0)
}

fn cmd_validate(path: &Path) -> CmdResult {
    ScenarioConfig::load(path)?;
    println!("{}: ok", path.display());
    Ok(0)
}

fn main() -> ExitCode {
    // clap exits with 2 on usage errors, which is reserved for violations.
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_ERROR)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match &cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Compare(args) => cmd_compare(args),
        Command::ListScenarios => cmd_list(),
        Command::ValidateConfig { config, path } => match config.as_ref().or(path.as_ref()) {
            Some(p) => cmd_validate(p),
            None => Err(Failure("validate-config needs a scenario file path".into())),
        },
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(Failure(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}
