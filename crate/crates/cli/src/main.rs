use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use bowlab_core::experiment::{
    self, Algorithm, ExperimentConfig, Format, OutputSpec, Scale, ScenarioSource,
};
use bowlab_core::gen::{self, GenSpec, Scenario};
use bowlab_core::optimal::{self, OracleCaps, SolveError};
use bowlab_core::sim;
use bowlab_core::{BagOfWorkloads, CloudConfig, MetricsReport, Schedule};

#[derive(Parser)]
#[command(
    name = "bowlab",
    version,
    about = "Bag-of-workloads scheduling on a hybrid cloud"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a seeded scenario (JSON).
    Gen(GenArgs),
    /// Run one scheduler on a scenario.
    Schedule(ScheduleArgs),
    /// Optimal plan for `count` workloads of equal length.
    SolveEqual(SolveEqualArgs),
    /// Optimal plan for a bag of workloads with varying lengths.
    SolveVary(BagArgs),
    /// Exhaustive search over every assignment (small bags only).
    Oracle(BagArgs),
    /// Run an experiment matrix and write the summary report.
    Compare(CompareArgs),
    /// Check a schedule against its scenario.
    Validate(ValidateArgs),
}

#[derive(Args)]
struct ScenarioArgs {
    /// Generator settings (TOML, GenSpec fields).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    workloads: Option<usize>,
    #[arg(long)]
    instances: Option<usize>,
}

#[derive(Args)]
struct GenArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ScheduleArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// Scenario JSON, as written by `gen`. Overrides the generator flags.
    #[arg(long, conflicts_with_all = ["config", "seed", "workloads", "instances"])]
    input: Option<PathBuf>,
    #[arg(long, default_value = "edbrs")]
    algo: String,
    #[arg(long)]
    batch_window: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_parser = parse_format, default_value = "json")]
    format: Format,
}

#[derive(Args)]
struct SolveEqualArgs {
    /// Cloud config (TOML or JSON).
    #[arg(long)]
    cloud: PathBuf,
    #[arg(long)]
    count: usize,
    #[arg(long)]
    exec_time: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BagArgs {
    /// Cloud config (TOML or JSON); used with `--exec-times`.
    #[arg(long, requires = "exec_times", conflicts_with = "input")]
    cloud: Option<PathBuf>,
    /// Comma-separated workload lengths, ids assigned in order.
    #[arg(long, value_delimiter = ',')]
    exec_times: Vec<f64>,
    /// Scenario JSON; its operations and eligibility are ignored.
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    /// Experiment config (TOML, ExperimentConfig fields).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Run this single seed instead of the configured list.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    workloads: Option<usize>,
    #[arg(long)]
    instances: Option<usize>,
    /// Comma-separated algorithm names.
    #[arg(long, value_delimiter = ',')]
    algo: Vec<String>,
    #[arg(long)]
    batch_window: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_parser = parse_format)]
    format: Option<Format>,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long)]
    input: PathBuf,
    /// Schedule JSON, as written by `schedule --format json`.
    #[arg(long)]
    schedule: PathBuf,
}

fn parse_format(s: &str) -> Result<Format, String> {
    match s {
        "csv" => Ok(Format::Csv),
        "json" => Ok(Format::Json),
        other => Err(format!("unknown format `{other}` (expected csv or json)")),
    }
}

enum CliError {
    Config(String),
    Validation(String),
    Infeasible(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Validation(_) => 3,
            CliError::Infeasible(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::Validation(m) | CliError::Infeasible(m) => m,
        }
    }
}

impl From<SolveError> for CliError {
    fn from(e: SolveError) -> Self {
        match e {
            SolveError::Infeasible(_) | SolveError::SearchBudgetExceeded(_) => {
                CliError::Infeasible(e.to_string())
            }
            other => CliError::Config(other.to_string()),
        }
    }
}

type CliResult<T> = Result<T, CliError>;

fn read(path: &Path) -> CliResult<String> {
    std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn parse_json<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<T> {
    serde_json::from_str(&read(path)?)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn parse_toml<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<T> {
    toml::from_str(&read(path)?).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn load_cloud(path: &Path) -> CliResult<CloudConfig> {
    if path.extension().is_some_and(|e| e == "json") {
        parse_json(path)
    } else {
        parse_toml(path)
    }
}

fn load_scenario(path: &Path) -> CliResult<Scenario> {
    parse_json::<Scenario>(path)?
        .check()
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn emit(out: Option<&Path>, text: &str) -> CliResult<()> {
    match out {
        Some(p) => {
            std::fs::write(p, text).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))
        }
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}

fn gen_spec(args: &ScenarioArgs) -> CliResult<GenSpec> {
    let mut spec: GenSpec = match &args.config {
        Some(p) => parse_toml(p)?,
        None => GenSpec::default(),
    };
    if let Some(s) = args.seed {
        spec.seed = s;
    }
    if let Some(n) = args.workloads {
        spec.n_workloads = n;
    }
    if let Some(n) = args.instances {
        spec.n_instances = n;
    }
    Ok(spec)
}

fn generate(args: &ScenarioArgs) -> CliResult<Scenario> {
    gen::generate(&gen_spec(args)?).map_err(|e| CliError::Config(e.to_string()))
}

fn parse_algo(name: &str) -> CliResult<Algorithm> {
    Algorithm::parse(name).ok_or_else(|| {
        CliError::Config(format!(
            "unknown algorithm `{name}` (expected edbrs, fcfs, minmin, maxmin or optimal)"
        ))
    })
}

#[derive(Serialize, Deserialize)]
struct ScheduleOutput {
    schedule: Schedule,
    metrics: MetricsReport,
}

/// Accepts either a bare schedule or the `schedule` command's output.
#[derive(Deserialize)]
#[serde(untagged)]
enum ScheduleFile {
    Wrapped { schedule: Schedule },
    Bare(Schedule),
}

fn schedule_csv(schedule: &Schedule) -> String {
    let mut out = String::from("workload_id,op_index,instance,start,end\n");
    for e in &schedule.entries {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            e.workload_id.0,
            e.op_index,
            e.instance_id,
            experiment::fmt_sig6(e.start),
            experiment::fmt_sig6(e.end)
        );
    }
    out
}

fn cmd_gen(args: GenArgs) -> CliResult<()> {
    let scenario = generate(&args.scenario)?;
    emit(args.out.as_deref(), &to_json(&scenario))
}

fn cmd_schedule(args: ScheduleArgs) -> CliResult<()> {
    let scenario = match &args.input {
        Some(p) => load_scenario(p)?,
        None => generate(&args.scenario)?,
    };
    let algo = parse_algo(&args.algo)?;
    if let Some(w) = args.batch_window {
        if !(w > 0.0 && w.is_finite()) {
            return Err(CliError::Config(format!(
                "--batch-window must be > 0 (got {w})"
            )));
        }
    }
    let (schedule, metrics) = experiment::run_algorithm(&scenario, algo, args.batch_window)
        .map_err(|(kind, msg)| match kind {
            experiment::CellFailure::Infeasible => CliError::Infeasible(msg),
            experiment::CellFailure::Invalid => CliError::Validation(msg),
        })?;
    let text = match args.format {
        Format::Json => to_json(&ScheduleOutput { schedule, metrics }),
        Format::Csv => schedule_csv(&schedule),
    };
    emit(args.out.as_deref(), &text)
}

fn cmd_solve_equal(args: SolveEqualArgs) -> CliResult<()> {
    let cloud = load_cloud(&args.cloud)?;
    let result = optimal::solve_equal_length(args.count, args.exec_time, &cloud)?;
    emit(args.out.as_deref(), &to_json(&result))
}

fn load_bag(args: &BagArgs) -> CliResult<(BagOfWorkloads, CloudConfig)> {
    match (&args.input, &args.cloud) {
        (Some(p), _) => {
            let s = load_scenario(p)?;
            let bow =
                BagOfWorkloads::new(s.workloads.workloads().iter().map(|w| w.to_bow()).collect())
                    .map_err(|e| CliError::Config(e.to_string()))?;
            Ok((bow, s.config))
        }
        (None, Some(c)) => {
            let cloud = load_cloud(c)?;
            let bow = BagOfWorkloads::from_exec_times(&args.exec_times)
                .map_err(|e| CliError::Config(e.to_string()))?;
            Ok((bow, cloud))
        }
        (None, None) => Err(CliError::Config(
            "either --input or --cloud with --exec-times is required".into(),
        )),
    }
}

#[derive(Serialize)]
struct VaryOutput {
    plan: bowlab_core::cost::VaryingLengthPlan,
    sizes: Vec<f64>,
    assignment: bowlab_core::Assignment,
    best_z: f64,
    nodes_explored: u64,
    proven_optimal: bool,
}

fn cmd_solve_vary(args: BagArgs) -> CliResult<()> {
    let (bow, cloud) = load_bag(&args)?;
    if bow.is_empty() {
        return Err(CliError::Config("the bag is empty".into()));
    }
    let classes = bow
        .size_classes()
        .map_err(|e| CliError::Config(e.to_string()))?;
    let r = optimal::solve_varying_length(&classes.counts, &classes.sizes, &cloud)?;
    let assignment = r
        .best
        .materialize(&bow, &classes, &cloud)
        .map_err(|e| CliError::Config(e.to_string()))?;
    let out = VaryOutput {
        plan: r.best,
        sizes: classes.sizes,
        assignment,
        best_z: r.best_z,
        nodes_explored: r.nodes_explored,
        proven_optimal: r.proven_optimal,
    };
    emit(args.out.as_deref(), &to_json(&out))
}

fn cmd_oracle(args: BagArgs) -> CliResult<()> {
    let (bow, cloud) = load_bag(&args)?;
    let r = optimal::brute_force_oracle(&bow, &cloud, OracleCaps::default())?;
    emit(args.out.as_deref(), &to_json(&r))
}

fn cmd_compare(args: CompareArgs) -> CliResult<()> {
    let mut config = match &args.config {
        Some(p) => ExperimentConfig::load(p).map_err(|e| CliError::Config(e.to_string()))?,
        None => ExperimentConfig {
            gen: ScenarioSource::Spec(GenSpec::default()),
            algorithms: vec![
                Algorithm::Edbrs,
                Algorithm::Fcfs,
                Algorithm::Minmin,
                Algorithm::Maxmin,
            ],
            seeds: (0..gen::DEFAULT_SEED_COUNT).collect(),
            scales: vec![],
            batch_window: None,
            output: OutputSpec::default(),
        },
    };
    if let Some(s) = args.seed {
        config.seeds = vec![s];
    }
    if args.workloads.is_some() || args.instances.is_some() {
        let ScenarioSource::Spec(spec) = &mut config.gen else {
            return Err(CliError::Config(
                "--workloads/--instances need a generated scenario".into(),
            ));
        };
        if let Some(n) = args.workloads {
            spec.n_workloads = n;
        }
        if let Some(n) = args.instances {
            spec.n_instances = n;
        }
        config.scales = vec![Scale {
            n_workloads: spec.n_workloads,
            n_instances: spec.n_instances,
        }];
    }
    if !args.algo.is_empty() {
        config.algorithms = args
            .algo
            .iter()
            .map(|a| parse_algo(a))
            .collect::<CliResult<_>>()?;
    }
    if args.batch_window.is_some() {
        config.batch_window = args.batch_window;
    }
    if let Some(f) = args.format {
        config.output.format = f;
    }
    if args.out.is_some() {
        config.output.path = args.out.clone();
    }

    let report = experiment::run(&config).map_err(|e| match e {
        experiment::ExperimentError::Config(m) => CliError::Config(m),
        other => CliError::Config(other.to_string()),
    })?;
    let out = config.output.path.as_deref();
    match config.output.format {
        Format::Csv => {
            emit(out, &report.to_csv())?;
            if config.output.detail {
                let detail = out.map(|p| p.with_extension("detail.csv"));
                match detail {
                    Some(p) => emit(Some(&p), &report.detail_csv())?,
                    None => emit(None, &report.detail_csv())?,
                }
            }
        }
        Format::Json => emit(out, &report.to_json(config.output.detail))?,
    }
    for c in report.cells.iter().filter(|c| !c.valid()) {
        eprintln!(
            "{} seed {} ({}x{}): {}",
            c.algo.name(),
            c.seed,
            c.n_workloads,
            c.n_instances,
            c.diagnostic.as_deref().unwrap_or("failed")
        );
    }
    if report.has_failure(experiment::CellFailure::Invalid) {
        return Err(CliError::Validation(
            "one or more cells produced an invalid schedule".into(),
        ));
    }
    if report.has_failure(experiment::CellFailure::Infeasible) {
        return Err(CliError::Infeasible(
            "one or more cells had no feasible plan".into(),
        ));
    }
    Ok(())
}

fn cmd_validate(args: ValidateArgs) -> CliResult<()> {
    let scenario = load_scenario(&args.input)?;
    let schedule = match parse_json::<ScheduleFile>(&args.schedule)? {
        ScheduleFile::Wrapped { schedule } | ScheduleFile::Bare(schedule) => schedule,
    };
    let violations = sim::validate_schedule(
        &schedule,
        &scenario.workloads,
        &scenario.fleet,
        &scenario.config,
    );
    if violations.is_empty() {
        println!(
            "ok: {} entries, makespan {}",
            schedule.entries.len(),
            experiment::fmt_sig6(schedule.makespan())
        );
        return Ok(());
    }
    for v in &violations {
        println!("{:?} {:?}: {}", v.kind, v.entries, v.description);
    }
    Err(CliError::Validation(format!(
        "{} violation(s)",
        violations.len()
    )))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Gen(a) => cmd_gen(a),
        Command::Schedule(a) => cmd_schedule(a),
        Command::SolveEqual(a) => cmd_solve_equal(a),
        Command::SolveVary(a) => cmd_solve_vary(a),
        Command::Oracle(a) => cmd_oracle(a),
        Command::Compare(a) => cmd_compare(a),
        Command::Validate(a) => cmd_validate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.exit_code())
        }
    }
}
