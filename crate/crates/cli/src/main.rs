use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};

use subexp_ruin::asymptotics::asymptotic_table;
use subexp_ruin::config::{load_model, load_theta, ExperimentConfig, StoppingOverrides, Validated, ValidationReport};
use subexp_ruin::experiment::{
    run_assumption_suite, run_ratio_experiment, run_simulate, run_two_cone, simulate_rows, write_assumption_bundle, write_ratio_outputs,
    write_simulate_outputs, write_two_cone_outputs, SuiteOptions,
};
use subexp_ruin::model::{IncrementModel, ModelSpec};
use subexp_ruin::par::Execution;
use subexp_ruin::simulate::Estimator;
use subexp_ruin::taildiag::{fmt_f64, Verdict};

const EXIT_INVALID: u8 = 2;
const EXIT_INCONCLUSIVE: u8 = 3;

#[derive(Parser)]
#[command(name = "subexp-ruin", version, about = "Ruin probabilities for random walks with subexponential radial increments")]
struct Cli {
    /// Worker threads; defaults to the machine's parallelism. Never changes results.
    #[arg(long, global = true, env = "SUBEXP_RUIN_THREADS")]
    threads: Option<usize>,
    /// Run everything on the calling thread.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Monte Carlo ruin probabilities of the cone uC_δ.
    Simulate(SimulateArgs),
    /// Asymptotic ruin values and the halfspace integral.
    Asymptotic(AsymptoticArgs),
    /// Diagnostics for assumptions A1 to A6.
    CheckAssumptions(CheckArgs),
    /// Sweeps driven by a config file.
    #[command(subcommand)]
    Experiment(ExperimentCommand),
}

#[derive(Clone, Copy, ValueEnum)]
enum EstimatorArg {
    Crude,
    Bigjump,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    theta: PathBuf,
    #[arg(long)]
    delta: f64,
    /// Repeat for a sweep.
    #[arg(long = "u", required = true)]
    u: Vec<f64>,
    #[arg(long, default_value_t = 100_000)]
    paths: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "crude")]
    estimator: EstimatorArg,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    nmax: Option<u64>,
    /// Big-jump split threshold as a fraction of u.
    #[arg(long, default_value_t = 0.25)]
    split: f64,
    /// Directory for simulate.csv and manifest.json; CSV goes to stdout otherwise.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct AsymptoticArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long = "u", required = true)]
    u: Vec<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CheckArgs {
    #[arg(long)]
    model: PathBuf,
    /// Directory for one CSV per assumption and verdicts.json.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 12)]
    grid_points: usize,
    #[arg(long, default_value_t = 100_000)]
    a3_draws: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Subcommand)]
enum ExperimentCommand {
    /// MC estimate over the asymptotic value across the u grid.
    Ratio(ExperimentArgs),
    /// Hitting probabilities of two disjoint cones across the u grid.
    TwoCone(ExperimentArgs),
}

#[derive(Args)]
struct ExperimentArgs {
    /// Experiment config or a previous run's manifest.json.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config's output_dir.
    #[arg(long)]
    out: Option<PathBuf>,
}

enum Failure {
    Invalid(ValidationReport),
    Other(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Other(e)
    }
}

impl From<ValidationReport> for Failure {
    fn from(r: ValidationReport) -> Self {
        Failure::Invalid(r)
    }
}

impl From<subexp_ruin::Error> for Failure {
    fn from(e: subexp_ruin::Error) -> Self {
        match e {
            subexp_ruin::Error::Validation(msgs) => Failure::Invalid(ValidationReport {
                valid: false,
                issues: msgs.into_iter().map(|m| subexp_ruin::config::Issue { field: String::new(), message: m }).collect(),
            }),
            other => Failure::Other(other.into()),
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Err(e) = init_threads(cli.threads) {
        eprintln!("error: {e:#}");
        return ExitCode::FAILURE;
    }
    let exec = if cli.sequential { Execution::Sequential } else { Execution::Parallel };
    match run(cli.command, exec) {
        Ok(code) => ExitCode::from(code),
        Err(Failure::Invalid(report)) => {
            eprintln!("{}", serde_json::to_string_pretty(&report).unwrap_or_else(|_| report.to_string()));
            ExitCode::from(EXIT_INVALID)
        }
        Err(Failure::Other(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

#[cfg(feature = "parallel")]
fn init_threads(threads: Option<usize>) -> anyhow::Result<()> {
    if let Some(n) = threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("configuring the thread pool")?;
    }
    Ok(())
}

#[cfg(not(feature = "parallel"))]
fn init_threads(threads: Option<usize>) -> anyhow::Result<()> {
    if threads.is_some_and(|n| n > 1) {
        log::warn!("built without the parallel feature; --threads is ignored");
    }
    Ok(())
}

fn report_drift(model: &IncrementModel) {
    let d = model.drift();
    let c: Vec<String> = d.c.iter().map(|&v| fmt_f64(v)).collect();
    let status = if d.certified { "certified" } else { "not certified" };
    eprintln!("drift c = [{}], |c| = {} ({status}, {:?})", c.join(", "), fmt_f64(d.norm), d.method);
}

fn validated(config: &ExperimentConfig) -> Result<Validated, Failure> {
    let v = config.validate()?;
    for w in &v.warnings {
        eprintln!("warning: {w}");
    }
    report_drift(&v.model);
    Ok(v)
}

fn run(command: Command, exec: Execution) -> Result<u8, Failure> {
    match command {
        Command::Simulate(a) => simulate(a, exec),
        Command::Asymptotic(a) => asymptotic(a, exec),
        Command::CheckAssumptions(a) => check(a, exec),
        Command::Experiment(ExperimentCommand::Ratio(a)) => {
            let (v, dir) = experiment_setup(&a)?;
            let exp = run_ratio_experiment(&v, exec)?;
            write_ratio_outputs(&dir, &v, &exp)?;
            eprintln!("trend {}, final ratio {:?}; outputs in {}", exp.trend.as_str(), exp.final_ratio, dir.display());
            Ok(if exp.trend == Verdict::Inconclusive { EXIT_INCONCLUSIVE } else { 0 })
        }
        Command::Experiment(ExperimentCommand::TwoCone(a)) => {
            let (v, dir) = experiment_setup(&a)?;
            if v.theta_b.is_none() {
                return Err(ValidationReport {
                    valid: false,
                    issues: vec![subexp_ruin::config::Issue { field: "theta_b".into(), message: "required for the two-cone experiment".into() }],
                }
                .into());
            }
            let exp = run_two_cone(&v, exec)?;
            write_two_cone_outputs(&dir, &v, &exp)?;
            eprintln!("trend {}; outputs in {}", exp.trend.as_str(), dir.display());
            Ok(if exp.trend == Verdict::Inconclusive { EXIT_INCONCLUSIVE } else { 0 })
        }
    }
}

fn experiment_setup(a: &ExperimentArgs) -> Result<(Validated, PathBuf), Failure> {
    let config = ExperimentConfig::load(&a.config)?;
    let dir = a.out.clone().or_else(|| config.output_dir.clone()).unwrap_or_else(|| PathBuf::from("out"));
    let v = validated(&config)?;
    Ok((v, dir))
}

fn simulate(a: SimulateArgs, exec: Execution) -> Result<u8, Failure> {
    let model = load_model(&a.model)?;
    let theta = load_theta(&a.theta)?;
    let config = ExperimentConfig {
        model,
        theta,
        theta_b: None,
        delta: a.delta,
        u: a.u,
        paths: a.paths,
        seed: a.seed,
        estimator: match a.estimator {
            EstimatorArg::Crude => Estimator::Crude,
            EstimatorArg::Bigjump => Estimator::Bigjump,
        },
        stopping: StoppingOverrides { rho: a.rho, n_max: a.nmax },
        split_fraction: a.split,
        paired_halfspace: false,
        ku_eps: 0.1,
        allow_light_tail: false,
        drift_override: None,
        output_dir: a.out.clone(),
    };
    let v = validated(&config)?;
    let est = run_simulate(&v, exec)?;
    match &a.out {
        Some(dir) => {
            write_simulate_outputs(dir, &v, &est)?;
            eprintln!("outputs in {}", dir.display());
        }
        None => write_stdout_csv(&simulate_rows(&est))?,
    }
    Ok(0)
}

fn write_stdout_csv<T: serde::Serialize>(rows: &[T]) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_writer(std::io::stdout().lock());
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(serde::Serialize)]
struct AsymptoticRow {
    u: f64,
    asymptotic_ruin: f64,
    halfspace_integral: f64,
    equivalence_gap: Option<f64>,
}

fn asymptotic(a: AsymptoticArgs, exec: Execution) -> Result<u8, Failure> {
    let spec: ModelSpec = load_model(&a.model)?;
    let model = IncrementModel::from_spec(&spec).map_err(|e| ValidationReport {
        valid: false,
        issues: vec![subexp_ruin::config::Issue { field: "model".into(), message: e.to_string() }],
    })?;
    report_drift(&model);
    let rows: Vec<AsymptoticRow> = asymptotic_table(&model, &a.u, exec)?
        .into_iter()
        .map(|(u, asy, h, gap)| {
            if asy.clipped {
                log::warn!("integrated tail exceeds 1 at u = {u}; the unclipped value is reported");
            }
            AsymptoticRow { u, asymptotic_ruin: asy.value, halfspace_integral: h, equivalence_gap: gap }
        })
        .collect();
    match &a.out {
        Some(path) => {
            let mut w = csv::Writer::from_path(path).with_context(|| path.display().to_string())?;
            for r in &rows {
                w.serialize(r).context("writing csv")?;
            }
            w.flush().context("writing csv")?;
        }
        None => write_stdout_csv(&rows)?,
    }
    Ok(0)
}

fn check(a: CheckArgs, exec: Execution) -> Result<u8, Failure> {
    let spec: ModelSpec = load_model(&a.model)?;
    let opts = SuiteOptions { grid_points: a.grid_points, a3_draws: a.a3_draws, seed: a.seed, ..SuiteOptions::default() };
    let bundle = run_assumption_suite(&spec, &opts, exec);
    if let Some(dir) = &a.out {
        write_assumption_bundle(dir, &bundle)?;
    }
    let summary: serde_json::Map<String, serde_json::Value> =
        bundle.verdicts.iter().map(|(k, v)| (k.clone(), serde_json::Value::from(v.as_str()))).collect();
    let mut out = std::io::stdout().lock();
    writeln!(out, "{}", serde_json::Value::Object(summary)).context("writing summary")?;
    Ok(exit_for(&bundle.verdicts.iter().map(|(_, v)| *v).collect::<Vec<_>>()))
}

/// 3 when some verdict is inconclusive and none is inconsistent.
fn exit_for(verdicts: &[Verdict]) -> u8 {
    let inconclusive = verdicts.contains(&Verdict::Inconclusive);
    let inconsistent = verdicts.contains(&Verdict::Inconsistent);
    if inconclusive && !inconsistent {
        EXIT_INCONCLUSIVE
    } else {
        0
    }
}
