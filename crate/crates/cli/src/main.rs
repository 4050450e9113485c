//! vexl: variable exponent norms, exponent pipelines and divergence experiments.
//!
//! Usage:
//!   vexl norm --f f.json --p const:2
//!   vexl norm --f f.json --p pipeline.json#p_bar
//!   vexl pipeline --K 10 --out pipeline.json
//!   vexl pipeline --check pipeline.json
//!   vexl experiment --config exp.json --out-dir out/
//!
//! Exit status: 0 success, 2 input error, 3 domain error, 4 verification failure.

mod inputs;
mod output;
mod plot;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::anyhow;
use clap::{Args, Parser, Subcommand};
use serde::Deserialize;
use vexl::divergence::{run_experiment, ExperimentReport};
use vexl::pipeline::{default_witnesses, validate_seed, VerificationTable, DEFAULT_K, DEFAULT_RESOLUTION, DEFAULT_SUBCELLS};
use vexl::vexl::DEFAULT_TOL;
use vexl::{luxemburg_norm, Error, ExperimentConfig, ExponentPipeline, PipelineConfig, PipelineFile, StepFunction, SystemKind};

use plot::{Chart, Mark, Series};

const EXIT_INPUT: u8 = 2;
const EXIT_DOMAIN: u8 = 3;
const EXIT_VERIFY: u8 = 4;

/// An error together with the exit status it maps to.
struct Failure {
    code: u8,
    err: anyhow::Error,
}

impl Failure {
    fn input(err: impl Into<anyhow::Error>) -> Self {
        Self { code: EXIT_INPUT, err: err.into() }
    }

    fn verify(err: impl Into<anyhow::Error>) -> Self {
        Self { code: EXIT_VERIFY, err: err.into() }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::InvalidArgument(_) | Error::InvalidStepFunction(_) | Error::InvalidGrid(_) | Error::InvalidExponent(_) => EXIT_INPUT,
            Error::Verification(_) => EXIT_VERIFY,
            _ => EXIT_DOMAIN,
        };
        Self { code, err: e.into() }
    }
}

type Outcome<T = ()> = Result<T, Failure>;

#[derive(Parser)]
#[command(name = "vexl", version, about = "Variable exponent norms, exponent pipelines and divergence experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Luxemburg norm of a step function.
    Norm(NormArgs),
    /// Build (or re-check) an exponent pipeline and print its verification table.
    Pipeline(PipelineArgs),
    /// Run θ searches, the Lebesgue table and optional block aggregation.
    Experiment(ExperimentArgs),
}

#[derive(Args)]
struct NormArgs {
    /// Step function JSON file.
    #[arg(long)]
    f: PathBuf,
    /// `const:<v>`, `named:<name>[:a,b]`, `<pipeline.json>#<p_bar|q_bar|p|h>` or an exponent JSON file.
    #[arg(long)]
    p: String,
    #[arg(long, default_value_t = DEFAULT_TOL)]
    tol: f64,
}

#[derive(Args)]
struct PipelineArgs {
    /// JSON file with any of the fields below; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Seed exponent spec, as for `norm --p`.
    #[arg(long)]
    seed: Option<String>,
    #[arg(long = "K")]
    k: Option<usize>,
    #[arg(long)]
    resolution: Option<usize>,
    #[arg(long)]
    subcells: Option<usize>,
    #[arg(long)]
    a: Option<f64>,
    #[arg(long)]
    c: Option<f64>,
    #[arg(long = "C")]
    big_c: Option<f64>,
    /// Leading points of the l sequence, comma separated.
    #[arg(long, value_delimiter = ',')]
    l: Option<Vec<f64>>,
    /// Experiment report whose θ are appended to the l sequence.
    #[arg(long)]
    thetas_from: Option<PathBuf>,
    /// Restrict `--thetas-from` to these N (default: every record).
    #[arg(long, value_delimiter = ',')]
    thetas_n: Vec<usize>,
    #[arg(long, default_value = "pipeline.json")]
    out: PathBuf,
    /// Verify an existing pipeline file instead of building one.
    #[arg(long, conflicts_with_all = ["config", "seed", "k", "out"])]
    check: Option<PathBuf>,
}

#[derive(Args)]
struct ExperimentArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    /// Pipeline file for aggregation; overrides `pipeline_ref`.
    #[arg(long)]
    pipeline: Option<PathBuf>,
    #[arg(long, value_parser = parse_system)]
    system: Option<SystemKind>,
    #[arg(long = "N", value_delimiter = ',')]
    n_list: Option<Vec<usize>>,
    #[arg(long)]
    rng_seed: Option<u64>,
    #[arg(long)]
    budget: Option<usize>,
    #[arg(long)]
    s0: Option<usize>,
    #[arg(long)]
    grid: Option<usize>,
}

fn parse_system(s: &str) -> Result<SystemKind, String> {
    match s {
        "trig" => Ok(SystemKind::Trig),
        "walsh" => Ok(SystemKind::Walsh),
        other => Err(format!("unknown system {other:?}; expected trig or walsh")),
    }
}

/// File form of the `pipeline` flags.
#[derive(Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct PipelineRun {
    seed: Option<String>,
    #[serde(rename = "K")]
    k: Option<usize>,
    resolution: Option<usize>,
    subcells: Option<usize>,
    a: Option<f64>,
    c: Option<f64>,
    #[serde(rename = "C")]
    big_c: Option<f64>,
    #[serde(default)]
    l: Vec<f64>,
}

fn init_threads() -> Outcome {
    let Ok(raw) = std::env::var("VEXL_THREADS") else { return Ok(()) };
    let n: usize = raw.trim().parse().map_err(|_| Failure::input(anyhow!("VEXL_THREADS={raw:?} is not a count")))?;
    if n == 0 {
        return Err(Failure::input(anyhow!("VEXL_THREADS must be at least 1")));
    }
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| Failure::input(anyhow!(e)))
}

fn cmd_norm(args: &NormArgs) -> Outcome {
    if !(args.tol > 0.0) {
        return Err(Failure::input(anyhow!("--tol must be positive")));
    }
    let f: StepFunction<f64> = inputs::read_json(&args.f).map_err(Failure::input)?;
    let p = inputs::parse_exponent(&args.p, Path::new(".")).map_err(Failure::input)?;
    let result = luxemburg_norm(&f, &p, args.tol)?;
    println!("{}", serde_json::to_string(&result).map_err(Failure::input)?);
    Ok(())
}

fn report_table(table: &VerificationTable) -> Outcome {
    print!("{}", table.render());
    let failed: Vec<&str> = table.failed().map(|r| r.check.as_str()).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::verify(anyhow!("failed: {}", failed.join("; "))))
    }
}

fn check_pipeline_file(path: &Path) -> Outcome<(ExponentPipeline<f64>, VerificationTable)> {
    let file: PipelineFile<f64> = inputs::read_json(path).map_err(Failure::input)?;
    // A file that cannot even be reassembled fails verification, not input parsing.
    file.check().map_err(|e| Failure::verify(anyhow!("{}: {e}", path.display())))
}

fn cmd_pipeline(args: &PipelineArgs) -> Outcome {
    if let Some(path) = &args.check {
        let (_, table) = check_pipeline_file(path)?;
        return report_table(&table);
    }
    let (run, base) = match &args.config {
        Some(path) => (inputs::read_json::<PipelineRun>(path).map_err(Failure::input)?, path.parent().unwrap_or(Path::new(".")).to_path_buf()),
        None => (PipelineRun::default(), PathBuf::from(".")),
    };
    let seed_spec = args.seed.clone().or(run.seed).unwrap_or_else(|| "named:log_conjugate:1".into());
    let seed_p = inputs::parse_exponent(&seed_spec, &base).map_err(Failure::input)?;
    let a = args.a.or(run.a);
    let seed = validate_seed(&seed_p, a, &default_witnesses())?;

    let mut l = args.l.clone().unwrap_or(run.l);
    if let Some(path) = &args.thetas_from {
        let report: ExperimentReport = inputs::read_json(path).map_err(Failure::input)?;
        for r in &report.records {
            if args.thetas_n.is_empty() || args.thetas_n.contains(&r.n) {
                l.extend(&r.thetas);
            }
        }
        if let Some(n) = args.thetas_n.iter().find(|n| !report.records.iter().any(|r| r.n == **n)) {
            return Err(Failure::input(anyhow!("no record with N = {n} in {}", path.display())));
        }
    }
    let config = PipelineConfig {
        k: args.k.or(run.k).unwrap_or(DEFAULT_K),
        resolution: args.resolution.or(run.resolution).unwrap_or(DEFAULT_RESOLUTION),
        subcells: args.subcells.or(run.subcells).unwrap_or(DEFAULT_SUBCELLS),
        a,
        c: args.c.or(run.c),
        big_c: args.big_c.or(run.big_c),
        l,
    };
    if config.k == 0 {
        return Err(Failure::input(anyhow!("K >= 1 required")));
    }
    if !config.resolution.is_power_of_two() {
        return Err(Failure::input(anyhow!("resolution {} is not a power of two", config.resolution)));
    }
    let pipeline = ExponentPipeline::build(seed, &config)?;
    let table = pipeline.verify();
    output::write_json(&args.out, &pipeline.to_file()?).map_err(Failure::input)?;
    eprintln!("wrote {}", args.out.display());
    report_table(&table)
}

fn cmd_experiment(args: &ExperimentArgs) -> Outcome {
    let mut config: ExperimentConfig = inputs::read_json(&args.config).map_err(Failure::input)?;
    if let Some(s) = args.system {
        config.system = s;
    }
    if let Some(n) = &args.n_list {
        config.n_list = n.clone();
    }
    if let Some(s) = args.rng_seed {
        config.rng_seed = s;
    }
    if let Some(b) = args.budget {
        config.budget = b;
    }
    if let Some(s) = args.s0 {
        config.s0 = s;
    }
    if let Some(g) = args.grid {
        config.grid = g;
    }
    config.validate()?;

    let base = args.config.parent().unwrap_or(Path::new("."));
    let pipeline_path = match (&args.pipeline, &config.pipeline_ref) {
        (Some(p), _) => Some(p.clone()),
        (None, Some(r)) => Some(inputs::resolve(base, r)),
        (None, None) => None,
    };
    let pipeline = match &pipeline_path {
        _ if config.blocks.is_empty() => None,
        None => return Err(Failure::input(anyhow!("blocks requested but no pipeline given (--pipeline or pipeline_ref)"))),
        Some(path) if !path.exists() => return Err(Failure::input(anyhow!("pipeline file {} not found", path.display()))),
        Some(path) => {
            let (pipeline, table) = check_pipeline_file(path)?;
            if !table.all_passed() {
                report_table(&table)?;
            }
            Some(pipeline)
        }
    };

    let report = run_experiment(&config, pipeline.as_ref())?;
    write_report(&report, &args.out_dir).map_err(Failure::input)?;
    for r in &report.records {
        println!("N = {:>5}  best level {:.6}  c1 = {:.4}  measure {:.4}", r.n, r.best_level, r.c1, r.exceedance_measure);
    }
    if let Some(s) = report.slope {
        println!("slope of best level against ln N: {s:.4}");
    }
    if let Some(agg) = &report.aggregation {
        println!("aggregation: ||g||_1 = {:.6}, ||g||_p_bar = {:.6}", agg.l1_norm, agg.p_bar_norm);
    }
    eprintln!("wrote report to {}", args.out_dir.display());
    Ok(())
}

fn write_report(report: &ExperimentReport, dir: &Path) -> anyhow::Result<()> {
    output::write_json(&dir.join("report.json"), report)?;
    output::write_atomic(&dir.join("records.csv"), report.records_csv().as_bytes())?;
    output::write_atomic(&dir.join("curves.csv"), report.curves_csv().as_bytes())?;
    output::write_atomic(&dir.join("lebesgue.csv"), report.lebesgue_csv().as_bytes())?;
    output::write_atomic(&dir.join("blocks.csv"), report.blocks_csv().as_bytes())?;
    for (name, chart) in charts(report) {
        output::write_atomic(&dir.join(name), chart.render().as_bytes())?;
    }
    Ok(())
}

fn charts(report: &ExperimentReport) -> Vec<(&'static str, Chart)> {
    let exceedance = Chart {
        title: "Exceedance measure of the best kernel sum".into(),
        x_label: "level y".into(),
        y_label: "m{F > y}".into(),
        series: report
            .records
            .iter()
            .map(|r| Series { label: format!("N = {}", r.n), points: r.curve.clone(), mark: Mark::Line })
            .collect(),
    };
    let tau = report.config.tau;
    let growth = Chart {
        title: "Best level against ln N".into(),
        x_label: "ln N".into(),
        y_label: "best level".into(),
        series: vec![
            Series { label: "best level".into(), points: report.records.iter().map(|r| (r.ln_n, r.best_level)).collect(), mark: Mark::Points },
            Series { label: format!("{tau} ln N"), points: report.records.iter().map(|r| (r.ln_n, tau * r.ln_n)).collect(), mark: Mark::Line },
        ],
    };
    let lead = 4.0 / (std::f64::consts::PI * std::f64::consts::PI);
    let lebesgue = Chart {
        title: "Lebesgue constants".into(),
        x_label: "ln m".into(),
        y_label: "L_m".into(),
        series: vec![
            Series { label: "L_m".into(), points: report.lebesgue.iter().map(|r| (r.ln_m, r.value)).collect(), mark: Mark::Points },
            Series { label: "(4/pi^2) ln m".into(), points: report.lebesgue.iter().map(|r| (r.ln_m, lead * r.ln_m)).collect(), mark: Mark::Line },
        ],
    };
    vec![("exceedance.svg", exceedance), ("best_level.svg", growth), ("lebesgue.svg", lebesgue)]
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = init_threads().and_then(|_| match &cli.command {
        Command::Norm(a) => cmd_norm(a),
        Command::Pipeline(a) => cmd_pipeline(a),
        Command::Experiment(a) => cmd_experiment(a),
    });
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.err);
            ExitCode::from(f.code)
        }
    }
}
