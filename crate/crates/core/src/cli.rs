//! Command-line front end: `generate`, `run`, `aggregate`, `plan`, `inspect`.
//!
//! Exit codes: 0 success, 1 usage error, 2 data or validation error, 3 I/O
//! error.

use std::ffi::OsString;
use std::fs;
use std::path::PathBuf;
use std::str::FromStr;

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand, ValueEnum};
use rust_decimal::Decimal;

use crate::aggregates::{emit_plot_data, Dataset, DateRange};
use crate::colstore::{decode_meta, decode_segment};
use crate::datagen::{default_spec, generate, GeneratorSpec};
use crate::engine::{run_pipeline, PipelineConfig, DEFAULT_CHUNK_RECORDS};
use crate::error::Error;
use crate::planner::{estimate_cost, plan_executors, Catalog};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;

#[derive(Debug, Parser)]
#[command(
    name = "dnsflow",
    version,
    about = "Batch analytics over DNS resolver logs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a seeded synthetic dataset (logs, CDR, CRM, rules, manifest).
    Generate(GenerateArgs),
    /// Parse, sanitize, enrich and partition logs into columnar segments.
    Run(RunArgs),
    /// Compute a report over a date range of a partitioned dataset.
    Aggregate(AggregateArgs),
    /// Size Spark executors for a cluster and optionally price a run.
    Plan(PlanArgs),
    /// Print the header and column directory of a segment file.
    Inspect(InspectArgs),
}

#[derive(Debug, Args)]
struct GenerateArgs {
    /// Generator spec in TOML; flags below override its fields.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// RNG seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Number of subscribers.
    #[arg(long)]
    subscribers: Option<u32>,
    /// Number of days to generate.
    #[arg(long)]
    days: Option<u32>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Glob pattern for raw log files; may be repeated.
    #[arg(long, required = true)]
    logs: Vec<String>,
    /// CDR lease table (CSV).
    #[arg(long)]
    cdr: PathBuf,
    /// CRM profile table (CSV).
    #[arg(long)]
    crm: PathBuf,
    /// Domain category rules (CSV).
    #[arg(long)]
    rules: PathBuf,
    /// Dataset root to write partitions and run reports into.
    #[arg(long)]
    out: PathBuf,
    /// Worker threads [default: available cores].
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
    workers: Option<u32>,
    /// Lines per work chunk.
    #[arg(long, default_value_t = DEFAULT_CHUNK_RECORDS as u64, value_parser = clap::value_parser!(u64).range(1..))]
    chunk: u64,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ReportKind {
    /// Unique subscribers per (date, hour, server).
    HourlyUsers,
    /// Unique subscribers per (date, hour, category).
    Category,
    /// Queries and unique subscribers per (date, region).
    Region,
}

#[derive(Debug, Args)]
struct AggregateArgs {
    /// Dataset root written by `run`.
    #[arg(long)]
    dataset: PathBuf,
    /// Report to compute.
    #[arg(long, value_enum)]
    report: ReportKind,
    /// First day of the range (YYYY-MM-DD).
    #[arg(long)]
    from: NaiveDate,
    /// Last day of the range, inclusive (YYYY-MM-DD).
    #[arg(long)]
    to: NaiveDate,
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
}

fn parse_minutes(s: &str) -> Result<Decimal, String> {
    let d = Decimal::from_str(s).map_err(|e| e.to_string())?;
    if d.is_sign_negative() {
        return Err("runtime must be non-negative".into());
    }
    Ok(d)
}

#[derive(Debug, Args)]
struct PlanArgs {
    /// Instance catalog CSV [default: built-in catalog].
    #[arg(long)]
    catalog: Option<PathBuf>,
    /// Instance type name, e.g. r5.4xlarge.
    #[arg(long)]
    instance: String,
    /// Number of core (worker) nodes.
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
    nodes: u32,
    /// Measured runtime in minutes; appends the cost of 1 master + N core nodes.
    #[arg(long, value_parser = parse_minutes)]
    runtime_min: Option<Decimal>,
}

#[derive(Debug, Args)]
struct InspectArgs {
    /// Segment file to inspect.
    #[arg(long)]
    segment: PathBuf,
}

enum Failure {
    Usage(String),
    Data(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Data(e)
    }
}

/// Parses `args` (including the program name), runs the subcommand and
/// returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let result = match cli.command {
        Command::Generate(a) => cmd_generate(a),
        Command::Run(a) => cmd_run(a),
        Command::Aggregate(a) => cmd_aggregate(a),
        Command::Plan(a) => cmd_plan(a),
        Command::Inspect(a) => cmd_inspect(a),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            EXIT_USAGE
        }
        Err(Failure::Data(e)) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn cmd_generate(a: GenerateArgs) -> Result<(), Failure> {
    let mut spec = match &a.spec {
        Some(path) => GeneratorSpec::load(path)?,
        None => default_spec(),
    };
    if let Some(seed) = a.seed {
        spec.seed = seed;
    }
    if let Some(n) = a.subscribers {
        spec.subscriber_count = n;
    }
    if let Some(days) = a.days {
        spec.days = days;
    }
    let dataset = generate(&spec, &a.out)?;
    println!("{}", dataset.manifest_path.display());
    Ok(())
}

fn expand_globs(patterns: &[String]) -> Result<Vec<PathBuf>, Failure> {
    let mut inputs = Vec::new();
    for pattern in patterns {
        let paths = glob::glob(pattern)
            .map_err(|e| Failure::Usage(format!("bad glob `{pattern}`: {e}")))?;
        let before = inputs.len();
        for entry in paths {
            let path = entry.map_err(|e| {
                let path = e.path().to_path_buf();
                Error::io(path, e.into())
            })?;
            if path.is_file() {
                inputs.push(path);
            }
        }
        if inputs.len() == before {
            return Err(Failure::Usage(format!("glob `{pattern}` matched no files")));
        }
    }
    inputs.sort();
    inputs.dedup();
    Ok(inputs)
}

fn cmd_run(a: RunArgs) -> Result<(), Failure> {
    let inputs = expand_globs(&a.logs)?;
    let mut config = PipelineConfig::new(inputs, a.cdr, a.crm, a.rules, a.out)
        .with_chunk_records(a.chunk as usize);
    if let Some(workers) = a.workers {
        config = config.with_workers(workers as usize);
    }
    let report = run_pipeline(&config)?;
    print!("{}", report.to_text());
    Ok(())
}

fn cmd_aggregate(a: AggregateArgs) -> Result<(), Failure> {
    if a.from > a.to {
        return Err(Error::Config(format!("empty date range {}..{}", a.from, a.to)).into());
    }
    let dataset = Dataset::open(&a.dataset)?;
    let range = DateRange::new(a.from, a.to);
    let (rows, missing) = match a.report {
        ReportKind::HourlyUsers => {
            let r = dataset.unique_users_hourly(range)?;
            emit_plot_data(&r.rows, &a.out)?;
            (r.rows.len(), r.missing_partitions.len())
        }
        ReportKind::Category => {
            let r = dataset.category_traffic(range)?;
            emit_plot_data(&r.rows, &a.out)?;
            (r.rows.len(), r.missing_partitions.len())
        }
        ReportKind::Region => {
            let r = dataset.region_density(range)?;
            emit_plot_data(&r.rows, &a.out)?;
            (r.rows.len(), r.missing_partitions.len())
        }
    };
    println!("rows: {rows}");
    println!("missing_partitions: {missing}");
    println!("output: {}", a.out.display());
    Ok(())
}

fn cmd_plan(a: PlanArgs) -> Result<(), Failure> {
    let catalog = match &a.catalog {
        Some(path) => Catalog::load(path)?,
        None => Catalog::builtin(),
    };
    let instance = catalog.lookup(&a.instance)?;
    let plan = plan_executors(instance, a.nodes);
    println!("{plan}");
    print!("{}", plan.spark_properties());
    if let Some(minutes) = a.runtime_min {
        let cost = estimate_cost(a.nodes + 1, instance.hourly_rate_usd, minutes);
        println!(
            "cost: nodes={} runtime_minutes={} hourly_rate_usd={} total_usd={}",
            cost.node_count, cost.runtime_minutes, instance.hourly_rate_usd, cost.total_cost_usd
        );
    }
    Ok(())
}

fn cmd_inspect(a: InspectArgs) -> Result<(), Failure> {
    let bytes = fs::read(&a.segment).map_err(|e| Error::io(&a.segment, e))?;
    let meta = decode_meta(&bytes).map_err(|e| Error::segment(&a.segment, e))?;
    // decode fully so payload corruption is reported too
    decode_segment(&bytes).map_err(|e| Error::segment(&a.segment, e))?;
    println!("file: {}", a.segment.display());
    println!("bytes: {}", meta.file_len);
    println!("records: {}", meta.record_count);
    println!("columns: {}", meta.columns.len());
    for c in &meta.columns {
        println!(
            "  {:<14} {:<12} offset={} length={}",
            c.name,
            c.encoding.name(),
            c.offset,
            c.length
        );
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(args: &[&str]) -> i32 {
        main_with_args(std::iter::once("dnsflow").chain(args.iter().copied()))
    }

    #[test]
    fn help_and_usage_codes() {
        assert_eq!(run(&["--help"]), 0);
        for sub in ["generate", "run", "aggregate", "plan", "inspect"] {
            assert_eq!(run(&[sub, "--help"]), 0, "{sub}");
        }
        assert_eq!(run(&[]), 1);
        assert_eq!(run(&["bogus"]), 1);
        assert_eq!(run(&["generate"]), 1);
        assert_eq!(
            run(&["plan", "--instance", "r5.4xlarge", "--nodes", "0"]),
            1
        );
    }

    #[test]
    fn plan_codes() {
        assert_eq!(
            run(&["plan", "--instance", "r5.4xlarge", "--nodes", "10"]),
            0
        );
        assert_eq!(run(&["plan", "--instance", "nope", "--nodes", "10"]), 2);
        assert_eq!(
            run(&[
                "plan",
                "--instance",
                "m5.xlarge",
                "--nodes",
                "10",
                "--runtime-min",
                "40"
            ]),
            0
        );
    }

    #[test]
    fn bad_globs_are_usage_errors() {
        let dir = tempfile::tempdir().unwrap();
        let d = dir.path().to_str().unwrap();
        let base = [
            "run", "--cdr", "c", "--crm", "m", "--rules", "r", "--out", d,
        ];
        let mut args = base.to_vec();
        args.extend(["--logs", "[unclosed"]);
        assert_eq!(run(&args), 1);
        let nothing = format!("{d}/none-*.log");
        let mut args = base.to_vec();
        args.extend(["--logs", &nothing]);
        assert_eq!(run(&args), 1);
    }
}
