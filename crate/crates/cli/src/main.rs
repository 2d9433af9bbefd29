use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use bumpscan::calibration::{
    calibrate, load_table, save_table, CalibrationOptions, CriticalValueTable, TableCache,
    DEFAULT_ALPHAS, DEFAULT_REPLICATES,
};
use bumpscan::grids::{build_grid, GridKind};
use bumpscan::simulation::{power_study, write_power_csv, PowerPlan, PowerRow, TableSource};
use bumpscan::statistics::{Evaluator, StatKind};
use bumpscan::transform::{load_sample, pit_transform, NullCdf, SampleFormat};
use bumpscan::Error;
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

const EXIT_REJECT: u8 = 10;
const EXIT_USAGE: u8 = 64;
const EXIT_DATA: u8 = 65;
const EXIT_INTERNAL: u8 = 70;
const TABLE_DIR_ENV: &str = "BUMPSCAN_TABLE_DIR";

#[derive(Debug, Parser)]
#[command(name = "bumpscan", version, about = "Detect an interval of elevated density against a known null")]
struct Cli {
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Base seed for every random stream.
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate the null distribution and write a critical-value table.
    Calibrate(CalibrateArgs),
    /// Test a sample for an elevated interval.
    Detect(DetectArgs),
    /// Run a power study from a config file and print CSV.
    Power(PowerArgs),
    /// Print the approximating set's levels as CSV.
    Grid(GridArgs),
}

#[derive(Debug, Args)]
struct CalibrationArgs {
    /// Monte Carlo replicates.
    #[arg(long = "B", default_value_t = DEFAULT_REPLICATES)]
    replicates: usize,

    /// Interval family (only the scan may be moved onto the scan grid).
    #[arg(long)]
    grid_kind: Option<GridKind>,

    /// Allow quadratic statistics above n = 20000.
    #[arg(long)]
    allow_large: bool,
}

#[derive(Debug, Args)]
struct CalibrateArgs {
    #[arg(long)]
    stat: StatKind,

    #[arg(long)]
    n: usize,

    /// Significance levels stored in the table.
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_ALPHAS)]
    alpha: Vec<f64>,

    #[arg(long)]
    out: PathBuf,

    #[command(flatten)]
    calibration: CalibrationArgs,
}

#[derive(Debug, Args)]
struct DetectArgs {
    /// CSV (one value per row) or JSON lines.
    #[arg(long)]
    data: PathBuf,

    /// Input format; inferred from the extension when omitted.
    #[arg(long)]
    format: Option<SampleFormat>,

    /// Null CDF: uniform, exp:RATE, normal:MEAN,SD or table:PATH.
    #[arg(long)]
    f0: String,

    #[arg(long)]
    stat: StatKind,

    /// Critical-value table from `calibrate`.
    #[arg(long, conflicts_with = "auto_calibrate")]
    table: Option<PathBuf>,

    /// Calibrate on the fly, caching in $BUMPSCAN_TABLE_DIR when set.
    #[arg(long)]
    auto_calibrate: bool,

    #[arg(long, default_value_t = 0.05)]
    alpha: f64,

    /// Write the machine-readable report here.
    #[arg(long)]
    out: Option<PathBuf>,

    /// Print the report as JSON instead of the summary.
    #[arg(long)]
    json: bool,

    #[command(flatten)]
    calibration: CalibrationArgs,
}

#[derive(Debug, Args)]
struct PowerArgs {
    /// TOML file with one or more [[study]] blocks.
    #[arg(long)]
    config: PathBuf,

    /// Write CSV here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,

    /// Table cache directory (default: $BUMPSCAN_TABLE_DIR, else calibrate in memory).
    #[arg(long)]
    tables: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct GridArgs {
    #[arg(long)]
    n: usize,

    #[arg(long, default_value = "scan")]
    kind: GridKind,
}

#[derive(Debug)]
enum Failure {
    Core(Error),
    Output(PathBuf, io::Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

impl Failure {
    fn exit_code(&self) -> u8 {
        match self {
            Failure::Core(e) => match e {
                Error::Domain(_)
                | Error::UnsupportedStat(_)
                | Error::InvalidLevel { .. }
                | Error::MissingTable(_)
                | Error::Config(_) => EXIT_USAGE,
                Error::EmptySample
                | Error::CdfOutOfRange { .. }
                | Error::Parse { .. }
                | Error::SampleTooSmall { .. }
                | Error::GridMismatch(_)
                | Error::VersionMismatch { .. }
                | Error::CorruptTable(_)
                | Error::Io { .. } => EXIT_DATA,
            },
            Failure::Output(..) => EXIT_INTERNAL,
        }
    }

    fn message(&self) -> String {
        match self {
            Failure::Core(e) => e.to_string(),
            Failure::Output(path, e) => format!("cannot write {}: {e}", path.display()),
        }
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

fn write_file(path: &Path, text: &str) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Failure::Output(dir.to_path_buf(), e))?;
    }
    fs::write(path, text).map_err(|e| Failure::Output(path.to_path_buf(), e))
}

fn stdout_write(text: &str) -> CliResult<()> {
    io::stdout()
        .lock()
        .write_all(text.as_bytes())
        .map_err(|e| Failure::Output(PathBuf::from("<stdout>"), e))
}

fn run_calibrate(args: &CalibrateArgs, seed: u64) -> CliResult<u8> {
    let evaluator = Evaluator::with_grid_kind(args.stat, args.n, args.calibration.grid_kind)?;
    let options = CalibrationOptions {
        allow_large_quadratic: args.calibration.allow_large,
    };
    let table = calibrate(&evaluator, args.calibration.replicates, seed, &args.alpha, options)?;
    save_table(&table, &args.out)?;
    let mut text = format!(
        "{} n={} B={} seed={} -> {}\n",
        table.kind(),
        table.n(),
        table.replicates(),
        table.seed(),
        args.out.display()
    );
    for (alpha, c) in table.alphas() {
        text.push_str(&format!("  alpha={alpha}  critical value={c}\n"));
    }
    stdout_write(&text)?;
    Ok(0)
}

#[derive(Debug, Serialize)]
struct TableProvenance {
    source: String,
    #[serde(rename = "B")]
    replicates: usize,
    seed: u64,
    grid_hash: String,
}

#[derive(Debug, Serialize)]
struct DetectReport {
    statistic: StatKind,
    n: usize,
    observed: f64,
    alpha: f64,
    critical_value: f64,
    p_value: f64,
    decision: &'static str,
    interval_pit: Option<[f64; 2]>,
    interval_data: Option<[f64; 2]>,
    argmax: Option<[usize; 2]>,
    table: TableProvenance,
}

fn table_for_detect(
    args: &DetectArgs,
    evaluator: &Evaluator,
    seed: u64,
) -> CliResult<(CriticalValueTable, String)> {
    let options = CalibrationOptions {
        allow_large_quadratic: args.calibration.allow_large,
    };
    let alphas = [args.alpha];
    if let Some(path) = &args.table {
        let table = load_table(path)?;
        table.check_compatible(evaluator)?;
        return Ok((table, path.display().to_string()));
    }
    if !args.auto_calibrate {
        return Err(Error::MissingTable(format!(
            "{} at n = {}; pass --table or --auto-calibrate",
            evaluator.kind(),
            evaluator.n()
        ))
        .into());
    }
    let replicates = args.calibration.replicates;
    match std::env::var_os(TABLE_DIR_ENV) {
        Some(dir) => {
            let cache = TableCache::new(dir);
            let table = cache.get_or_calibrate(evaluator, replicates, seed, &alphas, options)?;
            let source = cache.path_for(evaluator, replicates, seed);
            Ok((table, source.display().to_string()))
        }
        None => Ok((
            calibrate(evaluator, replicates, seed, &alphas, options)?,
            "auto-calibrated".into(),
        )),
    }
}

fn run_detect(args: &DetectArgs, seed: u64) -> CliResult<u8> {
    let format = args
        .format
        .unwrap_or_else(|| SampleFormat::from_path(&args.data));
    let raw = load_sample(&args.data, format)?;
    let f0 = NullCdf::from_spec(&args.f0)?;
    let sample = pit_transform(&raw, &f0)?;
    let evaluator = Evaluator::with_grid_kind(args.stat, sample.n(), args.calibration.grid_kind)?;
    let (table, source) = table_for_detect(args, &evaluator, seed)?;
    let critical_value = table.critical_value(args.alpha)?;
    let result = evaluator.evaluate(&sample)?;
    let reject = result.value > critical_value;

    let interval_pit = result.pit_interval(&sample).map(|(a, b)| [a, b]);
    let interval_data = result.argmax.map(|idx| {
        if args.stat == StatKind::PenScanFixed {
            let nf = sample.n() as f64;
            [f0.quantile(idx.j as f64 / nf), f0.quantile(idx.k as f64 / nf)]
        } else {
            let x = raw.sorted();
            [x[idx.j - 1], x[idx.k - 1]]
        }
    });
    let report = DetectReport {
        statistic: result.kind,
        n: sample.n(),
        observed: result.value,
        alpha: args.alpha,
        critical_value,
        p_value: table.p_value(result.value),
        decision: if reject { "reject" } else { "retain" },
        interval_pit,
        interval_data,
        argmax: result.argmax.map(|idx| [idx.j, idx.k]),
        table: TableProvenance {
            source,
            replicates: table.replicates(),
            seed: table.seed(),
            grid_hash: table.grid_hash().to_string(),
        },
    };
    let json = serde_json::to_string_pretty(&report).expect("report serializes") + "\n";
    if let Some(out) = &args.out {
        write_file(out, &json)?;
    }
    if args.json {
        stdout_write(&json)?;
    } else {
        stdout_write(&summary(&report))?;
    }
    Ok(if reject { EXIT_REJECT } else { 0 })
}

fn summary(r: &DetectReport) -> String {
    let mut s = format!(
        "{}: n = {}, statistic = {:.6}, critical value ({}) = {:.6}, p = {:.4}\n",
        r.statistic, r.n, r.observed, r.alpha, r.critical_value, r.p_value
    );
    s.push_str(&format!(
        "decision: {} H0 at level {}\n",
        r.decision, r.alpha
    ));
    if let (Some(p), Some(x)) = (r.interval_pit, r.interval_data) {
        s.push_str(&format!(
            "most significant interval: [{:.6}, {:.6}] on the PIT scale, [{}, {}] on the data scale\n",
            p[0], p[1], x[0], x[1]
        ));
    }
    s
}

fn run_power(args: &PowerArgs, seed: Option<u64>) -> CliResult<u8> {
    let mut plan = PowerPlan::load(&args.config)?;
    if let Some(seed) = seed {
        for block in &mut plan.study {
            block.seed = seed;
        }
    }
    let dir = args
        .tables
        .clone()
        .or_else(|| std::env::var_os(TABLE_DIR_ENV).map(PathBuf::from));
    let source = match dir {
        Some(dir) => TableSource::Cache(TableCache::new(dir)),
        None => TableSource::Calibrate,
    };
    let mut rows: Vec<PowerRow> = Vec::new();
    for block in &plan.study {
        rows.extend(power_study(block, &source)?);
    }
    let mut buf = Vec::new();
    write_power_csv(&rows, &mut buf)?;
    let text = String::from_utf8(buf).expect("CSV is UTF-8");
    match &args.out {
        Some(out) => write_file(out, &text)?,
        None => stdout_write(&text)?,
    }
    Ok(0)
}

fn run_grid(args: &GridArgs) -> CliResult<u8> {
    let grid = build_grid(args.n, args.kind)?;
    let mut text = String::from("ell,m,d,count\n");
    for level in grid.levels() {
        text.push_str(&format!(
            "{},{},{},{}\n",
            level.ell,
            level.m,
            level.d,
            level.count(args.n)
        ));
    }
    stdout_write(&text)?;
    Ok(0)
}

fn run(cli: &Cli) -> CliResult<u8> {
    let seed = cli.seed.unwrap_or(0);
    match &cli.command {
        Command::Calibrate(args) => run_calibrate(args, seed),
        Command::Detect(args) => run_detect(args, seed),
        Command::Power(args) => run_power(args, cli.seed),
        Command::Grid(args) => run_grid(args),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Some(threads) = cli.threads {
        if threads == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(EXIT_USAGE);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
        {
            eprintln!("error: cannot start thread pool: {e}");
            return ExitCode::from(EXIT_INTERNAL);
        }
    }
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(failure) => {
            eprintln!("error: {}", failure.message());
            ExitCode::from(failure.exit_code())
        }
    }
}
