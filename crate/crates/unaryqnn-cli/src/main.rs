//! `unaryqnn`: experiment execution from JSON configs, benchmark suites,
//! dataset conversion, and invariant selftests.
//!
//! Progress and log lines go to stderr; command products (dry-run configs,
//! selftest lines, crossover points) go to stdout; artifacts go only to the
//! configured output directory. On failure the process prints one JSON
//! object to stdout and exits nonzero, so callers can branch on exit code
//! and parse the reason.

use std::fs;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

use unaryqnn::error::{Error, Result};
use unaryqnn::eval::{crossover_to_csv, scaling_to_csv};
use unaryqnn::experiment::{estimated_circuit_invocations, nominal_split_sizes};
use unaryqnn::orthonn::ScalingConfig;
use unaryqnn::{
    all_passed, convert_csv, crossover_report, line_plot_svg, loglog_slope, run_experiment,
    run_selftest, scaling_benchmark, table1_runner, table1_to_csv, write_metrics,
    ExperimentConfig, Series, SuiteConfig,
};

#[derive(Parser)]
#[command(name = "unaryqnn", version, about = "Unary-subspace quantum network experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment described by a JSON config
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Print the resolved config and circuit estimates, then exit
        #[arg(long)]
        dry_run: bool,
        /// Override the config's seed
        #[arg(long)]
        seed: Option<u64>,
        /// Override the config's repetition count
        #[arg(long)]
        repetitions: Option<usize>,
        /// Override the config's artifact directory
        #[arg(long)]
        output_dir: Option<PathBuf>,
        /// Override the archive directory (else config, else MEDMNIST_DIR)
        #[arg(long)]
        data_dir: Option<PathBuf>,
    },
    /// Run a suite of experiments and write the combined results table
    Table1 {
        #[arg(long)]
        suite: PathBuf,
        /// Worker threads for independent cells
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Recompute cells even when their metrics.json already exists
        #[arg(long)]
        no_resume: bool,
        /// Override every cell's archive directory
        #[arg(long)]
        data_dir: Option<PathBuf>,
    },
    /// Time square-layer training across widths and write scaling.csv
    BenchScaling {
        /// Widths in 2..=392: comma-separated values, `lo..hi` doubles from
        /// lo and always includes hi
        #[arg(long, value_delimiter = ',', default_value = "32,64,128,256")]
        n: Vec<String>,
        #[arg(long, default_value = "results/scaling")]
        output_dir: PathBuf,
        #[arg(long, default_value_t = ScalingConfig::default().epochs)]
        epochs: usize,
        #[arg(long, default_value_t = ScalingConfig::default().n_samples)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also write a log-log wall-time plot
        #[arg(long)]
        svg: bool,
    },
    /// Tabulate classical vs shot-based step counts and the crossover point
    Crossover {
        #[arg(long, default_value_t = 400)]
        shots: u64,
        #[arg(long, default_value = "results/crossover")]
        output_dir: PathBuf,
        /// Also write a log-log step-count plot
        #[arg(long)]
        svg: bool,
    },
    /// Convert an archive between .npz and .csv (direction by extension)
    Convert {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long = "out")]
        output: PathBuf,
    },
    /// Run fast invariant checks and print one pass/fail line each
    Selftest,
}

struct StderrLogger;

impl log::Log for StderrLogger {
    fn enabled(&self, metadata: &log::Metadata) -> bool {
        metadata.level() <= log::max_level()
    }

    fn log(&self, record: &log::Record) {
        if self.enabled(record.metadata()) {
            eprintln!("[{}] {}", record.level().as_str().to_lowercase(), record.args());
        }
    }

    fn flush(&self) {}
}

static LOGGER: StderrLogger = StderrLogger;

fn init_logger() {
    let level = match std::env::var("UNARYQNN_LOG").ok().as_deref() {
        Some("error") => log::LevelFilter::Error,
        Some("warn") => log::LevelFilter::Warn,
        Some("debug") => log::LevelFilter::Debug,
        Some("trace") => log::LevelFilter::Trace,
        _ => log::LevelFilter::Info,
    };
    let _ = log::set_logger(&LOGGER);
    log::set_max_level(level);
}

fn error_kind(e: &Error) -> &'static str {
    match e {
        Error::InvalidConfig(_) => "invalid_config",
        Error::Dataset(_) => "dataset",
        Error::Csv(_) => "csv",
        Error::Npy { .. } => "npy",
        Error::Npz(_) => "npz",
        Error::Selftest(_) => "selftest",
        Error::Io(_) => "io",
        Error::Json(_) => "json",
        _ => "internal",
    }
}

fn main() {
    init_logger();
    let cli = Cli::parse();
    if let Err(e) = dispatch(cli.command) {
        let payload = serde_json::json!({ "error": e.to_string(), "kind": error_kind(&e) });
        println!("{payload}");
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Run { config, dry_run, seed, repetitions, output_dir, data_dir } => {
            cmd_run(&config, dry_run, seed, repetitions, output_dir, data_dir)
        }
        Command::Table1 { suite, jobs, no_resume, data_dir } => {
            cmd_table1(&suite, jobs, !no_resume, data_dir)
        }
        Command::BenchScaling { n, output_dir, epochs, samples, seed, svg } => {
            cmd_bench_scaling(&n, &output_dir, epochs, samples, seed, svg)
        }
        Command::Crossover { shots, output_dir, svg } => cmd_crossover(shots, &output_dir, svg),
        Command::Convert { input, output } => {
            convert_csv(&input, &output)?;
            log::info!("wrote {}", output.display());
            Ok(())
        }
        Command::Selftest => cmd_selftest(),
    }
}

fn cmd_run(
    config_path: &PathBuf,
    dry_run: bool,
    seed: Option<u64>,
    repetitions: Option<usize>,
    output_dir: Option<PathBuf>,
    data_dir: Option<PathBuf>,
) -> Result<()> {
    let mut config = ExperimentConfig::from_json(&fs::read_to_string(config_path)?)?;
    if let Some(seed) = seed {
        config.seed = seed;
    }
    if let Some(repetitions) = repetitions {
        config.repetitions = repetitions;
    }
    if let Some(output_dir) = output_dir {
        config.output_dir = output_dir;
    }
    if let Some(data_dir) = data_dir {
        config.data_dir = Some(data_dir);
    }
    config.validate()?;
    if dry_run {
        let (n_train, n_test) = nominal_split_sizes(config.dataset);
        let per_rep = estimated_circuit_invocations(&config, n_train, n_test);
        let report = serde_json::json!({
            "resolved_config": config,
            "nominal_split_sizes": { "train": n_train, "test": n_test },
            "estimated_circuit_invocations_per_rep": per_rep,
            "estimated_circuit_invocations_total": per_rep * config.repetitions as u64,
        });
        println!("{}", serde_json::to_string_pretty(&report)?);
        return Ok(());
    }
    let result = run_experiment(&config)?;
    let path = write_metrics(&result)?;
    let s = &result.summary;
    log::info!(
        "{}: test auc {:.4} +- {:.4}, test acc {:.4} +- {:.4} over {} reps",
        config.name,
        s.test_auc_mean,
        s.test_auc_std,
        s.test_acc_mean,
        s.test_acc_std,
        result.reps.len()
    );
    log::info!("wrote {}", path.display());
    Ok(())
}

fn cmd_table1(suite_path: &PathBuf, jobs: usize, resume: bool, data_dir: Option<PathBuf>) -> Result<()> {
    let mut suite = SuiteConfig::from_json(&fs::read_to_string(suite_path)?)?;
    if let Some(dir) = data_dir {
        for cell in &mut suite.cells {
            cell.data_dir = Some(dir.clone());
        }
    }
    let results = table1_runner(&suite, jobs, resume)?;
    fs::create_dir_all(&suite.output_dir)?;
    let table_path = suite.output_dir.join("table1.csv");
    fs::write(&table_path, table1_to_csv(&results))?;
    log::info!("wrote {}", table_path.display());
    Ok(())
}

/// Expands one width token: a plain number, or `lo..hi` doubling from lo
/// with hi always included.
fn expand_widths(tokens: &[String]) -> Result<Vec<usize>> {
    let parse = |s: &str| -> Result<usize> {
        s.trim()
            .parse::<usize>()
            .map_err(|_| Error::InvalidConfig(format!("bad width {s:?}")))
    };
    let mut widths = Vec::new();
    for token in tokens {
        match token.split_once("..") {
            Some((lo, hi)) => {
                let (lo, hi) = (parse(lo)?, parse(hi)?);
                if lo > hi {
                    return Err(Error::InvalidConfig(format!("empty range {token:?}")));
                }
                let mut n = lo;
                while n < hi {
                    widths.push(n);
                    n *= 2;
                }
                widths.push(hi);
            }
            None => widths.push(parse(token)?),
        }
    }
    for &n in &widths {
        if !(2..=392).contains(&n) {
            return Err(Error::InvalidConfig(format!("width {n} outside 2..=392")));
        }
    }
    Ok(widths)
}

fn cmd_bench_scaling(
    tokens: &[String],
    output_dir: &PathBuf,
    epochs: usize,
    samples: usize,
    seed: u64,
    svg: bool,
) -> Result<()> {
    let widths = expand_widths(tokens)?;
    let config = ScalingConfig { epochs, n_samples: samples, seed, ..ScalingConfig::default() };
    let rows = scaling_benchmark(&widths, &config)?;
    fs::create_dir_all(output_dir)?;
    let csv_path = output_dir.join("scaling.csv");
    fs::write(&csv_path, scaling_to_csv(&rows))?;
    log::info!("wrote {}", csv_path.display());
    if rows.len() >= 2 {
        println!("log-log wall-time slope: {:.3}", loglog_slope(&rows)?);
    }
    if svg {
        let series = [Series {
            label: "wall time (s)".into(),
            points: rows.iter().map(|r| (r.n as f64, r.wall_time_s)).collect(),
        }];
        let svg_path = output_dir.join("scaling.svg");
        fs::write(&svg_path, line_plot_svg("training time vs layer width", &series, true, true)?)?;
        log::info!("wrote {}", svg_path.display());
    }
    Ok(())
}

fn cmd_crossover(shots: u64, output_dir: &PathBuf, svg: bool) -> Result<()> {
    let report = crossover_report(shots)?;
    fs::create_dir_all(output_dir)?;
    let csv_path = output_dir.join("crossover.csv");
    fs::write(&csv_path, crossover_to_csv(&report))?;
    log::info!("wrote {}", csv_path.display());
    if svg {
        let series = [
            Series {
                label: "classical steps".into(),
                points: report.rows.iter().map(|r| (r.n as f64, r.classical_steps as f64)).collect(),
            },
            Series {
                label: format!("{shots}-shot steps"),
                points: report.rows.iter().map(|r| (r.n as f64, r.quantum_steps as f64)).collect(),
            },
        ];
        let svg_path = output_dir.join("crossover.svg");
        fs::write(&svg_path, line_plot_svg("steps per inner product", &series, true, true)?)?;
        log::info!("wrote {}", svg_path.display());
    }
    println!("crossover at n = {}", report.crossover_n);
    Ok(())
}

fn cmd_selftest() -> Result<()> {
    let outcomes = run_selftest();
    for o in &outcomes {
        let verdict = if o.passed { "PASS" } else { "FAIL" };
        println!("{verdict}  {}  ({})", o.name, o.detail);
    }
    let failed = outcomes.iter().filter(|o| !o.passed).count();
    println!("{} checks, {failed} failed", outcomes.len());
    if all_passed(&outcomes) {
        Ok(())
    } else {
        Err(Error::Selftest(format!("{failed} of {} checks failed", outcomes.len())))
    }
}
