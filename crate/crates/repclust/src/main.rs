//! Command-line front end: run the replication matrix, fold records into
//! reports, generate blob datasets, and diff fingerprints between runs.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use repclust::harness::records::{read_records, Algorithm, Record, RecordError, ResultRecord};
use repclust::harness::report::{build_report, render_csv, render_markdown};
use repclust::harness::run::run_matrix;
use repclust::harness::{HarnessError, RunConfig};
use repclust::io::write_csv;
use repclust_core::data::make_blobs;
use repclust_core::rng::GeneratorState;

/// Worker-count fallback when neither the command line nor the config
/// names thread counts.
const THREADS_ENV: &str = "REPCLUST_THREADS";

/// Write to stdout, treating a closed pipe as an orderly early exit with
/// `verdict` rather than a crash — `repclust check a b | head` stops
/// reading after a screenful, and the exit status still carries the
/// answer. Rust ignores SIGPIPE, so the failure surfaces here as an
/// io error instead of killing the process the way it would a C tool.
fn emit(verdict: i32, text: std::fmt::Arguments<'_>) {
    let mut stdout = std::io::stdout().lock();
    if let Err(error) = stdout.write_fmt(text) {
        if error.kind() == std::io::ErrorKind::BrokenPipe {
            std::process::exit(verdict);
        }
        eprintln!("cannot write to stdout: {error}");
        std::process::exit(2);
    }
}

#[derive(Parser)]
#[command(name = "repclust", version, about = "Repeatable clustering replication harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute the run matrix described by a JSON config file.
    Run {
        /// Path to the JSON run configuration.
        config: PathBuf,
        /// Comma-separated worker-thread counts, overriding the config
        /// (e.g. `--threads-list 1,2,4,8,16`).
        #[arg(long, value_delimiter = ',')]
        threads_list: Option<Vec<usize>>,
        /// Replications per cell, overriding the config.
        #[arg(long)]
        reps: Option<usize>,
        /// Records file to append to (NDJSON); stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fold a records file into a repeatability report.
    Report {
        /// NDJSON records file produced by `run`.
        records: PathBuf,
        /// Write the markdown rendering here instead of stdout.
        #[arg(long)]
        markdown: Option<PathBuf>,
        /// Also write the long-format CSV rendering here.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Generate a Gaussian blob dataset as CSV (with a `label` column).
    Gen {
        /// Points to draw.
        #[arg(long)]
        n_samples: usize,
        /// Dimensions.
        #[arg(long)]
        n_features: usize,
        /// Number of blob centers.
        #[arg(long)]
        centers: usize,
        /// Per-coordinate standard deviation.
        #[arg(long)]
        cluster_std: f64,
        /// Integer seed for the generator (default 42).
        #[arg(long, conflicts_with = "state")]
        seed: Option<u64>,
        /// Full generator state as `key:counter` hex, instead of a seed.
        #[arg(long)]
        state: Option<String>,
        /// CSV file to write.
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare result fingerprints between two records files; exits
    /// nonzero when any cell differs or is missing from one side.
    Check {
        /// Baseline records file.
        left: PathBuf,
        /// Records file to compare against the baseline.
        right: PathBuf,
    },
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Run { config, threads_list, reps, out } => run(&config, threads_list, reps, out),
        Command::Report { records, markdown, csv } => report(&records, markdown, csv),
        Command::Gen { n_samples, n_features, centers, cluster_std, seed, state, out } => {
            gen(n_samples, n_features, centers, cluster_std, seed, state, &out)
        }
        Command::Check { left, right } => check(&left, &right),
    }
}

fn run(
    config_path: &Path,
    threads_list: Option<Vec<usize>>,
    reps: Option<usize>,
    out: Option<PathBuf>,
) -> Result<()> {
    let mut config = RunConfig::from_path(config_path)
        .with_context(|| format!("loading config {}", config_path.display()))?;
    if let Some(reps) = reps {
        config.replications = reps;
        config.validate().context("after applying --reps")?;
    }
    let thread_counts = resolve_threads(threads_list, &config)?;

    let records = match out {
        Some(path) => {
            let file = File::options()
                .create(true)
                .append(true)
                .open(&path)
                .with_context(|| format!("opening {}", path.display()))?;
            let mut writer = BufWriter::new(file);
            let records = run_matrix(&config, &thread_counts, &mut writer)?;
            eprintln!("wrote {} records to {}", records.len(), path.display());
            records
        }
        None => {
            let stdout = std::io::stdout();
            let mut writer = BufWriter::new(stdout.lock());
            let closed_pipe = |error: &std::io::Error| error.kind() == std::io::ErrorKind::BrokenPipe;
            let records = match run_matrix(&config, &thread_counts, &mut writer) {
                // The reader went away (e.g. `| head`); the records it
                // consumed are valid, there is just no one left to serve.
                Err(HarnessError::Record(RecordError::Io(error))) if closed_pipe(&error) => {
                    return Ok(());
                }
                other => other?,
            };
            match writer.flush() {
                Err(error) if closed_pipe(&error) => return Ok(()),
                other => other.context("flushing records")?,
            }
            records
        }
    };

    let errors = records
        .iter()
        .filter(|record| matches!(record, Record::Error(_)))
        .count();
    if errors > 0 {
        eprintln!("{errors} error record(s); see the stream for details");
    }
    Ok(())
}

/// Thread counts, by precedence: `--threads-list`, the config's
/// `thread_counts`, the `REPCLUST_THREADS` environment variable, then 1.
fn resolve_threads(flag: Option<Vec<usize>>, config: &RunConfig) -> Result<Vec<usize>> {
    if let Some(list) = flag {
        if list.is_empty() || list.contains(&0) {
            bail!("--threads-list must name positive thread counts");
        }
        return Ok(list);
    }
    if !config.thread_counts.is_empty() {
        return Ok(config.thread_counts.clone());
    }
    if let Ok(value) = std::env::var(THREADS_ENV) {
        let count: usize = value
            .trim()
            .parse()
            .with_context(|| format!("{THREADS_ENV}={value:?} is not a thread count"))?;
        if count == 0 {
            bail!("{THREADS_ENV} must be at least 1");
        }
        return Ok(vec![count]);
    }
    Ok(vec![1])
}

fn report(records_path: &Path, markdown: Option<PathBuf>, csv: Option<PathBuf>) -> Result<()> {
    let file = File::open(records_path)
        .with_context(|| format!("opening {}", records_path.display()))?;
    let records = read_records(BufReader::new(file))
        .with_context(|| format!("reading {}", records_path.display()))?;
    let report = build_report(&records)?;

    let rendered = render_markdown(&report);
    match markdown {
        Some(path) => std::fs::write(&path, &rendered)
            .with_context(|| format!("writing {}", path.display()))?,
        None => emit(0, format_args!("{rendered}")),
    }
    if let Some(path) = csv {
        std::fs::write(&path, render_csv(&report))
            .with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

fn gen(
    n_samples: usize,
    n_features: usize,
    centers: usize,
    cluster_std: f64,
    seed: Option<u64>,
    state: Option<String>,
    out: &Path,
) -> Result<()> {
    let state = match state {
        Some(hex) => GeneratorState::from_hex(&hex).context("parsing --state")?,
        None => GeneratorState::from_seed(seed.unwrap_or(42)),
    };
    let dataset = make_blobs(n_samples, n_features, centers, cluster_std, state)
        .context("generating blobs")?;
    write_csv(out, &dataset).with_context(|| format!("writing {}", out.display()))?;
    eprintln!(
        "wrote {}: {} points, {} features, {} classes",
        out.display(),
        dataset.n_samples(),
        dataset.n_features(),
        centers
    );
    Ok(())
}

type CellKey = (String, Algorithm, usize, usize);

fn result_index(records: &[Record]) -> BTreeMap<CellKey, &ResultRecord> {
    records
        .iter()
        .filter_map(|record| match record {
            Record::Result(result) => Some((
                (
                    result.dataset.clone(),
                    result.algorithm,
                    result.thread_count,
                    result.replication,
                ),
                result,
            )),
            _ => None,
        })
        .collect()
}

fn check(left_path: &Path, right_path: &Path) -> Result<()> {
    let read = |path: &Path| -> Result<Vec<Record>> {
        let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
        read_records(BufReader::new(file)).with_context(|| format!("reading {}", path.display()))
    };
    let left_records = read(left_path)?;
    let right_records = read(right_path)?;
    let left = result_index(&left_records);
    let right = result_index(&right_records);

    let mut differences = 0usize;
    let mut shared = 0usize;
    let describe =
        |(dataset, algorithm, threads, replication): &CellKey| -> String {
            format!("{dataset}/{algorithm}/threads={threads}/rep={replication}")
        };
    for (key, left_result) in &left {
        match right.get(key) {
            None => {
                emit(1, format_args!("only in {}: {}\n", left_path.display(), describe(key)));
                differences += 1;
            }
            Some(right_result) => {
                shared += 1;
                let facets: std::collections::BTreeSet<&String> = left_result
                    .fingerprints
                    .keys()
                    .chain(right_result.fingerprints.keys())
                    .collect();
                for facet in facets {
                    let a = left_result.fingerprints.get(facet);
                    let b = right_result.fingerprints.get(facet);
                    if a != b {
                        let show = |v: Option<&String>| {
                            v.map_or("absent".to_string(), |hash| hash[..12].to_string())
                        };
                        emit(
                            1,
                            format_args!(
                                "{} facet {}: {} != {}\n",
                                describe(key),
                                facet,
                                show(a),
                                show(b)
                            ),
                        );
                        differences += 1;
                    }
                }
            }
        }
    }
    for key in right.keys() {
        if !left.contains_key(key) {
            emit(1, format_args!("only in {}: {}\n", right_path.display(), describe(key)));
            differences += 1;
        }
    }

    if differences > 0 {
        emit(1, format_args!("{differences} difference(s) across {shared} shared cell(s)\n"));
        std::process::exit(1);
    }
    emit(0, format_args!("all fingerprints match across {shared} shared cell(s)\n"));
    Ok(())
}
