//! `repps` command-line front end.
//!
//! Exit codes: 0 on success, 1 on internal failure (such as an unwritable
//! standard output), 2 on invalid input or arguments. A closed pipe on
//! standard output ends the command quietly.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::datagen::{generate, GenSpec};
use crate::dataset::{read_counter_trace, read_dataset, read_power_trace, CounterName, Dataset};
use crate::error::Error;
use crate::regress::{fit_freq_baseline, fit_ols, predict_dataset, validate, Algorithm, PowerModel};
use crate::search::{kfold_split, run_search, SearchConfig};
use crate::sync::{coverage_report, synchronize, SyncConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INTERNAL: i32 = 1;
pub const EXIT_INPUT: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "repps", version, about = "Counter-based power model generation")]
pub struct Cli {
    /// Log progress to standard error.
    #[arg(short, long, global = true)]
    pub verbose: bool,

    /// Seed for fold assignment (train) or data generation (gen).
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Join a counter trace with a power trace into a dataset.
    Sync {
        #[arg(long)]
        pmc: PathBuf,
        #[arg(long)]
        power: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Cycle slack allowed when matching keys.
        #[arg(long, default_value_t = 0)]
        tolerance: u64,
        /// Run label for the dataset rows (default: derived from --pmc).
        #[arg(long)]
        run: Option<String>,
        /// Fail instead of dropping unmatched keys.
        #[arg(long)]
        strict: bool,
    },
    /// Select counters by cross-validated search and fit the final model.
    Train {
        /// Dataset CSV; repeat to concatenate several files.
        #[arg(long = "dataset", required = true)]
        datasets: Vec<PathBuf>,
        #[arg(long, default_value = "bottom_up", value_parser = parse_algorithm)]
        algorithm: Algorithm,
        #[arg(long, default_value_t = 10)]
        folds: usize,
        #[arg(long)]
        max_events: Option<usize>,
        /// Comma-separated starting counters.
        #[arg(long)]
        initial: Option<String>,
        /// Comma-separated candidate pool in tie-break order (default: all).
        #[arg(long)]
        pool: Option<String>,
        #[arg(long)]
        model_out: PathBuf,
        #[arg(long)]
        report_out: Option<PathBuf>,
        /// Evaluate candidates on one thread.
        #[arg(long)]
        sequential: bool,
    },
    /// Fit a model on a fixed predictor set, or the frequency-only baseline.
    Fit {
        #[arg(long)]
        dataset: PathBuf,
        /// Comma-separated predictors (empty for intercept only).
        #[arg(long, conflicts_with = "baseline")]
        predictors: Option<String>,
        /// Regress power on sensor frequency alone.
        #[arg(long)]
        baseline: bool,
        #[arg(long)]
        model_out: PathBuf,
    },
    /// Report MAPE of a model on a dataset.
    Validate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        /// Per-sample RUN,TIME,ACTUAL_W,PREDICTED_W output.
        #[arg(long)]
        trace_out: Option<PathBuf>,
    },
    /// Print predicted power for every dataset row as CSV.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
    },
    /// Generate synthetic traces, ground-truth dataset and model.
    Gen {
        /// Generator spec JSON (default: built-in single-counter spec).
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        out_prefix: PathBuf,
    },
}

fn parse_algorithm(s: &str) -> Result<Algorithm, String> {
    match s.parse::<Algorithm>() {
        Ok(Algorithm::Manual) | Err(_) => {
            Err("expected bottom_up, top_down or exhaustive".to_string())
        }
        Ok(a) => Ok(a),
    }
}

#[derive(Debug)]
enum Failure {
    Input(Error),
    Internal(String),
    BrokenPipe,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Input(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        if e.kind() == std::io::ErrorKind::BrokenPipe {
            Failure::BrokenPipe
        } else {
            Failure::Internal(e.to_string())
        }
    }
}

/// Parses `args` (including the program name) and runs the command,
/// writing human-readable output to `out`. Returns the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let level = if cli.verbose { log::LevelFilter::Info } else { log::LevelFilter::Warn };
    let _ = env_logger::Builder::new().filter_level(level).try_init();
    match execute(cli, out) {
        Ok(()) => EXIT_OK,
        Err(Failure::Input(e)) => {
            eprintln!("error: {e}");
            EXIT_INPUT
        }
        Err(Failure::BrokenPipe) => EXIT_OK,
        Err(Failure::Internal(msg)) => {
            eprintln!("internal error: {msg}");
            EXIT_INTERNAL
        }
    }
}

/// Unwraps the I/O error inside a csv error so a closed pipe stays
/// recognisable.
fn csv_io(e: csv::Error) -> std::io::Error {
    match e.into_kind() {
        csv::ErrorKind::Io(e) => e,
        kind => std::io::Error::other(format!("{kind:?}")),
    }
}

fn names(list: Option<&str>) -> Result<Vec<CounterName>, Error> {
    list.map_or(Ok(vec![]), CounterName::parse_list)
}

fn execute(cli: Cli, out: &mut dyn Write) -> Result<(), Failure> {
    match cli.command {
        Command::Sync {
            pmc,
            power,
            out: dest,
            tolerance,
            run,
            strict,
        } => {
            let mut pmc = read_counter_trace(&pmc)?;
            let mut pwr = read_power_trace(&power)?;
            if let Some(run) = run {
                pmc = pmc.with_run_id(run.clone());
                pwr = pwr.with_run_id(run);
            }
            let cfg = SyncConfig {
                key_tolerance: tolerance,
                drop_unmatched: !strict,
            };
            writeln!(out, "{}", coverage_report(&pmc, &pwr, &cfg))?;
            let ds = synchronize(&pmc, &pwr, &cfg)?;
            ds.write_csv(&dest)?;
            writeln!(out, "wrote {} rows to {}", ds.len(), dest.display())?;
        }
        Command::Train {
            datasets,
            algorithm,
            folds,
            max_events,
            initial,
            pool,
            model_out,
            report_out,
            sequential,
        } => {
            let multiple = datasets.len() > 1;
            let parts = datasets
                .iter()
                .map(|p| read_dataset(p))
                .collect::<Result<Vec<_>, _>>()?;
            let ds = Dataset::concat(parts, multiple)?;
            let cfg = SearchConfig {
                algorithm,
                folds,
                initial_set: names(initial.as_deref())?,
                max_events,
                candidate_pool: names(pool.as_deref())?,
                fold_seed: cli.seed.unwrap_or(0),
                parallel: !sequential,
            };
            let split = kfold_split(&ds, folds, cfg.fold_seed)?;
            writeln!(
                out,
                "{} rows, {} run(s); {folds} folds aligned by {:?}",
                ds.len(),
                ds.run_ids().len(),
                split.mode
            )?;
            let report = run_search(&ds, &cfg)?;
            report.final_model.write_json(&model_out)?;
            if let Some(path) = report_out {
                report.write_json(&path)?;
            }
            let meta = report.final_model.training().expect("search sets training metadata");
            writeln!(
                out,
                "selected [{}] ({:?})",
                report
                    .selected
                    .iter()
                    .map(CounterName::as_str)
                    .collect::<Vec<_>>()
                    .join(","),
                report.stop_reason
            )?;
            writeln!(out, "{}", report.final_model)?;
            match meta.cv_mape_pct {
                Some(cv) => writeln!(out, "CV-MAPE {cv:.2}%")?,
                None => writeln!(out, "CV-MAPE unavailable")?,
            }
            writeln!(out, "train MAPE {:.2}%", meta.train_mape_pct)?;
        }
        Command::Fit {
            dataset,
            predictors,
            baseline,
            model_out,
        } => {
            let ds = read_dataset(&dataset)?;
            let (model, diag) = if baseline {
                fit_freq_baseline(&ds)?
            } else {
                fit_ols(&ds, &names(predictors.as_deref())?)?
            };
            model.write_json(&model_out)?;
            writeln!(out, "{model}")?;
            writeln!(out, "train MAPE {:.2}%", diag.train_mape_pct)?;
            if diag.condition_warning {
                writeln!(out, "warning: ill-conditioned design")?;
            }
        }
        Command::Validate {
            model,
            dataset,
            trace_out,
        } => {
            let model = PowerModel::read_json(&model)?;
            let ds = read_dataset(&dataset)?;
            let v = validate(&model, &ds)?;
            if let Some(path) = trace_out {
                v.write_trace_csv(&path)?;
            }
            writeln!(out, "MAPE {:.2}%", v.mape_pct)?;
        }
        Command::Predict { model, dataset } => {
            let model = PowerModel::read_json(&model)?;
            let ds = read_dataset(&dataset)?;
            let predicted = predict_dataset(&model, &ds)?;
            let mut w = csv::Writer::from_writer(out);
            w.write_record(["RUN", "TIME", "PREDICTED_W"]).map_err(csv_io)?;
            for (row, p) in ds.rows().iter().zip(predicted) {
                w.write_record([row.run_id.clone(), row.time_key.to_string(), p.to_string()])
                    .map_err(csv_io)?;
            }
            w.flush()?;
        }
        Command::Gen { spec, out_prefix } => {
            let mut spec = match spec {
                Some(path) => {
                    let text = std::fs::read_to_string(&path).map_err(|e| Error::Io {
                        path: path.clone(),
                        source: e,
                    })?;
                    GenSpec::from_json(&text)?
                }
                None => GenSpec::default(),
            };
            if let Some(seed) = cli.seed {
                spec.seed = seed;
            }
            let g = generate(&spec)?;
            let files = g.write_files(&out_prefix, &spec.true_model)?;
            for p in files.pmc.iter().chain(&files.power) {
                writeln!(out, "wrote {}", p.display())?;
            }
            writeln!(out, "wrote {} ({} rows)", files.dataset.display(), g.dataset.len())?;
            writeln!(out, "wrote {}", files.model.display())?;
        }
    }
    Ok(())
}
