//! Command-line interface. Exit codes: 0 success, 1 usage error, 2 data error.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};

use crate::config::Config;
use crate::error::{Error, Result};
use crate::evaluate::{evaluate_records, score_images, EvalSettings};
use crate::io::{read_labels, read_predictions, Format, IoError};
use crate::plot::write_bland_altman;
use crate::repeatability::{limits_of_agreement, select_max_diff_pair, SignedPolicy};
use crate::report::{to_canonical_json, RepeatabilityReport};
use crate::stats::compare_models;
use crate::toynet::run_demo;

#[derive(Debug, Parser)]
#[command(
    name = "retest",
    version,
    about = "Test-retest repeatability evaluation"
)]
struct Cli {
    /// Seed for bootstrap, sign policy and demo.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Prediction file format (default: from the extension).
    #[arg(long, global = true)]
    format: Option<Format>,
    /// Significance level.
    #[arg(long, global = true)]
    alpha: Option<f64>,
    /// MC samples per image.
    #[arg(long, global = true)]
    mc_samples: Option<usize>,
    /// stable-order or random-seeded.
    #[arg(long, global = true)]
    signed_policy: Option<SignedPolicy>,
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Metric {
    Loa,
    Accuracy,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Per-image severity scores as CSV.
    Score {
        #[arg(long)]
        predictions: PathBuf,
        /// Output CSV (default: stdout).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Full repeatability report.
    Evaluate {
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also write the Bland-Altman plot here.
        #[arg(long)]
        plot: Option<PathBuf>,
        /// Model label in the report (default: predictions file stem).
        #[arg(long)]
        label: Option<String>,
    },
    /// Bland-Altman SVG from predictions alone.
    Plot {
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        title: Option<String>,
    },
    /// Train and evaluate the toy dropout network demonstrator.
    Demo {
        #[arg(long)]
        out: PathBuf,
    },
    /// Welch test between two reports' bootstrap replicates.
    Compare {
        a: PathBuf,
        b: PathBuf,
        #[arg(long, value_enum, default_value = "loa")]
        metric: Metric,
        /// Output JSON (default: stdout).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new()
        .filter_level(level)
        .parse_default_env()
        .format_timestamp(None)
        .try_init();
}

fn effective_config(cli: &Cli) -> Result<Config> {
    let mut config = match &cli.config {
        Some(path) => Config::load(path)?,
        None => Config::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(alpha) = cli.alpha {
        config.alpha = alpha;
    }
    if let Some(n) = cli.mc_samples {
        config.mc_samples = Some(n);
    }
    if let Some(p) = cli.signed_policy {
        config.signed_policy = p;
    }
    config.validate()?;
    Ok(config)
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|source| IoError::Write {
            path: dir.to_path_buf(),
            source,
        })?;
    }
    std::fs::write(path, text).map_err(|source| {
        IoError::Write {
            path: path.to_path_buf(),
            source,
        }
        .into()
    })
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => write_file(path, text),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .map_err(|source| IoError::Write {
                    path: PathBuf::from("<stdout>"),
                    source,
                })?;
            Ok(())
        }
    }
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "model".into())
}

fn load_predictions(cli: &Cli, path: &Path) -> Result<Vec<crate::PredictionRecord>> {
    let format = Format::resolve(cli.format, path)?;
    Ok(read_predictions(path, format)?)
}

fn read_report(path: &Path) -> Result<RepeatabilityReport> {
    let text = std::fs::read_to_string(path).map_err(|source| IoError::Open {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|e| {
        IoError::Parse {
            path: path.to_path_buf(),
            line: e.line() as u64,
            message: e.to_string(),
        }
        .into()
    })
}

fn execute(cli: &Cli) -> Result<()> {
    let config = effective_config(cli)?;
    match &cli.command {
        Command::Score { predictions, out } => {
            let records = load_predictions(cli, predictions)?;
            let images = score_images(&records, config.mc_samples, config.evaluate.ordinal_decode)?;
            let mut w = csv::Writer::from_writer(Vec::new());
            let csv_err = |e: csv::Error| Error::Evaluate(e.to_string());
            w.write_record([
                "patient_id",
                "image_id",
                "mc_samples",
                "severity",
                "range_max",
                "clamped",
                "predicted_class",
            ])
            .map_err(csv_err)?;
            for im in &images {
                w.write_record([
                    im.patient_id.clone(),
                    im.image_id.clone(),
                    im.mc_samples.to_string(),
                    im.severity.value.to_string(),
                    im.severity.range_max.to_string(),
                    u8::from(im.severity.clamped).to_string(),
                    im.predicted_class.to_string(),
                ])
                .map_err(csv_err)?;
            }
            let bytes = w.into_inner().map_err(|e| Error::Evaluate(e.to_string()))?;
            emit(out.as_deref(), &String::from_utf8_lossy(&bytes))
        }
        Command::Evaluate {
            predictions,
            labels,
            out,
            plot,
            label,
        } => {
            let records = load_predictions(cli, predictions)?;
            let labels = read_labels(labels)?;
            let label = label.clone().unwrap_or_else(|| stem(predictions));
            let settings = EvalSettings::from_config(&config, &label);
            let ev = evaluate_records(&records, &labels, &settings)?;
            let json = ev
                .report
                .to_json()
                .map_err(|e| Error::Evaluate(e.to_string()))?;
            write_file(out, &json)?;
            if let Some(svg) = plot {
                write_bland_altman(svg, &ev.differences, &ev.report.loa, &label)?;
            }
            let r = &ev.report;
            println!(
                "{label}: LoA width fraction {:.4} [{:.4}, {:.4}], accuracy {:.4} [{:.4}, {:.4}], {} paired patients",
                r.loa.width_fraction,
                r.loa_ci.ci_low,
                r.loa_ci.ci_high,
                r.accuracy,
                r.accuracy_ci.ci_low,
                r.accuracy_ci.ci_high,
                r.n_paired_patients
            );
            Ok(())
        }
        Command::Plot {
            predictions,
            out,
            title,
        } => {
            let records = load_predictions(cli, predictions)?;
            let images = score_images(&records, config.mc_samples, config.evaluate.ordinal_decode)?;
            let range_max = images
                .first()
                .map(|i| i.severity.range_max)
                .ok_or_else(|| Error::Evaluate("no prediction records".into()))?;
            let mut by_patient: std::collections::BTreeMap<&str, Vec<(String, f64)>> =
                Default::default();
            for im in &images {
                by_patient
                    .entry(&im.patient_id)
                    .or_default()
                    .push((im.image_id.clone(), im.severity.value));
            }
            let mut diffs = Vec::new();
            for (pid, scores) in &by_patient {
                if scores.len() >= 2 {
                    diffs.push(select_max_diff_pair(pid, scores)?);
                }
            }
            crate::repeatability::apply_sign_policy(&mut diffs, config.signed_policy, config.seed);
            let loa = limits_of_agreement(&diffs, range_max, config.evaluate.min_patients)?;
            let title = title.clone().unwrap_or_else(|| stem(predictions));
            write_bland_altman(out, &diffs, &loa, &title)
        }
        Command::Demo { out } => {
            let demo = run_demo(&config)?;
            demo.write_to(out)?;
            print!("{}", demo.table());
            let s = &demo.summary;
            println!(
                "mean LoA width improvement over binary, multiclass and ordinal heads: {:.2} points ({:.2}% relative)",
                s.mean_classification_width_points, s.mean_classification_width_relative_percent
            );
            for v in &demo.verdicts {
                println!(
                    "{} {} vs {}: p = {:.3e}{}",
                    v.metric_name,
                    v.model_a,
                    v.model_b,
                    v.p_value,
                    if v.significant { " (significant)" } else { "" }
                );
            }
            println!(
                "wrote {} files to {}",
                demo.models.len() * 2 + 3,
                out.display()
            );
            Ok(())
        }
        Command::Compare { a, b, metric, out } => {
            let (ra, rb) = (read_report(a)?, read_report(b)?);
            let (name, xa, xb) = match metric {
                Metric::Loa => ("loa_width_fraction", &ra.loa_ci, &rb.loa_ci),
                Metric::Accuracy => ("accuracy", &ra.accuracy_ci, &rb.accuracy_ci),
            };
            let verdict = compare_models(
                name,
                &ra.model_label,
                &rb.model_label,
                &xa.replicates,
                &xb.replicates,
                config.alpha,
            )?;
            let json = to_canonical_json(&verdict).map_err(|e| Error::Evaluate(e.to_string()))?;
            emit(out.as_deref(), &json)
        }
    }
}

/// Parses `argv` (including the program name) and runs; returns the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
        }
    };
    init_logging(cli.verbose);
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}
