//! `gawno` command-line tool: train, detect, isolate, evaluate and synth.

mod config;

use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context, Result};
use clap::{Parser, Subcommand};
use gawno::data::{fit_norm, inject_fault, load_csv, normalize, synth_process, window, SeriesTable};
use gawno::fdi::{
    auc_roc, detect, fit_threshold_on, isolate, metrics, ConfusionCounts, FaultReport, Reconstructor,
    ThresholdModel,
};
use gawno::train::{atomic_write, load_checkpoint_for, save_checkpoint, train, Checkpoint};
use gawno::GawnoError;

use crate::config::{ConfigError, RunConfig};

#[derive(Debug, Parser)]
#[command(name = "gawno", version, about = "Wavelet neural operator GAN for fault detection and isolation")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Run configuration (TOML). Built-in defaults are used when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Overrides the command's primary output path.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train a model on `paths.data` and write a checkpoint and training log.
    Train {
        /// Overrides `train.epochs`.
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Fit a threshold on `paths.normal`, score `paths.data` and write a report.
    Detect,
    /// Rank variables by their standardized residual over the flagged region.
    Isolate,
    /// Score a report against the labels of `paths.data`.
    Evaluate,
    /// Write a synthetic series, optionally with an injected fault.
    Synth,
    /// Print the effective configuration.
    Config,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}

/// 1 configuration, 2 data, 3 numerical failure.
fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.downcast_ref::<ConfigError>().is_some() {
            return 1;
        }
        if let Some(e) = cause.downcast_ref::<GawnoError>() {
            return match e {
                GawnoError::NonFinite { .. } => 3,
                GawnoError::Parse { .. }
                | GawnoError::Data(_)
                | GawnoError::Io(_)
                | GawnoError::Length { .. }
                | GawnoError::InsufficientData(_)
                | GawnoError::UndefinedAuc(_)
                | GawnoError::CorruptCheckpoint(_) => 2,
                _ => 1,
            };
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return 2;
        }
    }
    1
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    match cli.command {
        Command::Train { epochs } => {
            if let Some(e) = epochs {
                cfg.train.epochs = e;
            }
            cmd_train(&cfg, cli.out)
        }
        Command::Detect => cmd_detect(&cfg, cli.out),
        Command::Isolate => cmd_isolate(&cfg),
        Command::Evaluate => cmd_evaluate(&cfg),
        Command::Synth => cmd_synth(&cfg, cli.out),
        Command::Config => {
            print!("{}", cfg.to_toml()?);
            Ok(())
        }
    }
}

fn required<'a>(path: &'a Option<PathBuf>, key: &str) -> Result<&'a Path> {
    path.as_deref()
        .ok_or_else(|| ConfigError(format!("`paths.{key}` is not set")).into())
}

fn read_table(path: &Path) -> Result<SeriesTable> {
    load_csv(path).with_context(|| format!("reading `{}`", path.display()))
}

fn write_with<F>(path: &Path, f: F) -> Result<()>
where
    F: FnOnce(&mut Vec<u8>) -> gawno::Result<()>,
{
    let mut buf = Vec::new();
    f(&mut buf)?;
    atomic_write(path, &buf).with_context(|| format!("writing `{}`", path.display()))
}

fn cmd_train(cfg: &RunConfig, out: Option<PathBuf>) -> Result<()> {
    let data = required(&cfg.paths.data, "data")?;
    let checkpoint = out.or_else(|| cfg.paths.checkpoint.clone()).ok_or_else(|| {
        ConfigError("no checkpoint path: set `paths.checkpoint` or pass --out".into())
    })?;
    let table = read_table(data)?;
    log::info!("read {} rows from {}", table.len(), data.display());
    let (gen, disc) = cfg.model.specs(table.features());
    gen.validate().map_err(|e| ConfigError(e.to_string()))?;
    let tc = cfg.train_config();
    tc.validate().map_err(|e| ConfigError(e.to_string()))?;

    let stats = fit_norm(&table)?;
    let windows = window(&normalize(&table, &stats)?, gen.n, cfg.train.stride.unwrap_or(gen.n))?;
    let (gan, log) = train(&windows.batch, &gen, &disc, &tc)?;

    let log_path = cfg.paths.log.clone().unwrap_or_else(|| default_log_path(&checkpoint));
    save_checkpoint(
        &Checkpoint {
            gan,
            train: tc,
            norm: Some(stats),
        },
        &checkpoint,
    )
    .with_context(|| format!("writing `{}`", checkpoint.display()))?;
    write_with(&log_path, |buf| log.write_csv(buf))?;
    if let Some(last) = log.records.last() {
        println!(
            "trained {} epochs on {} windows; final L_D {:.4}, L_G {:.4}, probe error {:.4}",
            log.records.len(),
            windows.len(),
            last.loss_d,
            last.loss_g,
            last.probe_error
        );
    } else {
        println!("0 epochs; wrote initial weights");
    }
    println!("checkpoint {}", checkpoint.display());
    println!("log {}", log_path.display());
    Ok(())
}

fn default_log_path(checkpoint: &Path) -> PathBuf {
    let stem = checkpoint.file_stem().map_or("model".into(), |s| s.to_string_lossy());
    checkpoint.with_file_name(format!("{stem}_log.csv"))
}

/// Loads the checkpoint, fits the threshold on the normal split and scores the data.
fn detection(cfg: &RunConfig) -> Result<(SeriesTable, ThresholdModel, FaultReport)> {
    let data = read_table(required(&cfg.paths.data, "data")?)?;
    let normal = read_table(required(&cfg.paths.normal, "normal")?)?;
    let ck_path = required(&cfg.paths.checkpoint, "checkpoint")?;
    if normal.names() != data.names() {
        return Err(anyhow!(GawnoError::Data(
            "normal and data files have different variables".into()
        )));
    }
    let (gen, disc) = cfg.model.specs(data.features());
    let ck = load_checkpoint_for(ck_path, &gen, &disc)
        .with_context(|| format!("loading `{}`", ck_path.display()))?;
    let stats = ck
        .norm
        .ok_or_else(|| ConfigError("checkpoint carries no normalization statistics".into()))?;
    let rec = Reconstructor::new(&gen, &ck.gan.g, cfg.detect.draws, cfg.seed)?;
    let model = fit_threshold_on(&rec, &normalize(&normal, &stats)?, cfg.detect.k)?;
    let report = detect(&normalize(&data, &stats)?, &model, &rec)?;
    Ok((data, model, report))
}

fn cmd_detect(cfg: &RunConfig, out: Option<PathBuf>) -> Result<()> {
    let report_path = out
        .or_else(|| cfg.paths.report.clone())
        .ok_or_else(|| ConfigError("no report path: set `paths.report` or pass --out".into()))?;
    let (_, model, report) = detection(cfg)?;
    write_with(&report_path, |buf| report.write_csv(buf))?;
    match report.onset {
        Some(t) => println!("onset {t}"),
        None => println!("onset none"),
    }
    println!("flagged fraction {:.4}", report.flagged_fraction());
    println!("threshold {:.6}", model.global_threshold());
    Ok(())
}

fn cmd_isolate(cfg: &RunConfig) -> Result<()> {
    let (data, model, report) = detection(cfg)?;
    let ranking = isolate(&report, &model);
    if ranking.is_empty() {
        println!("no flagged timesteps");
    }
    for (rank, (f, z)) in ranking.iter().enumerate() {
        println!("{} {} {z:.4}", rank + 1, data.names()[*f]);
    }
    Ok(())
}

fn cmd_evaluate(cfg: &RunConfig) -> Result<()> {
    let report_path = required(&cfg.paths.report, "report")?;
    let data_path = required(&cfg.paths.data, "data")?;
    let report = File::open(report_path)
        .map_err(GawnoError::from)
        .and_then(|f| FaultReport::read_csv(BufReader::new(f)))
        .with_context(|| format!("reading `{}`", report_path.display()))?;
    let data = read_table(data_path)?;
    let labels = data.labels().ok_or_else(|| {
        GawnoError::Data(format!("`{}` has no label column", data_path.display()))
    })?;
    let counts = ConfusionCounts::from_flags(&report.flags, labels)?;
    let m = metrics(&counts);
    for w in &m.warnings {
        log::warn!("{w}");
    }
    let auc = match auc_roc(&report.score, labels) {
        Ok(a) => a,
        Err(e) => {
            log::warn!("{e}");
            f64::NAN
        }
    };
    println!(
        "precision={} recall={} f1={} auc={} fp={} fn={}",
        m.precision, m.recall, m.f1, auc, counts.fp, counts.fn_
    );
    println!();
    println!("{:<10} {:>10}", "metric", "value");
    println!("{:<10} {:>10.4}", "precision", m.precision);
    println!("{:<10} {:>10.4}", "recall", m.recall);
    println!("{:<10} {:>10.4}", "F1", m.f1);
    println!("{:<10} {:>10.4}", "AUC", auc);
    println!("{:<10} {:>10}", "TP", counts.tp);
    println!("{:<10} {:>10}", "FP", counts.fp);
    println!("{:<10} {:>10}", "FN", counts.fn_);
    println!("{:<10} {:>10}", "TN", counts.tn);
    Ok(())
}

fn cmd_synth(cfg: &RunConfig, out: Option<PathBuf>) -> Result<()> {
    let out = out
        .or_else(|| cfg.paths.out.clone())
        .ok_or_else(|| ConfigError("no output path: set `paths.out` or pass --out".into()))?;
    cfg.synth.validate().map_err(|e| ConfigError(e.to_string()))?;
    let mut table = synth_process(&cfg.synth, cfg.seed)?;
    let fault = cfg.fault.spec();
    match &fault {
        Some(spec) => {
            spec.validate(&table).map_err(|e| ConfigError(e.to_string()))?;
            table = inject_fault(&table, spec, cfg.seed)?;
        }
        None => table.set_labels(Some(vec![0; table.len()]))?,
    }
    write_with(&out, |buf| table.write_csv(buf))?;
    let fault_desc = fault.map_or("none".to_string(), |s| {
        format!("{} on {} onset {}", cfg.fault.kind, table.names()[s.target], s.onset)
    });
    println!("T={} F={} fault={fault_desc}", table.len(), table.features());
    println!("wrote {}", out.display());
    Ok(())
}
