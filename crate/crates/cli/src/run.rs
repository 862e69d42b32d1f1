//! `run`: execute one experiment and persist its metrics.

use std::fs;
use std::path::{Path, PathBuf};

use chrono::{SecondsFormat, Utc};
use craft_core::simulation::{ExperimentConfig, RoundRecord, SeedConfig};
use craft_core::Simulation;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, ErrorRecord, Result};

pub const MANIFEST: &str = "manifest.json";
pub const ACCURACY_CSV: &str = "accuracy.csv";
pub const SUMMARY_CSV: &str = "summary.csv";
pub const DIAGNOSTICS_CSV: &str = "diagnostics.csv";
pub const HISTOGRAM_CSV: &str = "histogram.csv";
pub const ERROR_JSON: &str = "error.json";

pub const SUMMARY_HEADER: [&str; 7] = ["round", "mean", "best10", "worst10", "std", "conflicts", "residual"];
pub const HISTOGRAM_BINS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Artifacts {
    pub accuracy: String,
    pub summary: String,
    pub diagnostics: String,
    pub histogram: String,
}

impl Default for Artifacts {
    fn default() -> Self {
        Self {
            accuracy: ACCURACY_CSV.into(),
            summary: SUMMARY_CSV.into(),
            diagnostics: DIAGNOSTICS_CSV.into(),
            histogram: HISTOGRAM_CSV.into(),
        }
    }
}

/// Everything needed to reproduce a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub config: ExperimentConfig,
    pub seeds: SeedConfig,
    pub artifacts: Artifacts,
    pub started_at: String,
    pub finished_at: String,
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub seed_overrides: Vec<(String, u64)>,
    pub quiet: bool,
}

/// Parse `name=value` into a seed override.
pub fn parse_seed_override(s: &str) -> Result<(String, u64)> {
    let (name, value) = s.split_once('=').ok_or_else(|| CliError::SeedOverride(s.into()))?;
    let value = value.trim().parse().map_err(|_| CliError::SeedOverride(s.into()))?;
    Ok((name.trim().to_string(), value))
}

/// Run the experiment at `config_path`, writing artifacts into `out_dir`.
/// On failure an `error.json` record is left in `out_dir` when possible.
pub fn cmd_run(config_path: &Path, out_dir: &Path, opts: &RunOptions) -> Result<RunManifest> {
    let result = run_inner(config_path, out_dir, opts);
    if let Err(e) = &result {
        let record = ErrorRecord::from(e);
        if let Ok(json) = serde_json::to_string_pretty(&record) {
            if fs::create_dir_all(out_dir).is_ok() {
                let _ = fs::write(out_dir.join(ERROR_JSON), json + "\n");
            }
        }
    }
    result
}

fn run_inner(config_path: &Path, out_dir: &Path, opts: &RunOptions) -> Result<RunManifest> {
    let mut config = crate::parse_config(config_path)?;
    for (name, value) in &opts.seed_overrides {
        config.seeds.set(name, *value)?;
    }
    fs::create_dir_all(out_dir).map_err(|e| CliError::io("cannot create output directory", out_dir, e))?;
    let _ = fs::remove_file(out_dir.join(ERROR_JSON));
    let started_at = now();

    let mut sim = Simulation::new(&config)?;
    let rounds = config.federation.rounds;
    let mut records = Vec::with_capacity(rounds);
    while sim.round() < rounds {
        let record = sim.run_round()?;
        if !opts.quiet {
            if let Some(s) = &record.summary {
                eprintln!(
                    "round {:>5}  mean {:.4}  worst10 {:.4}  std {:.4}  conflicts {}",
                    record.round, s.mean, s.worst10, s.std, record.conflicts
                );
            }
        }
        records.push(record);
    }

    let artifacts = Artifacts::default();
    write_accuracy(&out_dir.join(&artifacts.accuracy), &records)?;
    write_summary(&out_dir.join(&artifacts.summary), &records)?;
    write_diagnostics(&out_dir.join(&artifacts.diagnostics), &records)?;
    write_histogram(&out_dir.join(&artifacts.histogram), &records)?;

    let manifest = RunManifest {
        tool: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        seeds: config.seeds.clone(),
        config,
        artifacts,
        started_at,
        finished_at: now(),
    };
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    let path = out_dir.join(MANIFEST);
    fs::write(&path, json + "\n").map_err(|e| CliError::io("cannot write", path, e))?;
    Ok(manifest)
}

fn now() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true)
}

fn writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    let file = fs::File::create(path).map_err(|e| CliError::io("cannot create", path, e))?;
    Ok(csv::Writer::from_writer(file))
}

fn csv_error(path: &Path, e: csv::Error) -> CliError {
    let source = match e.into_kind() {
        csv::ErrorKind::Io(io) => io,
        other => std::io::Error::other(format!("{other:?}")),
    };
    CliError::io("cannot write", PathBuf::from(path), source)
}

fn write_rows<I, R>(path: &Path, header: &[&str], rows: I) -> Result<()>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let mut w = writer(path)?;
    w.write_record(header).map_err(|e| csv_error(path, e))?;
    for row in rows {
        w.write_record(row).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| CliError::io("cannot write", path, e))
}

/// Long form: one row per evaluated round and client.
fn write_accuracy(path: &Path, records: &[RoundRecord]) -> Result<()> {
    let rows = records.iter().flat_map(|r| {
        r.accuracies
            .iter()
            .flatten()
            .enumerate()
            .map(move |(client, acc)| vec![r.round.to_string(), client.to_string(), acc.to_string()])
    });
    write_rows(path, &["round", "client_id", "accuracy"], rows)
}

/// One row per evaluated round.
fn write_summary(path: &Path, records: &[RoundRecord]) -> Result<()> {
    let rows = records.iter().filter_map(|r| {
        r.summary.as_ref().map(|s| {
            vec![
                r.round.to_string(),
                s.mean.to_string(),
                s.best10.to_string(),
                s.worst10.to_string(),
                s.std.to_string(),
                r.conflicts.to_string(),
                r.residual_norm.to_string(),
            ]
        })
    });
    write_rows(path, &SUMMARY_HEADER, rows)
}

/// Every round: sampling, conflicts, projection telemetry and wall time.
fn write_diagnostics(path: &Path, records: &[RoundRecord]) -> Result<()> {
    let rows = records.iter().map(|r| {
        let join = |v: Vec<String>| v.join(" ");
        vec![
            r.round.to_string(),
            join(r.sampled.iter().map(usize::to_string).collect()),
            r.conflicts.to_string(),
            r.active_conflicts.to_string(),
            r.residual_norm.to_string(),
            r.full_rank.to_string(),
            join(r.gram_ranks.iter().map(usize::to_string).collect()),
            format!("{:.3}", r.wall_ms),
        ]
    });
    write_rows(
        path,
        &[
            "round",
            "sampled",
            "conflicts",
            "active_conflicts",
            "residual",
            "full_rank",
            "gram_ranks",
            "wall_ms",
        ],
        rows,
    )
}

/// Final per-client accuracies binned into equal-width bins over [0, 1].
fn write_histogram(path: &Path, records: &[RoundRecord]) -> Result<()> {
    let accs = records
        .iter()
        .rev()
        .find_map(|r| r.accuracies.as_ref())
        .cloned()
        .unwrap_or_default();
    let counts = histogram(&accs, HISTOGRAM_BINS);
    let rows = counts.iter().enumerate().map(|(b, c)| {
        let lo = b as f64 / HISTOGRAM_BINS as f64;
        let hi = (b + 1) as f64 / HISTOGRAM_BINS as f64;
        vec![lo.to_string(), hi.to_string(), c.to_string()]
    });
    write_rows(path, &["bin_low", "bin_high", "clients"], rows)
}

/// Counts per bin; the last bin is closed so that 1.0 is included.
pub fn histogram(values: &[f64], bins: usize) -> Vec<usize> {
    let mut counts = vec![0; bins];
    for &v in values {
        let b = ((v * bins as f64).floor() as usize).min(bins - 1);
        counts[b] += 1;
    }
    counts
}
