//! Experiment runner: TOML configs in, CSV metrics, JSON manifests and SVG
//! plots out.
//!
//! Output files of `run`:
//!
//! | file | columns |
//! |------|---------|
//! | `summary.csv` | `round,mean,best10,worst10,std,conflicts,residual` (evaluated rounds) |
//! | `accuracy.csv` | `round,client_id,accuracy` (evaluated rounds, every client) |
//! | `diagnostics.csv` | `round,sampled,conflicts,active_conflicts,residual,full_rank,gram_ranks,wall_ms` |
//! | `histogram.csv` | `bin_low,bin_high,clients` (final accuracies) |
//! | `manifest.json` | config snapshot, seeds, artifact names, timestamps |
//! | `error.json` | failure record (only on failure) |

mod compare;
mod config_file;
mod error;
mod run;

pub use compare::{cmd_compare, load_run, render_svg, render_table, RunSummary, SummaryRow};
pub use config_file::{parse_config, parse_toml, to_toml};
pub use error::{CliError, ErrorKind, ErrorRecord, Result};
pub use run::{
    cmd_run, histogram, parse_seed_override, Artifacts, RunManifest, RunOptions, ACCURACY_CSV, DIAGNOSTICS_CSV,
    ERROR_JSON, HISTOGRAM_CSV, MANIFEST, SUMMARY_CSV, SUMMARY_HEADER,
};
