//! TOML experiment files.
//!
//! ```toml
//! [dataset]
//! kind = "idx"                 # or "synthetic" (classes, dims, samples, class_sep)
//! images = "data/mnist-subset/images-idx3-ubyte"
//! labels = "data/mnist-subset/labels-idx1-ubyte"
//!
//! [aggregator]
//! kind = "craft"               # fedavg, fedprox, fednova, fedavgm, fedadagrad, fedadam, fedyogi, config
//! ```
//!
//! Every other table (`partition`, `model`, `federation`, `seeds`) and key is
//! optional; unknown keys are rejected. Relative dataset paths are resolved
//! against the directory holding the config file.

use std::path::{Path, PathBuf};

use craft_core::simulation::{DatasetConfig, ExperimentConfig};

use crate::error::{CliError, Result};
use crate::run::RunManifest;

/// Read an experiment config from a TOML file, or from the `manifest.json`
/// of a previous run.
pub fn parse_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::ConfigRead {
        path: path.to_path_buf(),
        source,
    })?;
    let mut config = if path.extension().is_some_and(|e| e == "json") {
        let manifest: RunManifest = serde_json::from_str(&text).map_err(|e| CliError::ConfigSyntax {
            path: path.to_path_buf(),
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        manifest.config
    } else {
        parse_toml(&text, path)?
    };
    if let Some(dir) = path.parent() {
        resolve_paths(&mut config, dir);
    }
    config.validate()?;
    Ok(config)
}

/// Parse TOML text; `origin` only labels errors.
pub fn parse_toml(text: &str, origin: &Path) -> Result<ExperimentConfig> {
    toml::from_str(text).map_err(|e| match e.span() {
        Some(span) => {
            let (line, column) = line_column(text, span.start);
            CliError::ConfigSyntax {
                path: origin.to_path_buf(),
                line,
                column,
                message: e.message().to_string(),
            }
        }
        None => CliError::ConfigSchema {
            path: origin.to_path_buf(),
            message: e.message().to_string(),
        },
    })
}

pub fn to_toml(config: &ExperimentConfig) -> String {
    toml::to_string(config).expect("experiment configs always serialize")
}

fn line_column(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.len() - before.rfind('\n').map_or(0, |i| i + 1) + 1;
    (line, column)
}

fn resolve_paths(config: &mut ExperimentConfig, base: &Path) {
    if let DatasetConfig::Idx { images, labels, .. } = &mut config.dataset {
        for p in [images, labels] {
            if p.is_relative() {
                *p = join(base, p);
            }
        }
    }
}

fn join(base: &Path, rel: &Path) -> PathBuf {
    if base.as_os_str().is_empty() {
        rel.to_path_buf()
    } else {
        base.join(rel)
    }
}
