//! Experiment configs, multi-seed runs and comparison tables.

mod compare;
mod config;
mod run;

use std::path::{Path, PathBuf};

use crate::data::{generate_synthetic, write_dataset, SyntheticSpec};
use crate::{Error, Result};

pub use compare::{compare, ComparisonTable};
pub use config::{
    AggregatorKind, DataConfig, DataSource, ExperimentConfig, FederationConfig, ModelConfig,
    RunConfig, RunMode,
};
pub use run::{report_metrics, run_experiment, MeanStd, RunRecord, SeedRun};

/// Reads a synthetic spec from TOML: either a bare spec or an experiment
/// config whose `[data.synthetic]` section holds it.
pub fn load_synthetic_spec(path: &Path) -> Result<SyntheticSpec> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let table: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Config {
        field: path.display().to_string(),
        reason: e.message().to_string(),
    })?;
    let spec = if table.contains_key("data") {
        ExperimentConfig::from_toml(&text)?
            .data
            .synthetic
            .ok_or_else(|| Error::Config {
                field: "data.synthetic".into(),
                reason: "missing".into(),
            })?
    } else {
        toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config {
                field: path.display().to_string(),
                reason: e.message().to_string(),
            })?
    };
    spec.validate()?;
    Ok(spec)
}

/// Generates a dataset and writes its three files into `out`.
pub fn generate(spec: &SyntheticSpec, seed: u64, out: &Path) -> Result<[PathBuf; 3]> {
    let data = generate_synthetic(spec, seed)?;
    write_dataset(out, &data)
}
