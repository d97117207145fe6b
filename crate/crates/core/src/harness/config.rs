use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::SyntheticSpec;
use crate::federation::{
    AggregationStrategy, LossReduction, Personalization, ProtocolConfig, StrategyConfig,
    TrainingConfig,
};
use crate::model::ModelKind;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    Synthetic,
    Files,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub source: DataSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub log_file: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub qmatrix_file: Option<PathBuf>,
    #[serde(default = "default_train_fraction")]
    pub train_fraction: f64,
    #[serde(default = "default_min_student_logs")]
    pub min_student_logs: usize,
    #[serde(default = "default_min_school_logs")]
    pub min_school_logs: usize,
    /// Generator settings; each run seed draws a fresh dataset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<SyntheticSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    #[serde(default = "default_kind")]
    pub kind: ModelKind,
    /// Embedding size; defaults to the concept count.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    /// Local epochs per round.
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_learning_rate")]
    pub learning_rate: f64,
    #[serde(default)]
    pub clip_monotone: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            kind: default_kind(),
            dim: None,
            epochs: default_epochs(),
            batch_size: default_batch_size(),
            learning_rate: default_learning_rate(),
            clip_monotone: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunMode {
    Federated,
    Centralized,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AggregatorKind {
    FairnessSoftmax,
    UniformAverage,
    DataSizeAverage,
    AttentionDistance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FederationConfig {
    #[serde(default = "default_mode")]
    pub mode: RunMode,
    #[serde(default = "default_personalization")]
    pub personalization: Personalization,
    #[serde(default = "default_aggregator")]
    pub aggregator: AggregatorKind,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default = "default_attention_step")]
    pub attention_step: f64,
    #[serde(default)]
    pub dp_scale: f64,
    #[serde(default = "default_rounds")]
    pub rounds: usize,
    #[serde(default)]
    pub client_loss: LossReduction,
    #[serde(default = "default_true")]
    pub parallel: bool,
}

impl Default for FederationConfig {
    fn default() -> Self {
        Self {
            mode: default_mode(),
            personalization: default_personalization(),
            aggregator: default_aggregator(),
            gamma: default_gamma(),
            attention_step: default_attention_step(),
            dp_scale: 0.0,
            rounds: default_rounds(),
            client_loss: LossReduction::default(),
            parallel: true,
        }
    }
}

impl FederationConfig {
    pub fn strategy(&self) -> AggregationStrategy {
        match self.aggregator {
            AggregatorKind::FairnessSoftmax => {
                AggregationStrategy::FairnessSoftmax { gamma: self.gamma }
            }
            AggregatorKind::UniformAverage => AggregationStrategy::UniformAverage,
            AggregatorKind::DataSizeAverage => AggregationStrategy::DataSizeAverage,
            AggregatorKind::AttentionDistance => AggregationStrategy::AttentionDistance {
                step: self.attention_step,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Label used in comparison tables; derived from the strategy if absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    /// Write checkpoints every this many rounds; 0 disables them.
    #[serde(default)]
    pub checkpoint_every: usize,
    #[serde(default = "default_true")]
    pub doa: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            name: None,
            seeds: default_seeds(),
            out_dir: default_out_dir(),
            checkpoint_every: 0,
            doa: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub data: DataConfig,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub federation: FederationConfig,
    #[serde(default)]
    pub run: RunConfig,
}

fn default_train_fraction() -> f64 {
    0.8
}
fn default_min_student_logs() -> usize {
    5
}
fn default_min_school_logs() -> usize {
    1000
}
fn default_kind() -> ModelKind {
    ModelKind::Ncd
}
fn default_epochs() -> usize {
    5
}
fn default_batch_size() -> usize {
    128
}
fn default_learning_rate() -> f64 {
    0.001
}
fn default_mode() -> RunMode {
    RunMode::Federated
}
fn default_personalization() -> Personalization {
    Personalization::Full
}
fn default_aggregator() -> AggregatorKind {
    AggregatorKind::FairnessSoftmax
}
fn default_gamma() -> f64 {
    0.1
}
fn default_attention_step() -> f64 {
    1.0
}
fn default_rounds() -> usize {
    100
}
fn default_true() -> bool {
    true
}
fn default_seeds() -> Vec<u64> {
    vec![0, 1, 2, 3, 4]
}
fn default_out_dir() -> PathBuf {
    PathBuf::from("runs/default")
}

fn config_error(field: &str, reason: impl Into<String>) -> Error {
    Error::Config {
        field: field.to_string(),
        reason: reason.into(),
    }
}

/// Sets `path` (dot separated) in `table` to `raw`, parsed as a TOML value
/// when possible and as a bare string otherwise.
fn apply_override(table: &mut toml::Table, path: &str, raw: &str) -> Result<()> {
    let value = match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("key present"),
        Err(_) => toml::Value::String(raw.to_string()),
    };
    let keys: Vec<&str> = path.split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(config_error(path, "empty key segment"));
    }
    let (last, parents) = keys.split_last().expect("split yields one key");
    let mut cur = table;
    for (i, k) in parents.iter().enumerate() {
        let entry = cur
            .entry(k.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| config_error(&keys[..=i].join("."), "is not a section"))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

/// Names the offending key from a TOML deserialization message when it
/// mentions one.
fn field_from_message(msg: &str) -> String {
    msg.split('`').nth(1).unwrap_or("config").to_string()
}

impl ExperimentConfig {
    /// Parses TOML text, applies `key.path=value` overrides, then validates.
    pub fn from_toml_with(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| config_error("config", e.message().to_string()))?;
        for o in overrides {
            let (path, raw) = o
                .split_once('=')
                .ok_or_else(|| config_error(o, "override must look like key.path=value"))?;
            apply_override(&mut table, path.trim(), raw.trim())?;
        }
        let cfg: ExperimentConfig =
            toml::Value::Table(table)
                .try_into()
                .map_err(|e: toml::de::Error| {
                    let msg = e.message().to_string();
                    config_error(&field_from_message(&msg), msg)
                })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        Self::from_toml_with(text, &[])
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_with(&text, overrides)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| config_error("config", e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let d = &self.data;
        if !(d.train_fraction > 0.0 && d.train_fraction < 1.0) {
            return Err(config_error("data.train_fraction", "must lie in (0, 1)"));
        }
        match d.source {
            DataSource::Synthetic => {
                let spec = d.synthetic.as_ref().ok_or_else(|| {
                    config_error("data.synthetic", "required when source = \"synthetic\"")
                })?;
                spec.validate()
                    .map_err(|e| config_error("data.synthetic", e.to_string()))?;
            }
            DataSource::Files => {
                if d.log_file.is_none() {
                    return Err(config_error(
                        "data.log_file",
                        "required when source = \"files\"",
                    ));
                }
                if d.qmatrix_file.is_none() {
                    return Err(config_error(
                        "data.qmatrix_file",
                        "required when source = \"files\"",
                    ));
                }
            }
        }
        let m = &self.model;
        if m.dim == Some(0) {
            return Err(config_error("model.dim", "must be at least 1"));
        }
        if m.epochs == 0 {
            return Err(config_error("model.epochs", "must be at least 1"));
        }
        if m.batch_size == 0 {
            return Err(config_error("model.batch_size", "must be at least 1"));
        }
        if !(m.learning_rate > 0.0 && m.learning_rate.is_finite()) {
            return Err(config_error(
                "model.learning_rate",
                "must be positive and finite",
            ));
        }
        let f = &self.federation;
        if f.rounds == 0 {
            return Err(config_error("federation.rounds", "must be at least 1"));
        }
        if !f.gamma.is_finite() {
            return Err(config_error("federation.gamma", "must be finite"));
        }
        if !(f.attention_step > 0.0 && f.attention_step <= 1.0) {
            return Err(config_error(
                "federation.attention_step",
                "must lie in (0, 1]",
            ));
        }
        if !(f.dp_scale >= 0.0 && f.dp_scale.is_finite()) {
            return Err(config_error(
                "federation.dp_scale",
                "must be finite and >= 0",
            ));
        }
        if self.run.seeds.is_empty() {
            return Err(config_error("run.seeds", "needs at least one seed"));
        }
        let mut seeds = self.run.seeds.clone();
        seeds.sort_unstable();
        seeds.dedup();
        if seeds.len() != self.run.seeds.len() {
            return Err(config_error("run.seeds", "contains duplicates"));
        }
        Ok(())
    }

    /// Protocol settings for one seed given the dataset's concept count.
    pub fn protocol(&self, num_concepts: usize, seed: u64) -> ProtocolConfig {
        ProtocolConfig {
            strategy: StrategyConfig {
                personalization: self.federation.personalization,
                aggregator: self.federation.strategy(),
                dp_scale: self.federation.dp_scale,
            },
            training: TrainingConfig {
                kind: self.model.kind,
                dim: self.model.dim.unwrap_or(num_concepts),
                epochs: self.model.epochs,
                batch_size: self.model.batch_size,
                learning_rate: self.model.learning_rate,
                clip_monotone: self.model.clip_monotone,
                client_loss: self.federation.client_loss,
            },
            rounds: self.federation.rounds,
            seed,
            parallel: self.federation.parallel,
        }
    }

    /// Display label: `run.name`, or one built from mode and strategy.
    pub fn label(&self) -> String {
        if let Some(n) = &self.run.name {
            return n.clone();
        }
        let f = &self.federation;
        match f.mode {
            RunMode::Centralized => format!("centralized/{}", self.model.kind.name()),
            RunMode::Federated => {
                let p = match f.personalization {
                    Personalization::Full => "full",
                    Personalization::NoPdp => "no_pdp",
                    Personalization::None => "none",
                };
                let mut s = format!("{}/{p}/{}", self.model.kind.name(), f.strategy().label());
                if f.dp_scale > 0.0 {
                    s.push_str(&format!("/dp={}", f.dp_scale));
                }
                s
            }
        }
    }
}
