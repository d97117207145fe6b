//! Federated training: clients keep student embeddings (and, by default, the
//! diagnostic network) private and share exercise embeddings, which the
//! server merges with a pluggable weighting rule.

mod privacy;
mod protocol;
mod strategy;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::model::ModelKind;
use crate::{Error, Result};

pub use privacy::{apply_dp_noise, sample_laplace};
pub use protocol::{
    initial_template, run_centralized, run_protocol, run_protocol_with, run_round,
    CentralizedOutcome, ClientState, ClientUpload, LossTraceRow, ProtocolOutcome, RoundReport,
    ServerState, SharedBlocks,
};
pub use strategy::{combine, compute_weights, weighted_sum, AggregationStrategy};

/// Which parameter blocks stay on the client.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Personalization {
    /// Student embeddings and the diagnostic network stay local.
    Full,
    /// Only student embeddings stay local; the diagnostic network is merged.
    NoPdp,
    /// Everything is shared; student rows pass through from their owner.
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StrategyConfig {
    pub personalization: Personalization,
    pub aggregator: AggregationStrategy,
    /// Laplace scale for noise on the uploaded exercise block.
    pub dp_scale: f64,
}

impl StrategyConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dp_scale >= 0.0 && self.dp_scale.is_finite()) {
            return Err(Error::invalid("dp_scale must be finite and >= 0"));
        }
        self.aggregator.validate()
    }
}

/// How a client's training losses are reduced to the single value it reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LossReduction {
    /// Mean per-example loss of the final local epoch.
    #[default]
    Mean,
    /// Summed loss of the final local epoch.
    Sum,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfig {
    pub kind: ModelKind,
    pub dim: usize,
    /// Local epochs per round.
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub clip_monotone: bool,
    pub client_loss: LossReduction,
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || self.dim == 0 {
            return Err(Error::invalid(
                "epochs, batch_size and dim must be at least 1",
            ));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("learning_rate must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProtocolConfig {
    pub strategy: StrategyConfig,
    pub training: TrainingConfig,
    pub rounds: usize,
    pub seed: u64,
    /// Train clients concurrently. Results do not depend on this.
    pub parallel: bool,
}

impl ProtocolConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rounds == 0 {
            return Err(Error::invalid("rounds must be at least 1"));
        }
        self.strategy.validate()?;
        self.training.validate()
    }
}

/// Writes the loss trace as CSV with columns
/// `round,school_id,client_loss,aggregation_weight`.
pub fn write_loss_trace(path: &Path, trace: &[LossTraceRow], school_ids: &[String]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["round", "school_id", "client_loss", "aggregation_weight"])?;
    for row in trace {
        let school = school_ids
            .get(row.school)
            .cloned()
            .unwrap_or_else(|| row.school.to_string());
        w.write_record([
            row.round.to_string(),
            school,
            format!("{:?}", row.client_loss),
            format!("{:?}", row.aggregation_weight),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}
