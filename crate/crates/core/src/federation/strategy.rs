use serde::{Deserialize, Serialize};

use crate::model::Matrix;
use crate::{Error, Result};

/// How the server turns client uploads into aggregation weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AggregationStrategy {
    /// Softmax of `gamma · loss`: clients that fit worse get more weight.
    FairnessSoftmax {
        gamma: f64,
    },
    UniformAverage,
    /// Proportional to each client's number of training logs.
    DataSizeAverage,
    /// Softmax of the negative Frobenius distance between each upload and the
    /// previous global block; the new global moves `step` of the way from the
    /// previous one to the weighted mean.
    AttentionDistance {
        step: f64,
    },
}

impl AggregationStrategy {
    pub fn label(&self) -> String {
        match self {
            AggregationStrategy::FairnessSoftmax { gamma } => {
                format!("fairness_softmax(gamma={gamma})")
            }
            AggregationStrategy::UniformAverage => "uniform_average".into(),
            AggregationStrategy::DataSizeAverage => "data_size_average".into(),
            AggregationStrategy::AttentionDistance { step } => {
                format!("attention_distance(step={step})")
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            AggregationStrategy::FairnessSoftmax { gamma } if !gamma.is_finite() => {
                Err(Error::invalid("gamma must be finite"))
            }
            AggregationStrategy::AttentionDistance { step } if !(step > 0.0 && step <= 1.0) => {
                Err(Error::invalid("attention step must lie in (0, 1]"))
            }
            _ => Ok(()),
        }
    }
}

/// Order-independent sum: adding in ascending order makes the result
/// invariant to permutations of `values`.
fn sorted_sum(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v.iter().sum()
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let total = sorted_sum(&exps);
    exps.iter().map(|e| e / total).collect()
}

/// Aggregation weights for one round, one per client in input order.
pub fn compute_weights(
    strategy: &AggregationStrategy,
    losses: &[f64],
    data_sizes: &[usize],
    uploads: &[&Matrix],
    previous_global: &Matrix,
) -> Result<Vec<f64>> {
    let t = losses.len();
    if t == 0 {
        return Err(Error::invalid("no clients to aggregate"));
    }
    if data_sizes.len() != t || uploads.len() != t {
        return Err(Error::invalid(format!(
            "got {t} losses, {} data sizes and {} uploads",
            data_sizes.len(),
            uploads.len()
        )));
    }
    if let Some((school, &loss)) = losses.iter().enumerate().find(|(_, l)| !l.is_finite()) {
        return Err(Error::NonFiniteLoss { school, loss });
    }
    let weights = match *strategy {
        AggregationStrategy::FairnessSoftmax { gamma } => {
            let logits: Vec<f64> = losses.iter().map(|l| gamma * l).collect();
            softmax(&logits)
        }
        AggregationStrategy::UniformAverage => vec![1.0 / t as f64; t],
        AggregationStrategy::DataSizeAverage => {
            let total: usize = data_sizes.iter().sum();
            if total == 0 {
                return Err(Error::invalid("all clients report zero training logs"));
            }
            data_sizes
                .iter()
                .map(|&n| n as f64 / total as f64)
                .collect()
        }
        AggregationStrategy::AttentionDistance { .. } => {
            let mut logits = Vec::with_capacity(t);
            for u in uploads {
                if u.shape() != previous_global.shape() {
                    return Err(Error::ShapeMismatch(format!(
                        "upload {:?} vs global {:?}",
                        u.shape(),
                        previous_global.shape()
                    )));
                }
                logits.push(-u.frobenius_distance(previous_global));
            }
            softmax(&logits)
        }
    };
    Ok(weights)
}

/// `Σ_t w_t · blocks[t]`, accumulated in client order.
pub fn weighted_sum(blocks: &[&Matrix], weights: &[f64]) -> Result<Matrix> {
    let first = blocks
        .first()
        .ok_or_else(|| Error::invalid("no blocks to combine"))?;
    let mut out = Matrix::zeros(first.rows(), first.cols());
    for (b, &w) in blocks.iter().zip(weights) {
        if b.shape() != first.shape() {
            return Err(Error::ShapeMismatch(format!(
                "upload {:?} vs {:?}",
                b.shape(),
                first.shape()
            )));
        }
        for (o, &x) in out.as_mut_slice().iter_mut().zip(b.as_slice()) {
            *o += w * x;
        }
    }
    Ok(out)
}

/// Applies a strategy's combination rule: the weighted sum, or for
/// `AttentionDistance` a partial step from `previous` towards it.
pub fn combine(
    strategy: &AggregationStrategy,
    blocks: &[&Matrix],
    weights: &[f64],
    previous: &Matrix,
) -> Result<Matrix> {
    let mean = weighted_sum(blocks, weights)?;
    match *strategy {
        AggregationStrategy::AttentionDistance { step } if step != 1.0 => {
            let mut out = previous.clone();
            for (o, &m) in out.as_mut_slice().iter_mut().zip(mean.as_slice()) {
                *o += step * (m - *o);
            }
            Ok(out)
        }
        _ => Ok(mean),
    }
}
