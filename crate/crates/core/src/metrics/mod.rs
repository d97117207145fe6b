//! Prediction quality, fairness across schools and diagnostic agreement.

mod doa;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::QMatrix;
use crate::federation::ClientState;
use crate::model::Matrix;
use crate::{Error, Result};

pub use doa::{degree_of_agreement, doa_per_concept};

/// A scored test log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub school: usize,
    /// Global student index.
    pub student: usize,
    pub exercise: usize,
    pub label: bool,
    pub score: f64,
}

/// Decision threshold; a score exactly at it predicts a correct answer.
pub const THRESHOLD: f64 = 0.5;

pub fn accuracy(records: &[PredictionRecord]) -> Result<f64> {
    if records.is_empty() {
        return Err(Error::UndefinedMetric("accuracy of an empty set"));
    }
    let hits = records
        .iter()
        .filter(|r| (r.score >= THRESHOLD) == r.label)
        .count();
    Ok(hits as f64 / records.len() as f64)
}

pub fn rmse(records: &[PredictionRecord]) -> Result<f64> {
    if records.is_empty() {
        return Err(Error::UndefinedMetric("rmse of an empty set"));
    }
    let sse: f64 = records
        .iter()
        .map(|r| {
            let d = r.score - if r.label { 1.0 } else { 0.0 };
            d * d
        })
        .sum();
    Ok((sse / records.len() as f64).sqrt())
}

/// Area under the ROC curve via the Mann–Whitney rank sum, with tied scores
/// sharing their average rank.
pub fn auc(records: &[PredictionRecord]) -> Result<f64> {
    let n_pos = records.iter().filter(|r| r.label).count() as u64;
    let n_neg = records.len() as u64 - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::UndefinedMetric(
            "AUC undefined: need both positive and negative labels",
        ));
    }
    let mut order: Vec<&PredictionRecord> = records.iter().collect();
    order.sort_by(|a, b| a.score.total_cmp(&b.score));
    // Ranks doubled so tied averages stay integral.
    let mut twice_rank_sum: u64 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && order[j + 1].score == order[i].score {
            j += 1;
        }
        let twice_avg_rank = (i + 1 + j + 1) as u64;
        let pos_in_group = order[i..=j].iter().filter(|r| r.label).count() as u64;
        twice_rank_sum += twice_avg_rank * pos_in_group;
        i = j + 1;
    }
    let twice_u = twice_rank_sum - n_pos * (n_pos + 1);
    Ok(twice_u as f64 * 0.5 / (n_pos * n_neg) as f64)
}

/// Gap between the mean accuracy of schools at or above the mean and those
/// below it; 0 when every school sits on the same side.
pub fn group_fairness(per_client_acc: &[f64]) -> Result<f64> {
    if per_client_acc.len() < 2 {
        return Err(Error::UndefinedMetric(
            "group fairness needs at least two clients",
        ));
    }
    let mean = per_client_acc.iter().sum::<f64>() / per_client_acc.len() as f64;
    let (upper, lower): (Vec<f64>, Vec<f64>) = per_client_acc.iter().partition(|&&a| a >= mean);
    if upper.is_empty() || lower.is_empty() {
        return Ok(0.0);
    }
    let avg = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    Ok((avg(&lower) - avg(&upper)).abs())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientMetrics {
    pub school: usize,
    pub school_id: String,
    pub n_test: usize,
    pub acc: f64,
    pub rmse: f64,
    /// Absent when the school's test labels are all one class.
    pub auc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub acc: f64,
    pub rmse: f64,
    pub auc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    /// Metrics over the concatenation of every school's test logs.
    pub pooled: Summary,
    /// Unweighted mean over schools (AUC over schools where it is defined).
    pub client_mean: Summary,
    pub per_client: Vec<ClientMetrics>,
    /// Present with at least two schools.
    pub gf: Option<f64>,
    pub doa: Option<f64>,
    /// Free-form description of the run that produced the report.
    #[serde(default)]
    pub config: serde_json::Value,
}

impl MetricReport {
    pub fn client(&self, school: usize) -> Option<&ClientMetrics> {
        self.per_client.iter().find(|c| c.school == school)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Per-client table with columns `school_id,n_test,acc,rmse,auc`.
    pub fn write_per_client_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["school_id", "n_test", "acc", "rmse", "auc"])?;
        for c in &self.per_client {
            w.write_record([
                c.school_id.clone(),
                c.n_test.to_string(),
                format!("{:?}", c.acc),
                format!("{:?}", c.rmse),
                c.auc.map_or_else(String::new, |a| format!("{a:?}")),
            ])?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }
}

/// Scores each client's test logs with that client's own parameters.
pub fn predict_test(clients: &[ClientState], qmatrix: &QMatrix) -> Vec<PredictionRecord> {
    let mut out = Vec::new();
    for c in clients {
        for log in &c.dataset.test_logs {
            let local = c.dataset.local(log.student).expect("validated membership");
            out.push(PredictionRecord {
                school: c.school,
                student: log.student,
                exercise: log.exercise,
                label: log.correct,
                score: c.params.predict(qmatrix, local, log.exercise),
            });
        }
    }
    out
}

/// `σ(θ^S)` of every client gathered into one `N × K` matrix indexed by
/// global student. Students no client owns get a row of 0.5.
pub fn global_proficiency(clients: &[ClientState], n_students: usize) -> Matrix {
    let k = clients.first().map_or(0, |c| c.params.dim());
    let mut out = Matrix::from_vec(n_students, k, vec![0.5; n_students * k]);
    for c in clients {
        for (local, &global) in c.dataset.students.iter().enumerate() {
            out.row_mut(global)
                .copy_from_slice(&c.params.proficiency(local));
        }
    }
    out
}

fn summarize(records: &[PredictionRecord]) -> Result<Summary> {
    Ok(Summary {
        acc: accuracy(records)?,
        rmse: rmse(records)?,
        auc: auc(records).ok(),
    })
}

/// Builds the full report from trained clients. `school_ids` maps school
/// indices to display ids; DOA is computed over every log when `with_doa`.
pub fn evaluate(
    clients: &[ClientState],
    qmatrix: &QMatrix,
    school_ids: &[String],
    with_doa: bool,
) -> Result<(MetricReport, Vec<PredictionRecord>)> {
    let records = predict_test(clients, qmatrix);
    let mut per_client = Vec::with_capacity(clients.len());
    for c in clients {
        let mine: Vec<PredictionRecord> = records
            .iter()
            .filter(|r| r.school == c.school)
            .copied()
            .collect();
        if mine.is_empty() {
            return Err(Error::UndefinedMetric("a school has no test logs"));
        }
        let s = summarize(&mine)?;
        per_client.push(ClientMetrics {
            school: c.school,
            school_id: school_ids
                .get(c.school)
                .cloned()
                .unwrap_or_else(|| c.school.to_string()),
            n_test: mine.len(),
            acc: s.acc,
            rmse: s.rmse,
            auc: s.auc,
        });
    }
    let pooled = summarize(&records)?;
    let t = per_client.len() as f64;
    let aucs: Vec<f64> = per_client.iter().filter_map(|c| c.auc).collect();
    let client_mean = Summary {
        acc: per_client.iter().map(|c| c.acc).sum::<f64>() / t,
        rmse: per_client.iter().map(|c| c.rmse).sum::<f64>() / t,
        auc: (!aucs.is_empty()).then(|| aucs.iter().sum::<f64>() / aucs.len() as f64),
    };
    let accs: Vec<f64> = per_client.iter().map(|c| c.acc).collect();
    let gf = group_fairness(&accs).ok();
    let doa = if with_doa {
        let logs: Vec<_> = clients
            .iter()
            .flat_map(|c| c.dataset.all_logs().copied())
            .collect();
        let n = clients
            .iter()
            .flat_map(|c| c.dataset.students.iter())
            .max()
            .map_or(0, |&m| m + 1);
        let prof = global_proficiency(clients, n);
        degree_of_agreement(&prof, qmatrix, &logs).ok()
    } else {
        None
    };
    Ok((
        MetricReport {
            pooled,
            client_mean,
            per_client,
            gf,
            doa,
            config: serde_json::Value::Null,
        },
        records,
    ))
}
