use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::config::{DataSource, ExperimentConfig, RunMode};
use crate::data::{
    build_client_datasets, filter_dataset, generate_synthetic, ingest_logs, ClientDataset,
    EntityCatalog, QMatrix, ResponseLog,
};
use crate::federation::{
    initial_template, run_centralized, run_protocol_with, write_loss_trace, ClientState,
    LossTraceRow,
};
use crate::metrics::{evaluate, MetricReport};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    /// Sample standard deviation; 0 for a single value.
    pub std: f64,
    pub n: usize,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Some(Self { mean, std, n })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedRun {
    pub seed: u64,
    pub report: MetricReport,
    pub loss_trace: PathBuf,
    pub per_client_table: PathBuf,
    pub wall_clock_secs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub label: String,
    /// Full configuration; rerunning it reproduces every report.
    pub config: ExperimentConfig,
    pub seeds: Vec<u64>,
    pub runs: Vec<SeedRun>,
    /// Mean and std over seeds, keyed like `pooled.acc` or `client.<id>.acc`.
    pub aggregate: BTreeMap<String, MeanStd>,
    pub wall_clock_secs: f64,
}

impl RunRecord {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

/// Named scalar metrics of one report, as aggregated in [`RunRecord`].
pub fn report_metrics(report: &MetricReport) -> Vec<(String, Option<f64>)> {
    let mut out = vec![
        ("pooled.acc".to_string(), Some(report.pooled.acc)),
        ("pooled.rmse".to_string(), Some(report.pooled.rmse)),
        ("pooled.auc".to_string(), report.pooled.auc),
        ("client_mean.acc".to_string(), Some(report.client_mean.acc)),
        (
            "client_mean.rmse".to_string(),
            Some(report.client_mean.rmse),
        ),
        ("client_mean.auc".to_string(), report.client_mean.auc),
        ("gf".to_string(), report.gf),
        ("doa".to_string(), report.doa),
    ];
    for c in &report.per_client {
        out.push((format!("client.{}.acc", c.school_id), Some(c.acc)));
        out.push((format!("client.{}.auc", c.school_id), c.auc));
    }
    out
}

fn aggregate(runs: &[SeedRun]) -> BTreeMap<String, MeanStd> {
    let mut values: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for r in runs {
        for (k, v) in report_metrics(&r.report) {
            let slot = values.entry(k).or_default();
            if let Some(v) = v {
                slot.push(v);
            }
        }
    }
    values
        .into_iter()
        .filter_map(|(k, v)| MeanStd::of(&v).map(|m| (k, m)))
        .collect()
}

struct LoadedData {
    catalog: EntityCatalog,
    qmatrix: QMatrix,
    logs: Vec<ResponseLog>,
}

fn load_data(
    config: &ExperimentConfig,
    seed: u64,
    files: Option<&LoadedData>,
) -> Result<LoadedData> {
    let d = &config.data;
    let raw = match (d.source, files) {
        (DataSource::Files, Some(f)) => LoadedData {
            catalog: f.catalog.clone(),
            qmatrix: f.qmatrix.clone(),
            logs: f.logs.clone(),
        },
        _ => {
            let spec = d.synthetic.as_ref().expect("validated");
            let data = generate_synthetic(spec, seed).map_err(|e| e.at_stage("generate"))?;
            LoadedData {
                catalog: data.catalog,
                qmatrix: data.qmatrix,
                logs: data.logs,
            }
        }
    };
    let (catalog, logs) = filter_dataset(
        &raw.logs,
        &raw.catalog,
        d.min_student_logs,
        d.min_school_logs,
    )
    .map_err(|e| e.at_stage("filter"))?;
    Ok(LoadedData {
        catalog,
        qmatrix: raw.qmatrix,
        logs,
    })
}

/// Trains one pooled model and hands each school a copy holding its own
/// student rows, so evaluation sees the same per-school view as federation.
fn centralized_clients(
    datasets: &[ClientDataset],
    qmatrix: &QMatrix,
    config: &ExperimentConfig,
    seed: u64,
) -> Result<(Vec<ClientState>, Vec<LossTraceRow>)> {
    let protocol = config.protocol(qmatrix.num_concepts(), seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    let mut students = Vec::new();
    for d in datasets {
        train.extend(d.train_logs.iter().copied());
        test.extend(d.test_logs.iter().copied());
        students.extend(d.students.iter().copied());
    }
    let pooled = ClientDataset::new(0, students, train, test)?;
    let outcome = run_centralized(&pooled, qmatrix, &protocol.training, protocol.rounds, seed)?;
    let mut template = initial_template(datasets, qmatrix, &protocol.training, seed)?;
    for (local, &global) in pooled.students.iter().enumerate() {
        template
            .student
            .row_mut(global)
            .copy_from_slice(outcome.params.student.row(local));
    }
    template.exercise = outcome.params.exercise.clone();
    template.diagnostic = outcome.params.diagnostic.clone();
    let clients = datasets
        .iter()
        .map(|d| ClientState::from_template(d.clone(), &template, &protocol.training, seed))
        .collect();
    let trace = outcome
        .round_losses
        .iter()
        .enumerate()
        .map(|(i, &loss)| LossTraceRow {
            round: i + 1,
            school: 0,
            client_loss: loss,
            aggregation_weight: 1.0,
        })
        .collect();
    Ok((clients, trace))
}

fn write_checkpoints(
    dir: &Path,
    server: Option<&crate::federation::ServerState>,
    clients: &[ClientState],
    school_ids: &[String],
) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    if let Some(s) = server {
        s.to_checkpoint().save(&dir.join("server.ckpt"))?;
    }
    for c in clients {
        let id = school_ids
            .get(c.school)
            .cloned()
            .unwrap_or_else(|| c.school.to_string());
        c.to_checkpoint()
            .save(&dir.join(format!("client_{id}.ckpt")))?;
    }
    Ok(())
}

/// Runs one seed end to end and writes its artifacts under `dir`.
fn run_seed(
    config: &ExperimentConfig,
    seed: u64,
    files: Option<&LoadedData>,
    dir: &Path,
) -> Result<SeedRun> {
    let start = Instant::now();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let data = load_data(config, seed, files)?;
    let datasets =
        build_client_datasets(&data.catalog, &data.logs, config.data.train_fraction, seed)
            .map_err(|e| e.at_stage("split"))?;
    let school_ids = &data.catalog.school_ids;
    let every = config.run.checkpoint_every;
    let ckpt_root = dir.join("checkpoints");

    let (clients, trace, trace_ids) = match config.federation.mode {
        RunMode::Federated => {
            let protocol = config.protocol(data.qmatrix.num_concepts(), seed);
            let outcome =
                run_protocol_with(&datasets, &data.qmatrix, &protocol, |server, clients| {
                    if every > 0 && server.round % every == 0 {
                        write_checkpoints(
                            &ckpt_root.join(format!("round_{:04}", server.round)),
                            Some(server),
                            clients,
                            school_ids,
                        )?;
                    }
                    Ok(())
                })
                .map_err(|e| e.at_stage("train"))?;
            (outcome.clients, outcome.trace, school_ids.clone())
        }
        RunMode::Centralized => {
            let (clients, trace) = centralized_clients(&datasets, &data.qmatrix, config, seed)
                .map_err(|e| e.at_stage("train"))?;
            if every > 0 {
                write_checkpoints(&ckpt_root.join("final"), None, &clients, school_ids)?;
            }
            (clients, trace, vec!["pooled".to_string()])
        }
    };

    let (mut report, _) = evaluate(&clients, &data.qmatrix, school_ids, config.run.doa)
        .map_err(|e| e.at_stage("evaluate"))?;
    report.config = serde_json::json!({
        "label": config.label(),
        "seed": seed,
        "experiment": serde_json::to_value(config)?,
    });

    let loss_trace = dir.join("loss_trace.csv");
    write_loss_trace(&loss_trace, &trace, &trace_ids)?;
    let per_client_table = dir.join("per_client.csv");
    report.write_per_client_csv(&per_client_table)?;
    let report_path = dir.join("report.json");
    fs::write(&report_path, report.to_json()?).map_err(|e| Error::io(&report_path, e))?;

    Ok(SeedRun {
        seed,
        report,
        loss_trace,
        per_client_table,
        wall_clock_secs: start.elapsed().as_secs_f64(),
    })
}

/// Runs every configured seed, writing `seed_<s>/` subdirectories and
/// `run_record.json` into `run.out_dir`. Returns the record and its path.
pub fn run_experiment(config: &ExperimentConfig) -> Result<(RunRecord, PathBuf)> {
    config.validate()?;
    let start = Instant::now();
    let out = &config.run.out_dir;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let files = match config.data.source {
        DataSource::Files => {
            let ing = ingest_logs(
                config.data.log_file.as_deref().expect("validated"),
                config.data.qmatrix_file.as_deref().expect("validated"),
            )
            .map_err(|e| e.at_stage("ingest"))?;
            Some(LoadedData {
                catalog: ing.catalog,
                qmatrix: ing.qmatrix,
                logs: ing.logs,
            })
        }
        DataSource::Synthetic => None,
    };
    let mut runs = Vec::with_capacity(config.run.seeds.len());
    for &seed in &config.run.seeds {
        runs.push(run_seed(
            config,
            seed,
            files.as_ref(),
            &out.join(format!("seed_{seed}")),
        )?);
    }
    let record = RunRecord {
        label: config.label(),
        config: config.clone(),
        seeds: config.run.seeds.clone(),
        aggregate: aggregate(&runs),
        runs,
        wall_clock_secs: start.elapsed().as_secs_f64(),
    };
    let path = out.join("run_record.json");
    record.save(&path)?;
    Ok((record, path))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_std_cases() {
        assert_eq!(MeanStd::of(&[]), None);
        assert_eq!(MeanStd::of(&[2.0]).unwrap().std, 0.0);
        let m = MeanStd::of(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(m.mean, 2.5);
        assert!((m.std - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
    }
}
