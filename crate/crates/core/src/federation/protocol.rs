use std::collections::BTreeSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::{
    apply_dp_noise, combine, compute_weights, AggregationStrategy, LossReduction, Personalization,
    ProtocolConfig, StrategyConfig, TrainingConfig,
};
use crate::data::{ClientDataset, QMatrix};
use crate::model::{
    train_local, AdamState, Checkpoint, DiagnosticParams, Matrix, ModelKind, ModelParams,
};
use crate::{Error, Result};

/// Blocks a client shares beyond its exercise embedding. Which variant is
/// produced is fixed by the personalization mode.
#[derive(Debug, Clone, PartialEq)]
pub enum SharedBlocks {
    /// Full personalization: nothing else leaves the client.
    ExerciseOnly,
    Diagnostic(DiagnosticParams),
    /// Diagnostic network plus the client's student rows, keyed by global id.
    All {
        diagnostic: Option<DiagnosticParams>,
        students: Vec<(usize, Vec<f64>)>,
    },
}

/// What a client sends to the server after local training.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientUpload {
    pub school: usize,
    /// Exercise block after DP noise.
    pub exercise: Matrix,
    pub loss: f64,
    pub n_train: usize,
    pub shared: SharedBlocks,
}

/// One school's private state. Parameters, optimizer moments and the RNG
/// stream persist across rounds.
#[derive(Debug, Clone)]
pub struct ClientState {
    pub school: usize,
    pub params: ModelParams,
    pub optimizer: AdamState,
    pub dataset: ClientDataset,
    rng: ChaCha8Rng,
}

impl ClientState {
    /// Copies this school's student rows and all other blocks from `template`,
    /// which holds one student row per global student.
    pub fn from_template(
        dataset: ClientDataset,
        template: &ModelParams,
        training: &TrainingConfig,
        seed: u64,
    ) -> Self {
        let mut params = ModelParams::zeros(
            template.kind,
            dataset.num_students(),
            template.n_exercises(),
            template.dim(),
        );
        for (local, &global) in dataset.students.iter().enumerate() {
            params
                .student
                .row_mut(local)
                .copy_from_slice(template.student.row(global));
        }
        params.exercise = template.exercise.clone();
        params.diagnostic = template.diagnostic.clone();
        let optimizer = AdamState::new(&params, training.learning_rate)
            .with_clip(training.clip_monotone && template.kind == ModelKind::Ncd);
        Self {
            school: dataset.school,
            params,
            optimizer,
            rng: client_rng(seed, dataset.school),
            dataset,
        }
    }

    /// Overwrites the shared blocks with the server's current values.
    pub fn receive(&mut self, server: &ServerState) {
        self.params.exercise = server.global_exercise.clone();
        if let Some(d) = &server.shared_diagnostic {
            self.params.diagnostic = Some(d.clone());
        }
        if let Some(s) = &server.shared_students {
            for (local, &global) in self.dataset.students.iter().enumerate() {
                self.params
                    .student
                    .row_mut(local)
                    .copy_from_slice(s.row(global));
            }
        }
    }

    /// Local training followed by building the (noised) upload.
    pub fn train_and_upload(
        &mut self,
        qmatrix: &QMatrix,
        strategy: &StrategyConfig,
        training: &TrainingConfig,
    ) -> Result<ClientUpload> {
        let outcome = train_local(
            &mut self.params,
            &self.dataset,
            qmatrix,
            training.epochs,
            training.batch_size,
            &mut self.optimizer,
            &mut self.rng,
        )?;
        let loss = match training.client_loss {
            LossReduction::Mean => outcome.mean_loss,
            LossReduction::Sum => outcome.sum_loss,
        };
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss {
                school: self.school,
                loss,
            });
        }
        let exercise = apply_dp_noise(&self.params.exercise, strategy.dp_scale, &mut self.rng)?;
        let shared = match strategy.personalization {
            Personalization::Full => SharedBlocks::ExerciseOnly,
            Personalization::NoPdp => match &self.params.diagnostic {
                Some(d) => SharedBlocks::Diagnostic(d.clone()),
                None => SharedBlocks::ExerciseOnly,
            },
            Personalization::None => SharedBlocks::All {
                diagnostic: self.params.diagnostic.clone(),
                students: self
                    .dataset
                    .students
                    .iter()
                    .enumerate()
                    .map(|(local, &global)| (global, self.params.student.row(local).to_vec()))
                    .collect(),
            },
        };
        Ok(ClientUpload {
            school: self.school,
            exercise,
            loss,
            n_train: outcome.examples,
            shared,
        })
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        self.params.to_checkpoint("client")
    }
}

fn client_rng(seed: u64, school: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(school as u64 + 1);
    rng
}

fn server_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(0);
    rng
}

/// Server-side state. In full personalization mode only the exercise blocks
/// are populated.
#[derive(Debug, Clone, PartialEq)]
pub struct ServerState {
    pub kind: ModelKind,
    pub dim: usize,
    pub global_exercise: Matrix,
    pub previous_global: Matrix,
    pub round: usize,
    pub strategy: AggregationStrategy,
    pub shared_diagnostic: Option<DiagnosticParams>,
    /// One row per global student; only in the no-personalization mode.
    pub shared_students: Option<Matrix>,
}

impl ServerState {
    pub fn from_template(template: &ModelParams, config: &StrategyConfig) -> Self {
        Self {
            kind: template.kind,
            dim: template.dim(),
            global_exercise: template.exercise.clone(),
            previous_global: template.exercise.clone(),
            round: 0,
            strategy: config.aggregator,
            shared_diagnostic: match config.personalization {
                Personalization::Full => None,
                _ => template.diagnostic.clone(),
            },
            shared_students: match config.personalization {
                Personalization::None => Some(template.student.clone()),
                _ => None,
            },
        }
    }

    /// Merges one upload per school. Returns the weights in the order of
    /// ascending school index.
    pub fn aggregate(&mut self, mut uploads: Vec<ClientUpload>) -> Result<Vec<f64>> {
        uploads.sort_by_key(|u| u.school);
        let schools: BTreeSet<usize> = uploads.iter().map(|u| u.school).collect();
        if schools.len() != uploads.len() {
            return Err(Error::invalid("more than one upload from a school"));
        }
        let losses: Vec<f64> = uploads.iter().map(|u| u.loss).collect();
        let sizes: Vec<usize> = uploads.iter().map(|u| u.n_train).collect();
        let blocks: Vec<&Matrix> = uploads.iter().map(|u| &u.exercise).collect();
        let weights = compute_weights(
            &self.strategy,
            &losses,
            &sizes,
            &blocks,
            &self.global_exercise,
        )?;
        let merged = combine(&self.strategy, &blocks, &weights, &self.global_exercise)?;

        let diagnostics: Vec<&DiagnosticParams> = uploads
            .iter()
            .filter_map(|u| match &u.shared {
                SharedBlocks::Diagnostic(d) => Some(d),
                SharedBlocks::All { diagnostic, .. } => diagnostic.as_ref(),
                SharedBlocks::ExerciseOnly => None,
            })
            .collect();
        if let Some(prev) = &mut self.shared_diagnostic {
            if diagnostics.len() != uploads.len() {
                return Err(Error::invalid("an upload is missing its diagnostic block"));
            }
            let mut next = prev.clone();
            for (i, slot) in next.blocks_mut().into_iter().enumerate() {
                let parts: Vec<&Matrix> = diagnostics.iter().map(|d| d.blocks()[i].1).collect();
                *slot = combine(&self.strategy, &parts, &weights, prev.blocks()[i].1)?;
            }
            *prev = next;
        }
        if let Some(students) = &mut self.shared_students {
            for u in &uploads {
                if let SharedBlocks::All { students: rows, .. } = &u.shared {
                    for (global, row) in rows {
                        if *global >= students.rows() || row.len() != students.cols() {
                            return Err(Error::ShapeMismatch(format!(
                                "student row {global} from school {}",
                                u.school
                            )));
                        }
                        students.row_mut(*global).copy_from_slice(row);
                    }
                }
            }
        }

        self.previous_global = std::mem::replace(&mut self.global_exercise, merged);
        self.round += 1;
        Ok(weights)
    }

    /// Blocks the server holds, for inspection and checkpointing.
    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut blocks = Vec::new();
        if let Some(s) = &self.shared_students {
            blocks.push(("student".to_string(), s.clone()));
        }
        blocks.push(("exercise".to_string(), self.global_exercise.clone()));
        if let Some(d) = &self.shared_diagnostic {
            blocks.extend(
                d.blocks()
                    .iter()
                    .map(|(n, m)| (n.to_string(), (*m).clone())),
            );
        }
        Checkpoint {
            role: "server".into(),
            kind: self.kind,
            n_students: self.shared_students.as_ref().map_or(0, |s| s.rows()),
            n_exercises: self.global_exercise.rows(),
            dim: self.dim,
            n_concepts: self.dim,
            blocks,
        }
    }
}

/// Losses and weights of one round, in client order.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundReport {
    pub round: usize,
    pub schools: Vec<usize>,
    pub losses: Vec<f64>,
    pub weights: Vec<f64>,
}

/// Broadcast, local training, upload and aggregation for every client.
pub fn run_round(
    server: &mut ServerState,
    clients: &mut [ClientState],
    qmatrix: &QMatrix,
    strategy: &StrategyConfig,
    training: &TrainingConfig,
    parallel: bool,
) -> Result<RoundReport> {
    let step = |c: &mut ClientState| {
        c.receive(server);
        c.train_and_upload(qmatrix, strategy, training)
    };
    let uploads: Vec<ClientUpload> = if parallel {
        clients.par_iter_mut().map(step).collect::<Result<_>>()?
    } else {
        clients.iter_mut().map(step).collect::<Result<_>>()?
    };
    let mut pairs: Vec<(usize, f64)> = uploads.iter().map(|u| (u.school, u.loss)).collect();
    pairs.sort_by_key(|p| p.0);
    let weights = server.aggregate(uploads)?;
    Ok(RoundReport {
        round: server.round,
        schools: pairs.iter().map(|p| p.0).collect(),
        losses: pairs.iter().map(|p| p.1).collect(),
        weights,
    })
}

/// One row of the loss trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LossTraceRow {
    pub round: usize,
    pub school: usize,
    pub client_loss: f64,
    pub aggregation_weight: f64,
}

#[derive(Debug, Clone)]
pub struct ProtocolOutcome {
    /// Clients holding their private blocks plus the final global blocks.
    pub clients: Vec<ClientState>,
    pub server: ServerState,
    pub trace: Vec<LossTraceRow>,
}

/// Shared random initial model: one student row per global student.
pub fn initial_template(
    datasets: &[ClientDataset],
    qmatrix: &QMatrix,
    training: &TrainingConfig,
    seed: u64,
) -> Result<ModelParams> {
    training.validate()?;
    if training.dim != qmatrix.num_concepts() {
        return Err(Error::ShapeMismatch(format!(
            "embedding size {} must equal the concept count {}",
            training.dim,
            qmatrix.num_concepts()
        )));
    }
    let n_students = datasets
        .iter()
        .flat_map(|d| d.students.iter())
        .max()
        .map_or(0, |&m| m + 1);
    Ok(ModelParams::init(
        training.kind,
        n_students,
        qmatrix.num_exercises(),
        training.dim,
        &mut server_rng(seed),
    ))
}

pub fn run_protocol(
    datasets: &[ClientDataset],
    qmatrix: &QMatrix,
    config: &ProtocolConfig,
) -> Result<ProtocolOutcome> {
    run_protocol_with(datasets, qmatrix, config, |_, _| Ok(()))
}

/// Runs `config.rounds` rounds, calling `observer` after every aggregation.
pub fn run_protocol_with<F>(
    datasets: &[ClientDataset],
    qmatrix: &QMatrix,
    config: &ProtocolConfig,
    mut observer: F,
) -> Result<ProtocolOutcome>
where
    F: FnMut(&ServerState, &[ClientState]) -> Result<()>,
{
    config.validate()?;
    if datasets.is_empty() {
        return Err(Error::invalid("no client datasets"));
    }
    let schools: BTreeSet<usize> = datasets.iter().map(|d| d.school).collect();
    if schools.len() != datasets.len() {
        return Err(Error::invalid("two datasets share a school index"));
    }
    let template = initial_template(datasets, qmatrix, &config.training, config.seed)?;
    let mut server = ServerState::from_template(&template, &config.strategy);
    let mut clients: Vec<ClientState> = datasets
        .iter()
        .map(|d| ClientState::from_template(d.clone(), &template, &config.training, config.seed))
        .collect();
    drop(template);

    let mut trace = Vec::with_capacity(config.rounds * clients.len());
    for _ in 0..config.rounds {
        let report = run_round(
            &mut server,
            &mut clients,
            qmatrix,
            &config.strategy,
            &config.training,
            config.parallel,
        )?;
        for i in 0..report.schools.len() {
            trace.push(LossTraceRow {
                round: report.round,
                school: report.schools[i],
                client_loss: report.losses[i],
                aggregation_weight: report.weights[i],
            });
        }
        observer(&server, &clients)?;
    }
    for c in &mut clients {
        c.receive(&server);
    }
    Ok(ProtocolOutcome {
        clients,
        server,
        trace,
    })
}

/// Result of [`run_centralized`].
#[derive(Debug, Clone)]
pub struct CentralizedOutcome {
    pub params: ModelParams,
    /// Reported loss after each block of `training.epochs` epochs.
    pub round_losses: Vec<f64>,
}

/// Trains one model on a single pooled dataset with no federation, for
/// `rounds` blocks of `training.epochs` epochs. Uses the same initialisation
/// and RNG streams as [`run_protocol`], so a one-client protocol without
/// noise reproduces it exactly.
pub fn run_centralized(
    dataset: &ClientDataset,
    qmatrix: &QMatrix,
    training: &TrainingConfig,
    rounds: usize,
    seed: u64,
) -> Result<CentralizedOutcome> {
    if rounds == 0 {
        return Err(Error::invalid("rounds must be at least 1"));
    }
    let template = initial_template(std::slice::from_ref(dataset), qmatrix, training, seed)?;
    let mut client = ClientState::from_template(dataset.clone(), &template, training, seed);
    let mut round_losses = Vec::with_capacity(rounds);
    for _ in 0..rounds {
        let outcome = train_local(
            &mut client.params,
            &client.dataset,
            qmatrix,
            training.epochs,
            training.batch_size,
            &mut client.optimizer,
            &mut client.rng,
        )?;
        round_losses.push(match training.client_loss {
            LossReduction::Mean => outcome.mean_loss,
            LossReduction::Sum => outcome.sum_loss,
        });
    }
    Ok(CentralizedOutcome {
        params: client.params,
        round_losses,
    })
}
