//! Independent oracles shared by the integration test targets.
#![allow(dead_code, clippy::needless_range_loop)]

use fedcog::data::QMatrix;
use fedcog::model::{bce_loss, ModelKind, ModelParams};
use rand::Rng;

pub fn sig(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Random parameters with entries in `[-1, 1]` and a random Q-matrix with
/// every row non-empty.
pub fn random_instance<R: Rng>(
    kind: ModelKind,
    n_students: usize,
    n_exercises: usize,
    dim: usize,
    rng: &mut R,
) -> (ModelParams, QMatrix) {
    let mut params = ModelParams::zeros(kind, n_students, n_exercises, dim);
    for block in params.blocks_mut() {
        for x in block.as_mut_slice() {
            *x = rng.random_range(-1.0..1.0);
        }
    }
    let rows: Vec<Vec<u8>> = (0..n_exercises)
        .map(|_| {
            let mut row: Vec<u8> = (0..dim).map(|_| rng.random_bool(0.5) as u8).collect();
            let k = rng.random_range(0..dim);
            row[k] = 1;
            row
        })
        .collect();
    (params, QMatrix::from_rows(&rows).unwrap())
}

/// Straight transcription of the NCD formula chain with explicit loops.
pub fn ncd_oracle(p: &ModelParams, q: &QMatrix, s: usize, e: usize) -> f64 {
    let d = p.dim();
    let diag = p.diagnostic.as_ref().unwrap();
    let mut disc = 0.0;
    for k in 0..d {
        disc += p.exercise.get(e, k) * diag.w_disc.get(k, 0);
    }
    let f_disc = sig(disc);
    let mut y = vec![0.0; d];
    for k in 0..d {
        let qk = if q.get(e, k) { 1.0 } else { 0.0 };
        y[k] = qk * (sig(p.student.get(s, k)) - sig(p.exercise.get(e, k))) * f_disc;
    }
    let layer = |x: &[f64], w: &fedcog::model::Matrix| -> Vec<f64> {
        (0..w.cols())
            .map(|c| sig((0..w.rows()).map(|r| x[r] * w.get(r, c)).sum()))
            .collect()
    };
    let a1 = layer(&y, &diag.w_fc1);
    let a2 = layer(&a1, &diag.w_fc2);
    layer(&a2, &diag.w_fc3)[0]
}

pub fn dina_oracle(p: &ModelParams, q: &QMatrix, s: usize, e: usize) -> f64 {
    let g = 0.5 * sig(p.exercise.get(e, 0));
    let sl = 0.5 * sig(p.exercise.get(e, 1));
    let mut eta = 1.0;
    for k in 0..q.num_concepts() {
        if q.get(e, k) {
            eta *= sig(p.student.get(s, k));
        }
    }
    g + (1.0 - sl - g) * eta
}

fn loss_at(p: &ModelParams, q: &QMatrix, s: usize, e: usize, r: f64) -> f64 {
    bce_loss(p.predict(q, s, e), r)
}

/// Compares every analytic partial against a central difference with step
/// `h`. Returns the number of entries checked and the entries that failed
/// `|a − b| ≤ 1e-8` or relative error `< 1e-4`.
pub fn finite_difference_check(
    p: &ModelParams,
    q: &QMatrix,
    s: usize,
    e: usize,
    r: f64,
    h: f64,
) -> (usize, Vec<String>) {
    let analytic = p.gradients(q, s, e, r);
    let mut failures = Vec::new();
    let mut checked = 0;
    let names: Vec<&str> = p.blocks().iter().map(|(n, _)| *n).collect();
    for (b, name) in names.iter().enumerate() {
        let len = p.blocks()[b].1.len();
        for i in 0..len {
            let mut plus = p.clone();
            plus.blocks_mut()[b].as_mut_slice()[i] += h;
            let mut minus = p.clone();
            minus.blocks_mut()[b].as_mut_slice()[i] -= h;
            let fd = (loss_at(&plus, q, s, e, r) - loss_at(&minus, q, s, e, r)) / (2.0 * h);
            let an = analytic.blocks()[b].1.as_slice()[i];
            let diff = (an - fd).abs();
            let rel = diff / an.abs().max(fd.abs());
            checked += 1;
            if !(diff <= 1e-8 || rel < 1e-4) {
                failures.push(format!("{name}[{i}]: analytic {an:e} vs fd {fd:e}"));
            }
        }
    }
    (checked, failures)
}

use fedcog::data::{
    build_client_datasets, generate_synthetic, ClientDataset, SyntheticDataset, SyntheticSpec,
};
use fedcog::federation::{
    AggregationStrategy, LossReduction, Personalization, ProtocolConfig, StrategyConfig,
    TrainingConfig,
};

/// Small four-school synthetic problem and its per-school splits.
pub fn small_problem(students: usize, seed: u64) -> (SyntheticDataset, Vec<ClientDataset>) {
    let spec = SyntheticSpec::new(4, students, 40, 4, vec![-2.0, 1.5, 1.5, 1.5], 20);
    let data = generate_synthetic(&spec, seed).unwrap();
    let ds = build_client_datasets(&data.catalog, &data.logs, 0.8, seed).unwrap();
    (data, ds)
}

pub fn protocol_config(
    personalization: Personalization,
    aggregator: AggregationStrategy,
    dp_scale: f64,
    dim: usize,
    rounds: usize,
    seed: u64,
) -> ProtocolConfig {
    ProtocolConfig {
        strategy: StrategyConfig {
            personalization,
            aggregator,
            dp_scale,
        },
        training: TrainingConfig {
            kind: ModelKind::Ncd,
            dim,
            epochs: 2,
            batch_size: 128,
            learning_rate: 0.001,
            clip_monotone: false,
            client_loss: LossReduction::Mean,
        },
        rounds,
        seed,
        parallel: false,
    }
}

use fedcog::data::ResponseLog;
use fedcog::model::Matrix;

/// AUC as the fraction of positive/negative pairs ranked correctly, ties
/// counting one half. Returned as (twice the concordant count, pair count).
pub fn auc_pairwise(scores: &[f64], labels: &[bool]) -> (u64, u64) {
    let mut twice = 0u64;
    let mut pairs = 0u64;
    for i in 0..scores.len() {
        if !labels[i] {
            continue;
        }
        for j in 0..scores.len() {
            if labels[j] {
                continue;
            }
            pairs += 1;
            if scores[i] > scores[j] {
                twice += 2;
            } else if scores[i] == scores[j] {
                twice += 1;
            }
        }
    }
    (twice, pairs)
}

/// DOA by explicit loops over concepts, students a, students b and exercises.
pub fn doa_oracle(prof: &Matrix, q: &QMatrix, logs: &[ResponseLog]) -> Vec<Option<f64>> {
    let n = prof.rows();
    let m = q.num_exercises();
    let mut r: Vec<Vec<Option<bool>>> = vec![vec![None; m]; n];
    for l in logs {
        r[l.student][l.exercise] = Some(l.correct);
    }
    let mut present = vec![false; n];
    for l in logs {
        present[l.student] = true;
    }
    let mut out = Vec::new();
    for k in 0..q.num_concepts() {
        let mut z = 0usize;
        let mut total = 0.0;
        for a in 0..n {
            for b in 0..n {
                if !present[a]
                    || !present[b]
                    || prof.get(a, k).partial_cmp(&prof.get(b, k))
                        != Some(std::cmp::Ordering::Greater)
                {
                    continue;
                }
                let mut shared = 0;
                let mut agree = 0;
                for j in 0..m {
                    if !q.get(j, k) {
                        continue;
                    }
                    if let (Some(ra), Some(rb)) = (r[a][j], r[b][j]) {
                        shared += 1;
                        if ra && !rb {
                            agree += 1;
                        }
                    }
                }
                if shared > 0 {
                    z += 1;
                    total += agree as f64 / shared as f64;
                }
            }
        }
        out.push((z > 0).then(|| total / z as f64));
    }
    out
}
