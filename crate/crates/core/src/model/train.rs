use rand::seq::SliceRandom;
use rand::Rng;

use super::{AdamState, ModelParams};
use crate::data::{ClientDataset, QMatrix};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalTrainOutcome {
    /// Mean per-example BCE over the final epoch.
    pub mean_loss: f64,
    /// Summed per-example BCE over the final epoch.
    pub sum_loss: f64,
    /// Number of training logs.
    pub examples: usize,
}

/// Trains `params` on `dataset.train_logs` for `epochs` shuffled passes of
/// mini-batch Adam. Losses are measured with the parameters in effect when
/// each example's batch was processed.
pub fn train_local<R: Rng + ?Sized>(
    params: &mut ModelParams,
    dataset: &ClientDataset,
    qmatrix: &QMatrix,
    epochs: usize,
    batch_size: usize,
    optimizer: &mut AdamState,
    rng: &mut R,
) -> Result<LocalTrainOutcome> {
    if epochs == 0 {
        return Err(Error::invalid("epochs must be at least 1"));
    }
    if batch_size == 0 {
        return Err(Error::invalid("batch_size must be at least 1"));
    }
    if dataset.train_logs.is_empty() {
        return Err(Error::invalid(format!(
            "school {} has an empty training set",
            dataset.school
        )));
    }
    params.check_compatible(qmatrix)?;
    if params.n_students() != dataset.num_students() {
        return Err(Error::ShapeMismatch(format!(
            "student block has {} rows, school {} has {} students",
            params.n_students(),
            dataset.school,
            dataset.num_students()
        )));
    }

    let base: Vec<(usize, usize, f64)> = dataset
        .train_logs
        .iter()
        .map(|l| {
            let local = dataset.local(l.student).expect("validated membership");
            (local, l.exercise, l.label())
        })
        .collect();
    if let Some(&(_, e, _)) = base.iter().find(|x| x.1 >= qmatrix.num_exercises()) {
        return Err(Error::ShapeMismatch(format!(
            "log references exercise {e}, model has {}",
            qmatrix.num_exercises()
        )));
    }
    let mut grads = params.zeros_like();
    let mut sum_loss = 0.0;
    let mut examples = base.clone();
    for _ in 0..epochs {
        // fresh permutation of the log order every epoch
        examples.copy_from_slice(&base);
        examples.shuffle(rng);
        let mut epoch_loss = 0.0;
        for batch in examples.chunks(batch_size) {
            grads.fill_zero();
            let scale = 1.0 / batch.len() as f64;
            for &(s, e, r) in batch {
                let (_, loss) = params.accumulate_gradients(qmatrix, s, e, r, scale, &mut grads);
                epoch_loss += loss;
            }
            optimizer.step(params, &grads);
        }
        sum_loss = epoch_loss;
    }
    Ok(LocalTrainOutcome {
        mean_loss: sum_loss / examples.len() as f64,
        sum_loss,
        examples: examples.len(),
    })
}
