use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{validate_logs, ClientDataset, EntityCatalog, ResponseLog};
use crate::{Error, Result};

/// Groups logs by the school of their student, preserving log order.
pub fn partition_by_school(catalog: &EntityCatalog, logs: &[ResponseLog]) -> Vec<Vec<ResponseLog>> {
    let mut parts = vec![Vec::new(); catalog.num_schools];
    for log in logs {
        parts[catalog.school_of(log.student)].push(*log);
    }
    parts
}

/// Per-student stratified train/test split of one school's logs.
///
/// Logs sharing a (student, exercise) pair move together, so the two sides
/// never share a pair. Each student with `u ≥ 2` pairs keeps
/// `round(train_fraction · u)` of them for training, clamped to `[1, u − 1]`;
/// a student with a single pair trains on it. The shuffle is driven by
/// `rng_seed` on a ChaCha stream selected by the school index.
pub fn split_client(
    school: usize,
    students: Vec<usize>,
    logs: &[ResponseLog],
    train_fraction: f64,
    rng_seed: u64,
) -> Result<ClientDataset> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::invalid(format!(
            "train_fraction must lie in (0, 1), got {train_fraction}"
        )));
    }
    if logs.len() < 2 {
        return Err(Error::invalid(format!(
            "school {school} has {} logs; splitting needs at least 2",
            logs.len()
        )));
    }

    // student -> pair order -> logs of that pair
    let mut units: BTreeMap<usize, Vec<Vec<ResponseLog>>> = BTreeMap::new();
    let mut pair_slot: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    for log in logs {
        let per_student = units.entry(log.student).or_default();
        let slot = *pair_slot
            .entry((log.student, log.exercise))
            .or_insert_with(|| {
                per_student.push(Vec::new());
                per_student.len() - 1
            });
        per_student[slot].push(*log);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    rng.set_stream(school as u64);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (_, mut student_units) in units {
        let u = student_units.len();
        student_units.shuffle(&mut rng);
        let n_train = if u == 1 {
            1
        } else {
            ((train_fraction * u as f64).round() as usize).clamp(1, u - 1)
        };
        for (i, unit) in student_units.into_iter().enumerate() {
            if i < n_train {
                train.extend(unit);
            } else {
                test.extend(unit);
            }
        }
    }
    ClientDataset::new(school, students, train, test)
}

/// Splits every school of the catalog; all schools share `rng_seed` but
/// draw from distinct streams.
pub fn build_client_datasets(
    catalog: &EntityCatalog,
    logs: &[ResponseLog],
    train_fraction: f64,
    rng_seed: u64,
) -> Result<Vec<ClientDataset>> {
    validate_logs(logs, catalog)?;
    partition_by_school(catalog, logs)
        .into_iter()
        .enumerate()
        .map(|(school, part)| {
            split_client(
                school,
                catalog.students_of(school),
                &part,
                train_fraction,
                rng_seed,
            )
        })
        .collect()
}
