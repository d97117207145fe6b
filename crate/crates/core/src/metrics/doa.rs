use std::cmp::Ordering;
use std::collections::BTreeSet;

use rayon::prelude::*;

use crate::data::{QMatrix, ResponseLog};
use crate::model::Matrix;
use crate::{Error, Result};

/// DOA for each concept, `None` where no ordered pair shares an exercise.
///
/// For concept `k`, every ordered pair `(a, b)` with `F[a][k] > F[b][k]`
/// that both answered at least one exercise testing `k` contributes the
/// fraction of those shared exercises on which `a` was right and `b` wrong.
/// DOA(k) is the mean contribution over such pairs. When a student answered
/// an exercise more than once, the last log counts.
pub fn doa_per_concept(
    proficiency: &Matrix,
    qmatrix: &QMatrix,
    logs: &[ResponseLog],
) -> Result<Vec<Option<f64>>> {
    let m = qmatrix.num_exercises();
    let k_count = qmatrix.num_concepts();
    if proficiency.cols() != k_count {
        return Err(Error::ShapeMismatch(format!(
            "proficiency has {} columns, Q-matrix {} concepts",
            proficiency.cols(),
            k_count
        )));
    }
    let mut students = BTreeSet::new();
    for log in logs {
        if log.student >= proficiency.rows() || log.exercise >= m {
            return Err(Error::ShapeMismatch(format!(
                "log ({}, {}) outside proficiency/Q-matrix range",
                log.student, log.exercise
            )));
        }
        students.insert(log.student);
    }
    let students: Vec<usize> = students.into_iter().collect();
    let index_of = |s: usize| students.binary_search(&s).expect("collected above");

    // -1 unanswered, else the most recent label
    let mut resp = vec![-1i8; students.len() * m];
    for log in logs {
        resp[index_of(log.student) * m + log.exercise] = log.correct as i8;
    }
    let mut by_concept: Vec<Vec<usize>> = vec![Vec::new(); k_count];
    for j in 0..m {
        for &k in qmatrix.concepts(j) {
            by_concept[k].push(j);
        }
    }

    let per_concept = (0..k_count)
        .into_par_iter()
        .map(|k| {
            let exercises = &by_concept[k];
            let mut z = 0u64;
            let mut total = 0.0;
            for (ia, &a) in students.iter().enumerate() {
                let fa = proficiency.get(a, k);
                let ra = &resp[ia * m..(ia + 1) * m];
                for (ib, &b) in students.iter().enumerate() {
                    if fa.partial_cmp(&proficiency.get(b, k)) != Some(Ordering::Greater) {
                        continue;
                    }
                    let rb = &resp[ib * m..(ib + 1) * m];
                    let mut shared = 0u32;
                    let mut agree = 0u32;
                    for &j in exercises {
                        if ra[j] >= 0 && rb[j] >= 0 {
                            shared += 1;
                            if ra[j] > rb[j] {
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
            (z > 0).then(|| total / z as f64)
        })
        .collect();
    Ok(per_concept)
}

/// Mean DOA over concepts where it is defined.
pub fn degree_of_agreement(
    proficiency: &Matrix,
    qmatrix: &QMatrix,
    logs: &[ResponseLog],
) -> Result<f64> {
    let defined: Vec<f64> = doa_per_concept(proficiency, qmatrix, logs)?
        .into_iter()
        .flatten()
        .collect();
    if defined.is_empty() {
        return Err(Error::UndefinedMetric(
            "DOA undefined: no concept has a comparable pair",
        ));
    }
    Ok(defined.iter().sum::<f64>() / defined.len() as f64)
}
