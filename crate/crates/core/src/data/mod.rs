//! Response logs, the Q-matrix, and the per-school client datasets built from them.

mod filter;
mod ingest;
mod split;
mod synthetic;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use filter::filter_dataset;
pub use ingest::{ingest_logs, ingest_readers, IngestReport, Ingested};
pub use split::{build_client_datasets, partition_by_school, split_client};
pub use synthetic::{
    generate_synthetic, write_dataset, GroundTruth, SyntheticDataset, SyntheticSpec,
};

/// Entity counts plus the student → school assignment.
///
/// The `*_ids` vectors keep the original identifiers from the input files so
/// reports can name schools and students the way the source data does.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntityCatalog {
    pub num_students: usize,
    pub num_exercises: usize,
    pub num_concepts: usize,
    pub num_schools: usize,
    pub student_to_school: Vec<usize>,
    pub student_ids: Vec<String>,
    pub exercise_ids: Vec<String>,
    pub concept_ids: Vec<String>,
    pub school_ids: Vec<String>,
}

impl EntityCatalog {
    /// Builds a catalog with numeric identifiers (`"0"`, `"1"`, ...).
    pub fn with_numeric_ids(
        student_to_school: Vec<usize>,
        num_exercises: usize,
        num_concepts: usize,
        num_schools: usize,
    ) -> Result<Self> {
        let ids = |n: usize| (0..n).map(|i| i.to_string()).collect::<Vec<_>>();
        let catalog = Self {
            num_students: student_to_school.len(),
            num_exercises,
            num_concepts,
            num_schools,
            student_ids: ids(student_to_school.len()),
            exercise_ids: ids(num_exercises),
            concept_ids: ids(num_concepts),
            school_ids: ids(num_schools),
            student_to_school,
        };
        catalog.validate()?;
        Ok(catalog)
    }

    pub fn validate(&self) -> Result<()> {
        if self.student_to_school.len() != self.num_students
            || self.student_ids.len() != self.num_students
            || self.exercise_ids.len() != self.num_exercises
            || self.concept_ids.len() != self.num_concepts
            || self.school_ids.len() != self.num_schools
        {
            return Err(Error::invalid("catalog lengths are inconsistent"));
        }
        let mut owned = vec![0usize; self.num_schools];
        for (student, &school) in self.student_to_school.iter().enumerate() {
            if school >= self.num_schools {
                return Err(Error::invalid(format!(
                    "student {student} maps to school {school} outside [0, {})",
                    self.num_schools
                )));
            }
            owned[school] += 1;
        }
        if let Some(empty) = owned.iter().position(|&n| n == 0) {
            return Err(Error::invalid(format!("school {empty} owns no students")));
        }
        Ok(())
    }

    pub fn school_of(&self, student: usize) -> usize {
        self.student_to_school[student]
    }

    /// Global student indices of one school, ascending.
    pub fn students_of(&self, school: usize) -> Vec<usize> {
        self.student_to_school
            .iter()
            .enumerate()
            .filter(|(_, &s)| s == school)
            .map(|(i, _)| i)
            .collect()
    }
}

/// Binary exercise × concept incidence matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct QMatrix {
    num_exercises: usize,
    num_concepts: usize,
    mask: Vec<f64>,
    concepts: Vec<Vec<usize>>,
}

impl QMatrix {
    /// Builds the matrix from each exercise's concept list. Every exercise
    /// must test at least one concept.
    pub fn from_concept_lists(num_concepts: usize, lists: Vec<Vec<usize>>) -> Result<Self> {
        let num_exercises = lists.len();
        let mut mask = vec![0.0; num_exercises * num_concepts];
        let mut concepts = Vec::with_capacity(num_exercises);
        for (j, mut list) in lists.into_iter().enumerate() {
            list.sort_unstable();
            list.dedup();
            if list.is_empty() {
                return Err(Error::EmptyQRow(j.to_string()));
            }
            for &k in &list {
                if k >= num_concepts {
                    return Err(Error::invalid(format!(
                        "exercise {j} references concept {k} outside [0, {num_concepts})"
                    )));
                }
                mask[j * num_concepts + k] = 1.0;
            }
            concepts.push(list);
        }
        Ok(Self {
            num_exercises,
            num_concepts,
            mask,
            concepts,
        })
    }

    /// Builds the matrix from dense 0/1 rows.
    pub fn from_rows(rows: &[Vec<u8>]) -> Result<Self> {
        let num_concepts = rows.first().map_or(0, Vec::len);
        let mut lists = Vec::with_capacity(rows.len());
        for (j, row) in rows.iter().enumerate() {
            if row.len() != num_concepts {
                return Err(Error::ShapeMismatch(format!(
                    "Q-matrix row {j} has {} entries, expected {num_concepts}",
                    row.len()
                )));
            }
            let mut list = Vec::new();
            for (k, &q) in row.iter().enumerate() {
                match q {
                    0 => {}
                    1 => list.push(k),
                    other => {
                        return Err(Error::invalid(format!(
                            "Q-matrix entry ({j}, {k}) is {other}, expected 0 or 1"
                        )))
                    }
                }
            }
            lists.push(list);
        }
        Self::from_concept_lists(num_concepts, lists)
    }

    pub fn num_exercises(&self) -> usize {
        self.num_exercises
    }

    pub fn num_concepts(&self) -> usize {
        self.num_concepts
    }

    /// Row `j` as a 0.0/1.0 mask (the concept vector of the exercise).
    pub fn row(&self, exercise: usize) -> &[f64] {
        let k = self.num_concepts;
        &self.mask[exercise * k..(exercise + 1) * k]
    }

    /// Concepts tested by `exercise`, ascending.
    pub fn concepts(&self, exercise: usize) -> &[usize] {
        &self.concepts[exercise]
    }

    pub fn get(&self, exercise: usize, concept: usize) -> bool {
        self.mask[exercise * self.num_concepts + concept] != 0.0
    }
}

/// One (student, exercise, correctness) interaction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ResponseLog {
    pub student: usize,
    pub exercise: usize,
    pub correct: bool,
}

impl ResponseLog {
    pub fn new(student: usize, exercise: usize, correct: bool) -> Self {
        Self {
            student,
            exercise,
            correct,
        }
    }

    pub fn label(&self) -> f64 {
        if self.correct {
            1.0
        } else {
            0.0
        }
    }
}

/// Checks every log against the catalog bounds.
pub fn validate_logs(logs: &[ResponseLog], catalog: &EntityCatalog) -> Result<()> {
    for (i, log) in logs.iter().enumerate() {
        if log.student >= catalog.num_students || log.exercise >= catalog.num_exercises {
            return Err(Error::invalid(format!(
                "log {i} ({}, {}) is outside the catalog",
                log.student, log.exercise
            )));
        }
    }
    Ok(())
}

/// One school's private data, split into train and test logs.
///
/// Student indices inside the logs stay global; `students` maps the dense
/// local range `[0, N_t)` back to them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientDataset {
    pub school: usize,
    pub train_logs: Vec<ResponseLog>,
    pub test_logs: Vec<ResponseLog>,
    pub students: Vec<usize>,
    local_index: BTreeMap<usize, usize>,
}

impl ClientDataset {
    /// `students` is the school's global student list; local indices follow
    /// its ascending order.
    pub fn new(
        school: usize,
        mut students: Vec<usize>,
        train_logs: Vec<ResponseLog>,
        test_logs: Vec<ResponseLog>,
    ) -> Result<Self> {
        students.sort_unstable();
        students.dedup();
        let local_index: BTreeMap<usize, usize> = students
            .iter()
            .enumerate()
            .map(|(local, &global)| (global, local))
            .collect();
        for log in train_logs.iter().chain(&test_logs) {
            if !local_index.contains_key(&log.student) {
                return Err(Error::invalid(format!(
                    "student {} is not a member of school {school}",
                    log.student
                )));
            }
        }
        Ok(Self {
            school,
            train_logs,
            test_logs,
            students,
            local_index,
        })
    }

    pub fn num_students(&self) -> usize {
        self.students.len()
    }

    pub fn local(&self, global_student: usize) -> Option<usize> {
        self.local_index.get(&global_student).copied()
    }

    pub fn global(&self, local_student: usize) -> usize {
        self.students[local_student]
    }

    pub fn all_logs(&self) -> impl Iterator<Item = &ResponseLog> {
        self.train_logs.iter().chain(&self.test_logs)
    }
}
