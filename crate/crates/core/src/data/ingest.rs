use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{EntityCatalog, QMatrix, ResponseLog};
use crate::{Error, Result};

/// Counters describing what ingestion discarded.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestReport {
    pub rows_read: usize,
    pub dropped_missing: usize,
    pub duplicates_removed: usize,
}

#[derive(Debug, Clone)]
pub struct Ingested {
    pub catalog: EntityCatalog,
    pub qmatrix: QMatrix,
    pub logs: Vec<ResponseLog>,
    pub report: IngestReport,
}

pub fn ingest_logs(log_file: &Path, qmatrix_file: &Path) -> Result<Ingested> {
    let logs = File::open(log_file).map_err(|e| Error::io(log_file, e))?;
    let qm = File::open(qmatrix_file).map_err(|e| Error::io(qmatrix_file, e))?;
    ingest_readers(
        logs,
        &log_file.display().to_string(),
        qm,
        &qmatrix_file.display().to_string(),
    )
}

/// Same as [`ingest_logs`] over arbitrary readers; `*_name` labels errors.
pub fn ingest_readers<L: Read, Q: Read>(
    log_reader: L,
    log_name: &str,
    q_reader: Q,
    q_name: &str,
) -> Result<Ingested> {
    let (exercise_ids, concept_ids, concept_lists) = read_qmatrix(q_reader, q_name)?;
    let qmatrix = QMatrix::from_concept_lists(concept_ids.len(), concept_lists)?;
    let exercise_index: HashMap<&str, usize> = exercise_ids
        .iter()
        .enumerate()
        .map(|(i, id)| (id.as_str(), i))
        .collect();

    let mut reader = csv_reader(log_reader);
    let header = reader.headers()?.clone();
    let col = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| malformed(log_name, 1, format!("missing column `{name}`")))
    };
    let school_col = col("school_id")?;
    let student_col = col("student_id")?;
    let exercise_col = col("exercise_id")?;
    let correct_col = col("correct")?;

    let mut report = IngestReport::default();
    let mut school_ids: Vec<String> = Vec::new();
    let mut school_index: HashMap<String, usize> = HashMap::new();
    let mut student_ids: Vec<String> = Vec::new();
    let mut student_index: HashMap<String, usize> = HashMap::new();
    let mut student_to_school: Vec<usize> = Vec::new();
    let mut seen: HashSet<ResponseLog> = HashSet::new();
    let mut logs = Vec::new();

    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        report.rows_read += 1;
        if record.len() != header.len() {
            return Err(malformed(
                log_name,
                line,
                format!("expected {} fields, found {}", header.len(), record.len()),
            ));
        }
        let field = |c: usize| record.get(c).unwrap_or("");
        let (school, student, exercise, correct) = (
            field(school_col),
            field(student_col),
            field(exercise_col),
            field(correct_col),
        );
        if [school, student, exercise, correct]
            .iter()
            .any(|f| f.is_empty())
        {
            report.dropped_missing += 1;
            continue;
        }
        let correct = match correct {
            "0" => false,
            "1" => true,
            other => {
                return Err(malformed(
                    log_name,
                    line,
                    format!("`correct` must be 0 or 1, found `{other}`"),
                ))
            }
        };
        let &exercise = exercise_index
            .get(exercise)
            .ok_or_else(|| Error::UnknownExercise(exercise.to_string()))?;

        let school = *school_index.entry(school.to_string()).or_insert_with(|| {
            school_ids.push(school.to_string());
            school_ids.len() - 1
        });
        let student = match student_index.get(student) {
            Some(&s) => {
                if student_to_school[s] != school {
                    return Err(malformed(
                        log_name,
                        line,
                        format!(
                            "student `{student}` listed under schools `{}` and `{}`",
                            school_ids[student_to_school[s]], school_ids[school]
                        ),
                    ));
                }
                s
            }
            None => {
                student_ids.push(student.to_string());
                student_to_school.push(school);
                student_index.insert(student.to_string(), student_ids.len() - 1);
                student_ids.len() - 1
            }
        };

        let log = ResponseLog::new(student, exercise, correct);
        if seen.insert(log) {
            logs.push(log);
        } else {
            report.duplicates_removed += 1;
        }
    }

    if logs.is_empty() {
        return Err(Error::NoRecords(log_name.to_string()));
    }

    let catalog = EntityCatalog {
        num_students: student_ids.len(),
        num_exercises: exercise_ids.len(),
        num_concepts: concept_ids.len(),
        num_schools: school_ids.len(),
        student_to_school,
        student_ids,
        exercise_ids,
        concept_ids,
        school_ids,
    };
    catalog.validate()?;
    Ok(Ingested {
        catalog,
        qmatrix,
        logs,
        report,
    })
}

type QRows = (Vec<String>, Vec<String>, Vec<Vec<usize>>);

fn read_qmatrix<R: Read>(q_reader: R, q_name: &str) -> Result<QRows> {
    let mut reader = csv_reader(q_reader);
    let header = reader.headers()?.clone();
    let col = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| malformed(q_name, 1, format!("missing column `{name}`")))
    };
    let exercise_col = col("exercise_id")?;
    let concepts_col = col("concept_ids")?;

    let mut exercise_ids = Vec::new();
    let mut seen_exercises = HashSet::new();
    let mut concept_ids: Vec<String> = Vec::new();
    let mut concept_index: HashMap<String, usize> = HashMap::new();
    let mut lists = Vec::new();

    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != header.len() {
            return Err(malformed(
                q_name,
                line,
                format!("expected {} fields, found {}", header.len(), record.len()),
            ));
        }
        let exercise = record.get(exercise_col).unwrap_or("");
        if exercise.is_empty() {
            return Err(malformed(q_name, line, "empty exercise_id".into()));
        }
        if !seen_exercises.insert(exercise.to_string()) {
            return Err(malformed(
                q_name,
                line,
                format!("exercise `{exercise}` listed twice"),
            ));
        }
        let mut list = Vec::new();
        for concept in record
            .get(concepts_col)
            .unwrap_or("")
            .split(';')
            .map(str::trim)
            .filter(|c| !c.is_empty())
        {
            let k = *concept_index.entry(concept.to_string()).or_insert_with(|| {
                concept_ids.push(concept.to_string());
                concept_ids.len() - 1
            });
            list.push(k);
        }
        if list.is_empty() {
            return Err(Error::EmptyQRow(exercise.to_string()));
        }
        exercise_ids.push(exercise.to_string());
        lists.push(list);
    }
    if exercise_ids.is_empty() {
        return Err(Error::NoRecords(q_name.to_string()));
    }
    Ok((exercise_ids, concept_ids, lists))
}

fn csv_reader<R: Read>(reader: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader)
}

fn malformed(file: &str, line: u64, reason: String) -> Error {
    Error::MalformedRow {
        file: file.to_string(),
        line,
        reason,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const Q: &str = "exercise_id,concept_ids\ne1,c1;c2\ne2,c2\n";

    fn ingest(logs: &str) -> Result<Ingested> {
        ingest_readers(logs.as_bytes(), "logs.csv", Q.as_bytes(), "q.csv")
    }

    #[test]
    fn identical_rows_collapse_to_one_log() {
        let out =
            ingest("school_id,student_id,exercise_id,correct\nA,s1,e1,1\nA,s1,e1,1\n").unwrap();
        assert_eq!(out.logs, vec![ResponseLog::new(0, 0, true)]);
        assert_eq!(out.report.duplicates_removed, 1);
    }

    #[test]
    fn empty_log_file_is_rejected() {
        let err = ingest("school_id,student_id,exercise_id,correct\n").unwrap_err();
        assert!(err.to_string().contains("no records"), "{err}");
    }

    #[test]
    fn unknown_exercise_is_named() {
        let err = ingest("school_id,student_id,exercise_id,correct\nA,s1,e9,1\n").unwrap_err();
        assert!(
            matches!(&err, Error::UnknownExercise(id) if id == "e9"),
            "{err}"
        );
        assert!(err.to_string().contains("e9"));
    }

    #[test]
    fn rows_with_missing_fields_are_dropped_and_counted() {
        let out = ingest(
            "school_id,student_id,exercise_id,correct\nA,s1,e1,1\nA,,e2,0\nA,s1,e2,\nB,s2,e2,0\n",
        )
        .unwrap();
        assert_eq!(out.logs.len(), 2);
        assert_eq!(out.report.dropped_missing, 2);
        assert_eq!(out.catalog.num_schools, 2);
    }

    #[test]
    fn malformed_row_reports_line_number() {
        let err =
            ingest("school_id,student_id,exercise_id,correct\nA,s1,e1,1\nA,s1,e2\n").unwrap_err();
        match err {
            Error::MalformedRow { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other}"),
        }
        let err = ingest("school_id,student_id,exercise_id,correct\nA,s1,e1,yes\n").unwrap_err();
        assert!(matches!(err, Error::MalformedRow { line: 2, .. }));
    }

    #[test]
    fn all_zero_q_row_is_rejected() {
        let err = ingest_readers(
            "school_id,student_id,exercise_id,correct\nA,s1,e1,1\n".as_bytes(),
            "logs.csv",
            "exercise_id,concept_ids\ne1,\n".as_bytes(),
            "q.csv",
        )
        .unwrap_err();
        assert!(matches!(err, Error::EmptyQRow(ref e) if e == "e1"));
    }

    #[test]
    fn entities_are_densely_reindexed() {
        let out =
            ingest("school_id,student_id,exercise_id,correct\nZ,s9,e2,1\nY,s3,e1,0\nZ,s4,e1,1\n")
                .unwrap();
        let c = &out.catalog;
        assert_eq!(c.school_ids, vec!["Z", "Y"]);
        assert_eq!(c.student_ids, vec!["s9", "s3", "s4"]);
        assert_eq!(c.student_to_school, vec![0, 1, 0]);
        assert_eq!(c.num_exercises, 2);
        assert_eq!(c.num_concepts, 2);
        assert_eq!(out.qmatrix.concepts(0), &[0, 1]);
        assert_eq!(out.logs[0], ResponseLog::new(0, 1, true));
    }

    #[test]
    fn student_in_two_schools_is_malformed() {
        let err =
            ingest("school_id,student_id,exercise_id,correct\nA,s1,e1,1\nB,s1,e2,1\n").unwrap_err();
        assert!(matches!(err, Error::MalformedRow { line: 3, .. }));
    }
}
