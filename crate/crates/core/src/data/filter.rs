use super::{validate_logs, EntityCatalog, ResponseLog};
use crate::{Error, Result};

/// Drops students with fewer than `min_student_logs` logs, then schools with
/// fewer than `min_school_logs`, repeating until neither rule removes
/// anything. Surviving students and schools are re-indexed densely in their
/// original order; exercises and concepts keep their indices.
pub fn filter_dataset(
    logs: &[ResponseLog],
    catalog: &EntityCatalog,
    min_student_logs: usize,
    min_school_logs: usize,
) -> Result<(EntityCatalog, Vec<ResponseLog>)> {
    validate_logs(logs, catalog)?;
    let mut keep_student = vec![true; catalog.num_students];
    let mut current: Vec<ResponseLog> = logs.to_vec();

    loop {
        let mut per_student = vec![0usize; catalog.num_students];
        for log in &current {
            per_student[log.student] += 1;
        }
        let mut changed = false;
        for (s, keep) in keep_student.iter_mut().enumerate() {
            if *keep && per_student[s] < min_student_logs {
                *keep = false;
                changed = true;
            }
        }
        current.retain(|log| keep_student[log.student]);

        let mut per_school = vec![0usize; catalog.num_schools];
        for log in &current {
            per_school[catalog.school_of(log.student)] += 1;
        }
        for (s, keep) in keep_student.iter_mut().enumerate() {
            if *keep && per_school[catalog.school_of(s)] < min_school_logs {
                *keep = false;
                changed = true;
            }
        }
        current.retain(|log| keep_student[log.student]);

        if !changed {
            break;
        }
    }

    // a student with zero logs survives only when min_student_logs == 0; a
    // school needs at least one surviving student to stay in the catalog
    let mut school_alive = vec![false; catalog.num_schools];
    for (s, &keep) in keep_student.iter().enumerate() {
        if keep {
            school_alive[catalog.school_of(s)] = true;
        }
    }
    if current.is_empty() {
        return Err(Error::FilteredEmpty);
    }

    let mut school_map = vec![usize::MAX; catalog.num_schools];
    let mut school_ids = Vec::new();
    for (t, alive) in school_alive.iter().enumerate() {
        if *alive {
            school_map[t] = school_ids.len();
            school_ids.push(catalog.school_ids[t].clone());
        }
    }
    let mut student_map = vec![usize::MAX; catalog.num_students];
    let mut student_ids = Vec::new();
    let mut student_to_school = Vec::new();
    for (s, keep) in keep_student.iter().enumerate() {
        if *keep {
            student_map[s] = student_ids.len();
            student_ids.push(catalog.student_ids[s].clone());
            student_to_school.push(school_map[catalog.school_of(s)]);
        }
    }

    let filtered = EntityCatalog {
        num_students: student_ids.len(),
        num_exercises: catalog.num_exercises,
        num_concepts: catalog.num_concepts,
        num_schools: school_ids.len(),
        student_to_school,
        student_ids,
        exercise_ids: catalog.exercise_ids.clone(),
        concept_ids: catalog.concept_ids.clone(),
        school_ids,
    };
    filtered.validate()?;
    let logs = current
        .into_iter()
        .map(|log| ResponseLog::new(student_map[log.student], log.exercise, log.correct))
        .collect();
    Ok((filtered, logs))
}
