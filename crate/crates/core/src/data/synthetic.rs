//! Synthetic schools with controllable ability gaps.
//!
//! Each student gets a latent ability around their school's offset and a
//! per-concept mastery around that ability. Exercises test one to three
//! concepts and carry a latent difficulty. A response is correct with
//! probability `σ(scale · (mean mastery on the tested concepts − difficulty))`.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{EntityCatalog, QMatrix, ResponseLog};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub schools: usize,
    pub students_per_school: usize,
    pub exercises: usize,
    pub concepts: usize,
    pub school_ability_offsets: Vec<f64>,
    pub logs_per_student: usize,
    /// Std of student ability around the school offset.
    #[serde(default = "default_ability_spread")]
    pub ability_spread: f64,
    /// Std of per-concept mastery around the student's ability.
    #[serde(default = "default_concept_spread")]
    pub concept_spread: f64,
    /// Std of exercise difficulty around zero.
    #[serde(default = "default_difficulty_spread")]
    pub difficulty_spread: f64,
    /// Slope of the logistic response model.
    #[serde(default = "default_response_scale")]
    pub response_scale: f64,
}

fn default_ability_spread() -> f64 {
    3.0
}
fn default_concept_spread() -> f64 {
    0.5
}
fn default_difficulty_spread() -> f64 {
    1.0
}
fn default_response_scale() -> f64 {
    1.0
}

impl SyntheticSpec {
    /// A spec using the default spreads and response slope.
    pub fn new(
        schools: usize,
        students_per_school: usize,
        exercises: usize,
        concepts: usize,
        school_ability_offsets: Vec<f64>,
        logs_per_student: usize,
    ) -> Self {
        Self {
            schools,
            students_per_school,
            exercises,
            concepts,
            school_ability_offsets,
            logs_per_student,
            ability_spread: default_ability_spread(),
            concept_spread: default_concept_spread(),
            difficulty_spread: default_difficulty_spread(),
            response_scale: default_response_scale(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("schools", self.schools),
            ("students_per_school", self.students_per_school),
            ("exercises", self.exercises),
            ("concepts", self.concepts),
            ("logs_per_student", self.logs_per_student),
        ];
        for (name, n) in counts {
            if n == 0 {
                return Err(Error::invalid(format!(
                    "synthetic spec: `{name}` must be at least 1"
                )));
            }
        }
        if self.school_ability_offsets.len() != self.schools {
            return Err(Error::invalid(format!(
                "synthetic spec: {} ability offsets for {} schools",
                self.school_ability_offsets.len(),
                self.schools
            )));
        }
        if self.school_ability_offsets.iter().any(|o| !o.is_finite()) {
            return Err(Error::invalid(
                "synthetic spec: ability offsets must be finite",
            ));
        }
        let spreads = [
            self.ability_spread,
            self.concept_spread,
            self.difficulty_spread,
            self.response_scale,
        ];
        if spreads.iter().any(|s| !s.is_finite() || *s < 0.0) {
            return Err(Error::invalid(
                "synthetic spec: spreads and response scale must be finite and non-negative",
            ));
        }
        Ok(())
    }
}

/// Latent quantities the responses were drawn from.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    /// Row-major `num_students × num_concepts` mastery in logit units.
    pub mastery: Vec<f64>,
    pub difficulty: Vec<f64>,
    pub num_concepts: usize,
}

impl GroundTruth {
    pub fn mastery(&self, student: usize, concept: usize) -> f64 {
        self.mastery[student * self.num_concepts + concept]
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticDataset {
    pub catalog: EntityCatalog,
    pub qmatrix: QMatrix,
    pub logs: Vec<ResponseLog>,
    pub truth: GroundTruth,
}

pub fn generate_synthetic(spec: &SyntheticSpec, rng_seed: u64) -> Result<SyntheticDataset> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let k = spec.concepts;
    let normal = |std: f64| Normal::new(0.0, std).expect("validated spread");

    let difficulty_dist = normal(spec.difficulty_spread);
    let mut lists = Vec::with_capacity(spec.exercises);
    let mut difficulty = Vec::with_capacity(spec.exercises);
    for _ in 0..spec.exercises {
        let n = rng.random_range(1..=3usize).min(k);
        lists.push(index::sample(&mut rng, k, n).into_vec());
        difficulty.push(difficulty_dist.sample(&mut rng));
    }
    let qmatrix = QMatrix::from_concept_lists(k, lists)?;

    let ability_dist = normal(spec.ability_spread);
    let concept_dist = normal(spec.concept_spread);
    let num_students = spec.schools * spec.students_per_school;
    let mut mastery = Vec::with_capacity(num_students * k);
    let mut student_to_school = Vec::with_capacity(num_students);
    for (school, offset) in spec.school_ability_offsets.iter().enumerate() {
        for _ in 0..spec.students_per_school {
            let ability = offset + ability_dist.sample(&mut rng);
            mastery.extend((0..k).map(|_| ability + concept_dist.sample(&mut rng)));
            student_to_school.push(school);
        }
    }

    let mut logs = Vec::with_capacity(num_students * spec.logs_per_student);
    for student in 0..num_students {
        let exercises: Vec<usize> = if spec.logs_per_student <= spec.exercises {
            index::sample(&mut rng, spec.exercises, spec.logs_per_student).into_vec()
        } else {
            (0..spec.logs_per_student)
                .map(|_| rng.random_range(0..spec.exercises))
                .collect()
        };
        for exercise in exercises {
            let concepts = qmatrix.concepts(exercise);
            let mean_mastery = concepts
                .iter()
                .map(|&c| mastery[student * k + c])
                .sum::<f64>()
                / concepts.len() as f64;
            let p = sigmoid(spec.response_scale * (mean_mastery - difficulty[exercise]));
            let correct = rng.random::<f64>() < p;
            logs.push(ResponseLog::new(student, exercise, correct));
        }
    }

    let catalog =
        EntityCatalog::with_numeric_ids(student_to_school, spec.exercises, k, spec.schools)?;
    Ok(SyntheticDataset {
        catalog,
        qmatrix,
        logs,
        truth: GroundTruth {
            mastery,
            difficulty,
            num_concepts: k,
        },
    })
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Writes `logs.csv`, `qmatrix.csv`, and `latents.csv` into `dir` and
/// returns their paths in that order.
pub fn write_dataset(dir: &Path, data: &SyntheticDataset) -> Result<[PathBuf; 3]> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let cat = &data.catalog;

    let logs_path = dir.join("logs.csv");
    let mut out = String::from("school_id,student_id,exercise_id,correct\n");
    for log in &data.logs {
        out.push_str(&format!(
            "{},{},{},{}\n",
            cat.school_ids[cat.school_of(log.student)],
            cat.student_ids[log.student],
            cat.exercise_ids[log.exercise],
            u8::from(log.correct)
        ));
    }
    write_file(&logs_path, &out)?;

    let q_path = dir.join("qmatrix.csv");
    let mut out = String::from("exercise_id,concept_ids\n");
    for j in 0..data.qmatrix.num_exercises() {
        let ids: Vec<&str> = data
            .qmatrix
            .concepts(j)
            .iter()
            .map(|&c| cat.concept_ids[c].as_str())
            .collect();
        out.push_str(&format!("{},{}\n", cat.exercise_ids[j], ids.join(";")));
    }
    write_file(&q_path, &out)?;

    let latents_path = dir.join("latents.csv");
    let mut out = String::from("student_id,concept_id,mastery\n");
    for s in 0..cat.num_students {
        for c in 0..cat.num_concepts {
            out.push_str(&format!(
                "{},{},{}\n",
                cat.student_ids[s],
                cat.concept_ids[c],
                data.truth.mastery(s, c)
            ));
        }
    }
    write_file(&latents_path, &out)?;

    Ok([logs_path, q_path, latents_path])
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(contents.as_bytes())
        .map_err(|e| Error::io(path, e))
}
