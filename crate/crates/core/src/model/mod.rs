//! Cognitive-diagnosis models with hand-written gradients.
//!
//! Parameters split into three separately addressable blocks: the student
//! embedding (private to a school), the exercise embedding (the block the
//! server merges), and the diagnostic network (NCD only). Gradients reuse the
//! [`ModelParams`] layout.

mod adam;
mod checkpoint;
pub mod dina;
mod loss;
mod matrix;
pub mod ncd;
mod train;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::QMatrix;
use crate::{Error, Result};

pub use adam::AdamState;
pub use checkpoint::Checkpoint;
pub use loss::{bce_grad, bce_loss, CLIP_EPS};
pub use matrix::Matrix;
pub use train::{train_local, LocalTrainOutcome};

/// Half-width of the uniform range used for every initial parameter.
pub const INIT_RANGE: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Ncd,
    Dina,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Ncd => "ncd",
            ModelKind::Dina => "dina",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "ncd" => Some(ModelKind::Ncd),
            "dina" => Some(ModelKind::Dina),
            _ => None,
        }
    }

    /// Columns of the exercise block for embedding size `dim`.
    pub fn exercise_cols(self, dim: usize) -> usize {
        match self {
            ModelKind::Ncd => dim,
            ModelKind::Dina => 2,
        }
    }
}

/// NCD's interaction network. No bias terms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticParams {
    pub w_disc: Matrix,
    pub w_fc1: Matrix,
    pub w_fc2: Matrix,
    pub w_fc3: Matrix,
}

impl DiagnosticParams {
    pub fn zeros(dim: usize) -> Self {
        Self {
            w_disc: Matrix::zeros(dim, 1),
            w_fc1: Matrix::zeros(dim, 4 * dim),
            w_fc2: Matrix::zeros(4 * dim, 2 * dim),
            w_fc3: Matrix::zeros(2 * dim, 1),
        }
    }

    pub fn blocks(&self) -> [(&'static str, &Matrix); 4] {
        [
            ("diagnostic.w_disc", &self.w_disc),
            ("diagnostic.w_fc1", &self.w_fc1),
            ("diagnostic.w_fc2", &self.w_fc2),
            ("diagnostic.w_fc3", &self.w_fc3),
        ]
    }

    pub fn blocks_mut(&mut self) -> [&mut Matrix; 4] {
        [
            &mut self.w_disc,
            &mut self.w_fc1,
            &mut self.w_fc2,
            &mut self.w_fc3,
        ]
    }

    /// Sets negative fully-connected weights to zero (`w_disc` is untouched).
    pub fn clip_monotone(&mut self) {
        for w in [&mut self.w_fc1, &mut self.w_fc2, &mut self.w_fc3] {
            for x in w.as_mut_slice() {
                if *x < 0.0 {
                    *x = 0.0;
                }
            }
        }
    }
}

/// All parameters of one model instance.
///
/// For NCD the exercise block is `M × D`; for soft-DINA it is `M × 2` with
/// column 0 the guess pre-activation and column 1 the slip pre-activation.
/// The embedding size always equals the concept count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub kind: ModelKind,
    pub student: Matrix,
    pub exercise: Matrix,
    pub diagnostic: Option<DiagnosticParams>,
}

impl ModelParams {
    pub fn zeros(kind: ModelKind, n_students: usize, n_exercises: usize, dim: usize) -> Self {
        Self {
            kind,
            student: Matrix::zeros(n_students, dim),
            exercise: Matrix::zeros(n_exercises, kind.exercise_cols(dim)),
            diagnostic: match kind {
                ModelKind::Ncd => Some(DiagnosticParams::zeros(dim)),
                ModelKind::Dina => None,
            },
        }
    }

    /// Every entry drawn i.i.d. from `U[-INIT_RANGE, INIT_RANGE]`, block by
    /// block in the order student, exercise, diagnostic.
    pub fn init<R: Rng + ?Sized>(
        kind: ModelKind,
        n_students: usize,
        n_exercises: usize,
        dim: usize,
        rng: &mut R,
    ) -> Self {
        let mut params = Self::zeros(kind, n_students, n_exercises, dim);
        for block in params.blocks_mut() {
            for x in block.as_mut_slice() {
                *x = rng.random_range(-INIT_RANGE..=INIT_RANGE);
            }
        }
        params
    }

    pub fn dim(&self) -> usize {
        self.student.cols()
    }

    pub fn n_students(&self) -> usize {
        self.student.rows()
    }

    pub fn n_exercises(&self) -> usize {
        self.exercise.rows()
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.kind, self.n_students(), self.n_exercises(), self.dim())
    }

    pub fn blocks(&self) -> Vec<(&'static str, &Matrix)> {
        let mut out = vec![("student", &self.student), ("exercise", &self.exercise)];
        if let Some(d) = &self.diagnostic {
            out.extend(d.blocks());
        }
        out
    }

    pub fn blocks_mut(&mut self) -> Vec<&mut Matrix> {
        let mut out = vec![&mut self.student, &mut self.exercise];
        if let Some(d) = &mut self.diagnostic {
            out.extend(d.blocks_mut());
        }
        out
    }

    pub fn fill_zero(&mut self) {
        for b in self.blocks_mut() {
            b.fill(0.0);
        }
    }

    /// Checks that the blocks fit a Q-matrix with `qmatrix.num_concepts()` concepts.
    pub fn check_compatible(&self, qmatrix: &QMatrix) -> Result<()> {
        let dim = self.dim();
        if dim != qmatrix.num_concepts() {
            return Err(Error::ShapeMismatch(format!(
                "embedding size {dim} differs from concept count {}",
                qmatrix.num_concepts()
            )));
        }
        if self.n_exercises() != qmatrix.num_exercises()
            || self.exercise.cols() != self.kind.exercise_cols(dim)
        {
            return Err(Error::ShapeMismatch(format!(
                "exercise block is {}x{}, Q-matrix has {} exercises",
                self.exercise.rows(),
                self.exercise.cols(),
                qmatrix.num_exercises()
            )));
        }
        Ok(())
    }

    /// Predicted probability that `student` (local index) answers `exercise` correctly.
    pub fn predict(&self, qmatrix: &QMatrix, student: usize, exercise: usize) -> f64 {
        match self.kind {
            ModelKind::Ncd => ncd::forward(self, qmatrix, student, exercise).prediction,
            ModelKind::Dina => dina::forward(self, qmatrix, student, exercise).prediction,
        }
    }

    /// Runs forward and backward for one example, adding `scale · ∂loss/∂θ`
    /// into `grads`. Returns `(prediction, loss)`.
    pub fn accumulate_gradients(
        &self,
        qmatrix: &QMatrix,
        student: usize,
        exercise: usize,
        label: f64,
        scale: f64,
        grads: &mut ModelParams,
    ) -> (f64, f64) {
        match self.kind {
            ModelKind::Ncd => {
                let cache = ncd::forward(self, qmatrix, student, exercise);
                ncd::backward(self, qmatrix, &cache, label, scale, grads);
                (cache.prediction, bce_loss(cache.prediction, label))
            }
            ModelKind::Dina => {
                let cache = dina::forward(self, qmatrix, student, exercise);
                dina::backward(&cache, label, scale, grads);
                (cache.prediction, bce_loss(cache.prediction, label))
            }
        }
    }

    /// Gradient of the single-example loss as a fresh parameter-shaped value.
    pub fn gradients(
        &self,
        qmatrix: &QMatrix,
        student: usize,
        exercise: usize,
        label: f64,
    ) -> Self {
        let mut grads = self.zeros_like();
        self.accumulate_gradients(qmatrix, student, exercise, label, 1.0, &mut grads);
        grads
    }

    /// Estimated mastery of each concept, `σ(θ^S)` row of the student.
    pub fn proficiency(&self, student: usize) -> Vec<f64> {
        self.student
            .row(student)
            .iter()
            .map(|&x| sigmoid(x))
            .collect()
    }

    pub fn to_checkpoint(&self, role: &str) -> Checkpoint {
        Checkpoint {
            role: role.to_string(),
            kind: self.kind,
            n_students: self.n_students(),
            n_exercises: self.n_exercises(),
            dim: self.dim(),
            n_concepts: self.dim(),
            blocks: self
                .blocks()
                .into_iter()
                .map(|(name, m)| (name.to_string(), m.clone()))
                .collect(),
        }
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        let mut params = Self::zeros(ckpt.kind, ckpt.n_students, ckpt.n_exercises, ckpt.dim);
        let names: Vec<&str> = params.blocks().iter().map(|(n, _)| *n).collect();
        if names.len() != ckpt.blocks.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} blocks, found {}",
                names.len(),
                ckpt.blocks.len()
            )));
        }
        for ((name, slot), (ck_name, m)) in names.iter().zip(params.blocks_mut()).zip(&ckpt.blocks)
        {
            if name != ck_name || slot.shape() != m.shape() {
                return Err(Error::Checkpoint(format!(
                    "block `{ck_name}` {:?} does not match expected `{name}` {:?}",
                    m.shape(),
                    slot.shape()
                )));
            }
            *slot = m.clone();
        }
        Ok(params)
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
