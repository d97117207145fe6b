//! Soft DINA: slip/guess model with a differentiable conjunction of the
//! required concepts.

use super::{bce_grad, sigmoid, ModelParams};
use crate::data::QMatrix;

/// Largest value guess and slip can reach.
pub const GUESS_SLIP_MAX: f64 = 0.5;

#[derive(Debug, Clone)]
pub struct DinaCache {
    pub student: usize,
    pub exercise: usize,
    pub guess: f64,
    pub slip: f64,
    /// `(concept, σ(θ^S_ik))` for every concept the exercise requires.
    pub mastery: Vec<(usize, f64)>,
    pub eta: f64,
    pub prediction: f64,
}

pub fn forward(
    params: &ModelParams,
    qmatrix: &QMatrix,
    student: usize,
    exercise: usize,
) -> DinaCache {
    let theta = params.student.row(student);
    let e = params.exercise.row(exercise);
    let guess = GUESS_SLIP_MAX * sigmoid(e[0]);
    let slip = GUESS_SLIP_MAX * sigmoid(e[1]);
    let mastery: Vec<(usize, f64)> = qmatrix
        .concepts(exercise)
        .iter()
        .map(|&k| (k, sigmoid(theta[k])))
        .collect();
    let eta: f64 = mastery.iter().map(|(_, m)| m).product();
    let prediction = guess + (1.0 - slip - guess) * eta;
    DinaCache {
        student,
        exercise,
        guess,
        slip,
        mastery,
        eta,
        prediction,
    }
}

pub fn backward(cache: &DinaCache, label: f64, scale: f64, grads: &mut ModelParams) {
    let g = scale * bce_grad(cache.prediction, label);
    if g == 0.0 {
        return;
    }
    let (guess, slip, eta) = (cache.guess, cache.slip, cache.eta);
    let d_eta = g * (1.0 - slip - guess);
    let d_guess = g * (1.0 - eta);
    let d_slip = -g * eta;
    // d(0.5 σ(x))/dx = 0.5 σ (1 − σ) = v (1 − 2v) for v = 0.5 σ
    let ge = grads.exercise.row_mut(cache.exercise);
    ge[0] += d_guess * guess * (1.0 - 2.0 * guess);
    ge[1] += d_slip * slip * (1.0 - 2.0 * slip);
    let gs = grads.student.row_mut(cache.student);
    for &(k, m) in &cache.mastery {
        gs[k] += d_eta * eta * (1.0 - m);
    }
}
