//! Neural cognitive diagnosis: a monotone-by-design interaction network on
//! top of concept-level mastery minus difficulty.

use super::{bce_grad, sigmoid, ModelParams};
use crate::data::QMatrix;

/// Intermediate activations kept for the backward pass.
#[derive(Debug, Clone)]
pub struct NcdCache {
    pub student: usize,
    pub exercise: usize,
    pub f_s: Vec<f64>,
    pub f_diff: Vec<f64>,
    pub f_disc: f64,
    pub y: Vec<f64>,
    pub a1: Vec<f64>,
    pub a2: Vec<f64>,
    pub prediction: f64,
}

/// # Panics
/// If `params` is not an NCD model.
pub fn forward(
    params: &ModelParams,
    qmatrix: &QMatrix,
    student: usize,
    exercise: usize,
) -> NcdCache {
    let diag = params.diagnostic.as_ref().expect("NCD parameters");
    let d = params.dim();
    let h_s = params.student.row(student);
    let h_e = params.exercise.row(exercise);
    let q = qmatrix.row(exercise);

    let f_s: Vec<f64> = h_s.iter().map(|&x| sigmoid(x)).collect();
    let f_diff: Vec<f64> = h_e.iter().map(|&x| sigmoid(x)).collect();
    let disc_pre: f64 = h_e
        .iter()
        .zip(diag.w_disc.as_slice())
        .map(|(a, b)| a * b)
        .sum();
    let f_disc = sigmoid(disc_pre);
    let y: Vec<f64> = (0..d)
        .map(|k| q[k] * (f_s[k] - f_diff[k]) * f_disc)
        .collect();

    let a1 = dense_sigmoid(&y, diag.w_fc1.as_slice(), 4 * d);
    let a2 = dense_sigmoid(&a1, diag.w_fc2.as_slice(), 2 * d);
    let prediction = dense_sigmoid(&a2, diag.w_fc3.as_slice(), 1)[0];

    NcdCache {
        student,
        exercise,
        f_s,
        f_diff,
        f_disc,
        y,
        a1,
        a2,
        prediction,
    }
}

/// `σ(x · W)` for row vector `x` and row-major `W` with `out` columns.
fn dense_sigmoid(x: &[f64], w: &[f64], out: usize) -> Vec<f64> {
    let mut z = vec![0.0; out];
    for (i, &xi) in x.iter().enumerate() {
        if xi == 0.0 {
            continue;
        }
        let row = &w[i * out..(i + 1) * out];
        for (zc, &wc) in z.iter_mut().zip(row) {
            *zc += xi * wc;
        }
    }
    z.iter().map(|&v| sigmoid(v)).collect()
}

/// Back-propagates the BCE loss of `cache` and adds `scale · gradient` into `grads`.
pub fn backward(
    params: &ModelParams,
    qmatrix: &QMatrix,
    cache: &NcdCache,
    label: f64,
    scale: f64,
    grads: &mut ModelParams,
) {
    let diag = params.diagnostic.as_ref().expect("NCD parameters");
    let d = params.dim();
    let (h1, h2) = (4 * d, 2 * d);
    let p = cache.prediction;
    let g_out = scale * bce_grad(p, label) * p * (1.0 - p);
    if g_out == 0.0 {
        return;
    }
    let gd = grads.diagnostic.as_mut().expect("NCD gradients");

    // output layer
    let w3 = diag.w_fc3.as_slice();
    let gw3 = gd.w_fc3.as_mut_slice();
    let mut dz2 = vec![0.0; h2];
    for h in 0..h2 {
        gw3[h] += cache.a2[h] * g_out;
        let a = cache.a2[h];
        dz2[h] = w3[h] * g_out * a * (1.0 - a);
    }

    // second hidden layer
    let w2 = diag.w_fc2.as_slice();
    let gw2 = gd.w_fc2.as_mut_slice();
    let mut dz1 = vec![0.0; h1];
    for c in 0..h1 {
        let a = cache.a1[c];
        let row = &w2[c * h2..(c + 1) * h2];
        let grow = &mut gw2[c * h2..(c + 1) * h2];
        let mut da = 0.0;
        for h in 0..h2 {
            grow[h] += a * dz2[h];
            da += row[h] * dz2[h];
        }
        dz1[c] = da * a * (1.0 - a);
    }

    // first hidden layer
    let w1 = diag.w_fc1.as_slice();
    let gw1 = gd.w_fc1.as_mut_slice();
    let mut dy = vec![0.0; d];
    for k in 0..d {
        let row = &w1[k * h1..(k + 1) * h1];
        let grow = &mut gw1[k * h1..(k + 1) * h1];
        let mut acc = 0.0;
        for c in 0..h1 {
            grow[c] += cache.y[k] * dz1[c];
            acc += row[c] * dz1[c];
        }
        dy[k] = acc;
    }

    // interaction layer
    let q = qmatrix.row(cache.exercise);
    let mut df_disc = 0.0;
    let gs = grads.student.row_mut(cache.student);
    let mut de = vec![0.0; d];
    for k in 0..d {
        if q[k] == 0.0 {
            continue;
        }
        let (fs, fd) = (cache.f_s[k], cache.f_diff[k]);
        let df_s = dy[k] * q[k] * cache.f_disc;
        gs[k] += df_s * fs * (1.0 - fs);
        de[k] -= df_s * fd * (1.0 - fd);
        df_disc += dy[k] * q[k] * (fs - fd);
    }
    let dz_disc = df_disc * cache.f_disc * (1.0 - cache.f_disc);
    let h_e = params.exercise.row(cache.exercise);
    let w_disc = diag.w_disc.as_slice();
    let gwd = gd.w_disc.as_mut_slice();
    for k in 0..d {
        gwd[k] += h_e[k] * dz_disc;
        de[k] += w_disc[k] * dz_disc;
    }
    for (g, v) in grads.exercise.row_mut(cache.exercise).iter_mut().zip(de) {
        *g += v;
    }
}
