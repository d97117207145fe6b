/// Predictions are clamped to `[CLIP_EPS, 1 − CLIP_EPS]` before the log.
pub const CLIP_EPS: f64 = 1e-7;

/// Binary cross-entropy of a single prediction.
pub fn bce_loss(prediction: f64, label: f64) -> f64 {
    let p = prediction.clamp(CLIP_EPS, 1.0 - CLIP_EPS);
    -(label * p.ln() + (1.0 - label) * (1.0 - p).ln())
}

/// `∂ bce_loss / ∂ prediction`; zero where the clamp is active.
pub fn bce_grad(prediction: f64, label: f64) -> f64 {
    if !(CLIP_EPS..=1.0 - CLIP_EPS).contains(&prediction) {
        return 0.0;
    }
    -label / prediction + (1.0 - label) / (1.0 - prediction)
}
