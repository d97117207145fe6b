use rand::distr::Open01;
use rand::Rng;

use crate::model::Matrix;
use crate::{Error, Result};

/// One draw from Laplace(0, `scale`) by inverting the CDF.
pub fn sample_laplace<R: Rng + ?Sized>(scale: f64, rng: &mut R) -> f64 {
    let u: f64 = rng.sample::<f64, _>(Open01) - 0.5;
    -scale * u.signum() * (1.0 - 2.0 * u.abs()).ln()
}

/// Adds i.i.d. Laplace(0, `delta`) noise to every entry. `delta == 0` returns
/// an exact copy without touching `rng`.
pub fn apply_dp_noise<R: Rng + ?Sized>(block: &Matrix, delta: f64, rng: &mut R) -> Result<Matrix> {
    if !(delta >= 0.0 && delta.is_finite()) {
        return Err(Error::invalid(format!(
            "dp scale must be finite and >= 0, got {delta}"
        )));
    }
    let mut out = block.clone();
    if delta == 0.0 {
        return Ok(out);
    }
    for x in out.as_mut_slice() {
        *x += sample_laplace(delta, rng);
    }
    Ok(out)
}
