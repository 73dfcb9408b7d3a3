//! Squared-exponential and Matern baselines.

use crate::error::{check_dim, Result};

use super::params::Variances;

/// Squared distance after dividing each coordinate difference by its
/// length-scale.
#[inline]
pub(crate) fn scaled_sq_dist(x: &[f64], xp: &[f64], v: &Variances) -> f64 {
    x.iter()
        .zip(xp)
        .enumerate()
        .map(|(a, (p, q))| {
            let u = (p - q) / v.length_scale(a);
            u * u
        })
        .sum()
}

fn check(x: &[f64], xp: &[f64], v: &Variances) -> Result<()> {
    check_dim(x.len(), xp.len())?;
    if v.length_scales.len() > 1 {
        check_dim(v.length_scales.len(), x.len())?;
    }
    Ok(())
}

/// `s² exp(-r²/(2ℓ²))`.
pub fn se_kernel(x: &[f64], xp: &[f64], v: &Variances) -> Result<f64> {
    check(x, xp, v)?;
    Ok(v.signal_var * (-0.5 * scaled_sq_dist(x, xp, v)).exp())
}

/// `s² (1 + √5 r/ℓ + 5r²/(3ℓ²)) exp(-√5 r/ℓ)`.
pub fn matern52_kernel(x: &[f64], xp: &[f64], v: &Variances) -> Result<f64> {
    check(x, xp, v)?;
    let rho = (5.0 * scaled_sq_dist(x, xp, v)).sqrt();
    Ok(v.signal_var * (1.0 + rho + rho * rho / 3.0) * (-rho).exp())
}

/// `s² (1 + √3 r/ℓ) exp(-√3 r/ℓ)`.
pub fn matern32_kernel(x: &[f64], xp: &[f64], v: &Variances) -> Result<f64> {
    check(x, xp, v)?;
    let rho = (3.0 * scaled_sq_dist(x, xp, v)).sqrt();
    Ok(v.signal_var * (1.0 + rho) * (-rho).exp())
}
