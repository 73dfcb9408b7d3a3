//! Layer recursions of the network-induced kernels.

use std::f64::consts::PI;

use crate::error::{check_dim, Error, Result};

use super::params::{KernelFamily, KernelSpec, Variances};

/// Slack allowed on cosine/sine ratios before they are treated as a domain
/// error; anything within it is clamped back into `[-1, 1]`.
pub const RATIO_TOLERANCE: f64 = 1e-12;

pub(crate) fn clamp_unit(ratio: f64) -> Result<f64> {
    if !ratio.is_finite() || ratio.abs() > 1.0 + RATIO_TOLERANCE {
        return Err(Error::Domain(format!("correlation ratio {ratio} outside [-1, 1]")));
    }
    Ok(ratio.clamp(-1.0, 1.0))
}

/// `k⁰(x, x′) = Σⱼ σ²_{w,0,j} xⱼ x′ⱼ + σ²_{b,0}`.
pub fn base_kernel(x: &[f64], xp: &[f64], v: &Variances) -> Result<f64> {
    check_dim(v.input_weight.len(), x.len())?;
    check_dim(v.input_weight.len(), xp.len())?;
    Ok(base_kernel_unchecked(x, xp, v))
}

#[inline]
pub(crate) fn base_kernel_unchecked(x: &[f64], xp: &[f64], v: &Variances) -> f64 {
    x.iter()
        .zip(xp)
        .zip(&v.input_weight)
        .map(|((a, b), w)| w * a * b)
        .sum::<f64>()
        + v.input_bias
}

/// One ReLU layer transition applied to the covariance triple
/// `(k(x,x), k(x′,x′), k(x,x′))` of the previous layer.
pub fn relu_step(k_xx: f64, k_pp: f64, k_xp: f64, weight_var: f64, bias_var: f64) -> Result<f64> {
    if !(k_xx > 0.0 && k_pp > 0.0) {
        return Err(Error::Domain(format!(
            "ReLU recursion needs positive variances, got {k_xx} and {k_pp}"
        )));
    }
    let norm = (k_xx * k_pp).sqrt();
    let theta = clamp_unit(k_xp / norm)?.acos();
    Ok(weight_var / (2.0 * PI) * norm * (theta.sin() + (PI - theta) * theta.cos()) + bias_var)
}

/// One erf layer transition applied to the previous covariance triple.
pub fn erf_step(k_xx: f64, k_pp: f64, k_xp: f64, weight_var: f64, bias_var: f64) -> Result<f64> {
    let (a, b) = (1.0 + 2.0 * k_xx, 1.0 + 2.0 * k_pp);
    if !(a > 0.0 && b > 0.0) {
        return Err(Error::Domain(format!(
            "erf recursion needs 1 + 2k > 0, got {a} and {b}"
        )));
    }
    let ratio = clamp_unit(2.0 * k_xp / (a * b).sqrt())?;
    Ok(2.0 * weight_var / PI * ratio.asin() + bias_var)
}

/// Erf transition on the diagonal, `c ↦ (2σ²_w/π) arcsin(2c/(1+2c)) + σ²_b`.
pub(crate) fn erf_step_diagonal(c: f64, weight_var: f64, bias_var: f64) -> Result<f64> {
    erf_step(c, c, c, weight_var, bias_var)
}

/// Depth-`L` NNGP covariance: the base kernel followed by `L` layer
/// transitions of the chosen nonlinearity, with per-layer variances.
pub fn nngp_kernel(x: &[f64], xp: &[f64], spec: &KernelSpec, v: &Variances) -> Result<f64> {
    let step = match spec.family {
        KernelFamily::NngpErf => erf_step,
        KernelFamily::NngpRelu => relu_step,
        other => {
            return Err(Error::Config(format!(
                "nngp_kernel called with {} kernel",
                other.name()
            )))
        }
    };
    check_dim(spec.layers(), v.layer_weight.len())?;
    let mut k_xx = base_kernel(x, x, v)?;
    let mut k_pp = base_kernel(xp, xp, v)?;
    let mut k_xp = base_kernel(x, xp, v)?;
    for (&w, &b) in v.layer_weight.iter().zip(&v.layer_bias) {
        let next_xp = step(k_xx, k_pp, k_xp, w, b)?;
        k_xx = step(k_xx, k_xx, k_xx, w, b)?;
        k_pp = step(k_pp, k_pp, k_pp, w, b)?;
        k_xp = next_xp;
    }
    Ok(k_xp)
}

/// Covariance of a single hidden erf layer (no output layer):
/// `(2/π) arcsin(2k⁰(x,x′) / √((1+2k⁰(x,x))(1+2k⁰(x′,x′))))`.
pub fn arcsin_kernel(x: &[f64], xp: &[f64], v: &Variances) -> Result<f64> {
    erf_step(
        base_kernel(x, x, v)?,
        base_kernel(xp, xp, v)?,
        base_kernel(x, xp, v)?,
        1.0,
        0.0,
    )
}

/// Nonlinearities with an analytic layer transition.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Nonlinearity {
    Relu,
    Erf,
}

/// The original two-parameter NNGP: one weight variance and one bias variance
/// shared by all layers, and `Λ = (σ²_w / d) I`.
pub fn fixed_variance_nngp(
    x: &[f64],
    xp: &[f64],
    nonlinearity: Nonlinearity,
    depth: usize,
    weight_var: f64,
    bias_var: f64,
) -> Result<f64> {
    check_dim(x.len(), xp.len())?;
    let scale = weight_var / x.len() as f64;
    let dot = |a: &[f64], b: &[f64]| scale * a.iter().zip(b).map(|(p, q)| p * q).sum::<f64>() + bias_var;
    let (mut k_xx, mut k_pp, mut k_xp) = (dot(x, x), dot(xp, xp), dot(x, xp));
    for _ in 0..depth {
        (k_xx, k_pp, k_xp) = match nonlinearity {
            Nonlinearity::Relu => (
                // θ = 0 on the diagonal collapses the transition to σ²_w k / 2 + σ²_b.
                weight_var * k_xx / 2.0 + bias_var,
                weight_var * k_pp / 2.0 + bias_var,
                relu_step(k_xx, k_pp, k_xp, weight_var, bias_var)?,
            ),
            Nonlinearity::Erf => (
                erf_step_diagonal(k_xx, weight_var, bias_var)?,
                erf_step_diagonal(k_pp, weight_var, bias_var)?,
                erf_step(k_xx, k_pp, k_xp, weight_var, bias_var)?,
            ),
        };
    }
    Ok(k_xp)
}
