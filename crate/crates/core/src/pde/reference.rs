//! Cole–Hopf solution of `u_t + u u_x = ν u_xx` on `[-1, 1]` with
//! `u(x, 0) = −sin(πx)`.

use std::f64::consts::PI;

use crate::quadrature::GaussRule;

/// Gauss–Hermite nodes used by [`burgers_reference`].
pub const REFERENCE_NODES: usize = 128;

/// Exact solution at time `t` for viscosity `nu`.
pub fn burgers_reference(x: &[f64], t: f64, nu: f64) -> Vec<f64> {
    burgers_reference_with(x, t, nu, &GaussRule::hermite(REFERENCE_NODES))
}

/// As [`burgers_reference`] with an explicit Gauss–Hermite rule.
///
/// With `η = 2√(νt) s` the heat kernel becomes the Hermite weight `exp(−s²)`:
/// `u = −Σ wᵢ sin(π(x−ηᵢ)) Gᵢ / Σ wᵢ Gᵢ`, `Gᵢ = exp(−cos(π(x−ηᵢ))/(2πν))`.
/// The exponents are shifted by their maximum before exponentiation.
pub fn burgers_reference_with(x: &[f64], t: f64, nu: f64, rule: &GaussRule) -> Vec<f64> {
    if t <= 0.0 {
        return x.iter().map(|&xi| -(PI * xi).sin()).collect();
    }
    let scale = 2.0 * (nu * t).sqrt();
    x.iter()
        .map(|&xi| {
            let exps: Vec<f64> = rule
                .nodes
                .iter()
                .map(|&s| -(PI * (xi - scale * s)).cos() / (2.0 * PI * nu))
                .collect();
            let shift = exps.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let (mut num, mut den) = (0.0, 0.0);
            for ((&s, &w), &e) in rule.nodes.iter().zip(&rule.weights).zip(&exps) {
                let g = w * (e - shift).exp();
                num += (PI * (xi - scale * s)).sin() * g;
                den += g;
            }
            -num / den
        })
        .collect()
}
