//! Covariance functions.
//!
//! Every family is evaluated through [`kernel`] from natural-scale
//! [`Variances`]; [`gram_matrix`] assembles covariance matrices between point
//! sets stored one point per row.

mod nngp;
mod params;
mod stationary;

use nalgebra::DMatrix;

pub use nngp::{
    arcsin_kernel, base_kernel, erf_step, fixed_variance_nngp, nngp_kernel, relu_step,
    Nonlinearity, RATIO_TOLERANCE,
};
pub(crate) use nngp::{base_kernel_unchecked, clamp_unit};
pub use params::{HyperParams, KernelFamily, KernelSpec, Variances, NOISE_VARIANCE_FLOOR};
pub use stationary::{matern32_kernel, matern52_kernel, se_kernel};

use crate::error::{check_dim, Result};
use crate::linalg::rows;

/// Evaluates the covariance between two points for any family.
pub fn kernel(x: &[f64], xp: &[f64], spec: &KernelSpec, v: &Variances) -> Result<f64> {
    check_dim(spec.input_dim, x.len())?;
    check_dim(spec.input_dim, xp.len())?;
    match spec.family {
        KernelFamily::NngpErf | KernelFamily::NngpRelu => nngp_kernel(x, xp, spec, v),
        KernelFamily::ArcSin => arcsin_kernel(x, xp, v),
        KernelFamily::SquaredExponential => se_kernel(x, xp, v),
        KernelFamily::Matern32 => matern32_kernel(x, xp, v),
        KernelFamily::Matern52 => matern52_kernel(x, xp, v),
    }
}

/// Covariance matrix with entry `(i, j) = k(Xᵢ, X′ⱼ)`.
pub fn gram_matrix(
    x: &DMatrix<f64>,
    xp: &DMatrix<f64>,
    spec: &KernelSpec,
    theta: &HyperParams,
) -> Result<DMatrix<f64>> {
    check_dim(spec.input_dim, x.ncols())?;
    check_dim(spec.input_dim, xp.ncols())?;
    let v = theta.variances();
    let (left, right) = (rows(x), rows(xp));
    let mut out = DMatrix::zeros(left.len(), right.len());
    for (i, a) in left.iter().enumerate() {
        for (j, b) in right.iter().enumerate() {
            out[(i, j)] = kernel(a, b, spec, &v)?;
        }
    }
    Ok(out)
}

/// Covariance matrix of a point set with itself, symmetrized.
pub fn gram_symmetric(x: &DMatrix<f64>, spec: &KernelSpec, theta: &HyperParams) -> Result<DMatrix<f64>> {
    check_dim(spec.input_dim, x.ncols())?;
    let v = theta.variances();
    let pts = rows(x);
    let n = pts.len();
    let mut out = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let k = kernel(&pts[i], &pts[j], spec, &v)?;
            out[(i, j)] = k;
            out[(j, i)] = k;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use nalgebra::SymmetricEigen;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn base_variances(weights: &[f64], bias: f64) -> Variances {
        Variances {
            input_weight: weights.to_vec(),
            input_bias: bias,
            ..Variances::default()
        }
    }

    fn stationary(length: f64, signal: f64) -> Variances {
        Variances {
            length_scales: vec![length],
            signal_var: signal,
            ..Variances::default()
        }
    }

    #[test]
    fn base_kernel_examples() {
        let v = base_variances(&[0.7, 2.0], 0.1);
        assert_eq!(base_kernel(&[0.0, 0.0], &[0.0, 0.0], &v).unwrap(), 0.1);
        let v = base_variances(&[1.0, 1.0], 0.0);
        assert_eq!(base_kernel(&[1.0, 2.0], &[3.0, 4.0], &v).unwrap(), 11.0);
        let v = base_variances(&[1.6, 1.6], 0.1);
        assert_abs_diff_eq!(base_kernel(&[1.0, 0.0], &[1.0, 0.0], &v).unwrap(), 1.7, epsilon = 1e-15);
        assert!(base_kernel(&[1.0], &[1.0, 2.0], &v).is_err());
    }

    #[test]
    fn relu_step_examples() {
        let c = 1.3;
        assert_abs_diff_eq!(relu_step(c, c, c, 1.6, 0.1).unwrap(), 1.6 * c / 2.0 + 0.1, epsilon = 1e-14);
        assert_abs_diff_eq!(
            relu_step(1.0, 1.0, 0.0, 1.6, 0.1).unwrap(),
            1.6 / (2.0 * PI) + 0.1,
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(relu_step(1.0, 1.0, 0.0, 1.6, 0.1).unwrap(), 0.35465, epsilon = 1e-5);
        assert!(relu_step(0.0, 1.0, 0.0, 1.0, 0.0).is_err());
        assert!(relu_step(1.0, 1.0, 1.5, 1.0, 0.0).is_err());
        // rounding just past the unit ratio is clamped
        assert!(relu_step(1.0, 1.0, 1.0 + 1e-14, 1.0, 0.0).is_ok());
    }

    #[test]
    fn erf_step_examples() {
        assert_eq!(erf_step(0.4, 2.0, 0.0, 1.6, 0.1).unwrap(), 0.1);
        let expected = 3.2 / PI * (2.0f64 / 3.0).asin() + 0.1;
        assert_abs_diff_eq!(erf_step(1.0, 1.0, 1.0, 1.6, 0.1).unwrap(), expected, epsilon = 1e-15);
        assert_abs_diff_eq!(expected, 0.843_294_487_036_064, epsilon = 1e-14);
        assert!(erf_step(-0.6, 1.0, 0.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn nngp_kernel_examples() {
        // orthogonal inputs with zero base bias: arcsin(0) propagates σ²_b,1
        let spec = KernelSpec::nngp_erf(2, 1);
        let mut theta = HyperParams::uniform(&spec, 0, 1.6, 0.1);
        theta.log_bias_var_input = f64::NEG_INFINITY;
        let v = theta.variances();
        assert_eq!(v.input_bias, 0.0);
        assert_abs_diff_eq!(nngp_kernel(&[1.0, 0.0], &[0.0, 1.0], &spec, &v).unwrap(), 0.1, epsilon = 1e-16);

        let spec = KernelSpec::nngp_relu(1, 2);
        let theta = HyperParams::from_vec(&spec, 0, &[0.3f64.ln(), 0.2f64.ln(), 1.5f64.ln(), 0.7f64.ln(), 0.05f64.ln(), 0.4f64.ln()]).unwrap();
        let v = theta.variances();
        let x = [0.8];
        let c = 0.3 * 0.64 + 0.2;
        let expected = 0.7 * (1.5 * c / 2.0 + 0.05) / 2.0 + 0.4;
        assert_abs_diff_eq!(nngp_kernel(&x, &x, &spec, &v).unwrap(), expected, epsilon = 1e-14);
        assert!(nngp_kernel(&x, &x, &KernelSpec::arcsin(1), &v).is_err());
    }

    #[test]
    fn arcsin_kernel_examples() {
        let v = base_variances(&[2.0], 0.0);
        assert_eq!(arcsin_kernel(&[0.0], &[0.0], &v).unwrap(), 0.0);
        let v = base_variances(&[2.0], 0.3);
        let k0: f64 = 2.0 * 0.25 + 0.3;
        let expected = 2.0 / PI * (2.0 * k0 / (1.0 + 2.0 * k0)).asin();
        let got = arcsin_kernel(&[0.5], &[0.5], &v).unwrap();
        assert_abs_diff_eq!(got, expected, epsilon = 1e-15);
        assert!(got < 1.0);
        // same value as one erf layer with unit weight variance and no bias
        let spec = KernelSpec::nngp_erf(1, 1);
        let mut theta = HyperParams::from_vec(&spec, 0, &[2f64.ln(), 0.3f64.ln(), 0.0, f64::NEG_INFINITY]).unwrap();
        theta.log_bias_var_layer[0] = f64::NEG_INFINITY;
        let via_nngp = nngp_kernel(&[0.5], &[-0.5], &spec, &theta.variances()).unwrap();
        assert_abs_diff_eq!(arcsin_kernel(&[0.5], &[-0.5], &v).unwrap(), via_nngp, epsilon = 1e-15);
    }

    #[test]
    fn stationary_examples() {
        let v = stationary(1.0, 1.0);
        assert_eq!(se_kernel(&[0.3, 0.1], &[0.3, 0.1], &stationary(0.5, 2.5)).unwrap(), 2.5);
        assert_abs_diff_eq!(se_kernel(&[0.0, 0.0], &[1.0, 1.0], &v).unwrap(), (-1f64).exp(), epsilon = 1e-15);
        assert_abs_diff_eq!(se_kernel(&[0.0, 0.0], &[1.0, 1.0], &v).unwrap(), 0.36788, epsilon = 1e-5);
        let m = matern52_kernel(&[0.0], &[1.0], &v).unwrap();
        let s5 = 5f64.sqrt();
        assert_abs_diff_eq!(m, (1.0 + s5 + 5.0 / 3.0) * (-s5).exp(), epsilon = 1e-15);
        assert_abs_diff_eq!(m, 0.52399, epsilon = 1e-5);
        assert_eq!(matern52_kernel(&[0.2], &[0.2], &stationary(0.4, 3.0)).unwrap(), 3.0);
        assert_eq!(matern32_kernel(&[0.2], &[0.2], &stationary(0.4, 3.0)).unwrap(), 3.0);
    }

    #[test]
    fn gram_examples() {
        let spec = KernelSpec::nngp_erf(2, 2);
        let theta = HyperParams::uniform(&spec, 0, 1.6, 0.1);
        let one = DMatrix::from_row_slice(1, 2, &[0.3, 0.7]);
        let g = gram_symmetric(&one, &spec, &theta).unwrap();
        let direct = kernel(&[0.3, 0.7], &[0.3, 0.7], &spec, &theta.variances()).unwrap();
        assert_eq!(g[(0, 0)], direct);

        let twice = DMatrix::from_row_slice(2, 2, &[0.3, 0.7, 0.3, 0.7]);
        let g = gram_symmetric(&twice, &spec, &theta).unwrap();
        assert!(g.iter().all(|&e| e == direct));
        assert!(g.determinant().abs() < 1e-12);

        let pts = crate::sampling::halton(5, 2).unwrap().points;
        let g = gram_symmetric(&pts, &spec, &theta).unwrap();
        assert_eq!(g, g.transpose());
        let min = SymmetricEigen::new(g.clone()).eigenvalues.min();
        assert!(min >= -1e-10, "min eigenvalue {min}");
        let full = gram_matrix(&pts, &pts, &spec, &theta).unwrap();
        assert!((full - &g).amax() < 1e-15);

        let wrong = DMatrix::from_row_slice(1, 3, &[0.0, 0.0, 0.0]);
        assert!(gram_matrix(&wrong, &pts, &spec, &theta).is_err());
    }

    fn all_specs() -> Vec<KernelSpec> {
        vec![
            KernelSpec::squared_exponential(2),
            KernelSpec::matern52(2),
            KernelSpec::matern32(2).with_ard(true),
            KernelSpec::arcsin(2),
            KernelSpec::nngp_erf(2, 3),
            KernelSpec::nngp_relu(2, 3),
        ]
    }

    fn random_theta(spec: &KernelSpec, logs: &[f64]) -> HyperParams {
        let n = HyperParams::flat_len(spec, 0);
        HyperParams::from_vec(spec, 0, &logs[..n]).unwrap()
    }

    proptest! {
        #[test]
        fn symmetric_in_arguments(
            x in proptest::collection::vec(-2.0f64..2.0, 2),
            xp in proptest::collection::vec(-2.0f64..2.0, 2),
            logs in proptest::collection::vec(-1.5f64..1.5, 10),
        ) {
            for spec in all_specs() {
                let v = random_theta(&spec, &logs).variances();
                let a = kernel(&x, &xp, &spec, &v).unwrap();
                let b = kernel(&xp, &x, &spec, &v).unwrap();
                prop_assert!((a - b).abs() <= 1e-14 * a.abs().max(1.0));
            }
        }

        #[test]
        fn gram_is_psd(
            coords in proptest::collection::vec(-1.0f64..1.0, 2..100),
            logs in proptest::collection::vec(-1.5f64..1.5, 10),
        ) {
            let n = coords.len() / 2;
            let pts = DMatrix::from_row_slice(n, 2, &coords[..2 * n]);
            for spec in all_specs() {
                let theta = random_theta(&spec, &logs);
                let g = gram_symmetric(&pts, &spec, &theta).unwrap();
                let max_diag = g.diagonal().max();
                let min = SymmetricEigen::new(g).eigenvalues.min();
                prop_assert!(min >= -1e-8 * max_diag, "{:?}: {} vs {}", spec.family, min, max_diag);
            }
        }

        #[test]
        fn erf_step_bounded(
            a in 0.0f64..5.0, b in 0.0f64..5.0, rho in -1.0f64..1.0,
            w in 0.01f64..5.0, bias in 0.0f64..3.0,
        ) {
            let k = erf_step(a, b, rho * (a * b).sqrt(), w, bias).unwrap();
            prop_assert!(k >= bias - w - 1e-12 && k <= bias + w + 1e-12);
        }

        #[test]
        fn relu_diagonal_recursion(c in 1e-3f64..10.0, w in 0.01f64..5.0, bias in 0.0f64..3.0) {
            let k = relu_step(c, c, c, w, bias).unwrap();
            prop_assert!((k - (w * c / 2.0 + bias)).abs() <= 1e-13 * k);
        }

        #[test]
        fn reduces_to_fixed_variance_nngp(
            x in proptest::collection::vec(-2.0f64..2.0, 3),
            xp in proptest::collection::vec(-2.0f64..2.0, 3),
            w in 0.2f64..4.0, bias in 0.01f64..2.0, depth in 1usize..5,
        ) {
            for (family, nl) in [(KernelFamily::NngpErf, Nonlinearity::Erf), (KernelFamily::NngpRelu, Nonlinearity::Relu)] {
                let spec = KernelSpec { family, depth: Some(depth), input_dim: 3, ard: false };
                let mut theta = HyperParams::uniform(&spec, 0, w, bias);
                theta.log_weight_var_input.fill((w / 3.0).ln());
                let general = kernel(&x, &xp, &spec, &theta.variances()).unwrap();
                let fixed = fixed_variance_nngp(&x, &xp, nl, depth, w, bias).unwrap();
                prop_assert!((general - fixed).abs() <= 1e-12 * general.abs().max(1.0));
            }
        }

        #[test]
        fn diagonal_positive(x in proptest::collection::vec(-2.0f64..2.0, 2), logs in proptest::collection::vec(-1.5f64..1.5, 10)) {
            for spec in [KernelSpec::nngp_erf(2, 3), KernelSpec::nngp_relu(2, 3)] {
                let v = random_theta(&spec, &logs).variances();
                prop_assert!(kernel(&x, &x, &spec, &v).unwrap() > 0.0);
            }
        }
    }
}
