//! Kernel jets against finite differences of the scalar kernel.

use nngp_core::jets::kernel_jet;
use nngp_core::kernels::{kernel, HyperParams, KernelSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `∂ⁱ_{x_a} ∂ʲ_{x′_b} k` by nested fourth-order central differences.
fn fd_partial(spec: &KernelSpec, theta: &HyperParams, x: &[f64], xp: &[f64], a: usize, b: usize, i: usize, j: usize, h: f64) -> f64 {
    let v = theta.variances();
    let stencil = |order: usize| -> Vec<(f64, f64)> {
        match order {
            0 => vec![(0.0, 1.0)],
            1 => vec![
                (2.0 * h, -1.0 / (12.0 * h)),
                (h, 8.0 / (12.0 * h)),
                (-h, -8.0 / (12.0 * h)),
                (-2.0 * h, 1.0 / (12.0 * h)),
            ],
            _ => {
                let c = 12.0 * h * h;
                vec![(2.0 * h, -1.0 / c), (h, 16.0 / c), (0.0, -30.0 / c), (-h, 16.0 / c), (-2.0 * h, -1.0 / c)]
            }
        }
    };
    let mut sum = 0.0;
    for (dx, wx) in stencil(i) {
        for (dxp, wxp) in stencil(j) {
            let mut p = x.to_vec();
            let mut q = xp.to_vec();
            p[a] += dx;
            q[b] += dxp;
            sum += wx * wxp * kernel(&p, &q, spec, &v).unwrap();
        }
    }
    sum
}

fn fd_diag(spec: &KernelSpec, theta: &HyperParams, x: &[f64], a: usize, i: usize, h: f64) -> f64 {
    let v = theta.variances();
    let at = |d: f64| {
        let mut p = x.to_vec();
        p[a] += d;
        kernel(&p, &p, spec, &v).unwrap()
    };
    match i {
        0 => at(0.0),
        1 => (at(h) - at(-h)) / (2.0 * h),
        _ => (at(h) - 2.0 * at(0.0) + at(-h)) / (h * h),
    }
}

/// Relative error, with entries below 0.1 in magnitude measured against 0.1.
fn rel(jet: f64, fd: f64) -> f64 {
    (jet - fd).abs() / fd.abs().max(0.1)
}

#[test]
fn erf_jets_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst_low = 0.0f64;
    let mut worst_high = 0.0f64;
    for case in 0..200 {
        let d = 1 + case % 2;
        let depth = 1 + (case / 2) % 3;
        let spec = KernelSpec::nngp_erf(d, depth);
        let len = HyperParams::flat_len(&spec, 0);
        let flat: Vec<f64> = (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let theta = HyperParams::from_vec(&spec, 0, &flat).unwrap();
        let x: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let xp: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let jet = kernel_jet(&x, &xp, &spec, &theta.variances()).unwrap();
        for a in 0..d {
            for b in 0..d {
                for i in 0..3 {
                    for j in 0..3 {
                        if i + j <= 2 {
                            let fd = fd_partial(&spec, &theta, &x, &xp, a, b, i, j, 1e-4);
                            worst_low = worst_low.max(rel(jet.d(a, b, i, j), fd));
                        } else {
                            let fd = fd_partial(&spec, &theta, &x, &xp, a, b, i, j, 5e-3);
                            worst_high = worst_high.max(rel(jet.d(a, b, i, j), fd));
                        }
                    }
                }
            }
            for i in 0..3 {
                let fd = fd_diag(&spec, &theta, &x, a, i, 1e-4);
                worst_low = worst_low.max(rel(jet.d_diag_x(a, i), fd));
                let fd = fd_diag(&spec, &theta, &xp, a, i, 1e-4);
                worst_low = worst_low.max(rel(jet.d_diag_xp(a, i), fd));
            }
        }
    }
    assert!(worst_low < 1e-5, "orders <= 2: worst relative error {worst_low:e}");
    assert!(worst_high < 1e-3, "orders 3-4: worst relative error {worst_high:e}");
}

#[test]
fn se_and_arcsin_jets_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for case in 0..40 {
        let d = 1 + case % 2;
        let spec = if case % 4 < 2 {
            KernelSpec::squared_exponential(d).with_ard(true)
        } else {
            KernelSpec::arcsin(d)
        };
        let len = HyperParams::flat_len(&spec, 0);
        let flat: Vec<f64> = (0..len).map(|_| rng.gen_range(-0.5..0.5)).collect();
        let theta = HyperParams::from_vec(&spec, 0, &flat).unwrap();
        let x: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let xp: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let jet = kernel_jet(&x, &xp, &spec, &theta.variances()).unwrap();
        for a in 0..d {
            for b in 0..d {
                for i in 0..3 {
                    for j in 0..3 {
                        let (h, tol) = if i + j <= 2 { (1e-4, 1e-5) } else { (5e-3, 1e-3) };
                        let fd = fd_partial(&spec, &theta, &x, &xp, a, b, i, j, h);
                        let err = rel(jet.d(a, b, i, j), fd);
                        assert!(err < tol, "{:?} d={d} ({a},{b},{i},{j}): jet {} fd {fd}", spec.family, jet.d(a, b, i, j));
                    }
                }
            }
        }
    }
}

proptest::proptest! {
    #[test]
    fn exchanging_arguments_transposes_the_jet(
        seed in 0u64..100_000,
        d in 1usize..3,
        depth in 1usize..4,
        family in 0usize..3,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let spec = match family {
            0 => KernelSpec::nngp_erf(d, depth),
            1 => KernelSpec::arcsin(d),
            _ => KernelSpec::squared_exponential(d),
        };
        let flat: Vec<f64> = (0..HyperParams::flat_len(&spec, 0)).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let v = HyperParams::from_vec(&spec, 0, &flat).unwrap().variances();
        let x: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let xp: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let fwd = kernel_jet(&x, &xp, &spec, &v).unwrap();
        let back = kernel_jet(&xp, &x, &spec, &v).unwrap();
        for a in 0..d {
            for b in 0..d {
                for i in 0..3 {
                    for j in 0..3 {
                        let (p, q) = (fwd.d(a, b, i, j), back.d(b, a, j, i));
                        proptest::prop_assert!((p - q).abs() <= 1e-10 * p.abs().max(1.0), "{} vs {}", p, q);
                    }
                }
            }
        }
    }
}
