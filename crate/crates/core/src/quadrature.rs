//! Gaussian quadrature rules and a numerical layer transition.
//!
//! [`numeric_step`] evaluates `σ²_w E[φ(z)φ(z′)] + σ²_b` for `(z, z′)`
//! jointly Gaussian by factoring the 2x2 covariance and integrating the two
//! standard-normal coordinates one after the other. Smooth activations use
//! Gauss–Hermite rules. Activations with kinks (ReLU, tabulated maps) would
//! only converge like `1/n` that way, so for them each line integral is split
//! at the kinks and every piece gets its own Gauss–Legendre rule.

use std::cell::RefCell;
use std::collections::HashMap;
use std::f64::consts::PI;
use std::rc::Rc;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::kernels::Variances;

/// Nodes and weights of a one-dimensional quadrature rule.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussRule {
    /// Gauss–Hermite rule for `∫ f(x) exp(-x²) dx` (physicists' weight).
    ///
    /// Nodes start from the eigenvalues of the Jacobi matrix and are polished
    /// by Newton steps on the orthonormal recurrence, which also yields the
    /// weights.
    pub fn hermite(n: usize) -> Self {
        assert!(n >= 1, "quadrature needs at least one node");
        let jacobi = DMatrix::from_fn(n, n, |i, j| {
            if i + 1 == j || j + 1 == i {
                (i.max(j) as f64 / 2.0).sqrt()
            } else {
                0.0
            }
        });
        let mut guesses: Vec<f64> = SymmetricEigen::new(jacobi).eigenvalues.iter().copied().collect();
        guesses.sort_by(f64::total_cmp);
        let pim4 = PI.powf(-0.25);
        let nf = n as f64;
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        // Polish the non-negative half and mirror it.
        for i in 0..n.div_ceil(2) {
            let k = n - 1 - i;
            let mut z = guesses[k];
            let mut pp = 0.0;
            for _ in 0..20 {
                let mut p1 = pim4;
                let mut p2 = 0.0;
                for j in 0..n {
                    let p3 = p2;
                    p2 = p1;
                    let jf = j as f64;
                    p1 = z * (2.0 / (jf + 1.0)).sqrt() * p2 - (jf / (jf + 1.0)).sqrt() * p3;
                }
                pp = (2.0 * nf).sqrt() * p2;
                let step = p1 / pp;
                z -= step;
                if step.abs() <= 1e-15 * z.abs().max(1.0) {
                    break;
                }
            }
            nodes[k] = z;
            nodes[i] = -z;
            weights[k] = 2.0 / (pp * pp);
            weights[i] = weights[k];
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        GaussRule { nodes, weights }
    }

    /// Gauss–Legendre rule on `[-1, 1]`.
    pub fn legendre(n: usize) -> Self {
        assert!(n >= 1, "quadrature needs at least one node");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let nf = n as f64;
        for i in 0..n.div_ceil(2) {
            let mut z = (PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
            let mut pp = 0.0;
            for _ in 0..100 {
                let mut p1 = 1.0;
                let mut p2 = 0.0;
                for j in 0..n {
                    let p3 = p2;
                    p2 = p1;
                    let jf = j as f64;
                    p1 = ((2.0 * jf + 1.0) * z * p2 - jf * p3) / (jf + 1.0);
                }
                pp = nf * (z * p1 - p2) / (z * z - 1.0);
                let z1 = z;
                z = z1 - p1 / pp;
                if (z - z1).abs() <= 1e-15 {
                    break;
                }
            }
            nodes[i] = -z;
            nodes[n - 1 - i] = z;
            weights[i] = 2.0 / ((1.0 - z * z) * pp * pp);
            weights[n - 1 - i] = weights[i];
        }
        GaussRule { nodes, weights }
    }

    /// Rule for `E[f(ξ)]` with `ξ ~ N(0, 1)`.
    pub fn standard_normal(n: usize) -> Self {
        let h = Self::hermite(n);
        GaussRule {
            nodes: h.nodes.iter().map(|x| std::f64::consts::SQRT_2 * x).collect(),
            weights: h.weights.iter().map(|w| w / PI.sqrt()).collect(),
        }
    }
}

/// Tabulated activation, linearly interpolated and linearly extrapolated.
#[derive(Debug, Clone, PartialEq)]
pub struct TabulatedActivation {
    xs: Vec<f64>,
    ys: Vec<f64>,
}

impl TabulatedActivation {
    pub fn new(xs: Vec<f64>, ys: Vec<f64>) -> Result<Self> {
        if xs.len() < 2 || xs.len() != ys.len() {
            return Err(Error::Input("activation table needs at least two (x, y) pairs".into()));
        }
        if xs.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::Input("activation table abscissae must increase".into()));
        }
        Ok(TabulatedActivation { xs, ys })
    }

    fn eval(&self, z: f64) -> f64 {
        let n = self.xs.len();
        let k = match self.xs.partition_point(|&x| x <= z) {
            0 => 0,
            p if p >= n => n - 2,
            p => p - 1,
        };
        let (x0, x1, y0, y1) = (self.xs[k], self.xs[k + 1], self.ys[k], self.ys[k + 1]);
        y0 + (y1 - y0) * (z - x0) / (x1 - x0)
    }
}

/// Scalar activation functions for the numerical transition.
///
/// Every activation is assumed to grow at most polynomially.
#[derive(Debug, Clone, PartialEq)]
pub enum Activation {
    Relu,
    Erf,
    Identity,
    Tabulated(TabulatedActivation),
}

impl Activation {
    pub fn eval(&self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Erf => libm::erf(z),
            Activation::Identity => z,
            Activation::Tabulated(t) => t.eval(z),
        }
    }

    /// Points where the activation is not smooth.
    pub fn kinks(&self) -> &[f64] {
        match self {
            Activation::Relu => &[0.0],
            Activation::Erf | Activation::Identity => &[],
            Activation::Tabulated(t) => &t.xs,
        }
    }
}

/// Standard-normal coordinates beyond this radius contribute below `1e-17`
/// relative to polynomially growing integrands.
const TRUNCATION: f64 = 9.0;

struct LineIntegrator {
    normal: GaussRule,
    legendre: GaussRule,
}

thread_local! {
    static INTEGRATORS: RefCell<HashMap<usize, Rc<LineIntegrator>>> = RefCell::new(HashMap::new());
}

impl LineIntegrator {
    fn new(nodes: usize) -> Self {
        LineIntegrator {
            normal: GaussRule::standard_normal(nodes),
            legendre: GaussRule::legendre(nodes),
        }
    }

    /// Rules are built once per node count and thread.
    fn cached(nodes: usize) -> Rc<Self> {
        INTEGRATORS.with(|c| c.borrow_mut().entry(nodes).or_insert_with(|| Rc::new(Self::new(nodes))).clone())
    }

    /// `E[f(ξ)]` for `ξ ~ N(0,1)`, where `f` may be non-smooth at `breaks`.
    fn expect(&self, breaks: &[f64], mut f: impl FnMut(f64) -> f64) -> f64 {
        let mut cuts: Vec<f64> = breaks
            .iter()
            .copied()
            .filter(|b| b.is_finite() && b.abs() < TRUNCATION)
            .collect();
        if cuts.is_empty() {
            return self
                .normal
                .nodes
                .iter()
                .zip(&self.normal.weights)
                .map(|(&x, &w)| w * f(x))
                .sum();
        }
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();
        let density = 1.0 / (2.0 * PI).sqrt();
        let mut edges = Vec::with_capacity(cuts.len() + 2);
        edges.push(-TRUNCATION);
        edges.extend(cuts);
        edges.push(TRUNCATION);
        let mut total = 0.0;
        for w in edges.windows(2) {
            let (lo, hi) = (w[0], w[1]);
            let half = 0.5 * (hi - lo);
            let mid = 0.5 * (hi + lo);
            for (&t, &wt) in self.legendre.nodes.iter().zip(&self.legendre.weights) {
                let x = mid + half * t;
                total += half * wt * density * (-0.5 * x * x).exp() * f(x);
            }
        }
        total
    }
}

/// Correlations closer to ±1 than this use the one-dimensional integral.
pub const DEGENERATE_CORRELATION: f64 = 1e-10;

/// `σ²_w E[φ(z)φ(z′)] + σ²_b` with `(z, z′) ~ N(0, [[k_xx, k_xp], [k_xp, k_pp]])`.
pub fn numeric_step(
    k_xx: f64,
    k_pp: f64,
    k_xp: f64,
    weight_var: f64,
    bias_var: f64,
    activation: &Activation,
    nodes: usize,
) -> Result<f64> {
    if nodes < 2 {
        return Err(Error::Input(format!("quadrature needs at least 2 nodes, got {nodes}")));
    }
    if !(k_xx >= 0.0 && k_pp >= 0.0) || k_xp * k_xp > k_xx * k_pp * (1.0 + 1e-10) + 1e-300 {
        return Err(Error::Domain(format!(
            "covariance [[{k_xx}, {k_xp}], [{k_xp}, {k_pp}]] is not positive semidefinite"
        )));
    }
    let line = LineIntegrator::cached(nodes);
    let (sa, sb) = (k_xx.sqrt(), k_pp.sqrt());
    let kinks = activation.kinks();
    let phi = |z: f64| activation.eval(z);

    let rho = if sa > 0.0 && sb > 0.0 {
        (k_xp / (sa * sb)).clamp(-1.0, 1.0)
    } else {
        0.0
    };
    let expectation = if sa == 0.0 || sb == 0.0 || rho.abs() > 1.0 - DEGENERATE_CORRELATION {
        // Rank one (or zero): z′ = ±(σ_b/σ_a) z, or one variable is pinned at 0.
        let sign = if rho < 0.0 { -1.0 } else { 1.0 };
        let coupled = sa > 0.0 && sb > 0.0;
        let mut breaks: Vec<f64> = Vec::new();
        if sa > 0.0 {
            breaks.extend(kinks.iter().map(|k| k / sa));
        }
        if sb > 0.0 {
            breaks.extend(kinks.iter().map(|k| sign * k / sb));
        }
        if coupled {
            line.expect(&breaks, |xi| phi(sa * xi) * phi(sign * sb * xi))
        } else {
            // At least one of z, z′ is identically zero; the other is N(0, s²).
            let s = sa.max(sb);
            line.expect(&breaks, |xi| {
                let (z, zp) = if sa > 0.0 { (s * xi, 0.0) } else { (0.0, s * xi) };
                phi(z) * phi(zp)
            })
        }
    } else {
        // z = σ_a ξ₁, z′ = σ_b (ρ ξ₁ + √(1-ρ²) ξ₂)
        let tail = (1.0 - rho * rho).sqrt();
        let outer_breaks: Vec<f64> = kinks.iter().map(|k| k / sa).collect();
        let mut inner_breaks = vec![0.0; kinks.len()];
        line.expect(&outer_breaks, |x1| {
            let z = phi(sa * x1);
            if z == 0.0 {
                return 0.0;
            }
            for (b, k) in inner_breaks.iter_mut().zip(kinks) {
                *b = (k / sb - rho * x1) / tail;
            }
            z * line.expect(&inner_breaks, |x2| phi(sb * (rho * x1 + tail * x2)))
        })
    };
    Ok(weight_var * expectation + bias_var)
}

/// Numerical counterpart of the NNGP recursion: the base kernel followed by
/// `depth` numerical layer transitions, using the per-layer variances in `v`.
pub fn numeric_nngp_kernel(
    x: &[f64],
    xp: &[f64],
    activation: &Activation,
    v: &Variances,
    depth: usize,
    nodes: usize,
) -> Result<f64> {
    if v.layer_weight.len() < depth || v.layer_bias.len() < depth {
        return Err(Error::DimensionMismatch {
            expected: depth,
            got: v.layer_weight.len().min(v.layer_bias.len()),
        });
    }
    let mut k_xx = crate::kernels::base_kernel(x, x, v)?;
    let mut k_pp = crate::kernels::base_kernel(xp, xp, v)?;
    let mut k_xp = crate::kernels::base_kernel(x, xp, v)?;
    for l in 0..depth {
        let (w, b) = (v.layer_weight[l], v.layer_bias[l]);
        let next = numeric_step(k_xx, k_pp, k_xp, w, b, activation, nodes)?;
        k_xx = numeric_step(k_xx, k_xx, k_xx, w, b, activation, nodes)?;
        k_pp = numeric_step(k_pp, k_pp, k_pp, w, b, activation, nodes)?;
        k_xp = next;
    }
    Ok(k_xp)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn hermite_moments() {
        for n in [2, 5, 16, 64, 128, 256] {
            let r = GaussRule::standard_normal(n);
            let m0: f64 = r.weights.iter().sum();
            let m2: f64 = r.nodes.iter().zip(&r.weights).map(|(x, w)| w * x * x).sum();
            assert_abs_diff_eq!(m0, 1.0, epsilon = 1e-13);
            assert_abs_diff_eq!(m2, 1.0, epsilon = 1e-12);
            if n >= 3 {
                let m4: f64 = r.nodes.iter().zip(&r.weights).map(|(x, w)| w * x.powi(4)).sum();
                assert_abs_diff_eq!(m4, 3.0, epsilon = 1e-11);
            }
        }
    }

    #[test]
    fn legendre_integrates_polynomials() {
        let r = GaussRule::legendre(7);
        let i: f64 = r.nodes.iter().zip(&r.weights).map(|(x, w)| w * x.powi(12)).sum();
        assert_abs_diff_eq!(i, 2.0 / 13.0, epsilon = 1e-14);
        assert!(r.nodes.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn identity_is_exact() {
        for nodes in [2, 3, 10] {
            let k = numeric_step(1.3, 0.7, 0.4, 1.6, 0.1, &Activation::Identity, nodes).unwrap();
            assert_abs_diff_eq!(k, 1.6 * 0.4 + 0.1, epsilon = 1e-14);
        }
    }

    #[test]
    fn relu_diagonal_matches_half_variance() {
        let k = numeric_step(2.0, 2.0, 2.0, 1.0, 0.0, &Activation::Relu, 64).unwrap();
        assert_abs_diff_eq!(k, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn rejects_indefinite_and_small_rules() {
        assert!(numeric_step(1.0, 1.0, 1.5, 1.0, 0.0, &Activation::Erf, 16).is_err());
        assert!(numeric_step(-1.0, 1.0, 0.0, 1.0, 0.0, &Activation::Erf, 16).is_err());
        assert!(numeric_step(1.0, 1.0, 0.0, 1.0, 0.0, &Activation::Erf, 1).is_err());
    }

    #[test]
    fn tabulated_interpolates() {
        let t = TabulatedActivation::new(vec![-1.0, 0.0, 1.0], vec![0.0, 0.0, 1.0]).unwrap();
        assert_eq!(t.eval(0.5), 0.5);
        assert_eq!(t.eval(2.0), 2.0);
        assert_eq!(t.eval(-3.0), 0.0);
        assert!(TabulatedActivation::new(vec![0.0, 0.0], vec![1.0, 1.0]).is_err());
    }

    #[test]
    fn zero_depth_is_base_kernel() {
        let v = Variances {
            input_weight: vec![1.6, 1.6],
            input_bias: 0.1,
            ..Variances::default()
        };
        let (x, xp) = ([0.6, 0.8], [1.0, 0.0]);
        let k = numeric_nngp_kernel(&x, &xp, &Activation::Erf, &v, 0, 8).unwrap();
        assert_eq!(k, crate::kernels::base_kernel(&x, &xp, &v).unwrap());
    }
}
