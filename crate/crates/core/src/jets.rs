//! Kernel jets: a kernel value bundled with its mixed partial derivatives.
//!
//! For coordinates `a` (of `x`) and `b` (of `x′`) a jet stores
//! `∂ⁱ_{x_a} ∂ʲ_{x′_b} k(x, x′)` for `i, j ∈ {0, 1, 2}`, plus the derivatives
//! of the diagonal maps `x ↦ k(x, x)` and `x′ ↦ k(x′, x′)`. Cross-coordinate
//! second derivatives such as `∂_{x_1}∂_{x_2}` are not stored; every operator
//! used here is a sum of single-coordinate terms. Adding them would mean
//! carrying a three-variable series through [`jet_step`].
//!
//! Erf layers are propagated by composing truncated bivariate Taylor series
//! in `(x_a, x′_b)`, which carries out the multivariate chain rule to fourth
//! total order without writing out the partials of the layer map by hand.

use std::f64::consts::PI;

use crate::error::{check_dim, Error, Result};
use crate::kernels::{base_kernel_unchecked, clamp_unit, KernelFamily, KernelSpec, Variances};

/// Truncated Taylor series `Σ c[i][j] sⁱ tʲ` with `i, j ≤ 2`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
struct Series([[f64; 3]; 3]);

const FACTORIAL: [f64; 5] = [1.0, 1.0, 2.0, 6.0, 24.0];

impl Series {
    fn constant(c: f64) -> Self {
        let mut s = Series::default();
        s.0[0][0] = c;
        s
    }

    /// Series in `s` alone from the derivatives `[f, f′, f″]`.
    fn in_s(d: &[f64; 3]) -> Self {
        let mut s = Series::default();
        for (i, v) in d.iter().enumerate() {
            s.0[i][0] = v / FACTORIAL[i];
        }
        s
    }

    fn from_derivatives(d: &[[f64; 3]; 3]) -> Self {
        let mut s = Series::default();
        for i in 0..3 {
            for j in 0..3 {
                s.0[i][j] = d[i][j] / (FACTORIAL[i] * FACTORIAL[j]);
            }
        }
        s
    }

    fn derivatives(&self) -> [[f64; 3]; 3] {
        let mut d = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                d[i][j] = self.0[i][j] * FACTORIAL[i] * FACTORIAL[j];
            }
        }
        d
    }

    fn value(&self) -> f64 {
        self.0[0][0]
    }

    fn scale(mut self, k: f64) -> Self {
        self.0.iter_mut().flatten().for_each(|c| *c *= k);
        self
    }

    fn shift(mut self, k: f64) -> Self {
        self.0[0][0] += k;
        self
    }

    fn mul(&self, other: &Series) -> Series {
        let mut out = Series::default();
        for i in 0..3 {
            for j in 0..3 {
                let mut acc = 0.0;
                for p in 0..=i {
                    for q in 0..=j {
                        acc += self.0[p][q] * other.0[i - p][j - q];
                    }
                }
                out.0[i][j] = acc;
            }
        }
        out
    }

    /// `f ∘ self` given `[f(c), f′(c), …, f⁗(c)]` at the constant term `c`.
    ///
    /// The increment has no constant term, so its fifth power already exceeds
    /// the truncation order and the expansion below is exact.
    fn compose(&self, derivs: &[f64; 5]) -> Series {
        let mut delta = *self;
        delta.0[0][0] = 0.0;
        let mut out = Series::constant(derivs[0]);
        let mut power = delta;
        for n in 1..5 {
            let k = derivs[n] / FACTORIAL[n];
            for (o, p) in out.0.iter_mut().flatten().zip(power.0.iter().flatten()) {
                *o += k * p;
            }
            if n < 4 {
                power = power.mul(&delta);
            }
        }
        out
    }
}

fn inv_sqrt_derivs(y: f64) -> [f64; 5] {
    let r = 1.0 / y.sqrt();
    let inv = 1.0 / y;
    [
        r,
        -0.5 * r * inv,
        0.75 * r * inv * inv,
        -1.875 * r * inv * inv * inv,
        6.5625 * r * inv * inv * inv * inv,
    ]
}

fn recip_derivs(y: f64) -> [f64; 5] {
    let r = 1.0 / y;
    [r, -r * r, 2.0 * r * r * r, -6.0 * r.powi(4), 24.0 * r.powi(5)]
}

fn asin_derivs(u: f64) -> [f64; 5] {
    let w = 1.0 - u * u;
    let s = 1.0 / w.sqrt();
    [
        u.asin(),
        s,
        u * s / w,
        (1.0 + 2.0 * u * u) * s / (w * w),
        (6.0 * u * u * u + 9.0 * u) * s / (w * w * w),
    ]
}

/// A kernel value and its per-coordinate mixed partials up to order (2, 2).
#[derive(Debug, Clone, PartialEq)]
pub struct KernelJet {
    dim: usize,
    /// Index `a * dim + b`, then `[i][j]`.
    cross: Vec<[[f64; 3]; 3]>,
    diag_x: Vec<[f64; 3]>,
    diag_xp: Vec<[f64; 3]>,
}

impl KernelJet {
    /// A jet whose derivatives all vanish.
    pub fn constant(dim: usize, value: f64, diag_x: f64, diag_xp: f64) -> Self {
        let mut c = [[0.0; 3]; 3];
        c[0][0] = value;
        KernelJet {
            dim,
            cross: vec![c; dim * dim],
            diag_x: vec![[diag_x, 0.0, 0.0]; dim],
            diag_xp: vec![[diag_xp, 0.0, 0.0]; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `k(x, x′)`.
    pub fn value(&self) -> f64 {
        self.cross[0][0][0]
    }

    /// `∂ⁱ_{x_a} ∂ʲ_{x′_b} k(x, x′)`.
    pub fn d(&self, a: usize, b: usize, i: usize, j: usize) -> f64 {
        self.cross[a * self.dim + b][i][j]
    }

    /// `∂ⁱ_{x_a} k(x, x)` as a function of `x`.
    pub fn d_diag_x(&self, a: usize, i: usize) -> f64 {
        self.diag_x[a][i]
    }

    /// `∂ʲ_{x′_b} k(x′, x′)` as a function of `x′`.
    pub fn d_diag_xp(&self, b: usize, j: usize) -> f64 {
        self.diag_xp[b][j]
    }

    /// The jet of `k(x′, x)`.
    pub fn swapped(&self) -> KernelJet {
        let d = self.dim;
        let mut cross = vec![[[0.0; 3]; 3]; d * d];
        for a in 0..d {
            for b in 0..d {
                let src = &self.cross[a * d + b];
                let dst = &mut cross[b * d + a];
                for i in 0..3 {
                    for j in 0..3 {
                        dst[j][i] = src[i][j];
                    }
                }
            }
        }
        KernelJet {
            dim: d,
            cross,
            diag_x: self.diag_xp.clone(),
            diag_xp: self.diag_x.clone(),
        }
    }

    fn is_finite(&self) -> bool {
        self.cross.iter().flatten().flatten().all(|v| v.is_finite())
            && self.diag_x.iter().chain(&self.diag_xp).flatten().all(|v| v.is_finite())
    }
}

/// Jet of the base kernel `xᵀΛx′ + σ²_{b,0}`, which is bilinear: every pure
/// second derivative in one argument vanishes.
pub fn jet_base(x: &[f64], xp: &[f64], v: &Variances) -> Result<KernelJet> {
    let d = v.input_weight.len();
    check_dim(d, x.len())?;
    check_dim(d, xp.len())?;
    let diag = |p: &[f64]| -> Vec<[f64; 3]> {
        let kpp = base_kernel_unchecked(p, p, v);
        (0..d)
            .map(|a| [kpp, 2.0 * v.input_weight[a] * p[a], 2.0 * v.input_weight[a]])
            .collect()
    };
    Ok(KernelJet {
        dim: d,
        cross: base_cross(x, xp, v),
        diag_x: diag(x),
        diag_xp: diag(xp),
    })
}

fn base_cross(x: &[f64], xp: &[f64], v: &Variances) -> Vec<[[f64; 3]; 3]> {
    let d = x.len();
    let k0 = base_kernel_unchecked(x, xp, v);
    let mut cross = vec![[[0.0; 3]; 3]; d * d];
    for a in 0..d {
        for b in 0..d {
            let e = &mut cross[a * d + b];
            e[0][0] = k0;
            e[1][0] = v.input_weight[a] * xp[a];
            e[0][1] = v.input_weight[b] * x[b];
            e[1][1] = if a == b { v.input_weight[a] } else { 0.0 };
        }
    }
    cross
}

fn erf_diagonal_series(prev: &[f64; 3], scale: f64, bias_var: f64) -> Result<[f64; 3]> {
    let a = Series::in_s(prev);
    let denom = a.scale(2.0).shift(1.0);
    if denom.value() <= 0.0 {
        return Err(Error::Domain(format!(
            "erf recursion needs 1 + 2k > 0, got {}",
            denom.value()
        )));
    }
    let ratio = a.scale(2.0).mul(&denom.compose(&recip_derivs(denom.value())));
    clamp_unit(ratio.value())?;
    let out = ratio.compose(&asin_derivs(ratio.value())).scale(scale).shift(bias_var);
    let d = out.derivatives();
    Ok([d[0][0], d[1][0], d[2][0]])
}

fn inv_sqrt_coeffs(diag: &[f64; 3]) -> Result<[f64; 3]> {
    let series = Series::in_s(diag).scale(2.0).shift(1.0);
    let y = series.value();
    if y <= 0.0 {
        return Err(Error::Domain(format!("erf recursion needs 1 + 2k > 0, got {y}")));
    }
    let c = series.compose(&inv_sqrt_derivs(y)).0;
    Ok([c[0][0], c[1][0], c[2][0]])
}

fn series_s(c: &[f64; 3]) -> Series {
    let mut s = Series::default();
    for i in 0..3 {
        s.0[i][0] = c[i];
    }
    s
}

fn series_t(c: &[f64; 3]) -> Series {
    let mut s = Series::default();
    s.0[0] = *c;
    s
}

/// One erf layer applied to the cross derivatives of coordinates `(a, b)`,
/// given the series of `(1 + 2k(x,x))^{-1/2}` in `s` and of
/// `(1 + 2k(x′,x′))^{-1/2}` in `t`.
fn cross_step(prev: &[[f64; 3]; 3], inv_x: &Series, inv_xp: &Series, scale: f64, bias_var: f64) -> Result<[[f64; 3]; 3]> {
    let c = Series::from_derivatives(prev);
    let mut ratio = c.scale(2.0).mul(&inv_x.mul(inv_xp));
    let u = clamp_unit(ratio.value())?;
    ratio.0[0][0] = u;
    Ok(ratio.compose(&asin_derivs(u)).scale(scale).shift(bias_var).derivatives())
}

/// Pushes a jet of `k^{l-1}` through one erf layer with variances
/// `(σ²_w, σ²_b)`, producing the jet of `k^l`.
pub fn jet_step(prev: &KernelJet, weight_var: f64, bias_var: f64) -> Result<KernelJet> {
    let d = prev.dim;
    let scale = 2.0 * weight_var / PI;
    let inv_x = prev.diag_x.iter().map(inv_sqrt_coeffs).collect::<Result<Vec<_>>>()?;
    let inv_xp = prev.diag_xp.iter().map(inv_sqrt_coeffs).collect::<Result<Vec<_>>>()?;
    let mut cross = vec![[[0.0; 3]; 3]; d * d];
    for a in 0..d {
        for b in 0..d {
            cross[a * d + b] = cross_step(
                &prev.cross[a * d + b],
                &series_s(&inv_x[a]),
                &series_t(&inv_xp[b]),
                scale,
                bias_var,
            )?;
        }
    }
    let diag = |v: &[[f64; 3]]| {
        v.iter()
            .map(|p| erf_diagonal_series(p, scale, bias_var))
            .collect::<Result<Vec<_>>>()
    };
    let jet = KernelJet {
        dim: d,
        cross,
        diag_x: diag(&prev.diag_x)?,
        diag_xp: diag(&prev.diag_xp)?,
    };
    if !jet.is_finite() {
        return Err(Error::Domain("kernel derivatives overflowed".into()));
    }
    Ok(jet)
}

/// The part of a jet that depends on one point only: the derivatives of
/// `x ↦ k^l(x, x)` at every layer and the series of `(1 + 2k^l(x, x))^{-1/2}`.
///
/// Computing these once per point keeps the per-pair work to the cross terms.
#[derive(Debug, Clone, PartialEq)]
pub struct PointJet {
    /// `[layer][coordinate]`, layers `0..=L`.
    diag: Vec<Vec<[f64; 3]>>,
    /// `[layer][coordinate]` Taylor coefficients, layers `0..L`.
    inv: Vec<Vec<[f64; 3]>>,
}

fn erf_layers(spec: &KernelSpec, v: &Variances) -> Vec<(f64, f64)> {
    match spec.family {
        KernelFamily::NngpErf => v.layer_weight.iter().copied().zip(v.layer_bias.iter().copied()).collect(),
        KernelFamily::ArcSin => vec![(1.0, 0.0)],
        _ => Vec::new(),
    }
}

/// Point-only data for [`kernel_jet_prepared`].
pub fn point_jet(x: &[f64], spec: &KernelSpec, v: &Variances) -> Result<PointJet> {
    check_dim(spec.input_dim, x.len())?;
    if !supports_jets(spec.family) {
        return Err(unsupported(spec.family));
    }
    if spec.family == KernelFamily::SquaredExponential {
        return Ok(PointJet {
            diag: vec![vec![[v.signal_var, 0.0, 0.0]; x.len()]],
            inv: Vec::new(),
        });
    }
    let kxx = base_kernel_unchecked(x, x, v);
    let mut diag = vec![(0..x.len())
        .map(|a| [kxx, 2.0 * v.input_weight[a] * x[a], 2.0 * v.input_weight[a]])
        .collect::<Vec<_>>()];
    let mut inv = Vec::new();
    for (w, b) in erf_layers(spec, v) {
        let last = diag.last().expect("base layer present");
        inv.push(last.iter().map(inv_sqrt_coeffs).collect::<Result<Vec<_>>>()?);
        let scale = 2.0 * w / PI;
        let next = last
            .iter()
            .map(|p| erf_diagonal_series(p, scale, b))
            .collect::<Result<Vec<_>>>()?;
        diag.push(next);
    }
    Ok(PointJet { diag, inv })
}

/// [`kernel_jet`] from precomputed [`point_jet`]s of both arguments.
pub fn kernel_jet_prepared(
    x: &[f64],
    px: &PointJet,
    xp: &[f64],
    pxp: &PointJet,
    spec: &KernelSpec,
    v: &Variances,
) -> Result<KernelJet> {
    check_dim(spec.input_dim, x.len())?;
    check_dim(spec.input_dim, xp.len())?;
    let jet = match spec.family {
        KernelFamily::NngpErf | KernelFamily::ArcSin => {
            let d = x.len();
            check_dim(v.input_weight.len(), d)?;
            let mut cross = base_cross(x, xp, v);
            for (l, (w, b)) in erf_layers(spec, v).into_iter().enumerate() {
                let scale = 2.0 * w / PI;
                let inv_xp: Vec<Series> = pxp.inv[l].iter().map(series_t).collect();
                for a in 0..d {
                    let inv_x = series_s(&px.inv[l][a]);
                    for (bb, inv_b) in inv_xp.iter().enumerate() {
                        let e = &mut cross[a * d + bb];
                        *e = cross_step(e, &inv_x, inv_b, scale, b)?;
                    }
                }
            }
            KernelJet {
                dim: d,
                cross,
                diag_x: px.diag.last().cloned().unwrap_or_default(),
                diag_xp: pxp.diag.last().cloned().unwrap_or_default(),
            }
        }
        KernelFamily::SquaredExponential => return se_jet(x, xp, v),
        other => return Err(unsupported(other)),
    };
    if !jet.is_finite() {
        return Err(Error::Domain("kernel derivatives overflowed".into()));
    }
    Ok(jet)
}

fn unsupported(family: KernelFamily) -> Error {
    Error::Config(format!(
        "differential operators are not supported for the {} kernel",
        family.name()
    ))
}

/// Ratio `g⁽ⁿ⁾(u) / g(u)` for `g(u) = exp(-u²/(2ℓ²))`, via probabilists'
/// Hermite polynomials.
fn se_factor(n: usize, u: f64, ell: f64) -> f64 {
    let z = u / ell;
    let he = match n {
        0 => 1.0,
        1 => z,
        2 => z * z - 1.0,
        3 => z * z * z - 3.0 * z,
        4 => z * z * z * z - 6.0 * z * z + 3.0,
        _ => unreachable!("derivative order above four"),
    };
    (-1.0 / ell).powi(n as i32) * he
}

/// Jet of the squared-exponential kernel.
pub fn se_jet(x: &[f64], xp: &[f64], v: &Variances) -> Result<KernelJet> {
    let d = x.len();
    check_dim(d, xp.len())?;
    let k = crate::kernels::se_kernel(x, xp, v)?;
    let mut cross = vec![[[0.0; 3]; 3]; d * d];
    for a in 0..d {
        for b in 0..d {
            let e = &mut cross[a * d + b];
            let (ua, ub) = (x[a] - xp[a], x[b] - xp[b]);
            for i in 0..3 {
                for j in 0..3 {
                    let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
                    e[i][j] = if a == b {
                        k * sign * se_factor(i + j, ua, v.length_scale(a))
                    } else {
                        k * se_factor(i, ua, v.length_scale(a)) * sign * se_factor(j, ub, v.length_scale(b))
                    };
                }
            }
        }
    }
    Ok(KernelJet {
        dim: d,
        cross,
        diag_x: vec![[v.signal_var, 0.0, 0.0]; d],
        diag_xp: vec![[v.signal_var, 0.0, 0.0]; d],
    })
}

/// Whether operator blocks can be assembled for this family.
pub fn supports_jets(family: KernelFamily) -> bool {
    matches!(
        family,
        KernelFamily::NngpErf | KernelFamily::ArcSin | KernelFamily::SquaredExponential
    )
}

/// Jet of the kernel selected by `spec`.
///
/// ReLU jets are refused: the fourth mixed derivatives of that kernel blow
/// up as `x → x′`. Matern jets are not implemented.
pub fn kernel_jet(x: &[f64], xp: &[f64], spec: &KernelSpec, v: &Variances) -> Result<KernelJet> {
    let px = point_jet(x, spec, v)?;
    let pxp = point_jet(xp, spec, v)?;
    kernel_jet_prepared(x, &px, xp, &pxp, spec, v)
}

/// A linear differential operator `c₀ + Σₐ c₁ₐ ∂_{x_a} + Σₐ c₂ₐ ∂²_{x_a}`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LinearOp {
    pub constant: f64,
    /// First-derivative coefficients by coordinate (missing entries are zero).
    pub first: Vec<f64>,
    /// Pure second-derivative coefficients by coordinate.
    pub second: Vec<f64>,
}

impl LinearOp {
    pub fn identity() -> Self {
        LinearOp {
            constant: 1.0,
            ..Default::default()
        }
    }

    /// `−Δ` in `dim` dimensions.
    pub fn neg_laplacian(dim: usize) -> Self {
        LinearOp {
            constant: 0.0,
            first: Vec::new(),
            second: vec![-1.0; dim],
        }
    }

    pub fn is_identity(&self) -> bool {
        self.constant == 1.0
            && self.first.iter().all(|&c| c == 0.0)
            && self.second.iter().all(|&c| c == 0.0)
    }

    fn terms(&self, dim: usize) -> Result<Vec<(usize, usize, f64)>> {
        let mut terms = Vec::with_capacity(1 + 2 * dim);
        if self.constant != 0.0 {
            terms.push((0, usize::MAX, self.constant));
        }
        for (order, coeffs) in [(1, &self.first), (2, &self.second)] {
            for (a, &c) in coeffs.iter().enumerate() {
                if c == 0.0 {
                    continue;
                }
                if a >= dim {
                    return Err(Error::Input(format!(
                        "operator differentiates coordinate {a} of a {dim}-dimensional input"
                    )));
                }
                terms.push((order, a, c));
            }
        }
        Ok(terms)
    }
}

/// Applies `left` in `x` and `right` in `x′` to the kernel represented by `jet`.
pub fn apply_operator_pair(jet: &KernelJet, left: &LinearOp, right: &LinearOp) -> Result<f64> {
    let lt = left.terms(jet.dim)?;
    let rt = right.terms(jet.dim)?;
    let mut sum = 0.0;
    for &(i, a, cl) in &lt {
        for &(j, b, cr) in &rt {
            // A zeroth-order side does not pick a coordinate; borrow the other's.
            let (a, b) = match (a, b) {
                (usize::MAX, usize::MAX) => (0, 0),
                (usize::MAX, b) => (b, b),
                (a, usize::MAX) => (a, a),
                ab => ab,
            };
            sum += cl * cr * jet.d(a, b, i, j);
        }
    }
    Ok(sum)
}
