//! Marginal-likelihood gradients and the objective handed to the optimizer.

use nalgebra::{DMatrix, DVector};

use super::{add_noise, nlml_with_factor, prior_covariance, Observations, NLML_PENALTY};
use crate::error::{Error, Result};
use crate::kernels::{kernel, HyperParams, KernelFamily, KernelSpec, NOISE_VARIANCE_FLOOR};
use crate::linalg::{cholesky_jittered, rows};

/// Finite-difference step in log-parameter space.
pub const FD_STEP: f64 = 1e-4;

/// True when the closed-form gradient applies: a stationary family observed
/// only through the identity operator.
pub fn supports_analytic_gradient(obs: &Observations, spec: &KernelSpec) -> bool {
    spec.family.is_stationary() && obs.is_identity_only()
}

/// Evaluates the marginal likelihood for flat parameter vectors, reusing the
/// noise-free covariance where only noise variances change.
pub(crate) struct Evaluator<'a> {
    pub obs: &'a Observations,
    pub spec: &'a KernelSpec,
    pub noise_blocks: usize,
    y: DVector<f64>,
}

impl<'a> Evaluator<'a> {
    pub fn new(obs: &'a Observations, spec: &'a KernelSpec) -> Result<Self> {
        obs.validate(spec)?;
        Ok(Evaluator {
            obs,
            spec,
            noise_blocks: obs.noise_blocks(),
            y: obs.values(),
        })
    }

    pub fn params(&self, flat: &[f64]) -> Result<HyperParams> {
        let theta = HyperParams::from_vec(self.spec, self.noise_blocks, flat)?;
        theta.validate(self.spec)?;
        Ok(theta)
    }

    pub fn kernel_len(&self) -> usize {
        self.spec.kernel_param_count()
    }

    pub fn prior(&self, flat: &[f64]) -> Result<DMatrix<f64>> {
        prior_covariance(self.obs, self.spec, &self.params(flat)?)
    }

    /// NLML given the noise-free covariance for the kernel part of `flat`.
    pub fn with_prior(&self, k0: &DMatrix<f64>, flat: &[f64]) -> Result<f64> {
        let theta = self.params(flat)?;
        let mut k = k0.clone();
        add_noise(&mut k, self.obs, &theta)?;
        let chol = cholesky_jittered(&k)?;
        let value = nlml_with_factor(&chol, &self.y);
        if value.is_finite() && value < NLML_PENALTY {
            Ok(value)
        } else {
            Err(Error::Domain("marginal likelihood is not finite".into()))
        }
    }

    pub fn value(&self, flat: &[f64]) -> Result<f64> {
        let k0 = self.prior(flat)?;
        self.with_prior(&k0, flat)
    }

    /// Value and finite-difference derivatives along `coords`.
    pub fn fd(&self, flat: &[f64], coords: &[usize], h: f64) -> Result<(f64, Vec<f64>)> {
        let k0 = self.prior(flat)?;
        let f0 = self.with_prior(&k0, flat)?;
        let kernel_len = self.kernel_len();
        let eval = |i: usize, delta: f64| -> Option<f64> {
            let mut p = flat.to_vec();
            p[i] += delta;
            if i < kernel_len {
                self.value(&p).ok()
            } else {
                self.with_prior(&k0, &p).ok()
            }
        };
        let grad = coords
            .iter()
            .map(|&i| match (eval(i, h), eval(i, -h)) {
                (Some(fp), Some(fm)) => (fp - fm) / (2.0 * h),
                (Some(fp), None) => (fp - f0) / h,
                (None, Some(fm)) => (f0 - fm) / h,
                (None, None) => 0.0,
            })
            .collect();
        Ok((f0, grad))
    }

    /// Value and closed-form gradient over every coordinate.
    pub fn analytic(&self, flat: &[f64]) -> Result<(f64, Vec<f64>)> {
        if !supports_analytic_gradient(self.obs, self.spec) {
            return Err(Error::Config(format!(
                "no closed-form gradient for {} with operator blocks",
                self.spec.family.name()
            )));
        }
        let theta = self.params(flat)?;
        let v = theta.variances();
        let pts: Vec<Vec<f64>> = self.obs.blocks.iter().flat_map(|b| rows(&b.locations)).collect();
        let n = pts.len();
        let n_ls = v.length_scales.len();
        let d = self.spec.input_dim;
        let mut k = DMatrix::zeros(n, n);
        // dK/d log ℓ (one per length-scale) followed by dK/d log s².
        let mut dk = vec![DMatrix::zeros(n, n); n_ls + 1];
        for i in 0..n {
            for j in 0..=i {
                let kij = kernel(&pts[i], &pts[j], self.spec, &v)?;
                let r2: f64 = (0..d)
                    .map(|a| {
                        let u = (pts[i][a] - pts[j][a]) / v.length_scale(a);
                        u * u
                    })
                    .sum();
                // Common factor g with dk/d log ℓₐ = g · uₐ²/ℓₐ².
                let g = match self.spec.family {
                    KernelFamily::SquaredExponential => kij,
                    KernelFamily::Matern52 => {
                        let rho = (5.0 * r2).sqrt();
                        5.0 / 3.0 * v.signal_var * (1.0 + rho) * (-rho).exp()
                    }
                    KernelFamily::Matern32 => {
                        let rho = (3.0 * r2).sqrt();
                        3.0 * v.signal_var * (-rho).exp()
                    }
                    _ => unreachable!("checked by supports_analytic_gradient"),
                };
                let set = |m: &mut DMatrix<f64>, val: f64| {
                    m[(i, j)] = val;
                    m[(j, i)] = val;
                };
                set(&mut k, kij);
                if n_ls == 1 {
                    set(&mut dk[0], g * r2);
                } else {
                    for a in 0..d {
                        let u = (pts[i][a] - pts[j][a]) / v.length_scale(a);
                        set(&mut dk[a], g * u * u);
                    }
                }
                set(&mut dk[n_ls], kij);
            }
        }
        add_noise(&mut k, self.obs, &theta)?;
        let chol = cholesky_jittered(&k)?;
        let value = nlml_with_factor(&chol, &self.y);
        if !value.is_finite() || value >= NLML_PENALTY {
            return Err(Error::Domain("marginal likelihood is not finite".into()));
        }
        let alpha = chol.solve_vec(&self.y);
        let w = chol.solve_mat(&DMatrix::identity(n, n)) - &alpha * alpha.transpose();
        let half_trace = |m: &DMatrix<f64>| 0.5 * w.component_mul(m).sum();
        let mut grad: Vec<f64> = dk.iter().map(half_trace).collect();
        for nb in 0..self.noise_blocks {
            let s2 = theta.log_noise_vars[nb].exp();
            let mut g = 0.0;
            if s2 > NOISE_VARIANCE_FLOOR {
                for (b, off) in self.obs.blocks.iter().zip(self.obs.offsets()) {
                    if b.noise_index == nb {
                        g += (0..b.len()).map(|i| w[(off + i, off + i)]).sum::<f64>();
                    }
                }
            }
            grad.push(0.5 * s2 * g);
        }
        Ok((value, grad))
    }
}

/// Central finite-difference gradient of the NLML in log-parameter space
/// (step [`FD_STEP`]), one-sided where a stencil point fails.
pub fn nlml_grad_fd(obs: &Observations, spec: &KernelSpec, theta: &HyperParams) -> Result<Vec<f64>> {
    let ev = Evaluator::new(obs, spec)?;
    let flat = theta.to_vec();
    let coords: Vec<usize> = (0..flat.len()).collect();
    Ok(ev.fd(&flat, &coords, FD_STEP)?.1)
}

/// Closed-form NLML gradient for stationary kernels on identity blocks.
pub fn nlml_grad_analytic(obs: &Observations, spec: &KernelSpec, theta: &HyperParams) -> Result<Vec<f64>> {
    Evaluator::new(obs, spec)?.analytic(&theta.to_vec()).map(|(_, g)| g)
}

/// Closed-form gradient where available, finite differences otherwise.
pub fn nlml_grad(obs: &Observations, spec: &KernelSpec, theta: &HyperParams) -> Result<Vec<f64>> {
    if supports_analytic_gradient(obs, spec) {
        nlml_grad_analytic(obs, spec, theta)
    } else {
        nlml_grad_fd(obs, spec, theta)
    }
}
