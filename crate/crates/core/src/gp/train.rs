//! Maximum-likelihood hyperparameter training with deterministic restarts.

use serde::{Deserialize, Serialize};

use super::objective::{supports_analytic_gradient, Evaluator, FD_STEP};
use super::optimize::{minimize, MinimizeOptions};
use super::{Observations, NLML_PENALTY};
use crate::error::{Error, Result};
use crate::kernels::{HyperParams, KernelSpec};
use crate::sampling::halton;

/// How the optimizer obtains gradients.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GradientMode {
    /// Closed form for stationary kernels on identity blocks, else finite differences.
    Auto,
    FiniteDifference,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOptions {
    pub restarts: usize,
    /// Objective evaluations allowed per restart.
    pub max_evals: usize,
    pub fd_step: f64,
    /// Halton points are mapped affinely onto this box in log space.
    pub init_range: (f64, f64),
    /// Used verbatim as the starting point of restart 0.
    pub warm_start: Option<HyperParams>,
    /// Flat coordinates held at the given log value.
    pub fixed: Vec<(usize, f64)>,
    /// Groups of flat coordinates that share one value; the first member of
    /// each group is the one optimized.
    pub tied: Vec<Vec<usize>>,
    pub gradient: GradientMode,
    pub grad_tol: f64,
    pub ftol: f64,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            restarts: 10,
            max_evals: 200,
            fd_step: FD_STEP,
            init_range: (-2.0, 2.0),
            warm_start: None,
            fixed: Vec::new(),
            tied: Vec::new(),
            gradient: GradientMode::Auto,
            grad_tol: 1e-5,
            ftol: 1e-9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestartRecord {
    pub index: usize,
    pub initial_nlml: f64,
    pub final_nlml: f64,
    pub evaluations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainResult {
    pub theta: HyperParams,
    pub nlml: f64,
    /// Index of the restart that produced `theta`.
    pub best: usize,
    pub restarts: Vec<RestartRecord>,
}

/// The first `n` Halton points in `p` dimensions mapped onto `[lo, hi]^p`.
pub fn halton_initializations(n: usize, p: usize, range: (f64, f64)) -> Result<Vec<Vec<f64>>> {
    if n == 0 || p == 0 {
        return Ok(vec![Vec::new(); n]);
    }
    let pts = halton(n, p)?.scaled(range.0, range.1);
    Ok(pts.row_iter().map(|r| r.iter().copied().collect()).collect())
}

/// Minimizes the NLML from every restart and keeps the best result (lowest
/// restart index on ties).
pub fn train(obs: &Observations, spec: &KernelSpec, opts: &TrainOptions) -> Result<TrainResult> {
    spec.validate()?;
    let ev = Evaluator::new(obs, spec)?;
    let total = HyperParams::flat_len(spec, ev.noise_blocks);
    if opts.restarts == 0 {
        return Err(Error::Config("at least one restart is required".into()));
    }
    let mut fixed = vec![None; total];
    for &(i, value) in &opts.fixed {
        let slot = fixed
            .get_mut(i)
            .ok_or_else(|| Error::Config(format!("fixed coordinate {i} out of range ({total} parameters)")))?;
        *slot = Some(value);
    }
    // follower -> leader
    let mut leader: Vec<Option<usize>> = vec![None; total];
    for group in &opts.tied {
        let Some(&head) = group.first() else { continue };
        for &i in group {
            if i >= total {
                return Err(Error::Config(format!("tied coordinate {i} out of range ({total} parameters)")));
            }
            if fixed[i].is_some() || leader[i].is_some() {
                return Err(Error::Config(format!("coordinate {i} is tied twice or also fixed")));
            }
            if i != head {
                leader[i] = Some(head);
            }
        }
    }
    let free: Vec<usize> = (0..total)
        .filter(|&i| fixed[i].is_none() && leader[i].is_none())
        .collect();
    // Every coordinate whose derivative contributes to each free variable.
    let members: Vec<Vec<usize>> = free
        .iter()
        .map(|&f| (0..total).filter(|&i| i == f || leader[i] == Some(f)).collect())
        .collect();
    let all_members: Vec<usize> = members.iter().flatten().copied().collect();
    let warm = match &opts.warm_start {
        Some(theta) => {
            let flat = theta.to_vec();
            if flat.len() != total {
                return Err(Error::DimensionMismatch {
                    expected: total,
                    got: flat.len(),
                });
            }
            Some(flat)
        }
        None => None,
    };
    let inits = halton_initializations(opts.restarts, free.len(), opts.init_range)?;
    let analytic = opts.gradient == GradientMode::Auto && supports_analytic_gradient(obs, spec);

    let expand = |x: &[f64]| -> Vec<f64> {
        let mut full: Vec<f64> = fixed.iter().map(|v| v.unwrap_or(0.0)).collect();
        for (group, &xi) in members.iter().zip(x) {
            for &i in group {
                full[i] = xi;
            }
        }
        full
    };
    let objective = |x: &[f64]| -> (f64, Vec<f64>) {
        let full = expand(x);
        let res = if analytic {
            ev.analytic(&full)
        } else {
            ev.fd(&full, &all_members, opts.fd_step).map(|(f, g)| {
                let mut dense = vec![0.0; total];
                for (&i, gi) in all_members.iter().zip(g) {
                    dense[i] = gi;
                }
                (f, dense)
            })
        };
        let res = res.map(|(f, g)| (f, members.iter().map(|m| m.iter().map(|&i| g[i]).sum()).collect()));
        res.unwrap_or_else(|_| (NLML_PENALTY, vec![0.0; free.len()]))
    };
    let mopts = MinimizeOptions {
        max_evals: opts.max_evals,
        grad_tol: opts.grad_tol,
        ftol: opts.ftol,
        ..MinimizeOptions::default()
    };

    let mut records = Vec::with_capacity(opts.restarts);
    let mut best: Option<(usize, f64, Vec<f64>)> = None;
    for (r, halton_start) in inits.into_iter().enumerate() {
        let start: Vec<f64> = match (&warm, r) {
            (Some(w), 0) => free.iter().map(|&i| w[i]).collect(),
            _ => halton_start,
        };
        let initial_nlml = ev.value(&expand(&start)).unwrap_or(NLML_PENALTY);
        let res = minimize(objective, &start, &mopts);
        records.push(RestartRecord {
            index: r,
            initial_nlml,
            final_nlml: res.f,
            evaluations: res.evals,
        });
        let ok = res.f.is_finite() && res.f < NLML_PENALTY;
        if ok && best.as_ref().is_none_or(|(_, f, _)| res.f < *f) {
            best = Some((r, res.f, res.x));
        }
    }
    let (best, nlml, x) = best.ok_or_else(|| {
        Error::Training(format!(
            "all {} restarts failed to reach a finite marginal likelihood",
            opts.restarts
        ))
    })?;
    Ok(TrainResult {
        theta: HyperParams::from_vec(spec, ev.noise_blocks, &expand(&x))?,
        nlml,
        best,
        restarts: records,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gp::ObservationBlock;
    use crate::linalg::column_points;
    use nalgebra::DVector;

    fn step_data() -> Observations {
        let xs: Vec<f64> = (0..10).map(|i| -1.0 + 2.0 * i as f64 / 9.0).collect();
        let ys = DVector::from_iterator(10, xs.iter().map(|&x| if x >= 0.0 { 1.0 } else { 0.0 }));
        Observations::single(ObservationBlock::identity(column_points(&xs), ys, 0))
    }

    #[test]
    fn initializations_cover_the_box() {
        let inits = halton_initializations(10, 4, (-2.0, 2.0)).unwrap();
        assert_eq!(inits.len(), 10);
        let expected = [0.0, -2.0 + 4.0 / 3.0, -2.0 + 4.0 / 5.0, -2.0 + 4.0 / 7.0];
        for (a, b) in inits[0].iter().zip(&expected) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!(inits.iter().flatten().all(|v| (-2.0..=2.0).contains(v)));
    }

    #[test]
    fn training_is_deterministic_and_selects_minimum() {
        let spec = KernelSpec::nngp_relu(1, 1);
        let obs = step_data();
        let opts = TrainOptions {
            max_evals: 60,
            ..TrainOptions::default()
        };
        let a = train(&obs, &spec, &opts).unwrap();
        let b = train(&obs, &spec, &opts).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.restarts.len(), 10);
        assert!(a.restarts.iter().all(|r| a.nlml <= r.final_nlml));
        assert!(a.restarts.iter().all(|r| r.final_nlml <= r.initial_nlml));
    }

    #[test]
    fn warm_start_is_used_verbatim() {
        let spec = KernelSpec::squared_exponential(1);
        let obs = step_data();
        let mut warm = HyperParams::unit(&spec, 1);
        warm.aux[0] = 0.123;
        let opts = TrainOptions {
            restarts: 1,
            max_evals: 1,
            warm_start: Some(warm.clone()),
            ..TrainOptions::default()
        };
        let res = train(&obs, &spec, &opts).unwrap();
        assert_eq!(res.theta, warm);
        assert_eq!(res.restarts[0].initial_nlml, res.nlml);
    }

    #[test]
    fn fixed_coordinates_do_not_move() {
        let spec = KernelSpec::squared_exponential(1);
        let obs = step_data();
        let opts = TrainOptions {
            restarts: 2,
            max_evals: 30,
            fixed: vec![(2, -5.0)],
            ..TrainOptions::default()
        };
        let res = train(&obs, &spec, &opts).unwrap();
        assert_eq!(res.theta.log_noise_vars[0], -5.0);
    }

    #[test]
    fn tied_coordinates_move_together() {
        let spec = KernelSpec::nngp_erf(2, 1);
        let x = crate::sampling::halton(12, 2).unwrap().points;
        let y = DVector::from_iterator(12, x.row_iter().map(|r| (2.0 * r[0]).sin() * r[1]));
        let obs = Observations::single(ObservationBlock::identity(x, y, 0));
        let opts = TrainOptions {
            restarts: 2,
            max_evals: 40,
            tied: vec![vec![0, 1]],
            ..TrainOptions::default()
        };
        let res = train(&obs, &spec, &opts).unwrap();
        let w = &res.theta.log_weight_var_input;
        assert_eq!(w[0], w[1]);
        assert_ne!(w[0], 0.0);

        let clash = TrainOptions { fixed: vec![(1, 0.0)], ..opts };
        assert!(train(&obs, &spec, &clash).is_err());
    }
}
