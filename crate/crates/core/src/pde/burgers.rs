//! Backward-Euler time marching for `u_t + u u_x = ν u_xx` on `[-1, 1]`,
//! with each step a GP regression on the boundary values and on the previous
//! step's posterior mean.
//!
//! The advection term is linearized around the previous mean `μ`, giving
//! `uⁿ − Δt (ν ∂²uⁿ − μ ∂uⁿ) = uⁿ⁻¹`. The covariance of `uⁿ⁻¹` is carried into
//! the new posterior.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{burgers_reference, relative_l2_error};
use crate::error::{Error, Result};
use crate::gp::{train, ConditionedGp, ObservationBlock, Observations, OperatorField, Posterior, QueryBlock, TrainOptions, TrainResult};
use crate::jets::{supports_jets, LinearOp};
use crate::kernels::{HyperParams, KernelSpec};
use crate::linalg::{column_points, nearest_psd};
use crate::sampling::{latin_hypercube, linspace};

/// `0.01/π`.
pub const VISCOSITY: f64 = 0.01 / PI;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BurgersRun {
    pub dt: f64,
    pub nu: f64,
    /// Training points carrying the initial condition.
    pub n_initial: usize,
    /// Training points per step.
    pub n_train: usize,
    /// Standard deviation of the noise added to the initial values.
    pub noise_std0: f64,
    pub steps: usize,
    pub seed: u64,
    /// Draw fresh training locations at every step.
    pub resample: bool,
    pub test_points: usize,
    /// Steps at which the test-grid posterior and error are recorded.
    pub record_steps: Vec<usize>,
    pub restarts_first: usize,
    pub restarts_later: usize,
    pub max_evals_first: usize,
    pub max_evals_later: usize,
}

impl Default for BurgersRun {
    fn default() -> Self {
        BurgersRun {
            dt: 0.01,
            nu: VISCOSITY,
            n_initial: 24,
            n_train: 31,
            noise_std0: 0.0,
            steps: 100,
            seed: 0,
            resample: false,
            test_points: 400,
            record_steps: vec![25, 50, 75, 100],
            restarts_first: 10,
            restarts_later: 1,
            max_evals_first: 200,
            max_evals_later: 20,
        }
    }
}

impl BurgersRun {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) || !(self.nu >= 0.0 && self.nu.is_finite()) {
            return Err(Error::Config("time step must be positive and viscosity non-negative".into()));
        }
        if self.n_initial == 0 || self.n_train == 0 || self.test_points < 2 {
            return Err(Error::Config("point counts must be positive".into()));
        }
        if !(self.noise_std0 >= 0.0 && self.noise_std0.is_finite()) {
            return Err(Error::Config("noise standard deviation must be non-negative".into()));
        }
        if self.restarts_first == 0 || self.restarts_later == 0 {
            return Err(Error::Config("at least one restart per step is required".into()));
        }
        if let Some(s) = self.record_steps.iter().find(|&&s| s == 0 || s > self.steps) {
            return Err(Error::Config(format!("record step {s} outside 1..={}", self.steps)));
        }
        Ok(())
    }

    pub fn time(&self, step: usize) -> f64 {
        step as f64 * self.dt
    }
}

/// `L_x = ν ∂² − μ(x) ∂` at each point.
pub fn burgers_linearized_operator(mu: &[f64], nu: f64) -> Vec<LinearOp> {
    mu.iter()
        .map(|&m| LinearOp {
            constant: 0.0,
            first: vec![-m],
            second: vec![nu],
        })
        .collect()
}

/// `I − Δt L_x` at each point.
pub fn backward_euler_operators(mu: &[f64], nu: f64, dt: f64) -> Vec<LinearOp> {
    burgers_linearized_operator(mu, nu)
        .into_iter()
        .map(|op| LinearOp {
            constant: 1.0,
            first: vec![-dt * op.first[0]],
            second: vec![-dt * op.second[0]],
        })
        .collect()
}

/// Everything carried from one step to the next.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeStepState {
    pub step: usize,
    pub x_prev: DMatrix<f64>,
    pub mu_prev: DVector<f64>,
    pub cov_prev: DMatrix<f64>,
    pub theta_prev: Option<HyperParams>,
}

/// The (possibly noisy) initial condition at Latin hypercube points.
pub fn initial_state(run: &BurgersRun) -> Result<TimeStepState> {
    let x0 = latin_hypercube(run.n_initial, 1, run.seed)?.scaled(-1.0, 1.0);
    let mut mu = DVector::from_iterator(run.n_initial, x0.iter().map(|&x| -(PI * x).sin()));
    if run.noise_std0 > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(run.seed.wrapping_add(0x9e37_79b9));
        let normal = Normal::new(0.0, run.noise_std0).map_err(|e| Error::Config(e.to_string()))?;
        for m in mu.iter_mut() {
            *m += normal.sample(&mut rng);
        }
    }
    Ok(TimeStepState {
        step: 0,
        cov_prev: DMatrix::zeros(run.n_initial, run.n_initial),
        x_prev: x0,
        mu_prev: mu,
        theta_prev: None,
    })
}

fn training_points(run: &BurgersRun, step: usize) -> Result<DMatrix<f64>> {
    let seed = if run.resample {
        run.seed.wrapping_add(1 + step as u64)
    } else {
        run.seed.wrapping_add(1)
    };
    Ok(latin_hypercube(run.n_train, 1, seed)?.scaled(-1.0, 1.0))
}

/// Boundary block (noise 0) and previous-step block (noise 1).
pub fn step_observations(state: &TimeStepState, run: &BurgersRun) -> Observations {
    let boundary = ObservationBlock::identity(column_points(&[-1.0, 1.0]), DVector::zeros(2), 0);
    let ops = backward_euler_operators(state.mu_prev.as_slice(), run.nu, run.dt);
    let previous = ObservationBlock::new(state.x_prev.clone(), state.mu_prev.clone(), 1, OperatorField::PerPoint(ops));
    Observations::new(vec![boundary, previous])
}

#[derive(Debug, Clone)]
pub struct StepOutput {
    /// Posterior at the next training locations.
    pub next: Posterior,
    /// Posterior on the requested test points.
    pub test: Option<Posterior>,
    pub state: TimeStepState,
    pub train: TrainResult,
    /// Smallest diagonal entry of the carried-uncertainty term.
    pub min_added_variance: f64,
}

/// One backward-Euler step: trains on the current observations, then
/// predicts at `x_next` (and optionally at `test`) with the previous
/// covariance carried forward.
pub fn burgers_step(
    state: &TimeStepState,
    run: &BurgersRun,
    spec: &KernelSpec,
    x_next: &DMatrix<f64>,
    test: Option<&DMatrix<f64>>,
    opts: &TrainOptions,
) -> Result<StepOutput> {
    let obs = step_observations(state, run);
    let mut opts = opts.clone();
    if opts.warm_start.is_none() {
        opts.warm_start = state.theta_prev.clone();
    }
    let trained = train(&obs, spec, &opts)?;
    let gp = ConditionedGp::new(&obs, spec, &trained.theta)?;
    let mut min_added = f64::INFINITY;
    let mut predict = |pts: &DMatrix<f64>| -> Result<Posterior> {
        let p = gp.predict_propagated(&QueryBlock::identity(pts.clone()), 1, &state.cov_prev)?;
        let added = p.posterior.covariance.diagonal() - &p.plain_variance;
        min_added = min_added.min(added.min());
        Ok(p.posterior)
    };
    let next = predict(x_next)?;
    let test = test.map(&mut predict).transpose()?;
    let state = TimeStepState {
        step: state.step + 1,
        x_prev: x_next.clone(),
        mu_prev: next.mean.clone(),
        cov_prev: nearest_psd(&next.covariance),
        theta_prev: Some(trained.theta.clone()),
    };
    Ok(StepOutput {
        next,
        test,
        state,
        train: trained,
        min_added_variance: min_added,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BurgersRecord {
    pub step: usize,
    pub t: f64,
    pub error: f64,
    pub mean_std: f64,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub exact: Vec<f64>,
    pub nlml: f64,
    pub theta: HyperParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepLog {
    pub step: usize,
    pub nlml: f64,
    pub evaluations: usize,
    pub min_added_variance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BurgersHistory {
    pub test_x: Vec<f64>,
    pub records: Vec<BurgersRecord>,
    pub steps: Vec<StepLog>,
    /// Set when a step failed; the records before it are kept.
    pub failure: Option<String>,
}

impl BurgersHistory {
    pub fn record_at(&self, step: usize) -> Option<&BurgersRecord> {
        self.records.iter().find(|r| r.step == step)
    }

    /// Smallest carried-uncertainty diagonal over every step.
    pub fn min_added_variance(&self) -> f64 {
        self.steps.iter().map(|s| s.min_added_variance).fold(f64::INFINITY, f64::min)
    }
}

/// Marches `run.steps` steps from the initial condition.
pub fn burgers_march(run: &BurgersRun, spec: &KernelSpec) -> Result<BurgersHistory> {
    run.validate()?;
    if !supports_jets(spec.family) || spec.input_dim != 1 {
        return Err(Error::Config(format!(
            "Burgers solver needs a twice-differentiable kernel on 1D inputs, got {} on {}D",
            spec.family.name(),
            spec.input_dim
        )));
    }
    let test_x = linspace(-1.0, 1.0, run.test_points);
    let test_pts = column_points(&test_x);
    let mut history = BurgersHistory {
        test_x: test_x.clone(),
        records: Vec::new(),
        steps: Vec::new(),
        failure: None,
    };
    let mut state = initial_state(run)?;
    for step in 1..=run.steps {
        let opts = if step == 1 {
            TrainOptions {
                restarts: run.restarts_first,
                max_evals: run.max_evals_first,
                ..TrainOptions::default()
            }
        } else {
            TrainOptions {
                restarts: run.restarts_later,
                max_evals: run.max_evals_later,
                ..TrainOptions::default()
            }
        };
        let record = run.record_steps.contains(&step);
        let outcome = training_points(run, step)
            .and_then(|x_next| burgers_step(&state, run, spec, &x_next, record.then_some(&test_pts), &opts));
        let out = match outcome {
            Ok(out) => out,
            Err(e) => {
                history.failure = Some(
                    Error::TimeStep {
                        step,
                        source: Box::new(e),
                    }
                    .to_string(),
                );
                break;
            }
        };
        history.steps.push(StepLog {
            step,
            nlml: out.train.nlml,
            evaluations: out.train.restarts.iter().map(|r| r.evaluations).sum(),
            min_added_variance: out.min_added_variance,
        });
        if let Some(test) = &out.test {
            let t = run.time(step);
            let exact = burgers_reference(&test_x, t, run.nu);
            let std: Vec<f64> = test.std().iter().copied().collect();
            history.records.push(BurgersRecord {
                step,
                t,
                error: relative_l2_error(test.mean.as_slice(), &exact)?,
                mean_std: std.iter().sum::<f64>() / std.len() as f64,
                mean: test.mean.iter().copied().collect(),
                std,
                exact,
                nlml: out.train.nlml,
                theta: out.train.theta.clone(),
            });
        }
        state = out.state;
    }
    Ok(history)
}
