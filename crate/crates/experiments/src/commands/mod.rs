//! The five experiment commands.

mod burgers;
mod hartmann;
mod poisson;
mod step;
mod validate;

use std::time::Instant;

use anyhow::Result;

use crate::config::{Experiment, ExperimentConfig};
use crate::output::Table;
use crate::record::RunRecord;

pub use hartmann::hartmann3;

/// Outcome of one command.
#[derive(Debug, Clone)]
pub struct Report {
    pub record: RunRecord,
    pub tables: Vec<Table>,
}

/// Validates `cfg` and runs `command`.
pub fn run(command: Experiment, cfg: &ExperimentConfig) -> Result<Report> {
    cfg.validate(command)?;
    let start = Instant::now();
    let mut record = RunRecord::new(command, cfg);
    let tables = match command {
        Experiment::ValidateKernels => validate::run(cfg, &mut record)?,
        Experiment::ApproxStep => step::run(cfg, &mut record)?,
        Experiment::ApproxHartmann => hartmann::run(cfg, &mut record)?,
        Experiment::Poisson => poisson::run(cfg, &mut record)?,
        Experiment::Burgers => burgers::run(cfg, &mut record)?,
    };
    record.elapsed_seconds = start.elapsed().as_secs_f64();
    Ok(Report { record, tables })
}

/// Largest value, or `NaN` for an empty input.
fn max_of(values: impl IntoIterator<Item = f64>) -> f64 {
    values.into_iter().fold(f64::NAN, f64::max)
}

/// Trains on `obs` and predicts at `query`; failures are noted in the record
/// and give `None`.
fn fit_predict(
    record: &mut RunRecord,
    label: &str,
    spec: &nngp_core::KernelSpec,
    obs: &nngp_core::Observations,
    query: &nalgebra::DMatrix<f64>,
    training: &crate::config::TrainingConfig,
) -> Option<nngp_core::Posterior> {
    let result = nngp_core::train(obs, spec, &training.options()).and_then(|t| {
        let post = nngp_core::posterior(obs, &nngp_core::QueryBlock::identity(query.clone()), spec, &t.theta)?;
        Ok((t, post))
    });
    match result {
        Ok((t, post)) => {
            record.nlml.insert(label.to_string(), t.nlml);
            record.hyperparameters.insert(label.to_string(), t.theta.to_vec());
            Some(post)
        }
        Err(e) => {
            record.failures.insert(label.to_string(), e.to_string());
            None
        }
    }
}
