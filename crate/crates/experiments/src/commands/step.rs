//! Regression of the unit step on `[-1, 1]`.

use anyhow::Result;
use nalgebra::{DMatrix, DVector};
use nngp_core::pde::relative_l2_error;
use nngp_core::sampling::linspace;
use nngp_core::{KernelFamily, ObservationBlock, Observations};
use serde::Serialize;

use super::fit_predict;
use crate::config::{spec_for, variant_label, ExperimentConfig};
use crate::output::Table;
use crate::record::{Check, RunRecord};

#[derive(Debug, Serialize)]
struct PredictionRow<'a> {
    variant: &'a str,
    x: f64,
    exact: f64,
    mean: f64,
    std: f64,
    lower: f64,
    upper: f64,
}

#[derive(Debug, Serialize)]
struct ErrorRow {
    variant: String,
    relative_error: f64,
    coverage: f64,
    nlml: f64,
}

const MIN_COVERAGE: f64 = 0.9;

fn step(x: f64) -> f64 {
    if x >= 0.0 {
        1.0
    } else {
        0.0
    }
}

pub(super) fn run(cfg: &ExperimentConfig, record: &mut RunRecord) -> Result<Vec<Table>> {
    let c = &cfg.approx_step;
    let x_train = linspace(-1.0, 1.0, c.n_train);
    let x_test = linspace(-1.0, 1.0, c.n_test);
    let column = |xs: &[f64]| DMatrix::from_column_slice(xs.len(), 1, xs);
    let obs = Observations::single(ObservationBlock::identity(
        column(&x_train),
        DVector::from_iterator(x_train.len(), x_train.iter().map(|&x| step(x))),
        0,
    ));
    let query = column(&x_test);
    let exact: Vec<f64> = x_test.iter().map(|&x| step(x)).collect();

    let mut variants = vec![(KernelFamily::SquaredExponential, None), (KernelFamily::Matern52, None)];
    for family in [KernelFamily::NngpErf, KernelFamily::NngpRelu] {
        variants.extend(c.depths.iter().map(|&l| (family, Some(l))));
    }
    variants.retain(|&(f, d)| cfg.admits(f, d));

    let mut predictions = Vec::new();
    let mut errors = Vec::new();
    let mut labels = Vec::new();
    for (family, depth) in variants {
        let label = variant_label(family, depth);
        let spec = spec_for(family, depth, 1);
        let start = std::time::Instant::now();
        let fitted = fit_predict(record, &label, &spec, &obs, &query, &cfg.training);
        record.seconds.insert(label.clone(), start.elapsed().as_secs_f64());
        let Some(post) = fitted else {
            continue;
        };
        let std = post.std();
        let mut inside = 0;
        let mut counted = 0;
        for (i, &x) in x_test.iter().enumerate() {
            let (m, s) = (post.mean[i], std[i]);
            if x.abs() > c.jump_margin {
                counted += 1;
                if (exact[i] - m).abs() <= 2.0 * s {
                    inside += 1;
                }
            }
            predictions.push((label.clone(), x, exact[i], m, s));
        }
        let coverage = if counted == 0 { f64::NAN } else { inside as f64 / counted as f64 };
        let error = relative_l2_error(post.mean.as_slice(), &exact)?;
        record.errors.insert(label.clone(), error);
        errors.push(ErrorRow {
            variant: label.clone(),
            relative_error: error,
            coverage,
            nlml: record.nlml[&label],
        });
        labels.push(label);
    }

    let err = |label: &str| record.errors.get(label).copied();
    record.checks.push(match (err("nngp-relu-l1"), err("gp-se")) {
        (Some(relu), Some(se)) => Check::new(
            "relu-beats-se",
            relu < 0.5 * se,
            format!("nngp-relu-l1 {relu:.4} vs gp-se {se:.4} (needs < half)"),
        ),
        _ => Check::skipped("relu-beats-se", "needs nngp-relu-l1 and gp-se"),
    });
    let relu: Vec<f64> = labels.iter().filter(|l| l.starts_with("nngp-relu")).filter_map(|l| err(l)).collect();
    record.checks.push(if relu.len() >= 2 {
        let lo = relu.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = relu.iter().copied().fold(0.0, f64::max);
        Check::new("relu-depth-insensitive", hi <= 2.0 * lo, format!("ReLU errors span {lo:.4} to {hi:.4}"))
    } else {
        Check::skipped("relu-depth-insensitive", "needs two ReLU depths")
    });
    let relu_cov: Vec<&ErrorRow> = errors.iter().filter(|r| r.variant.starts_with("nngp-relu")).collect();
    record.checks.push(if relu_cov.is_empty() {
        Check::skipped("band-coverage", "no ReLU variant")
    } else {
        let worst = relu_cov.iter().map(|r| r.coverage).fold(f64::INFINITY, f64::min);
        Check::new(
            "band-coverage",
            worst >= MIN_COVERAGE,
            format!("lowest two-std coverage away from the jump among ReLU variants: {worst:.2}"),
        )
    });

    let rows: Vec<PredictionRow> = predictions
        .iter()
        .map(|(v, x, e, m, s)| PredictionRow {
            variant: v,
            x: *x,
            exact: *e,
            mean: *m,
            std: *s,
            lower: m - 2.0 * s,
            upper: m + 2.0 * s,
        })
        .collect();
    Ok(vec![
        Table::from_rows("step_predictions.csv", &rows)?,
        Table::from_rows("step_errors.csv", &errors)?,
    ])
}
