//! Regression of the Hartmann-3 function on Halton designs.

use std::time::Instant;

use anyhow::Result;
use nalgebra::{DMatrix, DVector};
use nngp_core::pde::relative_l2_error;
use nngp_core::sampling::{halton, permutation};
use nngp_core::{KernelFamily, ObservationBlock, Observations};
use serde::Serialize;

use super::fit_predict;
use crate::config::{hartmann_train_count, spec_for, variant_label, ExperimentConfig};
use crate::output::Table;
use crate::record::{Check, RunRecord};

// Hartmann 3D coefficients as tabulated by Dixon and Szegö (1978) and in the
// Surjanovic and Bingham virtual library of simulation experiments.
const ALPHA: [f64; 4] = [1.0, 1.2, 3.0, 3.2];
const A: [[f64; 3]; 4] = [[3.0, 10.0, 30.0], [0.1, 10.0, 35.0], [3.0, 10.0, 30.0], [0.1, 10.0, 35.0]];
const P: [[f64; 3]; 4] = [
    [0.3689, 0.1170, 0.2673],
    [0.4699, 0.4387, 0.7470],
    [0.1091, 0.8732, 0.5547],
    [0.0381, 0.5743, 0.8828],
];

/// `-Σ αᵢ exp(-Σⱼ Aᵢⱼ (xⱼ - Pᵢⱼ)²)` on `[0, 1]³`.
pub fn hartmann3(x: &[f64]) -> f64 {
    -(0..4)
        .map(|i| ALPHA[i] * (-(0..3).map(|j| A[i][j] * (x[j] - P[i][j]).powi(2)).sum::<f64>()).exp())
        .sum::<f64>()
}

#[derive(Debug, Serialize)]
struct ErrorRow {
    n: usize,
    n_train: usize,
    variant: String,
    relative_error: f64,
    nlml: f64,
    seconds: f64,
}

const SMOOTH_ERROR_LIMIT: f64 = 0.05;

pub(super) fn run(cfg: &ExperimentConfig, record: &mut RunRecord) -> Result<Vec<Table>> {
    let c = &cfg.approx_hartmann;
    let depth = cfg.depth.unwrap_or(c.depth);
    let variants: Vec<(KernelFamily, Option<usize>)> = [
        (KernelFamily::SquaredExponential, None),
        (KernelFamily::NngpErf, Some(depth)),
        (KernelFamily::NngpRelu, Some(depth)),
    ]
    .into_iter()
    .filter(|&(f, d)| cfg.admits(f, d))
    .collect();

    let mut rows = Vec::new();
    for &n in &c.sizes {
        let pts = halton(n, 3)?.points;
        let order = permutation(n, cfg.seed);
        let n_train = hartmann_train_count(n, c.train_fraction);
        let take = |idx: &[usize]| DMatrix::from_fn(idx.len(), 3, |i, j| pts[(idx[i], j)]);
        let values = |m: &DMatrix<f64>| DVector::from_iterator(m.nrows(), m.row_iter().map(|r| hartmann3(&[r[0], r[1], r[2]])));
        let x_train = take(&order[..n_train]);
        let x_test = take(&order[n_train..]);
        let obs = Observations::single(ObservationBlock::identity(x_train.clone(), values(&x_train), 0));
        let exact = values(&x_test);
        let training = c.training_for(n, &cfg.training);
        for &(family, depth) in &variants {
            let label = format!("{}-n{n}", variant_label(family, depth));
            let start = Instant::now();
            let Some(post) = fit_predict(record, &label, &spec_for(family, depth, 3), &obs, &x_test, &training) else {
                continue;
            };
            let error = relative_l2_error(post.mean.as_slice(), exact.as_slice())?;
            record.errors.insert(label.clone(), error);
            record.seconds.insert(label.clone(), start.elapsed().as_secs_f64());
            rows.push(ErrorRow {
                n,
                n_train,
                variant: variant_label(family, depth),
                relative_error: error,
                nlml: record.nlml[&label],
                seconds: start.elapsed().as_secs_f64(),
            });
        }
    }

    let err = |variant: &str, n: usize| rows.iter().find(|r| r.variant == variant && r.n == n).map(|r| r.relative_error);
    let se = variant_label(KernelFamily::SquaredExponential, None);
    let erf = variant_label(KernelFamily::NngpErf, Some(depth));
    let relu = variant_label(KernelFamily::NngpRelu, Some(depth));
    let smallest = c.sizes.iter().copied().min().unwrap_or(0);
    let largest = c.sizes.iter().copied().max().unwrap_or(0);

    for v in [&se, &erf] {
        let name = format!("{v}-improves-with-n");
        record.checks.push(match (err(v, smallest), err(v, largest)) {
            (Some(a), Some(b)) if smallest < largest => {
                Check::new(name, b < a, format!("N={smallest}: {a:.3e}, N={largest}: {b:.3e}"))
            }
            _ => Check::skipped(name, "needs two sizes"),
        });
    }
    record.checks.push(match (err(&se, largest), err(&erf, largest), err(&relu, largest)) {
        (Some(s), Some(e), Some(r)) => Check::new(
            "relu-worst-on-smooth-target",
            s < r && e < r && s < SMOOTH_ERROR_LIMIT && e < SMOOTH_ERROR_LIMIT,
            format!("N={largest}: {se} {s:.3e}, {erf} {e:.3e}, {relu} {r:.3e}"),
        ),
        _ => Check::skipped("relu-worst-on-smooth-target", "needs all three kernels"),
    });
    let ratios: Vec<f64> = c
        .sizes
        .iter()
        .filter_map(|&n| Some((err(&se, n)?, err(&erf, n)?)))
        .map(|(a, b)| (a / b).max(b / a))
        .collect();
    record.checks.push(if ratios.is_empty() {
        Check::skipped("se-erf-same-order", "needs SE and erf")
    } else {
        let worst = ratios.iter().copied().fold(0.0, f64::max);
        Check::new("se-erf-same-order", worst < 10.0, format!("largest SE/erf error ratio {worst:.2}"))
    });
    Ok(vec![Table::from_rows("hartmann_errors.csv", &rows)?])
}
