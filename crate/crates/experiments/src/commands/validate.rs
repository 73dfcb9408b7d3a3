//! Analytic layer recursions against the quadrature evaluation.

use std::time::{Duration, Instant};

use anyhow::Result;
use nngp_core::kernels::{base_kernel, nngp_kernel, Variances};
use nngp_core::quadrature::{numeric_step, Activation};
use nngp_core::sampling::linspace;
use nngp_core::{HyperParams, KernelFamily, KernelSpec};
use serde::Serialize;

use super::max_of;
use crate::config::ExperimentConfig;
use crate::output::Table;
use crate::record::{Check, RunRecord};

#[derive(Debug, Serialize)]
struct Row {
    nonlinearity: &'static str,
    theta: f64,
    layer: usize,
    analytic: f64,
    numeric: f64,
    absdiff: f64,
}

const CONVERGENCE_TOLERANCE: f64 = 1e-8;

fn first_layers(v: &Variances, l: usize) -> Variances {
    let mut out = v.clone();
    out.layer_weight.truncate(l);
    out.layer_bias.truncate(l);
    out
}

/// Cross-covariances after `0..=depth` numerical layer transitions.
fn numeric_layers(x: &[f64], xp: &[f64], activation: &Activation, v: &Variances, depth: usize, nodes: usize) -> Result<Vec<f64>> {
    let mut k_xx = base_kernel(x, x, v)?;
    let mut k_pp = base_kernel(xp, xp, v)?;
    let mut k_xp = base_kernel(x, xp, v)?;
    let mut out = vec![k_xp];
    for l in 0..depth {
        let (w, b) = (v.layer_weight[l], v.layer_bias[l]);
        k_xp = numeric_step(k_xx, k_pp, k_xp, w, b, activation, nodes)?;
        k_xx = numeric_step(k_xx, k_xx, k_xx, w, b, activation, nodes)?;
        k_pp = numeric_step(k_pp, k_pp, k_pp, w, b, activation, nodes)?;
        out.push(k_xp);
    }
    Ok(out)
}

pub(super) fn run(cfg: &ExperimentConfig, record: &mut RunRecord) -> Result<Vec<Table>> {
    let c = &cfg.validate_kernels;
    let max_depth = cfg.depth.unwrap_or(c.max_depth);
    let families: Vec<(KernelFamily, Activation, &'static str)> = [
        (KernelFamily::NngpRelu, Activation::Relu, "relu"),
        (KernelFamily::NngpErf, Activation::Erf, "erf"),
    ]
    .into_iter()
    .filter(|(f, _, _)| cfg.kernel.is_none_or(|k| k == *f))
    .collect();

    let thetas = linspace(0.0, std::f64::consts::PI, c.theta_points);
    let x = [1.0, 0.0];
    let mut rows = Vec::new();
    let mut convergence = Vec::new();
    let (mut compare_time, mut converge_time) = (Duration::ZERO, Duration::ZERO);
    for (family, activation, name) in &families {
        let spec = KernelSpec { family: *family, depth: Some(max_depth.max(1)), input_dim: 2, ard: false };
        let v = HyperParams::uniform(&spec, 0, c.weight_var, c.bias_var).variances();
        for &theta in &thetas {
            let xp = [theta.cos(), theta.sin()];
            let start = Instant::now();
            let numeric = numeric_layers(&x, &xp, activation, &v, max_depth, c.nodes)?;
            for (layer, &numeric) in numeric.iter().enumerate() {
                let analytic = if layer == 0 {
                    base_kernel(&x, &xp, &v)?
                } else {
                    let s = KernelSpec { depth: Some(layer), ..spec };
                    nngp_kernel(&x, &xp, &s, &first_layers(&v, layer))?
                };
                rows.push(Row {
                    nonlinearity: name,
                    theta,
                    layer,
                    analytic,
                    numeric,
                    absdiff: (analytic - numeric).abs(),
                });
            }
            compare_time += start.elapsed();
            let start = Instant::now();
            if max_depth >= 1 && *family == KernelFamily::NngpErf {
                let doubled = numeric_layers(&x, &xp, activation, &v, max_depth, 2 * c.nodes)?;
                convergence.push((numeric[max_depth] - doubled[max_depth]).abs());
            }
            converge_time += start.elapsed();
        }
        let worst = max_of(rows.iter().filter(|r| r.nonlinearity == *name).map(|r| r.absdiff));
        record.errors.insert(format!("max-absdiff-{name}"), worst);
    }

    record.seconds.insert("comparison".into(), compare_time.as_secs_f64());
    record.seconds.insert("node-convergence".into(), converge_time.as_secs_f64());
    let worst = max_of(rows.iter().map(|r| r.absdiff));
    record.checks.push(if rows.is_empty() {
        Check::skipped("analytic-matches-quadrature", "no nonlinearity selected")
    } else {
        Check::new(
            "analytic-matches-quadrature",
            worst < c.tolerance,
            format!("max |analytic - numeric| = {worst:.3e} (tolerance {:.0e})", c.tolerance),
        )
    });
    let layer0 = rows.iter().filter(|r| r.layer == 0).all(|r| r.analytic == r.numeric);
    record.checks.push(Check::new("base-layer-exact", layer0, "layer 0 uses the shared base kernel"));
    let drift = max_of(convergence.iter().copied());
    record.checks.push(if convergence.is_empty() {
        Check::skipped("node-convergence", "needs erf with at least one layer")
    } else {
        Check::new(
            "node-convergence",
            drift < CONVERGENCE_TOLERANCE,
            format!("max erf change from {} to {} nodes at depth {max_depth}: {drift:.3e}", c.nodes, 2 * c.nodes),
        )
    });
    Ok(vec![Table::from_rows("kernel_validation.csv", &rows)?])
}
