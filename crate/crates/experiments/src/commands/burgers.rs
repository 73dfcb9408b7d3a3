//! Time marching of viscous Burgers with propagated uncertainty.

use anyhow::Result;
use nngp_core::pde::{burgers_march, BurgersHistory};
use nngp_core::KernelFamily;
use serde::Serialize;

use crate::config::{BurgersVariant, ExperimentConfig};
use crate::output::Table;
use crate::record::{Check, RunRecord};

#[derive(Debug, Serialize)]
struct ErrorRow<'a> {
    variant: &'a str,
    step: usize,
    t: f64,
    relative_error: f64,
    mean_std: f64,
    nlml: f64,
}

#[derive(Debug, Serialize)]
struct ProfileRow<'a> {
    variant: &'a str,
    step: usize,
    t: f64,
    x: f64,
    exact: f64,
    mean: f64,
    std: f64,
}

#[derive(Debug, Serialize)]
struct StepRow<'a> {
    variant: &'a str,
    step: usize,
    nlml: f64,
    evaluations: usize,
    min_added_variance: f64,
}

const CLEAN_ERROR_LIMIT: f64 = 0.1;
const NOISY_RATIO: f64 = 3.0;
const PSD_TOLERANCE: f64 = 1e-10;

struct Marched {
    variant: BurgersVariant,
    label: String,
    history: BurgersHistory,
}

pub(super) fn run(cfg: &ExperimentConfig, record: &mut RunRecord) -> Result<Vec<Table>> {
    let b = &cfg.burgers;
    let mut runs = Vec::new();
    for v in b.variants.iter().filter(|v| cfg.admits(v.kernel, v.depth)) {
        let label = v.label();
        let start = std::time::Instant::now();
        let marched = burgers_march(&cfg.burgers_run(v)?, &v.spec());
        record.seconds.insert(label.clone(), start.elapsed().as_secs_f64());
        match marched {
            Ok(history) => {
                if let Some(f) = &history.failure {
                    record.failures.insert(label.clone(), f.clone());
                }
                runs.push(Marched { variant: v.clone(), label, history });
            }
            Err(e) => {
                record.failures.insert(label, e.to_string());
            }
        }
    }

    let mut errors = Vec::new();
    let mut profiles = Vec::new();
    let mut steps = Vec::new();
    for m in &runs {
        for r in &m.history.records {
            record.errors.insert(format!("{}-t{:.2}", m.label, r.t), r.error);
            errors.push(ErrorRow {
                variant: &m.label,
                step: r.step,
                t: r.t,
                relative_error: r.error,
                mean_std: r.mean_std,
                nlml: r.nlml,
            });
            for i in 0..r.mean.len() {
                profiles.push(ProfileRow {
                    variant: &m.label,
                    step: r.step,
                    t: r.t,
                    x: m.history.test_x[i],
                    exact: r.exact[i],
                    mean: r.mean[i],
                    std: r.std[i],
                });
            }
        }
        if let Some(last) = m.history.records.last() {
            record.nlml.insert(m.label.clone(), last.nlml);
            record.hyperparameters.insert(m.label.clone(), last.theta.to_vec());
        }
        steps.extend(m.history.steps.iter().map(|s| StepRow {
            variant: &m.label,
            step: s.step,
            nlml: s.nlml,
            evaluations: s.evaluations,
            min_added_variance: s.min_added_variance,
        }));
    }

    let find = |kernel: KernelFamily, depth: Option<usize>, n_train: usize, noisy: bool| {
        runs.iter().find(|m| {
            let v = &m.variant;
            v.kernel == kernel && v.depth == depth && v.n_train == n_train && v.noisy == noisy
        })
    };
    let error_at = |m: &Marched, step: usize| m.history.record_at(step).map(|r| r.error);
    let last = b.steps;
    let late: Vec<usize> = b.record_steps.iter().copied().filter(|&s| 4 * s >= 3 * last).collect();

    let deep = find(KernelFamily::NngpErf, Some(3), 101, false);
    let shallow = find(KernelFamily::NngpErf, Some(1), 31, false);
    let gp = find(KernelFamily::ArcSin, None, 31, false);
    let ordered = (|| Some((error_at(deep?, last)?, error_at(shallow?, last)?, error_at(gp?, last)?)))();
    record.checks.push(match ordered {
        Some((d, s, g)) => Check::new(
            "clean-nngp-beats-gp",
            d < s && s < g && d < CLEAN_ERROR_LIMIT,
            format!("t={:.2}: erf L3 N101 {d:.3e} < erf L1 N31 {s:.3e} < arcsin N31 {g:.3e}", b.dt * last as f64),
        ),
        None => Check::skipped("clean-nngp-beats-gp", "needs the three noise-free variants"),
    });

    let noisy_gp: Vec<&Marched> = runs.iter().filter(|m| m.variant.noisy && !m.variant.kernel.is_nngp()).collect();
    let noisy_nn: Vec<&Marched> = runs.iter().filter(|m| m.variant.noisy && m.variant.kernel.is_nngp()).collect();
    let ratios: Option<Vec<(usize, f64)>> = late
        .iter()
        .map(|&s| {
            let g = noisy_gp.iter().filter_map(|m| error_at(m, s)).fold(f64::INFINITY, f64::min);
            let n = noisy_nn.iter().filter_map(|m| error_at(m, s)).fold(f64::INFINITY, f64::min);
            (g.is_finite() && n.is_finite()).then_some((s, g / n))
        })
        .collect();
    record.checks.push(match ratios {
        Some(r) if !r.is_empty() => Check::new(
            "noisy-gp-error-ratio",
            r.iter().all(|(_, q)| *q >= NOISY_RATIO),
            r.iter().map(|(s, q)| format!("t={:.2}: {q:.2}", b.dt * *s as f64)).collect::<Vec<_>>().join(", "),
        ),
        _ => Check::skipped("noisy-gp-error-ratio", "needs noisy GP and NNGP runs at late times"),
    });

    let one = find(KernelFamily::NngpErf, Some(1), 101, true);
    let three = find(KernelFamily::NngpErf, Some(3), 101, true);
    let pairs: Option<Vec<(usize, f64, f64)>> = (|| {
        let (one, three) = (one?, three?);
        late.iter().map(|&s| Some((s, error_at(one, s)?, error_at(three, s)?))).collect()
    })();
    record.checks.push(match pairs {
        Some(p) if !p.is_empty() => Check::new(
            "noisy-shallow-beats-deep",
            p.iter().all(|(_, a, c)| a < c),
            p.iter()
                .map(|(s, a, c)| format!("t={:.2}: L1 {a:.3e} vs L3 {c:.3e}", b.dt * *s as f64))
                .collect::<Vec<_>>()
                .join(", "),
        ),
        _ => Check::skipped("noisy-shallow-beats-deep", "needs noisy erf L1 and L3 with N=101"),
    });

    let worst = runs.iter().map(|m| m.history.min_added_variance()).fold(f64::INFINITY, f64::min);
    record.errors.insert("min-added-variance".into(), worst);
    record.checks.push(if runs.is_empty() {
        Check::skipped("propagated-variance-nonnegative", "no runs")
    } else {
        Check::new(
            "propagated-variance-nonnegative",
            worst >= -PSD_TOLERANCE,
            format!("smallest added variance over all steps {worst:.3e}"),
        )
    });

    let widened: Vec<(String, f64, f64)> = runs
        .iter()
        .filter(|m| m.variant.noisy)
        .filter_map(|m| {
            let v = &m.variant;
            let clean = find(v.kernel, v.depth, v.n_train, false)?;
            let s = |h: &Marched| h.history.record_at(last).map(|r| r.mean_std);
            Some((m.label.clone(), s(m)?, s(clean)?))
        })
        .collect();
    record.checks.push(if widened.is_empty() {
        Check::skipped("noise-widens-band", "no noisy run with a clean counterpart")
    } else {
        Check::new(
            "noise-widens-band",
            widened.iter().all(|(_, n, c)| n > c),
            widened.iter().map(|(l, n, c)| format!("{l}: {n:.3e} vs {c:.3e}")).collect::<Vec<_>>().join(", "),
        )
    });

    Ok(vec![
        Table::from_rows("burgers_errors.csv", &errors)?,
        Table::from_rows("burgers_profiles.csv", &profiles)?,
        Table::from_rows("burgers_steps.csv", &steps)?,
    ])
}
