//! Nonlinear conjugate gradients (Polak–Ribière) with a Wolfe–Powell line
//! search built from cubic and quadratic interpolation/extrapolation, in the
//! style of Rasmussen's `minimize`.

/// Stopping and line-search parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MinimizeOptions {
    /// Budget of objective evaluations (each returns value and gradient).
    pub max_evals: usize,
    /// Sufficient-decrease constant.
    pub rho: f64,
    /// Curvature constant (strong Wolfe).
    pub sig: f64,
    /// Stop once the max-norm of the gradient drops below this.
    pub grad_tol: f64,
    /// Stop once an accepted step improves the objective by less than
    /// `ftol · max(1, |f|)`.
    pub ftol: f64,
}

impl Default for MinimizeOptions {
    fn default() -> Self {
        MinimizeOptions {
            max_evals: 200,
            rho: 1e-4,
            sig: 0.1,
            grad_tol: 1e-6,
            ftol: 1e-10,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MinimizeResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub evals: usize,
    pub iterations: usize,
    /// Objective after every accepted line search, starting value first.
    pub history: Vec<f64>,
}

const INT: f64 = 0.1;
const EXT: f64 = 3.0;
const MAX_PER_SEARCH: usize = 20;
const RATIO: f64 = 100.0;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(x: &[f64], t: f64, s: &[f64]) -> Vec<f64> {
    x.iter().zip(s).map(|(a, b)| a + t * b).collect()
}

fn is_valid(f: f64, g: &[f64]) -> bool {
    f.is_finite() && g.iter().all(|v| v.is_finite())
}

/// Minimizes `objective` starting from `x0`.
///
/// The objective returns the value and gradient at a point. Evaluations whose
/// value or gradient is not finite are treated as failures and the trial step
/// is bisected.
pub fn minimize<F>(mut objective: F, x0: &[f64], opts: &MinimizeOptions) -> MinimizeResult
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let (rho, sig) = (opts.rho, opts.sig);
    let max_evals = opts.max_evals.max(1);
    let mut evals = 0usize;
    let mut iterations = 0usize;

    let mut x = x0.to_vec();
    let (mut f0, mut df0) = objective(&x);
    evals += 1;
    if !is_valid(f0, &df0) {
        return MinimizeResult {
            x,
            f: f0,
            evals,
            iterations,
            history: vec![f0],
        };
    }
    let mut history = vec![f0];
    let mut s: Vec<f64> = df0.iter().map(|g| -g).collect();
    let mut d0 = -dot(&s, &s);
    let mut x3 = 1.0 / (1.0 - d0);
    let mut ls_failed = false;

    while evals < max_evals {
        if df0.iter().all(|g| g.abs() < opts.grad_tol) {
            break;
        }
        iterations += 1;
        let (mut best_x, mut best_f, mut best_df) = (x.clone(), f0, df0.clone());
        let mut budget = MAX_PER_SEARCH.min(max_evals - evals);

        let (mut x2, mut f2, mut d2);
        let (mut f3, mut df3, mut d3);
        let (mut x4, mut f4, mut d4) = (0.0, 0.0, 0.0);
        let mut have_upper = false;

        // Extrapolation.
        loop {
            x2 = 0.0;
            f2 = f0;
            d2 = d0;
            f3 = f0;
            df3 = df0.clone();
            let mut success = false;
            while !success && budget > 0 {
                budget -= 1;
                evals += 1;
                let (f, g) = objective(&axpy(&x, x3, &s));
                if is_valid(f, &g) {
                    f3 = f;
                    df3 = g;
                    success = true;
                } else {
                    x3 = 0.5 * (x2 + x3);
                }
            }
            if f3 < best_f {
                best_x = axpy(&x, x3, &s);
                best_f = f3;
                best_df = df3.clone();
            }
            d3 = dot(&df3, &s);
            if d3 > sig * d0 || f3 > f0 + x3 * rho * d0 || budget == 0 {
                break;
            }
            let (x1, f1, d1) = (x2, f2, d2);
            x2 = x3;
            f2 = f3;
            d2 = d3;
            let a = 6.0 * (f1 - f2) + 3.0 * (d2 + d1) * (x2 - x1);
            let b = 3.0 * (f2 - f1) - (2.0 * d1 + d2) * (x2 - x1);
            let disc = b * b - a * d1 * (x2 - x1);
            let mut next = if disc >= 0.0 {
                x1 - d1 * (x2 - x1) * (x2 - x1) / (b + disc.sqrt())
            } else {
                f64::NAN
            };
            if !next.is_finite() || next < 0.0 || next > x2 * EXT {
                next = x2 * EXT;
            } else if next < x2 + INT * (x2 - x1) {
                next = x2 + INT * (x2 - x1);
            }
            x3 = next;
        }

        // Interpolation.
        while (d3.abs() > -sig * d0 || f3 > f0 + x3 * rho * d0) && budget > 0 {
            if d3 > 0.0 || f3 > f0 + x3 * rho * d0 {
                x4 = x3;
                f4 = f3;
                d4 = d3;
                have_upper = true;
            } else {
                x2 = x3;
                f2 = f3;
                d2 = d3;
            }
            let mut next = if have_upper && f4 > f0 {
                x2 - (0.5 * d2 * (x4 - x2) * (x4 - x2)) / (f4 - f2 - d2 * (x4 - x2))
            } else {
                let a = 6.0 * (f2 - f4) / (x4 - x2) + 3.0 * (d4 + d2);
                let b = 3.0 * (f4 - f2) - (2.0 * d2 + d4) * (x4 - x2);
                x2 + ((b * b - a * d2 * (x4 - x2) * (x4 - x2)).sqrt() - b) / a
            };
            if !next.is_finite() {
                next = 0.5 * (x2 + x4);
            }
            x3 = next.min(x4 - INT * (x4 - x2)).max(x2 + INT * (x4 - x2));
            let (f, g) = objective(&axpy(&x, x3, &s));
            evals += 1;
            budget -= 1;
            if is_valid(f, &g) {
                f3 = f;
                df3 = g;
            } else {
                // Treat a failed evaluation as an upper bracket.
                f3 = f64::INFINITY;
                df3 = vec![f64::INFINITY; x.len()];
                x4 = x3;
                f4 = f64::INFINITY;
                d4 = f64::INFINITY;
                have_upper = true;
                d3 = f64::INFINITY;
                continue;
            }
            if f3 < best_f {
                best_x = axpy(&x, x3, &s);
                best_f = f3;
                best_df = df3.clone();
            }
            d3 = dot(&df3, &s);
        }

        if d3.abs() < -sig * d0 && f3 < f0 + x3 * rho * d0 {
            // Accept and build the Polak–Ribière direction.
            x = axpy(&x, x3, &s);
            let improvement = f0 - f3;
            f0 = f3;
            history.push(f0);
            let beta = (dot(&df3, &df3) - dot(&df0, &df3)) / dot(&df0, &df0);
            s = s.iter().zip(&df3).map(|(si, g)| beta * si - g).collect();
            df0 = df3;
            let d_prev = d0;
            d0 = dot(&df0, &s);
            if d0 > 0.0 {
                s = df0.iter().map(|g| -g).collect();
                d0 = -dot(&s, &s);
            }
            x3 *= RATIO.min(d_prev / (d0 - f64::MIN_POSITIVE));
            ls_failed = false;
            if improvement <= opts.ftol * f0.abs().max(1.0) {
                break;
            }
        } else {
            // Restore the best point seen and retry along steepest descent.
            x = best_x;
            f0 = best_f;
            df0 = best_df;
            if ls_failed || evals >= max_evals {
                break;
            }
            s = df0.iter().map(|g| -g).collect();
            d0 = -dot(&s, &s);
            x3 = 1.0 / (1.0 - d0);
            ls_failed = true;
        }
    }

    MinimizeResult {
        x,
        f: f0,
        evals,
        iterations,
        history,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_converges_quickly() {
        // f = ½ xᵀAx - bᵀx with A = [[3,1,0],[1,2,0.5],[0,0.5,1]]
        let a = [[3.0, 1.0, 0.0], [1.0, 2.0, 0.5], [0.0, 0.5, 1.0]];
        let b = [1.0, -2.0, 0.5];
        let f = |x: &[f64]| {
            let ax: Vec<f64> = a.iter().map(|row| dot(row, x)).collect();
            let val = 0.5 * dot(x, &ax) - dot(&b, x);
            let g: Vec<f64> = ax.iter().zip(&b).map(|(p, q)| p - q).collect();
            (val, g)
        };
        let res = minimize(f, &[0.0, 0.0, 0.0], &MinimizeOptions::default());
        // Solution of A x = b.
        let expected = [16.0 / 17.0, -31.0 / 17.0, 24.0 / 17.0];
        for (x, e) in res.x.iter().zip(&expected) {
            assert!((x - e).abs() < 1e-6, "{:?}", res.x);
        }
        assert!(res.evals < 50, "used {} evaluations", res.evals);
        assert!(res.history.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn rosenbrock_makes_progress_within_budget() {
        let f = |x: &[f64]| {
            let (a, b) = (x[0], x[1]);
            let val = (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
            let g = vec![-2.0 * (1.0 - a) - 400.0 * a * (b - a * a), 200.0 * (b - a * a)];
            (val, g)
        };
        let opts = MinimizeOptions {
            max_evals: 200,
            ..Default::default()
        };
        let res = minimize(f, &[-1.2, 1.0], &opts);
        assert!(res.evals <= 200 + MAX_PER_SEARCH);
        assert!(res.f < 1e-6, "f = {}", res.f);
    }

    #[test]
    fn failed_regions_are_avoided() {
        // Objective undefined for x > 2; minimum of (x-3)² restricted there is at 2.
        let f = |x: &[f64]| {
            if x[0] > 2.0 {
                (f64::NAN, vec![f64::NAN])
            } else {
                ((x[0] - 3.0).powi(2), vec![2.0 * (x[0] - 3.0)])
            }
        };
        let res = minimize(f, &[0.0], &MinimizeOptions::default());
        assert!(res.f.is_finite());
        assert!(res.x[0] <= 2.0 && res.x[0] > 1.5, "{:?}", res.x);
    }
}
