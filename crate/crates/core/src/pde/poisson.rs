//! `−Δu = f` on the unit square with Dirichlet data, solved as GP regression
//! on a boundary block (`u` observed) and a source block (`−Δu` observed).

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::relative_l2_error;
use crate::error::{Error, Result};
use crate::gp::{train, ConditionedGp, ObservationBlock, Observations, OperatorField, Posterior, QueryBlock, TrainOptions, TrainResult};
use crate::jets::{supports_jets, LinearOp};
use crate::kernels::KernelSpec;
use crate::sampling::{boundary_equispaced, halton, linspace};

/// Manufactured solutions with closed-form sources.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FabricatedSolution {
    /// `sin(πx)(y² + e^{−y})`
    S1,
    /// `sin(πx) cos(2π(y² + x))`
    S2,
}

impl FabricatedSolution {
    pub fn u(self, x: f64, y: f64) -> f64 {
        match self {
            FabricatedSolution::S1 => (PI * x).sin() * (y * y + (-y).exp()),
            FabricatedSolution::S2 => (PI * x).sin() * (2.0 * PI * (y * y + x)).cos(),
        }
    }

    /// `f = −Δu`.
    pub fn source(self, x: f64, y: f64) -> f64 {
        let (s, c) = ((PI * x).sin(), (PI * x).cos());
        let pi2 = PI * PI;
        match self {
            FabricatedSolution::S1 => {
                let e = (-y).exp();
                s * (pi2 * (y * y + e) - 2.0 - e)
            }
            FabricatedSolution::S2 => {
                let phi = 2.0 * PI * (y * y + x);
                let (sp, cp) = (phi.sin(), phi.cos());
                (5.0 * pi2 + 16.0 * pi2 * y * y) * s * cp + 4.0 * pi2 * c * sp + 4.0 * PI * s * sp
            }
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            FabricatedSolution::S1 => "s1",
            FabricatedSolution::S2 => "s2",
        }
    }
}

impl std::str::FromStr for FabricatedSolution {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "s1" | "1" => Ok(FabricatedSolution::S1),
            "s2" | "2" => Ok(FabricatedSolution::S2),
            other => Err(Error::Config(format!("unknown fabricated solution `{other}`"))),
        }
    }
}

/// Observation-noise variances of the boundary and source blocks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PoissonNoise {
    Learned,
    Fixed { boundary: f64, source: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoissonProblem {
    pub solution: FabricatedSolution,
    pub n_boundary: usize,
    pub n_interior: usize,
    pub noise: PoissonNoise,
    /// NNGP kernels: one input weight variance shared by both coordinates.
    /// Separate variances let the likelihood settle on `x`-only fits of the
    /// second solution, whose boundary data do not depend on `y`.
    pub shared_input_weight: bool,
}

impl PoissonProblem {
    pub fn new(solution: FabricatedSolution, n_boundary: usize, n_interior: usize) -> Self {
        PoissonProblem {
            solution,
            n_boundary,
            n_interior,
            noise: PoissonNoise::Learned,
            shared_input_weight: true,
        }
    }

    pub fn with_noise(mut self, noise: PoissonNoise) -> Self {
        self.noise = noise;
        self
    }
}

/// Boundary block (identity, noise 0) followed by the source block (`−Δ`,
/// noise 1). Boundary points are equispaced on the perimeter, source points
/// are the first Halton points.
pub fn poisson_observations(p: &PoissonProblem) -> Result<Observations> {
    if p.n_interior == 0 {
        return Err(Error::Input("Poisson problem needs interior points".into()));
    }
    let xu = boundary_equispaced(p.n_boundary)?.points;
    let xf = halton(p.n_interior, 2)?.points;
    let g = DVector::from_iterator(xu.nrows(), xu.row_iter().map(|r| p.solution.u(r[0], r[1])));
    let f = DVector::from_iterator(xf.nrows(), xf.row_iter().map(|r| p.solution.source(r[0], r[1])));
    Ok(Observations::new(vec![
        ObservationBlock::identity(xu, g, 0),
        ObservationBlock::new(xf, f, 1, OperatorField::Uniform(LinearOp::neg_laplacian(2))),
    ]))
}

/// `n x n` grid on the closed unit square; `x` varies fastest.
pub fn test_grid(n: usize) -> DMatrix<f64> {
    let t = linspace(0.0, 1.0, n);
    let mut out = DMatrix::zeros(n * n, 2);
    for (iy, &y) in t.iter().enumerate() {
        for (ix, &x) in t.iter().enumerate() {
            out[(iy * n + ix, 0)] = x;
            out[(iy * n + ix, 1)] = y;
        }
    }
    out
}

/// `n` points on the diagonal `y = x`.
pub fn cut_line(n: usize) -> DMatrix<f64> {
    let t = linspace(0.0, 1.0, n);
    DMatrix::from_fn(n, 2, |i, _| t[i])
}

/// Posterior along the diagonal `y = x`, parametrized by `s = x = y`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CutLine {
    pub s: Vec<f64>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub exact: Vec<f64>,
}

impl CutLine {
    pub fn mean_std(&self) -> f64 {
        self.std.iter().sum::<f64>() / self.std.len() as f64
    }
}

#[derive(Debug, Clone)]
pub struct PoissonSolution {
    pub grid: Posterior,
    pub grid_exact: Vec<f64>,
    pub grid_error: f64,
    pub cut: CutLine,
    pub cut_error: f64,
    /// Posterior standard deviation at the boundary training points.
    pub boundary_std: Vec<f64>,
    pub train: TrainResult,
}

/// Number of test points per side of the evaluation grid.
pub const GRID_SIDE: usize = 21;
/// Number of points on the evaluation cut line.
pub const CUT_POINTS: usize = 101;

/// Trains the two-block GP and evaluates it on the test grid and cut line.
pub fn poisson_solve(p: &PoissonProblem, spec: &KernelSpec, opts: &TrainOptions) -> Result<PoissonSolution> {
    if !supports_jets(spec.family) || spec.input_dim != 2 {
        return Err(Error::Config(format!(
            "Poisson solver needs a twice-differentiable kernel on 2D inputs, got {} on {}D",
            spec.family.name(),
            spec.input_dim
        )));
    }
    let obs = poisson_observations(p)?;
    let mut opts = opts.clone();
    if let PoissonNoise::Fixed { boundary, source } = p.noise {
        let base = spec.kernel_param_count();
        opts.fixed.push((base, boundary.ln()));
        opts.fixed.push((base + 1, source.ln()));
    }
    if p.shared_input_weight && spec.family.is_nngp() {
        opts.tied.push((0..spec.input_dim).collect());
    }
    let trained = train(&obs, spec, &opts)?;
    let gp = ConditionedGp::new(&obs, spec, &trained.theta)?;

    let grid_pts = test_grid(GRID_SIDE);
    let grid = gp.predict(&QueryBlock::identity(grid_pts.clone()))?;
    let grid_exact: Vec<f64> = grid_pts.row_iter().map(|r| p.solution.u(r[0], r[1])).collect();
    let grid_error = relative_l2_error(grid.mean.as_slice(), &grid_exact)?;

    let cut_pts = cut_line(CUT_POINTS);
    let cut_post = gp.predict(&QueryBlock::identity(cut_pts.clone()))?;
    let cut = CutLine {
        s: cut_pts.column(0).iter().copied().collect(),
        mean: cut_post.mean.iter().copied().collect(),
        std: cut_post.std().iter().copied().collect(),
        exact: cut_pts.row_iter().map(|r| p.solution.u(r[0], r[1])).collect(),
    };
    let cut_error = relative_l2_error(&cut.mean, &cut.exact)?;

    let boundary = gp.predict(&QueryBlock::identity(obs.blocks[0].locations.clone()))?;
    Ok(PoissonSolution {
        grid,
        grid_exact,
        grid_error,
        cut,
        cut_error,
        boundary_std: boundary.std().iter().copied().collect(),
        train: trained,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gp::{posterior, ConditionedGp};
    use crate::kernels::HyperParams;

    fn laplacian_fd(sol: FabricatedSolution, x: f64, y: f64) -> f64 {
        let h = 1e-3;
        let u = |a: f64, b: f64| sol.u(a, b);
        -((u(x + h, y) - 2.0 * u(x, y) + u(x - h, y)) + (u(x, y + h) - 2.0 * u(x, y) + u(x, y - h))) / (h * h)
    }

    #[test]
    fn sources_match_finite_differences() {
        for sol in [FabricatedSolution::S1, FabricatedSolution::S2] {
            for &(x, y) in &[(0.2, 0.3), (0.7, 0.9), (0.5, 0.5), (0.11, 0.83)] {
                let fd = laplacian_fd(sol, x, y);
                let exact = sol.source(x, y);
                assert!((fd - exact).abs() < 1e-4 * exact.abs().max(1.0), "{sol:?} {fd} {exact}");
            }
        }
    }

    #[test]
    fn grid_layout() {
        let g = test_grid(21);
        assert_eq!(g.nrows(), 441);
        assert_eq!((g[(1, 0)], g[(1, 1)]), (0.05, 0.0));
        assert_eq!((g[(21, 0)], g[(21, 1)]), (0.0, 0.05));
    }

    #[test]
    fn zero_data_gives_zero_mean() {
        let spec = KernelSpec::nngp_erf(2, 1);
        let mut obs = poisson_observations(&PoissonProblem::new(FabricatedSolution::S1, 12, 8)).unwrap();
        for b in &mut obs.blocks {
            b.values.fill(0.0);
        }
        let theta = HyperParams::unit(&spec, 2);
        let post = posterior(&obs, &QueryBlock::identity(test_grid(5)), &spec, &theta).unwrap();
        assert!(post.mean.amax() <= 1e-8);
    }

    #[test]
    fn boundary_interpolated_without_noise() {
        let spec = KernelSpec::squared_exponential(2);
        let obs = poisson_observations(&PoissonProblem::new(FabricatedSolution::S1, 12, 8)).unwrap();
        let mut theta = HyperParams::unit(&spec, 2);
        theta.aux[0] = (0.4f64).ln();
        theta.log_noise_vars = vec![-40.0, -40.0];
        let gp = ConditionedGp::new(&obs, &spec, &theta).unwrap();
        let mean = gp.mean(&QueryBlock::identity(obs.blocks[0].locations.clone())).unwrap();
        for (m, g) in mean.iter().zip(obs.blocks[0].values.iter()) {
            assert!((m - g).abs() < 1e-6, "{m} vs {g}");
        }
    }

    #[test]
    fn relu_is_rejected() {
        let spec = KernelSpec::nngp_relu(2, 1);
        let p = PoissonProblem::new(FabricatedSolution::S1, 8, 4);
        assert!(poisson_solve(&p, &spec, &TrainOptions::default()).is_err());
    }
}
