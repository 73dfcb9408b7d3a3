//! Experiment configuration: defaults, the reference preset, TOML files and
//! command-line overrides.

use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use nngp_core::gp::TrainOptions;
use nngp_core::pde::VISCOSITY;
use nngp_core::{KernelFamily, KernelSpec};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    ValidateKernels,
    ApproxStep,
    ApproxHartmann,
    Poisson,
    Burgers,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::ValidateKernels => "validate-kernels",
            Experiment::ApproxStep => "approx-step",
            Experiment::ApproxHartmann => "approx-hartmann",
            Experiment::Poisson => "poisson",
            Experiment::Burgers => "burgers",
        }
    }
}

/// Hyperparameter training shared by every experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingConfig {
    pub restarts: usize,
    /// Objective evaluations per restart.
    pub max_evals: usize,
    /// Finite-difference step in log space.
    pub fd_step: f64,
    /// Box of the Halton initializations in log space.
    pub init_range: [f64; 2],
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            restarts: 10,
            max_evals: 200,
            fd_step: 1e-4,
            init_range: [-2.0, 2.0],
        }
    }
}

impl TrainingConfig {
    pub fn options(&self) -> TrainOptions {
        TrainOptions {
            restarts: self.restarts,
            max_evals: self.max_evals,
            fd_step: self.fd_step,
            init_range: (self.init_range[0], self.init_range[1]),
            ..TrainOptions::default()
        }
    }

    fn validate(&self) -> Result<()> {
        ensure!(self.restarts >= 1, "training.restarts must be at least 1");
        ensure!(self.max_evals >= 1, "training.max_evals must be at least 1");
        ensure!(self.fd_step > 0.0 && self.fd_step.is_finite(), "training.fd_step must be positive");
        ensure!(
            self.init_range[0] < self.init_range[1] && self.init_range.iter().all(|v| v.is_finite()),
            "training.init_range must be an increasing pair"
        );
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ValidateConfig {
    /// Angles in `[0, π]` between the two unit inputs.
    pub theta_points: usize,
    pub max_depth: usize,
    pub weight_var: f64,
    pub bias_var: f64,
    /// Quadrature nodes per axis.
    pub nodes: usize,
    pub tolerance: f64,
}

impl Default for ValidateConfig {
    fn default() -> Self {
        ValidateConfig {
            theta_points: 100,
            max_depth: 4,
            weight_var: 1.6,
            bias_var: 0.1,
            nodes: 64,
            tolerance: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StepConfig {
    pub n_train: usize,
    pub n_test: usize,
    /// NNGP depths compared for both nonlinearities.
    pub depths: Vec<usize>,
    /// Test points with `|x|` at most this far from the jump are left out of
    /// the coverage count.
    pub jump_margin: f64,
}

impl Default for StepConfig {
    fn default() -> Self {
        StepConfig {
            n_train: 10,
            n_test: 100,
            depths: vec![1, 2, 3],
            jump_margin: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HartmannConfig {
    pub sizes: Vec<usize>,
    pub train_fraction: f64,
    pub depth: usize,
    /// Replaces the shared training settings for data sets of at least
    /// `large_size` points.
    pub large_size: Option<usize>,
    pub large_training: Option<TrainingConfig>,
}

impl Default for HartmannConfig {
    fn default() -> Self {
        HartmannConfig {
            sizes: vec![100, 200, 500, 1000],
            train_fraction: 0.7,
            depth: 1,
            large_size: Some(1000),
            large_training: Some(TrainingConfig {
                restarts: 1,
                ..TrainingConfig::default()
            }),
        }
    }
}

impl HartmannConfig {
    pub fn training_for(&self, n: usize, shared: &TrainingConfig) -> TrainingConfig {
        match (self.large_size, &self.large_training) {
            (Some(limit), Some(t)) if n >= limit => t.clone(),
            _ => shared.clone(),
        }
    }
}

/// One `(N_u, N_f)` training setup.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoissonSetup {
    pub n_boundary: usize,
    pub n_interior: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PoissonConfig {
    /// Setup for the first fabricated solution.
    pub s1_setup: PoissonSetup,
    /// Setups for the second fabricated solution, coarse to fine.
    pub s2_setups: Vec<PoissonSetup>,
    pub nngp_depth: usize,
    /// NNGP kernels share one input weight variance across coordinates.
    pub shared_input_weight: bool,
    /// Cut-line errors the S2 runs are compared with, in the order NNGP then
    /// GP for each setup.
    pub cut_targets: Vec<f64>,
}

impl Default for PoissonConfig {
    fn default() -> Self {
        PoissonConfig {
            s1_setup: PoissonSetup { n_boundary: 24, n_interior: 25 },
            s2_setups: vec![
                PoissonSetup { n_boundary: 32, n_interior: 50 },
                PoissonSetup { n_boundary: 40, n_interior: 80 },
            ],
            nngp_depth: 1,
            shared_input_weight: true,
            cut_targets: vec![0.049, 0.029, 0.022, 0.0081],
        }
    }
}

/// One time-marching run of the Burgers comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BurgersVariant {
    pub kernel: KernelFamily,
    #[serde(default)]
    pub depth: Option<usize>,
    pub n_train: usize,
    pub noisy: bool,
}

impl BurgersVariant {
    pub fn spec(&self) -> KernelSpec {
        spec_for(self.kernel, self.depth, 1)
    }

    pub fn label(&self) -> String {
        format!(
            "{}-n{}-{}",
            variant_label(self.kernel, self.depth),
            self.n_train,
            if self.noisy { "noisy" } else { "clean" }
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BurgersConfig {
    pub dt: f64,
    pub nu: f64,
    pub n_initial: usize,
    pub steps: usize,
    pub noise_std: f64,
    pub test_points: usize,
    pub record_steps: Vec<usize>,
    pub resample: bool,
    /// Restarts and evaluation cap after the first step, which uses the
    /// shared training settings.
    pub restarts_later: usize,
    pub max_evals_later: usize,
    pub variants: Vec<BurgersVariant>,
}

impl Default for BurgersConfig {
    fn default() -> Self {
        let v = |kernel, depth, n_train, noisy| BurgersVariant { kernel, depth, n_train, noisy };
        BurgersConfig {
            dt: 0.01,
            nu: VISCOSITY,
            n_initial: 24,
            steps: 100,
            noise_std: 0.15,
            test_points: 400,
            record_steps: vec![25, 50, 75, 100],
            resample: false,
            restarts_later: 1,
            max_evals_later: 20,
            variants: vec![
                v(KernelFamily::ArcSin, None, 31, false),
                v(KernelFamily::NngpErf, Some(1), 31, false),
                v(KernelFamily::NngpErf, Some(3), 101, false),
                v(KernelFamily::ArcSin, None, 31, true),
                v(KernelFamily::NngpErf, Some(1), 31, true),
                v(KernelFamily::NngpErf, Some(1), 101, true),
                v(KernelFamily::NngpErf, Some(3), 101, true),
            ],
        }
    }
}

/// Everything a command needs; every field has a default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    /// When present, must name the command being run.
    pub experiment: Option<Experiment>,
    pub seed: u64,
    pub out: PathBuf,
    /// Restricts the compared variants to one family.
    pub kernel: Option<KernelFamily>,
    /// Restricts NNGP variants to one depth.
    pub depth: Option<usize>,
    pub training: TrainingConfig,
    pub validate_kernels: ValidateConfig,
    pub approx_step: StepConfig,
    pub approx_hartmann: HartmannConfig,
    pub poisson: PoissonConfig,
    pub burgers: BurgersConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            experiment: None,
            seed: 0,
            out: PathBuf::from("results"),
            kernel: None,
            depth: None,
            training: TrainingConfig::default(),
            validate_kernels: ValidateConfig::default(),
            approx_step: StepConfig::default(),
            approx_hartmann: HartmannConfig::default(),
            poisson: PoissonConfig::default(),
            burgers: BurgersConfig::default(),
        }
    }
}

/// Named settings bundles.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    /// The reference settings: Δt = 0.01, N⁰ = 24, Nⁿ ∈ {31, 101},
    /// 441 Poisson and 400 Burgers test points, 10 restarts of at most 200
    /// evaluations (also at every Burgers step), FD step 1e-4.
    Paper,
}

impl std::str::FromStr for Preset {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper" => Ok(Preset::Paper),
            other => bail!("unknown preset `{other}` (available: paper)"),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).context("invalid configuration")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_toml(&text).with_context(|| format!("in {}", path.display()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).context("serializing configuration")
    }

    pub fn apply_preset(&mut self, preset: Preset) {
        match preset {
            Preset::Paper => {
                self.training = TrainingConfig::default();
                self.approx_hartmann.large_training = None;
                let b = &mut self.burgers;
                b.dt = 0.01;
                b.nu = VISCOSITY;
                b.n_initial = 24;
                b.steps = 100;
                b.noise_std = 0.15;
                b.test_points = 400;
                b.restarts_later = 1;
                b.max_evals_later = 200;
                for v in &mut b.variants {
                    if v.n_train != 31 && v.n_train != 101 {
                        v.n_train = 101;
                    }
                }
                self.approx_step.n_train = 10;
                self.approx_step.n_test = 100;
                self.approx_hartmann.sizes = vec![100, 200, 500, 1000];
                self.approx_hartmann.train_fraction = 0.7;
            }
        }
    }

    /// Checks every field; called before any computation.
    pub fn validate(&self, command: Experiment) -> Result<()> {
        if let Some(e) = self.experiment {
            ensure!(
                e == command,
                "configuration is for `{}` but the command is `{}`",
                e.name(),
                command.name()
            );
        }
        if let Some(d) = self.depth {
            ensure!(d >= 1, "depth must be at least 1");
        }
        if let Some(k) = self.kernel {
            ensure!(
                !(self.depth.is_some() && !k.is_nngp()),
                "--depth only applies to NNGP kernels, not {}",
                k.name()
            );
        }
        self.training.validate()?;

        let v = &self.validate_kernels;
        ensure!(v.theta_points >= 2, "validate_kernels.theta_points must be at least 2");
        ensure!(v.nodes >= 2, "validate_kernels.nodes must be at least 2");
        ensure!(v.weight_var > 0.0 && v.bias_var >= 0.0, "validate_kernels variances must be positive");
        ensure!(v.tolerance > 0.0, "validate_kernels.tolerance must be positive");

        let s = &self.approx_step;
        ensure!(s.n_train >= 2 && s.n_test >= 2, "approx_step needs at least two training and test points");
        ensure!(s.depths.iter().all(|&d| d >= 1), "approx_step.depths must be at least 1");
        ensure!(s.jump_margin >= 0.0, "approx_step.jump_margin must be non-negative");

        let h = &self.approx_hartmann;
        ensure!(!h.sizes.is_empty(), "approx_hartmann.sizes must not be empty");
        ensure!(h.train_fraction > 0.0 && h.train_fraction < 1.0, "approx_hartmann.train_fraction must lie in (0, 1)");
        ensure!(h.depth >= 1, "approx_hartmann.depth must be at least 1");
        for &n in &h.sizes {
            let n_train = hartmann_train_count(n, h.train_fraction);
            ensure!(n_train >= 2 && n_train < n, "approx_hartmann size {n} leaves no training or test points");
        }
        if let Some(t) = &h.large_training {
            t.validate()?;
        }

        let p = &self.poisson;
        for setup in std::iter::once(&p.s1_setup).chain(&p.s2_setups) {
            ensure!(setup.n_boundary >= 4, "Poisson setups need at least 4 boundary points");
            ensure!(setup.n_interior >= 1, "Poisson setups need interior points");
        }
        ensure!(p.nngp_depth >= 1, "poisson.nngp_depth must be at least 1");
        ensure!(p.cut_targets.iter().all(|t| *t > 0.0), "poisson.cut_targets must be positive");

        let b = &self.burgers;
        ensure!(b.dt > 0.0 && b.nu >= 0.0, "burgers.dt must be positive and burgers.nu non-negative");
        ensure!(b.noise_std >= 0.0, "burgers.noise_std must be non-negative");
        ensure!(b.restarts_later >= 1 && b.max_evals_later >= 1, "burgers later-step training needs a budget");
        ensure!(!b.variants.is_empty(), "burgers.variants must not be empty");
        for v in &b.variants {
            v.spec().validate().with_context(|| format!("burgers variant {}", v.label()))?;
            ensure!(v.n_train >= 1, "burgers variant {} needs training points", v.label());
        }
        self.burgers_run(&b.variants[0])?.validate()?;
        Ok(())
    }

    pub fn burgers_run(&self, v: &BurgersVariant) -> Result<nngp_core::pde::BurgersRun> {
        let b = &self.burgers;
        Ok(nngp_core::pde::BurgersRun {
            dt: b.dt,
            nu: b.nu,
            n_initial: b.n_initial,
            n_train: v.n_train,
            noise_std0: if v.noisy { b.noise_std } else { 0.0 },
            steps: b.steps,
            seed: self.seed,
            resample: b.resample,
            test_points: b.test_points,
            record_steps: b.record_steps.clone(),
            restarts_first: self.training.restarts,
            restarts_later: b.restarts_later,
            max_evals_first: self.training.max_evals,
            max_evals_later: b.max_evals_later,
        })
    }

    /// Whether the `--kernel`/`--depth` filter admits this variant.
    pub fn admits(&self, family: KernelFamily, depth: Option<usize>) -> bool {
        self.kernel.is_none_or(|k| k == family) && self.depth.is_none_or(|d| depth == Some(d))
    }
}

pub fn hartmann_train_count(n: usize, fraction: f64) -> usize {
    (n as f64 * fraction).round() as usize
}

pub fn spec_for(family: KernelFamily, depth: Option<usize>, input_dim: usize) -> KernelSpec {
    KernelSpec {
        family,
        depth: if family.is_nngp() { depth } else { None },
        input_dim,
        ard: false,
    }
}

/// `gp-se`, `nngp-erf-l2` and so on.
pub fn variant_label(family: KernelFamily, depth: Option<usize>) -> String {
    match (family.is_nngp(), depth) {
        (true, Some(l)) => format!("{}-l{l}", family.name()),
        _ => format!("gp-{}", family.name()),
    }
}
