use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest noise variance ever handed to a covariance matrix.
pub const NOISE_VARIANCE_FLOOR: f64 = 1e-12;

/// Covariance families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelFamily {
    SquaredExponential,
    Matern32,
    Matern52,
    /// Single hidden layer erf network without output layer.
    #[serde(rename = "arcsin")]
    ArcSin,
    NngpErf,
    NngpRelu,
}

impl KernelFamily {
    pub fn is_nngp(self) -> bool {
        matches!(self, KernelFamily::NngpErf | KernelFamily::NngpRelu)
    }

    pub fn is_stationary(self) -> bool {
        matches!(
            self,
            KernelFamily::SquaredExponential | KernelFamily::Matern32 | KernelFamily::Matern52
        )
    }

    /// Whether the family uses the base dot-product kernel `xᵀΛx′ + σ²_b0`.
    pub fn uses_base_kernel(self) -> bool {
        self.is_nngp() || self == KernelFamily::ArcSin
    }

    pub fn name(self) -> &'static str {
        match self {
            KernelFamily::SquaredExponential => "se",
            KernelFamily::Matern32 => "matern32",
            KernelFamily::Matern52 => "matern52",
            KernelFamily::ArcSin => "arcsin",
            KernelFamily::NngpErf => "nngp-erf",
            KernelFamily::NngpRelu => "nngp-relu",
        }
    }
}

impl std::str::FromStr for KernelFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "se" | "squared-exponential" => Ok(KernelFamily::SquaredExponential),
            "matern32" => Ok(KernelFamily::Matern32),
            "matern52" | "matern" => Ok(KernelFamily::Matern52),
            "arcsin" => Ok(KernelFamily::ArcSin),
            "nngp-erf" | "erf" => Ok(KernelFamily::NngpErf),
            "nngp-relu" | "relu" => Ok(KernelFamily::NngpRelu),
            other => Err(Error::Config(format!("unknown kernel family `{other}`"))),
        }
    }
}

/// Which covariance function, and its fixed structure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub family: KernelFamily,
    /// Number of hidden layers; present exactly for the NNGP families.
    pub depth: Option<usize>,
    pub input_dim: usize,
    /// Per-dimension length-scales for the stationary families.
    #[serde(default)]
    pub ard: bool,
}

impl KernelSpec {
    pub fn nngp_erf(input_dim: usize, depth: usize) -> Self {
        Self::new(KernelFamily::NngpErf, input_dim, Some(depth))
    }

    pub fn nngp_relu(input_dim: usize, depth: usize) -> Self {
        Self::new(KernelFamily::NngpRelu, input_dim, Some(depth))
    }

    pub fn arcsin(input_dim: usize) -> Self {
        Self::new(KernelFamily::ArcSin, input_dim, None)
    }

    pub fn squared_exponential(input_dim: usize) -> Self {
        Self::new(KernelFamily::SquaredExponential, input_dim, None)
    }

    pub fn matern52(input_dim: usize) -> Self {
        Self::new(KernelFamily::Matern52, input_dim, None)
    }

    pub fn matern32(input_dim: usize) -> Self {
        Self::new(KernelFamily::Matern32, input_dim, None)
    }

    fn new(family: KernelFamily, input_dim: usize, depth: Option<usize>) -> Self {
        KernelSpec {
            family,
            depth,
            input_dim,
            ard: false,
        }
    }

    pub fn with_ard(mut self, ard: bool) -> Self {
        self.ard = ard;
        self
    }

    /// Number of hidden layers (zero for non-NNGP families).
    pub fn layers(&self) -> usize {
        self.depth.unwrap_or(0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(Error::Config("input dimension must be at least 1".into()));
        }
        match (self.family.is_nngp(), self.depth) {
            (true, Some(l)) if l >= 1 => {}
            (true, _) => {
                return Err(Error::Config(format!(
                    "{} needs a depth of at least one layer",
                    self.family.name()
                )))
            }
            (false, Some(_)) => {
                return Err(Error::Config(format!(
                    "{} does not take a depth",
                    self.family.name()
                )))
            }
            (false, None) => {}
        }
        if self.ard && !self.family.is_stationary() {
            return Err(Error::Config(format!(
                "ARD length-scales only apply to stationary kernels, not {}",
                self.family.name()
            )));
        }
        Ok(())
    }

    /// Number of kernel hyperparameters, noise excluded.
    pub fn kernel_param_count(&self) -> usize {
        match self.family {
            f if f.is_nngp() => self.input_dim + 1 + 2 * self.layers(),
            KernelFamily::ArcSin => self.input_dim + 1,
            _ => self.length_scale_count() + 1,
        }
    }

    fn length_scale_count(&self) -> usize {
        if self.ard {
            self.input_dim
        } else {
            1
        }
    }
}

/// Kernel hyperparameters plus observation-noise variances, all stored as
/// natural logarithms of variances (length-scales for the stationary
/// families).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    /// Diagonal of Λ, one entry per input dimension.
    pub log_weight_var_input: Vec<f64>,
    pub log_bias_var_input: f64,
    /// One weight variance per hidden layer.
    pub log_weight_var_layer: Vec<f64>,
    /// One bias variance per hidden layer.
    pub log_bias_var_layer: Vec<f64>,
    /// One entry per observation block that carries noise.
    pub log_noise_vars: Vec<f64>,
    /// Stationary families: log length-scale(s) followed by log signal variance.
    pub aux: Vec<f64>,
}

impl HyperParams {
    /// All variances (and length-scales) equal to one.
    pub fn unit(spec: &KernelSpec, noise_blocks: usize) -> Self {
        Self::from_vec(spec, noise_blocks, &vec![0.0; Self::flat_len(spec, noise_blocks)])
            .expect("length is consistent by construction")
    }

    /// Every weight variance set to `weight_var` and every bias variance to
    /// `bias_var`; stationary parameters and noise stay at one.
    pub fn uniform(spec: &KernelSpec, noise_blocks: usize, weight_var: f64, bias_var: f64) -> Self {
        let mut theta = Self::unit(spec, noise_blocks);
        if spec.family.uses_base_kernel() {
            theta.log_weight_var_input.fill(weight_var.ln());
            theta.log_bias_var_input = bias_var.ln();
        }
        theta.log_weight_var_layer.fill(weight_var.ln());
        theta.log_bias_var_layer.fill(bias_var.ln());
        theta
    }

    /// Length of the flat parameter vector.
    pub fn flat_len(spec: &KernelSpec, noise_blocks: usize) -> usize {
        spec.kernel_param_count() + noise_blocks
    }

    pub fn len(&self) -> usize {
        self.kernel_len() + self.log_noise_vars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn kernel_len(&self) -> usize {
        let base = if self.log_weight_var_input.is_empty() {
            0
        } else {
            self.log_weight_var_input.len() + 1
        };
        base + self.log_weight_var_layer.len() + self.log_bias_var_layer.len() + self.aux.len()
    }

    /// Flattens to `[Λ.., σ²_b0, σ²_w,1..L, σ²_b,1..L, aux.., noise..]` (logs);
    /// families without a base kernel skip the first two groups.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len());
        if !self.log_weight_var_input.is_empty() {
            out.extend_from_slice(&self.log_weight_var_input);
            out.push(self.log_bias_var_input);
        }
        out.extend_from_slice(&self.log_weight_var_layer);
        out.extend_from_slice(&self.log_bias_var_layer);
        out.extend_from_slice(&self.aux);
        out.extend_from_slice(&self.log_noise_vars);
        out
    }

    pub fn from_vec(spec: &KernelSpec, noise_blocks: usize, values: &[f64]) -> Result<Self> {
        let expected = Self::flat_len(spec, noise_blocks);
        if values.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                got: values.len(),
            });
        }
        let mut rest = values;
        let mut take = |n: usize| {
            let (head, tail) = rest.split_at(n);
            rest = tail;
            head.to_vec()
        };
        let d = spec.input_dim;
        let layers = spec.layers();
        let (log_weight_var_input, log_bias_var_input) = if spec.family.uses_base_kernel() {
            let w = take(d);
            let b = take(1)[0];
            (w, b)
        } else {
            (Vec::new(), 0.0)
        };
        let log_weight_var_layer = take(layers);
        let log_bias_var_layer = take(layers);
        let aux = if spec.family.is_stationary() {
            take(spec.length_scale_count() + 1)
        } else {
            Vec::new()
        };
        let log_noise_vars = take(noise_blocks);
        Ok(HyperParams {
            log_weight_var_input,
            log_bias_var_input,
            log_weight_var_layer,
            log_bias_var_layer,
            log_noise_vars,
            aux,
        })
    }

    /// Checks the shape against `spec` and that every exponentiated value is
    /// positive and finite.
    pub fn validate(&self, spec: &KernelSpec) -> Result<()> {
        spec.validate()?;
        let reparsed = Self::from_vec(spec, self.log_noise_vars.len(), &self.to_vec());
        match reparsed {
            Ok(ref p) if p == self => {}
            _ => {
                return Err(Error::Config(format!(
                    "hyperparameter layout does not match {} kernel",
                    spec.family.name()
                )))
            }
        }
        if let Some(bad) = self.to_vec().iter().find(|v| {
            let e = v.exp();
            !(e.is_finite() && e > 0.0)
        }) {
            return Err(Error::Domain(format!("log hyperparameter {bad} is not representable")));
        }
        Ok(())
    }

    /// Noise variance of block `index`, floored at [`NOISE_VARIANCE_FLOOR`].
    pub fn noise_var(&self, index: usize) -> Result<f64> {
        self.log_noise_vars
            .get(index)
            .map(|v| v.exp().max(NOISE_VARIANCE_FLOOR))
            .ok_or_else(|| {
                Error::Input(format!(
                    "noise index {index} out of range ({} noise variances)",
                    self.log_noise_vars.len()
                ))
            })
    }

    /// Natural-scale kernel parameters.
    pub fn variances(&self) -> Variances {
        let (length_scales, signal_var) = match self.aux.split_last() {
            Some((s2, ls)) => (ls.iter().map(|v| v.exp()).collect(), s2.exp()),
            None => (Vec::new(), 1.0),
        };
        Variances {
            input_weight: self.log_weight_var_input.iter().map(|v| v.exp()).collect(),
            input_bias: if self.log_weight_var_input.is_empty() {
                0.0
            } else {
                self.log_bias_var_input.exp()
            },
            layer_weight: self.log_weight_var_layer.iter().map(|v| v.exp()).collect(),
            layer_bias: self.log_bias_var_layer.iter().map(|v| v.exp()).collect(),
            length_scales,
            signal_var,
        }
    }
}

/// Natural-scale kernel parameters, resolved once per hyperparameter vector.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Variances {
    pub input_weight: Vec<f64>,
    pub input_bias: f64,
    pub layer_weight: Vec<f64>,
    pub layer_bias: Vec<f64>,
    pub length_scales: Vec<f64>,
    pub signal_var: f64,
}

impl Variances {
    /// Length-scale of coordinate `a` (shared when not ARD).
    pub fn length_scale(&self, a: usize) -> f64 {
        if self.length_scales.len() == 1 {
            self.length_scales[0]
        } else {
            self.length_scales[a]
        }
    }
}
