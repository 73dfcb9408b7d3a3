//! Conditional-Gaussian inference over blocks of (possibly operator-valued)
//! observations of one latent process.

mod objective;
pub mod optimize;
mod train;

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, Error, Result};
use crate::jets::{apply_operator_pair, kernel_jet_prepared, point_jet, LinearOp, PointJet};
use crate::kernels::{kernel, HyperParams, KernelSpec, Variances};
use crate::linalg::{cholesky_jittered, rows, symmetrize, JitteredCholesky};

pub use objective::{nlml_grad, nlml_grad_analytic, nlml_grad_fd, supports_analytic_gradient, FD_STEP};
pub use optimize::{minimize, MinimizeOptions, MinimizeResult};
pub use train::{halton_initializations, train, GradientMode, RestartRecord, TrainOptions, TrainResult};

/// Value returned by [`nlml`] when `K_oo` cannot be factorized.
pub const NLML_PENALTY: f64 = 1e10;

const IDENTITY: LinearOp = LinearOp {
    constant: 1.0,
    first: Vec::new(),
    second: Vec::new(),
};

/// Operator applied to the latent process at the points of a block.
#[derive(Debug, Clone, PartialEq)]
pub enum OperatorField {
    Identity,
    Uniform(LinearOp),
    /// One operator per point (e.g. coefficients that depend on location).
    PerPoint(Vec<LinearOp>),
}

impl OperatorField {
    /// Operator at point `i`, or `None` when it is the identity.
    pub fn at(&self, i: usize) -> Option<&LinearOp> {
        let op = match self {
            OperatorField::Identity => return None,
            OperatorField::Uniform(op) => op,
            OperatorField::PerPoint(ops) => &ops[i],
        };
        (!op.is_identity()).then_some(op)
    }

    pub fn is_identity(&self) -> bool {
        match self {
            OperatorField::Identity => true,
            OperatorField::Uniform(op) => op.is_identity(),
            OperatorField::PerPoint(ops) => ops.iter().all(LinearOp::is_identity),
        }
    }

    fn check_len(&self, n: usize) -> Result<()> {
        match self {
            OperatorField::PerPoint(ops) => check_dim(n, ops.len()),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObservationBlock {
    /// One point per row.
    pub locations: DMatrix<f64>,
    pub values: DVector<f64>,
    /// Which entry of `log_noise_vars` applies to this block.
    pub noise_index: usize,
    pub operator: OperatorField,
}

impl ObservationBlock {
    pub fn new(locations: DMatrix<f64>, values: DVector<f64>, noise_index: usize, operator: OperatorField) -> Self {
        ObservationBlock {
            locations,
            values,
            noise_index,
            operator,
        }
    }

    /// Direct observations of the latent process.
    pub fn identity(locations: DMatrix<f64>, values: DVector<f64>, noise_index: usize) -> Self {
        Self::new(locations, values, noise_index, OperatorField::Identity)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Observations {
    pub blocks: Vec<ObservationBlock>,
}

impl Observations {
    pub fn new(blocks: Vec<ObservationBlock>) -> Self {
        Observations { blocks }
    }

    pub fn single(block: ObservationBlock) -> Self {
        Observations { blocks: vec![block] }
    }

    pub fn len(&self) -> usize {
        self.blocks.iter().map(ObservationBlock::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Number of noise variances referenced by the blocks.
    pub fn noise_blocks(&self) -> usize {
        self.blocks.iter().map(|b| b.noise_index + 1).max().unwrap_or(0)
    }

    /// All observed values, block after block.
    pub fn values(&self) -> DVector<f64> {
        let mut out = DVector::zeros(self.len());
        let mut row = 0;
        for b in &self.blocks {
            out.rows_mut(row, b.len()).copy_from(&b.values);
            row += b.len();
        }
        out
    }

    /// Row offset of every block in the stacked system.
    pub fn offsets(&self) -> Vec<usize> {
        let mut offsets = Vec::with_capacity(self.blocks.len());
        let mut row = 0;
        for b in &self.blocks {
            offsets.push(row);
            row += b.len();
        }
        offsets
    }

    /// True when no block carries a differential operator.
    pub fn is_identity_only(&self) -> bool {
        self.blocks.iter().all(|b| b.operator.is_identity())
    }

    pub fn validate(&self, spec: &KernelSpec) -> Result<()> {
        if self.is_empty() {
            return Err(Error::Input("observations contain no points".into()));
        }
        for (k, b) in self.blocks.iter().enumerate() {
            if b.locations.nrows() != b.values.len() {
                return Err(Error::Input(format!(
                    "block {k}: {} locations but {} values",
                    b.locations.nrows(),
                    b.values.len()
                )));
            }
            if !b.is_empty() {
                check_dim(spec.input_dim, b.locations.ncols())?;
            }
            b.operator.check_len(b.len())?;
            if b.values.iter().chain(b.locations.iter()).any(|v| !v.is_finite()) {
                return Err(Error::Input(format!("block {k} contains non-finite data")));
            }
        }
        Ok(())
    }
}

/// Points at which a (possibly operator-transformed) prediction is wanted.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryBlock {
    pub locations: DMatrix<f64>,
    pub operator: OperatorField,
}

impl QueryBlock {
    pub fn identity(locations: DMatrix<f64>) -> Self {
        QueryBlock {
            locations,
            operator: OperatorField::Identity,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Posterior {
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
    pub query_points: DMatrix<f64>,
}

impl Posterior {
    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }

    /// Variances, with small negative round-off clipped to zero.
    pub fn variance(&self) -> DVector<f64> {
        self.covariance.diagonal().map(|v| v.max(0.0))
    }

    pub fn std(&self) -> DVector<f64> {
        self.variance().map(f64::sqrt)
    }
}

struct PointsWithOps<'a> {
    points: Vec<Vec<f64>>,
    ops: &'a OperatorField,
    /// Present when some entry involving these points needs derivatives.
    jets: Option<Vec<PointJet>>,
}

impl<'a> PointsWithOps<'a> {
    fn new(locations: &DMatrix<f64>, ops: &'a OperatorField, with_jets: bool, spec: &KernelSpec, v: &Variances) -> Result<Self> {
        let points = rows(locations);
        let jets = if with_jets {
            Some(points.iter().map(|p| point_jet(p, spec, v)).collect::<Result<Vec<_>>>()?)
        } else {
            None
        };
        Ok(PointsWithOps { points, ops, jets })
    }

    fn entry(&self, i: usize, other: &PointsWithOps, j: usize, spec: &KernelSpec, v: &Variances) -> Result<f64> {
        let (x, xp) = (&self.points[i], &other.points[j]);
        match (self.ops.at(i), other.ops.at(j)) {
            (None, None) => kernel(x, xp, spec, v),
            (l, r) => {
                let (px, pxp) = match (&self.jets, &other.jets) {
                    (Some(a), Some(b)) => (&a[i], &b[j]),
                    _ => unreachable!("jets are prepared whenever an operator is present"),
                };
                let jet = kernel_jet_prepared(x, px, xp, pxp, spec, v)?;
                apply_operator_pair(&jet, l.unwrap_or(&IDENTITY), r.unwrap_or(&IDENTITY))
            }
        }
    }
}

fn cross_block(a: &PointsWithOps, b: &PointsWithOps, spec: &KernelSpec, v: &Variances) -> Result<DMatrix<f64>> {
    let mut out = DMatrix::zeros(a.points.len(), b.points.len());
    for i in 0..a.points.len() {
        for j in 0..b.points.len() {
            out[(i, j)] = a.entry(i, b, j, spec, v)?;
        }
    }
    Ok(out)
}

fn self_block(a: &PointsWithOps, spec: &KernelSpec, v: &Variances) -> Result<DMatrix<f64>> {
    let n = a.points.len();
    let mut out = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let k = a.entry(i, a, j, spec, v)?;
            out[(i, j)] = k;
            out[(j, i)] = k;
        }
    }
    Ok(out)
}

fn prepared_blocks<'a>(obs: &'a Observations, with_jets: bool, spec: &KernelSpec, v: &Variances) -> Result<Vec<PointsWithOps<'a>>> {
    obs.blocks
        .iter()
        .map(|b| PointsWithOps::new(&b.locations, &b.operator, with_jets, spec, v))
        .collect()
}

/// Noise-free joint covariance of all observation blocks.
pub fn prior_covariance(obs: &Observations, spec: &KernelSpec, theta: &HyperParams) -> Result<DMatrix<f64>> {
    obs.validate(spec)?;
    let v = theta.variances();
    let blocks = prepared_blocks(obs, !obs.is_identity_only(), spec, &v)?;
    let offsets = obs.offsets();
    let n = obs.len();
    let mut k = DMatrix::zeros(n, n);
    for (p, bp) in blocks.iter().enumerate() {
        let diag = self_block(bp, spec, &v)?;
        k.view_mut((offsets[p], offsets[p]), (diag.nrows(), diag.ncols()))
            .copy_from(&diag);
        for (q, bq) in blocks.iter().enumerate().skip(p + 1) {
            let off = cross_block(bp, bq, spec, &v)?;
            k.view_mut((offsets[p], offsets[q]), (off.nrows(), off.ncols()))
                .copy_from(&off);
            k.view_mut((offsets[q], offsets[p]), (off.ncols(), off.nrows()))
                .copy_from(&off.transpose());
        }
    }
    Ok(k)
}

/// Adds each block's noise variance to its diagonal.
pub fn add_noise(k: &mut DMatrix<f64>, obs: &Observations, theta: &HyperParams) -> Result<()> {
    for (b, off) in obs.blocks.iter().zip(obs.offsets()) {
        let s2 = theta.noise_var(b.noise_index)?;
        for i in 0..b.len() {
            k[(off + i, off + i)] += s2;
        }
    }
    Ok(())
}

/// `K_oo`: the joint covariance of the observations including noise.
pub fn assemble_blocks(obs: &Observations, spec: &KernelSpec, theta: &HyperParams) -> Result<DMatrix<f64>> {
    let mut k = prior_covariance(obs, spec, theta)?;
    add_noise(&mut k, obs, theta)?;
    Ok(k)
}

/// Cross-covariance between query and observations, `K_qo` (`m x N`).
pub fn cross_covariance(
    obs: &Observations,
    query: &QueryBlock,
    spec: &KernelSpec,
    theta: &HyperParams,
) -> Result<DMatrix<f64>> {
    let v = theta.variances();
    let with_jets = !(obs.is_identity_only() && query.operator.is_identity());
    let q = PointsWithOps::new(&query.locations, &query.operator, with_jets, spec, &v)?;
    let blocks = prepared_blocks(obs, with_jets, spec, &v)?;
    let mut out = DMatrix::zeros(q.points.len(), obs.len());
    for (b, off) in blocks.iter().zip(obs.offsets()) {
        let block = cross_block(&q, b, spec, &v)?;
        out.columns_mut(off, b.points.len()).copy_from(&block);
    }
    Ok(out)
}

/// `½ oᵀK⁻¹o + ½ log|K| + (N/2) log 2π` for an explicit covariance.
pub fn nlml_from_matrix(k: &DMatrix<f64>, o: &DVector<f64>) -> Result<f64> {
    check_dim(k.nrows(), o.len())?;
    let chol = cholesky_jittered(k)?;
    Ok(nlml_with_factor(&chol, o))
}

fn nlml_with_factor(chol: &JitteredCholesky, o: &DVector<f64>) -> f64 {
    let alpha = chol.solve_vec(o);
    0.5 * o.dot(&alpha) + 0.5 * chol.log_det() + 0.5 * o.len() as f64 * (2.0 * std::f64::consts::PI).ln()
}

/// Negative log marginal likelihood, reporting factorization failures as errors.
pub fn nlml_checked(obs: &Observations, spec: &KernelSpec, theta: &HyperParams) -> Result<f64> {
    theta.validate(spec)?;
    let k = assemble_blocks(obs, spec, theta)?;
    let value = nlml_from_matrix(&k, &obs.values())?;
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::Domain("marginal likelihood is not finite".into()))
    }
}

/// Negative log marginal likelihood; any failure yields [`NLML_PENALTY`].
pub fn nlml(obs: &Observations, spec: &KernelSpec, theta: &HyperParams) -> f64 {
    nlml_checked(obs, spec, theta).unwrap_or(NLML_PENALTY)
}

/// A GP conditioned on observations: `K_oo` is factored once and reused for
/// every prediction.
#[derive(Debug, Clone)]
pub struct ConditionedGp<'a> {
    obs: &'a Observations,
    spec: KernelSpec,
    theta: HyperParams,
    chol: JitteredCholesky,
    alpha: DVector<f64>,
}

/// A posterior whose covariance includes uncertainty carried by one
/// observation block.
#[derive(Debug, Clone, PartialEq)]
pub struct PropagatedPosterior {
    pub posterior: Posterior,
    /// Diagonal of the covariance before the carried uncertainty is added.
    pub plain_variance: DVector<f64>,
}

impl<'a> ConditionedGp<'a> {
    pub fn new(obs: &'a Observations, spec: &KernelSpec, theta: &HyperParams) -> Result<Self> {
        theta.validate(spec)?;
        let k = assemble_blocks(obs, spec, theta)?;
        let chol = cholesky_jittered(&k)?;
        let alpha = chol.solve_vec(&obs.values());
        Ok(ConditionedGp {
            obs,
            spec: *spec,
            theta: theta.clone(),
            chol,
            alpha,
        })
    }

    pub fn jitter(&self) -> f64 {
        self.chol.jitter
    }

    pub fn nlml(&self) -> f64 {
        nlml_with_factor(&self.chol, &self.obs.values())
    }

    /// Posterior mean only.
    pub fn mean(&self, query: &QueryBlock) -> Result<DVector<f64>> {
        let kqo = cross_covariance(self.obs, query, &self.spec, &self.theta)?;
        Ok(&kqo * &self.alpha)
    }

    fn predict_parts(&self, query: &QueryBlock) -> Result<(Posterior, DMatrix<f64>)> {
        if !query.locations.is_empty() {
            check_dim(self.spec.input_dim, query.locations.ncols())?;
        }
        query.operator.check_len(query.locations.nrows())?;
        let kqo = cross_covariance(self.obs, query, &self.spec, &self.theta)?;
        let mean = &kqo * &self.alpha;
        let v = self.theta.variances();
        let q = PointsWithOps::new(&query.locations, &query.operator, !query.operator.is_identity(), &self.spec, &v)?;
        let kqq = self_block(&q, &self.spec, &v)?;
        let w = self.chol.solve_mat(&kqo.transpose());
        let mut covariance = kqq - &kqo * &w;
        symmetrize(&mut covariance);
        let post = Posterior {
            mean,
            covariance,
            query_points: query.locations.clone(),
        };
        Ok((post, w))
    }

    pub fn predict(&self, query: &QueryBlock) -> Result<Posterior> {
        Ok(self.predict_parts(query)?.0)
    }

    /// Posterior whose covariance adds `Wᵦᵀ C Wᵦ`, where `Wᵦ` holds the rows of
    /// `K_oo⁻¹ K_oq` belonging to observation block `block` and `C` is the
    /// covariance of that block's values.
    pub fn predict_propagated(
        &self,
        query: &QueryBlock,
        block: usize,
        carried: &DMatrix<f64>,
    ) -> Result<PropagatedPosterior> {
        let b = self
            .obs
            .blocks
            .get(block)
            .ok_or_else(|| Error::Input(format!("no observation block {block}")))?;
        check_dim(b.len(), carried.nrows())?;
        check_dim(b.len(), carried.ncols())?;
        let (mut posterior, w) = self.predict_parts(query)?;
        let plain_variance = posterior.covariance.diagonal();
        let wb = w.rows(self.obs.offsets()[block], b.len());
        let mut added = wb.transpose() * carried * wb;
        symmetrize(&mut added);
        posterior.covariance += added;
        Ok(PropagatedPosterior {
            posterior,
            plain_variance,
        })
    }
}

/// Conditions on `obs` and predicts at `query`.
pub fn posterior(obs: &Observations, query: &QueryBlock, spec: &KernelSpec, theta: &HyperParams) -> Result<Posterior> {
    ConditionedGp::new(obs, spec, theta)?.predict(query)
}
