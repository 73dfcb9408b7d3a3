//! Small dense linear-algebra helpers shared by the inference code.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::error::{Error, Result};

/// Copies every row of a point matrix into its own contiguous buffer.
pub fn rows(points: &DMatrix<f64>) -> Vec<Vec<f64>> {
    points
        .row_iter()
        .map(|r| r.iter().copied().collect())
        .collect()
}

/// Builds an `n x 1` point matrix from scalar coordinates.
pub fn column_points(xs: &[f64]) -> DMatrix<f64> {
    DMatrix::from_column_slice(xs.len(), 1, xs)
}

/// Stacks point matrices vertically.
pub fn vstack(blocks: &[&DMatrix<f64>]) -> DMatrix<f64> {
    let cols = blocks.first().map_or(0, |b| b.ncols());
    let total = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = DMatrix::zeros(total, cols);
    let mut row = 0;
    for b in blocks {
        out.rows_mut(row, b.nrows()).copy_from(*b);
        row += b.nrows();
    }
    out
}

/// `(K + Kᵀ) / 2` in place.
pub fn symmetrize(k: &mut DMatrix<f64>) {
    let n = k.nrows();
    for i in 0..n {
        for j in 0..i {
            let avg = 0.5 * (k[(i, j)] + k[(j, i)]);
            k[(i, j)] = avg;
            k[(j, i)] = avg;
        }
    }
}

/// Relative jitter added to every factorization attempt.
pub const JITTER_START: f64 = 1e-10;
/// Largest relative jitter tried before giving up.
pub const JITTER_MAX: f64 = 1e-6;

/// A Cholesky factor together with the diagonal jitter that made it succeed.
#[derive(Debug, Clone)]
pub struct JitteredCholesky {
    pub factor: Cholesky<f64, Dyn>,
    pub jitter: f64,
}

impl JitteredCholesky {
    pub fn solve_vec(&self, b: &DVector<f64>) -> DVector<f64> {
        self.factor.solve(b)
    }

    pub fn solve_mat(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        self.factor.solve(b)
    }

    /// `log |K|` from the diagonal of the factor.
    pub fn log_det(&self) -> f64 {
        2.0 * self.factor.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>()
    }
}

/// Cholesky factorization with escalating diagonal jitter.
///
/// Adds `1e-10 · mean(diag K)` and multiplies by ten on each failure up to
/// `1e-6 · mean(diag K)`.
pub fn cholesky_jittered(k: &DMatrix<f64>) -> Result<JitteredCholesky> {
    let n = k.nrows();
    if n == 0 {
        return Ok(JitteredCholesky {
            factor: Cholesky::new(DMatrix::zeros(0, 0)).expect("empty matrix factorizes"),
            jitter: 0.0,
        });
    }
    let mean_diag = (k.trace() / n as f64).abs().max(f64::MIN_POSITIVE);
    let mut rel = JITTER_START;
    let mut last_jitter = 0.0;
    while rel <= JITTER_MAX * (1.0 + 1e-9) {
        let jitter = rel * mean_diag;
        let mut a = k.clone();
        for i in 0..n {
            a[(i, i)] += jitter;
        }
        if a.iter().all(|v| v.is_finite()) {
            if let Some(factor) = Cholesky::new(a) {
                return Ok(JitteredCholesky { factor, jitter });
            }
        }
        last_jitter = jitter;
        rel *= 10.0;
    }
    let min_eigenvalue = if k.iter().all(|v| v.is_finite()) {
        SymmetricEigen::new(k.clone()).eigenvalues.min()
    } else {
        f64::NAN
    };
    Err(Error::Factorization {
        jitter: last_jitter,
        min_eigenvalue,
    })
}

/// Projects a symmetric matrix onto the PSD cone by clipping negative
/// eigenvalues to zero.
pub fn nearest_psd(k: &DMatrix<f64>) -> DMatrix<f64> {
    let mut sym = k.clone();
    symmetrize(&mut sym);
    let eig = SymmetricEigen::new(sym);
    let clipped = eig.eigenvalues.map(|l| l.max(0.0));
    let mut out = &eig.eigenvectors * DMatrix::from_diagonal(&clipped) * eig.eigenvectors.transpose();
    symmetrize(&mut out);
    out
}
