//! Factor extraction: linear PCA, squared principal components, and kernel
//! factors from a centered Gram matrix, plus projection-matrix utilities.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{GramMatrix, KernelSpec};
use crate::linalg::{symmetric_eig, EigenResult};

pub use crate::linalg::Lstsq;

/// How a [`FactorSet`] was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FactorMethod {
    Pca,
    Spc,
    Kpca,
}

/// Extracted factors plus the eigenvalues behind them.
#[derive(Debug, Clone)]
pub struct FactorSet {
    /// T x r factor matrix.
    pub factors: Array2<f64>,
    /// Eigenvalues of the matrix that produced the factors, nonincreasing.
    pub eigenvalues: Array1<f64>,
    pub method: FactorMethod,
    pub kernel: Option<KernelSpec>,
    /// Non-fatal diagnostics, e.g. near-degenerate eigenvalue gaps.
    pub warnings: Vec<String>,
}

impl FactorSet {
    pub fn n_factors(&self) -> usize {
        self.factors.ncols()
    }
}

const CENTERING_TOL: f64 = 1e-8;
const DEGENERATE_RATIO: f64 = 1e-12;

fn check_centered(x: &Array2<f64>) -> Result<()> {
    let t = x.nrows() as f64;
    let mut max_mean = 0.0_f64;
    for j in 0..x.ncols() {
        max_mean = max_mean.max((x.column(j).sum() / t).abs());
    }
    if max_mean > CENTERING_TOL {
        return Err(Error::UncenteredInput { max_mean });
    }
    Ok(())
}

fn degeneracy_warning(eigenvalues: &Array1<f64>, context: &str) -> Option<String> {
    let first = eigenvalues[0];
    let last = eigenvalues[eigenvalues.len() - 1];
    if last <= DEGENERATE_RATIO * first.max(0.0) {
        Some(format!(
            "{context}: trailing eigenvalue {last:.3e} is negligible against {first:.3e}"
        ))
    } else {
        None
    }
}

/// Linear PCA factors of a column-centered matrix: the loadings are the
/// top-r eigenvectors of X'X and the factors their projections X * loadings.
pub fn pca_factors(x: &Array2<f64>, r: usize) -> Result<FactorSet> {
    check_centered(x)?;
    let (t, n) = x.dim();
    if r < 1 || r > t.min(n) {
        return Err(Error::RankOutOfRange { r, d: t.min(n) });
    }
    let xtx = x.t().dot(x);
    let eig = symmetric_eig(&xtx, r)?;
    let factors = x.dot(&eig.eigenvectors);
    let mut warnings = Vec::new();
    if let Some(w) = degeneracy_warning(&eig.eigenvalues, "pca") {
        warnings.push(w);
    }
    Ok(FactorSet {
        factors,
        eigenvalues: eig.eigenvalues,
        method: FactorMethod::Pca,
        kernel: None,
        warnings,
    })
}

/// Column-wise concatenation [X, X^2], each augmented column re-centered
/// and scaled to unit l2 norm. Columns that come out constant (zero
/// variation) are left at zero rather than rejected.
pub fn augment_with_squares(x: &Array2<f64>) -> Array2<f64> {
    let (t, n) = x.dim();
    let mut out = Array2::zeros((t, 2 * n));
    for j in 0..n {
        for i in 0..t {
            out[[i, j]] = x[[i, j]];
            out[[i, n + j]] = x[[i, j]] * x[[i, j]];
        }
    }
    for j in 0..2 * n {
        let mean = out.column(j).sum() / t as f64;
        let mut norm_sq = 0.0;
        for i in 0..t {
            out[[i, j]] -= mean;
            norm_sq += out[[i, j]] * out[[i, j]];
        }
        let norm = norm_sq.sqrt();
        if norm > 1e-300 {
            for i in 0..t {
                out[[i, j]] /= norm;
            }
        }
    }
    out
}

/// Squared principal components: PCA on the panel augmented with its
/// element-wise square.
pub fn spc_factors(x: &Array2<f64>, r: usize) -> Result<FactorSet> {
    check_centered(x)?;
    let augmented = augment_with_squares(x);
    let mut set = pca_factors(&augmented, r)?;
    set.method = FactorMethod::Spc;
    Ok(set)
}

/// Kernel factors from a centered Gram matrix: the weights are the top-r
/// eigenvectors of K/T and the factors their projections K * weights.
pub fn kernel_factors(gram: &GramMatrix, r: usize) -> Result<FactorSet> {
    if !gram.centered {
        return Err(Error::GramNotCentered);
    }
    let t = gram.size();
    if r < 1 || r > t {
        return Err(Error::RankOutOfRange { r, d: t });
    }
    let scaled = &gram.values / t as f64;
    let eig = symmetric_eig(&scaled, r)?;
    let factors = gram.values.dot(&eig.eigenvectors);
    let mut warnings = Vec::new();
    if let Some(w) = degeneracy_warning(&eig.eigenvalues, "kpca") {
        warnings.push(w);
    }
    Ok(FactorSet {
        factors,
        eigenvalues: eig.eigenvalues,
        method: FactorMethod::Kpca,
        kernel: None,
        warnings,
    })
}

/// Orthogonal projector onto the column space of `f`: P = F (F'F)^-1 F'.
pub fn projection_matrix(f: &Array2<f64>) -> Result<Array2<f64>> {
    let (t, r) = f.dim();
    if r < 1 || r > t {
        return Err(Error::RankOutOfRange { r, d: t });
    }
    let ftf = f.t().dot(f);
    let eig = symmetric_eig(&ftf, r)?;
    let lambda_max = eig.eigenvalues[0];
    let lambda_min = eig.eigenvalues[r - 1];
    if lambda_max <= 0.0 || lambda_min <= 1e-12 * lambda_max {
        return Err(Error::RankDeficient(format!(
            "F'F condition number beyond guard (eigenvalues {lambda_min:.3e} .. {lambda_max:.3e})"
        )));
    }
    // P = M diag(1/lambda) M' with M = F V
    let m = f.dot(&eig.eigenvectors);
    let mut scaled = m.clone();
    for i in 0..r {
        let inv = 1.0 / eig.eigenvalues[i];
        for row in 0..t {
            scaled[[row, i]] *= inv;
        }
    }
    Ok(scaled.dot(&m.t()))
}

/// Top-r eigenvectors of K/T, the weight matrix `A_r` used by
/// [`kernel_factors`]. Exposed for projection comparisons.
pub fn gram_eigenvectors(gram: &GramMatrix, r: usize) -> Result<EigenResult> {
    let t = gram.size();
    let scaled = &gram.values / t as f64;
    symmetric_eig(&scaled, r)
}
