//! Synthetic factor-model generators and alignment metrics: desk-scale
//! evidence that factor estimates recover the true factor space as the
//! panel grows, and that kernel eigenvectors concentrate with sample size.

use ndarray::{Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{center_gram, gram_matrix, KernelSpec};
use crate::linalg::{lstsq, symmetric_eig};

/// Nonlinearity applied entrywise to the common component.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinkKind {
    Linear,
    SigmoidLink,
    QuadraticLink,
}

impl LinkKind {
    fn apply(self, v: f64) -> f64 {
        match self {
            LinkKind::Linear => v,
            LinkKind::SigmoidLink => v.tanh(),
            LinkKind::QuadraticLink => v + 0.5 * v * v,
        }
    }
}

/// Synthetic factor-model design.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct FactorDgpSpec {
    pub t: usize,
    pub n: usize,
    pub r: usize,
    pub loading_scale: f64,
    pub noise_scale: f64,
    pub link: LinkKind,
    pub seed: u64,
}

impl FactorDgpSpec {
    pub fn validate(&self) -> Result<()> {
        if self.r < 1 || self.r > self.t.min(self.n) {
            return Err(Error::Config(format!(
                "r = {} must lie in 1..=min(T, N) = {}",
                self.r,
                self.t.min(self.n)
            )));
        }
        let scales_ok = self.loading_scale > 0.0 && self.noise_scale >= 0.0;
        if !scales_ok {
            return Err(Error::Config(
                "loading_scale must be positive and noise_scale nonnegative".to_string(),
            ));
        }
        Ok(())
    }
}

fn standard_normal_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
    let mut m = Array2::zeros((rows, cols));
    for v in m.iter_mut() {
        *v = StandardNormal.sample(rng);
    }
    m
}

/// Gram-Schmidt orthonormalization of the columns, then scaled by sqrt(T)
/// so that F'F / T = I exactly.
fn orthonormalize_factors(f: &Array2<f64>) -> Array2<f64> {
    let (t, r) = f.dim();
    let mut q = f.clone();
    for j in 0..r {
        for prev in 0..j {
            let dot = q.column(j).dot(&q.column(prev));
            for i in 0..t {
                let delta = dot * q[[i, prev]];
                q[[i, j]] -= delta;
            }
        }
        let norm = q.column(j).dot(&q.column(j)).sqrt();
        for i in 0..t {
            q[[i, j]] /= norm;
        }
    }
    let scale = (t as f64).sqrt();
    q.mapv_into(|v| v * scale)
}

/// Draw a panel X = link(F Lambda') + noise and return it with the true
/// factors. F is orthonormalized so T^-1 F'F = I_r holds exactly; the same
/// seed always reproduces the same draw bit for bit.
pub fn simulate_factor_model(spec: &FactorDgpSpec) -> Result<(Array2<f64>, Array2<f64>)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let raw = standard_normal_matrix(&mut rng, spec.t, spec.r);
    let f_true = orthonormalize_factors(&raw);
    let mut loadings = standard_normal_matrix(&mut rng, spec.n, spec.r);
    loadings.mapv_inplace(|v| v * spec.loading_scale);
    let noise = standard_normal_matrix(&mut rng, spec.t, spec.n);
    let common = f_true.dot(&loadings.t());
    let mut x = Array2::zeros((spec.t, spec.n));
    for i in 0..spec.t {
        for j in 0..spec.n {
            x[[i, j]] = spec.link.apply(common[[i, j]]) + spec.noise_scale * noise[[i, j]];
        }
    }
    Ok((x, f_true))
}

/// How well a factor estimate spans the true factors.
#[derive(Debug, Clone)]
pub struct AlignmentResult {
    /// Share of true-factor variation explained by a linear recombination
    /// of the estimated factors; rotation-invariant, in [0, 1].
    pub trace_r2: f64,
    /// The least-squares rotation B with F_true ~ F_hat * B.
    pub rotation: Array2<f64>,
}

/// Regress the true factors on the estimated ones and report the share of
/// variation explained. Invariant under invertible recombination of the
/// estimate's columns.
pub fn trace_r2(f_hat: &Array2<f64>, f_true: &Array2<f64>) -> Result<AlignmentResult> {
    let (t, r_hat) = f_hat.dim();
    let (t2, r_true) = f_true.dim();
    if t != t2 {
        return Err(Error::ShapeMismatch(format!(
            "factor matrices have {t} and {t2} rows"
        )));
    }
    let mut rotation = Array2::zeros((r_hat, r_true));
    let mut ssr_total = 0.0;
    for j in 0..r_true {
        let col = f_true.column(j).to_owned();
        let fit = lstsq(f_hat, &col)?;
        if fit.rank_deficient {
            return Err(Error::RankDeficient(
                "estimated factors are rank deficient".to_string(),
            ));
        }
        for i in 0..r_hat {
            rotation[[i, j]] = fit.solution[i];
        }
        ssr_total += fit.ssr;
    }
    let sst: f64 = f_true.iter().map(|v| v * v).sum();
    if sst <= 0.0 {
        return Err(Error::RankDeficient(
            "true factors are all zero".to_string(),
        ));
    }
    Ok(AlignmentResult {
        trace_r2: 1.0 - ssr_total / sst,
        rotation,
    })
}

/// One grid point of the factor-space consistency experiment.
#[derive(Debug, Clone, Serialize)]
pub struct ConsistencyPoint {
    pub t: usize,
    pub n: usize,
    pub seeds: u64,
    pub mean_trace_r2: f64,
}

/// Mean trace R^2 of PCA factors against the true factors across a grid of
/// panel dimensions. The panel is column-demeaned before extraction; the
/// averages should rise toward 1 as (T, N) grow.
pub fn consistency_experiment(
    dims: &[[usize; 2]],
    seeds_per_dim: u64,
    r: usize,
    loading_scale: f64,
    noise_scale: f64,
    link: LinkKind,
    base_seed: u64,
) -> Result<Vec<ConsistencyPoint>> {
    if dims.is_empty() {
        return Err(Error::Config("empty dimension grid".to_string()));
    }
    if seeds_per_dim < 1 {
        return Err(Error::Config("need at least one seed".to_string()));
    }
    let mut out = Vec::with_capacity(dims.len());
    for &[t, n] in dims {
        let mut total = 0.0;
        for k in 0..seeds_per_dim {
            let spec = FactorDgpSpec {
                t,
                n,
                r,
                loading_scale,
                noise_scale,
                link,
                seed: base_seed.wrapping_add(k),
            };
            let (x, f_true) = simulate_factor_model(&spec)?;
            let mut xc = x;
            for j in 0..n {
                let mean = xc.column(j).sum() / t as f64;
                for i in 0..t {
                    xc[[i, j]] -= mean;
                }
            }
            let factors = crate::factors::pca_factors(&xc, r)?;
            total += trace_r2(&factors.factors, &f_true)?.trace_r2;
        }
        out.push(ConsistencyPoint {
            t,
            n,
            seeds: seeds_per_dim,
            mean_trace_r2: total / seeds_per_dim as f64,
        });
    }
    Ok(out)
}

/// One grid point of the eigenvector concentration experiment.
#[derive(Debug, Clone, Serialize)]
pub struct ConcentrationPoint {
    pub sample_size: usize,
    pub replications: usize,
    /// Mean sign-free projection distance between the sample top
    /// eigenvector and the reference one.
    pub mean_discrepancy: f64,
}

/// Estimate how fast the top kernel eigenvector settles as T grows.
///
/// A large reference sample (4x the largest grid point) stands in for the
/// population: its centered Gram's top eigenvector is the target. Each
/// replication draws a fresh sample of size T, extends its top eigenvector
/// to the reference points through the centered kernel, and measures the
/// projection distance sin(theta) = sqrt(1 - (u'v)^2), which ignores sign
/// and scale.
pub fn concentration_experiment(
    t_grid: &[usize],
    replications: usize,
    gamma: f64,
    dim: usize,
    seed: u64,
) -> Result<Vec<ConcentrationPoint>> {
    if t_grid.is_empty() {
        return Err(Error::Config("empty T grid".to_string()));
    }
    if replications < 1 {
        return Err(Error::Config("need at least one replication".to_string()));
    }
    let kernel = KernelSpec::rbf(gamma);
    kernel.validate()?;
    let t_max = *t_grid.iter().max().unwrap();
    let t_ref = 4 * t_max;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let reference = compact_support_sample(&mut rng, t_ref, dim);
    let ref_gram = center_gram(&gram_matrix(&kernel, &reference)?);
    let ref_eig = symmetric_eig(&(&ref_gram.values / t_ref as f64), 1)?;
    let ref_vec: Array1<f64> = ref_eig.eigenvectors.column(0).to_owned();

    let mut out = Vec::with_capacity(t_grid.len());
    for (gi, &t) in t_grid.iter().enumerate() {
        let mut total = 0.0;
        for rep in 0..replications {
            let rep_seed = seed
                .wrapping_add(1 + gi as u64)
                .wrapping_mul(6364136223846793005)
                .wrapping_add(rep as u64);
            let mut rep_rng = ChaCha8Rng::seed_from_u64(rep_seed);
            let sample = compact_support_sample(&mut rep_rng, t, dim);
            total += top_eigenvector_discrepancy(&kernel, &sample, &reference, &ref_vec)?;
        }
        out.push(ConcentrationPoint {
            sample_size: t,
            replications,
            mean_discrepancy: total / replications as f64,
        });
    }
    Ok(out)
}

/// Smooth distribution on the compact set [-1, 1]^dim. Coordinates carry
/// different scales and shifts so the covariance-operator eigenvalues are
/// distinct; eigenspaces are only identified when the spectrum is simple.
fn compact_support_sample(rng: &mut ChaCha8Rng, t: usize, dim: usize) -> Array2<f64> {
    let mut x = Array2::zeros((t, dim));
    for i in 0..t {
        for j in 0..dim {
            let u: f64 = StandardNormal.sample(rng);
            let scale = 1.0 / (1.0 + 0.7 * j as f64);
            x[[i, j]] = scale * (0.9 * u + 0.4).tanh();
        }
    }
    x
}

/// Extend the sample's top Gram eigenvector to the reference points via
/// the centered out-of-sample kernel, and return the projection distance
/// to the reference eigenvector.
fn top_eigenvector_discrepancy(
    kernel: &KernelSpec,
    sample: &Array2<f64>,
    reference: &Array2<f64>,
    ref_vec: &Array1<f64>,
) -> Result<f64> {
    let t = sample.nrows();
    let t_ref = reference.nrows();
    let gram = center_gram(&gram_matrix(kernel, sample)?);
    let eig = symmetric_eig(&(&gram.values / t as f64), 1)?;
    let alpha = eig.eigenvectors.column(0).to_owned();

    let sample_rows: Vec<Vec<f64>> = (0..t).map(|i| sample.row(i).to_vec()).collect();
    let ref_rows: Vec<Vec<f64>> = (0..t_ref).map(|i| reference.row(i).to_vec()).collect();
    let raw = gram_matrix(kernel, sample)?;
    let sample_col_means: Vec<f64> = (0..t)
        .map(|j| raw.values.column(j).sum() / t as f64)
        .collect();
    let sample_total_mean: f64 = sample_col_means.iter().sum::<f64>() / t as f64;

    let mut extended = Array1::zeros(t_ref);
    for (i, ref_row) in ref_rows.iter().enumerate() {
        let k_row: Vec<f64> = sample_rows
            .iter()
            .map(|s| crate::kernels::eval_kernel(kernel, ref_row, s))
            .collect::<Result<_>>()?;
        let row_mean: f64 = k_row.iter().sum::<f64>() / t as f64;
        let mut acc = 0.0;
        for j in 0..t {
            let centered = k_row[j] - row_mean - sample_col_means[j] + sample_total_mean;
            acc += centered * alpha[j];
        }
        extended[i] = acc;
    }
    let norm = extended.dot(&extended).sqrt();
    if norm <= 1e-300 {
        return Ok(1.0);
    }
    let cos = (extended.dot(ref_vec) / norm).clamp(-1.0, 1.0);
    Ok((1.0 - cos * cos).max(0.0).sqrt())
}
