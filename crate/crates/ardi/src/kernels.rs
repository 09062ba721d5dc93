//! Kernel evaluation, Gram-matrix assembly, double-centering, and an
//! explicit truncated feature-map oracle for the RBF kernel.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default cap on the number of coordinates the truncated RBF feature map
/// may produce before erroring out.
pub const FEATURE_MAP_CAP: usize = 2_000_000;

/// Kernel family plus hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum KernelSpec {
    Linear,
    Rbf { gamma: f64 },
    Sigmoid { gamma: f64, c0: f64 },
    Polynomial { degree: u32, offset: f64 },
}

impl KernelSpec {
    pub fn rbf(gamma: f64) -> Self {
        KernelSpec::Rbf { gamma }
    }

    /// The sigmoid kernel tanh(gamma * x'z + 1), i.e. c0 fixed to 1.
    pub fn sigmoid(gamma: f64) -> Self {
        KernelSpec::Sigmoid { gamma, c0: 1.0 }
    }

    pub fn polynomial(degree: u32, offset: f64) -> Self {
        KernelSpec::Polynomial { degree, offset }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            KernelSpec::Linear => Ok(()),
            KernelSpec::Rbf { gamma } | KernelSpec::Sigmoid { gamma, .. } => {
                if gamma > 0.0 && gamma.is_finite() {
                    Ok(())
                } else {
                    Err(Error::InvalidKernel(format!(
                        "gamma must be positive and finite, got {gamma}"
                    )))
                }
            }
            KernelSpec::Polynomial { degree, offset } => {
                if degree < 1 {
                    Err(Error::InvalidKernel("degree must be >= 1".to_string()))
                } else if !offset.is_finite() {
                    Err(Error::InvalidKernel(format!(
                        "offset must be finite, got {offset}"
                    )))
                } else {
                    Ok(())
                }
            }
        }
    }

    /// True for families whose Gram matrix is positive semidefinite.
    /// The sigmoid kernel carries no such guarantee.
    pub fn is_psd(&self) -> bool {
        !matches!(self, KernelSpec::Sigmoid { .. })
    }

    /// Whether the family has a gamma hyperparameter to tune.
    pub fn has_gamma(&self) -> bool {
        matches!(self, KernelSpec::Rbf { .. } | KernelSpec::Sigmoid { .. })
    }

    /// Same family with gamma replaced; identity for families without one.
    pub fn with_gamma(&self, gamma: f64) -> Self {
        match *self {
            KernelSpec::Rbf { .. } => KernelSpec::Rbf { gamma },
            KernelSpec::Sigmoid { c0, .. } => KernelSpec::Sigmoid { gamma, c0 },
            other => other,
        }
    }

    pub fn family_name(&self) -> &'static str {
        match self {
            KernelSpec::Linear => "linear",
            KernelSpec::Rbf { .. } => "rbf",
            KernelSpec::Sigmoid { .. } => "sigmoid",
            KernelSpec::Polynomial { .. } => "polynomial",
        }
    }
}

/// T x T matrix of pairwise kernel evaluations.
#[derive(Debug, Clone)]
pub struct GramMatrix {
    pub values: Array2<f64>,
    pub centered: bool,
}

impl GramMatrix {
    pub fn size(&self) -> usize {
        self.values.nrows()
    }
}

/// Evaluate the kernel on a pair of observations.
pub fn eval_kernel(spec: &KernelSpec, x: &[f64], z: &[f64]) -> Result<f64> {
    spec.validate()?;
    if x.len() != z.len() {
        return Err(Error::LengthMismatch {
            left: x.len(),
            right: z.len(),
        });
    }
    Ok(eval_unchecked(spec, x, z))
}

fn eval_unchecked(spec: &KernelSpec, x: &[f64], z: &[f64]) -> f64 {
    match *spec {
        KernelSpec::Linear => dot(x, z),
        KernelSpec::Rbf { gamma } => {
            let dist_sq: f64 = x
                .iter()
                .zip(z.iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            (-gamma * dist_sq).exp()
        }
        KernelSpec::Sigmoid { gamma, c0 } => (c0 + gamma * dot(x, z)).tanh(),
        KernelSpec::Polynomial { degree, offset } => (dot(x, z) + offset).powi(degree as i32),
    }
}

fn dot(x: &[f64], z: &[f64]) -> f64 {
    x.iter().zip(z.iter()).map(|(a, b)| a * b).sum()
}

/// Uncentered Gram matrix over the rows of `panel`. Only the upper triangle
/// is evaluated; the mirror guarantees exact symmetry.
pub fn gram_matrix(spec: &KernelSpec, panel: &Array2<f64>) -> Result<GramMatrix> {
    spec.validate()?;
    let t = panel.nrows();
    if t < 2 {
        return Err(Error::PanelTooSmall { rows: t, min: 2 });
    }
    let rows: Vec<Vec<f64>> = (0..t).map(|i| panel.row(i).to_vec()).collect();
    let mut values = Array2::zeros((t, t));
    for i in 0..t {
        for j in i..t {
            let v = eval_unchecked(spec, &rows[i], &rows[j]);
            values[[i, j]] = v;
            values[[j, i]] = v;
        }
    }
    Ok(GramMatrix {
        values,
        centered: false,
    })
}

/// Double-center a Gram matrix so the implicit feature map is mean zero:
/// K = K~ - 1 K~ - K~ 1 + 1 K~ 1 with 1 the all-(1/T) matrix. Idempotent.
pub fn center_gram(gram: &GramMatrix) -> GramMatrix {
    let t = gram.values.nrows();
    let tf = t as f64;
    let k = &gram.values;
    let row_means: Vec<f64> = (0..t).map(|i| k.row(i).sum() / tf).collect();
    let col_means: Vec<f64> = (0..t).map(|j| k.column(j).sum() / tf).collect();
    let total_mean = row_means.iter().sum::<f64>() / tf;
    let mut values = Array2::zeros((t, t));
    for i in 0..t {
        for j in 0..t {
            values[[i, j]] = k[[i, j]] - row_means[i] - col_means[j] + total_mean;
        }
    }
    GramMatrix {
        values,
        centered: true,
    }
}

/// Explicit coordinates of the truncated RBF feature map:
/// phi_j over all multi-indices with |n| = j for j = 0..=max_degree, in
/// graded lexicographic order. Dot products of two such vectors converge
/// to the RBF kernel value as the degree grows.
pub fn rbf_feature_map_truncated(x: &[f64], gamma: f64, max_degree: usize) -> Result<Vec<f64>> {
    rbf_feature_map_truncated_capped(x, gamma, max_degree, FEATURE_MAP_CAP)
}

/// Same as [`rbf_feature_map_truncated`] with an explicit size cap.
pub fn rbf_feature_map_truncated_capped(
    x: &[f64],
    gamma: f64,
    max_degree: usize,
    cap: usize,
) -> Result<Vec<f64>> {
    if gamma <= 0.0 || !gamma.is_finite() {
        return Err(Error::InvalidKernel(format!(
            "gamma must be positive and finite, got {gamma}"
        )));
    }
    let k = x.len();
    let required = feature_count(k, max_degree, cap)?;
    let norm_sq: f64 = x.iter().map(|v| v * v).sum();
    let envelope = (-gamma * norm_sq).exp();

    let mut out = Vec::with_capacity(required);
    let mut index = vec![0usize; k];
    for degree in 0..=max_degree {
        let scale = (2.0 * gamma).powi(degree as i32).sqrt() * envelope;
        enumerate_compositions(k, degree, 0, &mut index, &mut |multi| {
            let mut coord = scale;
            for (i, &n) in multi.iter().enumerate() {
                if n > 0 {
                    coord *= x[i].powi(n as i32) / factorial(n).sqrt();
                }
            }
            out.push(coord);
        });
    }
    Ok(out)
}

/// Number of multi-indices with |n| <= max_degree over k variables,
/// guarded against exceeding `cap`.
fn feature_count(k: usize, max_degree: usize, cap: usize) -> Result<usize> {
    let mut total: usize = 0;
    for j in 0..=max_degree {
        let mut count: usize = 1;
        // C(j + k - 1, k - 1)
        for i in 0..(k.saturating_sub(1)) {
            count = count
                .checked_mul(j + i + 1)
                .ok_or(Error::FeatureMapTooLarge {
                    required: usize::MAX,
                    cap,
                })?
                / (i + 1);
        }
        total = total
            .checked_add(count)
            .ok_or(Error::FeatureMapTooLarge {
                required: usize::MAX,
                cap,
            })?;
        if total > cap {
            return Err(Error::FeatureMapTooLarge {
                required: total,
                cap,
            });
        }
    }
    Ok(total)
}

/// Visit all compositions of `remaining` into the slots `pos..k` of `index`,
/// in lexicographic order with the leading slot largest first.
fn enumerate_compositions(
    k: usize,
    remaining: usize,
    pos: usize,
    index: &mut Vec<usize>,
    visit: &mut impl FnMut(&[usize]),
) {
    if pos == k - 1 {
        index[pos] = remaining;
        visit(index);
        return;
    }
    for n in (0..=remaining).rev() {
        index[pos] = n;
        enumerate_compositions(k, remaining - n, pos + 1, index, visit);
    }
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|v| v as f64).product()
}

/// Max |K[i,j] - K[j,i]| over the matrix, used by invariant checks.
pub fn max_asymmetry(values: &Array2<f64>) -> f64 {
    let t = values.nrows();
    let mut worst = 0.0_f64;
    for i in 0..t {
        for j in (i + 1)..t {
            worst = worst.max((values[[i, j]] - values[[j, i]]).abs());
        }
    }
    worst
}

/// Max |row sum| and |column sum| of a centered Gram matrix.
pub fn max_margin_sum(values: &Array2<f64>) -> f64 {
    let t = values.nrows();
    let mut worst = 0.0_f64;
    for i in 0..t {
        worst = worst.max(values.row(i).sum().abs());
        worst = worst.max(values.column(i).sum().abs());
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::RngExt;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn rbf_is_one_on_the_diagonal() {
        let spec = KernelSpec::rbf(0.7);
        let x = [0.3, -1.2, 4.0];
        assert_eq!(eval_kernel(&spec, &x, &x).unwrap(), 1.0);
    }

    #[test]
    fn polynomial_on_orthogonal_vectors() {
        let spec = KernelSpec::polynomial(2, 0.0);
        assert_eq!(eval_kernel(&spec, &[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
    }

    #[test]
    fn polynomial_degree_two_matches_explicit_map() {
        // phi(x) = (x1^2, sqrt(2) x1 x2, x2^2) for the offset-0 quadratic kernel
        let spec = KernelSpec::polynomial(2, 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let x = [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)];
            let z = [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)];
            let phi = |v: &[f64]| [v[0] * v[0], 2.0_f64.sqrt() * v[0] * v[1], v[1] * v[1]];
            let expected: f64 = phi(&x).iter().zip(phi(&z).iter()).map(|(a, b)| a * b).sum();
            let got = eval_kernel(&spec, &x, &z).unwrap();
            assert!((got - expected).abs() < 1e-12 * expected.abs().max(1.0));
        }
    }

    #[test]
    fn rejects_length_mismatch_and_bad_params() {
        let spec = KernelSpec::rbf(1.0);
        assert!(matches!(
            eval_kernel(&spec, &[1.0], &[1.0, 2.0]),
            Err(Error::LengthMismatch { .. })
        ));
        assert!(eval_kernel(&KernelSpec::rbf(0.0), &[1.0], &[1.0]).is_err());
        assert!(eval_kernel(&KernelSpec::polynomial(0, 0.0), &[1.0], &[1.0]).is_err());
    }

    #[test]
    fn linear_gram_equals_xxt() {
        let x = array![[1.0, 2.0], [3.0, -1.0], [0.5, 0.0]];
        let gram = gram_matrix(&KernelSpec::Linear, &x).unwrap();
        let xxt = x.dot(&x.t());
        for (a, b) in gram.values.iter().zip(xxt.iter()) {
            assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
        }
        assert_eq!(max_asymmetry(&gram.values), 0.0);
    }

    #[test]
    fn rbf_gram_has_unit_diagonal() {
        let x = array![[1.0, 2.0], [3.0, -1.0], [0.5, 0.0]];
        let gram = gram_matrix(&KernelSpec::rbf(0.3), &x).unwrap();
        for i in 0..3 {
            assert_eq!(gram.values[[i, i]], 1.0);
        }
    }

    #[test]
    fn gram_requires_two_rows() {
        let x = Array2::from_elem((1, 3), 1.0);
        assert!(matches!(
            gram_matrix(&KernelSpec::Linear, &x),
            Err(Error::PanelTooSmall { .. })
        ));
    }

    /// Brute-force oracle for poly(2, offset 1) over 3 columns: the 10
    /// monomial features of (1 + x'z)^2.
    fn poly2_offset1_features(v: &[f64]) -> Vec<f64> {
        let s2 = 2.0_f64.sqrt();
        vec![
            1.0,
            s2 * v[0],
            s2 * v[1],
            s2 * v[2],
            v[0] * v[0],
            v[1] * v[1],
            v[2] * v[2],
            s2 * v[0] * v[1],
            s2 * v[0] * v[2],
            s2 * v[1] * v[2],
        ]
    }

    #[test]
    fn poly2_gram_matches_monomial_feature_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut x = Array2::zeros((6, 3));
        for v in x.iter_mut() {
            *v = rng.random_range(-1.5..1.5);
        }
        let gram = gram_matrix(&KernelSpec::polynomial(2, 1.0), &x).unwrap();
        for i in 0..6 {
            for j in 0..6 {
                let fi = poly2_offset1_features(&x.row(i).to_vec());
                let fj = poly2_offset1_features(&x.row(j).to_vec());
                let expected: f64 = fi.iter().zip(fj.iter()).map(|(a, b)| a * b).sum();
                assert!(
                    (gram.values[[i, j]] - expected).abs() < 1e-10 * expected.abs().max(1.0),
                    "mismatch at ({i},{j})"
                );
            }
        }
    }

    #[test]
    fn centering_all_ones_gives_zero() {
        let gram = GramMatrix {
            values: Array2::from_elem((4, 4), 1.0),
            centered: false,
        };
        let centered = center_gram(&gram);
        for v in centered.values.iter() {
            assert!(v.abs() < 1e-14);
        }
    }

    #[test]
    fn centering_is_idempotent_and_kills_margins() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut x = Array2::zeros((7, 4));
        for v in x.iter_mut() {
            *v = rng.random_range(-1.0..1.0);
        }
        let gram = gram_matrix(&KernelSpec::rbf(0.8), &x).unwrap();
        let once = center_gram(&gram);
        assert!(max_margin_sum(&once.values) < 1e-8);
        let twice = center_gram(&once);
        for (a, b) in once.values.iter().zip(twice.values.iter()) {
            assert!((a - b).abs() < 1e-10);
        }
        assert!(max_asymmetry(&once.values) < 1e-12);
    }

    #[test]
    fn centering_linear_gram_of_centered_data_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mut x = Array2::zeros((8, 4));
        for v in x.iter_mut() {
            *v = rng.random_range(-1.0..1.0);
        }
        // center the columns first
        for j in 0..4 {
            let mean = x.column(j).sum() / 8.0;
            for i in 0..8 {
                x[[i, j]] -= mean;
            }
        }
        let gram = gram_matrix(&KernelSpec::Linear, &x).unwrap();
        let centered = center_gram(&gram);
        for (a, b) in centered.values.iter().zip(gram.values.iter()) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn feature_map_degree_zero_is_envelope() {
        let x = [1.0, 2.0];
        let gamma = 0.3;
        let phi = rbf_feature_map_truncated(&x, gamma, 0).unwrap();
        assert_eq!(phi.len(), 1);
        assert!((phi[0] - (-gamma * 5.0).exp()).abs() < 1e-15);
    }

    #[test]
    fn feature_map_at_origin_has_unit_inner_product() {
        let zero = [0.0, 0.0, 0.0];
        for degree in [0, 3, 8] {
            let phi = rbf_feature_map_truncated(&zero, 0.5, degree).unwrap();
            let dot: f64 = phi.iter().map(|v| v * v).sum();
            assert!((dot - 1.0).abs() < 1e-14, "degree {degree}");
        }
    }

    #[test]
    fn feature_map_inner_products_approach_kernel_value() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..25 {
            let x: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
            let z: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
            let gamma = rng.random_range(0.05..0.3);
            let dist_sq: f64 = x
                .iter()
                .zip(z.iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            if gamma * dist_sq > 1.0 {
                continue;
            }
            let exact = eval_kernel(&KernelSpec::rbf(gamma), &x, &z).unwrap();
            let px = rbf_feature_map_truncated(&x, gamma, 12).unwrap();
            let pz = rbf_feature_map_truncated(&z, gamma, 12).unwrap();
            let approx: f64 = px.iter().zip(pz.iter()).map(|(a, b)| a * b).sum();
            assert!(
                (approx - exact).abs() < 1e-6,
                "degree-12 truncation off by {}",
                (approx - exact).abs()
            );
        }
    }

    #[test]
    fn feature_map_convergence_is_monotone_for_nonnegative_dots() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        for _ in 0..10 {
            let x: Vec<f64> = (0..2).map(|_| rng.random_range(0.0..1.0)).collect();
            let z: Vec<f64> = (0..2).map(|_| rng.random_range(0.0..1.0)).collect();
            let gamma = 0.2;
            let exact = eval_kernel(&KernelSpec::rbf(gamma), &x, &z).unwrap();
            let mut last_err = f64::INFINITY;
            for degree in 0..10 {
                let px = rbf_feature_map_truncated(&x, gamma, degree).unwrap();
                let pz = rbf_feature_map_truncated(&z, gamma, degree).unwrap();
                let approx: f64 = px.iter().zip(pz.iter()).map(|(a, b)| a * b).sum();
                let err = (exact - approx).abs();
                assert!(
                    err <= last_err + 1e-15,
                    "error increased at degree {degree}: {err} > {last_err}"
                );
                last_err = err;
            }
        }
    }

    #[test]
    fn feature_map_cap_is_enforced() {
        let x = vec![0.1; 20];
        assert!(matches!(
            rbf_feature_map_truncated_capped(&x, 0.1, 12, 1000),
            Err(Error::FeatureMapTooLarge { .. })
        ));
    }

    #[test]
    fn feature_count_matches_enumeration() {
        for (k, degree) in [(1, 5), (2, 6), (3, 4), (4, 3)] {
            let expected = feature_count(k, degree, usize::MAX >> 1).unwrap();
            let x = vec![0.5; k];
            let phi = rbf_feature_map_truncated(&x, 0.3, degree).unwrap();
            assert_eq!(phi.len(), expected);
        }
    }
}
