//! Dense symmetric eigendecomposition and least squares.
//!
//! The eigensolver reduces the matrix to tridiagonal form by Householder
//! reflections and diagonalizes it with the implicit-shift QL iteration,
//! accumulating eigenvectors along the way. Panels in this crate stay in
//! the low hundreds of rows, so a dense exact decomposition is the right
//! tool; no iterative or randomized solvers.

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};

/// Top-r eigenpairs of a symmetric matrix.
///
/// Eigenvalues are sorted nonincreasing. Eigenvector columns are unit-norm,
/// mutually orthogonal, and sign-fixed: the largest-magnitude component of
/// each column is positive, ties broken by lowest index.
#[derive(Debug, Clone)]
pub struct EigenResult {
    pub eigenvalues: Array1<f64>,
    /// d x r matrix, one eigenvector per column.
    pub eigenvectors: Array2<f64>,
}

const MAX_QL_ITERATIONS: usize = 50;

/// Householder reduction of a real symmetric matrix to tridiagonal form.
///
/// On input `z` holds the matrix; on output it holds the accumulated
/// orthogonal transformation, `d` the diagonal and `e` the off-diagonal
/// (with `e[0]` unused).
fn householder_tridiag(z: &mut Array2<f64>, d: &mut [f64], e: &mut [f64]) {
    let n = z.nrows();
    for i in (1..n).rev() {
        let l = i - 1;
        let mut h = 0.0;
        if l > 0 {
            let mut scale = 0.0;
            for k in 0..=l {
                scale += z[[i, k]].abs();
            }
            if scale == 0.0 {
                e[i] = z[[i, l]];
            } else {
                for k in 0..=l {
                    z[[i, k]] /= scale;
                    h += z[[i, k]] * z[[i, k]];
                }
                let f = z[[i, l]];
                let g = if f >= 0.0 { -h.sqrt() } else { h.sqrt() };
                e[i] = scale * g;
                h -= f * g;
                z[[i, l]] = f - g;
                let mut f_acc = 0.0;
                for j in 0..=l {
                    z[[j, i]] = z[[i, j]] / h;
                    let mut g_acc = 0.0;
                    for k in 0..=j {
                        g_acc += z[[j, k]] * z[[i, k]];
                    }
                    for k in (j + 1)..=l {
                        g_acc += z[[k, j]] * z[[i, k]];
                    }
                    e[j] = g_acc / h;
                    f_acc += e[j] * z[[i, j]];
                }
                let hh = f_acc / (h + h);
                for j in 0..=l {
                    let f = z[[i, j]];
                    let g = e[j] - hh * f;
                    e[j] = g;
                    for k in 0..=j {
                        let delta = f * e[k] + g * z[[i, k]];
                        z[[j, k]] -= delta;
                    }
                }
            }
        } else {
            e[i] = z[[i, l]];
        }
        d[i] = h;
    }
    d[0] = 0.0;
    e[0] = 0.0;
    for i in 0..n {
        if d[i] != 0.0 {
            for j in 0..i {
                let mut g = 0.0;
                for k in 0..i {
                    g += z[[i, k]] * z[[k, j]];
                }
                for k in 0..i {
                    let delta = g * z[[k, i]];
                    z[[k, j]] -= delta;
                }
            }
        }
        d[i] = z[[i, i]];
        z[[i, i]] = 1.0;
        for j in 0..i {
            z[[j, i]] = 0.0;
            z[[i, j]] = 0.0;
        }
    }
}

/// Implicit-shift QL iteration on a tridiagonal matrix, rotating the
/// columns of `z` along with it. `d`/`e` come from [`householder_tridiag`];
/// on success `d` holds eigenvalues and the columns of `z` eigenvectors.
fn ql_implicit_shift(d: &mut [f64], e: &mut [f64], z: &mut Array2<f64>) -> Result<()> {
    let n = d.len();
    if n <= 1 {
        return Ok(());
    }
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = 0.0;
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > MAX_QL_ITERATIONS {
                return Err(Error::EigenNoConvergence { index: l });
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let mut s = 1.0;
            let mut c = 1.0;
            let mut p = 0.0;
            let mut underflow = false;
            for i in (l..m).rev() {
                let mut f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    underflow = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                for k in 0..n {
                    f = z[[k, i + 1]];
                    z[[k, i + 1]] = s * z[[k, i]] + c * f;
                    z[[k, i]] = c * z[[k, i]] - s * f;
                }
            }
            if underflow {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    Ok(())
}

fn max_abs(s: &Array2<f64>) -> f64 {
    s.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

/// Top-`r` eigenpairs of the symmetric matrix `s`.
///
/// `s` must be square and symmetric to within `1e-10` (scaled by its
/// largest entry); it is symmetrized exactly before decomposition so the
/// result never depends on which triangle roundoff landed in.
pub fn symmetric_eig(s: &Array2<f64>, r: usize) -> Result<EigenResult> {
    let d = s.nrows();
    if s.ncols() != d {
        return Err(Error::ShapeMismatch(format!(
            "expected square matrix, got {}x{}",
            s.nrows(),
            s.ncols()
        )));
    }
    if r < 1 || r > d {
        return Err(Error::RankOutOfRange { r, d });
    }
    let scale = max_abs(s).max(1.0);
    let tol = 1e-10 * scale;
    let mut max_asym = 0.0_f64;
    for i in 0..d {
        for j in (i + 1)..d {
            max_asym = max_asym.max((s[[i, j]] - s[[j, i]]).abs());
        }
    }
    if max_asym > tol {
        return Err(Error::NotSymmetric { max_asym, tol });
    }

    let mut z = Array2::zeros((d, d));
    for i in 0..d {
        for j in 0..d {
            z[[i, j]] = 0.5 * (s[[i, j]] + s[[j, i]]);
        }
    }
    let mut diag = vec![0.0; d];
    let mut off = vec![0.0; d];
    householder_tridiag(&mut z, &mut diag, &mut off);
    ql_implicit_shift(&mut diag, &mut off, &mut z)?;

    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| diag[b].partial_cmp(&diag[a]).unwrap_or(std::cmp::Ordering::Equal));

    let mut eigenvalues = Array1::zeros(r);
    let mut eigenvectors = Array2::zeros((d, r));
    for (col, &idx) in order.iter().take(r).enumerate() {
        eigenvalues[col] = diag[idx];
        let norm = (0..d).map(|i| z[[i, idx]] * z[[i, idx]]).sum::<f64>().sqrt();
        for i in 0..d {
            eigenvectors[[i, col]] = z[[i, idx]] / norm;
        }
    }
    fix_signs(&mut eigenvectors);
    Ok(EigenResult {
        eigenvalues,
        eigenvectors,
    })
}

/// Flip eigenvector columns so the largest-magnitude component is positive,
/// ties broken by lowest index.
pub fn fix_signs(vectors: &mut Array2<f64>) {
    let (d, r) = vectors.dim();
    for col in 0..r {
        let mut best = 0;
        for i in 1..d {
            if vectors[[i, col]].abs() > vectors[[best, col]].abs() {
                best = i;
            }
        }
        if vectors[[best, col]] < 0.0 {
            for i in 0..d {
                vectors[[i, col]] = -vectors[[i, col]];
            }
        }
    }
}

/// Least-squares solution of `a * x = y`.
#[derive(Debug, Clone)]
pub struct Lstsq {
    pub solution: Array1<f64>,
    pub ssr: f64,
    /// Set when the design was numerically rank-deficient and the
    /// minimum-norm solution was returned instead of the QR solve.
    pub rank_deficient: bool,
}

/// Solve min ||y - a x||_2 by Householder QR.
///
/// Rank-deficient systems fall back to the minimum-norm solution computed
/// through the spectral pseudoinverse of `a' a`, with `rank_deficient` set.
pub fn lstsq(a: &Array2<f64>, y: &Array1<f64>) -> Result<Lstsq> {
    let m = a.nrows();
    let n = a.ncols();
    if y.len() != m {
        return Err(Error::ShapeMismatch(format!(
            "design has {m} rows but response has {} entries",
            y.len()
        )));
    }
    if m < n {
        return Err(Error::InsufficientSample { rows: m, cols: n });
    }

    let mut r = a.clone();
    let mut qty = y.clone();
    let mut zero_column = false;
    for k in 0..n {
        let mut v: Vec<f64> = (k..m).map(|i| r[[i, k]]).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            zero_column = true;
            continue;
        }
        let alpha = if v[0] >= 0.0 { -norm } else { norm };
        v[0] -= alpha;
        let vtv: f64 = v.iter().map(|x| x * x).sum();
        for j in k..n {
            let mut dot = 0.0;
            for i in k..m {
                dot += v[i - k] * r[[i, j]];
            }
            let tau = 2.0 * dot / vtv;
            for i in k..m {
                r[[i, j]] -= tau * v[i - k];
            }
        }
        let mut dot = 0.0;
        for i in k..m {
            dot += v[i - k] * qty[i];
        }
        let tau = 2.0 * dot / vtv;
        for i in k..m {
            qty[i] -= tau * v[i - k];
        }
        r[[k, k]] = alpha;
        for i in (k + 1)..m {
            r[[i, k]] = 0.0;
        }
    }

    let diag_max = (0..n).fold(0.0_f64, |acc, k| acc.max(r[[k, k]].abs()));
    let rank_tol = f64::EPSILON * (m.max(n) as f64) * diag_max;
    let rank_deficient =
        zero_column || diag_max == 0.0 || (0..n).any(|k| r[[k, k]].abs() <= rank_tol);

    let solution = if rank_deficient {
        min_norm_solution(a, y)?
    } else {
        let mut x = Array1::zeros(n);
        for k in (0..n).rev() {
            let mut acc = qty[k];
            for j in (k + 1)..n {
                acc -= r[[k, j]] * x[j];
            }
            x[k] = acc / r[[k, k]];
        }
        x
    };

    let residual = y - &a.dot(&solution);
    let ssr = residual.iter().map(|e| e * e).sum();
    Ok(Lstsq {
        solution,
        ssr,
        rank_deficient,
    })
}

/// Minimum-norm least-squares solution via the eigendecomposition of `a' a`.
fn min_norm_solution(a: &Array2<f64>, y: &Array1<f64>) -> Result<Array1<f64>> {
    let n = a.ncols();
    let ata = a.t().dot(a);
    let aty = a.t().dot(y);
    let eig = symmetric_eig(&ata, n)?;
    let cutoff = eig.eigenvalues[0].abs() * 1e-12;
    let mut x = Array1::zeros(n);
    for i in 0..n {
        let lambda = eig.eigenvalues[i];
        if lambda > cutoff && lambda > 0.0 {
            let v = eig.eigenvectors.column(i);
            let coeff = v.dot(&aty) / lambda;
            for j in 0..n {
                x[j] += coeff * v[j];
            }
        }
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn random_symmetric(d: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut s = Array2::zeros((d, d));
        for i in 0..d {
            for j in 0..=i {
                let v: f64 = StandardNormal.sample(&mut rng);
                s[[i, j]] = v;
                s[[j, i]] = v;
            }
        }
        s
    }

    fn spectral_norm_estimate(eig: &EigenResult) -> f64 {
        eig.eigenvalues
            .iter()
            .fold(0.0_f64, |acc, v| acc.max(v.abs()))
    }

    #[test]
    fn identity_has_unit_eigenvalues() {
        let s = Array2::eye(3);
        let eig = symmetric_eig(&s, 3).unwrap();
        for v in eig.eigenvalues.iter() {
            assert!((v - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn diagonal_matrix_eigenpairs() {
        let s = array![[3.0, 0.0, 0.0], [0.0, 2.0, 0.0], [0.0, 0.0, 1.0]];
        let eig = symmetric_eig(&s, 2).unwrap();
        assert!((eig.eigenvalues[0] - 3.0).abs() < 1e-12);
        assert!((eig.eigenvalues[1] - 2.0).abs() < 1e-12);
        // sign convention makes the axis vectors point positive
        assert!((eig.eigenvectors[[0, 0]] - 1.0).abs() < 1e-12);
        assert!((eig.eigenvectors[[1, 1]] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn two_by_two_matches_closed_form() {
        // analytic eigenvalues of [[a,b],[b,c]]
        let (a, b, c): (f64, f64, f64) = (1.7, -0.9, 0.4);
        let s = array![[a, b], [b, c]];
        let mean = 0.5 * (a + c);
        let disc = (0.25 * (a - c) * (a - c) + b * b).sqrt();
        let eig = symmetric_eig(&s, 2).unwrap();
        assert!((eig.eigenvalues[0] - (mean + disc)).abs() < 1e-12);
        assert!((eig.eigenvalues[1] - (mean - disc)).abs() < 1e-12);
    }

    #[test]
    fn random_symmetric_residuals_and_orthogonality() {
        let s = random_symmetric(12, 7);
        let eig = symmetric_eig(&s, 12).unwrap();
        let norm = spectral_norm_estimate(&eig);
        for i in 0..12 {
            let v = eig.eigenvectors.column(i).to_owned();
            let resid = &s.dot(&v) - &(eig.eigenvalues[i] * &v);
            let resid_norm = resid.iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!(
                resid_norm <= 1e-8 * norm,
                "residual {resid_norm} too large for pair {i}"
            );
            for j in (i + 1)..12 {
                let dot = v.dot(&eig.eigenvectors.column(j));
                assert!(dot.abs() < 1e-8, "columns {i},{j} not orthogonal: {dot}");
            }
        }
        // eigenvalue sum matches the trace
        let trace: f64 = (0..12).map(|i| s[[i, i]]).sum();
        let lambda_sum: f64 = eig.eigenvalues.iter().sum();
        assert!((trace - lambda_sum).abs() < 1e-8 * norm.max(1.0));
    }

    #[test]
    fn eigenvalues_sorted_nonincreasing() {
        let s = random_symmetric(9, 21);
        let eig = symmetric_eig(&s, 9).unwrap();
        for i in 1..9 {
            assert!(eig.eigenvalues[i - 1] >= eig.eigenvalues[i] - 1e-12);
        }
    }

    #[test]
    fn sign_convention_flips_negative_peak() {
        // dominant eigenvector of this matrix points along -e1 before fixing
        let s = array![[4.0, 0.0], [0.0, 1.0]];
        let eig = symmetric_eig(&s, 1).unwrap();
        assert!(eig.eigenvectors[[0, 0]] > 0.0);
    }

    #[test]
    fn rejects_non_symmetric_and_bad_rank() {
        let s = array![[1.0, 2.0], [0.0, 1.0]];
        assert!(matches!(
            symmetric_eig(&s, 1),
            Err(Error::NotSymmetric { .. })
        ));
        let ok = Array2::eye(2);
        assert!(matches!(
            symmetric_eig(&ok, 0),
            Err(Error::RankOutOfRange { .. })
        ));
        assert!(matches!(
            symmetric_eig(&ok, 3),
            Err(Error::RankOutOfRange { .. })
        ));
    }

    #[test]
    fn lstsq_exact_system() {
        let a = array![[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]];
        let beta = array![2.0, -3.0];
        let y = a.dot(&beta);
        let fit = lstsq(&a, &y).unwrap();
        assert!(!fit.rank_deficient);
        assert!((fit.solution[0] - 2.0).abs() < 1e-12);
        assert!((fit.solution[1] + 3.0).abs() < 1e-12);
        assert!(fit.ssr < 1e-20);
    }

    #[test]
    fn lstsq_intercept_only_is_mean() {
        let a = Array2::from_elem((5, 1), 1.0);
        let y = array![1.0, 2.0, 3.0, 4.0, 10.0];
        let fit = lstsq(&a, &y).unwrap();
        assert!((fit.solution[0] - 4.0).abs() < 1e-12);
    }

    #[test]
    fn lstsq_matches_normal_equations_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let m = 30;
        let n = 4;
        let mut a = Array2::zeros((m, n));
        let mut y = Array1::zeros(m);
        for v in a.iter_mut() {
            *v = StandardNormal.sample(&mut rng);
        }
        for v in y.iter_mut() {
            *v = StandardNormal.sample(&mut rng);
        }
        let fit = lstsq(&a, &y).unwrap();

        // independent oracle: solve (A'A) x = A'y by Gaussian elimination
        let ata = a.t().dot(&a);
        let aty = a.t().dot(&y);
        let oracle = gauss_solve(&ata, &aty);
        for j in 0..n {
            assert!(
                (fit.solution[j] - oracle[j]).abs() < 1e-8,
                "coefficient {j} disagrees: {} vs {}",
                fit.solution[j],
                oracle[j]
            );
        }
        // residual orthogonal to the columns of A
        let resid = &y - &a.dot(&fit.solution);
        let ynorm = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        for j in 0..n {
            let dot = a.column(j).dot(&resid);
            assert!(dot.abs() <= 1e-8 * ynorm);
        }
    }

    #[test]
    fn lstsq_rank_deficient_returns_min_norm() {
        // duplicated column: min-norm solution splits the coefficient evenly
        let c = array![1.0, 2.0, -1.0, 0.5];
        let mut a = Array2::zeros((4, 2));
        for i in 0..4 {
            a[[i, 0]] = c[i];
            a[[i, 1]] = c[i];
        }
        let y = 2.0 * &c;
        let fit = lstsq(&a, &y).unwrap();
        assert!(fit.rank_deficient);
        assert!((fit.solution[0] - 1.0).abs() < 1e-8);
        assert!((fit.solution[1] - 1.0).abs() < 1e-8);
        assert!(fit.ssr < 1e-16);
    }

    fn gauss_solve(a: &Array2<f64>, b: &Array1<f64>) -> Array1<f64> {
        let n = a.nrows();
        let mut m = a.clone();
        let mut rhs = b.clone();
        for k in 0..n {
            let mut piv = k;
            for i in (k + 1)..n {
                if m[[i, k]].abs() > m[[piv, k]].abs() {
                    piv = i;
                }
            }
            if piv != k {
                for j in 0..n {
                    let tmp = m[[k, j]];
                    m[[k, j]] = m[[piv, j]];
                    m[[piv, j]] = tmp;
                }
                rhs.swap(k, piv);
            }
            for i in (k + 1)..n {
                let factor = m[[i, k]] / m[[k, k]];
                for j in k..n {
                    let delta = factor * m[[k, j]];
                    m[[i, j]] -= delta;
                }
                let delta = factor * rhs[k];
                rhs[i] -= delta;
            }
        }
        let mut x = Array1::zeros(n);
        for k in (0..n).rev() {
            let mut acc = rhs[k];
            for j in (k + 1)..n {
                acc -= m[[k, j]] * x[j];
            }
            x[k] = acc / m[[k, k]];
        }
        x
    }

    #[test]
    fn repeated_eigenvalues_stay_orthogonal() {
        // block with a double eigenvalue
        let s = array![
            [2.0, 0.0, 0.0, 0.0],
            [0.0, 2.0, 0.0, 0.0],
            [0.0, 0.0, 5.0, 1.0],
            [0.0, 0.0, 1.0, 5.0]
        ];
        let eig = symmetric_eig(&s, 4).unwrap();
        assert!((eig.eigenvalues[0] - 6.0).abs() < 1e-10);
        assert!((eig.eigenvalues[1] - 4.0).abs() < 1e-10);
        assert!((eig.eigenvalues[2] - 2.0).abs() < 1e-10);
        assert!((eig.eigenvalues[3] - 2.0).abs() < 1e-10);
        for i in 0..4 {
            for j in (i + 1)..4 {
                let dot = eig
                    .eigenvectors
                    .column(i)
                    .dot(&eig.eigenvectors.column(j));
                assert!(dot.abs() < 1e-8);
            }
        }
    }
}
