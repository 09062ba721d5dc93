//! Python bindings for the ardi forecasting library.
//!
//! Exposes the main operations over plain Python lists: kernel evaluation
//! and Gram assembly, factor extraction (PCA / SPC / kernel factors), ARDI
//! selection and forecasting, the Diebold-Mariano test, and the synthetic
//! factor-model generator with its alignment metric.

use ndarray::{Array1, Array2};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use ardi::factors::{self, FactorMethod, FactorSet};
use ardi::forecast;
use ardi::kernels::{self, KernelSpec};
use ardi::montecarlo::{self, FactorDgpSpec, LinkKind};

fn to_py_err(e: ardi::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_array2(rows: Vec<Vec<f64>>) -> PyResult<Array2<f64>> {
    if rows.is_empty() {
        return Err(PyValueError::new_err("matrix must not be empty"));
    }
    let n = rows[0].len();
    if n == 0 || rows.iter().any(|r| r.len() != n) {
        return Err(PyValueError::new_err(
            "matrix rows must be non-empty and equal length",
        ));
    }
    let t = rows.len();
    let mut out = Array2::zeros((t, n));
    for (i, row) in rows.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            out[[i, j]] = v;
        }
    }
    Ok(out)
}

type Matrix = Vec<Vec<f64>>;

fn to_rows(m: &Array2<f64>) -> Matrix {
    (0..m.nrows()).map(|i| m.row(i).to_vec()).collect()
}

/// Kernel specification: linear, rbf, sigmoid, or polynomial.
#[pyclass(name = "Kernel", from_py_object)]
#[derive(Clone)]
struct PyKernel {
    spec: KernelSpec,
}

#[pymethods]
impl PyKernel {
    #[staticmethod]
    fn linear() -> Self {
        PyKernel {
            spec: KernelSpec::Linear,
        }
    }

    #[staticmethod]
    fn rbf(gamma: f64) -> PyResult<Self> {
        let spec = KernelSpec::rbf(gamma);
        spec.validate().map_err(to_py_err)?;
        Ok(PyKernel { spec })
    }

    #[staticmethod]
    #[pyo3(signature = (gamma, c0 = 1.0))]
    fn sigmoid(gamma: f64, c0: f64) -> PyResult<Self> {
        let spec = KernelSpec::Sigmoid { gamma, c0 };
        spec.validate().map_err(to_py_err)?;
        Ok(PyKernel { spec })
    }

    #[staticmethod]
    #[pyo3(signature = (degree = 2, offset = 1.0))]
    fn polynomial(degree: u32, offset: f64) -> PyResult<Self> {
        let spec = KernelSpec::polynomial(degree, offset);
        spec.validate().map_err(to_py_err)?;
        Ok(PyKernel { spec })
    }

    /// Evaluate the kernel on a pair of vectors.
    fn eval(&self, x: Vec<f64>, z: Vec<f64>) -> PyResult<f64> {
        kernels::eval_kernel(&self.spec, &x, &z).map_err(to_py_err)
    }

    /// Pairwise kernel matrix over the rows of x (uncentered).
    fn gram(&self, x: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
        let m = to_array2(x)?;
        let gram = kernels::gram_matrix(&self.spec, &m).map_err(to_py_err)?;
        Ok(to_rows(&gram.values))
    }

    fn __repr__(&self) -> String {
        format!("Kernel({:?})", self.spec)
    }
}

/// Extracted factors with their eigenvalues.
#[pyclass(name = "Factors")]
struct PyFactors {
    inner: FactorSet,
}

#[pymethods]
impl PyFactors {
    /// T x r factor matrix as a list of rows.
    fn values(&self) -> Vec<Vec<f64>> {
        to_rows(&self.inner.factors)
    }

    fn eigenvalues(&self) -> Vec<f64> {
        self.inner.eigenvalues.to_vec()
    }

    fn method(&self) -> &'static str {
        match self.inner.method {
            FactorMethod::Pca => "pca",
            FactorMethod::Spc => "spc",
            FactorMethod::Kpca => "kpca",
        }
    }

    fn warnings(&self) -> Vec<String> {
        self.inner.warnings.clone()
    }

    fn n_factors(&self) -> usize {
        self.inner.n_factors()
    }
}

/// Linear PCA factors of a column-centered matrix.
#[pyfunction]
fn pca_factors(x: Vec<Vec<f64>>, r: usize) -> PyResult<PyFactors> {
    let m = to_array2(x)?;
    factors::pca_factors(&m, r)
        .map(|inner| PyFactors { inner })
        .map_err(to_py_err)
}

/// Squared-principal-components factors ([X, X^2] augmentation).
#[pyfunction]
fn spc_factors(x: Vec<Vec<f64>>, r: usize) -> PyResult<PyFactors> {
    let m = to_array2(x)?;
    factors::spc_factors(&m, r)
        .map(|inner| PyFactors { inner })
        .map_err(to_py_err)
}

/// Kernel factors: Gram assembly, double-centering, then projection onto
/// the top-r eigenvectors of K/T.
#[pyfunction]
fn kernel_factors(kernel: PyKernel, x: Vec<Vec<f64>>, r: usize) -> PyResult<PyFactors> {
    let m = to_array2(x)?;
    let gram = kernels::gram_matrix(&kernel.spec, &m).map_err(to_py_err)?;
    let centered = kernels::center_gram(&gram);
    factors::kernel_factors(&centered, r)
        .map(|inner| PyFactors { inner })
        .map_err(to_py_err)
}

/// Coordinates of the truncated RBF feature map (graded lexicographic
/// multi-index order).
#[pyfunction]
fn rbf_feature_map(x: Vec<f64>, gamma: f64, max_degree: usize) -> PyResult<Vec<f64>> {
    kernels::rbf_feature_map_truncated(&x, gamma, max_degree).map_err(to_py_err)
}

/// Fit an ARDI equation by BIC over the (P, M, K) grid and forecast h
/// steps past the end of the sample. Returns a dict with the forecast,
/// the selected orders, and fit diagnostics.
#[pyfunction]
#[pyo3(signature = (y, factors, horizon, p_max = 6, m_max = 6, k_max = 6, include_squares = false))]
#[allow(clippy::too_many_arguments)]
fn ardi_forecast<'py>(
    py: Python<'py>,
    y: Vec<f64>,
    factors: &PyFactors,
    horizon: usize,
    p_max: usize,
    m_max: usize,
    k_max: usize,
    include_squares: bool,
) -> PyResult<Bound<'py, pyo3::types::PyDict>> {
    let y = Array1::from(y);
    let fitted = forecast::select_and_fit(
        &y,
        &factors.inner,
        horizon,
        (p_max, m_max, k_max),
        include_squares,
    )
    .map_err(to_py_err)?;
    let value = forecast::forecast(&fitted, &y, &factors.inner).map_err(to_py_err)?;
    let dict = pyo3::types::PyDict::new(py);
    dict.set_item("forecast", value)?;
    dict.set_item("p_lags", fitted.spec.p_lags)?;
    dict.set_item("f_lags", fitted.spec.f_lags)?;
    dict.set_item("n_factors", fitted.spec.n_factors)?;
    dict.set_item("bic", fitted.bic)?;
    dict.set_item("ssr", fitted.ssr)?;
    dict.set_item("n_obs", fitted.n_obs)?;
    dict.set_item("rank_deficient", fitted.rank_deficient)?;
    Ok(dict)
}

/// Diebold-Mariano test of equal squared-error accuracy; returns
/// (statistic, p_value).
#[pyfunction]
fn dm_test(e1: Vec<f64>, e2: Vec<f64>, horizon: usize) -> PyResult<(f64, f64)> {
    let out = ardi::evaluate::dm_test(&e1, &e2, horizon).map_err(to_py_err)?;
    Ok((out.statistic, out.p_value))
}

/// Draw a synthetic factor panel; returns (X, F_true) as lists of rows.
#[pyfunction]
#[pyo3(signature = (t, n, r, loading_scale = 1.0, noise_scale = 1.0, link = "linear", seed = 0))]
fn simulate_factor_model(
    t: usize,
    n: usize,
    r: usize,
    loading_scale: f64,
    noise_scale: f64,
    link: &str,
    seed: u64,
) -> PyResult<(Matrix, Matrix)> {
    let link = match link {
        "linear" => LinkKind::Linear,
        "sigmoid" | "sigmoid_link" => LinkKind::SigmoidLink,
        "quadratic" | "quadratic_link" => LinkKind::QuadraticLink,
        other => {
            return Err(PyValueError::new_err(format!(
                "unknown link {other:?}; use linear, sigmoid_link, or quadratic_link"
            )))
        }
    };
    let spec = FactorDgpSpec {
        t,
        n,
        r,
        loading_scale,
        noise_scale,
        link,
        seed,
    };
    let (x, f) = montecarlo::simulate_factor_model(&spec).map_err(to_py_err)?;
    Ok((to_rows(&x), to_rows(&f)))
}

/// Rotation-invariant share of true-factor variation captured by the
/// estimate; returns (trace_r2, rotation matrix).
#[pyfunction]
fn trace_r2(f_hat: Vec<Vec<f64>>, f_true: Vec<Vec<f64>>) -> PyResult<(f64, Vec<Vec<f64>>)> {
    let a = to_array2(f_hat)?;
    let b = to_array2(f_true)?;
    let out = montecarlo::trace_r2(&a, &b).map_err(to_py_err)?;
    Ok((out.trace_r2, to_rows(&out.rotation)))
}

/// Demean each column and scale it to unit l2 norm; returns the
/// standardized matrix.
#[pyfunction]
fn standardize_columns(x: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
    let m = to_array2(x)?;
    let (t, n) = m.dim();
    let mut out = m.clone();
    for j in 0..n {
        let mean = out.column(j).sum() / t as f64;
        let mut norm_sq = 0.0;
        for i in 0..t {
            out[[i, j]] -= mean;
            norm_sq += out[[i, j]] * out[[i, j]];
        }
        let norm = norm_sq.sqrt();
        if norm <= 1e-300 {
            return Err(PyValueError::new_err(format!("column {j} is constant")));
        }
        for i in 0..t {
            out[[i, j]] /= norm;
        }
    }
    Ok(to_rows(&out))
}

#[pymodule]
fn ardi_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyKernel>()?;
    m.add_class::<PyFactors>()?;
    m.add_function(wrap_pyfunction!(pca_factors, m)?)?;
    m.add_function(wrap_pyfunction!(spc_factors, m)?)?;
    m.add_function(wrap_pyfunction!(kernel_factors, m)?)?;
    m.add_function(wrap_pyfunction!(rbf_feature_map, m)?)?;
    m.add_function(wrap_pyfunction!(ardi_forecast, m)?)?;
    m.add_function(wrap_pyfunction!(dm_test, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_factor_model, m)?)?;
    m.add_function(wrap_pyfunction!(trace_r2, m)?)?;
    m.add_function(wrap_pyfunction!(standardize_columns, m)?)?;
    Ok(())
}
