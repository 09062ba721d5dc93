//! Direct h-step ARDI regressions: design construction, least-squares
//! estimation, BIC and exhaustive (P, M, K) selection, and point forecasts.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::factors::FactorSet;
use crate::linalg::lstsq;

/// Configuration of one ARDI forecasting equation.
///
/// The regression is
/// `y_{t+h} = b0 + sum_p b_p y_{t-p+1} + sum_m b_m' F_{t-m+1} + e`,
/// using the first `n_factors` columns of the factor set at each lag.
/// With `include_squares` the element-wise squares of the factor block are
/// appended (the PC^2 variant).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArdiSpec {
    pub horizon: usize,
    pub p_lags: usize,
    pub f_lags: usize,
    pub n_factors: usize,
    pub include_squares: bool,
}

impl ArdiSpec {
    pub fn new(horizon: usize, p_lags: usize, f_lags: usize, n_factors: usize) -> Self {
        ArdiSpec {
            horizon,
            p_lags,
            f_lags,
            n_factors,
            include_squares: false,
        }
    }

    pub fn with_squares(mut self) -> Self {
        self.include_squares = true;
        self
    }

    /// Number of regression coefficients including the intercept.
    pub fn n_params(&self) -> usize {
        let factor_block = self.f_lags * self.n_factors;
        1 + self.p_lags + factor_block + if self.include_squares { factor_block } else { 0 }
    }
}

/// A fitted ARDI equation.
#[derive(Debug, Clone)]
pub struct FittedArdi {
    pub spec: ArdiSpec,
    pub coefficients: Array1<f64>,
    pub ssr: f64,
    pub n_obs: usize,
    pub bic: f64,
    pub rank_deficient: bool,
    /// Set when ssr vanished and the BIC fell back to its -inf sentinel.
    pub perfect_fit: bool,
}

/// Minimum slack between usable rows and regressors.
const MIN_EXTRA_ROWS: usize = 5;

/// Build the regressor matrix and response for an [`ArdiSpec`].
///
/// Rows are indexed by origins t = max(P, M)-1 ..= T-1-h (zero-based); the
/// response is y_{t+h}. Columns: intercept, target lags y_t..y_{t-P+1},
/// factor lags F_t..F_{t-M+1} (first K columns each), then squares of the
/// factor block when requested.
pub fn build_design(
    y: &Array1<f64>,
    factors: &FactorSet,
    spec: &ArdiSpec,
) -> Result<(Array2<f64>, Array1<f64>)> {
    let t_len = y.len();
    if factors.factors.nrows() != t_len {
        return Err(Error::ShapeMismatch(format!(
            "target has {t_len} rows but factors have {}",
            factors.factors.nrows()
        )));
    }
    if spec.p_lags < 1 || spec.f_lags < 1 || spec.n_factors < 1 || spec.horizon < 1 {
        return Err(Error::Config(
            "ARDI spec counts must all be at least 1".to_string(),
        ));
    }
    if spec.n_factors > factors.n_factors() {
        return Err(Error::ShapeMismatch(format!(
            "spec asks for {} factors but only {} were extracted",
            spec.n_factors,
            factors.n_factors()
        )));
    }
    let h = spec.horizon;
    let max_lag = spec.p_lags.max(spec.f_lags);
    let n_cols = spec.n_params();
    let first_origin = max_lag - 1;
    if t_len < h + max_lag {
        return Err(Error::InsufficientSample {
            rows: 0,
            cols: n_cols,
        });
    }
    let last_origin = t_len - 1 - h;
    if last_origin < first_origin {
        return Err(Error::InsufficientSample {
            rows: 0,
            cols: n_cols,
        });
    }
    let n_rows = last_origin - first_origin + 1;
    if n_rows < n_cols + MIN_EXTRA_ROWS {
        return Err(Error::InsufficientSample {
            rows: n_rows,
            cols: n_cols,
        });
    }

    let mut z = Array2::zeros((n_rows, n_cols));
    let mut response = Array1::zeros(n_rows);
    for (row, t) in (first_origin..=last_origin).enumerate() {
        fill_regressor_row(&mut z, row, t, y, factors, spec);
        response[row] = y[t + h];
    }
    Ok((z, response))
}

fn fill_regressor_row(
    z: &mut Array2<f64>,
    row: usize,
    t: usize,
    y: &Array1<f64>,
    factors: &FactorSet,
    spec: &ArdiSpec,
) {
    let mut col = 0;
    z[[row, col]] = 1.0;
    col += 1;
    for p in 0..spec.p_lags {
        z[[row, col]] = y[t - p];
        col += 1;
    }
    let factor_start = col;
    for m in 0..spec.f_lags {
        for k in 0..spec.n_factors {
            z[[row, col]] = factors.factors[[t - m, k]];
            col += 1;
        }
    }
    if spec.include_squares {
        let block = spec.f_lags * spec.n_factors;
        for offset in 0..block {
            let v = z[[row, factor_start + offset]];
            z[[row, col]] = v * v;
            col += 1;
        }
    }
    debug_assert_eq!(col, spec.n_params());
}

/// Least-squares fit of the design produced by [`build_design`].
pub fn ols_fit(z: &Array2<f64>, y_h: &Array1<f64>) -> Result<(Array1<f64>, f64, bool)> {
    let fit = lstsq(z, y_h)?;
    Ok((fit.solution, fit.ssr, fit.rank_deficient))
}

/// Gaussian-likelihood BIC: n ln(ssr/n) + k ln(n).
///
/// A vanishing ssr returns -inf so perfect fits always win model selection;
/// callers flag that case via [`FittedArdi::perfect_fit`].
pub fn bic(ssr: f64, n_obs: usize, n_params: usize) -> f64 {
    let n = n_obs as f64;
    if ssr <= 0.0 {
        return f64::NEG_INFINITY;
    }
    n * (ssr / n).ln() + (n_params as f64) * n.ln()
}

/// Fit one ARDI spec end to end.
pub fn fit_ardi(y: &Array1<f64>, factors: &FactorSet, spec: &ArdiSpec) -> Result<FittedArdi> {
    let (z, y_h) = build_design(y, factors, spec)?;
    let (coefficients, ssr, rank_deficient) = ols_fit(&z, &y_h)?;
    let n_obs = y_h.len();
    let value = bic(ssr, n_obs, spec.n_params());
    Ok(FittedArdi {
        spec: *spec,
        coefficients,
        ssr,
        n_obs,
        bic: value,
        rank_deficient,
        perfect_fit: !value.is_finite(),
    })
}

/// Exhaustive BIC search over the (P, M, K) grid. Ties break toward the
/// smaller (P, then M, then K); the loop order makes the first strict
/// minimum win, which implements exactly that rule.
pub fn select_and_fit(
    y: &Array1<f64>,
    factors: &FactorSet,
    horizon: usize,
    maxima: (usize, usize, usize),
    include_squares: bool,
) -> Result<FittedArdi> {
    let (p_max, m_max, k_max) = maxima;
    if p_max < 1 || m_max < 1 || k_max < 1 {
        return Err(Error::Config(
            "selection maxima must all be at least 1".to_string(),
        ));
    }
    let k_cap = k_max.min(factors.n_factors());
    let mut best: Option<FittedArdi> = None;
    let mut first_error: Option<Error> = None;
    for p in 1..=p_max {
        for m in 1..=m_max {
            for k in 1..=k_cap {
                let mut spec = ArdiSpec::new(horizon, p, m, k);
                if include_squares {
                    spec = spec.with_squares();
                }
                match fit_ardi(y, factors, &spec) {
                    Ok(fit) => {
                        let better = match &best {
                            None => true,
                            Some(b) => fit.bic < b.bic,
                        };
                        if better {
                            best = Some(fit);
                        }
                    }
                    Err(e) => {
                        if first_error.is_none() {
                            first_error = Some(e);
                        }
                    }
                }
            }
        }
    }
    match best {
        Some(fit) => Ok(fit),
        None => Err(first_error.unwrap_or(Error::InsufficientSample { rows: 0, cols: 0 })),
    }
}

/// Point forecast for the last observation in the sample: applies the
/// fitted coefficients to the regressor vector formed at t = T-1.
pub fn forecast(fitted: &FittedArdi, y: &Array1<f64>, factors: &FactorSet) -> Result<f64> {
    let spec = &fitted.spec;
    let t_len = y.len();
    if factors.factors.nrows() != t_len {
        return Err(Error::ShapeMismatch(format!(
            "target has {t_len} rows but factors have {}",
            factors.factors.nrows()
        )));
    }
    let max_lag = spec.p_lags.max(spec.f_lags);
    if t_len < max_lag {
        return Err(Error::InsufficientSample {
            rows: t_len,
            cols: spec.n_params(),
        });
    }
    let t = t_len - 1;
    let mut z = Array2::zeros((1, spec.n_params()));
    fill_regressor_row(&mut z, 0, t, y, factors, spec);
    Ok(z.row(0).dot(&fitted.coefficients))
}
