//! Rolling pseudo-out-of-sample evaluation: per-origin forecasting without
//! lookahead, kernel-hyperparameter cross-validation, MSPE and relative
//! MSPE, the Diebold-Mariano test, and Table-1-style reports.

use std::collections::BTreeMap;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{rolling_window, standardize, MonthDate, TargetSpec, TimeSeriesPanel};
use crate::error::{Error, Result};
use crate::factors::{kernel_factors, pca_factors, spc_factors, FactorSet};
use crate::forecast::{forecast, select_and_fit, FittedArdi};
use crate::kernels::{center_gram, gram_matrix, KernelSpec};

/// A forecasting method in the evaluation horse race.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum MethodSpec {
    /// ARDI with linear PCA factors (the baseline).
    Pca,
    /// PCA on the panel augmented with its squares.
    Spc,
    /// PCA factors with their squares added to the forecasting equation.
    Pc2,
    /// Kernel factors; gamma picked per window by time-series CV.
    Kpca {
        kernel: KernelSpec,
        gamma_grid: Vec<f64>,
    },
}

impl MethodSpec {
    pub fn id(&self) -> String {
        match self {
            MethodSpec::Pca => "pca".to_string(),
            MethodSpec::Spc => "spc".to_string(),
            MethodSpec::Pc2 => "pc2".to_string(),
            MethodSpec::Kpca { kernel, .. } => match kernel {
                KernelSpec::Polynomial { degree, .. } => format!("kpca_poly{degree}"),
                other => format!("kpca_{}", other.family_name()),
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let MethodSpec::Kpca { kernel, gamma_grid } = self {
            kernel.validate()?;
            if kernel.has_gamma() && gamma_grid.is_empty() {
                return Err(Error::Config(format!(
                    "method {} needs a non-empty gamma grid",
                    self.id()
                )));
            }
            for &g in gamma_grid {
                if g <= 0.0 || !g.is_finite() {
                    return Err(Error::Config(format!(
                        "gamma grid entry {g} is not positive"
                    )));
                }
            }
        }
        Ok(())
    }

    fn include_squares(&self) -> bool {
        matches!(self, MethodSpec::Pc2)
    }
}

/// One realized pseudo-out-of-sample forecast.
#[derive(Debug, Clone, Serialize)]
pub struct ForecastRecord {
    pub target: String,
    pub date: MonthDate,
    pub horizon: usize,
    pub method: String,
    pub forecast: f64,
    pub actual: f64,
    /// Panel row index of the forecast origin.
    pub origin_index: usize,
    /// Largest panel row index that was visible when this forecast was
    /// made; the no-lookahead audit asserts it never exceeds the origin.
    pub max_row_visible: usize,
    pub gamma: Option<f64>,
    pub cv_fallback: bool,
}

impl ForecastRecord {
    pub fn error(&self) -> f64 {
        self.actual - self.forecast
    }
}

/// A forecast origin that failed, with the reason it was skipped.
#[derive(Debug, Clone, Serialize)]
pub struct SkipRecord {
    pub target: String,
    pub horizon: usize,
    pub method: String,
    pub origin_index: usize,
    pub reason: String,
}

#[derive(Debug, Clone)]
pub struct RollingOutput {
    pub records: Vec<ForecastRecord>,
    pub skips: Vec<SkipRecord>,
}

/// Harness knobs beyond the method itself.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RollingOptions {
    /// Window length is `window_base - h`.
    pub window_base: usize,
    /// Grid maxima (P_max, M_max, K_max) for BIC selection.
    pub maxima: (usize, usize, usize),
    /// How many trailing in-window observations the gamma CV predicts.
    pub cv_points: usize,
    /// Re-run the gamma CV every `cv_stride` origins (1 = every origin).
    pub cv_stride: usize,
    /// When set, forecasts before this date are not produced, pinning the
    /// evaluation period across horizons (e.g. 1970-01 on the full panel).
    /// Unset, evaluation starts at the first origin with a full window.
    pub eval_start: Option<MonthDate>,
}

impl Default for RollingOptions {
    fn default() -> Self {
        RollingOptions {
            window_base: 120,
            maxima: (6, 6, 6),
            cv_points: 5,
            cv_stride: 1,
            eval_start: None,
        }
    }
}

/// Factor extraction dispatch shared by the harness and the CV loop.
fn extract_factors(
    method: &MethodSpec,
    x_std: &Array2<f64>,
    k_max: usize,
    gamma: Option<f64>,
) -> Result<FactorSet> {
    let (t, n) = x_std.dim();
    match method {
        MethodSpec::Pca | MethodSpec::Pc2 => pca_factors(x_std, k_max.min(t.min(n))),
        MethodSpec::Spc => spc_factors(x_std, k_max.min(t.min(2 * n))),
        MethodSpec::Kpca { kernel, .. } => {
            let spec = match gamma {
                Some(g) => kernel.with_gamma(g),
                None => *kernel,
            };
            let gram = center_gram(&gram_matrix(&spec, x_std)?);
            let mut set = kernel_factors(&gram, k_max.min(t))?;
            set.kernel = Some(spec);
            Ok(set)
        }
    }
}

/// Forecast produced at a single origin.
#[derive(Debug, Clone)]
pub struct OriginForecast {
    pub value: f64,
    pub fitted: FittedArdi,
    pub gamma: Option<f64>,
    pub cv_fallback: bool,
}

/// Produce one forecast using only the rows of `visible`, which the caller
/// must truncate at the forecast origin. The last `window_base - h` rows
/// form the estimation window; predictors are re-standardized inside it.
pub fn forecast_at_origin(
    visible: &TimeSeriesPanel,
    target: &TargetSpec,
    method: &MethodSpec,
    h: usize,
    opts: &RollingOptions,
    gamma_override: Option<(f64, bool)>,
) -> Result<OriginForecast> {
    if h >= opts.window_base {
        return Err(Error::Config(format!(
            "horizon {h} leaves no window at window_base {}",
            opts.window_base
        )));
    }
    let window_len = opts.window_base - h;
    let end = visible.rows() - 1;
    let window = rolling_window(visible, end, window_len)?;
    let y = window.column(&target.name)?;
    let predictors = window.without_column(&target.name)?;
    let (x_std, _) = standardize(&predictors)?;

    let (gamma, cv_fallback) = match method {
        MethodSpec::Kpca { kernel, gamma_grid } if kernel.has_gamma() => match gamma_override {
            Some((g, fallback)) => (Some(g), fallback),
            None => {
                let (g, fallback) =
                    cross_validate_gamma(&window, target, h, method, gamma_grid, opts)?;
                (Some(g), fallback)
            }
        },
        _ => (None, false),
    };

    let factors = extract_factors(method, &x_std.values, opts.maxima.2, gamma)?;
    let fitted = select_and_fit(&y, &factors, h, opts.maxima, method.include_squares())?;
    let value = forecast(&fitted, &y, &factors)?;
    Ok(OriginForecast {
        value,
        fitted,
        gamma,
        cv_fallback,
    })
}

/// Pick gamma by time-series cross-validation inside one window: for each
/// grid value, forecast the last `cv_points` in-window targets one origin
/// at a time using only data preceding each, and take the gamma with the
/// smallest average squared error (ties to the smaller gamma).
///
/// Returns `(gamma, true)` with the grid midpoint when the window is too
/// short to run the CV at all.
pub fn cross_validate_gamma(
    window: &TimeSeriesPanel,
    target: &TargetSpec,
    h: usize,
    method: &MethodSpec,
    grid: &[f64],
    opts: &RollingOptions,
) -> Result<(f64, bool)> {
    if grid.is_empty() {
        return Err(Error::Config("gamma grid is empty".to_string()));
    }
    let mut sorted: Vec<f64> = grid.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    if sorted.len() == 1 {
        return Ok((sorted[0], false));
    }
    let len = window.rows();
    let cv_points = opts.cv_points;
    // the earliest CV origin must leave room for the smallest design:
    // its sub-sample has len - cv_points + 1 - h rows, and the (1,1,1)
    // spec needs h + max_lag + 3 columns + 5 slack usable rows
    let min_sub_len = h + 9;
    let earliest_sub_len = (len + 1).saturating_sub(cv_points + h);
    if cv_points == 0 || earliest_sub_len < min_sub_len.max(2) {
        return Ok((sorted[sorted.len() / 2], true));
    }

    let y_full = window.column(&target.name)?;
    let mut best_gamma = sorted[0];
    let mut best_err = f64::INFINITY;
    for &g in &sorted {
        let mut total = 0.0;
        for offset in 0..cv_points {
            let s = len - cv_points + offset; // target position to predict
            let origin = s - h;
            let sub = rolling_window(window, origin, origin + 1)?;
            let y_sub = sub.column(&target.name)?;
            let predictors = sub.without_column(&target.name)?;
            let (x_std, _) = standardize(&predictors)?;
            let factors = extract_factors(method, &x_std.values, opts.maxima.2, Some(g))?;
            let fitted =
                select_and_fit(&y_sub, &factors, h, opts.maxima, method.include_squares())?;
            let pred = forecast(&fitted, &y_sub, &factors)?;
            let err = y_full[s] - pred;
            total += err * err;
        }
        let avg = total / cv_points as f64;
        if avg < best_err {
            best_err = avg;
            best_gamma = g;
        }
    }
    Ok((best_gamma, false))
}

/// Run the rolling pseudo-out-of-sample loop for one (target, method,
/// horizon) combination. Each origin sees only panel rows up to itself; a
/// failed origin is recorded as a skip, not an abort.
pub fn run_rolling(
    panel: &TimeSeriesPanel,
    target: &TargetSpec,
    method: &MethodSpec,
    h: usize,
    opts: &RollingOptions,
) -> Result<RollingOutput> {
    method.validate()?;
    target.validate(panel)?;
    if h < 1 || h >= opts.window_base {
        return Err(Error::Config(format!(
            "horizon {h} incompatible with window_base {}",
            opts.window_base
        )));
    }
    let window_len = opts.window_base - h;
    let t_total = panel.rows();
    if t_total < window_len + h {
        return Err(Error::PanelTooSmall {
            rows: t_total,
            min: window_len + h,
        });
    }
    let mut first_origin = window_len - 1;
    if let Some(start) = opts.eval_start {
        let start_index = panel
            .dates
            .iter()
            .position(|d| *d >= start)
            .unwrap_or(t_total);
        first_origin = first_origin.max(start_index.saturating_sub(h));
    }
    let last_origin = t_total - 1 - h;
    if first_origin > last_origin {
        return Err(Error::PanelTooSmall {
            rows: t_total,
            min: first_origin + 1 + h,
        });
    }
    let origins: Vec<usize> = (first_origin..=last_origin).collect();
    let target_col = panel.column(&target.name)?;
    let method_id = method.id();

    // Strided CV: gammas are computed at anchor origins and reused in
    // between, so the expensive grid search runs every cv_stride origins.
    let needs_cv = matches!(method, MethodSpec::Kpca { kernel, .. } if kernel.has_gamma());
    let stride = opts.cv_stride.max(1);
    let anchor_gammas: Option<Vec<Result<(f64, bool)>>> = if needs_cv && stride > 1 {
        let grid = match method {
            MethodSpec::Kpca { gamma_grid, .. } => gamma_grid.clone(),
            _ => unreachable!(),
        };
        Some(
            origins
                .par_iter()
                .enumerate()
                .filter(|(pos, _)| pos % stride == 0)
                .map(|(_, &origin)| {
                    let visible = rolling_window(panel, origin, origin + 1)?;
                    let window = rolling_window(&visible, visible.rows() - 1, window_len)?;
                    cross_validate_gamma(&window, target, h, method, &grid, opts)
                })
                .collect(),
        )
    } else {
        None
    };

    let outcomes: Vec<(usize, Result<ForecastRecord>)> = origins
        .par_iter()
        .enumerate()
        .map(|(pos, &origin)| {
            let run = || -> Result<ForecastRecord> {
                let visible = rolling_window(panel, origin, origin + 1)?;
                let gamma_override = match &anchor_gammas {
                    Some(anchors) => match &anchors[pos / stride] {
                        Ok(pair) => Some(*pair),
                        Err(e) => return Err(Error::Config(format!("anchor CV failed: {e}"))),
                    },
                    None => None,
                };
                let out = forecast_at_origin(&visible, target, method, h, opts, gamma_override)?;
                let actual = target_col[origin + h];
                if !out.value.is_finite() || !actual.is_finite() {
                    return Err(Error::ShapeMismatch(format!(
                        "non-finite forecast {} or actual {actual}",
                        out.value
                    )));
                }
                Ok(ForecastRecord {
                    target: target.name.clone(),
                    date: panel.dates[origin + h],
                    horizon: h,
                    method: method_id.clone(),
                    forecast: out.value,
                    actual,
                    origin_index: origin,
                    max_row_visible: origin,
                    gamma: out.gamma,
                    cv_fallback: out.cv_fallback,
                })
            };
            (origin, run())
        })
        .collect();

    let mut records = Vec::new();
    let mut skips = Vec::new();
    for (origin, outcome) in outcomes {
        match outcome {
            Ok(rec) => records.push(rec),
            Err(e) => skips.push(SkipRecord {
                target: target.name.clone(),
                horizon: h,
                method: method_id.clone(),
                origin_index: origin,
                reason: e.to_string(),
            }),
        }
    }
    records.sort_by_key(|r| r.origin_index);
    Ok(RollingOutput { records, skips })
}

/// Mean squared prediction error.
pub fn mspe(records: &[ForecastRecord]) -> Result<f64> {
    if records.is_empty() {
        return Err(Error::EmptyRecords);
    }
    let total: f64 = records.iter().map(|r| r.error() * r.error()).sum();
    Ok(total / records.len() as f64)
}

/// Ratio of MSPEs over the common date set of the two record lists.
pub fn relative_mspe(records: &[ForecastRecord], baseline: &[ForecastRecord]) -> Result<f64> {
    if records.is_empty() || baseline.is_empty() {
        return Err(Error::EmptyRecords);
    }
    let (own, base) = align_by_date(records, baseline)?;
    let num = mspe(&own)?;
    let den = mspe(&base)?;
    Ok(num / den)
}

/// Restrict both lists to their common dates, in date order.
fn align_by_date(
    a: &[ForecastRecord],
    b: &[ForecastRecord],
) -> Result<(Vec<ForecastRecord>, Vec<ForecastRecord>)> {
    let map_b: BTreeMap<MonthDate, &ForecastRecord> = b.iter().map(|r| (r.date, r)).collect();
    let mut out_a = Vec::new();
    let mut out_b = Vec::new();
    let mut sorted_a: Vec<&ForecastRecord> = a.iter().collect();
    sorted_a.sort_by_key(|r| r.date);
    for rec in sorted_a {
        if let Some(other) = map_b.get(&rec.date) {
            out_a.push(rec.clone());
            out_b.push((*other).clone());
        }
    }
    if out_a.is_empty() {
        return Err(Error::DateMisalignment {
            first: format!("{} vs {}", a[0].date, b[0].date),
        });
    }
    Ok((out_a, out_b))
}

/// Diebold-Mariano outcome.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct DmTest {
    pub statistic: f64,
    pub p_value: f64,
    /// Set when the HAC variance came out non-positive; statistic and
    /// p-value are NaN in that case.
    pub degenerate: bool,
}

/// Two-sided Diebold-Mariano test of equal squared-error accuracy.
///
/// The loss differential is d_t = e1_t^2 - e2_t^2; its long-run variance
/// uses a Bartlett kernel with h-1 lags, so at h = 1 the statistic reduces
/// to the plain one-sample t-statistic on d_t.
pub fn dm_test(e1: &[f64], e2: &[f64], h: usize) -> Result<DmTest> {
    if e1.len() != e2.len() {
        return Err(Error::LengthMismatch {
            left: e1.len(),
            right: e2.len(),
        });
    }
    let n = e1.len();
    if n < 20 {
        return Err(Error::TooFewObservations { n, min: 20 });
    }
    let d: Vec<f64> = e1
        .iter()
        .zip(e2.iter())
        .map(|(a, b)| a * a - b * b)
        .collect();
    let nf = n as f64;
    let dbar = d.iter().sum::<f64>() / nf;
    let centered: Vec<f64> = d.iter().map(|v| v - dbar).collect();
    let gamma0 = centered.iter().map(|v| v * v).sum::<f64>() / nf;
    if gamma0 == 0.0 {
        if dbar == 0.0 {
            return Ok(DmTest {
                statistic: 0.0,
                p_value: 1.0,
                degenerate: false,
            });
        }
        return Err(Error::DegenerateLossDifferential);
    }
    let mut variance = gamma0;
    let lags = h.saturating_sub(1).min(n - 1);
    for k in 1..=lags {
        let weight = 1.0 - k as f64 / h as f64;
        let mut cov = 0.0;
        for t in k..n {
            cov += centered[t] * centered[t - k];
        }
        cov /= nf;
        variance += 2.0 * weight * cov;
    }
    if variance <= 0.0 {
        return Ok(DmTest {
            statistic: f64::NAN,
            p_value: f64::NAN,
            degenerate: true,
        });
    }
    let statistic = dbar / (variance / nf).sqrt();
    let p_value = libm::erfc(statistic.abs() / std::f64::consts::SQRT_2);
    Ok(DmTest {
        statistic,
        p_value,
        degenerate: false,
    })
}

/// One report cell: a (target, horizon, method) summary.
#[derive(Debug, Clone, Serialize)]
pub struct ReportRow {
    pub target: String,
    pub horizon: usize,
    pub method: String,
    pub n_forecasts: usize,
    pub mspe: f64,
    pub relative_mspe: f64,
    pub dm_stat: Option<f64>,
    pub dm_pvalue: Option<f64>,
    /// Minimum relative MSPE for this (target, horizon).
    pub star: bool,
    /// DM p-value below 0.10 against the baseline.
    pub bold: bool,
}

/// Table-1-style report keyed by (target, horizon, method).
#[derive(Debug, Clone, Serialize)]
pub struct EvaluationReport {
    pub baseline: String,
    pub rows: Vec<ReportRow>,
}

/// Aggregate per-forecast records into a report against the baseline
/// method. Every (target, horizon) must include baseline records.
pub fn build_report(records: &[ForecastRecord], baseline: &str) -> Result<EvaluationReport> {
    if records.is_empty() {
        return Err(Error::EmptyRecords);
    }
    type MethodRecords = Vec<(String, Vec<ForecastRecord>)>;
    let mut groups: BTreeMap<(String, usize, String), Vec<ForecastRecord>> = BTreeMap::new();
    for rec in records {
        groups
            .entry((rec.target.clone(), rec.horizon, rec.method.clone()))
            .or_default()
            .push(rec.clone());
    }
    let mut cells: BTreeMap<(String, usize), MethodRecords> = BTreeMap::new();
    for ((target, h, method), recs) in groups {
        cells.entry((target, h)).or_default().push((method, recs));
    }

    let mut rows = Vec::new();
    for ((target, h), methods) in &cells {
        let base_records = methods
            .iter()
            .find(|(m, _)| m == baseline)
            .map(|(_, r)| r.clone())
            .ok_or_else(|| Error::MissingBaseline {
                target: target.clone(),
                horizon: *h,
            })?;
        let mut block = Vec::new();
        for (method, recs) in methods {
            let own_mspe = mspe(recs)?;
            let (rel, dm_stat, dm_pvalue) = if method == baseline {
                (1.0, None, None)
            } else {
                let rel = relative_mspe(recs, &base_records)?;
                let (own, base) = align_by_date(recs, &base_records)?;
                let e1: Vec<f64> = own.iter().map(|r| r.error()).collect();
                let e2: Vec<f64> = base.iter().map(|r| r.error()).collect();
                match dm_test(&e1, &e2, *h) {
                    Ok(dm) if !dm.degenerate => (rel, Some(dm.statistic), Some(dm.p_value)),
                    _ => (rel, None, None),
                }
            };
            block.push(ReportRow {
                target: target.clone(),
                horizon: *h,
                method: method.clone(),
                n_forecasts: recs.len(),
                mspe: own_mspe,
                relative_mspe: rel,
                dm_stat,
                dm_pvalue,
                star: false,
                bold: dm_pvalue.map(|p| p < 0.10).unwrap_or(false),
            });
        }
        let min_rel = block
            .iter()
            .map(|r| r.relative_mspe)
            .fold(f64::INFINITY, f64::min);
        for row in &mut block {
            row.star = row.relative_mspe <= min_rel + 1e-15;
        }
        rows.extend(block);
    }
    Ok(EvaluationReport {
        baseline: baseline.to_string(),
        rows,
    })
}

impl EvaluationReport {
    /// CSV rendering, one row per (target, horizon, method).
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "target,horizon,method,n_forecasts,mspe,rel_mspe,dm_stat,dm_pvalue,star,bold\n",
        );
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{:.10e},{:.6},{},{},{},{}\n",
                r.target,
                r.horizon,
                r.method,
                r.n_forecasts,
                r.mspe,
                r.relative_mspe,
                r.dm_stat.map(|v| format!("{v:.4}")).unwrap_or_default(),
                r.dm_pvalue.map(|v| format!("{v:.4}")).unwrap_or_default(),
                r.star as u8,
                r.bold as u8
            ));
        }
        out
    }

    /// Aligned plain-text table, one block per target: methods down the
    /// rows, horizons across the columns. `*` marks the best relative MSPE
    /// for a horizon, `+` marks DM significance at the 10% level.
    pub fn to_text(&self) -> String {
        let mut targets: Vec<&str> = self.rows.iter().map(|r| r.target.as_str()).collect();
        targets.sort();
        targets.dedup();
        let mut horizons: Vec<usize> = self.rows.iter().map(|r| r.horizon).collect();
        horizons.sort();
        horizons.dedup();
        let mut methods: Vec<&str> = self.rows.iter().map(|r| r.method.as_str()).collect();
        methods.sort();
        methods.dedup();

        let mut out = String::new();
        out.push_str(&format!(
            "Relative MSPE vs {} (*: best per horizon, +: DM p<0.10)\n",
            self.baseline
        ));
        for target in targets {
            out.push_str(&format!("\n== {target} ==\n"));
            out.push_str(&format!("{:<14}", "method"));
            for h in &horizons {
                out.push_str(&format!("{:>12}", format!("h={h}")));
            }
            out.push('\n');
            for method in &methods {
                out.push_str(&format!("{method:<14}"));
                for h in &horizons {
                    let cell = self
                        .rows
                        .iter()
                        .find(|r| r.target == target && r.horizon == *h && &r.method == method);
                    match cell {
                        Some(r) => {
                            let mut text = format!("{:.4}", r.relative_mspe);
                            if r.star {
                                text.push('*');
                            }
                            if r.bold {
                                text.push('+');
                            }
                            out.push_str(&format!("{text:>12}"));
                        }
                        None => out.push_str(&format!("{:>12}", "-")),
                    }
                }
                out.push('\n');
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::MonthDate;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn record(
        target: &str,
        method: &str,
        h: usize,
        month_offset: usize,
        forecast: f64,
        actual: f64,
    ) -> ForecastRecord {
        ForecastRecord {
            target: target.to_string(),
            date: MonthDate::new(1970, 1).unwrap().add_months(month_offset),
            horizon: h,
            method: method.to_string(),
            forecast,
            actual,
            origin_index: month_offset,
            max_row_visible: month_offset,
            gamma: None,
            cv_fallback: false,
        }
    }

    #[test]
    fn mspe_of_unit_errors_is_one() {
        let recs: Vec<ForecastRecord> = (0..10)
            .map(|i| record("A", "pca", 1, i, 0.0, if i % 2 == 0 { 1.0 } else { -1.0 }))
            .collect();
        assert_eq!(mspe(&recs).unwrap(), 1.0);
    }

    #[test]
    fn relative_mspe_of_method_against_itself_is_one() {
        let recs: Vec<ForecastRecord> = (0..10)
            .map(|i| record("A", "pca", 1, i, 0.1 * i as f64, 0.2 * i as f64))
            .collect();
        assert_eq!(relative_mspe(&recs, &recs).unwrap(), 1.0);
    }

    #[test]
    fn relative_mspe_below_one_iff_method_beats_baseline() {
        let good: Vec<ForecastRecord> =
            (0..10).map(|i| record("A", "m", 1, i, 0.0, 0.5)).collect();
        let bad: Vec<ForecastRecord> =
            (0..10).map(|i| record("A", "pca", 1, i, 0.0, 1.0)).collect();
        assert!(relative_mspe(&good, &bad).unwrap() < 1.0);
        assert!(relative_mspe(&bad, &good).unwrap() > 1.0);
    }

    #[test]
    fn relative_mspe_uses_common_dates_only() {
        let a: Vec<ForecastRecord> = (0..10).map(|i| record("A", "m", 1, i, 0.0, 1.0)).collect();
        // baseline misses the first three dates
        let b: Vec<ForecastRecord> =
            (3..10).map(|i| record("A", "pca", 1, i, 0.0, 1.0)).collect();
        assert_eq!(relative_mspe(&a, &b).unwrap(), 1.0);
    }

    #[test]
    fn relative_mspe_errors_on_disjoint_dates() {
        let a: Vec<ForecastRecord> = (0..5).map(|i| record("A", "m", 1, i, 0.0, 1.0)).collect();
        let b: Vec<ForecastRecord> =
            (10..15).map(|i| record("A", "pca", 1, i, 0.0, 1.0)).collect();
        assert!(matches!(
            relative_mspe(&a, &b),
            Err(Error::DateMisalignment { .. })
        ));
    }

    #[test]
    fn dm_identical_errors_gives_zero_stat_unit_p() {
        let e: Vec<f64> = (0..30).map(|i| (i as f64 * 0.37).sin()).collect();
        let dm = dm_test(&e, &e, 1).unwrap();
        assert_eq!(dm.statistic, 0.0);
        assert_eq!(dm.p_value, 1.0);
    }

    #[test]
    fn dm_is_antisymmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let e1: Vec<f64> = (0..50).map(|_| StandardNormal.sample(&mut rng)).collect();
        let e2: Vec<f64> = (0..50)
            .map(|_| 1.3 * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng))
            .collect();
        let ab = dm_test(&e1, &e2, 3).unwrap();
        let ba = dm_test(&e2, &e1, 3).unwrap();
        assert!((ab.statistic + ba.statistic).abs() < 1e-12);
        assert!((ab.p_value - ba.p_value).abs() < 1e-12);
    }

    #[test]
    fn dm_at_h1_matches_plain_t_statistic() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let e1: Vec<f64> = (0..80).map(|_| StandardNormal.sample(&mut rng)).collect();
        let e2: Vec<f64> = (0..80)
            .map(|_| 0.9 * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng))
            .collect();
        let dm = dm_test(&e1, &e2, 1).unwrap();
        // direct t-statistic on the loss differential
        let d: Vec<f64> = e1
            .iter()
            .zip(e2.iter())
            .map(|(a, b)| a * a - b * b)
            .collect();
        let n = d.len() as f64;
        let mean = d.iter().sum::<f64>() / n;
        let var = d.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let t = mean / (var / n).sqrt();
        assert!((dm.statistic - t).abs() < 1e-10);
    }

    #[test]
    fn dm_rejects_short_and_mismatched_input() {
        let short = vec![1.0; 10];
        assert!(matches!(
            dm_test(&short, &short, 1),
            Err(Error::TooFewObservations { .. })
        ));
        let a = vec![1.0; 25];
        let b = vec![1.0; 24];
        assert!(matches!(
            dm_test(&a, &b, 1),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn dm_constant_nonzero_differential_is_degenerate() {
        let e1 = vec![2.0; 25];
        let e2 = vec![1.0; 25];
        assert!(matches!(
            dm_test(&e1, &e2, 1),
            Err(Error::DegenerateLossDifferential)
        ));
    }

    #[test]
    fn report_single_method_is_all_ones() {
        let recs: Vec<ForecastRecord> = (0..25)
            .map(|i| record("A", "pca", 1, i, 0.0, (i as f64 * 0.3).sin()))
            .collect();
        let report = build_report(&recs, "pca").unwrap();
        assert_eq!(report.rows.len(), 1);
        assert_eq!(report.rows[0].relative_mspe, 1.0);
        assert!(report.rows[0].star);
    }

    #[test]
    fn report_stars_the_uniformly_better_method() {
        let mut recs = Vec::new();
        for i in 0..25 {
            let actual = (i as f64 * 0.3).sin() + 1.0;
            recs.push(record("A", "pca", 1, i, 0.0, actual));
            recs.push(record("A", "better", 1, i, actual * 0.5, actual));
        }
        let report = build_report(&recs, "pca").unwrap();
        let better = report.rows.iter().find(|r| r.method == "better").unwrap();
        let base = report.rows.iter().find(|r| r.method == "pca").unwrap();
        assert!(better.star);
        assert!(!base.star);
        assert!(better.relative_mspe < 1.0);
        assert_eq!(base.relative_mspe, 1.0);
    }

    #[test]
    fn report_requires_baseline_everywhere() {
        let recs: Vec<ForecastRecord> =
            (0..25).map(|i| record("A", "spc", 1, i, 0.0, 1.0)).collect();
        assert!(matches!(
            build_report(&recs, "pca"),
            Err(Error::MissingBaseline { .. })
        ));
    }

    fn small_panel(t: usize, seed: u64) -> crate::data::TimeSeriesPanel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 6;
        let mut values = ndarray::Array2::zeros((t, n + 1));
        for i in 0..t {
            for j in 0..=n {
                let v: f64 = StandardNormal.sample(&mut rng);
                values[[i, j]] = v + (i as f64 * 0.05).sin();
            }
        }
        let mut names = vec!["Y".to_string()];
        for j in 0..n {
            names.push(format!("X{j}"));
        }
        crate::data::TimeSeriesPanel {
            values,
            dates: (0..t)
                .map(|k| MonthDate::new(1980, 1).unwrap().add_months(k))
                .collect(),
            names,
        }
    }

    #[test]
    fn cv_single_value_grid_returns_it() {
        let panel = small_panel(40, 1);
        let target = crate::data::TargetSpec::new("Y", "g");
        let opts = RollingOptions {
            window_base: 41,
            maxima: (1, 1, 1),
            cv_points: 5,
            cv_stride: 1,
            eval_start: None,
        };
        let method = MethodSpec::Kpca {
            kernel: KernelSpec::rbf(1.0),
            gamma_grid: vec![0.25],
        };
        let (g, fallback) =
            cross_validate_gamma(&panel, &target, 1, &method, &[0.25], &opts).unwrap();
        assert_eq!(g, 0.25);
        assert!(!fallback);
    }

    #[test]
    fn cv_is_deterministic_and_breaks_ties_low() {
        let panel = small_panel(60, 2);
        let target = crate::data::TargetSpec::new("Y", "g");
        let opts = RollingOptions {
            window_base: 61,
            maxima: (1, 1, 1),
            cv_points: 5,
            cv_stride: 1,
            eval_start: None,
        };
        let method = MethodSpec::Kpca {
            kernel: KernelSpec::rbf(1.0),
            gamma_grid: vec![0.5, 0.05],
        };
        let (g1, _) =
            cross_validate_gamma(&panel, &target, 1, &method, &[0.5, 0.05], &opts).unwrap();
        let (g2, _) =
            cross_validate_gamma(&panel, &target, 1, &method, &[0.05, 0.5], &opts).unwrap();
        assert_eq!(g1, g2);

        // a duplicated value ties with itself; the smaller (first) wins
        let (g3, _) =
            cross_validate_gamma(&panel, &target, 1, &method, &[0.3, 0.3], &opts).unwrap();
        assert_eq!(g3, 0.3);
    }

    #[test]
    fn cv_falls_back_to_midpoint_when_window_short() {
        let panel = small_panel(12, 3);
        let target = crate::data::TargetSpec::new("Y", "g");
        let opts = RollingOptions {
            window_base: 13,
            maxima: (1, 1, 1),
            cv_points: 5,
            cv_stride: 1,
            eval_start: None,
        };
        let method = MethodSpec::Kpca {
            kernel: KernelSpec::rbf(1.0),
            gamma_grid: vec![0.01, 0.1, 1.0],
        };
        let (g, fallback) =
            cross_validate_gamma(&panel, &target, 1, &method, &[0.01, 0.1, 1.0], &opts).unwrap();
        assert!(fallback);
        assert_eq!(g, 0.1);
    }

    #[test]
    fn rolling_window_geometry_matches_protocol() {
        // window_base 120, h = 1: window length 119, first origin index 118
        let panel = small_panel(140, 4);
        let target = crate::data::TargetSpec::new("Y", "g");
        let opts = RollingOptions {
            window_base: 120,
            maxima: (1, 1, 1),
            cv_points: 5,
            cv_stride: 1,
            eval_start: None,
        };
        let out = run_rolling(&panel, &target, &MethodSpec::Pca, 1, &opts).unwrap();
        let first = out.records.iter().map(|r| r.origin_index).min().unwrap();
        assert_eq!(first, 118);
        assert_eq!(out.records.len() + out.skips.len(), 140 - 1 - 118);
    }

    #[test]
    fn full_length_panel_yields_604_evaluation_months() {
        // 724 usable rows with the evaluation period pinned to start 120
        // months in leave exactly 604 forecasts at every horizon
        let panel = small_panel(724, 5);
        let target = crate::data::TargetSpec::new("Y", "g");
        for h in [1usize, 24] {
            let opts = RollingOptions {
                window_base: 120,
                maxima: (1, 1, 1),
                cv_points: 5,
                cv_stride: 1,
                eval_start: Some(panel.dates[120]),
            };
            let out = run_rolling(&panel, &target, &MethodSpec::Pca, h, &opts).unwrap();
            assert_eq!(out.records.len() + out.skips.len(), 604, "h={h}");
            assert!(out.skips.is_empty());
            assert_eq!(out.records[0].date, panel.dates[120]);
        }
    }

    #[test]
    fn report_cell_count_full_grid() {
        // 8 targets x 7 horizons x (5 comparison methods + baseline)
        let targets: Vec<String> = (0..8).map(|i| format!("T{i}")).collect();
        let horizons = [1usize, 3, 6, 9, 12, 18, 24];
        let methods = ["pca", "spc", "pc2", "kpca_sigmoid", "kpca_rbf", "kpca_poly2"];
        let mut recs = Vec::new();
        for target in &targets {
            for &h in &horizons {
                for method in &methods {
                    for i in 0..21 {
                        recs.push(record(
                            target,
                            method,
                            h,
                            i,
                            (i as f64 * 0.17).cos(),
                            (i as f64 * 0.29).sin(),
                        ));
                    }
                }
            }
        }
        let report = build_report(&recs, "pca").unwrap();
        assert_eq!(report.rows.len(), 8 * 7 * 6);
        let comparison_cells = report.rows.iter().filter(|r| r.method != "pca").count();
        assert_eq!(comparison_cells, 8 * 7 * 5);
        let csv = report.to_csv();
        assert_eq!(csv.lines().count(), 1 + 8 * 7 * 6);
        let text = report.to_text();
        assert!(text.contains("== T0 =="));
    }
}
