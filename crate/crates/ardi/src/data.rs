//! FRED-MD-style panel ingestion: CSV loading, stationarity transformation
//! codes, balancing, standardization, and rolling windows.
//!
//! Transformation codes follow the McCracken convention:
//! 1 level, 2 first difference, 3 second difference, 4 log,
//! 5 log difference, 6 second log difference, 7 difference of percent change.

use std::fmt;
use std::path::Path;

use ndarray::{Array1, Array2, Axis, s};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Calendar month. Day-of-month in source files is ignored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct MonthDate {
    pub year: i32,
    pub month: u8,
}

impl MonthDate {
    pub fn new(year: i32, month: u8) -> Result<Self> {
        if !(1..=12).contains(&month) {
            return Err(Error::InvalidDate(format!("{year}-{month:02}")));
        }
        Ok(MonthDate { year, month })
    }

    /// Accepts `M/D/YYYY` (FRED-MD raw files) or `YYYY-MM`; any
    /// day-of-month component is ignored.
    pub fn parse(text: &str) -> Result<Self> {
        let t = text.trim();
        let bad = || Error::InvalidDate(t.to_string());
        if let Some((year_part, rest)) = t.split_once('-') {
            if year_part.len() == 4 {
                let year: i32 = year_part.parse().map_err(|_| bad())?;
                let month_part = rest.split('-').next().unwrap_or("");
                let month: u8 = month_part.parse().map_err(|_| bad())?;
                return MonthDate::new(year, month);
            }
        }
        let parts: Vec<&str> = t.split('/').collect();
        if parts.len() == 3 {
            let month: u8 = parts[0].parse().map_err(|_| bad())?;
            let year: i32 = parts[2].parse().map_err(|_| bad())?;
            return MonthDate::new(year, month);
        }
        Err(bad())
    }

    pub fn next(self) -> Self {
        if self.month == 12 {
            MonthDate {
                year: self.year + 1,
                month: 1,
            }
        } else {
            MonthDate {
                year: self.year,
                month: self.month + 1,
            }
        }
    }

    pub fn add_months(self, n: usize) -> Self {
        let total = self.year as i64 * 12 + (self.month as i64 - 1) + n as i64;
        MonthDate {
            year: (total.div_euclid(12)) as i32,
            month: (total.rem_euclid(12) + 1) as u8,
        }
    }
}

impl fmt::Display for MonthDate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}", self.year, self.month)
    }
}

/// FRED-MD stationarity transformation code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Tcode {
    Level,
    Diff,
    Diff2,
    Log,
    LogDiff,
    LogDiff2,
    PctChangeDiff,
}

impl Tcode {
    pub fn from_code(code: i64, series: &str) -> Result<Self> {
        match code {
            1 => Ok(Tcode::Level),
            2 => Ok(Tcode::Diff),
            3 => Ok(Tcode::Diff2),
            4 => Ok(Tcode::Log),
            5 => Ok(Tcode::LogDiff),
            6 => Ok(Tcode::LogDiff2),
            7 => Ok(Tcode::PctChangeDiff),
            _ => Err(Error::InvalidTcode {
                series: series.to_string(),
                code,
            }),
        }
    }

    pub fn code(self) -> u8 {
        match self {
            Tcode::Level => 1,
            Tcode::Diff => 2,
            Tcode::Diff2 => 3,
            Tcode::Log => 4,
            Tcode::LogDiff => 5,
            Tcode::LogDiff2 => 6,
            Tcode::PctChangeDiff => 7,
        }
    }

    /// Number of leading observations lost to differencing. Code 7 needs
    /// two lags: one for the percent change and one for its difference.
    pub fn leading_missing(self) -> usize {
        match self {
            Tcode::Level | Tcode::Log => 0,
            Tcode::Diff | Tcode::LogDiff => 1,
            Tcode::Diff2 | Tcode::LogDiff2 | Tcode::PctChangeDiff => 2,
        }
    }

    fn takes_log(self) -> bool {
        matches!(self, Tcode::Log | Tcode::LogDiff | Tcode::LogDiff2)
    }
}

/// Raw panel as loaded from disk; missing cells are NaN.
#[derive(Debug, Clone)]
pub struct RawPanel {
    pub values: Array2<f64>,
    pub dates: Vec<MonthDate>,
    pub names: Vec<String>,
    pub tcodes: Vec<Tcode>,
}

/// Balanced panel: no missing cells, one date per row.
#[derive(Debug, Clone)]
pub struct TimeSeriesPanel {
    pub values: Array2<f64>,
    pub dates: Vec<MonthDate>,
    pub names: Vec<String>,
}

impl TimeSeriesPanel {
    pub fn rows(&self) -> usize {
        self.values.nrows()
    }

    pub fn cols(&self) -> usize {
        self.values.ncols()
    }

    pub fn column_index(&self, name: &str) -> Result<usize> {
        self.names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::MissingSeries {
                name: name.to_string(),
            })
    }

    pub fn column(&self, name: &str) -> Result<Array1<f64>> {
        let idx = self.column_index(name)?;
        Ok(self.values.column(idx).to_owned())
    }

    /// Panel with the named column removed.
    pub fn without_column(&self, name: &str) -> Result<TimeSeriesPanel> {
        let idx = self.column_index(name)?;
        let keep: Vec<usize> = (0..self.cols()).filter(|&j| j != idx).collect();
        let values = self.values.select(Axis(1), &keep);
        let names = keep.iter().map(|&j| self.names[j].clone()).collect();
        Ok(TimeSeriesPanel {
            values,
            dates: self.dates.clone(),
            names,
        })
    }
}

/// A forecast target: a series name plus its FRED-MD group label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TargetSpec {
    pub name: String,
    pub group: String,
}

impl TargetSpec {
    pub fn new(name: impl Into<String>, group: impl Into<String>) -> Self {
        TargetSpec {
            name: name.into(),
            group: group.into(),
        }
    }

    pub fn validate(&self, panel: &TimeSeriesPanel) -> Result<()> {
        panel.column_index(&self.name).map(|_| ())
    }
}

/// Per-column statistics captured by [`standardize`] so forecasts can be
/// mapped back to the original scale.
#[derive(Debug, Clone)]
pub struct Standardization {
    pub means: Vec<f64>,
    pub norms: Vec<f64>,
}

/// Load a FRED-MD-style CSV: header row with series names, a `Transform:`
/// row with the per-series code, then one row per month. Empty cells are
/// preserved as missing.
pub fn load_fred_md(path: &Path) -> Result<RawPanel> {
    let display = path.display().to_string();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_path(path)
        .map_err(|e| Error::MalformedCsv {
            path: display.clone(),
            detail: e.to_string(),
        })?;

    let mut records = reader.records();
    let header = records
        .next()
        .ok_or_else(|| Error::MalformedCsv {
            path: display.clone(),
            detail: "empty file".to_string(),
        })?
        .map_err(|e| Error::MalformedCsv {
            path: display.clone(),
            detail: e.to_string(),
        })?;
    let names: Vec<String> = header.iter().skip(1).map(|s| s.trim().to_string()).collect();
    if names.is_empty() {
        return Err(Error::MalformedCsv {
            path: display,
            detail: "header row has no series columns".to_string(),
        });
    }

    let tcode_row = records
        .next()
        .ok_or_else(|| Error::MalformedCsv {
            path: display.clone(),
            detail: "missing transform row".to_string(),
        })?
        .map_err(|e| Error::MalformedCsv {
            path: display.clone(),
            detail: e.to_string(),
        })?;
    let mut tcodes = Vec::with_capacity(names.len());
    for (j, cell) in tcode_row.iter().skip(1).enumerate() {
        let series = names.get(j).map(String::as_str).unwrap_or("?");
        let code: i64 = cell
            .trim()
            .parse()
            .map_err(|_| Error::MalformedCsv {
                path: display.clone(),
                detail: format!("transform code {cell:?} for series {series} is not an integer"),
            })?;
        tcodes.push(Tcode::from_code(code, series)?);
    }
    if tcodes.len() != names.len() {
        return Err(Error::MalformedCsv {
            path: display,
            detail: format!(
                "{} transform codes for {} series",
                tcodes.len(),
                names.len()
            ),
        });
    }

    let mut dates = Vec::new();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (row_idx, rec) in records.enumerate() {
        let rec = rec.map_err(|e| Error::MalformedCsv {
            path: display.clone(),
            detail: e.to_string(),
        })?;
        let date_cell = rec.get(0).unwrap_or("").trim();
        if date_cell.is_empty() {
            continue;
        }
        let date = MonthDate::parse(date_cell)?;
        if let Some(prev) = dates.last() {
            if date <= *prev {
                return Err(Error::NonMonotoneDates {
                    row: row_idx + 2,
                    prev: prev.to_string(),
                    next: date.to_string(),
                });
            }
            if date != prev.next() {
                return Err(Error::MalformedCsv {
                    path: display.clone(),
                    detail: format!(
                        "dates are not consecutive months: {prev} followed by {date}"
                    ),
                });
            }
        }
        dates.push(date);
        let mut row = vec![f64::NAN; names.len()];
        for (j, slot) in row.iter_mut().enumerate() {
            let cell = rec.get(j + 1).unwrap_or("").trim();
            if !cell.is_empty() {
                *slot = cell.parse().map_err(|_| Error::MalformedCsv {
                    path: display.clone(),
                    detail: format!("cell {cell:?} at row {}, series {}", row_idx + 3, names[j]),
                })?;
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::MalformedCsv {
            path: display,
            detail: "no data rows".to_string(),
        });
    }

    let mut values = Array2::from_elem((rows.len(), names.len()), f64::NAN);
    for (i, row) in rows.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            values[[i, j]] = v;
        }
    }
    Ok(RawPanel {
        values,
        dates,
        names,
        tcodes,
    })
}

/// Apply a transformation code to one series. The output has the same
/// length as the input, with `leading_missing()` NaN entries at the front.
/// `series` is used only for error messages.
pub fn apply_tcode(series_values: &[f64], code: Tcode, series: &str) -> Result<Vec<f64>> {
    let n = series_values.len();
    if code.takes_log() {
        for (row, &v) in series_values.iter().enumerate() {
            if v.is_finite() && v <= 0.0 {
                return Err(Error::NonPositiveLog {
                    series: series.to_string(),
                    row,
                });
            }
        }
    }
    let x = series_values;
    let out = match code {
        Tcode::Level => x.to_vec(),
        Tcode::Diff => diff(x),
        Tcode::Diff2 => diff(&diff(x)),
        Tcode::Log => x.iter().map(|v| v.ln()).collect(),
        Tcode::LogDiff => diff(&x.iter().map(|v| v.ln()).collect::<Vec<_>>()),
        Tcode::LogDiff2 => diff(&diff(&x.iter().map(|v| v.ln()).collect::<Vec<_>>())),
        Tcode::PctChangeDiff => {
            let mut pct = vec![f64::NAN; n];
            for t in 1..n {
                pct[t] = x[t] / x[t - 1] - 1.0;
            }
            diff(&pct)
        }
    };
    Ok(out)
}

fn diff(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut out = vec![f64::NAN; n];
    for t in 1..n {
        out[t] = x[t] - x[t - 1];
    }
    out
}

/// Result of [`balance_and_transform`]: the balanced panel plus the names
/// of any columns dropped for still containing missing cells.
#[derive(Debug, Clone)]
pub struct BalancedPanel {
    pub panel: TimeSeriesPanel,
    pub dropped: Vec<String>,
}

/// Transform every column by its tcode, trim the leading rows lost to
/// differencing, optionally cut to `first_sample`, then drop any column
/// that still contains missing cells.
pub fn balance_and_transform(
    raw: &RawPanel,
    first_sample: Option<MonthDate>,
) -> Result<BalancedPanel> {
    let t_raw = raw.values.nrows();
    let n = raw.values.ncols();
    let mut transformed = Array2::from_elem((t_raw, n), f64::NAN);
    for j in 0..n {
        let col: Vec<f64> = raw.values.column(j).to_vec();
        let out = apply_tcode(&col, raw.tcodes[j], &raw.names[j])?;
        for (i, v) in out.into_iter().enumerate() {
            transformed[[i, j]] = v;
        }
    }

    let max_lead = raw
        .tcodes
        .iter()
        .map(|c| c.leading_missing())
        .max()
        .unwrap_or(0);
    let mut start = max_lead;
    if let Some(first) = first_sample {
        while start < t_raw && raw.dates[start] < first {
            start += 1;
        }
    }
    if start >= t_raw {
        return Err(Error::PanelTooSmall {
            rows: 0,
            min: 1,
        });
    }

    let trimmed = transformed.slice(s![start.., ..]);
    let dates: Vec<MonthDate> = raw.dates[start..].to_vec();

    let mut keep = Vec::new();
    let mut dropped = Vec::new();
    for j in 0..n {
        if trimmed.column(j).iter().all(|v| v.is_finite()) {
            keep.push(j);
        } else {
            dropped.push(raw.names[j].clone());
        }
    }
    if keep.len() < 2 {
        return Err(Error::TooFewColumns {
            surviving: keep.len(),
        });
    }

    let values = trimmed.select(Axis(1), &keep);
    let names = keep.iter().map(|&j| raw.names[j].clone()).collect();
    Ok(BalancedPanel {
        panel: TimeSeriesPanel {
            values,
            dates,
            names,
        },
        dropped,
    })
}

/// Demean each column and scale it to unit l2 norm.
pub fn standardize(panel: &TimeSeriesPanel) -> Result<(TimeSeriesPanel, Standardization)> {
    let t = panel.rows();
    let n = panel.cols();
    let mut values = panel.values.clone();
    let mut means = Vec::with_capacity(n);
    let mut norms = Vec::with_capacity(n);
    for j in 0..n {
        let mean = values.column(j).sum() / t as f64;
        let mut norm_sq = 0.0;
        for i in 0..t {
            values[[i, j]] -= mean;
            norm_sq += values[[i, j]] * values[[i, j]];
        }
        let norm = norm_sq.sqrt();
        if norm <= 1e-300 {
            return Err(Error::ConstantColumn {
                name: panel.names[j].clone(),
            });
        }
        for i in 0..t {
            values[[i, j]] /= norm;
        }
        means.push(mean);
        norms.push(norm);
    }
    Ok((
        TimeSeriesPanel {
            values,
            dates: panel.dates.clone(),
            names: panel.names.clone(),
        },
        Standardization { means, norms },
    ))
}

/// Rows `[end_index - length + 1, end_index]` of the panel. Standardization
/// is deliberately not inherited: every window is re-standardized by the
/// caller so no statistic leaks information past `end_index`.
pub fn rolling_window(
    panel: &TimeSeriesPanel,
    end_index: usize,
    length: usize,
) -> Result<TimeSeriesPanel> {
    let rows = panel.rows();
    let start = end_index as i64 - length as i64 + 1;
    if length == 0 || start < 0 || end_index >= rows {
        return Err(Error::WindowOutOfRange {
            start,
            end: end_index,
            rows,
        });
    }
    let start = start as usize;
    Ok(TimeSeriesPanel {
        values: panel.values.slice(s![start..=end_index, ..]).to_owned(),
        dates: panel.dates[start..=end_index].to_vec(),
        names: panel.names.clone(),
    })
}
