//! Run configuration: a TOML file drives `evaluate`, `forecast`, and
//! `montecarlo`; command-line flags override individual fields.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{MonthDate, TargetSpec};
use crate::error::{Error, Result};
use crate::evaluate::{MethodSpec, RollingOptions};
use crate::kernels::KernelSpec;
use crate::montecarlo::LinkKind;

/// The eight FRED-MD target series, one per variable group.
pub fn default_targets() -> Vec<TargetSpec> {
    vec![
        TargetSpec::new("RPI", "Output & income"),
        TargetSpec::new("CE16OV", "Labor market"),
        TargetSpec::new("HOUST", "Housing"),
        TargetSpec::new("DPCERA3M086SBEA", "Consumption & inventories"),
        TargetSpec::new("M1SL", "Money & credit"),
        TargetSpec::new("FEDFUNDS", "Interest & exchange rates"),
        TargetSpec::new("CPIAUCSL", "Prices"),
        TargetSpec::new("S&P 500", "Stock market"),
    ]
}

pub fn default_horizons() -> Vec<usize> {
    vec![1, 3, 6, 9, 12, 18, 24]
}

/// Twelve log-spaced gamma values from 1e-4 to 1e1 inclusive.
pub fn default_gamma_grid() -> Vec<f64> {
    let points = 12;
    let (lo, hi) = (-4.0_f64, 1.0_f64);
    (0..points)
        .map(|i| 10f64.powf(lo + (hi - lo) * i as f64 / (points - 1) as f64))
        .collect()
}

pub fn default_method_names() -> Vec<String> {
    ["pca", "spc", "pc2", "kpca-sigmoid", "kpca-rbf", "kpca-poly2"]
        .iter()
        .map(|s| s.to_string())
        .collect()
}

fn default_window_base() -> usize {
    120
}

fn default_maxima() -> [usize; 3] {
    [6, 6, 6]
}

fn default_seed() -> u64 {
    42
}

fn default_cv_stride() -> usize {
    1
}

fn default_cv_points() -> usize {
    5
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("ardi-out")
}

fn default_first_sample() -> Option<String> {
    Some("1960-01".to_string())
}

/// Monte Carlo experiment settings for `montecarlo`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct MonteCarloConfig {
    /// (T, N) grid for the factor-space consistency experiment.
    pub consistency_dims: Vec<[usize; 2]>,
    pub consistency_seeds: u64,
    pub r: usize,
    pub loading_scale: f64,
    pub noise_scale: f64,
    pub link: LinkKind,
    /// Sample sizes for the eigenvector concentration experiment.
    pub concentration_t: Vec<usize>,
    pub concentration_reps: usize,
    pub concentration_gamma: f64,
    pub concentration_dim: usize,
}

impl Default for MonteCarloConfig {
    fn default() -> Self {
        MonteCarloConfig {
            consistency_dims: vec![[50, 50], [100, 100], [200, 200]],
            consistency_seeds: 20,
            r: 3,
            loading_scale: 1.0,
            noise_scale: 1.0,
            link: LinkKind::Linear,
            concentration_t: vec![50, 100, 200],
            concentration_reps: 50,
            concentration_gamma: 0.5,
            concentration_dim: 2,
        }
    }
}

/// Full run configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub data_path: PathBuf,
    #[serde(default = "default_targets")]
    pub targets: Vec<TargetSpec>,
    #[serde(default = "default_horizons")]
    pub horizons: Vec<usize>,
    /// Method names: pca, spc, pc2, kpca-linear, kpca-rbf, kpca-sigmoid,
    /// kpca-poly2.
    #[serde(default = "default_method_names")]
    pub methods: Vec<String>,
    #[serde(default = "default_window_base")]
    pub window_base: usize,
    /// (P_max, M_max, K_max) for BIC selection.
    #[serde(default = "default_maxima")]
    pub maxima: [usize; 3],
    #[serde(default = "default_gamma_grid")]
    pub gamma_grid: Vec<f64>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// First usable month after transformation, e.g. "1960-01".
    #[serde(default = "default_first_sample")]
    pub first_sample: Option<String>,
    /// First month forecasts are produced for, pinning the evaluation
    /// period across horizons (e.g. "1970-01"); unset, evaluation starts
    /// at the first origin with a full window.
    #[serde(default)]
    pub eval_start: Option<String>,
    #[serde(default = "default_cv_stride")]
    pub cv_stride: usize,
    #[serde(default = "default_cv_points")]
    pub cv_points: usize,
    /// Worker threads; 0 lets the pool pick.
    #[serde(default)]
    pub jobs: usize,
    #[serde(default)]
    pub montecarlo: MonteCarloConfig,
}

impl RunConfig {
    pub fn from_path(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let config: RunConfig = toml::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.targets.is_empty() {
            return Err(Error::Config("targets list is empty".to_string()));
        }
        if self.horizons.is_empty() {
            return Err(Error::Config("horizons list is empty".to_string()));
        }
        for &h in &self.horizons {
            if h < 1 || h >= self.window_base {
                return Err(Error::Config(format!(
                    "horizon {h} must lie in 1..window_base ({})",
                    self.window_base
                )));
            }
        }
        if self.methods.is_empty() {
            return Err(Error::Config("methods list is empty".to_string()));
        }
        for name in &self.methods {
            self.method_spec(name)?;
        }
        if self.maxima.iter().any(|&m| m < 1) {
            return Err(Error::Config("selection maxima must be >= 1".to_string()));
        }
        for &g in &self.gamma_grid {
            if g <= 0.0 || !g.is_finite() {
                return Err(Error::Config(format!("gamma grid entry {g} invalid")));
            }
        }
        if let Some(text) = &self.first_sample {
            MonthDate::parse(text)
                .map_err(|_| Error::Config(format!("first_sample {text:?} is not a month")))?;
        }
        if let Some(text) = &self.eval_start {
            MonthDate::parse(text)
                .map_err(|_| Error::Config(format!("eval_start {text:?} is not a month")))?;
        }
        if self.montecarlo.consistency_dims.is_empty() || self.montecarlo.concentration_t.is_empty()
        {
            return Err(Error::Config("montecarlo grids must be non-empty".to_string()));
        }
        Ok(())
    }

    /// Resolve a method name into its spec, attaching the gamma grid.
    pub fn method_spec(&self, name: &str) -> Result<MethodSpec> {
        let spec = match name {
            "pca" => MethodSpec::Pca,
            "spc" => MethodSpec::Spc,
            "pc2" => MethodSpec::Pc2,
            "kpca-linear" => MethodSpec::Kpca {
                kernel: KernelSpec::Linear,
                gamma_grid: Vec::new(),
            },
            "kpca-rbf" => MethodSpec::Kpca {
                kernel: KernelSpec::rbf(1.0),
                gamma_grid: self.gamma_grid.clone(),
            },
            "kpca-sigmoid" => MethodSpec::Kpca {
                kernel: KernelSpec::sigmoid(1.0),
                gamma_grid: self.gamma_grid.clone(),
            },
            "kpca-poly2" => MethodSpec::Kpca {
                kernel: KernelSpec::polynomial(2, 1.0),
                gamma_grid: Vec::new(),
            },
            other => {
                return Err(Error::Config(format!("unknown method {other:?}")));
            }
        };
        Ok(spec)
    }

    pub fn method_specs(&self) -> Result<Vec<(String, MethodSpec)>> {
        self.methods
            .iter()
            .map(|name| self.method_spec(name).map(|s| (name.clone(), s)))
            .collect()
    }

    pub fn first_sample_date(&self) -> Result<Option<MonthDate>> {
        match &self.first_sample {
            Some(text) => Ok(Some(MonthDate::parse(text)?)),
            None => Ok(None),
        }
    }

    pub fn rolling_options(&self) -> RollingOptions {
        RollingOptions {
            window_base: self.window_base,
            maxima: (self.maxima[0], self.maxima[1], self.maxima[2]),
            cv_points: self.cv_points,
            cv_stride: self.cv_stride,
            eval_start: self
                .eval_start
                .as_ref()
                .and_then(|text| MonthDate::parse(text).ok()),
        }
    }
}
