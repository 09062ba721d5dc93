//! Command implementations behind the CLI: evaluation runs, single-origin
//! forecasts, Monte Carlo experiments, and the selftest property suites.
//! All artifacts are plain CSV/TOML/text files written under the configured
//! output directory, with a manifest sufficient to reproduce the run.

use std::fmt::Write as _;
use std::path::Path;

use ndarray::Array2;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::config::RunConfig;
use crate::data::{balance_and_transform, load_fred_md, MonthDate, TimeSeriesPanel};
use crate::error::{Error, Result};
use crate::evaluate::{
    build_report, forecast_at_origin, run_rolling, EvaluationReport, ForecastRecord, SkipRecord,
};
use crate::factors::{gram_eigenvectors, kernel_factors, pca_factors, projection_matrix};
use crate::kernels::{
    center_gram, eval_kernel, gram_matrix, rbf_feature_map_truncated, KernelSpec,
};
use crate::montecarlo::{concentration_experiment, consistency_experiment};

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent.display().to_string(), e))?;
    }
    std::fs::write(path, contents).map_err(|e| Error::io(path.display().to_string(), e))
}

fn write_manifest(config: &RunConfig, command: &str) -> Result<()> {
    let echoed = toml::to_string_pretty(config)
        .map_err(|e| Error::Config(format!("manifest serialization failed: {e}")))?;
    let manifest = format!(
        "# ardi run manifest\ncommand = {command:?}\nversion = {:?}\nseed = {}\n\n[config]\n{}",
        env!("CARGO_PKG_VERSION"),
        config.seed,
        echoed
            .lines()
            .map(|l| match l.strip_prefix('[') {
                Some(rest) => format!("[config.{rest}"),
                None => l.to_string(),
            })
            .collect::<Vec<_>>()
            .join("\n")
    );
    write_file(&config.output_dir.join("manifest.toml"), &manifest)
}

/// Load, transform, and balance the configured panel.
pub fn load_panel(config: &RunConfig) -> Result<(TimeSeriesPanel, Vec<String>)> {
    let raw = load_fred_md(&config.data_path)?;
    let balanced = balance_and_transform(&raw, config.first_sample_date()?)?;
    Ok((balanced.panel, balanced.dropped))
}

fn forecasts_csv(records: &[ForecastRecord]) -> String {
    let mut out = String::from(
        "target,method,horizon,date,forecast,actual,error,origin_index,max_row_visible,gamma,cv_fallback\n",
    );
    for r in records {
        let _ = writeln!(
            out,
            "{},{},{},{},{:.10e},{:.10e},{:.10e},{},{},{},{}",
            r.target,
            r.method,
            r.horizon,
            r.date,
            r.forecast,
            r.actual,
            r.error(),
            r.origin_index,
            r.max_row_visible,
            r.gamma.map(|g| format!("{g:.6e}")).unwrap_or_default(),
            r.cv_fallback as u8
        );
    }
    out
}

fn skips_csv(skips: &[SkipRecord]) -> String {
    let mut out = String::from("target,method,horizon,origin_index,reason\n");
    for s in skips {
        let _ = writeln!(
            out,
            "{},{},{},{},{:?}",
            s.target, s.method, s.horizon, s.origin_index, s.reason
        );
    }
    out
}

/// Run the full rolling evaluation for every (target, horizon, method) in
/// the config and write the report artifacts. Returns the report.
pub fn cmd_evaluate(config: &RunConfig) -> Result<EvaluationReport> {
    config.validate()?;
    let (panel, dropped) = load_panel(config)?;
    if !dropped.is_empty() {
        eprintln!("dropped {} incomplete columns: {}", dropped.len(), dropped.join(", "));
    }
    for target in &config.targets {
        target.validate(&panel)?;
    }
    let methods = config.method_specs()?;
    let opts = config.rolling_options();

    let mut tasks = Vec::new();
    for target in &config.targets {
        for &h in &config.horizons {
            for (name, spec) in &methods {
                tasks.push((target.clone(), h, name.clone(), spec.clone()));
            }
        }
    }

    let outputs: Vec<Result<(Vec<ForecastRecord>, Vec<SkipRecord>)>> = tasks
        .par_iter()
        .map(|(target, h, name, spec)| {
            let out = run_rolling(&panel, target, spec, *h, &opts)?;
            eprintln!(
                "evaluate: target={} h={} method={} forecasts={} skips={}",
                target.name,
                h,
                name,
                out.records.len(),
                out.skips.len()
            );
            for skip in &out.skips {
                eprintln!(
                    "  skip origin {} ({}): {}",
                    skip.origin_index, skip.method, skip.reason
                );
            }
            Ok((out.records, out.skips))
        })
        .collect();

    let mut records = Vec::new();
    let mut skips = Vec::new();
    for out in outputs {
        let (recs, sks) = out?;
        records.extend(recs);
        skips.extend(sks);
    }
    records.sort_by(|a, b| {
        (&a.target, a.horizon, &a.method, a.date).cmp(&(&b.target, b.horizon, &b.method, b.date))
    });

    let report = build_report(&records, "pca")?;
    write_manifest(config, "evaluate")?;
    write_file(&config.output_dir.join("forecasts.csv"), &forecasts_csv(&records))?;
    write_file(&config.output_dir.join("skips.csv"), &skips_csv(&skips))?;
    write_file(&config.output_dir.join("report.csv"), &report.to_csv())?;
    write_file(&config.output_dir.join("report.txt"), &report.to_text())?;
    Ok(report)
}

/// A single-origin forecast produced by `forecast`.
#[derive(Debug, Clone)]
pub struct AsofForecast {
    pub target: String,
    pub method: String,
    pub horizon: usize,
    pub asof: MonthDate,
    pub forecast_date: MonthDate,
    pub value: f64,
    pub gamma: Option<f64>,
}

/// Forecast every configured (target, horizon, method) using only data up
/// to and including `asof`.
pub fn cmd_forecast(config: &RunConfig, asof: MonthDate) -> Result<Vec<AsofForecast>> {
    config.validate()?;
    let (panel, _) = load_panel(config)?;
    let idx = panel
        .dates
        .iter()
        .position(|d| *d == asof)
        .ok_or_else(|| Error::Config(format!("asof {asof} is outside the sample")))?;
    for &h in &config.horizons {
        let window_len = config.window_base - h;
        if idx + 1 < window_len {
            return Err(Error::Config(format!(
                "asof {asof} precedes the first full window for h={h} (need {window_len} rows, have {})",
                idx + 1
            )));
        }
    }
    let methods = config.method_specs()?;
    let opts = config.rolling_options();
    let visible = crate::data::rolling_window(&panel, idx, idx + 1)?;

    let mut out = Vec::new();
    for target in &config.targets {
        target.validate(&panel)?;
        for &h in &config.horizons {
            for (name, spec) in &methods {
                let result = forecast_at_origin(&visible, target, spec, h, &opts, None)?;
                out.push(AsofForecast {
                    target: target.name.clone(),
                    method: name.clone(),
                    horizon: h,
                    asof,
                    forecast_date: asof.add_months(h),
                    value: result.value,
                    gamma: result.gamma,
                });
            }
        }
    }

    let mut csv = String::from("target,method,horizon,asof,forecast_date,forecast,gamma\n");
    for f in &out {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{:.10e},{}",
            f.target,
            f.method,
            f.horizon,
            f.asof,
            f.forecast_date,
            f.value,
            f.gamma.map(|g| format!("{g:.6e}")).unwrap_or_default()
        );
    }
    write_manifest(config, "forecast")?;
    write_file(&config.output_dir.join("forecast_asof.csv"), &csv)?;
    Ok(out)
}

/// Run both Monte Carlo experiments and write their CSVs.
pub fn cmd_montecarlo(config: &RunConfig) -> Result<()> {
    config.validate()?;
    let mc = &config.montecarlo;
    let consistency = consistency_experiment(
        &mc.consistency_dims,
        mc.consistency_seeds,
        mc.r,
        mc.loading_scale,
        mc.noise_scale,
        mc.link,
        config.seed,
    )?;
    let mut ccsv = String::from("t,n,seeds,mean_trace_r2\n");
    for p in &consistency {
        let _ = writeln!(ccsv, "{},{},{},{:.10}", p.t, p.n, p.seeds, p.mean_trace_r2);
    }

    let concentration = concentration_experiment(
        &mc.concentration_t,
        mc.concentration_reps,
        mc.concentration_gamma,
        mc.concentration_dim,
        config.seed,
    )?;
    let mut kcsv = String::from("sample_size,replications,mean_discrepancy\n");
    for p in &concentration {
        let _ = writeln!(
            kcsv,
            "{},{},{:.10}",
            p.sample_size, p.replications, p.mean_discrepancy
        );
    }

    write_manifest(config, "montecarlo")?;
    write_file(&config.output_dir.join("consistency.csv"), &ccsv)?;
    write_file(&config.output_dir.join("concentration.csv"), &kcsv)?;
    eprintln!(
        "montecarlo: wrote {} consistency rows, {} concentration rows",
        consistency.len(),
        concentration.len()
    );
    Ok(())
}

/// Outcome of one selftest property suite.
#[derive(Debug, Clone)]
pub struct CheckOutcome {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

fn random_centered_panel(rng: &mut ChaCha8Rng, t: usize, n: usize) -> Array2<f64> {
    let mut x = Array2::zeros((t, n));
    for v in x.iter_mut() {
        *v = rng.random_range(-1.0..1.0);
    }
    for j in 0..n {
        let mean = x.column(j).sum() / t as f64;
        for i in 0..t {
            x[[i, j]] -= mean;
        }
    }
    x
}

fn max_abs_diff(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .fold(0.0_f64, |acc, (x, y)| acc.max((x - y).abs()))
}

/// Factors and eigenvector weights of a centered Gram matrix produce the
/// same projection matrix, checked over random centered PSD Grams.
pub fn check_projection_equivalence(n_matrices: usize, seed: u64) -> CheckOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0_f64;
    let mut checked = 0;
    while checked < n_matrices {
        let t = rng.random_range(10..=60);
        let n = rng.random_range(2..=12);
        let x = random_centered_panel(&mut rng, t, n);
        let gram = center_gram(&gram_matrix(&KernelSpec::Linear, &x).unwrap());
        let rank_cap = t.min(n);
        let full = match gram_eigenvectors(&gram, rank_cap) {
            Ok(e) => e,
            Err(_) => continue,
        };
        // pick r below the numerical rank with a usable eigengap
        let mut r = 1 + (rng.random_range(0..rank_cap.max(1)));
        r = r.min(rank_cap);
        let lambda_1 = full.eigenvalues[0];
        while r > 1
            && (full.eigenvalues[r - 1] <= 1e-10 * lambda_1
                || (r < rank_cap
                    && full.eigenvalues[r - 1] - full.eigenvalues[r] <= 1e-10 * lambda_1))
        {
            r -= 1;
        }
        if full.eigenvalues[r - 1] <= 1e-10 * lambda_1 {
            continue;
        }
        let set = kernel_factors(&gram, r).unwrap();
        let weights = gram_eigenvectors(&gram, r).unwrap();
        let p_f = match projection_matrix(&set.factors) {
            Ok(p) => p,
            Err(_) => continue,
        };
        let p_a = projection_matrix(&weights.eigenvectors).unwrap();
        worst = worst.max(max_abs_diff(&p_f, &p_a));
        checked += 1;
    }
    CheckOutcome {
        name: "projection equivalence (factors vs weights)".to_string(),
        pass: worst <= 1e-8,
        detail: format!("max projection discrepancy {worst:.3e} over {n_matrices} Gram matrices"),
    }
}

/// Small-gamma limits: the scaled centered RBF and sigmoid Grams approach
/// X X', and the scaled RBF kernel factors match linear PCA factors.
pub fn check_small_gamma_limits(n_panels: usize, seed: u64) -> CheckOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gamma = 1e-6;
    let mut pass = true;
    let mut worst_gram = 0.0_f64;
    let mut worst_sigmoid = 0.0_f64;
    let mut worst_factor = 0.0_f64;
    let mut worst_decay: f64 = 0.0;
    for _ in 0..n_panels {
        let t = rng.random_range(10..=40);
        let n = rng.random_range(3..=20);
        let x = random_centered_panel(&mut rng, t, n);
        let xxt = x.dot(&x.t());
        let xxt_max = xxt.iter().fold(0.0_f64, |a, v| a.max(v.abs()));

        // (2 gamma)^-1 K_rbf -> XX'
        let k1 = center_gram(&gram_matrix(&KernelSpec::rbf(gamma), &x).unwrap());
        let scaled1 = &k1.values / (2.0 * gamma);
        let err1 = max_abs_diff(&scaled1.to_owned(), &xxt) / xxt_max;
        worst_gram = worst_gram.max(err1);
        if err1 > 1e-4 {
            pass = false;
        }

        // halving gamma should roughly halve the absolute discrepancy
        let k2 = center_gram(&gram_matrix(&KernelSpec::rbf(gamma / 2.0), &x).unwrap());
        let scaled2 = &k2.values / (gamma);
        let abs1 = max_abs_diff(&scaled1.to_owned(), &xxt);
        let abs2 = max_abs_diff(&scaled2.to_owned(), &xxt);
        if abs1 > 0.0 {
            let ratio = abs2 / abs1;
            let off = (ratio - 0.5).abs() / 0.5;
            worst_decay = worst_decay.max(off);
            if off > 0.2 {
                pass = false;
            }
        }

        // sigmoid variant with c0 = 1
        let c0 = 1.0_f64;
        let ks = center_gram(&gram_matrix(&KernelSpec::Sigmoid { gamma, c0 }, &x).unwrap());
        let scale = gamma * (1.0 - c0.tanh() * c0.tanh());
        let scaled_s = &ks.values / scale;
        let err_s = max_abs_diff(&scaled_s.to_owned(), &xxt) / xxt_max;
        worst_sigmoid = worst_sigmoid.max(err_s);
        if err_s > 1e-4 {
            pass = false;
        }

        // scaled kernel factors match PCA factors up to sign
        let r = 2.min(t.min(n));
        let pf = pca_factors(&x, r).unwrap();
        let kf = kernel_factors(&k1, r).unwrap();
        for col in 0..r {
            let scale = 1.0 / (2.0 * gamma * pf.eigenvalues[col].sqrt());
            let mut diff_minus = 0.0;
            let mut diff_plus = 0.0;
            let mut norm = 0.0;
            for i in 0..t {
                let a = kf.factors[[i, col]] * scale;
                let b = pf.factors[[i, col]];
                diff_minus += (a - b) * (a - b);
                diff_plus += (a + b) * (a + b);
                norm += b * b;
            }
            let rel = (diff_minus.min(diff_plus) / norm).sqrt();
            worst_factor = worst_factor.max(rel);
            if rel > 1e-3 {
                pass = false;
            }
        }
    }
    CheckOutcome {
        name: "small-gamma limits (rbf and sigmoid nest PCA)".to_string(),
        pass,
        detail: format!(
            "gram err {worst_gram:.3e}, sigmoid err {worst_sigmoid:.3e}, factor err {worst_factor:.3e}, decay dev {worst_decay:.3}"
        ),
    }
}

/// Truncated RBF feature-map inner products reproduce the kernel value.
pub fn check_rbf_feature_oracle(n_pairs: usize, seed: u64) -> CheckOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0_f64;
    let mut checked = 0;
    while checked < n_pairs {
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
        worst = worst.max((approx - exact).abs());
        checked += 1;
    }
    CheckOutcome {
        name: "truncated RBF feature-map oracle".to_string(),
        pass: worst <= 1e-6,
        detail: format!("max |dot - kernel| = {worst:.3e} over {n_pairs} pairs at degree 12"),
    }
}

/// Run the property suites and print one pass/fail line each.
pub fn cmd_selftest(seed: u64) -> Result<bool> {
    let checks = vec![
        check_projection_equivalence(50, seed),
        check_small_gamma_limits(20, seed.wrapping_add(1)),
        check_rbf_feature_oracle(50, seed.wrapping_add(2)),
    ];
    let mut all_pass = true;
    for check in &checks {
        let verdict = if check.pass { "PASS" } else { "FAIL" };
        println!("[{verdict}] {} - {}", check.name, check.detail);
        all_pass &= check.pass;
    }
    Ok(all_pass)
}
