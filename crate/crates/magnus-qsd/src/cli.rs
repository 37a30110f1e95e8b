//! Command implementations behind the binary: ensemble execution with
//! CSV/JSON/SVG artifacts, scheme comparison, convergence-order estimation,
//! the radical-pair angle sweep, and diagnostic listings.

use std::fs::File;
use std::io::Write as _;
use std::path::Path;
use std::time::Instant;

use serde::Serialize;

use crate::config::ResolvedConfig;
use crate::ensemble::{
    error_vs_exact, estimate_weak_order, exact_reference, run_ensemble, write_results_csv,
    EnsembleConfig, EnsembleEstimate, ExactReference,
};
use crate::error::{QsdError, Result};
use crate::exact::{propagate_exact, DensityMatrix};
use crate::magnus::{MagnusOrder, SchemeConfig, SchemeKind};
use crate::matrix::CMat;
use crate::models::{self, LindbladModel};
use crate::plot::{BarChart, LinePlot, Series};
use crate::stats;
use crate::wiener::{sample_increments_for_step, StochasticIncrementSet, StreamKey};

pub const LIBRARY_VERSION: &str = env!("CARGO_PKG_VERSION");

// ---------------------------------------------------------------------------
// meta.json
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct SchemeMeta {
    tag: String,
    requested_kind: String,
    effective_kind: String,
    downgraded_from: Option<String>,
    radius_violations: u64,
    aborted_trajectories: u64,
    total_trajectories: u64,
    max_omitted_triple_terms: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    time_averaged_error: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error_ci_halfwidth: Option<f64>,
    runtime_seconds: f64,
}

#[derive(Serialize)]
struct MetaJson<'a> {
    library_version: &'static str,
    command: &'a str,
    model: &'a str,
    time_unit: &'a str,
    master_seed: u64,
    delta: f64,
    n_steps: u64,
    n_traj: usize,
    n_repeats: usize,
    fourier_terms: usize,
    ci_level: f64,
    observables: Vec<String>,
    /// Full configuration echo; feeding this back through the config loader
    /// reproduces the run bit for bit.
    resolved_config: &'a crate::config::RawConfig,
    schemes: Vec<SchemeMeta>,
}

fn scheme_kind_name(kind: SchemeKind) -> String {
    kind.to_string()
}

fn order_name(order: MagnusOrder) -> String {
    SchemeKind::Magnus(order).to_string()
}

fn scheme_meta(tag: &str, requested: SchemeConfig, est: &EnsembleEstimate, secs: f64) -> SchemeMeta {
    let effective = match est.downgraded_from {
        Some(_) => SchemeKind::Magnus(MagnusOrder::Third),
        None => requested.kind,
    };
    SchemeMeta {
        tag: tag.to_string(),
        requested_kind: scheme_kind_name(requested.kind),
        effective_kind: scheme_kind_name(effective),
        downgraded_from: est.downgraded_from.map(order_name),
        radius_violations: est.radius_violations,
        aborted_trajectories: est.aborted_trajectories,
        total_trajectories: est.total_trajectories,
        max_omitted_triple_terms: est.max_omitted_triple_terms,
        time_averaged_error: None,
        error_ci_halfwidth: None,
        runtime_seconds: secs,
    }
}

fn write_meta(cfg: &ResolvedConfig, command: &str, schemes: Vec<SchemeMeta>) -> Result<()> {
    let meta = MetaJson {
        library_version: LIBRARY_VERSION,
        command,
        model: &cfg.model_label,
        time_unit: &cfg.time_unit,
        master_seed: cfg.master_seed,
        delta: cfg.delta,
        n_steps: cfg.n_steps,
        n_traj: cfg.n_traj,
        n_repeats: cfg.n_repeats,
        fourier_terms: cfg.fourier_terms,
        ci_level: cfg.ci_level,
        observables: cfg.observables.iter().map(|(n, _)| n.clone()).collect(),
        resolved_config: &cfg.raw,
        schemes,
    };
    let text = serde_json::to_string_pretty(&meta)
        .map_err(|e| QsdError::Config(format!("meta serialization: {e}")))?;
    std::fs::write(cfg.out_dir.join("meta.json"), text)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Shared plumbing
// ---------------------------------------------------------------------------

fn ensemble_config(cfg: &ResolvedConfig, scheme: SchemeConfig) -> EnsembleConfig {
    let mut e = EnsembleConfig::new(scheme, cfg.delta, cfg.n_steps);
    e.n_traj = cfg.n_traj;
    e.n_repeats = cfg.n_repeats;
    e.master_seed = cfg.master_seed;
    e.fourier_terms = cfg.fourier_terms;
    e.ci_level = cfg.ci_level;
    e
}

fn model_with_observables(
    model: &LindbladModel,
    observables: &[(String, CMat)],
) -> Result<LindbladModel> {
    LindbladModel::new(
        model.hamiltonian.clone(),
        model.jump_ops.clone(),
        observables.to_vec(),
        model.unit_note.clone(),
    )
}

fn populations_plot(
    cfg: &ResolvedConfig,
    est: &EnsembleEstimate,
    reference: Option<&ExactReference>,
    tag: &str,
) -> Result<String> {
    let mut plot = LinePlot::new(
        format!("{} populations — {tag}", cfg.model_label),
        format!("time [{}]", cfg.time_unit),
        "population",
    );
    for (o, name) in est.names.iter().enumerate() {
        let mean = est.mean.row(o).to_vec();
        let ci = est.ci_half.row(o);
        let lower = mean.iter().zip(ci.iter()).map(|(m, c)| m - c).collect();
        let upper = mean.iter().zip(ci.iter()).map(|(m, c)| m + c).collect();
        plot.push(Series::new(name.clone(), est.times.clone(), mean).with_band(lower, upper));
    }
    if let Some(reference) = reference {
        for (o, name) in reference.names.iter().enumerate() {
            plot.push(Series::new(
                format!("{name} exact"),
                reference.times.clone(),
                reference.values.row(o).to_vec(),
            ));
        }
    }
    plot.render()
}

fn errors_plot(cfg: &ResolvedConfig, report: &crate::ensemble::ErrorReport, tag: &str) -> Result<String> {
    let mut plot = LinePlot::new(
        format!("{} error vs exact — {tag}", cfg.model_label),
        format!("time [{}]", cfg.time_unit),
        "|mean − exact|",
    )
    .log_y();
    for (o, name) in report.names.iter().enumerate() {
        plot.push(Series::new(
            name.clone(),
            report.times.clone(),
            report.per_step_error.row(o).to_vec(),
        ));
    }
    plot.render()
}

// ---------------------------------------------------------------------------
// run
// ---------------------------------------------------------------------------

pub fn cmd_run(cfg: &ResolvedConfig) -> Result<()> {
    std::fs::create_dir_all(&cfg.out_dir)?;
    let model = model_with_observables(&cfg.model, &cfg.observables)?;
    let reference = if cfg.compare_exact && cfg.record_anything {
        Some(exact_reference(&model, &cfg.initial, cfg.delta, cfg.n_steps)?)
    } else {
        None
    };
    let multi = cfg.schemes.len() > 1;
    let mut metas = Vec::new();
    for (tag, scheme) in &cfg.schemes {
        let started = Instant::now();
        let est = run_ensemble(&model, &cfg.initial, &ensemble_config(cfg, *scheme))?;
        let secs = started.elapsed().as_secs_f64();
        let dir = if multi {
            cfg.out_dir.join(tag)
        } else {
            cfg.out_dir.clone()
        };
        std::fs::create_dir_all(&dir)?;
        let mut meta = scheme_meta(tag, *scheme, &est, secs);
        if cfg.record_anything {
            write_results_csv(&est, File::create(dir.join("results.csv"))?)?;
            crate::plot::write_svg(
                &dir.join("populations.svg"),
                &populations_plot(cfg, &est, reference.as_ref(), tag)?,
            )?;
            if let Some(reference) = &reference {
                let report = error_vs_exact(&est, reference)?;
                crate::plot::write_svg(&dir.join("errors.svg"), &errors_plot(cfg, &report, tag)?)?;
                meta.time_averaged_error = Some(report.overall_mean);
                meta.error_ci_halfwidth = Some(report.overall_ci);
            }
        }
        let err_note = meta
            .time_averaged_error
            .map(|e| format!(", time-avg error {e:.3e}"))
            .unwrap_or_default();
        println!(
            "[{tag}] {} trajectories in {secs:.1} s ({} aborted, {} radius flags{err_note})",
            est.total_trajectories, est.aborted_trajectories, est.radius_violations
        );
        metas.push(meta);
    }
    write_meta(cfg, "run", metas)?;
    println!("artifacts written to {}", cfg.out_dir.display());
    Ok(())
}

// ---------------------------------------------------------------------------
// compare
// ---------------------------------------------------------------------------

pub fn cmd_compare(cfg: &ResolvedConfig) -> Result<()> {
    if cfg.schemes.len() < 2 {
        return Err(QsdError::Config(
            "scheme comparison needs at least two schemes".into(),
        ));
    }
    if !cfg.record_anything {
        return Err(QsdError::Config(
            "scheme comparison needs at least one observable".into(),
        ));
    }
    std::fs::create_dir_all(&cfg.out_dir)?;
    let model = model_with_observables(&cfg.model, &cfg.observables)?;
    let reference = exact_reference(&model, &cfg.initial, cfg.delta, cfg.n_steps)?;
    let mut metas = Vec::new();
    let mut chart = BarChart::new(
        format!("{} time-averaged error", cfg.model_label),
        "|mean − exact| (time averaged)",
    )
    .log_y();
    let mut rows = String::from("scheme,time_avg_error,ci_halfwidth\n");
    println!("{:<24} {:>14} {:>14}", "scheme", "error", "99% CI");
    for (tag, scheme) in &cfg.schemes {
        let started = Instant::now();
        let est = run_ensemble(&model, &cfg.initial, &ensemble_config(cfg, *scheme))?;
        let report = error_vs_exact(&est, &reference)?;
        let mut meta = scheme_meta(tag, *scheme, &est, started.elapsed().as_secs_f64());
        meta.time_averaged_error = Some(report.overall_mean);
        meta.error_ci_halfwidth = Some(report.overall_ci);
        chart.push(tag.clone(), report.overall_mean.max(1e-16), report.overall_ci);
        rows.push_str(&format!(
            "{tag},{:.12e},{:.12e}\n",
            report.overall_mean, report.overall_ci
        ));
        println!(
            "{tag:<24} {:>14.6e} {:>14.6e}",
            report.overall_mean, report.overall_ci
        );
        metas.push(meta);
    }
    std::fs::write(cfg.out_dir.join("comparison.csv"), rows)?;
    crate::plot::write_svg(&cfg.out_dir.join("comparison.svg"), &chart.render()?)?;
    write_meta(cfg, "compare", metas)?;
    println!("artifacts written to {}", cfg.out_dir.display());
    Ok(())
}

// ---------------------------------------------------------------------------
// converge
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct ConvergenceEntry {
    scheme: String,
    slope: f64,
    slope_ci_halfwidth: f64,
    below_noise_floor: bool,
    conclusive: bool,
    deltas: Vec<f64>,
    errors: Vec<f64>,
    error_se: Vec<f64>,
}

pub fn cmd_converge(cfg: &ResolvedConfig) -> Result<()> {
    if cfg.converge_deltas.len() < 3 {
        return Err(QsdError::Config(
            "convergence estimation needs at least three step sizes (config key converge.deltas)"
                .into(),
        ));
    }
    let t_final = cfg.converge_t_final.ok_or_else(|| {
        QsdError::Config("convergence estimation needs converge.t_final".into())
    })?;
    if !cfg.record_anything {
        return Err(QsdError::Config(
            "convergence estimation needs at least one observable".into(),
        ));
    }
    std::fs::create_dir_all(&cfg.out_dir)?;
    let model = model_with_observables(&cfg.model, &cfg.observables)?;
    let mut entries = Vec::new();
    let mut plot = LinePlot::new(
        format!("{} weak convergence", cfg.model_label),
        "log10(step size)",
        "final-time error",
    )
    .log_y();
    let mut metas = Vec::new();
    for (tag, scheme) in &cfg.schemes {
        let started = Instant::now();
        let base = ensemble_config(cfg, *scheme);
        let report = estimate_weak_order(&model, &cfg.initial, &base, t_final, &cfg.converge_deltas)?;
        let conclusive = !report.below_noise_floor && report.slope_ci_half.is_finite();
        println!(
            "[{tag}] slope {:.3} ± {:.3}{}",
            report.slope,
            report.slope_ci_half,
            if report.below_noise_floor {
                " (below noise floor)"
            } else {
                ""
            }
        );
        plot.push(Series::new(
            tag.clone(),
            report.deltas.iter().map(|d| d.log10()).collect(),
            report.errors.clone(),
        ));
        entries.push(ConvergenceEntry {
            scheme: tag.clone(),
            slope: report.slope,
            slope_ci_halfwidth: report.slope_ci_half,
            below_noise_floor: report.below_noise_floor,
            conclusive,
            deltas: report.deltas,
            errors: report.errors,
            error_se: report.error_se,
        });
        let mut meta = scheme_meta(
            tag,
            *scheme,
            &empty_estimate_for_meta(*scheme, cfg),
            started.elapsed().as_secs_f64(),
        );
        meta.time_averaged_error = None;
        metas.push(meta);
    }
    let text = serde_json::to_string_pretty(&entries)
        .map_err(|e| QsdError::Config(format!("report serialization: {e}")))?;
    std::fs::write(cfg.out_dir.join("convergence.json"), text)?;
    crate::plot::write_svg(&cfg.out_dir.join("convergence.svg"), &plot.render()?)?;
    write_meta(cfg, "converge", metas)?;
    println!("artifacts written to {}", cfg.out_dir.display());
    Ok(())
}

/// Placeholder with correct counters for commands whose per-scheme metadata
/// has no single ensemble behind it.
fn empty_estimate_for_meta(scheme: SchemeConfig, cfg: &ResolvedConfig) -> EnsembleEstimate {
    EnsembleEstimate {
        times: Vec::new(),
        names: Vec::new(),
        per_repeat_mean: ndarray::Array3::zeros((0, 0, 0)),
        per_repeat_var: ndarray::Array3::zeros((0, 0, 0)),
        mean: ndarray::Array2::zeros((0, 0)),
        ci_half: ndarray::Array2::zeros((0, 0)),
        weight_per_repeat: ndarray::Array2::zeros((0, 0)),
        weight_mean: Vec::new(),
        weight_ci: Vec::new(),
        n_traj: cfg.n_traj,
        n_repeats: cfg.n_repeats,
        ci_level: cfg.ci_level,
        scheme,
        delta: cfg.delta,
        aborted_trajectories: 0,
        total_trajectories: 0,
        radius_violations: 0,
        max_omitted_triple_terms: 0,
        downgraded_from: None,
    }
}

// ---------------------------------------------------------------------------
// rpm-yield
// ---------------------------------------------------------------------------

pub fn cmd_rpm_yield(cfg: &ResolvedConfig, angle_override: Option<Vec<f64>>) -> Result<()> {
    let angles = match angle_override {
        Some(a) => a,
        None => cfg.yield_angles_deg.clone(),
    };
    if angles.is_empty() {
        return Err(QsdError::Config(
            "angle sweep needs at least one angle (config key rpm_yield.angles_deg)".into(),
        ));
    }
    for &a in &angles {
        if !(0.0..=90.0).contains(&a) {
            return Err(QsdError::Config(format!(
                "sweep angle {a}° outside [0°, 90°]"
            )));
        }
    }
    let base_params = cfg.rpm_params.clone().ok_or_else(|| {
        QsdError::Config("the angle sweep requires the radical-pair model preset".into())
    })?;
    let (tag, scheme) = cfg
        .schemes
        .first()
        .cloned()
        .ok_or_else(|| QsdError::Config("no scheme configured".into()))?;
    std::fs::create_dir_all(&cfg.out_dir)?;
    let t_stop = cfg.delta * cfg.n_steps as f64;

    let mut rows = String::from("angle_deg,observable,mean,ci_halfwidth,exact\n");
    let mut sim_curves: Vec<(String, Vec<f64>, Vec<f64>, Vec<f64>)> = Vec::new();
    let mut exact_curves: Vec<(String, Vec<f64>)> = Vec::new();
    let mut metas = Vec::new();
    println!(
        "{:>9} {:>16} {:>12} {:>12} {:>12}",
        "angle", "observable", "yield", "99% CI", "exact"
    );
    for (k, &angle) in angles.iter().enumerate() {
        let params = models::RpmParameters {
            theta: angle.to_radians(),
            ..base_params
        };
        let model = models::build_rpm(&params)?;
        let started = Instant::now();
        let est = run_ensemble(&model, &cfg.initial, &ensemble_config(cfg, scheme))?;
        let rho0 = DensityMatrix::new(cfg.initial.density_matrix())?;
        let exact = propagate_exact(&model, &rho0, t_stop)?;
        if k == 0 {
            for (name, _) in &model.observables {
                sim_curves.push((name.clone(), Vec::new(), Vec::new(), Vec::new()));
                exact_curves.push((format!("{name} exact"), Vec::new()));
            }
        }
        let final_step = cfg.n_steps as usize;
        for (o, (name, op)) in model.observables.iter().enumerate() {
            let finals: Vec<f64> = (0..est.n_repeats)
                .map(|r| est.per_repeat_mean[[r, o, final_step]])
                .collect();
            let (mean, ci) = stats::mean_with_ci(&finals, cfg.ci_level)?;
            let exact_val = exact.expectation(op);
            rows.push_str(&format!(
                "{angle},{name},{mean:.12e},{ci:.12e},{exact_val:.12e}\n"
            ));
            println!("{angle:>8}° {name:>16} {mean:>12.6} {ci:>12.6} {exact_val:>12.6}");
            sim_curves[o].1.push(mean);
            sim_curves[o].2.push(mean - ci);
            sim_curves[o].3.push(mean + ci);
            exact_curves[o].1.push(exact_val);
        }
        let mut meta = scheme_meta(&tag, scheme, &est, started.elapsed().as_secs_f64());
        meta.tag = format!("{tag}@{angle}deg");
        metas.push(meta);
    }

    let mut plot = LinePlot::new(
        "recombination yield vs field angle",
        "angle [deg]",
        "yield",
    );
    for (name, mean, lo, hi) in sim_curves {
        plot.push(Series::new(name, angles.clone(), mean).with_band(lo, hi));
    }
    for (name, exact) in exact_curves {
        plot.push(Series::new(name, angles.clone(), exact));
    }
    std::fs::write(cfg.out_dir.join("yield.csv"), rows)?;
    crate::plot::write_svg(&cfg.out_dir.join("yield.svg"), &plot.render()?)?;
    write_meta(cfg, "rpm-yield", metas)?;
    println!("artifacts written to {}", cfg.out_dir.display());
    Ok(())
}

// ---------------------------------------------------------------------------
// models list
// ---------------------------------------------------------------------------

pub fn cmd_models_list() -> Result<()> {
    println!(
        "{:<14} {:>4} {:>9} {:>10}  {}",
        "name", "dim", "channels", "time unit", "observables"
    );
    let catalog: Vec<(&str, LindbladModel, &str)> = vec![
        ("tfim", models::build_tfim(2, 1.0, 1.0, &[0.1, 0.1])?, "1/J"),
        ("fmo", models::build_fmo()?, "fs"),
        ("rpm", models::build_rpm(&models::RpmParameters::default())?, "s"),
        ("damped-qubit", models::build_damped_qubit(1.0, 0.5)?, "1"),
    ];
    for (name, model, unit) in catalog {
        println!(
            "{:<14} {:>4} {:>9} {:>10}  {}",
            name,
            model.dim,
            model.jump_ops.len(),
            unit,
            model.observable_names().join(", ")
        );
    }
    println!(
        "\ncustom models: point model.file at a JSON file with fields \
         dim, hamiltonian, jump_ops, observables, unit_note"
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// sampler-diag
// ---------------------------------------------------------------------------

/// Empirical check of the increment sampler's closed-form moments. Returns
/// the worst relative deviation across the checked variances.
pub fn cmd_sampler_diag(samples: u64, delta: f64, fourier_terms: usize, seed: u64) -> Result<f64> {
    if samples < 100 {
        return Err(QsdError::Config("need at least 100 samples".into()));
    }
    let n = samples as usize;
    let mut w = Vec::with_capacity(n);
    let mut a0 = Vec::with_capacity(n);
    let mut c2 = Vec::with_capacity(n);
    let mut c3 = Vec::with_capacity(n);
    let mut c4 = Vec::with_capacity(n);
    let mut levy = Vec::with_capacity(n);
    for i in 0..n {
        let key = StreamKey::new(seed, i as u64);
        let inc: StochasticIncrementSet =
            sample_increments_for_step(2, delta, fourier_terms, &key, 0)?;
        w.push(inc.w[0]);
        a0.push(inc.a0[0]);
        c2.push(inc.c2[0]);
        c3.push(inc.c3[0]);
        c4.push(inc.c4[0]);
        levy.push(inc.levy[[0, 1]]);
    }
    let d = delta;
    let rows: Vec<(&str, Vec<f64>, f64)> = vec![
        ("W", w, d),
        ("a0", a0, d / 3.0),
        ("order-2 coeff", c2, d.powi(3) / 12.0),
        ("order-3 coeff", c3, d.powi(5) / 720.0),
        ("order-4 coeff", c4, d.powi(7) / 30240.0),
        ("Levy area", levy, d * d / 4.0),
    ];
    println!(
        "{:<14} {:>14} {:>14} {:>10}",
        "quantity", "variance", "expected", "rel dev"
    );
    let mut worst = 0.0f64;
    for (name, xs, expected) in rows {
        let var = stats::sample_variance(&xs);
        let rel = (var - expected).abs() / expected;
        worst = worst.max(rel);
        println!("{name:<14} {var:>14.6e} {expected:>14.6e} {:>9.2}%", rel * 100.0);
    }
    println!(
        "{samples} samples at delta={delta}, {fourier_terms} Fourier modes; worst deviation {:.2}%",
        worst * 100.0
    );
    Ok(worst)
}

// ---------------------------------------------------------------------------
// Exit-code mapping
// ---------------------------------------------------------------------------

/// 2 = configuration error, 3 = run failure, 4 = I/O error.
pub fn exit_code(err: &QsdError) -> i32 {
    match err {
        QsdError::Config(_)
        | QsdError::InvalidArgument(_)
        | QsdError::DimensionMismatch(_)
        | QsdError::NotNormalized(_) => 2,
        QsdError::Io(_) => 4,
        QsdError::RunFailure(_) | QsdError::NonFinite(_) | QsdError::Singular(_) => 3,
    }
}

/// Write a short failure report so scripted runs can distinguish config
/// mistakes from numerical blowups without parsing stderr.
pub fn report_failure(out_dir: &Path, err: &QsdError) {
    let _ = std::fs::create_dir_all(out_dir);
    let body = format!("{{\"error\":{:?},\"exit_code\":{}}}\n", err.to_string(), exit_code(err));
    let _ = std::fs::write(out_dir.join("failure.json"), body);
    let _ = std::io::stderr().write_all(format!("error: {err}\n").as_bytes());
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{preset, resolve, Overrides};

    fn tiny_tfim(dir: &str) -> ResolvedConfig {
        let mut raw = preset("tfim").unwrap();
        raw.run.n_traj = 24;
        raw.run.n_repeats = 3;
        raw.run.t_stop = crate::config::Quantity::new(2.5, "1/J");
        raw.schemes.truncate(2);
        raw.output.directory = Some(std::env::temp_dir().join(dir));
        resolve(raw, &Overrides::default()).unwrap()
    }

    #[test]
    fn run_command_writes_all_artifacts() {
        let cfg = tiny_tfim("magnus_qsd_cli_run");
        let _ = std::fs::remove_dir_all(&cfg.out_dir);
        cmd_run(&cfg).unwrap();
        for (tag, _) in &cfg.schemes {
            let dir = cfg.out_dir.join(tag);
            assert!(dir.join("results.csv").is_file());
            assert!(dir.join("populations.svg").is_file());
            assert!(dir.join("errors.svg").is_file());
        }
        let meta: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(cfg.out_dir.join("meta.json")).unwrap())
                .unwrap();
        assert_eq!(meta["master_seed"], 20260822);
        assert_eq!(meta["schemes"].as_array().unwrap().len(), 2);
        assert!(meta["resolved_config"]["run"]["delta"]["value"].as_f64().unwrap() > 0.0);
        assert!(meta["schemes"][0]["time_averaged_error"].as_f64().unwrap() > 0.0);
        let _ = std::fs::remove_dir_all(&cfg.out_dir);
    }

    #[test]
    fn empty_observable_list_writes_meta_only() {
        let mut raw = preset("tfim").unwrap();
        raw.run.n_traj = 8;
        raw.run.n_repeats = 2;
        raw.run.t_stop = crate::config::Quantity::new(1.0, "1/J");
        raw.run.observables = Some(vec![]);
        raw.schemes.truncate(1);
        raw.output.directory = Some(std::env::temp_dir().join("magnus_qsd_cli_meta_only"));
        let cfg = resolve(raw, &Overrides::default()).unwrap();
        let _ = std::fs::remove_dir_all(&cfg.out_dir);
        cmd_run(&cfg).unwrap();
        assert!(cfg.out_dir.join("meta.json").is_file());
        assert!(!cfg.out_dir.join("results.csv").exists());
        assert!(!cfg.out_dir.join("populations.svg").exists());
        let _ = std::fs::remove_dir_all(&cfg.out_dir);
    }

    #[test]
    fn compare_requires_two_schemes_and_writes_table() {
        let mut cfg = tiny_tfim("magnus_qsd_cli_cmp");
        let _ = std::fs::remove_dir_all(&cfg.out_dir);
        cmd_compare(&cfg).unwrap();
        let table = std::fs::read_to_string(cfg.out_dir.join("comparison.csv")).unwrap();
        assert!(table.starts_with("scheme,time_avg_error,ci_halfwidth\n"));
        assert_eq!(table.lines().count(), 1 + cfg.schemes.len());
        assert!(cfg.out_dir.join("comparison.svg").is_file());
        let _ = std::fs::remove_dir_all(&cfg.out_dir);
        cfg.schemes.truncate(1);
        let err = cmd_compare(&cfg).unwrap_err();
        assert_eq!(exit_code(&err), 2);
    }

    #[test]
    fn converge_writes_report_even_when_inconclusive() {
        let mut raw = preset("tfim").unwrap();
        raw.model.damping_rates = Some(vec![0.0]);
        raw.run.n_traj = 4;
        raw.run.n_repeats = 2;
        raw.schemes.truncate(1);
        raw.output.directory = Some(std::env::temp_dir().join("magnus_qsd_cli_conv"));
        let cfg = resolve(raw, &Overrides::default()).unwrap();
        let _ = std::fs::remove_dir_all(&cfg.out_dir);
        cmd_converge(&cfg).unwrap();
        let report: serde_json::Value = serde_json::from_str(
            &std::fs::read_to_string(cfg.out_dir.join("convergence.json")).unwrap(),
        )
        .unwrap();
        assert_eq!(report.as_array().unwrap().len(), 1);
        assert_eq!(report[0]["below_noise_floor"], true);
        assert_eq!(report[0]["conclusive"], false);
        let _ = std::fs::remove_dir_all(&cfg.out_dir);
    }

    #[test]
    fn rpm_yield_single_angle_writes_table_and_overlay() {
        let mut raw = preset("rpm").unwrap();
        raw.run.n_traj = 16;
        raw.run.n_repeats = 2;
        raw.run.t_stop = crate::config::Quantity::new(2e-6, "s");
        raw.schemes.truncate(1);
        raw.output.directory = Some(std::env::temp_dir().join("magnus_qsd_cli_yield"));
        let cfg = resolve(raw, &Overrides::default()).unwrap();
        let _ = std::fs::remove_dir_all(&cfg.out_dir);
        cmd_rpm_yield(&cfg, Some(vec![0.0])).unwrap();
        let table = std::fs::read_to_string(cfg.out_dir.join("yield.csv")).unwrap();
        assert!(table.starts_with("angle_deg,observable,mean,ci_halfwidth,exact\n"));
        assert_eq!(table.lines().count(), 3); // header + singlet + triplet
        assert!(cfg.out_dir.join("yield.svg").is_file());
        let err = cmd_rpm_yield(&cfg, Some(vec![120.0])).unwrap_err();
        assert_eq!(exit_code(&err), 2);
        let _ = std::fs::remove_dir_all(&cfg.out_dir);
    }

    #[test]
    fn sampler_diag_matches_closed_forms() {
        let worst = cmd_sampler_diag(20_000, 0.25, 60, 7).unwrap();
        assert!(worst < 0.10, "worst relative deviation {worst}");
    }

    #[test]
    fn models_list_prints() {
        cmd_models_list().unwrap();
    }

    #[test]
    fn exit_codes_partition_error_kinds() {
        assert_eq!(exit_code(&QsdError::Config("x".into())), 2);
        assert_eq!(exit_code(&QsdError::RunFailure("x".into())), 3);
        assert_eq!(
            exit_code(&QsdError::Io(std::io::Error::other("x"))),
            4
        );
    }
}
