//! Trajectory ensembles: parallel execution with keyed, schedule-independent
//! randomness, observable estimates Tr(ρO) with Student-t confidence
//! intervals over independent repeats, error measurement against the dense
//! reference solver, and empirical weak-order estimation.
//!
//! Averaging conventions: trajectory means are formed within each repeat;
//! the reported mean and 99% confidence half-width are taken across the
//! repeat means. Error summaries average the per-step absolute error over
//! steps within a repeat first, then report mean ± CI across repeats.

use ndarray::{Array2, Array3};
use rayon::prelude::*;

use crate::error::{QsdError, Result};
use crate::exact::{self, DensityMatrix};
use crate::magnus::{MagnusEngine, MagnusOrder, SchemeConfig, UnravelingKind};
use crate::matrix::CMat;
use crate::models::{InitialState, LindbladModel};
use crate::stats;
use crate::wiener::{self, StreamKey, DEFAULT_P};

/// Trajectories per deterministic reduction block. Reduction combines block
/// results in a fixed order, so results are independent of thread count and
/// scheduling; changing this constant changes the (still deterministic)
/// floating-point summation order.
const REDUCTION_BLOCK: usize = 32;

/// Running state of one trajectory.
#[derive(Debug, Clone)]
pub struct TrajectoryState {
    pub psi: crate::matrix::StateVector,
    /// Squared norm of the (unnormalized) linear-unraveling state; exactly 1
    /// for the nonlinear unraveling.
    pub weight: f64,
    pub step: u64,
    pub stream_key: StreamKey,
}

/// Output of a single trajectory.
#[derive(Debug, Clone)]
pub struct TrajectoryRecord {
    /// values[[obs, step]] with step 0 the initial state; the recorded value
    /// is the raw quadratic form ψ†Oψ (for the linear unraveling ψ is the
    /// unnormalized state, so ensemble averages estimate Tr(ρO) directly).
    pub values: Array2<f64>,
    /// Squared state norm at each recorded step.
    pub weights: Vec<f64>,
    /// Step index at which the state became non-finite, if any; recorded
    /// values from that step on are unfilled.
    pub aborted_at: Option<u64>,
    /// Steps whose convergence-radius proxy exceeded the threshold.
    pub radius_violations: u64,
    /// Maximum per-step count of order-3 commutator terms lacking a
    /// closed-form coefficient.
    pub omitted_triple_terms: usize,
    pub downgraded_from: Option<MagnusOrder>,
}

/// Propagate one trajectory and record all declared observables per step.
pub fn run_trajectory(
    engine: &MagnusEngine,
    initial: &InitialState,
    delta: f64,
    n_steps: u64,
    observables: &[CMat],
    key: StreamKey,
    fourier_terms: usize,
) -> Result<TrajectoryRecord> {
    if n_steps == 0 {
        return Err(QsdError::InvalidArgument("n_steps must be ≥ 1".into()));
    }
    let n_obs = observables.len();
    let n_points = n_steps as usize + 1;
    let mut values = Array2::<f64>::zeros((n_obs, n_points));
    let mut weights = vec![0.0; n_points];
    let psi0 = initial.sample(&mut key.rng_for_setup());
    if !psi0.is_normalized(1e-8) {
        return Err(QsdError::NotNormalized(psi0.norm()));
    }
    let mut state = TrajectoryState {
        psi: psi0,
        weight: 1.0,
        step: 0,
        stream_key: key,
    };
    let record =
        |values: &mut Array2<f64>, weights: &mut Vec<f64>, s: usize, st: &TrajectoryState| {
            for (o, op) in observables.iter().enumerate() {
                values[[o, s]] = st.psi.expectation(op).re;
            }
            weights[s] = st.weight;
        };
    record(&mut values, &mut weights, 0, &state);

    let mut aborted_at = None;
    let mut radius_violations = 0u64;
    let mut omitted = 0usize;
    let mut downgraded = None;
    for step in 0..n_steps {
        let inc = wiener::sample_increments_for_step(
            engine.channels(),
            delta,
            fourier_terms,
            &key,
            step,
        )?;
        match engine.step(&state.psi, &inc) {
            Ok((next, diag)) => {
                if diag.radius_exceeded {
                    radius_violations += 1;
                }
                omitted = omitted.max(diag.omitted_triple_terms);
                if downgraded.is_none() {
                    downgraded = diag.downgraded_from;
                }
                state.psi = next;
                state.step = step + 1;
                state.weight = match engine.config().unraveling {
                    UnravelingKind::Linear => state.psi.norm().powi(2),
                    UnravelingKind::Nonlinear => 1.0,
                };
                record(&mut values, &mut weights, step as usize + 1, &state);
            }
            Err(QsdError::NonFinite(_)) => {
                aborted_at = Some(step);
                break;
            }
            Err(e) => return Err(e),
        }
    }
    Ok(TrajectoryRecord {
        values,
        weights,
        aborted_at,
        radius_violations,
        omitted_triple_terms: omitted,
        downgraded_from: downgraded,
    })
}

/// Ensemble run parameters.
#[derive(Debug, Clone, Copy)]
pub struct EnsembleConfig {
    pub scheme: SchemeConfig,
    pub delta: f64,
    pub n_steps: u64,
    pub n_traj: usize,
    pub n_repeats: usize,
    pub master_seed: u64,
    pub fourier_terms: usize,
    /// Confidence level for all intervals (default 0.99).
    pub ci_level: f64,
}

impl EnsembleConfig {
    pub fn new(scheme: SchemeConfig, delta: f64, n_steps: u64) -> Self {
        Self {
            scheme,
            delta,
            n_steps,
            n_traj: 1000,
            n_repeats: 10,
            master_seed: 0,
            fourier_terms: DEFAULT_P,
            ci_level: 0.99,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.scheme.validate()?;
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return Err(QsdError::Config("delta must be positive".into()));
        }
        if self.n_steps == 0 {
            return Err(QsdError::Config("n_steps must be ≥ 1".into()));
        }
        if self.n_traj == 0 {
            return Err(QsdError::Config("n_traj must be ≥ 1".into()));
        }
        if self.n_repeats == 0 {
            return Err(QsdError::Config("n_repeats must be ≥ 1".into()));
        }
        if !(self.ci_level > 0.0 && self.ci_level < 1.0) {
            return Err(QsdError::Config("ci_level must lie in (0,1)".into()));
        }
        Ok(())
    }
}

/// Ensemble observable estimates with per-repeat detail.
#[derive(Debug, Clone)]
pub struct EnsembleEstimate {
    pub times: Vec<f64>,
    pub names: Vec<String>,
    /// Trajectory means within each repeat: [repeat, observable, step].
    pub per_repeat_mean: Array3<f64>,
    /// Sample variance over trajectories within each repeat.
    pub per_repeat_var: Array3<f64>,
    /// Mean across repeats: [observable, step].
    pub mean: Array2<f64>,
    /// Student-t half-widths across repeats at `ci_level`.
    pub ci_half: Array2<f64>,
    /// Mean squared state norm per repeat and step (martingale diagnostic
    /// for the linear unraveling; identically 1 for nonlinear).
    pub weight_per_repeat: Array2<f64>,
    pub weight_mean: Vec<f64>,
    pub weight_ci: Vec<f64>,
    pub n_traj: usize,
    pub n_repeats: usize,
    pub ci_level: f64,
    pub scheme: SchemeConfig,
    pub delta: f64,
    pub aborted_trajectories: u64,
    pub total_trajectories: u64,
    pub radius_violations: u64,
    pub max_omitted_triple_terms: usize,
    pub downgraded_from: Option<MagnusOrder>,
}

impl EnsembleEstimate {
    pub fn observable_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn mean_series(&self, name: &str) -> Option<Vec<f64>> {
        let o = self.observable_index(name)?;
        Some(self.mean.row(o).to_vec())
    }

    pub fn ci_series(&self, name: &str) -> Option<Vec<f64>> {
        let o = self.observable_index(name)?;
        Some(self.ci_half.row(o).to_vec())
    }

    /// Per-repeat estimator variance of one observable, averaged over all
    /// steps after the initial one.
    pub fn time_averaged_variance(&self, obs: usize) -> Vec<f64> {
        let n_steps = self.times.len() - 1;
        (0..self.n_repeats)
            .map(|r| {
                (1..=n_steps)
                    .map(|s| self.per_repeat_var[[r, obs, s]])
                    .sum::<f64>()
                    / n_steps as f64
            })
            .collect()
    }
}

/// Per-block accumulator combined in fixed order during reduction.
struct BlockSums {
    repeat: usize,
    n_ok: u64,
    sum: Array2<f64>,
    sumsq: Array2<f64>,
    wsum: Vec<f64>,
    aborted: u64,
    radius_violations: u64,
    omitted: usize,
    downgraded: Option<MagnusOrder>,
}

/// Run `n_repeats × n_traj` trajectories and reduce deterministically.
///
/// Trajectory `t` of repeat `r` uses stream key
/// `(master_seed, r·n_traj + t)`, so estimates are bitwise independent of
/// thread count and scheduling. The run fails if more than 1% of
/// trajectories abort with non-finite states.
pub fn run_ensemble(
    model: &LindbladModel,
    initial: &InitialState,
    cfg: &EnsembleConfig,
) -> Result<EnsembleEstimate> {
    cfg.validate()?;
    if initial.dim() != model.dim {
        return Err(QsdError::DimensionMismatch(
            "initial state dimension != model dimension".into(),
        ));
    }
    let engine = MagnusEngine::new(model, cfg.scheme)?;
    let observables: Vec<CMat> = model.observables.iter().map(|(_, op)| op.clone()).collect();
    let names: Vec<String> = model.observables.iter().map(|(n, _)| n.clone()).collect();
    let n_obs = observables.len();
    let n_points = cfg.n_steps as usize + 1;

    // Fixed block layout (never crossing repeat boundaries) keeps the
    // reduction order independent of parallel scheduling.
    let mut blocks = Vec::new();
    for repeat in 0..cfg.n_repeats {
        let mut start = 0usize;
        while start < cfg.n_traj {
            let end = (start + REDUCTION_BLOCK).min(cfg.n_traj);
            blocks.push((repeat, start, end));
            start = end;
        }
    }

    let block_results: Vec<Result<BlockSums>> = blocks
        .par_iter()
        .map(|&(repeat, start, end)| {
            let mut acc = BlockSums {
                repeat,
                n_ok: 0,
                sum: Array2::zeros((n_obs, n_points)),
                sumsq: Array2::zeros((n_obs, n_points)),
                wsum: vec![0.0; n_points],
                aborted: 0,
                radius_violations: 0,
                omitted: 0,
                downgraded: None,
            };
            for t in start..end {
                let key = StreamKey::new(
                    cfg.master_seed,
                    (repeat * cfg.n_traj + t) as u64,
                );
                let rec = run_trajectory(
                    &engine,
                    initial,
                    cfg.delta,
                    cfg.n_steps,
                    &observables,
                    key,
                    cfg.fourier_terms,
                )?;
                acc.radius_violations += rec.radius_violations;
                acc.omitted = acc.omitted.max(rec.omitted_triple_terms);
                if acc.downgraded.is_none() {
                    acc.downgraded = rec.downgraded_from;
                }
                if rec.aborted_at.is_some() {
                    acc.aborted += 1;
                    continue;
                }
                acc.n_ok += 1;
                for o in 0..n_obs {
                    for s in 0..n_points {
                        let v = rec.values[[o, s]];
                        acc.sum[[o, s]] += v;
                        acc.sumsq[[o, s]] += v * v;
                    }
                }
                for s in 0..n_points {
                    acc.wsum[s] += rec.weights[s];
                }
            }
            Ok(acc)
        })
        .collect();

    // Combine per repeat, in block order.
    let mut rep_n_ok = vec![0u64; cfg.n_repeats];
    let mut rep_sum = vec![Array2::<f64>::zeros((n_obs, n_points)); cfg.n_repeats];
    let mut rep_sumsq = vec![Array2::<f64>::zeros((n_obs, n_points)); cfg.n_repeats];
    let mut rep_wsum = vec![vec![0.0; n_points]; cfg.n_repeats];
    let mut aborted = 0u64;
    let mut radius_violations = 0u64;
    let mut omitted = 0usize;
    let mut downgraded = None;
    for res in block_results {
        let b = res?;
        rep_n_ok[b.repeat] += b.n_ok;
        rep_sum[b.repeat] += &b.sum;
        rep_sumsq[b.repeat] += &b.sumsq;
        for s in 0..n_points {
            rep_wsum[b.repeat][s] += b.wsum[s];
        }
        aborted += b.aborted;
        radius_violations += b.radius_violations;
        omitted = omitted.max(b.omitted);
        if downgraded.is_none() {
            downgraded = b.downgraded;
        }
    }

    let total = (cfg.n_traj * cfg.n_repeats) as u64;
    if aborted * 100 > total {
        return Err(QsdError::RunFailure(format!(
            "{aborted} of {total} trajectories aborted with non-finite states (> 1%)"
        )));
    }
    if let Some(r) = rep_n_ok.iter().position(|&n| n == 0) {
        return Err(QsdError::RunFailure(format!(
            "every trajectory of repeat {r} aborted"
        )));
    }

    let mut per_repeat_mean = Array3::<f64>::zeros((cfg.n_repeats, n_obs, n_points));
    let mut per_repeat_var = Array3::<f64>::zeros((cfg.n_repeats, n_obs, n_points));
    let mut weight_per_repeat = Array2::<f64>::zeros((cfg.n_repeats, n_points));
    for r in 0..cfg.n_repeats {
        let n = rep_n_ok[r] as f64;
        for o in 0..n_obs {
            for s in 0..n_points {
                let m = rep_sum[r][[o, s]] / n;
                per_repeat_mean[[r, o, s]] = m;
                per_repeat_var[[r, o, s]] = if rep_n_ok[r] > 1 {
                    ((rep_sumsq[r][[o, s]] - n * m * m) / (n - 1.0)).max(0.0)
                } else {
                    0.0
                };
            }
        }
        for s in 0..n_points {
            weight_per_repeat[[r, s]] = rep_wsum[r][s] / n;
        }
    }

    let mut mean = Array2::<f64>::zeros((n_obs, n_points));
    let mut ci_half = Array2::<f64>::zeros((n_obs, n_points));
    let mut column = vec![0.0; cfg.n_repeats];
    for o in 0..n_obs {
        for s in 0..n_points {
            for r in 0..cfg.n_repeats {
                column[r] = per_repeat_mean[[r, o, s]];
            }
            let (m, hw) = stats::mean_with_ci(&column, cfg.ci_level)?;
            mean[[o, s]] = m;
            ci_half[[o, s]] = hw;
        }
    }
    let mut weight_mean = vec![0.0; n_points];
    let mut weight_ci = vec![0.0; n_points];
    for s in 0..n_points {
        for r in 0..cfg.n_repeats {
            column[r] = weight_per_repeat[[r, s]];
        }
        let (m, hw) = stats::mean_with_ci(&column, cfg.ci_level)?;
        weight_mean[s] = m;
        weight_ci[s] = hw;
    }

    let times: Vec<f64> = (0..n_points).map(|s| s as f64 * cfg.delta).collect();
    Ok(EnsembleEstimate {
        times,
        names,
        per_repeat_mean,
        per_repeat_var,
        mean,
        ci_half,
        weight_per_repeat,
        weight_mean,
        weight_ci,
        n_traj: cfg.n_traj,
        n_repeats: cfg.n_repeats,
        ci_level: cfg.ci_level,
        scheme: cfg.scheme,
        delta: cfg.delta,
        aborted_trajectories: aborted,
        total_trajectories: total,
        radius_violations,
        max_omitted_triple_terms: omitted,
        downgraded_from: downgraded,
    })
}

/// Exact-solver observable series on the ensemble time grid.
#[derive(Debug, Clone)]
pub struct ExactReference {
    pub times: Vec<f64>,
    pub names: Vec<String>,
    /// values[[observable, step]].
    pub values: Array2<f64>,
}

/// Propagate the model's initial density matrix exactly on the given grid
/// and evaluate the declared observables.
pub fn exact_reference(
    model: &LindbladModel,
    initial: &InitialState,
    delta: f64,
    n_steps: u64,
) -> Result<ExactReference> {
    let rho0 = DensityMatrix::new(initial.density_matrix())?;
    let series = exact::propagate_series(model, &rho0, delta, n_steps as usize)?;
    let names: Vec<String> = model.observables.iter().map(|(n, _)| n.clone()).collect();
    let n_points = n_steps as usize + 1;
    let mut values = Array2::<f64>::zeros((names.len(), n_points));
    for (o, (_, op)) in model.observables.iter().enumerate() {
        for (s, rho) in series.iter().enumerate() {
            values[[o, s]] = rho.expectation(op);
        }
    }
    let times = (0..n_points).map(|s| s as f64 * delta).collect();
    Ok(ExactReference {
        times,
        names,
        values,
    })
}

/// Error of an ensemble estimate against an exact reference.
#[derive(Debug, Clone)]
pub struct ErrorReport {
    pub times: Vec<f64>,
    pub names: Vec<String>,
    /// |grand mean − exact| per observable per step.
    pub per_step_error: Array2<f64>,
    /// Average over steps ≥ 1 of |repeat mean − exact|: [repeat, observable].
    pub per_repeat_time_avg: Array2<f64>,
    pub time_avg_mean: Vec<f64>,
    pub time_avg_ci: Vec<f64>,
    /// Per-repeat error averaged over observables and steps.
    pub per_repeat_overall: Vec<f64>,
    pub overall_mean: f64,
    pub overall_ci: f64,
    pub ci_level: f64,
}

/// Compare an ensemble estimate to the exact solver on a matching grid.
///
/// Time averages run over steps 1..=n (the initial point agrees by
/// construction and would only dilute them).
pub fn error_vs_exact(est: &EnsembleEstimate, reference: &ExactReference) -> Result<ErrorReport> {
    if est.times.len() != reference.times.len() {
        return Err(QsdError::DimensionMismatch(format!(
            "estimate has {} time points, reference {}",
            est.times.len(),
            reference.times.len()
        )));
    }
    for (a, b) in est.times.iter().zip(reference.times.iter()) {
        if (a - b).abs() > 1e-9 * a.abs().max(1.0) {
            return Err(QsdError::DimensionMismatch(format!(
                "time grids differ: {a} vs {b}"
            )));
        }
    }
    if est.names != reference.names {
        return Err(QsdError::DimensionMismatch(
            "observable sets differ between estimate and reference".into(),
        ));
    }
    let n_obs = est.names.len();
    let n_points = est.times.len();
    let n_steps = n_points - 1;
    if n_obs == 0 {
        return Err(QsdError::InvalidArgument(
            "no observables to compare".into(),
        ));
    }
    let mut per_step_error = Array2::<f64>::zeros((n_obs, n_points));
    for o in 0..n_obs {
        for s in 0..n_points {
            per_step_error[[o, s]] = (est.mean[[o, s]] - reference.values[[o, s]]).abs();
        }
    }
    let mut per_repeat_time_avg = Array2::<f64>::zeros((est.n_repeats, n_obs));
    for r in 0..est.n_repeats {
        for o in 0..n_obs {
            let mut acc = 0.0;
            for s in 1..n_points {
                acc += (est.per_repeat_mean[[r, o, s]] - reference.values[[o, s]]).abs();
            }
            per_repeat_time_avg[[r, o]] = acc / n_steps as f64;
        }
    }
    let mut time_avg_mean = vec![0.0; n_obs];
    let mut time_avg_ci = vec![0.0; n_obs];
    for o in 0..n_obs {
        let col: Vec<f64> = (0..est.n_repeats)
            .map(|r| per_repeat_time_avg[[r, o]])
            .collect();
        let (m, hw) = stats::mean_with_ci(&col, est.ci_level)?;
        time_avg_mean[o] = m;
        time_avg_ci[o] = hw;
    }
    let per_repeat_overall: Vec<f64> = (0..est.n_repeats)
        .map(|r| {
            (0..n_obs)
                .map(|o| per_repeat_time_avg[[r, o]])
                .sum::<f64>()
                / n_obs as f64
        })
        .collect();
    let (overall_mean, overall_ci) = stats::mean_with_ci(&per_repeat_overall, est.ci_level)?;
    Ok(ErrorReport {
        times: est.times.clone(),
        names: est.names.clone(),
        per_step_error,
        per_repeat_time_avg,
        time_avg_mean,
        time_avg_ci,
        per_repeat_overall,
        overall_mean,
        overall_ci,
        ci_level: est.ci_level,
    })
}

/// Result of a weak-order regression over a step-size ladder.
#[derive(Debug, Clone)]
pub struct WeakOrderReport {
    pub deltas: Vec<f64>,
    /// Final-time observable error (averaged over observables and repeats).
    pub errors: Vec<f64>,
    /// Standard error of each entry of `errors` across repeats.
    pub error_se: Vec<f64>,
    pub slope: f64,
    pub slope_ci_half: f64,
    /// True when any measured error is within 3 standard errors of the
    /// Monte Carlo noise floor (or at machine precision), making the
    /// regression unreliable.
    pub below_noise_floor: bool,
}

/// Estimate the weak convergence order of a scheme by measuring the
/// final-time observable error against the exact solver over a ladder of
/// step sizes at fixed horizon, then regressing log error on log Δ.
pub fn estimate_weak_order(
    model: &LindbladModel,
    initial: &InitialState,
    base: &EnsembleConfig,
    t_final: f64,
    deltas: &[f64],
) -> Result<WeakOrderReport> {
    if deltas.len() < 3 {
        return Err(QsdError::InvalidArgument(
            "need at least 3 step sizes for an order estimate".into(),
        ));
    }
    let span = deltas.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = deltas.iter().cloned().fold(0.0f64, f64::max);
    if max / span < 10.0 {
        return Err(QsdError::InvalidArgument(
            "step sizes must span at least one decade".into(),
        ));
    }
    let mut errors = Vec::with_capacity(deltas.len());
    let mut error_se = Vec::with_capacity(deltas.len());
    for &delta in deltas {
        let steps_f = t_final / delta;
        let n_steps = steps_f.round();
        if n_steps < 1.0 || (steps_f - n_steps).abs() > 1e-9 * steps_f.max(1.0) {
            return Err(QsdError::InvalidArgument(format!(
                "t_final {t_final} is not an integer multiple of delta {delta}"
            )));
        }
        let mut cfg = *base;
        cfg.delta = delta;
        cfg.n_steps = n_steps as u64;
        let est = run_ensemble(model, initial, &cfg)?;
        let reference = exact_reference(model, initial, delta, cfg.n_steps)?;
        let last = est.times.len() - 1;
        let n_obs = est.names.len();
        // Final-time error per repeat, averaged over observables.
        let per_repeat: Vec<f64> = (0..est.n_repeats)
            .map(|r| {
                (0..n_obs)
                    .map(|o| {
                        (est.per_repeat_mean[[r, o, last]] - reference.values[[o, last]]).abs()
                    })
                    .sum::<f64>()
                    / n_obs as f64
            })
            .collect();
        errors.push(stats::mean(&per_repeat));
        error_se.push(stats::standard_error(&per_repeat));
    }
    let below_noise_floor = errors
        .iter()
        .zip(error_se.iter())
        .any(|(&e, &se)| e <= 3.0 * se.max(1e-13));
    let logs: Vec<f64> = deltas.iter().map(|d| d.ln()).collect();
    let log_err: Vec<f64> = errors.iter().map(|e| e.max(1e-300).ln()).collect();
    let (slope, half) = stats::slope_with_ci(&logs, &log_err, 0.99)?;
    Ok(WeakOrderReport {
        deltas: deltas.to_vec(),
        errors,
        error_se,
        slope,
        slope_ci_half: half,
        below_noise_floor,
    })
}

/// Write an estimate in long-format CSV with the stable schema
/// `repeat, time, observable, mean, ci_halfwidth`.
///
/// Rows with a numeric repeat index carry that repeat's trajectory mean
/// (half-width 0: intervals are defined across repeats, not within one);
/// rows with repeat = "all" carry the cross-repeat mean and Student-t
/// half-width.
pub fn write_results_csv<W: std::io::Write>(est: &EnsembleEstimate, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["repeat", "time", "observable", "mean", "ci_halfwidth"])
        .map_err(csv_err)?;
    for (o, name) in est.names.iter().enumerate() {
        for (s, t) in est.times.iter().enumerate() {
            for r in 0..est.n_repeats {
                w.write_record([
                    r.to_string(),
                    format!("{t:.12e}"),
                    name.clone(),
                    format!("{:.12e}", est.per_repeat_mean[[r, o, s]]),
                    format!("{:.12e}", 0.0),
                ])
                .map_err(csv_err)?;
            }
            w.write_record([
                "all".to_string(),
                format!("{t:.12e}"),
                name.clone(),
                format!("{:.12e}", est.mean[[o, s]]),
                format!("{:.12e}", est.ci_half[[o, s]]),
            ])
            .map_err(csv_err)?;
        }
    }
    w.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> QsdError {
    QsdError::Io(std::io::Error::other(e))
}
