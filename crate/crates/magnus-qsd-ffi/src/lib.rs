//! C ABI for the magnus-qsd trajectory solver.
//!
//! Conventions:
//! - Handles (`MqsdModel`, `MqsdResult`) are opaque pointers owned by this
//!   library; release each with its matching `_free` function exactly once.
//! - Every fallible call returns an [`MqsdStatus`]; on any status other than
//!   `MQSD_STATUS_OK` the thread-local message queried by
//!   [`mqsd_last_error`] describes the failure.
//! - Array outputs copy into caller-provided buffers whose capacity is
//!   passed in elements; calls fail with `MQSD_STATUS_DIMENSION_MISMATCH`
//!   when the buffer is too small.
//! - All entry points catch panics and convert them to
//!   `MQSD_STATUS_INTERNAL`, so no unwinding crosses the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use magnus_qsd::ensemble::{run_ensemble, EnsembleConfig, EnsembleEstimate};
use magnus_qsd::exact::{propagate_exact, DensityMatrix};
use magnus_qsd::magnus::{
    FourthOrderFallback, MagnusOrder, SchemeConfig, SchemeKind, UnravelingKind,
};
use magnus_qsd::models::{
    build_damped_qubit, build_fmo, build_rpm, build_tfim, fmo_initial_state, model_from_json,
    rpm_initial_state, tfim_initial_state, InitialState, LindbladModel, RpmParameters,
};
use magnus_qsd::QsdError;

/// Status codes returned by every fallible function in this interface.
#[repr(C)]
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum MqsdStatus {
    /// Success.
    Ok = 0,
    /// A required pointer argument was null.
    NullArgument = 1,
    /// An argument was outside its documented range.
    InvalidArgument = 2,
    /// Mismatched dimensions or an undersized output buffer.
    DimensionMismatch = 3,
    /// A linear solve failed; the system is numerically singular.
    Singular = 4,
    /// A non-finite value appeared during the computation.
    NonFinite = 5,
    /// A state that must have unit norm does not.
    NotNormalized = 6,
    /// The simulation ran but failed (for example, every trajectory aborted).
    RunFailure = 7,
    /// Invalid configuration (scheme, step count, model parameters).
    Config = 8,
    /// File or stream input/output failed.
    Io = 9,
    /// A string argument was not valid UTF-8.
    Utf8 = 10,
    /// An internal invariant failed (a panic was caught at the boundary).
    Internal = 11,
}

fn status_of(err: &QsdError) -> MqsdStatus {
    match err {
        QsdError::DimensionMismatch(_) => MqsdStatus::DimensionMismatch,
        QsdError::InvalidArgument(_) => MqsdStatus::InvalidArgument,
        QsdError::Singular(_) => MqsdStatus::Singular,
        QsdError::NonFinite(_) => MqsdStatus::NonFinite,
        QsdError::NotNormalized(_) => MqsdStatus::NotNormalized,
        QsdError::RunFailure(_) => MqsdStatus::RunFailure,
        QsdError::Config(_) => MqsdStatus::Config,
        QsdError::Io(_) => MqsdStatus::Io,
    }
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(message: &str) {
    let sanitized: String = message.chars().filter(|&c| c != '\0').collect();
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(sanitized).unwrap_or_default();
    });
}

fn fail(err: &QsdError) -> MqsdStatus {
    set_error(&err.to_string());
    status_of(err)
}

fn fail_with(status: MqsdStatus, message: &str) -> MqsdStatus {
    set_error(message);
    status
}

/// Run `body` with panics converted to `MQSD_STATUS_INTERNAL`.
fn guarded(body: impl FnOnce() -> MqsdStatus) -> MqsdStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(status) => status,
        Err(_) => fail_with(MqsdStatus::Internal, "internal panic caught at the C boundary"),
    }
}

/// Copy the most recent error message on this thread into `buffer`
/// (NUL-terminated, truncated to `capacity` bytes). Returns the full
/// message length in bytes, excluding the NUL. A zero `capacity` or null
/// `buffer` only queries the length.
///
/// # Safety
///
/// `buffer` must be null or point to at least `capacity` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn mqsd_last_error(buffer: *mut c_char, capacity: usize) -> usize {
    LAST_ERROR.with(|slot| {
        let msg = slot.borrow();
        let bytes = msg.as_bytes();
        if !buffer.is_null() && capacity > 0 {
            let n = bytes.len().min(capacity - 1);
            std::ptr::copy_nonoverlapping(bytes.as_ptr().cast::<c_char>(), buffer, n);
            *buffer.add(n) = 0;
        }
        bytes.len()
    })
}

/// Library version as a static NUL-terminated string; do not free.
#[no_mangle]
pub extern "C" fn mqsd_version() -> *const c_char {
    static VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), "\0");
    VERSION.as_ptr().cast()
}

// ---------------------------------------------------------------------------
// Model handles
// ---------------------------------------------------------------------------

/// Opaque handle owning a Lindblad model and its canonical initial state.
pub struct MqsdModel {
    model: LindbladModel,
    initial: InitialState,
}

fn model_out(
    out: *mut *mut MqsdModel,
    built: magnus_qsd::Result<(LindbladModel, InitialState)>,
) -> MqsdStatus {
    if out.is_null() {
        return fail_with(MqsdStatus::NullArgument, "output handle pointer is null");
    }
    match built {
        Ok((model, initial)) => {
            let handle = Box::new(MqsdModel { model, initial });
            unsafe { *out = Box::into_raw(handle) };
            MqsdStatus::Ok
        }
        Err(e) => fail(&e),
    }
}

/// Create the transverse-field Ising chain with uniform site damping and
/// the all-excited initial state. Observables are the basis populations.
///
/// # Safety
///
/// `out` must point to a writable `MqsdModel*` slot.
#[no_mangle]
pub unsafe extern "C" fn mqsd_model_tfim(
    n_sites: usize,
    coupling: f64,
    transverse_field: f64,
    damping_rate: f64,
    out: *mut *mut MqsdModel,
) -> MqsdStatus {
    guarded(|| {
        let built = build_tfim(
            n_sites,
            coupling,
            transverse_field,
            &vec![damping_rate; n_sites],
        )
        .map(|m| (m, tfim_initial_state(n_sites)));
        model_out(out, built)
    })
}

/// Create the seven-level light-harvesting exciton-transport model
/// (femtosecond time unit) with its canonical single-site initial state.
///
/// # Safety
///
/// `out` must point to a writable `MqsdModel*` slot.
#[no_mangle]
pub unsafe extern "C" fn mqsd_model_fmo(out: *mut *mut MqsdModel) -> MqsdStatus {
    guarded(|| model_out(out, build_fmo().map(|m| (m, fmo_initial_state()))))
}

/// Create the radical-pair (spin-chemistry) model with shelving states.
/// `theta`/`phi` give the static-field direction in radians, `b0_gauss` its
/// magnitude, and `shelving_rate_per_s` the recombination rate into the
/// singlet/triplet shelves. Time unit is seconds.
///
/// # Safety
///
/// `out` must point to a writable `MqsdModel*` slot.
#[no_mangle]
pub unsafe extern "C" fn mqsd_model_rpm(
    theta: f64,
    phi: f64,
    b0_gauss: f64,
    shelving_rate_per_s: f64,
    out: *mut *mut MqsdModel,
) -> MqsdStatus {
    guarded(|| {
        let params = RpmParameters {
            theta,
            phi,
            b0: b0_gauss,
            k: shelving_rate_per_s,
            ..RpmParameters::default()
        };
        model_out(out, build_rpm(&params).map(|m| (m, rpm_initial_state())))
    })
}

/// Create a driven damped qubit: Hamiltonian `omega * sigma_x` with decay
/// rate `gamma` (no decay channel when `gamma` is zero). Initial state is
/// the excited level (basis index 1, population observable `pop_1`).
///
/// # Safety
///
/// `out` must point to a writable `MqsdModel*` slot.
#[no_mangle]
pub unsafe extern "C" fn mqsd_model_damped_qubit(
    omega: f64,
    gamma: f64,
    out: *mut *mut MqsdModel,
) -> MqsdStatus {
    guarded(|| {
        model_out(
            out,
            build_damped_qubit(omega, gamma).map(|m| (m, InitialState::pure_basis(2, 1))),
        )
    })
}

/// Create a model from its JSON description (fields `dim`, `hamiltonian`,
/// `jump_ops`, `observables`, `unit_note`) with a basis-state initial
/// condition.
///
/// # Safety
///
/// `json` must be a NUL-terminated string; `out` must point to a
/// writable `MqsdModel*` slot.
#[no_mangle]
pub unsafe extern "C" fn mqsd_model_from_json(
    json: *const c_char,
    initial_basis_index: usize,
    out: *mut *mut MqsdModel,
) -> MqsdStatus {
    guarded(|| {
        if json.is_null() {
            return fail_with(MqsdStatus::NullArgument, "json pointer is null");
        }
        let text = match CStr::from_ptr(json).to_str() {
            Ok(t) => t,
            Err(_) => return fail_with(MqsdStatus::Utf8, "json is not valid UTF-8"),
        };
        let built = model_from_json(text).and_then(|m| {
            if initial_basis_index >= m.dim {
                return Err(QsdError::InvalidArgument(format!(
                    "initial basis index {initial_basis_index} outside dimension {}",
                    m.dim
                )));
            }
            let initial = InitialState::pure_basis(m.dim, initial_basis_index);
            Ok((m, initial))
        });
        model_out(out, built)
    })
}

/// Hilbert-space dimension of the model, or 0 for a null handle.
///
/// # Safety
///
/// `model` must be null or a live handle from a `mqsd_model_*` constructor.
#[no_mangle]
pub unsafe extern "C" fn mqsd_model_dim(model: *const MqsdModel) -> usize {
    if model.is_null() {
        return 0;
    }
    (&*model).model.dim
}

/// Number of declared observables, or 0 for a null handle.
///
/// # Safety
///
/// `model` must be null or a live handle from a `mqsd_model_*` constructor.
#[no_mangle]
pub unsafe extern "C" fn mqsd_model_observable_count(model: *const MqsdModel) -> usize {
    if model.is_null() {
        return 0;
    }
    (&*model).model.observables.len()
}

/// Copy the name of observable `index` into `buffer` (NUL-terminated,
/// truncated to `capacity` bytes). Returns the full name length in bytes,
/// or 0 when the handle is null or the index is out of range.
///
/// # Safety
///
/// `model` must be null or a live handle; `buffer` must be null or point
/// to at least `capacity` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn mqsd_model_observable_name(
    model: *const MqsdModel,
    index: usize,
    buffer: *mut c_char,
    capacity: usize,
) -> usize {
    if model.is_null() {
        return 0;
    }
    let Some((name, _)) = (&*model).model.observables.get(index) else {
        return 0;
    };
    let bytes = name.as_bytes();
    if !buffer.is_null() && capacity > 0 {
        let n = bytes.len().min(capacity - 1);
        std::ptr::copy_nonoverlapping(bytes.as_ptr().cast::<c_char>(), buffer, n);
        *buffer.add(n) = 0;
    }
    bytes.len()
}

/// Release a model handle. Passing null is a no-op.
///
/// # Safety
///
/// `model` must be null or a live handle not freed before; the handle is
/// invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn mqsd_model_free(model: *mut MqsdModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

// ---------------------------------------------------------------------------
// Run configuration
// ---------------------------------------------------------------------------

/// Integration scheme selector.
#[repr(C)]
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum MqsdScheme {
    /// Euler–Maruyama reference step (linear unraveling only).
    EulerMaruyama = 0,
    /// Stochastic Magnus exponential step, truncation order 1.
    Magnus1 = 1,
    /// Stochastic Magnus exponential step, truncation order 2.
    Magnus2 = 2,
    /// Stochastic Magnus exponential step, truncation order 3.
    Magnus3 = 3,
    /// Stochastic Magnus exponential step, truncation order 4.
    Magnus4 = 4,
}

/// State-equation unraveling selector.
#[repr(C)]
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum MqsdUnraveling {
    /// Linear quantum-state-diffusion equation with weight tracking.
    Linear = 0,
    /// Norm-preserving nonlinear quantum-state-diffusion equation.
    Nonlinear = 1,
}

/// Ensemble run configuration. Create with `mqsd_run_config_default` and
/// adjust fields before calling `mqsd_run`.
#[repr(C)]
#[derive(Clone, Copy)]
pub struct MqsdRunConfig {
    pub scheme: MqsdScheme,
    pub unraveling: MqsdUnraveling,
    /// Nonzero enables the two-stage exponent-averaging correction
    /// (nonlinear unraveling only).
    pub rkmk: i32,
    /// Nonzero makes the order-4 structure check an error instead of a
    /// silent downgrade to order 3.
    pub strict_fourth_order: i32,
    /// Step size in the model's time unit; must be positive.
    pub delta: f64,
    /// Number of steps; the horizon is `delta * n_steps`.
    pub n_steps: u64,
    /// Trajectories per repeat.
    pub n_traj: usize,
    /// Independent repeats used for the confidence intervals.
    pub n_repeats: usize,
    /// Master seed; identical configurations reproduce bit-identical results.
    pub master_seed: u64,
    /// Fourier truncation order of the stochastic-increment sampler.
    pub fourier_terms: usize,
    /// Two-sided confidence level in (0, 1), for example 0.99.
    pub ci_level: f64,
}

/// A run configuration with library defaults: order-2 Magnus, nonlinear
/// unraveling, 1000 trajectories, 10 repeats, 99% confidence intervals.
#[no_mangle]
pub extern "C" fn mqsd_run_config_default() -> MqsdRunConfig {
    let e = EnsembleConfig::new(SchemeConfig::default(), 0.1, 10);
    MqsdRunConfig {
        scheme: MqsdScheme::Magnus2,
        unraveling: MqsdUnraveling::Nonlinear,
        rkmk: 0,
        strict_fourth_order: 0,
        delta: 0.1,
        n_steps: 10,
        n_traj: e.n_traj,
        n_repeats: e.n_repeats,
        master_seed: e.master_seed,
        fourier_terms: e.fourier_terms,
        ci_level: e.ci_level,
    }
}

fn scheme_config(cfg: &MqsdRunConfig) -> SchemeConfig {
    let kind = match cfg.scheme {
        MqsdScheme::EulerMaruyama => SchemeKind::EulerMaruyama,
        MqsdScheme::Magnus1 => SchemeKind::Magnus(MagnusOrder::First),
        MqsdScheme::Magnus2 => SchemeKind::Magnus(MagnusOrder::Second),
        MqsdScheme::Magnus3 => SchemeKind::Magnus(MagnusOrder::Third),
        MqsdScheme::Magnus4 => SchemeKind::Magnus(MagnusOrder::Fourth),
    };
    let unraveling = match cfg.unraveling {
        MqsdUnraveling::Linear => UnravelingKind::Linear,
        MqsdUnraveling::Nonlinear => UnravelingKind::Nonlinear,
    };
    let fallback = if cfg.strict_fourth_order != 0 {
        FourthOrderFallback::Error
    } else {
        FourthOrderFallback::Downgrade
    };
    SchemeConfig::new(kind, unraveling)
        .with_rkmk(cfg.rkmk != 0)
        .with_fallback(fallback)
}

// ---------------------------------------------------------------------------
// Results
// ---------------------------------------------------------------------------

/// Opaque handle owning ensemble estimates on the time grid
/// `t_s = s * delta`, `s = 0..=n_steps`.
pub struct MqsdResult {
    estimate: EnsembleEstimate,
}

/// Run the configured ensemble. On success `*out` owns the estimates.
///
/// # Safety
///
/// `model` must be a live handle; `config` must be null (defaults) or point
/// to a valid configuration; `out` must point to a writable `MqsdResult*`
/// slot.
#[no_mangle]
pub unsafe extern "C" fn mqsd_run(
    model: *const MqsdModel,
    config: *const MqsdRunConfig,
    out: *mut *mut MqsdResult,
) -> MqsdStatus {
    guarded(|| {
        if model.is_null() {
            return fail_with(MqsdStatus::NullArgument, "model handle is null");
        }
        if out.is_null() {
            return fail_with(MqsdStatus::NullArgument, "output handle pointer is null");
        }
        let cfg = if config.is_null() {
            mqsd_run_config_default()
        } else {
            *config
        };
        if !(cfg.delta.is_finite() && cfg.delta > 0.0) {
            return fail_with(MqsdStatus::InvalidArgument, "delta must be positive");
        }
        let mut ensemble = EnsembleConfig::new(scheme_config(&cfg), cfg.delta, cfg.n_steps);
        ensemble.n_traj = cfg.n_traj;
        ensemble.n_repeats = cfg.n_repeats;
        ensemble.master_seed = cfg.master_seed;
        ensemble.fourier_terms = cfg.fourier_terms;
        ensemble.ci_level = cfg.ci_level;
        let handle = &*model;
        match run_ensemble(&handle.model, &handle.initial, &ensemble) {
            Ok(estimate) => {
                *out = Box::into_raw(Box::new(MqsdResult { estimate }));
                MqsdStatus::Ok
            }
            Err(e) => fail(&e),
        }
    })
}

/// Number of grid points (steps + 1), or 0 for a null handle.
///
/// # Safety
///
/// `result` must be null or a live handle from `mqsd_run`.
#[no_mangle]
pub unsafe extern "C" fn mqsd_result_len(result: *const MqsdResult) -> usize {
    if result.is_null() {
        return 0;
    }
    (&*result).estimate.times.len()
}

/// Number of recorded observables, or 0 for a null handle.
///
/// # Safety
///
/// `result` must be null or a live handle from `mqsd_run`.
#[no_mangle]
pub unsafe extern "C" fn mqsd_result_observable_count(result: *const MqsdResult) -> usize {
    if result.is_null() {
        return 0;
    }
    (&*result).estimate.names.len()
}

unsafe fn copy_series(
    values: impl ExactSizeIterator<Item = f64>,
    buffer: *mut f64,
    capacity: usize,
) -> MqsdStatus {
    if buffer.is_null() {
        return fail_with(MqsdStatus::NullArgument, "output buffer is null");
    }
    if capacity < values.len() {
        return fail_with(
            MqsdStatus::DimensionMismatch,
            "output buffer is smaller than the series",
        );
    }
    for (i, v) in values.enumerate() {
        *buffer.add(i) = v;
    }
    MqsdStatus::Ok
}

/// Copy the time grid into `buffer` (`capacity` in elements; needs
/// `mqsd_result_len`).
///
/// # Safety
///
/// `result` must be a live handle; `buffer` must point to `capacity`
/// writable doubles.
#[no_mangle]
pub unsafe extern "C" fn mqsd_result_times(
    result: *const MqsdResult,
    buffer: *mut f64,
    capacity: usize,
) -> MqsdStatus {
    guarded(|| {
        if result.is_null() {
            return fail_with(MqsdStatus::NullArgument, "result handle is null");
        }
        copy_series((&*result).estimate.times.iter().copied(), buffer, capacity)
    })
}

/// Copy the ensemble mean of observable `index` over the time grid.
///
/// # Safety
///
/// `result` must be a live handle; `buffer` must point to `capacity`
/// writable doubles.
#[no_mangle]
pub unsafe extern "C" fn mqsd_result_mean(
    result: *const MqsdResult,
    index: usize,
    buffer: *mut f64,
    capacity: usize,
) -> MqsdStatus {
    guarded(|| {
        if result.is_null() {
            return fail_with(MqsdStatus::NullArgument, "result handle is null");
        }
        let est = &(*result).estimate;
        if index >= est.names.len() {
            return fail_with(MqsdStatus::InvalidArgument, "observable index out of range");
        }
        copy_series(est.mean.row(index).iter().copied(), buffer, capacity)
    })
}

/// Copy the confidence-interval half-width of observable `index` over the
/// time grid (level set by the run configuration).
///
/// # Safety
///
/// `result` must be a live handle; `buffer` must point to `capacity`
/// writable doubles.
#[no_mangle]
pub unsafe extern "C" fn mqsd_result_ci_halfwidth(
    result: *const MqsdResult,
    index: usize,
    buffer: *mut f64,
    capacity: usize,
) -> MqsdStatus {
    guarded(|| {
        if result.is_null() {
            return fail_with(MqsdStatus::NullArgument, "result handle is null");
        }
        let est = &(*result).estimate;
        if index >= est.names.len() {
            return fail_with(MqsdStatus::InvalidArgument, "observable index out of range");
        }
        copy_series(est.ci_half.row(index).iter().copied(), buffer, capacity)
    })
}

/// Run diagnostics: trajectories aborted, convergence-radius flags, and
/// whether the order-4 structure check downgraded the scheme to order 3.
///
/// # Safety
///
/// `result` must be a live handle; each output pointer must be null or
/// point to a writable slot.
#[no_mangle]
pub unsafe extern "C" fn mqsd_result_diagnostics(
    result: *const MqsdResult,
    aborted_trajectories: *mut u64,
    radius_violations: *mut u64,
    downgraded_to_third: *mut i32,
) -> MqsdStatus {
    guarded(|| {
        if result.is_null() {
            return fail_with(MqsdStatus::NullArgument, "result handle is null");
        }
        let est = &(*result).estimate;
        if !aborted_trajectories.is_null() {
            *aborted_trajectories = est.aborted_trajectories;
        }
        if !radius_violations.is_null() {
            *radius_violations = est.radius_violations;
        }
        if !downgraded_to_third.is_null() {
            *downgraded_to_third = i32::from(est.downgraded_from.is_some());
        }
        MqsdStatus::Ok
    })
}

/// Release a result handle. Passing null is a no-op.
///
/// # Safety
///
/// `result` must be null or a live handle not freed before; the handle is
/// invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn mqsd_result_free(result: *mut MqsdResult) {
    if !result.is_null() {
        drop(Box::from_raw(result));
    }
}

// ---------------------------------------------------------------------------
// Exact reference
// ---------------------------------------------------------------------------

/// Evaluate the exact (vectorized Liouville propagation) expectation of
/// observable `index` on the grid `t_s = s * delta`, `s = 0..=n_steps`,
/// writing `n_steps + 1` values.
///
/// # Safety
///
/// `model` must be a live handle; `buffer` must point to `capacity`
/// writable doubles.
#[no_mangle]
pub unsafe extern "C" fn mqsd_exact_observable(
    model: *const MqsdModel,
    index: usize,
    delta: f64,
    n_steps: u64,
    buffer: *mut f64,
    capacity: usize,
) -> MqsdStatus {
    guarded(|| {
        if model.is_null() {
            return fail_with(MqsdStatus::NullArgument, "model handle is null");
        }
        let handle = &*model;
        let Some((_, op)) = handle.model.observables.get(index) else {
            return fail_with(MqsdStatus::InvalidArgument, "observable index out of range");
        };
        if !(delta.is_finite() && delta > 0.0) {
            return fail_with(MqsdStatus::InvalidArgument, "delta must be positive");
        }
        let n = n_steps as usize + 1;
        if buffer.is_null() {
            return fail_with(MqsdStatus::NullArgument, "output buffer is null");
        }
        if capacity < n {
            return fail_with(
                MqsdStatus::DimensionMismatch,
                "output buffer is smaller than the series",
            );
        }
        let rho0 = match DensityMatrix::new(handle.initial.density_matrix()) {
            Ok(r) => r,
            Err(e) => return fail(&e),
        };
        for s in 0..n {
            let rho = match propagate_exact(&handle.model, &rho0, delta * s as f64) {
                Ok(r) => r,
                Err(e) => return fail(&e),
            };
            *buffer.add(s) = rho.expectation(op);
        }
        MqsdStatus::Ok
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chars_to_string(buf: &[c_char], n: usize) -> String {
        buf[..n].iter().map(|&c| c as u8 as char).collect()
    }

    fn check(status: MqsdStatus) {
        if status != MqsdStatus::Ok {
            let mut buf = vec![0 as c_char; 256];
            let n = unsafe { mqsd_last_error(buf.as_mut_ptr(), buf.len()) };
            let msg = chars_to_string(&buf, n.min(255));
            panic!("status {status:?}: {msg}");
        }
    }

    #[test]
    fn damped_qubit_through_c_interface_matches_exact_decay() {
        let mut model: *mut MqsdModel = std::ptr::null_mut();
        check(unsafe { mqsd_model_damped_qubit(0.0, 0.5, &mut model) });
        assert_eq!(unsafe { mqsd_model_dim(model) }, 2);
        assert_eq!(unsafe { mqsd_model_observable_count(model) }, 2);

        let mut name = vec![0 as c_char; 16];
        let n = unsafe { mqsd_model_observable_name(model, 0, name.as_mut_ptr(), name.len()) };
        let name = chars_to_string(&name, n);
        assert_eq!(name, "pop_0");

        let mut cfg = mqsd_run_config_default();
        cfg.delta = 0.05;
        cfg.n_steps = 40;
        cfg.n_traj = 200;
        cfg.n_repeats = 4;
        cfg.master_seed = 424242;
        let mut result: *mut MqsdResult = std::ptr::null_mut();
        check(unsafe { mqsd_run(model, &cfg, &mut result) });

        let len = unsafe { mqsd_result_len(result) };
        assert_eq!(len, 41);
        let mut times = vec![0.0; len];
        let mut mean = vec![0.0; len];
        let mut ci = vec![0.0; len];
        let mut exact = vec![0.0; len];
        check(unsafe { mqsd_result_times(result, times.as_mut_ptr(), len) });
        check(unsafe { mqsd_result_mean(result, 1, mean.as_mut_ptr(), len) });
        check(unsafe { mqsd_result_ci_halfwidth(result, 1, ci.as_mut_ptr(), len) });
        check(unsafe { mqsd_exact_observable(model, 1, cfg.delta, cfg.n_steps, exact.as_mut_ptr(), len) });

        assert!((times[40] - 2.0).abs() < 1e-12);
        assert!((exact[40] - (-0.5f64 * 2.0).exp()).abs() < 1e-8);
        for s in 0..len {
            let tol = 6.0 * ci[s].max(1e-3);
            assert!(
                (mean[s] - exact[s]).abs() < tol,
                "step {s}: mean {} vs exact {}",
                mean[s],
                exact[s]
            );
        }

        let mut aborted = u64::MAX;
        let mut radius = u64::MAX;
        let mut downgraded = -1;
        check(unsafe {
            mqsd_result_diagnostics(result, &mut aborted, &mut radius, &mut downgraded)
        });
        assert_eq!(aborted, 0);
        assert_eq!(downgraded, 0);
        assert!(radius < u64::MAX);

        unsafe {
            mqsd_result_free(result);
            mqsd_model_free(model);
        }
    }

    #[test]
    fn null_and_range_errors_are_reported_not_fatal() {
        assert_eq!(
            unsafe { mqsd_run(std::ptr::null(), std::ptr::null(), std::ptr::null_mut()) },
            MqsdStatus::NullArgument
        );
        let mut model: *mut MqsdModel = std::ptr::null_mut();
        check(unsafe { mqsd_model_damped_qubit(1.0, 0.0, &mut model) });

        let mut cfg = mqsd_run_config_default();
        cfg.delta = -1.0;
        let mut result: *mut MqsdResult = std::ptr::null_mut();
        assert_eq!(
            unsafe { mqsd_run(model, &cfg, &mut result) },
            MqsdStatus::InvalidArgument
        );
        let mut msg = vec![0 as c_char; 128];
        let n = unsafe { mqsd_last_error(msg.as_mut_ptr(), msg.len()) };
        assert!(n > 0);

        // Euler–Maruyama with the nonlinear unraveling is rejected by
        // validation, not by a crash.
        cfg.delta = 0.1;
        cfg.scheme = MqsdScheme::EulerMaruyama;
        cfg.unraveling = MqsdUnraveling::Nonlinear;
        assert_eq!(
            unsafe { mqsd_run(model, &cfg, &mut result) },
            MqsdStatus::Config
        );

        let mut small = [0.0f64; 2];
        cfg.scheme = MqsdScheme::Magnus1;
        cfg.unraveling = MqsdUnraveling::Linear;
        cfg.n_traj = 8;
        cfg.n_repeats = 2;
        cfg.n_steps = 5;
        check(unsafe { mqsd_run(model, &cfg, &mut result) });
        assert_eq!(
            unsafe { mqsd_result_mean(result, 0, small.as_mut_ptr(), small.len()) },
            MqsdStatus::DimensionMismatch
        );
        assert_eq!(
            unsafe { mqsd_result_mean(result, 99, small.as_mut_ptr(), small.len()) },
            MqsdStatus::InvalidArgument
        );

        unsafe {
            mqsd_result_free(result);
            mqsd_model_free(model);
            mqsd_model_free(std::ptr::null_mut());
            mqsd_result_free(std::ptr::null_mut());
        }
    }

    #[test]
    fn json_model_and_version_round_trip() {
        let version = unsafe { CStr::from_ptr(mqsd_version()) };
        assert_eq!(version.to_str().unwrap(), env!("CARGO_PKG_VERSION"));

        let json = r#"{
            "dim": 2,
            "hamiltonian": {"re": [[0.0, 1.0], [1.0, 0.0]], "im": [[0.0, 0.0], [0.0, 0.0]]},
            "jump_ops": [],
            "observables": [["up", {"re": [[1.0, 0.0], [0.0, 0.0]], "im": [[0.0, 0.0], [0.0, 0.0]]}]],
            "unit_note": "1"
        }"#;
        let cjson = CString::new(json).unwrap();
        let mut model: *mut MqsdModel = std::ptr::null_mut();
        check(unsafe { mqsd_model_from_json(cjson.as_ptr(), 0, &mut model) });
        assert_eq!(unsafe { mqsd_model_dim(model) }, 2);

        let mut bad: *mut MqsdModel = std::ptr::null_mut();
        assert_eq!(
            unsafe { mqsd_model_from_json(cjson.as_ptr(), 7, &mut bad) },
            MqsdStatus::InvalidArgument
        );
        unsafe { mqsd_model_free(model) };
    }
}
