//! C ABI over the quenchlab core.
//!
//! Objects are opaque handles created by `ql_*_new`/`ql_*` constructors and
//! released with the matching `ql_*_free`. Every fallible call returns a
//! [`QlStatus`]; on failure the message is available from
//! [`ql_last_error_message`] on the same thread. Panics never cross the
//! boundary.

use std::cell::RefCell;
use std::ffi::{c_char, c_int, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use quenchlab::analysis::{classify_simultaneity, fit_rate, FitOptions, GapRange, RateModel, Simultaneity};
use quenchlab::integrator::{integrate, IntegratorControls, QuenchReport, RecordMode, Trajectory, Verdict};
use quenchlab::kernel::{assemble_operator, build_kernel, Domain, NonlocalOperator, Profile};
use quenchlab::model::{Component, ModelParams};
use quenchlab::stationary::{dichotomy_probe, solve_stationary, Probe, ProbeOptions, StationaryResult};
use quenchlab::Error;

/// Result codes. Zero is success.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum QlStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Numerical = 3,
    Indeterminate = 4,
    Io = 5,
    BufferTooSmall = 6,
    Panic = 7,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum QlProfile {
    Tent = 0,
    Bump = 1,
    Epanechnikov = 2,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum QlComponent {
    U = 0,
    V = 1,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum QlSimultaneity {
    Simultaneous = 0,
    OnlyU = 1,
    OnlyV = 2,
    Indeterminate = 3,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum QlRateModel {
    PowerLaw = 0,
    LogCorrected = 1,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QlParams {
    pub lambda: f64,
    pub mu: f64,
    pub p: f64,
    pub q: f64,
    pub alpha: f64,
    pub beta: f64,
}

/// Integrator settings; obtain defaults from [`ql_controls_default`].
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QlControls {
    pub dt_init: f64,
    pub dt_min: f64,
    pub dt_max: f64,
    pub rtol: f64,
    pub atol: f64,
    pub quench_floor: f64,
    pub stop_floor: f64,
    pub positivity_floor: f64,
    pub t_max: f64,
    pub sample_stride: usize,
    /// Nonzero to store full states.
    pub record_full: c_int,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct QlQuenchTime {
    pub estimate: f64,
    pub lower: f64,
    pub upper: f64,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct QlRateFit {
    pub exponent: f64,
    pub log_exponent: f64,
    pub r2: f64,
    /// Refined `T - t_end`.
    pub gap: f64,
    pub samples: usize,
}

/// Discrete nonlocal operator.
pub struct QlOperator(NonlocalOperator);

/// Trajectory and quench report of one integration.
pub struct QlRun {
    traj: Trajectory,
    report: QuenchReport,
}

/// Stationary solution and solver diagnostics.
pub struct QlStationary(StationaryResult);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let s = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(s).ok());
}

fn status_of(e: &Error) -> QlStatus {
    match e {
        Error::Io(_) => QlStatus::Io,
        Error::Indeterminate { .. } => QlStatus::Indeterminate,
        Error::Configuration(_)
        | Error::Resolution(_)
        | Error::Domain(_)
        | Error::Precondition(_)
        | Error::Regime(_)
        | Error::UnsupportedMode(_) => QlStatus::InvalidArgument,
        _ => QlStatus::Numerical,
    }
}

struct Fail(QlStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(QlStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> QlStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => QlStatus::Ok,
        Ok(Err(Fail(s, msg))) => {
            set_error(msg);
            s
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            QlStatus::Panic
        }
    }
}

unsafe fn slice<'a>(p: *const f64, n: usize, what: &str) -> Result<&'a [f64], Fail> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, n))
}

unsafe fn slice_mut<'a>(p: *mut f64, n: usize, what: &str) -> Result<&'a mut [f64], Fail> {
    if n == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, n))
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn put<T>(out: *mut T, v: T, what: &str) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null(what));
    }
    out.write(v);
    Ok(())
}

fn to_params(p: &QlParams) -> ModelParams {
    ModelParams { lambda: p.lambda, mu: p.mu, p: p.p, q: p.q, alpha: p.alpha, beta: p.beta }
}

fn component(c: QlComponent) -> Component {
    match c {
        QlComponent::U => Component::U,
        QlComponent::V => Component::V,
    }
}

fn profile(p: QlProfile) -> Profile {
    match p {
        QlProfile::Tent => Profile::Tent,
        QlProfile::Bump => Profile::Bump,
        QlProfile::Epanechnikov => Profile::Epanechnikov,
    }
}

fn controls(c: &QlControls) -> IntegratorControls {
    IntegratorControls {
        dt_init: c.dt_init,
        dt_min: c.dt_min,
        dt_max: c.dt_max,
        rtol: c.rtol,
        atol: c.atol,
        quench_floor: c.quench_floor,
        stop_floor: c.stop_floor,
        positivity_floor: c.positivity_floor,
        t_max: c.t_max,
        sample_stride: c.sample_stride,
        record: if c.record_full != 0 { RecordMode::Full } else { RecordMode::Lean },
        ..Default::default()
    }
}

const VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), "\0");

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ql_version() -> *const c_char {
    VERSION.as_ptr().cast()
}

/// Message of the last failure on this thread, or null. Valid until the next
/// failing call on the same thread.
#[no_mangle]
pub extern "C" fn ql_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// # Safety
/// `out` must point to writable memory for one `QlControls`.
#[no_mangle]
pub unsafe extern "C" fn ql_controls_default(out: *mut QlControls) -> QlStatus {
    guard(|| {
        let d = IntegratorControls::default();
        let c = QlControls {
            dt_init: d.dt_init,
            dt_min: d.dt_min,
            dt_max: d.dt_max,
            rtol: d.rtol,
            atol: d.atol,
            quench_floor: d.quench_floor,
            stop_floor: d.stop_floor,
            positivity_floor: d.positivity_floor,
            t_max: d.t_max,
            sample_stride: d.sample_stride,
            record_full: 0,
        };
        put(out, c, "out")
    })
}

/// Builds the operator on `[lower, upper]` with `nodes` grid points.
///
/// # Safety
/// `out` must be a valid pointer to a handle slot.
#[no_mangle]
pub unsafe extern "C" fn ql_operator_new_1d(
    kernel: QlProfile,
    radius: f64,
    lower: f64,
    upper: f64,
    nodes: usize,
    out: *mut *mut QlOperator,
) -> QlStatus {
    guard(|| {
        let d = Domain::interval(lower, upper, nodes)?;
        let k = build_kernel(profile(kernel), radius, 1)?;
        let op = assemble_operator(&d, &k)?;
        put(out, Box::into_raw(Box::new(QlOperator(op))), "out")
    })
}

/// Builds the operator on a rectangle; arrays hold two entries each.
///
/// # Safety
/// `lower`, `upper` and `nodes` must point to two elements; `out` to a handle
/// slot.
#[no_mangle]
pub unsafe extern "C" fn ql_operator_new_2d(
    kernel: QlProfile,
    radius: f64,
    lower: *const f64,
    upper: *const f64,
    nodes: *const usize,
    out: *mut *mut QlOperator,
) -> QlStatus {
    guard(|| {
        let lo = slice(lower, 2, "lower")?;
        let hi = slice(upper, 2, "upper")?;
        if nodes.is_null() {
            return Err(null("nodes"));
        }
        let n = std::slice::from_raw_parts(nodes, 2);
        let d = Domain::new(lo, hi, n)?;
        let k = build_kernel(profile(kernel), radius, 2)?;
        let op = assemble_operator(&d, &k)?;
        put(out, Box::into_raw(Box::new(QlOperator(op))), "out")
    })
}

/// Number of grid nodes, or zero for a null handle.
///
/// # Safety
/// `op` must be null or a live operator handle.
#[no_mangle]
pub unsafe extern "C" fn ql_operator_len(op: *const QlOperator) -> usize {
    op.as_ref().map_or(0, |o| o.0.len())
}

/// Writes `J*u_ext - u` (exterior data one) into `out`.
///
/// # Safety
/// `u` and `out` must hold `len` elements; `len` must equal the node count.
#[no_mangle]
pub unsafe extern "C" fn ql_operator_apply(
    op: *const QlOperator,
    u: *const f64,
    len: usize,
    out: *mut f64,
) -> QlStatus {
    guard(|| {
        let op = &deref(op, "op")?.0;
        if len != op.len() {
            return Err(Fail(QlStatus::InvalidArgument, format!("length {len} does not match {} nodes", op.len())));
        }
        let u = slice(u, len, "u")?;
        let out = slice_mut(out, len, "out")?;
        op.apply_into(u, out);
        Ok(())
    })
}

/// # Safety
/// `op` must be null or a handle from `ql_operator_new_*`, freed once.
#[no_mangle]
pub unsafe extern "C" fn ql_operator_free(op: *mut QlOperator) {
    if !op.is_null() {
        drop(Box::from_raw(op));
    }
}

/// Integrates from `(u0, v0)`. `controls` may be null for defaults.
///
/// # Safety
/// `u0` and `v0` must hold `len` elements; other pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn ql_integrate(
    op: *const QlOperator,
    params: *const QlParams,
    u0: *const f64,
    v0: *const f64,
    len: usize,
    controls_in: *const QlControls,
    out: *mut *mut QlRun,
) -> QlStatus {
    guard(|| {
        let op = &deref(op, "op")?.0;
        let p = to_params(deref(params, "params")?);
        let c = controls_in.as_ref().map_or_else(IntegratorControls::default, controls);
        let (traj, report) = integrate(slice(u0, len, "u0")?, slice(v0, len, "v0")?, &p, op, &c)?;
        put(out, Box::into_raw(Box::new(QlRun { traj, report })), "out")
    })
}

/// Nonzero if the run quenched.
///
/// # Safety
/// `run` must be null or a live run handle.
#[no_mangle]
pub unsafe extern "C" fn ql_run_quenched(run: *const QlRun) -> c_int {
    run.as_ref().map_or(0, |r| (r.report.verdict == Verdict::Quench) as c_int)
}

/// Quenching time estimate and bracket.
///
/// # Safety
/// `run` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ql_run_quench_time(run: *const QlRun, out: *mut QlQuenchTime) -> QlStatus {
    guard(|| {
        let r = deref(run, "run")?;
        let q = r.report.quench_time.ok_or_else(|| Fail(QlStatus::Indeterminate, "run did not quench".into()))?;
        let (lower, upper) = q.bracket();
        put(out, QlQuenchTime { estimate: q.estimate(), lower, upper }, "out")
    })
}

/// Terminal minimum of a component.
///
/// # Safety
/// `run` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ql_run_terminal_min(run: *const QlRun, c: QlComponent, out: *mut f64) -> QlStatus {
    guard(|| {
        let r = deref(run, "run")?;
        put(out, r.report.terminal_min(component(c)), "out")
    })
}

/// Number of recorded samples, or zero for a null handle.
///
/// # Safety
/// `run` must be null or a live run handle.
#[no_mangle]
pub unsafe extern "C" fn ql_run_samples(run: *const QlRun) -> usize {
    run.as_ref().map_or(0, |r| r.traj.len())
}

/// Copies sample times and the min-track of `c` into buffers of `len`
/// entries; either buffer may be null.
///
/// # Safety
/// Non-null buffers must hold `len` elements.
#[no_mangle]
pub unsafe extern "C" fn ql_run_min_track(
    run: *const QlRun,
    c: QlComponent,
    times: *mut f64,
    minima: *mut f64,
    len: usize,
) -> QlStatus {
    guard(|| {
        let r = deref(run, "run")?;
        let n = r.traj.len();
        if len < n {
            return Err(Fail(QlStatus::BufferTooSmall, format!("need {n} entries, got {len}")));
        }
        if !times.is_null() {
            slice_mut(times, n, "times")?.copy_from_slice(&r.traj.times());
        }
        if !minima.is_null() {
            slice_mut(minima, n, "minima")?.copy_from_slice(&r.traj.min_track(component(c)));
        }
        Ok(())
    })
}

/// Classifies a quenching run; `delta_class` must exceed the quench floor.
///
/// # Safety
/// `run` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ql_run_classify(run: *const QlRun, delta_class: f64, out: *mut QlSimultaneity) -> QlStatus {
    guard(|| {
        let r = deref(run, "run")?;
        let v = classify_simultaneity(&r.report, delta_class)?;
        let k = match v.kind {
            Simultaneity::Simultaneous => QlSimultaneity::Simultaneous,
            Simultaneity::OnlyU => QlSimultaneity::OnlyU,
            Simultaneity::OnlyV => QlSimultaneity::OnlyV,
            Simultaneity::Indeterminate => QlSimultaneity::Indeterminate,
        };
        put(out, k, "out")
    })
}

/// Fits the quenching rate of `c`. A window with `lo >= hi` (for instance
/// two zeros) selects the default window.
///
/// # Safety
/// `run` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ql_run_fit_rate(
    run: *const QlRun,
    c: QlComponent,
    model: QlRateModel,
    window_lo: f64,
    window_hi: f64,
    out: *mut QlRateFit,
) -> QlStatus {
    guard(|| {
        let r = deref(run, "run")?;
        let q = r.report.quench_time.ok_or_else(|| Fail(QlStatus::Indeterminate, "run did not quench".into()))?;
        let model = match model {
            QlRateModel::PowerLaw => RateModel::PowerLaw,
            QlRateModel::LogCorrected => RateModel::LogCorrected,
        };
        let window = (window_lo < window_hi).then_some((window_lo, window_hi));
        let opts = FitOptions { window, ..Default::default() };
        let f = fit_rate(&r.traj, component(c), GapRange::from(&q), model, &opts)?;
        put(
            out,
            QlRateFit {
                exponent: f.exponent,
                log_exponent: f.log_exponent,
                r2: f.r2,
                gap: f.gap,
                samples: f.samples_used,
            },
            "out",
        )
    })
}

/// Quench report as a NUL-terminated JSON string; release with
/// [`ql_string_free`].
///
/// # Safety
/// `run` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ql_run_report_json(run: *const QlRun, out: *mut *mut c_char) -> QlStatus {
    guard(|| {
        let r = deref(run, "run")?;
        let s = serde_json::to_string(&r.report).map_err(|e| Fail(QlStatus::Io, e.to_string()))?;
        let c = CString::new(s).map_err(|e| Fail(QlStatus::Io, e.to_string()))?;
        put(out, c.into_raw(), "out")
    })
}

/// # Safety
/// `s` must be null or a string returned by this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn ql_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// # Safety
/// `run` must be null or a handle from `ql_integrate`, freed once.
#[no_mangle]
pub unsafe extern "C" fn ql_run_free(run: *mut QlRun) {
    if !run.is_null() {
        drop(Box::from_raw(run));
    }
}

/// Newton solve for a stationary solution from the guess `(w, z)`. A handle
/// is returned even without convergence; check [`ql_stationary_converged`].
///
/// # Safety
/// `guess_w` and `guess_z` must hold `len` elements.
#[no_mangle]
pub unsafe extern "C" fn ql_stationary_solve(
    op: *const QlOperator,
    params: *const QlParams,
    guess_w: *const f64,
    guess_z: *const f64,
    len: usize,
    out: *mut *mut QlStationary,
) -> QlStatus {
    guard(|| {
        let op = &deref(op, "op")?.0;
        let p = to_params(deref(params, "params")?);
        let r = solve_stationary(&p, op, slice(guess_w, len, "guess_w")?, slice(guess_z, len, "guess_z")?)?;
        put(out, Box::into_raw(Box::new(QlStationary(r))), "out")
    })
}

/// Integrates from data one. Sets `*quenched` and, when a stationary state
/// is reached, returns it in `out` (null otherwise).
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn ql_stationary_probe(
    op: *const QlOperator,
    params: *const QlParams,
    quenched: *mut c_int,
    out: *mut *mut QlStationary,
) -> QlStatus {
    guard(|| {
        let op = &deref(op, "op")?.0;
        let p = to_params(deref(params, "params")?);
        if quenched.is_null() || out.is_null() {
            return Err(null("output"));
        }
        let c = quenchlab::stationary::probe_controls();
        match dichotomy_probe(&p, op, &c, &ProbeOptions::default())? {
            Probe::Quench(_) => {
                quenched.write(1);
                out.write(ptr::null_mut());
            }
            Probe::StationaryReached(r) => {
                quenched.write(0);
                out.write(Box::into_raw(Box::new(QlStationary(r))));
            }
        }
        Ok(())
    })
}

/// Nonzero if the solve converged within the a priori bounds.
///
/// # Safety
/// `st` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ql_stationary_converged(st: *const QlStationary) -> c_int {
    st.as_ref().map_or(0, |s| s.0.converged as c_int)
}

/// Max-norm residual, NaN for a null handle.
///
/// # Safety
/// `st` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ql_stationary_residual(st: *const QlStationary) -> f64 {
    st.as_ref().map_or(f64::NAN, |s| s.0.residual_norm)
}

/// Copies the solution into buffers of `len` entries.
///
/// # Safety
/// `w` and `z` must hold `len` elements.
#[no_mangle]
pub unsafe extern "C" fn ql_stationary_copy(st: *const QlStationary, w: *mut f64, z: *mut f64, len: usize) -> QlStatus {
    guard(|| {
        let s = &deref(st, "st")?.0;
        let n = s.w.len();
        if len < n {
            return Err(Fail(QlStatus::BufferTooSmall, format!("need {n} entries, got {len}")));
        }
        slice_mut(w, n, "w")?.copy_from_slice(&s.w);
        slice_mut(z, n, "z")?.copy_from_slice(&s.z);
        Ok(())
    })
}

/// # Safety
/// `st` must be null or a handle from this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn ql_stationary_free(st: *mut QlStationary) {
    if !st.is_null() {
        drop(Box::from_raw(st));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::ffi::CStr;

    #[test]
    fn version_is_crate_version() {
        let v = unsafe { CStr::from_ptr(ql_version()) };
        assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
    }

    #[test]
    fn resolution_error_sets_message() {
        let mut op = ptr::null_mut();
        let s = unsafe { ql_operator_new_1d(QlProfile::Tent, 0.01, 0.0, 1.0, 11, &mut op) };
        assert_eq!(s, QlStatus::InvalidArgument);
        assert!(op.is_null());
        let msg = unsafe { CStr::from_ptr(ql_last_error_message()) }.to_str().unwrap();
        assert!(msg.contains("resolution"), "{msg}");
    }

    #[test]
    fn null_handles_are_reported() {
        let mut out = 0.0;
        assert_eq!(unsafe { ql_run_terminal_min(ptr::null(), QlComponent::U, &mut out) }, QlStatus::NullPointer);
        assert_eq!(unsafe { ql_operator_len(ptr::null()) }, 0);
        unsafe { ql_run_free(ptr::null_mut()) };
    }
}
