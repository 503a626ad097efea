//! C interface to `sqjcm`.
//!
//! Objects are opaque handles created by `*_new`/`*_build` functions and
//! released with the matching `*_free`. Every fallible call returns an
//! [`SqjcmStatus`]; on failure [`sqjcm_last_error`] describes the cause for
//! the calling thread. Output arrays are caller-allocated.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use sqjcm::dynamics::{evolve, ground_prob, ground_prob_detuned, ground_prob_jcm, TimeSeries};
use sqjcm::fock::TruncationSpec;
use sqjcm::states::{build_series, AmplitudeSeries, ModelParams};
use sqjcm::Error;

/// Result of a call. Nonzero values match the command-line exit codes where
/// both exist.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SqjcmStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullArgument = 1,
    /// An argument was outside the domain of the operation.
    Domain = 2,
    /// A series failed to converge.
    Convergence = 3,
    /// The truncated photon-number space was too small.
    Truncation = 4,
    /// A caller-provided buffer was too short.
    BufferTooSmall = 6,
    /// An unexpected internal failure.
    Internal = 7,
}

/// Model parameters: displacement `α = a e^{iθ}`, squeezing `ζ = r e^{iφ}`,
/// initial amplitude `β = b e^{iχ}`, coupling `λ` and detuning `Δ`.
pub struct SqjcmParams(ModelParams);

/// Expansion coefficients of the initial field with tail bookkeeping.
pub struct SqjcmSeries(AmplitudeSeries);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).expect("no interior nul");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> SqjcmStatus {
    match err {
        Error::Convergence { .. } => SqjcmStatus::Convergence,
        Error::Truncation { .. } => SqjcmStatus::Truncation,
        Error::Domain(_) | Error::Config(_) => SqjcmStatus::Domain,
        _ => SqjcmStatus::Internal,
    }
}

/// Runs `f`, converting errors and panics to status codes.
fn guard(f: impl FnOnce() -> Result<(), (SqjcmStatus, String)>) -> SqjcmStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            SqjcmStatus::Ok
        }
        Ok(Err((status, message))) => {
            set_error(message);
            status
        }
        Err(_) => {
            set_error("internal panic".to_owned());
            SqjcmStatus::Internal
        }
    }
}

trait IntoFfi<T> {
    fn ffi(self) -> Result<T, (SqjcmStatus, String)>;
}

impl<T> IntoFfi<T> for sqjcm::Result<T> {
    fn ffi(self) -> Result<T, (SqjcmStatus, String)> {
        self.map_err(|e| (status_of(&e), e.to_string()))
    }
}

fn null(name: &str) -> (SqjcmStatus, String) {
    (SqjcmStatus::NullArgument, format!("{name} is null"))
}

unsafe fn deref<'a, T>(p: *const T, name: &str) -> Result<&'a T, (SqjcmStatus, String)> {
    p.as_ref().ok_or_else(|| null(name))
}

unsafe fn input<'a>(p: *const f64, len: usize, name: &str) -> Result<&'a [f64], (SqjcmStatus, String)> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(name));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn output<'a>(p: *mut f64, len: usize, name: &str) -> Result<&'a mut [f64], (SqjcmStatus, String)> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null(name));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

fn copy_values(series: &TimeSeries, out: &mut [f64]) -> Result<(), (SqjcmStatus, String)> {
    if out.len() < series.values.len() {
        return Err((
            SqjcmStatus::BufferTooSmall,
            format!("output holds {} values, {} needed", out.len(), series.values.len()),
        ));
    }
    out[..series.values.len()].copy_from_slice(&series.values);
    Ok(())
}

/// Message describing the most recent failure on this thread, or null. The
/// pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn sqjcm_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static nul-terminated string.
#[no_mangle]
pub extern "C" fn sqjcm_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Validates parameters and stores a new handle in `*out`. Phases are
/// reduced to `[0, 2π)`.
///
/// # Safety
/// `out` must be null or valid for writing one pointer.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn sqjcm_params_new(
    a: f64,
    theta: f64,
    r: f64,
    phi: f64,
    b: f64,
    chi: f64,
    lambda: f64,
    delta: f64,
    out: *mut *mut SqjcmParams,
) -> SqjcmStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let p = ModelParams::new(a, theta, r, phi, b, chi, lambda, delta).ffi()?;
        *out = Box::into_raw(Box::new(SqjcmParams(p)));
        Ok(())
    })
}

/// Releases a parameter handle. Null is ignored.
///
/// # Safety
/// `params` must be null or a handle from [`sqjcm_params_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sqjcm_params_free(params: *mut SqjcmParams) {
    if !params.is_null() {
        drop(Box::from_raw(params));
    }
}

/// Whether `φ = 2θ = 2χ` holds (mod 2π); 0 for a null handle.
///
/// # Safety
/// `params` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sqjcm_params_is_phase_aligned(params: *const SqjcmParams) -> bool {
    params.as_ref().is_some_and(|p| p.0.is_phase_aligned())
}

/// Builds the coefficient series with `1 − Σ|b_n|² < tail_target` and stores
/// a new handle in `*out`.
///
/// # Safety
/// `params` must be a live handle and `out` valid for writing one pointer.
#[no_mangle]
pub unsafe extern "C" fn sqjcm_series_build(
    params: *const SqjcmParams,
    tail_target: f64,
    out: *mut *mut SqjcmSeries,
) -> SqjcmStatus {
    guard(|| {
        let p = deref(params, "params")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let s = build_series(&p.0, tail_target).ffi()?;
        *out = Box::into_raw(Box::new(SqjcmSeries(s)));
        Ok(())
    })
}

/// Releases a series handle. Null is ignored.
///
/// # Safety
/// `series` must be null or a handle from [`sqjcm_series_build`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sqjcm_series_free(series: *mut SqjcmSeries) {
    if !series.is_null() {
        drop(Box::from_raw(series));
    }
}

/// Number of stored coefficients, `n_max + 1`; 0 for a null handle.
///
/// # Safety
/// `series` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sqjcm_series_len(series: *const SqjcmSeries) -> usize {
    series.as_ref().map_or(0, |s| s.0.coefficients.len())
}

/// Estimated probability beyond the stored coefficients; NaN for a null
/// handle.
///
/// # Safety
/// `series` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sqjcm_series_tail_mass(series: *const SqjcmSeries) -> f64 {
    series.as_ref().map_or(f64::NAN, |s| s.0.tail_mass)
}

/// Copies real and imaginary parts of `b_n` into `re` and `im`, each of
/// length `len ≥ sqjcm_series_len(series)`.
///
/// # Safety
/// `re` and `im` must be valid for writing `len` values.
#[no_mangle]
pub unsafe extern "C" fn sqjcm_series_coefficients(
    series: *const SqjcmSeries,
    re: *mut f64,
    im: *mut f64,
    len: usize,
) -> SqjcmStatus {
    guard(|| {
        let s = &deref(series, "series")?.0;
        let n = s.coefficients.len();
        if len < n {
            return Err((SqjcmStatus::BufferTooSmall, format!("buffers hold {len} values, {n} needed")));
        }
        let re = output(re, len, "re")?;
        let im = output(im, len, "im")?;
        for (i, c) in s.coefficients.iter().enumerate() {
            re[i] = c.re;
            im[i] = c.im;
        }
        Ok(())
    })
}

/// Ground-state probability at each of the `len` strictly increasing times
/// `lambda_t` (units of `λt`), written to `out`. Uses the detuning stored in
/// `params`.
///
/// # Safety
/// `times` and `out` must be valid for `len` values.
#[no_mangle]
pub unsafe extern "C" fn sqjcm_ground_prob(
    params: *const SqjcmParams,
    series: *const SqjcmSeries,
    times: *const f64,
    len: usize,
    out: *mut f64,
) -> SqjcmStatus {
    guard(|| {
        let p = deref(params, "params")?.0;
        let s = &deref(series, "series")?.0;
        let grid = input(times, len, "times")?;
        let out = output(out, len, "out")?;
        let curve = if p.delta() == 0.0 {
            ground_prob(s, p.lambda(), grid, p)
        } else {
            ground_prob_detuned(s, p.lambda(), p.delta(), grid, p)
        }
        .ffi()?;
        copy_values(&curve, out)
    })
}

/// Ground-state probability for an unsqueezed coherent field of amplitude `b`.
///
/// # Safety
/// `times` and `out` must be valid for `len` values.
#[no_mangle]
pub unsafe extern "C" fn sqjcm_ground_prob_jcm(b: f64, times: *const f64, len: usize, out: *mut f64) -> SqjcmStatus {
    guard(|| {
        let grid = input(times, len, "times")?;
        let out = output(out, len, "out")?;
        copy_values(&ground_prob_jcm(b, 1.0, grid).ffi()?, out)
    })
}

/// Ground-state probability by direct integration in a photon-number space of
/// dimension `retained`, escalating up to 2048 when truncation is detected.
///
/// # Safety
/// `times` and `out` must be valid for `len` values.
#[no_mangle]
pub unsafe extern "C" fn sqjcm_evolve(
    params: *const SqjcmParams,
    retained: usize,
    times: *const f64,
    len: usize,
    out: *mut f64,
) -> SqjcmStatus {
    guard(|| {
        let p = deref(params, "params")?.0;
        let grid = input(times, len, "times")?;
        let out = output(out, len, "out")?;
        let spec = TruncationSpec::with_retained(retained).ffi()?;
        copy_values(&evolve(&p, spec, grid).ffi()?, out)
    })
}
