//! C ABI over the selfsim library.
//!
//! Handles are opaque and owned by the caller once returned; release them with the
//! matching `_free` function. Every fallible call returns a [`SelfsimStatus`] and
//! stores a message retrievable with [`selfsim_last_error`].

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use selfsim::error::Error;
use selfsim::functionals::{gaussian_density, HeatKernelSpec};
use selfsim::geometry::{FlowParams, ProfileCurve};
use selfsim::ode::{default_r0, integrate_profile, series_start, EquationKind, IntegratorConfig};
use selfsim::shooting::{companion, critical_angle, expander_slope, find_shrinkers, shrinker_profile};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SelfsimStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Numerical = 3,
    NotFound = 4,
    Panic = 5,
}

/// Dimensions p, q of the symmetry group SO(p)×SO(q).
pub struct SelfsimParams {
    inner: FlowParams,
}

/// A profile curve (r(s), u(s)) in the quarter plane.
pub struct SelfsimProfile {
    inner: ProfileCurve,
}

/// One sample of a profile curve.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SelfsimPoint {
    pub s: f64,
    pub r: f64,
    pub u: f64,
    pub theta: f64,
    pub k: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> SelfsimStatus {
    match e {
        Error::InvalidParams(_) | Error::AxisPoint { .. } | Error::InvalidBracket(_) | Error::OutOfRange(_) | Error::Parse(_) => {
            SelfsimStatus::InvalidArgument
        }
        _ => SelfsimStatus::Numerical,
    }
}

/// Runs `f`, converting errors and panics into status codes.
fn guard<F>(f: F) -> SelfsimStatus
where
    F: FnOnce() -> Result<(), (SelfsimStatus, String)>,
{
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            SelfsimStatus::Ok
        }
        Ok(Err((status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            SelfsimStatus::Panic
        }
    }
}

fn lib<T>(r: selfsim::error::Result<T>) -> Result<T, (SelfsimStatus, String)> {
    r.map_err(|e| (status_of(&e), e.to_string()))
}

fn null(what: &str) -> (SelfsimStatus, String) {
    (SelfsimStatus::NullPointer, format!("{what} is null"))
}

unsafe fn params_ref<'a>(p: *const SelfsimParams) -> Result<&'a FlowParams, (SelfsimStatus, String)> {
    p.as_ref().map(|p| &p.inner).ok_or_else(|| null("params"))
}

fn emit_profile(curve: ProfileCurve, out: *mut *mut SelfsimProfile) {
    // SAFETY: callers check `out` before any work is done
    unsafe { *out = Box::into_raw(Box::new(SelfsimProfile { inner: curve })) };
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn selfsim_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread; empty after a success.
/// Valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn selfsim_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Creates a parameter handle for SO(p)×SO(q).
///
/// # Safety
/// `out` must be a valid pointer to writable storage.
#[no_mangle]
pub unsafe extern "C" fn selfsim_params_new(p: usize, q: usize, out: *mut *mut SelfsimParams) -> SelfsimStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let inner = lib(FlowParams::new(p, q))?;
        *out = Box::into_raw(Box::new(SelfsimParams { inner }));
        Ok(())
    })
}

/// Releases a parameter handle; null is ignored.
///
/// # Safety
/// `params` must come from [`selfsim_params_new`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn selfsim_params_free(params: *mut SelfsimParams) {
    if !params.is_null() {
        drop(Box::from_raw(params));
    }
}

/// Slope λ_s of the minimal cone u = λ_s r.
///
/// # Safety
/// `params` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn selfsim_cone_slope(params: *const SelfsimParams, out: *mut f64) -> SelfsimStatus {
    guard(|| {
        let p = params_ref(params)?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = lib(p.lambda_s())?;
        Ok(())
    })
}

/// Asymptotic slope of the expander from (0, a) and its error bar.
///
/// # Safety
/// `params` must be a live handle; `slope` and `error_bar` writable (the latter may be null).
#[no_mangle]
pub unsafe extern "C" fn selfsim_expander_slope(
    params: *const SelfsimParams,
    a: f64,
    slope: *mut f64,
    error_bar: *mut f64,
) -> SelfsimStatus {
    guard(|| {
        let p = params_ref(params)?;
        let slope = slope.as_mut().ok_or_else(|| null("slope"))?;
        let rec = lib(expander_slope(a, p, &IntegratorConfig::default()))?;
        *slope = rec.lambda_a;
        if let Some(e) = error_bar.as_mut() {
            *e = rec.error_bar;
        }
        Ok(())
    })
}

/// Smallest aperture (radians) of rotationally symmetric expanders in R^n.
///
/// # Safety
/// `alpha` must be writable.
#[no_mangle]
pub unsafe extern "C" fn selfsim_critical_angle(n: usize, alpha: *mut f64) -> SelfsimStatus {
    guard(|| {
        let alpha = alpha.as_mut().ok_or_else(|| null("alpha"))?;
        let p = lib(FlowParams::axial(n))?;
        *alpha = lib(critical_angle(&p, &IntegratorConfig::default()))?.alpha_crit;
        Ok(())
    })
}

/// Axis height a_k of the k-th shrinker (k ≥ 1).
///
/// # Safety
/// `params` must be a live handle and `a` writable.
#[no_mangle]
pub unsafe extern "C" fn selfsim_shrinker_height(params: *const SelfsimParams, k: usize, a: *mut f64) -> SelfsimStatus {
    guard(|| {
        let p = params_ref(params)?;
        let a = a.as_mut().ok_or_else(|| null("a"))?;
        *a = shrinker_record(p, k)?.a_k;
        Ok(())
    })
}

fn shrinker_record(p: &FlowParams, k: usize) -> Result<selfsim::shooting::ShrinkerRecord, (SelfsimStatus, String)> {
    if k == 0 {
        return Err((SelfsimStatus::InvalidArgument, "k must be at least 1".into()));
    }
    lib(find_shrinkers(k, p, &IntegratorConfig::default()))?
        .into_iter()
        .find(|r| r.k == k)
        .ok_or_else(|| (SelfsimStatus::NotFound, format!("shrinker {k} not found")))
}

/// Profile of the k-th shrinker, truncated at its trusted radius.
///
/// # Safety
/// `params` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn selfsim_shrinker_profile(
    params: *const SelfsimParams,
    k: usize,
    out: *mut *mut SelfsimProfile,
) -> SelfsimStatus {
    guard(|| {
        let p = params_ref(params)?;
        if out.is_null() {
            return Err(null("out"));
        }
        let rec = shrinker_record(p, k)?;
        let curve = lib(shrinker_profile(rec.a_k, p, &IntegratorConfig::default(), false))?;
        emit_profile(lib(curve.truncated_r(rec.r_trust))?, out);
        Ok(())
    })
}

/// Profile of the expander from (0, a).
///
/// # Safety
/// `params` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn selfsim_expander_profile(
    params: *const SelfsimParams,
    a: f64,
    out: *mut *mut SelfsimProfile,
) -> SelfsimStatus {
    guard(|| {
        let p = params_ref(params)?;
        if out.is_null() {
            return Err(null("out"));
        }
        let start = lib(series_start(EquationKind::Expander, a, p, default_r0(a)))?;
        emit_profile(lib(integrate_profile(EquationKind::Expander, start, p, &IntegratorConfig::default()))?, out);
        Ok(())
    })
}

/// Minimal profile from (0, 1).
///
/// # Safety
/// `params` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn selfsim_companion_profile(params: *const SelfsimParams, out: *mut *mut SelfsimProfile) -> SelfsimStatus {
    guard(|| {
        let p = params_ref(params)?;
        if out.is_null() {
            return Err(null("out"));
        }
        emit_profile(lib(companion(p, &IntegratorConfig::default()))?.curve, out);
        Ok(())
    })
}

/// Profile of the round sphere of the given radius.
///
/// # Safety
/// `params` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn selfsim_sphere_profile(
    params: *const SelfsimParams,
    radius: f64,
    samples: usize,
    out: *mut *mut SelfsimProfile,
) -> SelfsimStatus {
    guard(|| {
        let p = params_ref(params)?;
        if out.is_null() {
            return Err(null("out"));
        }
        emit_profile(lib(ProfileCurve::sphere(radius, samples, *p))?, out);
        Ok(())
    })
}

/// Number of samples of a profile; 0 for null.
///
/// # Safety
/// `profile` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn selfsim_profile_len(profile: *const SelfsimProfile) -> usize {
    profile.as_ref().map_or(0, |p| p.inner.len())
}

/// Copies sample `index` into `out`.
///
/// # Safety
/// `profile` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn selfsim_profile_point(
    profile: *const SelfsimProfile,
    index: usize,
    out: *mut SelfsimPoint,
) -> SelfsimStatus {
    guard(|| {
        let c = &profile.as_ref().ok_or_else(|| null("profile"))?.inner;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let pt = c.points.get(index).ok_or_else(|| {
            (SelfsimStatus::InvalidArgument, format!("index {index} out of range 0..{}", c.points.len()))
        })?;
        *out = SelfsimPoint { s: pt.s, r: pt.r, u: pt.u, theta: pt.theta, k: pt.k };
        Ok(())
    })
}

/// Gaussian density of the profile's hypersurface at time t for the kernel
/// centred at (x0_r, x0_u) and time t0 > t.
///
/// # Safety
/// `profile` must be a live handle; `phi` writable; `tail_bound` writable or null.
#[no_mangle]
pub unsafe extern "C" fn selfsim_gaussian_density(
    profile: *const SelfsimProfile,
    x0_r: f64,
    x0_u: f64,
    t0: f64,
    t: f64,
    phi: *mut f64,
    tail_bound: *mut f64,
) -> SelfsimStatus {
    guard(|| {
        let c = &profile.as_ref().ok_or_else(|| null("profile"))?.inner;
        let phi = phi.as_mut().ok_or_else(|| null("phi"))?;
        let spec = HeatKernelSpec { x0: (x0_r, x0_u), t0, n: c.params.n };
        let d = lib(gaussian_density(c, &c.params, &spec, t))?;
        *phi = d.phi;
        if let Some(tb) = tail_bound.as_mut() {
            *tb = d.tail_bound;
        }
        Ok(())
    })
}

/// Releases a profile handle; null is ignored.
///
/// # Safety
/// `profile` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn selfsim_profile_free(profile: *mut SelfsimProfile) {
    if !profile.is_null() {
        drop(Box::from_raw(profile));
    }
}
