//! C ABI for the fracmc estimators.
//!
//! The interface follows the usual opaque-handle pattern: a handle is
//! created from scalar parameters, used through functions taking a
//! field callback (`double f(double x, void *user)`), and destroyed
//! explicitly. All functions return an error code; results come back
//! through out-pointers. The matching header lives at
//! `include/fracmc.h`.

use fracmc::estimator::{caputo_time, gl_left, gl_right, AxisBounds, EstimatorConfig};
use fracmc::qmc::{StreamKind, UniformStream};
use fracmc::sampler::FracOrder;
use std::os::raw::{c_double, c_int, c_void};

/// Error codes returned by every `fracmc_*` function.
pub const FRACMC_OK: c_int = 0;
pub const FRACMC_ERR_NULL_POINTER: c_int = 1;
pub const FRACMC_ERR_INVALID_ORDER: c_int = 2;
pub const FRACMC_ERR_INVALID_ARGUMENT: c_int = 3;
pub const FRACMC_ERR_ESTIMATE_FAILED: c_int = 4;

/// Stream kinds accepted by `fracmc_estimator_new`.
pub const FRACMC_STREAM_PSEUDO: c_int = 0;
pub const FRACMC_STREAM_SOBOL: c_int = 1;
pub const FRACMC_STREAM_HALTON: c_int = 2;

/// Scalar field callback: evaluates f at x with an opaque user pointer.
pub type FracmcFieldFn = Option<unsafe extern "C" fn(x: c_double, user: *mut c_void) -> c_double>;

/// Opaque estimator handle: fractional order, sample sizes, and the
/// (stateful) uniform stream.
pub struct FracmcEstimator {
    cfg: EstimatorConfig,
    stream: UniformStream,
}

fn stream_kind(kind: c_int, seed: u64) -> Option<StreamKind> {
    match kind {
        FRACMC_STREAM_PSEUDO => Some(StreamKind::PseudoRandom { seed }),
        FRACMC_STREAM_SOBOL => Some(UniformStream::sobol().kind()),
        FRACMC_STREAM_HALTON => Some(UniformStream::halton(3).kind()),
        _ => None,
    }
}

/// Creates an estimator handle.
///
/// `alpha` must be a non-integer order in (0,1) ∪ (1,2); `n` and `k`
/// must be positive. On success `*out` owns the handle; free it with
/// `fracmc_estimator_free`.
///
/// # Safety
/// `out` must be a valid pointer to writable memory.
#[no_mangle]
pub unsafe extern "C" fn fracmc_estimator_new(
    alpha: c_double,
    n: usize,
    k: usize,
    stream: c_int,
    seed: u64,
    out: *mut *mut FracmcEstimator,
) -> c_int {
    if out.is_null() {
        return FRACMC_ERR_NULL_POINTER;
    }
    let order = match FracOrder::new(alpha) {
        Ok(o) => o,
        Err(_) => return FRACMC_ERR_INVALID_ORDER,
    };
    let cfg = match EstimatorConfig::new(n, k, order) {
        Ok(c) => c,
        Err(_) => return FRACMC_ERR_INVALID_ARGUMENT,
    };
    let kind = match stream_kind(stream, seed) {
        Some(k) => k,
        None => return FRACMC_ERR_INVALID_ARGUMENT,
    };
    let handle = Box::new(FracmcEstimator {
        cfg,
        stream: UniformStream::new(kind),
    });
    *out = Box::into_raw(handle);
    FRACMC_OK
}

/// Destroys a handle created by `fracmc_estimator_new`. Null is a no-op.
///
/// # Safety
/// `handle` must be null or a pointer previously returned by
/// `fracmc_estimator_new` that has not been freed.
#[no_mangle]
pub unsafe extern "C" fn fracmc_estimator_free(handle: *mut FracmcEstimator) {
    if !handle.is_null() {
        drop(Box::from_raw(handle));
    }
}

unsafe fn call_field(
    f: FracmcFieldFn,
    user: *mut c_void,
) -> Option<impl FnMut(f64) -> f64> {
    let f = f?;
    Some(move |x: f64| f(x, user))
}

/// Left-sided Grünwald-Letnikov estimate of order alpha over [lb, x].
///
/// # Safety
/// `handle` and `out` must be valid; `f` must be a valid callback for
/// the lifetime of the call.
#[no_mangle]
pub unsafe extern "C" fn fracmc_gl_left(
    handle: *mut FracmcEstimator,
    f: FracmcFieldFn,
    user: *mut c_void,
    x: c_double,
    lb: c_double,
    out: *mut c_double,
) -> c_int {
    if handle.is_null() || out.is_null() {
        return FRACMC_ERR_NULL_POINTER;
    }
    let field = match call_field(f, user) {
        Some(f) => f,
        None => return FRACMC_ERR_NULL_POINTER,
    };
    let h = &mut *handle;
    match gl_left(field, x, lb, &h.cfg, &mut h.stream) {
        Ok(v) => {
            *out = v;
            FRACMC_OK
        }
        Err(_) => FRACMC_ERR_ESTIMATE_FAILED,
    }
}

/// Right-sided Grünwald-Letnikov estimate of order alpha over [x, ub].
///
/// # Safety
/// Same contract as `fracmc_gl_left`.
#[no_mangle]
pub unsafe extern "C" fn fracmc_gl_right(
    handle: *mut FracmcEstimator,
    f: FracmcFieldFn,
    user: *mut c_void,
    x: c_double,
    ub: c_double,
    out: *mut c_double,
) -> c_int {
    if handle.is_null() || out.is_null() {
        return FRACMC_ERR_NULL_POINTER;
    }
    let field = match call_field(f, user) {
        Some(f) => f,
        None => return FRACMC_ERR_NULL_POINTER,
    };
    let h = &mut *handle;
    match gl_right(field, x, ub, &h.cfg, &mut h.stream) {
        Ok(v) => {
            *out = v;
            FRACMC_OK
        }
        Err(_) => FRACMC_ERR_ESTIMATE_FAILED,
    }
}

/// Riesz-type derivative (coefficient 1/(2 cos(πa/2)) times the sum of
/// both one-sided derivatives) for orders in (1,2).
///
/// # Safety
/// Same contract as `fracmc_gl_left`; `lb < x < ub` required.
#[no_mangle]
pub unsafe extern "C" fn fracmc_riesz(
    handle: *mut FracmcEstimator,
    f: FracmcFieldFn,
    user: *mut c_void,
    x: c_double,
    lb: c_double,
    ub: c_double,
    out: *mut c_double,
) -> c_int {
    if handle.is_null() || out.is_null() {
        return FRACMC_ERR_NULL_POINTER;
    }
    if !(lb < x && x < ub) {
        return FRACMC_ERR_INVALID_ARGUMENT;
    }
    let field = match call_field(f, user) {
        Some(f) => f,
        None => return FRACMC_ERR_NULL_POINTER,
    };
    let h = &mut *handle;
    let mut field = field;
    let bounds = AxisBounds::new(lb, ub);
    let coeff = match fracmc::estimator::riesz_coefficient(h.cfg.order) {
        Ok(c) => c,
        Err(_) => return FRACMC_ERR_INVALID_ORDER,
    };
    let l = gl_left(&mut field, x, bounds.lb, &h.cfg, &mut h.stream);
    let r = gl_right(&mut field, x, bounds.ub, &h.cfg, &mut h.stream);
    match (l, r) {
        (Ok(l), Ok(r)) => {
            *out = coeff * (l + r);
            FRACMC_OK
        }
        _ => FRACMC_ERR_ESTIMATE_FAILED,
    }
}

/// Caputo time derivative of order alpha in (0,1) at t > 0, treating
/// `u0` as the initial value u(0).
///
/// # Safety
/// Same contract as `fracmc_gl_left`.
#[no_mangle]
pub unsafe extern "C" fn fracmc_caputo(
    handle: *mut FracmcEstimator,
    u: FracmcFieldFn,
    user: *mut c_void,
    t: c_double,
    u0: c_double,
    out: *mut c_double,
) -> c_int {
    if handle.is_null() || out.is_null() {
        return FRACMC_ERR_NULL_POINTER;
    }
    let field = match call_field(u, user) {
        Some(f) => f,
        None => return FRACMC_ERR_NULL_POINTER,
    };
    let h = &mut *handle;
    match caputo_time(field, t, u0, &h.cfg, &mut h.stream) {
        Ok(v) => {
            *out = v;
            FRACMC_OK
        }
        Err(_) => FRACMC_ERR_ESTIMATE_FAILED,
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn fracmc_version() -> *const std::os::raw::c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const _
}
