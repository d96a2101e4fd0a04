//! C ABI for the vlpc allocator.
//!
//! Scenarios and allocations are opaque heap handles released with their `_free`
//! functions. Every fallible call returns a [`VlpcStatus`]; the message for the most
//! recent failure on the calling thread is available from [`vlpc_last_error`].
#![allow(clippy::neg_cmp_op_on_partial_ord)]


use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use vlpc::allocator::{solve_scheme, AllocError, PowerAllocation, RobustConfig, Scheme};
use vlpc::montecarlo::{rate_cdf, ChannelKind, ErrorKind, ErrorModel};
use vlpc::scenario::Scenario;

/// Opaque scenario handle.
pub struct VlpcScenario(Scenario);

/// Opaque allocation handle.
pub struct VlpcAllocation(PowerAllocation);

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VlpcStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Infeasible = 3,
    SolverFailure = 4,
    ParseError = 5,
    BufferTooSmall = 6,
    Panic = 7,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VlpcScheme {
    Perfect = 0,
    Bernstein = 1,
    Cvar = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VlpcErrorModel {
    Gaussian = 0,
    UniformEllipse = 1,
    TwoPointMixture = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VlpcChannel {
    Los = 0,
    LosDiffuse = 1,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let text = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).unwrap_or_default());
}

fn fail(status: VlpcStatus, msg: impl Into<String>) -> VlpcStatus {
    set_error(msg);
    status
}

fn guard(f: impl FnOnce() -> VlpcStatus) -> VlpcStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(_) => fail(VlpcStatus::Panic, "internal panic"),
    }
}

fn alloc_status(e: &AllocError) -> VlpcStatus {
    match e {
        AllocError::Infeasible { .. } => VlpcStatus::Infeasible,
        AllocError::Solver(_) | AllocError::Fisher(_) | AllocError::NoServingLed => VlpcStatus::SolverFailure,
        AllocError::Scenario(_) | AllocError::Config(_) => VlpcStatus::InvalidArgument,
    }
}

fn scheme_from(v: u32) -> Option<Scheme> {
    match v {
        0 => Some(Scheme::Perfect),
        1 => Some(Scheme::Bernstein),
        2 => Some(Scheme::Cvar),
        _ => None,
    }
}

fn error_kind_from(v: u32) -> Option<ErrorKind> {
    match v {
        0 => Some(ErrorKind::Gaussian),
        1 => Some(ErrorKind::UniformEllipse),
        2 => Some(ErrorKind::TwoPointMixture),
        _ => None,
    }
}

fn channel_from(v: u32) -> Option<ChannelKind> {
    match v {
        0 => Some(ChannelKind::Los),
        1 => Some(ChannelKind::LosDiffuse),
        _ => None,
    }
}

/// Message of the last failed call on this thread; empty when none. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn vlpc_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn vlpc_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Built-in scenario with 3 to 6 LEDs.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle pointer.
#[no_mangle]
pub unsafe extern "C" fn vlpc_scenario_default(num_leds: usize, out: *mut *mut VlpcScenario) -> VlpcStatus {
    guard(|| {
        if out.is_null() {
            return fail(VlpcStatus::NullPointer, "out is null");
        }
        match Scenario::builtin(num_leds) {
            Ok(s) => {
                *out = Box::into_raw(Box::new(VlpcScenario(s)));
                VlpcStatus::Ok
            }
            Err(e) => fail(VlpcStatus::InvalidArgument, e.to_string()),
        }
    })
}

/// Parses a scenario from a NUL-terminated UTF-8 JSON document.
///
/// # Safety
/// `json` must point to a NUL-terminated string and `out` to writable storage.
#[no_mangle]
pub unsafe extern "C" fn vlpc_scenario_from_json(json: *const c_char, out: *mut *mut VlpcScenario) -> VlpcStatus {
    guard(|| {
        if json.is_null() || out.is_null() {
            return fail(VlpcStatus::NullPointer, "json or out is null");
        }
        let Ok(text) = CStr::from_ptr(json).to_str() else {
            return fail(VlpcStatus::ParseError, "scenario is not valid UTF-8");
        };
        match Scenario::from_json_str(text) {
            Ok(s) => {
                *out = Box::into_raw(Box::new(VlpcScenario(s)));
                VlpcStatus::Ok
            }
            Err(e) => fail(VlpcStatus::ParseError, e.to_string()),
        }
    })
}

/// Number of LEDs, or 0 for a null handle.
///
/// # Safety
/// `s` must be null or a live scenario handle.
#[no_mangle]
pub unsafe extern "C" fn vlpc_scenario_num_leds(s: *const VlpcScenario) -> usize {
    s.as_ref().map_or(0, |s| s.0.num_leds())
}

/// # Safety
/// `s` must be null or a handle from this library that has not been freed.
#[no_mangle]
pub unsafe extern "C" fn vlpc_scenario_free(s: *mut VlpcScenario) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

/// Solves the allocation program `scheme` (a [`VlpcScheme`] value) for rate target
/// `rate_bps` and outage probability `p_out` (ignored by the perfect scheme).
///
/// # Safety
/// `s` must be a live scenario handle and `out` valid writable storage.
#[no_mangle]
pub unsafe extern "C" fn vlpc_solve(
    s: *const VlpcScenario,
    scheme: u32,
    rate_bps: f64,
    p_out: f64,
    out: *mut *mut VlpcAllocation,
) -> VlpcStatus {
    guard(|| {
        let (Some(s), false) = (s.as_ref(), out.is_null()) else {
            return fail(VlpcStatus::NullPointer, "scenario or out is null");
        };
        let Some(scheme) = scheme_from(scheme) else {
            return fail(VlpcStatus::InvalidArgument, format!("unknown scheme {scheme}"));
        };
        let cfg = RobustConfig::new(rate_bps, p_out);
        match solve_scheme(&s.0, scheme, &cfg) {
            Ok(a) => {
                *out = Box::into_raw(Box::new(VlpcAllocation(a)));
                VlpcStatus::Ok
            }
            Err(e) => fail(alloc_status(&e), e.to_string()),
        }
    })
}

/// # Safety
/// `a` must be null or a handle from this library that has not been freed.
#[no_mangle]
pub unsafe extern "C" fn vlpc_allocation_free(a: *mut VlpcAllocation) {
    if !a.is_null() {
        drop(Box::from_raw(a));
    }
}

/// Copies the positioning powers (W) into `buf`, which must hold `len` values.
/// `written` receives the LED count even when the buffer is too small.
///
/// # Safety
/// `a` must be a live allocation handle; `buf` must be valid for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn vlpc_allocation_pilot_powers(
    a: *const VlpcAllocation,
    buf: *mut f64,
    len: usize,
    written: *mut usize,
) -> VlpcStatus {
    guard(|| {
        let Some(a) = a.as_ref() else {
            return fail(VlpcStatus::NullPointer, "allocation is null");
        };
        let n = a.0.p_p.len();
        if !written.is_null() {
            *written = n;
        }
        if len < n {
            return fail(VlpcStatus::BufferTooSmall, format!("need {n} entries, got {len}"));
        }
        if buf.is_null() {
            return fail(VlpcStatus::NullPointer, "buf is null");
        }
        ptr::copy_nonoverlapping(a.0.p_p.as_ptr(), buf, n);
        VlpcStatus::Ok
    })
}

/// Communication power on the serving LED, W; NaN for a null handle.
///
/// # Safety
/// `a` must be null or a live allocation handle.
#[no_mangle]
pub unsafe extern "C" fn vlpc_allocation_comm_power(a: *const VlpcAllocation) -> f64 {
    a.as_ref().map_or(f64::NAN, |a| a.0.p_c)
}

/// Tr(J⁻¹) in m²; NaN for a null handle.
///
/// # Safety
/// `a` must be null or a live allocation handle.
#[no_mangle]
pub unsafe extern "C" fn vlpc_allocation_crlb(a: *const VlpcAllocation) -> f64 {
    a.as_ref().map_or(f64::NAN, |a| a.0.crlb_value)
}

/// Index of the serving LED; `SIZE_MAX` for a null handle.
///
/// # Safety
/// `a` must be null or a live allocation handle.
#[no_mangle]
pub unsafe extern "C" fn vlpc_allocation_serving_led(a: *const VlpcAllocation) -> usize {
    a.as_ref().map_or(usize::MAX, |a| a.0.serving)
}

/// Monte Carlo outage probability of `a` over `n` error draws.
///
/// # Safety
/// Handles must be live and `outage` must be valid writable storage.
#[no_mangle]
pub unsafe extern "C" fn vlpc_evaluate_outage(
    s: *const VlpcScenario,
    a: *const VlpcAllocation,
    error_model: u32,
    channel: u32,
    n: usize,
    seed: u64,
    rate_bps: f64,
    outage: *mut f64,
) -> VlpcStatus {
    guard(|| {
        let (Some(s), Some(a), false) = (s.as_ref(), a.as_ref(), outage.is_null()) else {
            return fail(VlpcStatus::NullPointer, "scenario, allocation or outage is null");
        };
        let (Some(kind), Some(channel)) = (error_kind_from(error_model), channel_from(channel)) else {
            return fail(VlpcStatus::InvalidArgument, "unknown error model or channel");
        };
        if n == 0 || !(rate_bps > 0.0) {
            return fail(VlpcStatus::InvalidArgument, "n must be positive and rate_bps > 0");
        }
        if a.0.p_p.len() != s.0.num_leds() {
            return fail(VlpcStatus::InvalidArgument, "allocation does not match the scenario");
        }
        let result = ErrorModel::for_allocation(&s.0, &a.0, kind)
            .and_then(|m| rate_cdf(&s.0, &a.0, &m, n, channel, seed, rate_bps));
        match result {
            Ok(r) => {
                *outage = r.outage;
                VlpcStatus::Ok
            }
            Err(e) => fail(VlpcStatus::SolverFailure, e.to_string()),
        }
    })
}
