//! C ABI over `concmark`. Every function returns a [`CmStatus`]; results go
//! through out-pointers. On failure the message is kept per thread and can
//! be copied out with [`cm_last_error`].

// NaN-rejecting guards are written as negated comparisons
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use concmark::bounds::{
    beckner_envelope, covariance_envelope, entropic_envelope, super_exponential_envelope,
    ConcentrationEnvelope,
};
use concmark::chain::{stationary_measure, BirthDeathChain, Observable};
use concmark::constants::{entropic_lower_bound, miclo_delta, spectral_gap_exact};
use concmark::oracles::exact_tail_discrete;
use concmark::scenario::{run_scenario, Scenario, Stage, Status};
use concmark::Error;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CmStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Domain = 3,
    Truncation = 4,
    Hypothesis = 5,
    Divergent = 6,
    Simulation = 7,
    Io = 8,
    Parse = 9,
    Panic = 10,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CmStage {
    Certify = 0,
    Envelope = 1,
    Tails = 2,
    Scenario = 3,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CmOutcome {
    Pass = 0,
    CertificationFailed = 1,
    DominanceFailed = 2,
}

/// Opaque birth-death chain.
pub struct CmChain(BirthDeathChain);

/// Opaque concentration envelope.
pub struct CmEnvelope(ConcentrationEnvelope);

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn status_of(e: &Error) -> CmStatus {
    match e {
        Error::InvalidParameter { .. } | Error::RestrictionViolated { .. } => {
            CmStatus::InvalidArgument
        }
        Error::Domain { .. } => CmStatus::Domain,
        Error::NotPositiveRecurrent { .. }
        | Error::UnknownTail { .. }
        | Error::TruncationTooSmall { .. } => CmStatus::Truncation,
        Error::Hypothesis { .. } | Error::CertificationFailed { .. } => CmStatus::Hypothesis,
        Error::DivergentPartition { .. } => CmStatus::Divergent,
        Error::EventCapExceeded { .. }
        | Error::StateSpaceTooLarge { .. }
        | Error::InsufficientSamples { .. } => CmStatus::Simulation,
        Error::Io(_) => CmStatus::Io,
        Error::Scenario(_) | Error::Json(_) | Error::Csv(_) => CmStatus::Parse,
    }
}

struct Failure(CmStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(CmStatus::NullPointer, format!("`{what}` is null"))
}

fn guard(body: impl FnOnce() -> Result<(), Failure>) -> CmStatus {
    let result = catch_unwind(AssertUnwindSafe(body)).unwrap_or_else(|payload| {
        let msg = payload
            .downcast_ref::<&str>()
            .map(|s| s.to_string())
            .or_else(|| payload.downcast_ref::<String>().cloned())
            .unwrap_or_else(|| "unknown panic".into());
        Err(Failure(CmStatus::Panic, format!("panic: {msg}")))
    });
    match result {
        Ok(()) => {
            LAST_ERROR.with(|e| e.borrow_mut().clear());
            CmStatus::Ok
        }
        Err(Failure(status, msg)) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = msg);
            status
        }
    }
}

unsafe fn write<T>(out: *mut T, value: T, what: &str) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null(what));
    }
    unsafe { out.write(value) };
    Ok(())
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    unsafe { p.as_ref() }.ok_or_else(|| null(what))
}

unsafe fn path_arg<'a>(p: *const c_char, what: &str) -> Result<&'a Path, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    let s = unsafe { CStr::from_ptr(p) }
        .to_str()
        .map_err(|_| Failure(CmStatus::InvalidArgument, format!("`{what}` is not UTF-8")))?;
    Ok(Path::new(s))
}

/// Copies the last error message of this thread into `buf` (NUL-terminated,
/// truncated to `len - 1` bytes) and returns its full length in bytes.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn cm_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            unsafe {
                ptr::copy_nonoverlapping(msg.as_ptr().cast::<c_char>(), buf, n);
                *buf.add(n) = 0;
            }
        }
        msg.len()
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn cm_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

unsafe fn new_chain(
    out: *mut *mut CmChain,
    chain: concmark::Result<BirthDeathChain>,
) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("out"));
    }
    let handle = Box::into_raw(Box::new(CmChain(chain?)));
    unsafe { out.write(handle) };
    Ok(())
}

/// Birth rate `p (x+1)^n`, death rate `x^n`.
///
/// # Safety
/// `out` must be null or writable.
#[no_mangle]
pub unsafe extern "C" fn cm_chain_geometric(p: f64, n: u32, out: *mut *mut CmChain) -> CmStatus {
    guard(|| unsafe { new_chain(out, BirthDeathChain::geometric_n(p, n)) })
}

/// Birth rate `rate`, death rate `x`; Poisson stationary law.
///
/// # Safety
/// `out` must be null or writable.
#[no_mangle]
pub unsafe extern "C" fn cm_chain_mm_infinity(rate: f64, out: *mut *mut CmChain) -> CmStatus {
    guard(|| unsafe { new_chain(out, BirthDeathChain::mm_infinity(rate)) })
}

/// Finite chain on `{0..len-1}` from rate tables.
///
/// # Safety
/// `birth` and `death` must point to `len` readable doubles.
#[no_mangle]
pub unsafe extern "C" fn cm_chain_tabulated(
    birth: *const f64,
    death: *const f64,
    len: usize,
    out: *mut *mut CmChain,
) -> CmStatus {
    guard(|| {
        if birth.is_null() || death.is_null() {
            return Err(null("rates"));
        }
        let (b, d) = unsafe {
            (
                std::slice::from_raw_parts(birth, len).to_vec(),
                std::slice::from_raw_parts(death, len).to_vec(),
            )
        };
        unsafe { new_chain(out, BirthDeathChain::tabulated(b, d)) }
    })
}

/// Default truncation level of the chain.
///
/// # Safety
/// `chain` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn cm_chain_truncation(chain: *const CmChain, out: *mut usize) -> CmStatus {
    guard(|| unsafe { write(out, deref(chain, "chain")?.0.truncation_hint, "out") })
}

/// # Safety
/// `chain` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cm_chain_free(chain: *mut CmChain) {
    if !chain.is_null() {
        drop(unsafe { Box::from_raw(chain) });
    }
}

/// Spectral gap of the reflected truncation `{0..n}`.
///
/// # Safety
/// `chain` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cm_spectral_gap(
    chain: *const CmChain,
    n: usize,
    out: *mut f64,
) -> CmStatus {
    guard(|| unsafe {
        let gap = spectral_gap_exact(&deref(chain, "chain")?.0, n)?;
        write(out, gap.value, "out")
    })
}

/// Hardy constant `delta` and the gap bracket `[1/(4 delta), 1/delta]`.
///
/// # Safety
/// `chain` must be a live handle and the out-pointers writable.
#[no_mangle]
pub unsafe extern "C" fn cm_miclo(
    chain: *const CmChain,
    n: usize,
    delta: *mut f64,
    gap_lower: *mut f64,
    gap_upper: *mut f64,
) -> CmStatus {
    guard(|| unsafe {
        let m = miclo_delta(&deref(chain, "chain")?.0, n)?;
        write(delta, m.delta, "delta")?;
        write(gap_lower, m.gap_lower, "gap_lower")?;
        write(gap_upper, m.gap_upper, "gap_upper")
    })
}

/// Entropic constant from monotone rates; 0 when the criterion does not apply.
///
/// # Safety
/// `chain` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cm_entropic_lower_bound(
    chain: *const CmChain,
    n: usize,
    out: *mut f64,
) -> CmStatus {
    guard(|| unsafe {
        let b = entropic_lower_bound(&deref(chain, "chain")?.0, n)?;
        write(out, b.alpha, "out")
    })
}

/// `P(X - E X > r)` for the stationary law truncated at `n`, with the mass
/// past `n` bounded by `widening`.
///
/// # Safety
/// `chain` must be a live handle and the out-pointers writable.
#[no_mangle]
pub unsafe extern "C" fn cm_exact_tail(
    chain: *const CmChain,
    n: usize,
    r: f64,
    value: *mut f64,
    widening: *mut f64,
) -> CmStatus {
    guard(|| unsafe {
        let mu = stationary_measure(&deref(chain, "chain")?.0, n)?;
        let tail = exact_tail_discrete(&mu, &Observable::Identity, r)?;
        write(value, tail.value, "value")?;
        write(widening, tail.widening, "widening")
    })
}

unsafe fn new_envelope(
    out: *mut *mut CmEnvelope,
    env: concmark::Result<ConcentrationEnvelope>,
) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("out"));
    }
    let handle = Box::into_raw(Box::new(CmEnvelope(env?)));
    unsafe { out.write(handle) };
    Ok(())
}

/// # Safety
/// `out` must be null or writable.
#[no_mangle]
pub unsafe extern "C" fn cm_envelope_entropic(
    rho0: f64,
    a: f64,
    b: f64,
    out: *mut *mut CmEnvelope,
) -> CmStatus {
    guard(|| unsafe { new_envelope(out, entropic_envelope(rho0, a, b)) })
}

/// # Safety
/// `out` must be null or writable.
#[no_mangle]
pub unsafe extern "C" fn cm_envelope_beckner(
    alpha_p: f64,
    p: f64,
    a: f64,
    b: f64,
    out: *mut *mut CmEnvelope,
) -> CmStatus {
    guard(|| unsafe { new_envelope(out, beckner_envelope(alpha_p, p, a, b)) })
}

/// # Safety
/// `out` must be null or writable.
#[no_mangle]
pub unsafe extern "C" fn cm_envelope_covariance(
    rho0: f64,
    a: f64,
    b: f64,
    out: *mut *mut CmEnvelope,
) -> CmStatus {
    guard(|| unsafe { new_envelope(out, covariance_envelope(rho0, a, b)) })
}

/// # Safety
/// `out` must be null or writable.
#[no_mangle]
pub unsafe extern "C" fn cm_envelope_super_exponential(
    rho0: f64,
    a: f64,
    b: f64,
    out: *mut *mut CmEnvelope,
) -> CmStatus {
    guard(|| unsafe { new_envelope(out, super_exponential_envelope(rho0, a, b)) })
}

/// # Safety
/// `env` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cm_envelope_free(env: *mut CmEnvelope) {
    if !env.is_null() {
        drop(unsafe { Box::from_raw(env) });
    }
}

/// Exponent and bound `exp(-exponent)` at deviation `r >= 0`.
///
/// # Safety
/// `env` must be a live handle and the out-pointers writable.
#[no_mangle]
pub unsafe extern "C" fn cm_envelope_eval(
    env: *const CmEnvelope,
    r: f64,
    exponent: *mut f64,
    bound: *mut f64,
) -> CmStatus {
    guard(|| unsafe {
        let env = &deref(env, "env")?.0;
        if !(r >= 0.0) {
            return Err(Failure(
                CmStatus::InvalidArgument,
                format!("r must be nonnegative, got {r}"),
            ));
        }
        write(exponent, env.exponent(r), "exponent")?;
        write(bound, env.bound(r), "bound")
    })
}

/// End of the Gaussian window; infinity when there is none.
///
/// # Safety
/// `env` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cm_envelope_r_max(env: *const CmEnvelope, out: *mut f64) -> CmStatus {
    guard(|| unsafe {
        let r = deref(env, "env")?.0.r_max.unwrap_or(f64::INFINITY);
        write(out, r, "out")
    })
}

/// Runs a scenario file and writes its artifacts under `out_dir/<name>/`.
///
/// # Safety
/// `path` and `out_dir` must be NUL-terminated strings; `outcome` writable.
#[no_mangle]
pub unsafe extern "C" fn cm_run_scenario(
    path: *const c_char,
    stage: CmStage,
    out_dir: *const c_char,
    outcome: *mut CmOutcome,
) -> CmStatus {
    guard(|| unsafe {
        let scenario = Scenario::from_path(path_arg(path, "path")?)?;
        let stage = match stage {
            CmStage::Certify => Stage::Certify,
            CmStage::Envelope => Stage::Envelope,
            CmStage::Tails => Stage::Tails,
            CmStage::Scenario => Stage::Scenario,
        };
        let report = run_scenario(&scenario, stage, path_arg(out_dir, "out_dir")?)?;
        let result = match report.status {
            Status::Pass => CmOutcome::Pass,
            Status::CertificationFailed => CmOutcome::CertificationFailed,
            Status::DominanceFailed => CmOutcome::DominanceFailed,
        };
        write(outcome, result, "outcome")
    })
}
