//! C ABI over `qfim-core`.
//!
//! Ansätze and samplers are opaque heap handles created by `*_new` and
//! released by the matching `*_free`. Every fallible call returns a
//! [`QfimStatus`]; on failure a message is available from
//! [`qfim_last_error_message`] on the same thread. Matrices are `m×m`,
//! row-major, in caller-owned buffers of at least `m*m` doubles.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use qfim_core::ansatz::{build_ansatz, ParamFamily, ProductExponentialAnsatz};
use qfim_core::fisher::qgt;
use qfim_core::linalg::RealMatrix;
use qfim_core::montecarlo::{accumulate, CfimSampler, SamplerOptions};
use qfim_core::tails::{max_norm_tail_bound, frobenius_tail_bound, eigenvalue_sandwich_bound};
use qfim_core::QfimError;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QfimStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    DegenerateFamily = 4,
    Numerical = 5,
    BufferTooSmall = 6,
    Panic = 7,
}

/// Opaque reference ansatz.
pub struct QfimAnsatz {
    inner: ProductExponentialAnsatz,
}

/// Opaque CFIM sampler at a fixed parameter point.
pub struct QfimSampler {
    inner: CfimSampler,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(err: &QfimError) -> QfimStatus {
    match err {
        QfimError::DimensionMismatch { .. } | QfimError::NotSquare { .. } => QfimStatus::DimensionMismatch,
        QfimError::DegenerateFamily { .. } => QfimStatus::DegenerateFamily,
        QfimError::NotHermitian { .. }
        | QfimError::NotPsd { .. }
        | QfimError::NonFinite(_)
        | QfimError::ZeroDenominator(_)
        | QfimError::KernelLeak { .. } => QfimStatus::Numerical,
        _ => QfimStatus::InvalidArgument,
    }
}

fn fail(status: QfimStatus, msg: impl Into<String>) -> QfimStatus {
    set_error(msg.into());
    status
}

fn guard<F: FnOnce() -> Result<(), QfimStatus>>(f: F) -> QfimStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error(String::new());
            QfimStatus::Ok
        }
        Ok(Err(s)) => s,
        Err(_) => fail(QfimStatus::Panic, "internal panic"),
    }
}

fn lift<T>(r: qfim_core::Result<T>) -> Result<T, QfimStatus> {
    r.map_err(|e| fail(status_of(&e), e.to_string()))
}

unsafe fn slice_in<'a>(ptr: *const f64, len: usize) -> Result<&'a [f64], QfimStatus> {
    if len == 0 {
        return Ok(&[]);
    }
    if ptr.is_null() {
        return Err(fail(QfimStatus::NullPointer, "null input buffer"));
    }
    Ok(std::slice::from_raw_parts(ptr, len))
}

unsafe fn write_matrix(m: &RealMatrix, out: *mut f64, out_len: usize) -> Result<(), QfimStatus> {
    let need = m.nrows() * m.ncols();
    if out.is_null() {
        return Err(fail(QfimStatus::NullPointer, "null output buffer"));
    }
    if out_len < need {
        return Err(fail(QfimStatus::BufferTooSmall, format!("output buffer needs {need} doubles, got {out_len}")));
    }
    let buf = std::slice::from_raw_parts_mut(out, need);
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            buf[i * m.ncols() + j] = m[(i, j)];
        }
    }
    Ok(())
}

unsafe fn write_scalar<T>(out: *mut T, v: T) -> Result<(), QfimStatus> {
    if out.is_null() {
        return Err(fail(QfimStatus::NullPointer, "null output pointer"));
    }
    *out = v;
    Ok(())
}

unsafe fn handle<'a, T>(ptr: *const T) -> Result<&'a T, QfimStatus> {
    ptr.as_ref().ok_or_else(|| fail(QfimStatus::NullPointer, "null handle"))
}

/// Message for the last failed call on this thread, or an empty string.
/// Valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn qfim_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn qfim_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Build the seeded product-of-exponentials ansatz with `n` amplitudes and `m` parameters.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn qfim_ansatz_new(n: usize, m: usize, seed: u64, out: *mut *mut QfimAnsatz) -> QfimStatus {
    guard(|| {
        if out.is_null() {
            return Err(fail(QfimStatus::NullPointer, "null output pointer"));
        }
        let inner = lift(build_ansatz(n, m, seed))?;
        *out = Box::into_raw(Box::new(QfimAnsatz { inner }));
        Ok(())
    })
}

/// # Safety
/// `ansatz` must come from [`qfim_ansatz_new`] and not be freed twice. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn qfim_ansatz_free(ansatz: *mut QfimAnsatz) {
    if !ansatz.is_null() {
        drop(Box::from_raw(ansatz));
    }
}

/// Hilbert-space dimension, or 0 for a null handle.
///
/// # Safety
/// `ansatz` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn qfim_ansatz_dim(ansatz: *const QfimAnsatz) -> usize {
    ansatz.as_ref().map_or(0, |a| a.inner.dim())
}

/// Number of parameters, or 0 for a null handle.
///
/// # Safety
/// `ansatz` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn qfim_ansatz_num_params(ansatz: *const QfimAnsatz) -> usize {
    ansatz.as_ref().map_or(0, |a| a.inner.num_params())
}

/// Exact QFIM at `theta` into `out` (row-major `m×m`).
///
/// # Safety
/// `theta` must point to `theta_len` doubles and `out` to `out_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn qfim_ansatz_qfim(
    ansatz: *const QfimAnsatz,
    theta: *const f64,
    theta_len: usize,
    out: *mut f64,
    out_len: usize,
) -> QfimStatus {
    guard(|| {
        let a = handle(ansatz)?;
        let theta = slice_in(theta, theta_len)?;
        let swj = lift(a.inner.evaluate(theta))?;
        write_matrix(&qgt(&swj).real_part, out, out_len)
    })
}

/// Sampler for Haar-random-basis CFIMs at `theta`. Sample `i` is a pure
/// function of `(ansatz, theta, seed, i)`.
///
/// # Safety
/// `theta` must point to `theta_len` doubles and `out` to storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn qfim_sampler_new(
    ansatz: *const QfimAnsatz,
    theta: *const f64,
    theta_len: usize,
    seed: u64,
    prob_floor: f64,
    out: *mut *mut QfimSampler,
) -> QfimStatus {
    guard(|| {
        let a = handle(ansatz)?;
        if out.is_null() {
            return Err(fail(QfimStatus::NullPointer, "null output pointer"));
        }
        if !(prob_floor.is_finite() && prob_floor >= 0.0) {
            return Err(fail(QfimStatus::InvalidArgument, format!("prob_floor must be finite and >= 0, got {prob_floor}")));
        }
        let theta = slice_in(theta, theta_len)?;
        let options = SamplerOptions { prob_floor, ..SamplerOptions::default() };
        let inner = lift(CfimSampler::from_family(&a.inner, theta, seed, options))?;
        lift(inner.ensure_nondegenerate())?;
        *out = Box::into_raw(Box::new(QfimSampler { inner }));
        Ok(())
    })
}

/// # Safety
/// `sampler` must come from [`qfim_sampler_new`] and not be freed twice. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn qfim_sampler_free(sampler: *mut QfimSampler) {
    if !sampler.is_null() {
        drop(Box::from_raw(sampler));
    }
}

/// CFIM of sample `index` into `out`.
///
/// # Safety
/// `sampler` must be a live handle and `out` must point to `out_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn qfim_sampler_sample(sampler: *const QfimSampler, index: u64, out: *mut f64, out_len: usize) -> QfimStatus {
    guard(|| {
        let s = handle(sampler)?;
        let index = usize::try_from(index).map_err(|_| fail(QfimStatus::InvalidArgument, "index out of range"))?;
        write_matrix(&s.inner.sample(index), out, out_len)
    })
}

/// Monte Carlo QFIM estimate `2·mean(F)` over samples `0..k`, its entrywise
/// empirical variance of `F`, and the relative Frobenius error of the mean
/// against `Q/2`. `out_variance` and `out_rel_frob` may be null.
///
/// # Safety
/// `sampler` must be a live handle; non-null buffers must hold `out_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn qfim_sampler_estimate(
    sampler: *const QfimSampler,
    k: usize,
    out_qfim: *mut f64,
    out_variance: *mut f64,
    out_len: usize,
    out_rel_frob: *mut f64,
) -> QfimStatus {
    guard(|| {
        let s = handle(sampler)?;
        if k < 2 {
            return Err(fail(QfimStatus::InvalidArgument, format!("need at least 2 samples, got {k}")));
        }
        let acc = accumulate(&s.inner, k, false, None);
        write_matrix(&(&acc.mean * 2.0), out_qfim, out_len)?;
        if !out_variance.is_null() {
            let var = acc.variance().expect("k >= 2");
            write_matrix(&var, out_variance, out_len)?;
        }
        if !out_rel_frob.is_null() {
            let half = s.inner.expected_cfim();
            *out_rel_frob = (&acc.mean - half).norm() / half.norm();
        }
        Ok(())
    })
}

/// `min(1, 2m² exp(−(N−1)t²/120))`.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn qfim_bound_max_norm(t: f64, n: usize, m: usize, out: *mut f64) -> QfimStatus {
    guard(|| {
        let v = lift(max_norm_tail_bound(t, n, m))?;
        write_scalar(out, v)
    })
}

/// Frobenius tail bound: probability `exp(−(N−1)t²/120)` of a relative error
/// above `t + 16√(m/(N−1))`, the latter written to `out_threshold`.
///
/// # Safety
/// Both output pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn qfim_bound_frobenius(t: f64, n: usize, m: usize, out_threshold: *mut f64, out_probability: *mut f64) -> QfimStatus {
    guard(|| {
        let b = lift(frobenius_tail_bound(t, n, m))?;
        write_scalar(out_threshold, b.threshold)?;
        write_scalar(out_probability, b.probability)
    })
}

/// Eigenvalue sandwich bound. `out_precondition_met` receives 1 when
/// `N ≥ 10⁵m/ε²`, else 0; the probability is reported either way.
///
/// # Safety
/// All output pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn qfim_bound_eigenvalue(
    epsilon: f64,
    n: usize,
    m: usize,
    out_precondition_met: *mut i32,
    out_exponent: *mut f64,
    out_success_probability: *mut f64,
) -> QfimStatus {
    guard(|| {
        let b = lift(eigenvalue_sandwich_bound(epsilon, n, m))?;
        write_scalar(out_precondition_met, i32::from(b.precondition_met))?;
        write_scalar(out_exponent, b.failure_exponent)?;
        write_scalar(out_success_probability, b.success_probability)
    })
}
