//! C-ABI surface over the cone calculus and the conformal Neumann solver.
//!
//! Conventions, uniform across every exported function:
//!
//! - every call returns a [`SigmakStatus`]; out-parameters are written only
//!   on `Ok`,
//! - a non-`Ok` status leaves a human-readable description retrievable via
//!   [`sigmak_last_error_message`] (thread-local, valid until the next
//!   failing call on the same thread),
//! - heap objects handed to the caller (`SigmakReport`, strings) are owned
//!   by the caller and must be released with the matching `_free` function,
//! - panics never unwind across the boundary; they surface as
//!   `SIGMAK_STATUS_PANIC`.
//!
//! Solver input/output crosses the boundary as JSON with the same schema the
//! `sigmak` command-line tool reads and writes, so bindings stay stable
//! against struct evolution on the Rust side.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use sigmak::solver::{solve, Problem, SolveReport};
use sigmak::symfun::{elem_sym_all, in_positive_cone, FunctionalSpec, Spectrum};
use sigmak::Error;

/// Result class of every exported call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SigmakStatus {
    /// The call succeeded and all out-parameters are valid.
    Ok = 0,
    /// Null pointer, malformed JSON, or parameters outside their domain.
    InvalidArgument = 1,
    /// The evaluation point (or a solver iterate) left the admissible cone.
    ConeViolation = 2,
    /// The iteration ran but failed to converge within its budgets.
    NumericalFailure = 3,
    /// An internal invariant broke; the library state is still consistent.
    Panic = 4,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn fail(status: SigmakStatus, message: &str) -> SigmakStatus {
    let sanitized: String = message.chars().map(|c| if c == '\0' { ' ' } else { c }).collect();
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(sanitized).unwrap_or_default();
    });
    status
}

fn fail_with(err: &Error) -> SigmakStatus {
    let status = match err {
        Error::Parameter(_) | Error::Dimension(_) | Error::Io(_) => SigmakStatus::InvalidArgument,
        Error::ConeViolation { .. }
        | Error::InfeasibleIterate { .. }
        | Error::BoundaryConditionViolation { .. } => SigmakStatus::ConeViolation,
        _ => SigmakStatus::NumericalFailure,
    };
    fail(status, &err.to_string())
}

fn guarded(body: impl FnOnce() -> SigmakStatus) -> SigmakStatus {
    catch_unwind(AssertUnwindSafe(body))
        .unwrap_or_else(|_| fail(SigmakStatus::Panic, "internal panic caught at the C boundary"))
}

/// Description of the most recent failure on this thread, empty if none.
/// The pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn sigmak_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

unsafe fn spectrum_from(values: *const f64, n: usize) -> Result<Spectrum, SigmakStatus> {
    if values.is_null() {
        return Err(fail(SigmakStatus::InvalidArgument, "values pointer is null"));
    }
    if n == 0 {
        return Err(fail(SigmakStatus::InvalidArgument, "dimension n is zero"));
    }
    Spectrum::new(std::slice::from_raw_parts(values, n).to_vec()).map_err(|e| fail_with(&e))
}

/// All elementary symmetric functions of `values[0..n]`, written to
/// `out[0..=n]` with `out[0] = 1`.
///
/// # Safety
/// `values` must point to `n` readable doubles and `out` to `n + 1`
/// writable doubles.
#[no_mangle]
pub unsafe extern "C" fn sigmak_elem_sym_all(
    values: *const f64,
    n: usize,
    out: *mut f64,
) -> SigmakStatus {
    guarded(|| {
        if out.is_null() {
            return fail(SigmakStatus::InvalidArgument, "out pointer is null");
        }
        let lam = match spectrum_from(values, n) {
            Ok(lam) => lam,
            Err(status) => return status,
        };
        let sig = elem_sym_all(lam.values());
        std::slice::from_raw_parts_mut(out, n + 1).copy_from_slice(&sig);
        SigmakStatus::Ok
    })
}

/// Worst cone margin of `values[0..n]` for the order-`k` cone: the smallest
/// of the first `k` elementary symmetric functions. The point lies strictly
/// inside the cone exactly when the margin is positive.
///
/// # Safety
/// `values` must point to `n` readable doubles and `out_margin` to one
/// writable double.
#[no_mangle]
pub unsafe extern "C" fn sigmak_cone_margin(
    values: *const f64,
    n: usize,
    k: usize,
    out_margin: *mut f64,
) -> SigmakStatus {
    guarded(|| {
        if out_margin.is_null() {
            return fail(SigmakStatus::InvalidArgument, "out_margin pointer is null");
        }
        let lam = match spectrum_from(values, n) {
            Ok(lam) => lam,
            Err(status) => return status,
        };
        match in_positive_cone(&lam, k) {
            Ok(membership) => {
                *out_margin = membership.worst();
                SigmakStatus::Ok
            }
            Err(e) => fail_with(&e),
        }
    })
}

unsafe fn with_functional(
    n: usize,
    k: usize,
    t: f64,
    values: *const f64,
    body: impl FnOnce(&FunctionalSpec, &Spectrum) -> SigmakStatus,
) -> SigmakStatus {
    let spec = match FunctionalSpec::new(n, k, t) {
        Ok(spec) => spec,
        Err(e) => return fail_with(&e),
    };
    let lam = match spectrum_from(values, n) {
        Ok(lam) => lam,
        Err(status) => return status,
    };
    body(&spec, &lam)
}

/// Value of the deformed cone functional at `values[0..n]`.
///
/// # Safety
/// `values` must point to `n` readable doubles and `out_value` to one
/// writable double.
#[no_mangle]
pub unsafe extern "C" fn sigmak_functional_value(
    n: usize,
    k: usize,
    t: f64,
    values: *const f64,
    out_value: *mut f64,
) -> SigmakStatus {
    guarded(|| {
        if out_value.is_null() {
            return fail(SigmakStatus::InvalidArgument, "out_value pointer is null");
        }
        with_functional(n, k, t, values, |spec, lam| match spec.value(lam) {
            Ok(v) => {
                *out_value = v;
                SigmakStatus::Ok
            }
            Err(e) => fail_with(&e),
        })
    })
}

/// Gradient of the deformed cone functional at `values[0..n]`, written to
/// `out_gradient[0..n]`.
///
/// # Safety
/// `values` must point to `n` readable doubles and `out_gradient` to `n`
/// writable doubles.
#[no_mangle]
pub unsafe extern "C" fn sigmak_functional_gradient(
    n: usize,
    k: usize,
    t: f64,
    values: *const f64,
    out_gradient: *mut f64,
) -> SigmakStatus {
    guarded(|| {
        if out_gradient.is_null() {
            return fail(SigmakStatus::InvalidArgument, "out_gradient pointer is null");
        }
        with_functional(n, k, t, values, |spec, lam| match spec.gradient(lam) {
            Ok(g) => {
                std::slice::from_raw_parts_mut(out_gradient, n).copy_from_slice(&g);
                SigmakStatus::Ok
            }
            Err(e) => fail_with(&e),
        })
    })
}

/// Completed solver run: continuation trace, residuals, margins, and the
/// discrete solution. Opaque; read it through the accessor functions and
/// release it with [`sigmak_report_free`].
pub struct SigmakReport(SolveReport);

/// Runs the continuation solver on a problem document (the JSON schema of
/// the `sigmak solve` command) and hands back an owned report handle.
///
/// # Safety
/// `problem_json` must be a NUL-terminated UTF-8 string and `out_report` a
/// writable pointer slot.
#[no_mangle]
pub unsafe extern "C" fn sigmak_solve_json(
    problem_json: *const c_char,
    out_report: *mut *mut SigmakReport,
) -> SigmakStatus {
    guarded(|| {
        if problem_json.is_null() || out_report.is_null() {
            return fail(SigmakStatus::InvalidArgument, "null pointer argument");
        }
        let text = match CStr::from_ptr(problem_json).to_str() {
            Ok(text) => text,
            Err(_) => return fail(SigmakStatus::InvalidArgument, "problem document is not UTF-8"),
        };
        let problem: Problem = match serde_json::from_str(text) {
            Ok(problem) => problem,
            Err(e) => {
                return fail(SigmakStatus::InvalidArgument, &format!("problem document: {e}"))
            }
        };
        if let Err(e) = problem.validate() {
            return fail_with(&e);
        }
        match solve(&problem) {
            Ok(report) => {
                *out_report = Box::into_raw(Box::new(SigmakReport(report)));
                SigmakStatus::Ok
            }
            Err(e) => fail_with(&e),
        }
    })
}

/// Serializes a report to a JSON string owned by the caller; release it
/// with [`sigmak_string_free`].
///
/// # Safety
/// `report` must be a live handle from [`sigmak_solve_json`] and `out_json`
/// a writable pointer slot.
#[no_mangle]
pub unsafe extern "C" fn sigmak_report_to_json(
    report: *const SigmakReport,
    out_json: *mut *mut c_char,
) -> SigmakStatus {
    guarded(|| {
        if report.is_null() || out_json.is_null() {
            return fail(SigmakStatus::InvalidArgument, "null pointer argument");
        }
        let text = match serde_json::to_string(&(*report).0) {
            Ok(text) => text,
            Err(e) => return fail(SigmakStatus::NumericalFailure, &format!("serialization: {e}")),
        };
        match CString::new(text) {
            Ok(owned) => {
                *out_json = owned.into_raw();
                SigmakStatus::Ok
            }
            Err(_) => fail(SigmakStatus::NumericalFailure, "serialized report contained NUL"),
        }
    })
}

/// Number of grid values in the report's discrete solution, 0 for null.
///
/// # Safety
/// `report` must be null or a live handle from [`sigmak_solve_json`].
#[no_mangle]
pub unsafe extern "C" fn sigmak_report_solution_len(report: *const SigmakReport) -> usize {
    if report.is_null() {
        0
    } else {
        (*report).0.solution.len()
    }
}

/// Copies the discrete solution into `out[0..len]`; `len` must equal
/// [`sigmak_report_solution_len`].
///
/// # Safety
/// `report` must be a live handle and `out` must point to `len` writable
/// doubles.
#[no_mangle]
pub unsafe extern "C" fn sigmak_report_solution_copy(
    report: *const SigmakReport,
    out: *mut f64,
    len: usize,
) -> SigmakStatus {
    guarded(|| {
        if report.is_null() || out.is_null() {
            return fail(SigmakStatus::InvalidArgument, "null pointer argument");
        }
        let solution = &(*report).0.solution;
        if len != solution.len() {
            return fail(
                SigmakStatus::InvalidArgument,
                &format!("buffer holds {len} values, solution has {}", solution.len()),
            );
        }
        std::slice::from_raw_parts_mut(out, len).copy_from_slice(solution);
        SigmakStatus::Ok
    })
}

/// Releases a report handle. Null is a no-op.
///
/// # Safety
/// `report` must be null or an unreleased handle from [`sigmak_solve_json`].
#[no_mangle]
pub unsafe extern "C" fn sigmak_report_free(report: *mut SigmakReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}

/// Releases a string returned by this library. Null is a no-op.
///
/// # Safety
/// `s` must be null or an unreleased string from this library.
#[no_mangle]
pub unsafe extern "C" fn sigmak_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
