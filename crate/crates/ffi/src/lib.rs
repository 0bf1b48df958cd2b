//! C ABI for `delayq`.
//!
//! Models and moment tables are opaque heap handles created by `*_new` /
//! `*_from_json` and released by the matching `*_free`. Every fallible call
//! returns a `DelayqStatus`; on failure the message is kept per thread and
//! can be read with `delayq_last_error_message`. Outputs are written through
//! caller-provided pointers only on success.
//!
//! The header `include/delayq.h` is generated by cbindgen at build time.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use delayq::expansion::{expansion_coeffs, ExpansionOptions};
use delayq::sim::estimate_joint_moment;
use delayq::workload::workload_limits;
use delayq::{BoundTable, Error, ModelSpec, MomentTable, MultiIndex, SolverOptions, TransientSolver};

/// Status codes returned by every fallible function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DelayqStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidParameter = 3,
    Config = 4,
    Dimension = 5,
    Unsupported = 6,
    NonExponentialDelay = 7,
    Scope = 8,
    Numerical = 9,
    BufferTooSmall = 10,
    Io = 11,
    Panic = 99,
}

/// Opaque model handle.
pub struct DelayqModel {
    inner: ModelSpec,
}

/// Opaque memoized moment table.
pub struct DelayqMoments {
    inner: MomentTable,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("no interior nul");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> DelayqStatus {
    match e {
        Error::InvalidParameter(_) | Error::Order { .. } | Error::Range(_) => DelayqStatus::InvalidParameter,
        Error::Config(_) | Error::Json(_) => DelayqStatus::Config,
        Error::Dimension(_) | Error::GridMismatch(_) => DelayqStatus::Dimension,
        Error::UnsupportedFamily(_) | Error::HazardClass => DelayqStatus::Unsupported,
        Error::NonExponentialDelay(_) => DelayqStatus::NonExponentialDelay,
        Error::Scope(_) => DelayqStatus::Scope,
        Error::Pole(_)
        | Error::Radius { .. }
        | Error::MultipleRoot(_)
        | Error::Nondegeneracy(_)
        | Error::Divergence(_) => DelayqStatus::Numerical,
        Error::Io(_) => DelayqStatus::Io,
    }
}

fn fail(status: DelayqStatus, msg: impl Into<String>) -> DelayqStatus {
    set_error(msg.into());
    status
}

/// Runs `f`, turning errors and panics into status codes.
fn guard<F>(f: F) -> DelayqStatus
where
    F: FnOnce() -> Result<(), DelayqStatus>,
{
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            DelayqStatus::Ok
        }
        Ok(Err(s)) => s,
        Err(_) => fail(DelayqStatus::Panic, "internal panic"),
    }
}

fn lift<T>(r: delayq::Result<T>) -> Result<T, DelayqStatus> {
    r.map_err(|e| fail(status_of(&e), e.to_string()))
}

unsafe fn deref<'a, T>(p: *const T) -> Result<&'a T, DelayqStatus> {
    p.as_ref().ok_or_else(|| fail(DelayqStatus::NullPointer, "null handle"))
}

unsafe fn deref_mut<'a, T>(p: *mut T) -> Result<&'a mut T, DelayqStatus> {
    p.as_mut().ok_or_else(|| fail(DelayqStatus::NullPointer, "null pointer"))
}

unsafe fn index(n: *const u32, k: usize) -> Result<MultiIndex, DelayqStatus> {
    if n.is_null() {
        return Err(fail(DelayqStatus::NullPointer, "null index"));
    }
    let entries = std::slice::from_raw_parts(n, k).to_vec();
    lift(MultiIndex::new(entries))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn delayq_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or NULL. Valid until the next call.
#[no_mangle]
pub extern "C" fn delayq_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Parses a model from NUL-terminated JSON.
///
/// # Safety
/// `json` must be a valid C string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn delayq_model_from_json(json: *const c_char, out: *mut *mut DelayqModel) -> DelayqStatus {
    guard(|| {
        if json.is_null() {
            return Err(fail(DelayqStatus::NullPointer, "null json"));
        }
        let out = deref_mut(out)?;
        let text = CStr::from_ptr(json)
            .to_str()
            .map_err(|_| fail(DelayqStatus::InvalidUtf8, "json is not UTF-8"))?;
        let model = lift(ModelSpec::from_json_str(text))?;
        *out = Box::into_raw(Box::new(DelayqModel { inner: model }));
        Ok(())
    })
}

/// Releases a model. NULL is ignored.
///
/// # Safety
/// `model` must come from `delayq_model_from_json` and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn delayq_model_free(model: *mut DelayqModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of customer types `k`.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn delayq_model_k(model: *const DelayqModel, out: *mut usize) -> DelayqStatus {
    guard(|| {
        let m = deref(model)?;
        *deref_mut(out)? = m.inner.k();
        Ok(())
    })
}

/// Creates a moment table; needs exponential delays with one common rate.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn delayq_moments_new(model: *const DelayqModel, out: *mut *mut DelayqMoments) -> DelayqStatus {
    guard(|| {
        let m = deref(model)?;
        let out = deref_mut(out)?;
        let table = lift(MomentTable::new(&m.inner))?;
        *out = Box::into_raw(Box::new(DelayqMoments { inner: table }));
        Ok(())
    })
}

/// Releases a moment table. NULL is ignored.
///
/// # Safety
/// `table` must come from `delayq_moments_new` and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn delayq_moments_free(table: *mut DelayqMoments) {
    if !table.is_null() {
        drop(Box::from_raw(table));
    }
}

/// Stationary moment `chi_n` for the index `n[0..k]`.
///
/// # Safety
/// `n` must point to `k` entries; other pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn delayq_chi(table: *mut DelayqMoments, n: *const u32, k: usize, out: *mut f64) -> DelayqStatus {
    guard(|| {
        let t = deref_mut(table)?;
        let idx = index(n, k)?;
        let v = lift(t.inner.chi(&idx))?;
        *deref_mut(out)? = v;
        Ok(())
    })
}

/// Uniform bound `R_n >= sup_t M~_n(t)`.
///
/// # Safety
/// `n` must point to `k` entries; other pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn delayq_bound_r(model: *const DelayqModel, n: *const u32, k: usize, out: *mut f64) -> DelayqStatus {
    guard(|| {
        let m = deref(model)?;
        let idx = index(n, k)?;
        let v = lift(BoundTable::new(&m.inner).bound_r(&idx))?;
        *deref_mut(out)? = v;
        Ok(())
    })
}

/// `M~_n` on the grid `0, h, ..., t_max` (Richardson-extrapolated).
///
/// Writes the number of grid points to `len`. When `values` is NULL or
/// `capacity` is too small nothing else is written and `BufferTooSmall` is
/// returned, so callers can size the buffer with a first call.
///
/// # Safety
/// `values` must hold `capacity` doubles when not NULL; other pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn delayq_transient(
    model: *const DelayqModel,
    n: *const u32,
    k: usize,
    h: f64,
    t_max: f64,
    values: *mut f64,
    capacity: usize,
    len: *mut usize,
) -> DelayqStatus {
    guard(|| {
        let m = deref(model)?;
        let idx = index(n, k)?;
        let len = deref_mut(len)?;
        let mut solver = lift(TransientSolver::new(&m.inner, SolverOptions::new(h, t_max)))?;
        let g = lift(solver.solve_renewal(&idx))?;
        *len = g.len();
        if values.is_null() || capacity < g.len() {
            return Err(fail(
                DelayqStatus::BufferTooSmall,
                format!("need {} values", g.len()),
            ));
        }
        std::slice::from_raw_parts_mut(values, g.len()).copy_from_slice(g.values());
        Ok(())
    })
}

/// Limiting workload mean and its covariance with the queue size.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn delayq_workload_limits(model: *const DelayqModel, mean: *mut f64, cov: *mut f64) -> DelayqStatus {
    guard(|| {
        let m = deref(model)?;
        let w = lift(workload_limits(&m.inner))?;
        *deref_mut(mean)? = w.mean_limit;
        *deref_mut(cov)? = w.cov_limit;
        Ok(())
    })
}

/// Limit `chi` and coefficient `A*` of `e^{-mu t}` in the expansion of the
/// first moment of type `type_index` (zero-based), all roots kept.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn delayq_expansion_first(
    model: *const DelayqModel,
    type_index: usize,
    chi: *mut f64,
    a_star: *mut f64,
) -> DelayqStatus {
    guard(|| {
        let m = deref(model)?;
        let opts = ExpansionOptions {
            keep_all_roots: true,
            literal_sign: false,
        };
        let r = lift(expansion_coeffs(type_index, &m.inner, opts))?;
        *deref_mut(chi)? = r.chi;
        *deref_mut(a_star)? = r.a_star;
        Ok(())
    })
}

/// Monte Carlo estimate of `M~_n(t)` with its standard error.
///
/// # Safety
/// `n` must point to `k` entries; other pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn delayq_simulate_moment(
    model: *const DelayqModel,
    n: *const u32,
    k: usize,
    t: f64,
    reps: usize,
    seed: u64,
    estimate: *mut f64,
    std_error: *mut f64,
) -> DelayqStatus {
    guard(|| {
        let m = deref(model)?;
        let idx = index(n, k)?;
        let e = lift(estimate_joint_moment(&m.inner, &idx, t, reps, seed))?;
        *deref_mut(estimate)? = e.estimate;
        *deref_mut(std_error)? = e.std_error;
        Ok(())
    })
}
