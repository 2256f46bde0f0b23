//! C ABI for robust-irt.
//!
//! Objects are opaque handles created by `rirt_*_new`/`rirt_*_read`/`rirt_fit`
//! and released with the matching `*_free`. Every fallible call returns a
//! [`RirtStatus`]; on failure `rirt_last_error` holds a message for the
//! calling thread. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use robust_irt::em::{self, FitOptions, InitSpec};
use robust_irt::io::{self as rio, FitDocument};
use robust_irt::model::{lambda_from_pi, BillMeta, FitResult, Hyperparams, LegislatorMeta, Penalty, Vote, VoteMatrix};
use robust_irt::Error;

pub const RIRT_PENALTY_L0: i32 = 0;
pub const RIRT_PENALTY_L1: i32 = 1;
pub const RIRT_PENALTY_NONE: i32 = 2;

pub const RIRT_VOTE_NAY: i8 = 0;
pub const RIRT_VOTE_YEA: i8 = 1;
pub const RIRT_VOTE_MISSING: i8 = -1;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RirtStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DataError = 3,
    Divergence = 4,
    IoError = 5,
    BufferTooSmall = 6,
    Panic = 7,
}

/// Roll-call matrix handle.
pub struct RirtVotes {
    inner: VoteMatrix,
}

/// Fitted model handle; keeps the ids of the matrix it was fitted to.
pub struct RirtFit {
    fit: FitResult,
    hp: Hyperparams,
    legislators: Vec<String>,
    bills: Vec<String>,
}

/// Fit settings. Start from `rirt_fit_options_default`.
#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct RirtFitOptions {
    /// One of the `RIRT_PENALTY_*` constants.
    pub penalty: i32,
    /// Sparsity level; `INFINITY` disables the shifts.
    pub lambda: f64,
    pub dim: usize,
    pub seed: u64,
    /// Nonzero: start l0 fits from a preliminary fit at `preliminary_lambda`.
    pub preliminary: i32,
    pub preliminary_lambda: f64,
    pub max_iter: usize,
    pub epsilon: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn status_for(err: &Error) -> RirtStatus {
    match err {
        Error::Divergence { .. } => RirtStatus::Divergence,
        Error::Io { .. } => RirtStatus::IoError,
        Error::Contract(_) | Error::Domain(_) => RirtStatus::InvalidArgument,
        _ => RirtStatus::DataError,
    }
}

/// Runs `f`, records any error or panic, and maps it to a status.
fn guard(f: impl FnOnce() -> Result<(), (RirtStatus, String)>) -> RirtStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => RirtStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("internal panic: {msg}"));
            RirtStatus::Panic
        }
    }
}

fn lib_err(err: Error) -> (RirtStatus, String) {
    (status_for(&err), err.to_string())
}

fn null(what: &str) -> (RirtStatus, String) {
    (RirtStatus::NullPointer, format!("{what} is null"))
}

fn invalid(msg: impl Into<String>) -> (RirtStatus, String) {
    (RirtStatus::InvalidArgument, msg.into())
}

unsafe fn path_arg(path: *const c_char) -> Result<PathBuf, (RirtStatus, String)> {
    if path.is_null() {
        return Err(null("path"));
    }
    let s = CStr::from_ptr(path).to_str().map_err(|_| invalid("path is not valid UTF-8"))?;
    Ok(PathBuf::from(s))
}

unsafe fn copy_out(src: &[f64], out: *mut f64, len: usize) -> Result<(), (RirtStatus, String)> {
    if out.is_null() {
        return Err(null("output buffer"));
    }
    if len < src.len() {
        return Err((
            RirtStatus::BufferTooSmall,
            format!("buffer holds {len} values, {} needed", src.len()),
        ));
    }
    ptr::copy_nonoverlapping(src.as_ptr(), out, src.len());
    Ok(())
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn rirt_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

#[no_mangle]
pub extern "C" fn rirt_clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn rirt_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Builds a matrix from `n_legislators × n_bills` row-major `RIRT_VOTE_*` codes.
///
/// # Safety
/// `votes` must point to `n_legislators * n_bills` readable bytes; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rirt_votes_new(
    votes: *const i8,
    n_legislators: usize,
    n_bills: usize,
    out: *mut *mut RirtVotes,
) -> RirtStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let n = n_legislators.checked_mul(n_bills).ok_or_else(|| invalid("matrix size overflows"))?;
        if votes.is_null() && n > 0 {
            return Err(null("votes"));
        }
        let codes = if n == 0 { &[][..] } else { std::slice::from_raw_parts(votes, n) };
        let cells = codes
            .iter()
            .enumerate()
            .map(|(k, &c)| match c {
                RIRT_VOTE_YEA => Ok(Vote::Yea),
                RIRT_VOTE_NAY => Ok(Vote::Nay),
                RIRT_VOTE_MISSING => Ok(Vote::Missing),
                other => Err(invalid(format!("vote code {other} at cell {k}"))),
            })
            .collect::<Result<Vec<_>, _>>()?;
        let legs = (1..=n_legislators).map(|i| LegislatorMeta::new(format!("L{i:04}"))).collect();
        let bills = (1..=n_bills).map(|j| BillMeta::new(format!("B{j:04}"))).collect();
        let inner = VoteMatrix::new(cells, legs, bills).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(RirtVotes { inner }));
        Ok(())
    })
}

/// Reads a roll-call CSV.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rirt_votes_read_csv(path: *const c_char, out: *mut *mut RirtVotes) -> RirtStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let inner = rio::read_rollcall_csv(path_arg(path)?).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(RirtVotes { inner }));
        Ok(())
    })
}

/// # Safety
/// `votes` must be null or a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn rirt_votes_free(votes: *mut RirtVotes) {
    if !votes.is_null() {
        drop(Box::from_raw(votes));
    }
}

/// # Safety
/// `votes` must be a live handle; the out pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn rirt_votes_dims(
    votes: *const RirtVotes,
    n_legislators: *mut usize,
    n_bills: *mut usize,
) -> RirtStatus {
    guard(|| {
        let v = votes.as_ref().ok_or_else(|| null("votes"))?;
        if n_legislators.is_null() || n_bills.is_null() {
            return Err(null("dimension output"));
        }
        (*n_legislators, *n_bills) = v.inner.dims();
        Ok(())
    })
}

/// Defaults: l0, λ = 3, one dimension, seed 0, preliminary fit at λ = 2.
#[no_mangle]
pub extern "C" fn rirt_fit_options_default() -> RirtFitOptions {
    let c = rio::FitConfig::default();
    RirtFitOptions {
        penalty: RIRT_PENALTY_L0,
        lambda: c.lambda,
        dim: c.dim,
        seed: c.seed,
        preliminary: 1,
        preliminary_lambda: c.preliminary_lambda,
        max_iter: c.max_iter,
        epsilon: c.epsilon,
    }
}

/// Fits the model. The result is standardized but not sign-anchored.
///
/// # Safety
/// `votes` and `options` must be valid pointers; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rirt_fit(
    votes: *const RirtVotes,
    options: *const RirtFitOptions,
    out: *mut *mut RirtFit,
) -> RirtStatus {
    guard(|| {
        let v = votes.as_ref().ok_or_else(|| null("votes"))?;
        let o = options.as_ref().ok_or_else(|| null("options"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let penalty = match o.penalty {
            RIRT_PENALTY_L0 => Penalty::L0,
            RIRT_PENALTY_L1 => Penalty::L1,
            RIRT_PENALTY_NONE => Penalty::None,
            other => return Err(invalid(format!("unknown penalty code {other}"))),
        };
        let config = rio::FitConfig {
            penalty,
            lambda: o.lambda,
            dim: o.dim,
            seed: o.seed,
            preliminary: o.preliminary != 0,
            preliminary_lambda: o.preliminary_lambda,
            max_iter: o.max_iter,
            epsilon: o.epsilon,
            ..rio::FitConfig::default()
        };
        let hp = config.hyperparams().map_err(lib_err)?;
        let opts = FitOptions::default();
        let fit = if config.uses_preliminary() {
            em::preliminary_then_main_with(&v.inner, &hp, config.seed, config.preliminary_lambda, &opts)
        } else {
            em::fit_with(&v.inner, &hp, &InitSpec::random(config.seed), &opts)
        }
        .map_err(lib_err)?;
        *out = Box::into_raw(Box::new(RirtFit {
            fit,
            hp,
            legislators: v.inner.legislators().iter().map(|l| l.id.clone()).collect(),
            bills: v.inner.bills().iter().map(|b| b.id.clone()).collect(),
        }));
        Ok(())
    })
}

/// # Safety
/// `fit` must be null or a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn rirt_fit_free(fit: *mut RirtFit) {
    if !fit.is_null() {
        drop(Box::from_raw(fit));
    }
}

/// # Safety
/// `fit` must be a live handle; the out pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn rirt_fit_dims(
    fit: *const RirtFit,
    n_legislators: *mut usize,
    n_bills: *mut usize,
    dim: *mut usize,
) -> RirtStatus {
    guard(|| {
        let f = fit.as_ref().ok_or_else(|| null("fit"))?;
        if n_legislators.is_null() || n_bills.is_null() || dim.is_null() {
            return Err(null("dimension output"));
        }
        let s = &f.fit.state;
        *n_legislators = s.n_legislators();
        *n_bills = s.n_bills();
        *dim = s.dim;
        Ok(())
    })
}

/// Copies θ (`n_legislators × dim`, row-major) into `out`.
///
/// # Safety
/// `fit` must be a live handle and `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn rirt_fit_theta(fit: *const RirtFit, out: *mut f64, len: usize) -> RirtStatus {
    guard(|| copy_out(&fit.as_ref().ok_or_else(|| null("fit"))?.fit.state.theta, out, len))
}

/// Copies α (`n_bills`) into `out`.
///
/// # Safety
/// `fit` must be a live handle and `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn rirt_fit_alpha(fit: *const RirtFit, out: *mut f64, len: usize) -> RirtStatus {
    guard(|| copy_out(&fit.as_ref().ok_or_else(|| null("fit"))?.fit.state.alpha, out, len))
}

/// Copies β (`n_bills × dim`, row-major) into `out`.
///
/// # Safety
/// `fit` must be a live handle and `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn rirt_fit_beta(fit: *const RirtFit, out: *mut f64, len: usize) -> RirtStatus {
    guard(|| copy_out(&fit.as_ref().ok_or_else(|| null("fit"))?.fit.state.beta, out, len))
}

/// Number of nonzero shifts; 0 for a null handle.
///
/// # Safety
/// `fit` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn rirt_fit_gamma_nnz(fit: *const RirtFit) -> usize {
    fit.as_ref().map_or(0, |f| f.fit.state.gamma.nnz())
}

/// Copies the nonzero shifts as parallel arrays of legislator index, bill
/// index and value, in (legislator, bill) order.
///
/// # Safety
/// `fit` must be a live handle; each array must hold `len` elements.
#[no_mangle]
pub unsafe extern "C" fn rirt_fit_gamma(
    fit: *const RirtFit,
    rows: *mut usize,
    cols: *mut usize,
    values: *mut f64,
    len: usize,
) -> RirtStatus {
    guard(|| {
        let f = fit.as_ref().ok_or_else(|| null("fit"))?;
        if rows.is_null() || cols.is_null() || values.is_null() {
            return Err(null("output buffer"));
        }
        let nnz = f.fit.state.gamma.nnz();
        if len < nnz {
            return Err((RirtStatus::BufferTooSmall, format!("buffer holds {len} entries, {nnz} needed")));
        }
        for (k, (i, j, g)) in f.fit.state.gamma.iter().enumerate() {
            *rows.add(k) = i;
            *cols.add(k) = j;
            *values.add(k) = g;
        }
        Ok(())
    })
}

/// Iteration count and convergence flag of the main run.
///
/// # Safety
/// `fit` must be a live handle; the out pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn rirt_fit_status(fit: *const RirtFit, iterations: *mut usize, converged: *mut i32) -> RirtStatus {
    guard(|| {
        let f = fit.as_ref().ok_or_else(|| null("fit"))?;
        if iterations.is_null() || converged.is_null() {
            return Err(null("status output"));
        }
        *iterations = f.fit.iterations;
        *converged = i32::from(f.fit.converged);
        Ok(())
    })
}

/// Writes the fit document (JSON) to `path`.
///
/// # Safety
/// `fit` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn rirt_fit_write_json(fit: *const RirtFit, path: *const c_char) -> RirtStatus {
    guard(|| {
        let f = fit.as_ref().ok_or_else(|| null("fit"))?;
        let path = path_arg(path)?;
        let doc = FitDocument::from_fit(&f.fit, &f.hp, &f.legislators, &f.bills).map_err(lib_err)?;
        rio::write_fit_json(&doc, path).map_err(lib_err)
    })
}

/// `λ = sqrt(2 ln((1-π)/π))` for `0 < π < 1/2`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rirt_lambda_from_pi(pi: f64, out: *mut f64) -> RirtStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = lambda_from_pi(pi).map_err(lib_err)?;
        Ok(())
    })
}
