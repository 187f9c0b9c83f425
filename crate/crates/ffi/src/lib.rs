//! C ABI over the `krylovrl` solvers.
//!
//! Every function returns a [`KrlStatus`]. On failure a description is kept
//! per thread and can be read with [`krl_last_error_message`]. Matrices and
//! policies are opaque handles owned by the caller and released with the
//! matching `*_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use krylovrl::fgmres::{fgmres_solve, BlockSizeChooser, ConstantChooser, SolveResult, SolverConfig};
use krylovrl::ppo::{PolicyChooser, PolicyParameters};
use krylovrl::problem::black_scholes::{analytic_bs_call, bs_backward_solve, BsParams};
use krylovrl::problem::mtx::read_matrix_market;
use krylovrl::sparse::{csr_from_triplets, SparseMatrix};
use krylovrl::Error;

/// Result code of every exported function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KrlStatus {
    Ok = 0,
    /// Null pointer, bad parameter or block size out of range.
    InvalidArgument = 1,
    /// File could not be read.
    Io = 2,
    /// Malformed or unsupported file contents.
    Format = 3,
    /// Sizes of the inputs disagree.
    Dimension = 4,
    /// The solver stopped before reaching the tolerance. Outputs are filled.
    NotConverged = 5,
    /// Policy file version, shape or parse problem.
    Policy = 6,
    /// Unexpected internal failure.
    Internal = 7,
}

/// Opaque sparse matrix handle.
pub struct KrlMatrix {
    inner: SparseMatrix,
}

/// Opaque block-size policy handle.
pub struct KrlPolicy {
    inner: PolicyParameters,
}

/// Solver settings.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct KrlSolverOptions {
    pub tol: f64,
    pub restart: usize,
    pub max_cycles: usize,
    /// Non-zero to run Gram-Schmidt twice per step.
    pub reorthogonalize: i32,
}

/// What a solve reports besides the solution.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct KrlSolveSummary {
    pub converged: i32,
    pub cycles: usize,
    pub matvecs: usize,
    pub final_rel_residual: f64,
}

/// European call pricing grid.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct KrlBsParams {
    pub sigma: f64,
    pub rate: f64,
    pub strike: f64,
    pub s_max: f64,
    /// Number of price subintervals.
    pub m: usize,
    pub expiry: f64,
    pub steps: usize,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let text = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).ok());
}

fn status_of(err: &Error) -> KrlStatus {
    match err {
        Error::Io { .. } => KrlStatus::Io,
        Error::Malformed { .. } | Error::UnsupportedFormat(_) | Error::NonFinite(_) => KrlStatus::Format,
        Error::DimensionMismatch { .. } | Error::NotSquare { .. } | Error::WindowOutOfRange { .. } => {
            KrlStatus::Dimension
        }
        Error::PolicyVersion(_) | Error::PolicyShape(_) | Error::PolicyParse { .. } => KrlStatus::Policy,
        Error::StepNotConverged { .. } => KrlStatus::NotConverged,
        Error::TripletOutOfRange { .. }
        | Error::BlockSizeOutOfRange { .. }
        | Error::NotSymmetric { .. }
        | Error::InvalidParameter(_) => KrlStatus::InvalidArgument,
        Error::NonFiniteLoss { .. } => KrlStatus::Internal,
    }
}

fn fail(status: KrlStatus, msg: impl Into<String>) -> KrlStatus {
    set_error(msg);
    status
}

/// Runs `f`, recording errors and turning panics into `Internal`.
fn guard(f: impl FnOnce() -> Result<KrlStatus, (KrlStatus, String)>) -> KrlStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(status)) => status,
        Ok(Err((status, msg))) => fail(status, msg),
        Err(_) => fail(KrlStatus::Internal, "panic inside krylovrl"),
    }
}

fn lib_err(e: Error) -> (KrlStatus, String) {
    (status_of(&e), e.to_string())
}

fn null_arg(name: &str) -> (KrlStatus, String) {
    (KrlStatus::InvalidArgument, format!("{name} must not be null"))
}

/// # Safety
/// `p` must be null or a valid NUL-terminated string.
unsafe fn path_arg(p: *const c_char) -> Result<String, (KrlStatus, String)> {
    if p.is_null() {
        return Err(null_arg("path"));
    }
    CStr::from_ptr(p)
        .to_str()
        .map(str::to_owned)
        .map_err(|_| (KrlStatus::InvalidArgument, "path is not valid UTF-8".into()))
}

/// # Safety
/// `p` must be null or point to `len` readable values.
unsafe fn slice_arg<'a, T>(p: *const T, len: usize, name: &str) -> Result<&'a [T], (KrlStatus, String)> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null_arg(name));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

/// Message of the last failed call on this thread, or null. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn krl_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Default solver settings: tolerance 1e-8, restart 20, 200 cycles,
/// reorthogonalization on.
#[no_mangle]
pub extern "C" fn krl_solver_options_default() -> KrlSolverOptions {
    let d = SolverConfig::default();
    KrlSolverOptions {
        tol: d.tol,
        restart: d.restart,
        max_cycles: d.max_cycles,
        reorthogonalize: i32::from(d.reorthogonalize),
    }
}

/// Builds a matrix from `nnz` coordinate entries. Duplicates are summed.
///
/// # Safety
/// `rows`, `cols` and `values` must each point to `nnz` readable elements and
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn krl_matrix_from_triplets(
    n_rows: usize,
    n_cols: usize,
    nnz: usize,
    rows: *const usize,
    cols: *const usize,
    values: *const f64,
    out: *mut *mut KrlMatrix,
) -> KrlStatus {
    guard(|| {
        if out.is_null() {
            return Err(null_arg("out"));
        }
        let (r, c, v) = (slice_arg(rows, nnz, "rows")?, slice_arg(cols, nnz, "cols")?, slice_arg(values, nnz, "values")?);
        let triplets: Vec<(usize, usize, f64)> = (0..nnz).map(|i| (r[i], c[i], v[i])).collect();
        let inner = csr_from_triplets(&triplets, n_rows, n_cols).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(KrlMatrix { inner }));
        Ok(KrlStatus::Ok)
    })
}

/// Reads a coordinate Matrix Market file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn krl_matrix_read_mm(path: *const c_char, out: *mut *mut KrlMatrix) -> KrlStatus {
    guard(|| {
        if out.is_null() {
            return Err(null_arg("out"));
        }
        let inner = read_matrix_market(path_arg(path)?).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(KrlMatrix { inner }));
        Ok(KrlStatus::Ok)
    })
}

/// Releases a matrix. Null is ignored.
///
/// # Safety
/// `m` must be null or a handle obtained from this library and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn krl_matrix_free(m: *mut KrlMatrix) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// Dimensions and stored nonzeros. Any output pointer may be null.
///
/// # Safety
/// `m` must be a live handle; non-null outputs must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn krl_matrix_dims(
    m: *const KrlMatrix,
    n_rows: *mut usize,
    n_cols: *mut usize,
    nnz: *mut usize,
) -> KrlStatus {
    guard(|| {
        let m = m.as_ref().ok_or_else(|| null_arg("matrix"))?;
        for (p, v) in [(n_rows, m.inner.n_rows()), (n_cols, m.inner.n_cols()), (nnz, m.inner.nnz())] {
            if !p.is_null() {
                *p = v;
            }
        }
        Ok(KrlStatus::Ok)
    })
}

/// # Safety
/// Same contract as the exported solve functions.
unsafe fn solve_common(
    m: *const KrlMatrix,
    b: *const f64,
    n: usize,
    options: *const KrlSolverOptions,
    chooser: &mut dyn BlockSizeChooser,
    x_out: *mut f64,
    summary: *mut KrlSolveSummary,
) -> Result<KrlStatus, (KrlStatus, String)> {
    let m = m.as_ref().ok_or_else(|| null_arg("matrix"))?;
    if x_out.is_null() {
        return Err(null_arg("x_out"));
    }
    let b = slice_arg(b, n, "b")?;
    let opts = options.as_ref().copied().unwrap_or_else(|| krl_solver_options_default());
    let cfg = SolverConfig {
        tol: opts.tol,
        restart: opts.restart,
        max_cycles: opts.max_cycles,
        reorthogonalize: opts.reorthogonalize != 0,
        ..SolverConfig::default()
    };
    let SolveResult { x, trace } = fgmres_solve(&m.inner, b, chooser, &cfg).map_err(lib_err)?;
    std::slice::from_raw_parts_mut(x_out, x.len()).copy_from_slice(&x);
    if let Some(s) = summary.as_mut() {
        *s = KrlSolveSummary {
            converged: i32::from(trace.converged()),
            cycles: trace.cycles(),
            matvecs: trace.matvecs(),
            final_rel_residual: trace.final_rel_residual(),
        };
    }
    if trace.converged() {
        Ok(KrlStatus::Ok)
    } else {
        Err((
            KrlStatus::NotConverged,
            format!("stopped at relative residual {:e} ({})", trace.final_rel_residual(), trace.outcome.as_str()),
        ))
    }
}

/// Solves `A x = b` with a constant block size `k`. `options` may be null for
/// defaults and `summary` may be null. `x_out` receives `n` values.
///
/// # Safety
/// `m` must be a live handle, `b` and `x_out` must hold `n` elements.
#[no_mangle]
pub unsafe extern "C" fn krl_solve_constant(
    m: *const KrlMatrix,
    b: *const f64,
    n: usize,
    block_size: usize,
    options: *const KrlSolverOptions,
    x_out: *mut f64,
    summary: *mut KrlSolveSummary,
) -> KrlStatus {
    guard(|| {
        let mat = m.as_ref().ok_or_else(|| null_arg("matrix"))?;
        if block_size == 0 || block_size > mat.inner.n_rows() {
            return Err(lib_err(Error::BlockSizeOutOfRange {
                k: block_size,
                n: mat.inner.n_rows(),
            }));
        }
        solve_common(m, b, n, options, &mut ConstantChooser(block_size), x_out, summary)
    })
}

/// Solves `A x = b` with the block size chosen each cycle by `policy`.
///
/// # Safety
/// As [`krl_solve_constant`]; `policy` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn krl_solve_policy(
    m: *const KrlMatrix,
    policy: *const KrlPolicy,
    b: *const f64,
    n: usize,
    options: *const KrlSolverOptions,
    x_out: *mut f64,
    summary: *mut KrlSolveSummary,
) -> KrlStatus {
    guard(|| {
        let p = policy.as_ref().ok_or_else(|| null_arg("policy"))?;
        solve_common(m, b, n, options, &mut PolicyChooser::new(&p.inner), x_out, summary)
    })
}

/// Loads a policy file written by the `train` command.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn krl_policy_load(path: *const c_char, out: *mut *mut KrlPolicy) -> KrlStatus {
    guard(|| {
        if out.is_null() {
            return Err(null_arg("out"));
        }
        let inner = PolicyParameters::load(path_arg(path)?).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(KrlPolicy { inner }));
        Ok(KrlStatus::Ok)
    })
}

/// Releases a policy. Null is ignored.
///
/// # Safety
/// `p` must be null or a handle obtained from this library and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn krl_policy_free(p: *mut KrlPolicy) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Prices a European call at `spot` by implicit finite differences with a
/// constant block size, and alongside it the closed-form value. Either
/// output may be null.
///
/// # Safety
/// `params` must be valid; non-null outputs must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn krl_bs_price(
    params: *const KrlBsParams,
    spot: f64,
    block_size: usize,
    fd_price: *mut f64,
    analytic_price: *mut f64,
) -> KrlStatus {
    guard(|| {
        let q = params.as_ref().ok_or_else(|| null_arg("params"))?;
        let p = BsParams {
            sigma: q.sigma,
            r: q.rate,
            strike: q.strike,
            s_max: q.s_max,
            m: q.m,
            t_expiry: q.expiry,
            n_steps: q.steps,
        };
        p.validate().map_err(lib_err)?;
        if block_size == 0 || block_size > p.m - 1 {
            return Err(lib_err(Error::BlockSizeOutOfRange { k: block_size, n: p.m - 1 }));
        }
        let pricing = bs_backward_solve(&p, &SolverConfig::default(), &mut ConstantChooser(block_size))
            .map_err(lib_err)?;
        let fd = pricing.price_at(spot).map_err(lib_err)?;
        if !fd_price.is_null() {
            *fd_price = fd;
        }
        if !analytic_price.is_null() {
            *analytic_price = analytic_bs_call(spot, p.strike, p.t_expiry, p.r, p.sigma);
        }
        Ok(KrlStatus::Ok)
    })
}
