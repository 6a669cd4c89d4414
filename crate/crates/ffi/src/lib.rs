//! C interface to the `jgw` solver.
//!
//! Objects cross the boundary as opaque handles created by `jgw_*_new` or
//! `jgw_*_read` functions and released with the matching `jgw_*_free`.
//! Every fallible call returns a [`JgwStatus`]; on failure the message is
//! available from [`jgw_last_error`] on the same thread. Panics never unwind
//! into C: they are reported as [`JgwStatus::Panic`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use ndarray::Array2;

use jgw::error::JgwError;
use jgw::io::{read_config, read_point_cloud, write_coupling, DEFAULT_COUPLING_THRESHOLD};
use jgw::solver::{solve, SolveReport, SolverConfig};
use jgw::space::{build_clustered_space, ClusteredSpace, Coupling, PointCluster};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JgwStatus {
    Ok = 0,
    /// The solver stopped at its iteration cap; the result is still valid.
    NotConverged = 1,
    NullPointer = 2,
    InvalidArgument = 3,
    InvalidConfig = 4,
    InvalidSpace = 5,
    Numerical = 6,
    Io = 7,
    Parse = 8,
    BufferTooSmall = 9,
    Panic = 10,
}

/// A clustered metric measure space.
pub struct JgwSpace(ClusteredSpace);

/// Solver parameters.
pub struct JgwConfig(SolverConfig);

/// A transport plan with the report of the solve that produced it.
pub struct JgwResult {
    coupling: Coupling,
    report: SolveReport,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: impl Into<String>) {
    let text = message.into().replace('\0', " ");
    let c = CString::new(text).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &JgwError) -> JgwStatus {
    match err {
        JgwError::InvalidConfig { .. } => JgwStatus::InvalidConfig,
        JgwError::EmptyCluster { .. } | JgwError::NonPositiveWeight { .. } | JgwError::InvalidSpace(_) => {
            JgwStatus::InvalidSpace
        }
        JgwError::DimensionMismatch { .. } | JgwError::ShapeMismatch { .. } | JgwError::InvalidArgument(_) => {
            JgwStatus::InvalidArgument
        }
        JgwError::ZeroKernelLine { .. } | JgwError::Numerical(_) => JgwStatus::Numerical,
        JgwError::Io { .. } => JgwStatus::Io,
        JgwError::Parse { .. } | JgwError::Schema { .. } => JgwStatus::Parse,
    }
}

fn fail(status: JgwStatus, message: impl Into<String>) -> JgwStatus {
    set_error(message);
    status
}

fn guard(body: impl FnOnce() -> Result<JgwStatus, (JgwStatus, String)>) -> JgwStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(status)) => status,
        Ok(Err((status, message))) => fail(status, message),
        Err(payload) => {
            let message = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            fail(JgwStatus::Panic, format!("panic: {message}"))
        }
    }
}

fn lib_err(err: JgwError) -> (JgwStatus, String) {
    (status_of(&err), err.to_string())
}

fn null(what: &str) -> (JgwStatus, String) {
    (JgwStatus::NullPointer, format!("{what} is null"))
}

unsafe fn path_arg(path: *const c_char) -> Result<PathBuf, (JgwStatus, String)> {
    if path.is_null() {
        return Err(null("path"));
    }
    let s = CStr::from_ptr(path)
        .to_str()
        .map_err(|_| (JgwStatus::InvalidArgument, "path is not valid UTF-8".to_string()))?;
    Ok(PathBuf::from(s))
}

unsafe fn slice_arg<'a, T>(data: *const T, len: usize, what: &str) -> Result<&'a [T], (JgwStatus, String)> {
    if len == 0 {
        return Ok(&[]);
    }
    if data.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(data, len))
}

unsafe fn store<T>(out: *mut *mut T, value: T) {
    *out = Box::into_raw(Box::new(value));
}

/// Message of the last failed call on this thread, or null if none failed.
/// The pointer stays valid until the next failing call on this thread.
#[no_mangle]
pub extern "C" fn jgw_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn jgw_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Builds a space from `n_points` row-major points of dimension `dim`.
/// `cluster_of[i]` in `0..n_clusters` assigns point `i`; every cluster must
/// be nonempty. `weights` (length `n_points`) and `masses` (length
/// `n_clusters`) may be null for uniform weights and masses proportional to
/// cluster weight.
///
/// # Safety
/// Non-null pointers must be valid for the stated lengths; `out` must be
/// writable.
#[no_mangle]
pub unsafe extern "C" fn jgw_space_from_points(
    points: *const f64,
    n_points: usize,
    dim: usize,
    cluster_of: *const u32,
    n_clusters: usize,
    weights: *const f64,
    masses: *const f64,
    out: *mut *mut JgwSpace,
) -> JgwStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        if dim == 0 || n_clusters == 0 {
            return Err((JgwStatus::InvalidArgument, "dim and n_clusters must be positive".into()));
        }
        let coords = slice_arg(points, n_points * dim, "points")?;
        let labels = slice_arg(cluster_of, n_points, "cluster_of")?;
        let weights = (!weights.is_null()).then(|| slice_arg(weights, n_points, "weights")).transpose()?;
        let masses = (!masses.is_null()).then(|| slice_arg(masses, n_clusters, "masses")).transpose()?;

        let mut members: Vec<Vec<usize>> = vec![Vec::new(); n_clusters];
        for (i, &c) in labels.iter().enumerate() {
            let c = c as usize;
            if c >= n_clusters {
                return Err((JgwStatus::InvalidArgument, format!("point {i} has cluster {c} of {n_clusters}")));
            }
            members[c].push(i);
        }
        let clusters = members
            .iter()
            .enumerate()
            .map(|(c, rows)| {
                let pts = Array2::from_shape_fn((rows.len(), dim), |(r, k)| coords[rows[r] * dim + k]);
                let cluster = PointCluster::new(c.to_string(), pts);
                match weights {
                    Some(w) => cluster.with_weights(rows.iter().map(|&i| w[i]).collect()),
                    None => cluster,
                }
            })
            .collect();
        let space = build_clustered_space(clusters, masses.map(<[f64]>::to_vec)).map_err(lib_err)?;
        store(out, JgwSpace(space));
        Ok(JgwStatus::Ok)
    })
}

/// Reads a point-cloud CSV (`x,y[,z],cluster[,weight]`).
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn jgw_space_read(path: *const c_char, out: *mut *mut JgwSpace) -> JgwStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let space = read_point_cloud(path_arg(path)?).map_err(lib_err)?;
        store(out, JgwSpace(space));
        Ok(JgwStatus::Ok)
    })
}

/// Number of points, or 0 for a null handle.
///
/// # Safety
/// `space` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn jgw_space_num_points(space: *const JgwSpace) -> usize {
    space.as_ref().map_or(0, |s| s.0.num_points())
}

/// Number of clusters, or 0 for a null handle.
///
/// # Safety
/// `space` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn jgw_space_num_clusters(space: *const JgwSpace) -> usize {
    space.as_ref().map_or(0, |s| s.0.num_clusters())
}

/// # Safety
/// `space` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn jgw_space_free(space: *mut JgwSpace) {
    if !space.is_null() {
        drop(Box::from_raw(space));
    }
}

/// Default solver parameters.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn jgw_config_new(out: *mut *mut JgwConfig) -> JgwStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        store(out, JgwConfig(SolverConfig::default()));
        Ok(JgwStatus::Ok)
    })
}

/// Reads solver parameters from a JSON file; missing keys keep defaults.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn jgw_config_read(path: *const c_char, out: *mut *mut JgwConfig) -> JgwStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let config = read_config(path_arg(path)?).map_err(lib_err)?;
        store(out, JgwConfig(config));
        Ok(JgwStatus::Ok)
    })
}

unsafe fn update(config: *mut JgwConfig, edit: impl FnOnce(&mut SolverConfig)) -> JgwStatus {
    guard(|| {
        let c = config.as_mut().ok_or_else(|| null("config"))?;
        let mut next = c.0.clone();
        edit(&mut next);
        next.validate().map_err(lib_err)?;
        c.0 = next;
        Ok(JgwStatus::Ok)
    })
}

/// # Safety
/// `config` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn jgw_config_set_epsilon(config: *mut JgwConfig, epsilon: f64) -> JgwStatus {
    update(config, |c| c.epsilon = epsilon)
}

/// Continuation start; a value of 0 or less turns continuation off.
///
/// # Safety
/// `config` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn jgw_config_set_epsilon_start(config: *mut JgwConfig, epsilon_start: f64) -> JgwStatus {
    update(config, |c| c.epsilon_start = (epsilon_start > 0.0).then_some(epsilon_start))
}

/// # Safety
/// `config` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn jgw_config_set_eta(config: *mut JgwConfig, eta: f64) -> JgwStatus {
    update(config, |c| c.eta = eta)
}

/// # Safety
/// `config` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn jgw_config_set_max_outer_iters(config: *mut JgwConfig, iters: usize) -> JgwStatus {
    update(config, |c| c.max_outer_iters = iters)
}

/// # Safety
/// `config` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn jgw_config_set_restarts(config: *mut JgwConfig, restarts: u32) -> JgwStatus {
    update(config, |c| c.restarts = restarts)
}

/// # Safety
/// `config` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn jgw_config_set_seed(config: *mut JgwConfig, seed: u64) -> JgwStatus {
    update(config, |c| c.seed = seed)
}

/// # Safety
/// `config` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn jgw_config_set_paper_literal_signs(config: *mut JgwConfig, enabled: bool) -> JgwStatus {
    update(config, |c| c.paper_literal_signs = enabled)
}

/// # Safety
/// `config` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn jgw_config_free(config: *mut JgwConfig) {
    if !config.is_null() {
        drop(Box::from_raw(config));
    }
}

/// Solves `source` against `target`. `config` may be null for defaults.
/// Returns [`JgwStatus::NotConverged`] with a valid `*out` when the
/// iteration cap was hit.
///
/// # Safety
/// Handles must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn jgw_solve(
    source: *const JgwSpace,
    target: *const JgwSpace,
    config: *const JgwConfig,
    out: *mut *mut JgwResult,
) -> JgwStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let source = source.as_ref().ok_or_else(|| null("source"))?;
        let target = target.as_ref().ok_or_else(|| null("target"))?;
        let default = SolverConfig::default();
        let config = config.as_ref().map_or(&default, |c| &c.0);
        let (coupling, report) = solve(&source.0, &target.0, config).map_err(lib_err)?;
        let converged = report.converged;
        store(out, JgwResult { coupling, report });
        if converged {
            Ok(JgwStatus::Ok)
        } else {
            set_error("stopped at the iteration cap without converging");
            Ok(JgwStatus::NotConverged)
        }
    })
}

/// Unregularized objective in input distance units; NaN for a null handle.
///
/// # Safety
/// `result` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn jgw_result_objective(result: *const JgwResult) -> f64 {
    result.as_ref().map_or(f64::NAN, |r| r.report.objective)
}

/// # Safety
/// `result` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn jgw_result_converged(result: *const JgwResult) -> bool {
    result.as_ref().is_some_and(|r| r.report.converged)
}

/// # Safety
/// `result` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn jgw_result_outer_iters(result: *const JgwResult) -> usize {
    result.as_ref().map_or(0, |r| r.report.outer_iters_used)
}

/// Writes the plan's row and column counts.
///
/// # Safety
/// `result` must be a live handle; `rows` and `cols` writable.
#[no_mangle]
pub unsafe extern "C" fn jgw_result_shape(result: *const JgwResult, rows: *mut usize, cols: *mut usize) -> JgwStatus {
    guard(|| {
        let r = result.as_ref().ok_or_else(|| null("result"))?;
        if rows.is_null() || cols.is_null() {
            return Err(null("rows or cols"));
        }
        let (n, m) = r.coupling.dim();
        *rows = n;
        *cols = m;
        Ok(JgwStatus::Ok)
    })
}

/// Copies the plan row-major into `buffer` of `len` doubles.
///
/// # Safety
/// `result` must be a live handle; `buffer` valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn jgw_result_copy_plan(result: *const JgwResult, buffer: *mut f64, len: usize) -> JgwStatus {
    guard(|| {
        let r = result.as_ref().ok_or_else(|| null("result"))?;
        let plan = r.coupling.plan();
        if len < plan.len() {
            return Err((
                JgwStatus::BufferTooSmall,
                format!("plan has {} entries, buffer holds {len}", plan.len()),
            ));
        }
        if buffer.is_null() {
            return Err(null("buffer"));
        }
        let dst = std::slice::from_raw_parts_mut(buffer, plan.len());
        for (d, &v) in dst.iter_mut().zip(plan.iter()) {
            *d = v;
        }
        Ok(JgwStatus::Ok)
    })
}

/// Writes the plan as a sparse coupling CSV.
///
/// # Safety
/// `result` must be a live handle; `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn jgw_result_write_coupling(result: *const JgwResult, path: *const c_char) -> JgwStatus {
    guard(|| {
        let r = result.as_ref().ok_or_else(|| null("result"))?;
        write_coupling(path_arg(path)?, &r.coupling, DEFAULT_COUPLING_THRESHOLD).map_err(lib_err)?;
        Ok(JgwStatus::Ok)
    })
}

/// # Safety
/// `result` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn jgw_result_free(result: *mut JgwResult) {
    if !result.is_null() {
        drop(Box::from_raw(result));
    }
}
