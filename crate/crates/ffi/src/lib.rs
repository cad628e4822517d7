//! C ABI over `vocovar`.
//!
//! Objects cross the boundary as opaque handles created by `vcv_*_load`,
//! `vcv_solve` and friends and released with the matching `vcv_*_free`.
//! Every fallible call returns a [`VcvStatus`] whose values equal the CLI
//! exit codes; the message of the last failure on the calling thread is
//! available from [`vcv_last_error_message`].
//!
//! Handles are immutable after creation and may be shared across threads for
//! reading.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use vocovar::analysis::{self, TrendConfig, TrendSeries};
use vocovar::graph::{self, FactorGraph, GaugeConfig, Key, SolveReport, SolverConfig, Values};
use vocovar::io::{self, KeyframeDataset, ScenarioSpec};
use vocovar::marginals::Marginals;
use vocovar::Error;

/// Result of every fallible call. Values match the `vocovar` CLI exit codes.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VcvStatus {
    Ok = 0,
    /// Null pointer, bad UTF-8, out-of-range index.
    InvalidArgument = 2,
    /// Parse, validation or degenerate-scenario error.
    Validation = 3,
    /// Singular system, cheirality violation, non-SPD matrix.
    Numerical = 4,
    Io = 5,
    /// A Rust panic was caught at the boundary.
    Internal = 70,
}

impl From<&Error> for VcvStatus {
    fn from(e: &Error) -> Self {
        match e.exit_code() {
            3 => VcvStatus::Validation,
            4 => VcvStatus::Numerical,
            5 => VcvStatus::Io,
            _ => VcvStatus::Internal,
        }
    }
}

/// Loaded or simulated keyframe dataset.
pub struct VcvDataset {
    inner: KeyframeDataset,
}

/// Optimized poses with their marginal covariances.
pub struct VcvSolution {
    graph: FactorGraph,
    values: Values,
    report: SolveReport,
    marginals: Marginals,
}

/// Per-keyframe D-opt trend.
pub struct VcvTrend {
    inner: TrendSeries,
}

#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct VcvSolveOptions {
    /// Add priors on the first two keyframes to fix the gauge.
    pub gauge: bool,
    pub gauge_rot_sigma: f64,
    pub gauge_trans_sigma: f64,
    pub tol: f64,
    pub max_iters: u32,
    /// Levenberg-Marquardt damping.
    pub damping: bool,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default)]
pub struct VcvTrendEntry {
    pub keyframe: usize,
    pub logdet: f64,
    pub num_edges: usize,
    pub max_backlink_span: usize,
}

impl VcvSolveOptions {
    fn split(&self) -> (GaugeConfig, SolverConfig) {
        let gauge = GaugeConfig {
            enabled: self.gauge,
            rot_sigma: self.gauge_rot_sigma,
            trans_sigma: self.gauge_trans_sigma,
            ..GaugeConfig::default()
        };
        let solver = SolverConfig {
            tol: self.tol,
            max_iters: self.max_iters as usize,
            damping: self.damping,
            ..SolverConfig::default()
        };
        (gauge, solver)
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn fail(status: VcvStatus, msg: impl Into<String>) -> VcvStatus {
    set_error(msg.into());
    status
}

/// Runs `f`, converting errors and panics into a status.
fn guard(f: impl FnOnce() -> Result<(), VcvStatus>) -> VcvStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => VcvStatus::Ok,
        Ok(Err(s)) => s,
        Err(panic) => {
            let msg = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            fail(VcvStatus::Internal, format!("internal error: {msg}"))
        }
    }
}

fn check(e: Error) -> VcvStatus {
    let s = VcvStatus::from(&e);
    fail(s, e.to_string())
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, VcvStatus> {
    if p.is_null() {
        return Err(fail(VcvStatus::InvalidArgument, format!("{what} is null")));
    }
    CStr::from_ptr(p).to_str().map_err(|_| fail(VcvStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, VcvStatus> {
    p.as_ref().ok_or_else(|| fail(VcvStatus::InvalidArgument, format!("{what} is null")))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, VcvStatus> {
    p.as_mut().ok_or_else(|| fail(VcvStatus::InvalidArgument, format!("{what} is null")))
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next `vcv_*` call on the same thread.
#[no_mangle]
pub extern "C" fn vcv_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version, static storage.
#[no_mangle]
pub extern "C" fn vcv_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

#[no_mangle]
pub extern "C" fn vcv_solve_options_default() -> VcvSolveOptions {
    let (g, s) = (GaugeConfig::default(), SolverConfig::default());
    VcvSolveOptions {
        gauge: g.enabled,
        gauge_rot_sigma: g.rot_sigma,
        gauge_trans_sigma: g.trans_sigma,
        tol: s.tol,
        max_iters: s.max_iters as u32,
        damping: s.damping,
    }
}

// --- datasets ---------------------------------------------------------------

/// Loads a dataset file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vcv_dataset_load(path: *const c_char, out: *mut *mut VcvDataset) -> VcvStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let path = str_arg(path, "path")?;
        let inner = io::load_dataset(path).map_err(check)?;
        *out = Box::into_raw(Box::new(VcvDataset { inner }));
        Ok(())
    })
}

/// Parses dataset text held in memory.
///
/// # Safety
/// `text` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vcv_dataset_parse(text: *const c_char, out: *mut *mut VcvDataset) -> VcvStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let inner = io::parse_dataset(str_arg(text, "text")?).map_err(check)?;
        *out = Box::into_raw(Box::new(VcvDataset { inner }));
        Ok(())
    })
}

/// Simulates a dataset from a TOML scenario spec given as a string.
///
/// # Safety
/// `spec_toml` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vcv_dataset_simulate(spec_toml: *const c_char, out: *mut *mut VcvDataset) -> VcvStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let spec = ScenarioSpec::from_toml(str_arg(spec_toml, "spec_toml")?).map_err(check)?;
        let (inner, _) = io::simulate_scenario(&spec).map_err(check)?;
        *out = Box::into_raw(Box::new(VcvDataset { inner }));
        Ok(())
    })
}

/// Writes the dataset in the text format.
///
/// # Safety
/// `ds` must be a live dataset handle; `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn vcv_dataset_save(ds: *const VcvDataset, path: *const c_char) -> VcvStatus {
    guard(|| {
        let ds = handle(ds, "dataset")?;
        io::save_dataset(&ds.inner, str_arg(path, "path")?).map_err(check)
    })
}

/// Number of keyframes, 0 for a null handle.
///
/// # Safety
/// `ds` must be null or a live dataset handle.
#[no_mangle]
pub unsafe extern "C" fn vcv_dataset_num_keyframes(ds: *const VcvDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.inner.keyframes.len())
}

/// Number of flow measurements, 0 for a null handle.
///
/// # Safety
/// `ds` must be null or a live dataset handle.
#[no_mangle]
pub unsafe extern "C" fn vcv_dataset_num_measurements(ds: *const VcvDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.inner.measurements.len())
}

/// # Safety
/// `ds` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn vcv_dataset_free(ds: *mut VcvDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

// --- solving ----------------------------------------------------------------

/// Optimizes the dataset graph and factors its information matrix.
/// `opts` may be null for the defaults.
///
/// # Safety
/// `ds` must be a live dataset handle, `opts` null or valid, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn vcv_solve(
    ds: *const VcvDataset,
    opts: *const VcvSolveOptions,
    out: *mut *mut VcvSolution,
) -> VcvStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let ds = handle(ds, "dataset")?;
        let opts = opts.as_ref().copied().unwrap_or_else(|| vcv_solve_options_default());
        let (gauge, solver) = opts.split();
        let (graph, x0) = graph::build_graph(&ds.inner, &gauge).map_err(check)?;
        let (values, report) = graph::gauss_newton_solve(&graph, &x0, &solver).map_err(check)?;
        let marginals = Marginals::new(&graph, &values).map_err(check)?;
        *out = Box::into_raw(Box::new(VcvSolution { graph, values, report, marginals }));
        Ok(())
    })
}

/// Number of optimized keyframe poses.
///
/// # Safety
/// `sol` must be null or a live solution handle.
#[no_mangle]
pub unsafe extern "C" fn vcv_solution_num_poses(sol: *const VcvSolution) -> usize {
    sol.as_ref().map_or(0, |s| s.values.poses.len())
}

/// Solver iterations, whether it converged, and the final cost.
///
/// # Safety
/// `sol` must be a live solution handle; the out pointers may be null.
#[no_mangle]
pub unsafe extern "C" fn vcv_solution_summary(
    sol: *const VcvSolution,
    iterations: *mut usize,
    converged: *mut bool,
    final_cost: *mut f64,
) -> VcvStatus {
    guard(|| {
        let s = handle(sol, "solution")?;
        if let Some(p) = iterations.as_mut() {
            *p = s.report.iterations;
        }
        if let Some(p) = converged.as_mut() {
            *p = s.report.converged;
        }
        if let Some(p) = final_cost.as_mut() {
            *p = s.report.final_cost();
        }
        Ok(())
    })
}

unsafe fn pose_key(s: &VcvSolution, keyframe: usize) -> Result<Key, VcvStatus> {
    let key = Key::Pose(keyframe);
    if s.graph.layout().block_of(&key).is_none() {
        return Err(fail(VcvStatus::InvalidArgument, format!("keyframe {keyframe} is not in the solution")));
    }
    Ok(key)
}

/// Camera-to-world pose as `qw qx qy qz tx ty tz` into `out[7]`.
///
/// # Safety
/// `sol` must be a live solution handle; `out` must hold 7 doubles.
#[no_mangle]
pub unsafe extern "C" fn vcv_solution_pose(sol: *const VcvSolution, keyframe: usize, out: *mut f64) -> VcvStatus {
    guard(|| {
        let s = handle(sol, "solution")?;
        let out = out_arg(out, "out")?;
        let key = pose_key(s, keyframe)?;
        let Key::Pose(id) = key else { unreachable!() };
        let a = s.values.pose(id).map_err(check)?.to_array7();
        std::slice::from_raw_parts_mut(out, 7).copy_from_slice(&a);
        Ok(())
    })
}

/// 6×6 marginal covariance of a pose, row-major into `out[36]`, tangent
/// order rotation then translation.
///
/// # Safety
/// `sol` must be a live solution handle; `out` must hold 36 doubles.
#[no_mangle]
pub unsafe extern "C" fn vcv_solution_marginal(sol: *const VcvSolution, keyframe: usize, out: *mut f64) -> VcvStatus {
    guard(|| {
        let s = handle(sol, "solution")?;
        let out = out_arg(out, "out")?;
        let cov = s.marginals.marginal(pose_key(s, keyframe)?).map_err(check)?;
        let dst = std::slice::from_raw_parts_mut(out, 36);
        for i in 0..6 {
            for j in 0..6 {
                dst[i * 6 + j] = cov[(i, j)];
            }
        }
        Ok(())
    })
}

/// `log det` of a pose's marginal covariance.
///
/// # Safety
/// `sol` must be a live solution handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vcv_solution_logdet(sol: *const VcvSolution, keyframe: usize, out: *mut f64) -> VcvStatus {
    guard(|| {
        let s = handle(sol, "solution")?;
        let out = out_arg(out, "out")?;
        let cov = s.marginals.marginal(pose_key(s, keyframe)?).map_err(check)?;
        *out = analysis::dopt(&cov).map_err(check)?;
        Ok(())
    })
}

/// # Safety
/// `sol` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn vcv_solution_free(sol: *mut VcvSolution) {
    if !sol.is_null() {
        drop(Box::from_raw(sol));
    }
}

// --- trend ------------------------------------------------------------------

/// D-opt of the newest pose over growing keyframe windows. `opts` may be null.
///
/// # Safety
/// `ds` must be a live dataset handle, `opts` null or valid, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn vcv_trend(
    ds: *const VcvDataset,
    opts: *const VcvSolveOptions,
    out: *mut *mut VcvTrend,
) -> VcvStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let ds = handle(ds, "dataset")?;
        let opts = opts.as_ref().copied().unwrap_or_else(|| vcv_solve_options_default());
        let (gauge, solver) = opts.split();
        let inner = analysis::trend_series(&ds.inner, &TrendConfig { solver, gauge }).map_err(check)?;
        *out = Box::into_raw(Box::new(VcvTrend { inner }));
        Ok(())
    })
}

/// # Safety
/// `trend` must be null or a live trend handle.
#[no_mangle]
pub unsafe extern "C" fn vcv_trend_len(trend: *const VcvTrend) -> usize {
    trend.as_ref().map_or(0, |t| t.inner.entries.len())
}

/// # Safety
/// `trend` must be a live trend handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vcv_trend_entry(trend: *const VcvTrend, index: usize, out: *mut VcvTrendEntry) -> VcvStatus {
    guard(|| {
        let t = handle(trend, "trend")?;
        let out = out_arg(out, "out")?;
        let e = t.inner.entries.get(index).ok_or_else(|| {
            fail(VcvStatus::InvalidArgument, format!("index {index} out of range ({} entries)", t.inner.entries.len()))
        })?;
        *out = VcvTrendEntry {
            keyframe: e.keyframe,
            logdet: e.logdet,
            num_edges: e.num_edges,
            max_backlink_span: e.max_backlink_span,
        };
        Ok(())
    })
}

/// # Safety
/// `trend` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn vcv_trend_free(trend: *mut VcvTrend) {
    if !trend.is_null() {
        drop(Box::from_raw(trend));
    }
}
