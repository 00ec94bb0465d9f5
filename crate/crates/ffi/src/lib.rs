//! C ABI over the experiment runner.
//!
//! A caller builds a run from a JSON configuration string (same keys as the
//! CLI flags), reads diagnostics rows and metadata through an opaque
//! [`DgRun`] handle, and frees everything through the matching `_free`
//! functions. All fallible calls return a [`DgStatus`]; after a failure,
//! [`dg_last_error_message`] describes what went wrong on this thread.
//!
//! The generated C header lives at `include/dg_tracer.h`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};

use dg_tracer::runner::{run_case, version_string, RunArtifacts, RunConfig};

/// Status code returned by every fallible ABI call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DgStatus {
    /// Call succeeded.
    Ok = 0,
    /// A required pointer argument was null.
    NullArgument = 1,
    /// A string argument was not valid UTF-8.
    InvalidUtf8 = 2,
    /// The configuration could not be parsed or resolved.
    InvalidConfig = 3,
    /// The run itself failed (solver, guard or I/O error).
    RunFailed = 4,
    /// A row index was past the end of the diagnostics series.
    OutOfRange = 5,
}

/// Opaque handle to a completed run; create with [`dg_run_execute`], free
/// with [`dg_run_free`].
pub struct DgRun {
    artifacts: RunArtifacts,
}

/// One diagnostics row in C layout.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct DgStepRow {
    pub step: u64,
    /// Model time in seconds.
    pub t: f64,
    /// Global density integral.
    pub integral_rho: f64,
    /// Conserved tracer functional (∫ρm, or ∫ρ(X+2X₂) for the two-species
    /// chemistry case).
    pub integral_rho_x: f64,
    /// Relative drift of `integral_rho_x` against the initial row.
    pub delta_rho_x_rel: f64,
    pub m_min: f64,
    pub m_max: f64,
    pub limited_cells: u64,
    pub unfixable_cells: u64,
    /// L2 error against the run's reference tracer; NaN when the run
    /// records none.
    pub l2_error: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: String) {
    let sanitized = msg.replace('\0', " ");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() =
            CString::new(sanitized).unwrap_or_else(|_| CString::default());
    });
}

/// Message describing the most recent failure on this thread.
///
/// The pointer stays valid until the next failing ABI call on the same
/// thread; copy the string if it must outlive that.
///
/// # Safety
///
/// Always safe to call; the returned pointer must not be freed.
#[no_mangle]
pub unsafe extern "C" fn dg_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Runs one configured case and hands back an owned run handle.
///
/// `config_json` uses the same keys as the CLI flags (`case`, `placement`,
/// `order`, `form`, `limiter`, `ne`, `nx`, `dt`, `steps`, `out_dir`); when
/// `out_dir` is set, diagnostics files are written as a side effect.
///
/// # Safety
///
/// `config_json` must point to a NUL-terminated string and `out_run` to a
/// writable pointer slot; both must be non-null. On `Ok` the caller owns
/// `*out_run` and must release it with [`dg_run_free`] exactly once.
#[no_mangle]
pub unsafe extern "C" fn dg_run_execute(
    config_json: *const c_char,
    out_run: *mut *mut DgRun,
) -> DgStatus {
    if config_json.is_null() || out_run.is_null() {
        set_error("dg_run_execute: null argument".into());
        return DgStatus::NullArgument;
    }
    let text = match CStr::from_ptr(config_json).to_str() {
        Ok(t) => t,
        Err(e) => {
            set_error(format!("config string is not UTF-8: {e}"));
            return DgStatus::InvalidUtf8;
        }
    };
    let config = match RunConfig::from_json(text) {
        Ok(c) => c,
        Err(e) => {
            set_error(e.to_string());
            return DgStatus::InvalidConfig;
        }
    };
    if let Err(e) = config.resolve() {
        set_error(e.to_string());
        return DgStatus::InvalidConfig;
    }
    match run_case(&config) {
        Ok(artifacts) => {
            *out_run = Box::into_raw(Box::new(DgRun { artifacts }));
            DgStatus::Ok
        }
        Err(e) => {
            set_error(e.to_string());
            DgStatus::RunFailed
        }
    }
}

/// Releases a run handle. Passing null is a no-op.
///
/// # Safety
///
/// `run` must be null or a pointer obtained from [`dg_run_execute`] that
/// has not been freed yet.
#[no_mangle]
pub unsafe extern "C" fn dg_run_free(run: *mut DgRun) {
    if !run.is_null() {
        drop(Box::from_raw(run));
    }
}

/// Number of diagnostics rows in the run (steps + 1); 0 for a null handle.
///
/// # Safety
///
/// `run` must be null or a live handle from [`dg_run_execute`].
#[no_mangle]
pub unsafe extern "C" fn dg_run_row_count(run: *const DgRun) -> u64 {
    match run.as_ref() {
        Some(r) => r.artifacts.series.rows.len() as u64,
        None => 0,
    }
}

/// Copies diagnostics row `index` into `*out_row`.
///
/// # Safety
///
/// `run` must be a live handle from [`dg_run_execute`] and `out_row` a
/// writable, properly aligned [`DgStepRow`] slot.
#[no_mangle]
pub unsafe extern "C" fn dg_run_row(
    run: *const DgRun,
    index: u64,
    out_row: *mut DgStepRow,
) -> DgStatus {
    let (Some(run), false) = (run.as_ref(), out_row.is_null()) else {
        set_error("dg_run_row: null argument".into());
        return DgStatus::NullArgument;
    };
    let rows = &run.artifacts.series.rows;
    let Some(row) = usize::try_from(index).ok().and_then(|i| rows.get(i)) else {
        set_error(format!(
            "dg_run_row: index {index} out of range for {} rows",
            rows.len()
        ));
        return DgStatus::OutOfRange;
    };
    *out_row = DgStepRow {
        step: row.step as u64,
        t: row.t,
        integral_rho: row.integral_rho,
        integral_rho_x: row.integral_rho_x,
        delta_rho_x_rel: row.delta_rho_x_rel,
        m_min: row.m_min,
        m_max: row.m_max,
        limited_cells: row.limited_cells as u64,
        unfixable_cells: row.unfixable_cells as u64,
        l2_error: row.l2_error.unwrap_or(f64::NAN),
    };
    DgStatus::Ok
}

/// Largest relative drift of the conserved tracer functional over the run.
///
/// # Safety
///
/// `run` must be a live handle and `out` a writable double slot.
#[no_mangle]
pub unsafe extern "C" fn dg_run_max_delta(
    run: *const DgRun,
    out: *mut f64,
) -> DgStatus {
    let (Some(run), false) = (run.as_ref(), out.is_null()) else {
        set_error("dg_run_max_delta: null argument".into());
        return DgStatus::NullArgument;
    };
    *out = run.artifacts.series.max_delta();
    DgStatus::Ok
}

/// Smallest nodal mixing-ratio value seen over the whole run.
///
/// # Safety
///
/// `run` must be a live handle and `out` a writable double slot.
#[no_mangle]
pub unsafe extern "C" fn dg_run_min_mixing_ratio(
    run: *const DgRun,
    out: *mut f64,
) -> DgStatus {
    let (Some(run), false) = (run.as_ref(), out.is_null()) else {
        set_error("dg_run_min_mixing_ratio: null argument".into());
        return DgStatus::NullArgument;
    };
    *out = run.artifacts.series.min_m();
    DgStatus::Ok
}

/// Run metadata as an owned JSON string (configuration, solver policies,
/// mesh summary, version); null for a null handle.
///
/// # Safety
///
/// `run` must be null or a live handle. A non-null result must be released
/// with [`dg_string_free`] exactly once.
#[no_mangle]
pub unsafe extern "C" fn dg_run_metadata_json(run: *const DgRun) -> *mut c_char {
    let Some(run) = run.as_ref() else {
        return std::ptr::null_mut();
    };
    let text = serde_json::to_string(&run.artifacts.metadata)
        .unwrap_or_else(|_| "{}".into())
        .replace('\0', " ");
    CString::new(text)
        .map(CString::into_raw)
        .unwrap_or(std::ptr::null_mut())
}

/// Library version string (package version plus git commit when known).
///
/// # Safety
///
/// Always safe to call. The result must be released with
/// [`dg_string_free`] exactly once.
#[no_mangle]
pub unsafe extern "C" fn dg_version() -> *mut c_char {
    CString::new(version_string().replace('\0', " "))
        .map(CString::into_raw)
        .unwrap_or(std::ptr::null_mut())
}

/// Releases a string returned by this library. Passing null is a no-op.
///
/// # Safety
///
/// `s` must be null or an unfreed pointer returned by
/// [`dg_run_metadata_json`] or [`dg_version`].
#[no_mangle]
pub unsafe extern "C" fn dg_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
