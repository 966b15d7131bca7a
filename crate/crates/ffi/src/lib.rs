//! C ABI for the simulator.
//!
//! Configurations and results are opaque handles. Every fallible call
//! returns a [`SpotschedStatus`]; on failure a message for the calling
//! thread is available from [`spotsched_last_error`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use spotsched::cli::{run, write_outputs, RunResult};
use spotsched::transient::CostModel;
use spotsched::{Error, Preset, RunConfig};

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SpotschedStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Config = 3,
    Io = 4,
    Simulation = 5,
    Panic = 6,
}

/// Opaque run configuration.
pub struct SpotschedConfig {
    inner: RunConfig,
}

/// Opaque result of one run.
pub struct SpotschedResult {
    inner: RunResult,
}

/// Headline numbers of a finished run.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SpotschedStats {
    pub tasks: u64,
    pub short_tasks: u64,
    pub long_tasks: u64,
    pub short_mean_s: f64,
    pub short_max_s: f64,
    pub long_mean_s: f64,
    pub long_max_s: f64,
    pub avg_active_transient: f64,
    pub max_active_transient: u32,
    pub r_normalized_on_demand: f64,
    pub savings_fraction: f64,
    pub transient_lifetimes: u64,
    pub revoked: u64,
    pub k: u32,
    pub t: u32,
    pub end_s: f64,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SpotschedCapacity {
    pub k: u32,
    pub t: u32,
    pub retained_on_demand: u32,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn status_of(e: &Error) -> SpotschedStatus {
    match e {
        Error::Config { .. } | Error::Trace { .. } => SpotschedStatus::Config,
        Error::Io { .. } => SpotschedStatus::Io,
        _ => SpotschedStatus::Simulation,
    }
}

fn guard(f: impl FnOnce() -> Result<(), SpotschedStatus>) -> SpotschedStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SpotschedStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => {
            set_error("panic inside spotsched");
            SpotschedStatus::Panic
        }
    }
}

fn fail(e: Error) -> SpotschedStatus {
    let s = status_of(&e);
    set_error(e.to_string());
    s
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, SpotschedStatus> {
    if p.is_null() {
        set_error(format!("{what} is null"));
        return Err(SpotschedStatus::NullPointer);
    }
    CStr::from_ptr(p).to_str().map_err(|_| {
        set_error(format!("{what} is not valid UTF-8"));
        SpotschedStatus::InvalidUtf8
    })
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, SpotschedStatus> {
    p.as_ref().ok_or_else(|| {
        set_error(format!("{what} is null"));
        SpotschedStatus::NullPointer
    })
}

fn out_ptr<T>(p: *mut T, what: &str) -> Result<(), SpotschedStatus> {
    if p.is_null() {
        set_error(format!("{what} is null"));
        Err(SpotschedStatus::NullPointer)
    } else {
        Ok(())
    }
}

/// Message describing the last failure on this thread, or null. The
/// pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn spotsched_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn spotsched_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Transient budget and partition sizes for `N` short-only servers of
/// which a fraction `p` may be replaced at cost ratio `r`.
///
/// # Safety
/// `out` must point to writable memory for one `SpotschedCapacity`.
#[no_mangle]
pub unsafe extern "C" fn spotsched_capacity(
    r: f64,
    n: u32,
    p: f64,
    out: *mut SpotschedCapacity,
) -> SpotschedStatus {
    guard(|| {
        out_ptr(out, "out")?;
        let cost = CostModel { r, n, p };
        cost.validate().map_err(|m| fail(Error::config("r", m)))?;
        let c = cost.capacity();
        *out = SpotschedCapacity {
            k: c.k,
            t: c.t,
            retained_on_demand: c.retained_on_demand,
        };
        Ok(())
    })
}

/// Creates a configuration from a named preset, `desk` or `paper`; null
/// means `desk`.
///
/// # Safety
/// `preset` must be null or a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn spotsched_config_new(
    preset: *const c_char,
    out: *mut *mut SpotschedConfig,
) -> SpotschedStatus {
    guard(|| {
        out_ptr(out, "out")?;
        let preset = if preset.is_null() {
            Preset::Desk
        } else {
            str_arg(preset, "preset")?
                .parse()
                .map_err(|m: String| fail(Error::config("preset", m)))?
        };
        *out = Box::into_raw(Box::new(SpotschedConfig {
            inner: RunConfig::preset(preset),
        }));
        Ok(())
    })
}

/// Applies one `key = value` setting, using the same keys as the command
/// line and config files.
///
/// # Safety
/// `config` must come from `spotsched_config_new`; `key` and `value` must be
/// NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn spotsched_config_set(
    config: *mut SpotschedConfig,
    key: *const c_char,
    value: *const c_char,
) -> SpotschedStatus {
    guard(|| {
        let cfg = config.as_mut().ok_or_else(|| {
            set_error("config is null");
            SpotschedStatus::NullPointer
        })?;
        let key = str_arg(key, "key")?;
        let value = str_arg(value, "value")?;
        cfg.inner.set(key, value).map_err(fail)
    })
}

/// # Safety
/// `config` must be null or come from `spotsched_config_new`, and not be
/// used afterwards.
#[no_mangle]
pub unsafe extern "C" fn spotsched_config_free(config: *mut SpotschedConfig) {
    if !config.is_null() {
        drop(Box::from_raw(config));
    }
}

/// Runs the simulation. With a non-null `out_dir` the usual artifacts are
/// written there as well.
///
/// # Safety
/// `config` must be a live handle, `out_dir` null or a NUL-terminated path,
/// and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn spotsched_run(
    config: *const SpotschedConfig,
    out_dir: *const c_char,
    out: *mut *mut SpotschedResult,
) -> SpotschedStatus {
    guard(|| {
        out_ptr(out, "out")?;
        let cfg = handle(config, "config")?;
        let dir = if out_dir.is_null() {
            None
        } else {
            Some(Path::new(str_arg(out_dir, "out_dir")?))
        };
        let res = run(&cfg.inner, dir).map_err(fail)?;
        *out = Box::into_raw(Box::new(SpotschedResult { inner: res }));
        Ok(())
    })
}

/// # Safety
/// `result` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn spotsched_result_stats(
    result: *const SpotschedResult,
    out: *mut SpotschedStats,
) -> SpotschedStatus {
    guard(|| {
        out_ptr(out, "out")?;
        let r = &handle(result, "result")?.inner;
        let rep = &r.report;
        let t = &rep.transient;
        *out = SpotschedStats {
            tasks: r.output.records.len() as u64,
            short_tasks: rep.short_tasks.count as u64,
            long_tasks: rep.long_tasks.count as u64,
            short_mean_s: rep.short_tasks.mean_s,
            short_max_s: rep.short_tasks.max_s,
            long_mean_s: rep.long_tasks.mean_s,
            long_max_s: rep.long_tasks.max_s,
            avg_active_transient: t.cost.avg_active_transient,
            max_active_transient: t.cost.max_active_transient,
            r_normalized_on_demand: t.cost.r_normalized_on_demand,
            savings_fraction: t.cost.savings_fraction,
            transient_lifetimes: t.lifetimes as u64,
            revoked: t.revoked as u64,
            k: r.output.capacity.k,
            t: r.output.capacity.t,
            end_s: r.output.end.as_secs_f64(),
        };
        Ok(())
    })
}

/// Writes `summary.json`, `tasks.csv`, `cdf_short.csv` and
/// `transients.csv` for a finished run.
///
/// # Safety
/// `result` must be a live handle and `dir` a NUL-terminated path.
#[no_mangle]
pub unsafe extern "C" fn spotsched_result_write(
    result: *const SpotschedResult,
    dir: *const c_char,
) -> SpotschedStatus {
    guard(|| {
        let r = handle(result, "result")?;
        let dir = str_arg(dir, "dir")?;
        write_outputs(&r.inner, Path::new(dir)).map_err(fail)
    })
}

/// # Safety
/// `result` must be null or come from `spotsched_run`, and not be used
/// afterwards.
#[no_mangle]
pub unsafe extern "C" fn spotsched_result_free(result: *mut SpotschedResult) {
    if !result.is_null() {
        drop(Box::from_raw(result));
    }
}
