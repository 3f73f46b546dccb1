//! C ABI over `rsddej`.
//!
//! Every function returns an [`RsddejStatus`]. On failure the message is
//! kept per thread and can be read with [`rsddej_last_error_message`].
//! Handles are opaque and must be released with their `_free` function.
//! Panics never cross the boundary; they are reported as
//! `RSDDEJ_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use rsddej::cli::{parse_config, run_experiment, Command, LoadedConfig, RunError, RunOptions};
use rsddej::{simulate_path, validate_dissipativity, Error, PathRecord};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RsddejStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    Numerical = 4,
    Io = 5,
    BufferTooSmall = 6,
    Panic = 7,
}

/// Per-grid-point series of a path.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RsddejField {
    X = 0,
    K = 1,
    KCont = 2,
    KJump = 3,
    Y = 4,
    Gamma = 5,
}

/// Dissipativity constants; rates are NaN when the model is infeasible.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RsddejDissipativity {
    pub feasible: bool,
    pub epsilon_sq: f64,
    pub alpha: f64,
    pub alpha1: f64,
    pub alpha2: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub lambda_moment: f64,
    pub lambda_contraction: f64,
}

/// A validated run configuration.
pub struct RsddejSession {
    config: LoadedConfig,
}

/// One simulated path.
pub struct RsddejPath {
    record: PathRecord,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

type Failure = (RsddejStatus, String);

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn guard<F: FnOnce() -> Result<(), Failure>>(f: F) -> RsddejStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error(String::new());
            RsddejStatus::Ok
        }
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".to_string());
            set_error(format!("internal panic: {msg}"));
            RsddejStatus::Panic
        }
    }
}

fn lib_failure(e: Error) -> Failure {
    let status = match e {
        Error::NonFinite { .. } => RsddejStatus::Numerical,
        _ => RsddejStatus::InvalidArgument,
    };
    (status, e.to_string())
}

fn null(name: &str) -> Failure {
    (RsddejStatus::NullPointer, format!("`{name}` is null"))
}

unsafe fn read_str<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(name));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| (RsddejStatus::InvalidArgument, format!("`{name}` is not valid UTF-8")))
}

/// Copy the last error of this thread into `buf` as a NUL-terminated
/// string, truncating if needed. Returns the full message length without
/// the terminator; pass a null `buf` to query it.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn rsddej_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        let bytes = msg.as_bytes();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            ptr::copy_nonoverlapping(bytes.as_ptr(), buf as *mut u8, n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn rsddej_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Positive root of `λ − a1 + a2·e^{λτ} = 0`.
///
/// # Safety
/// `out` must be null or point to a writable `double`.
#[no_mangle]
pub unsafe extern "C" fn rsddej_solve_lambda_star(a1: f64, a2: f64, delay: f64, out: *mut f64) -> RsddejStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let l = rsddej::analysis::solve_lambda_star(a1, a2, delay).map_err(lib_failure)?;
        *out = l.value;
        Ok(())
    })
}

/// Orthant projection of `n` values: `x_post = max(x_pre, 0)`,
/// `dk = max(−x_pre, 0)`.
///
/// # Safety
/// All three pointers must reference `n` doubles; `x_post` and `dk` must be
/// writable and must not overlap `x_pre`.
#[no_mangle]
pub unsafe extern "C" fn rsddej_project_and_regulate(
    x_pre: *const f64,
    n: usize,
    x_post: *mut f64,
    dk: *mut f64,
) -> RsddejStatus {
    guard(|| {
        if n == 0 {
            return Ok(());
        }
        if x_pre.is_null() || x_post.is_null() || dk.is_null() {
            return Err(null("x_pre/x_post/dk"));
        }
        let pre = std::slice::from_raw_parts(x_pre, n);
        let post = std::slice::from_raw_parts_mut(x_post, n);
        let k = std::slice::from_raw_parts_mut(dk, n);
        rsddej::reflection::project_and_regulate(pre, post, k);
        Ok(())
    })
}

/// Parse and validate a JSON configuration.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must point to writable
/// storage for a handle.
#[no_mangle]
pub unsafe extern "C" fn rsddej_session_from_json(json: *const c_char, out: *mut *mut RsddejSession) -> RsddejStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let text = read_str(json, "json")?;
        let config = parse_config(text).map_err(|e| (RsddejStatus::Config, e.to_string()))?;
        *out = Box::into_raw(Box::new(RsddejSession { config }));
        Ok(())
    })
}

/// # Safety
/// `session` must be null or a handle from [`rsddej_session_from_json`]
/// that has not been freed.
#[no_mangle]
pub unsafe extern "C" fn rsddej_session_free(session: *mut RsddejSession) {
    if !session.is_null() {
        drop(Box::from_raw(session));
    }
}

/// State dimension of the configured model.
///
/// # Safety
/// `session` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn rsddej_session_dim(session: *const RsddejSession, out: *mut usize) -> RsddejStatus {
    guard(|| {
        let s = session.as_ref().ok_or_else(|| null("session"))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = s.config.params.dim;
        Ok(())
    })
}

/// Dissipativity constants of the configured model.
///
/// # Safety
/// `session` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn rsddej_session_validate(
    session: *const RsddejSession,
    out: *mut RsddejDissipativity,
) -> RsddejStatus {
    guard(|| {
        let s = session.as_ref().ok_or_else(|| null("session"))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let r = validate_dissipativity(&s.config.params);
        *out = RsddejDissipativity {
            feasible: r.feasible,
            epsilon_sq: r.epsilon_sq,
            alpha: r.alpha,
            alpha1: r.alpha1,
            alpha2: r.alpha2,
            beta1: r.beta1,
            beta2: r.beta2,
            lambda_moment: r.lambda_moment.unwrap_or(f64::NAN),
            lambda_contraction: r.lambda_contraction.unwrap_or(f64::NAN),
        };
        Ok(())
    })
}

/// Simulate path `path_index` of the configured run from the primary
/// initial segment. The result is identical to path `path_index` of the
/// `simulate` command.
///
/// # Safety
/// `session` must be a live handle; `out` must point to writable storage
/// for a handle.
#[no_mangle]
pub unsafe extern "C" fn rsddej_session_simulate(
    session: *const RsddejSession,
    path_index: u64,
    out: *mut *mut RsddejPath,
) -> RsddejStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let s = session.as_ref().ok_or_else(|| null("session"))?;
        let c = &s.config;
        let sim = c.sim();
        let record =
            simulate_path(sim, &c.model, &c.marks, &c.raw.initial, sim.stream(path_index)).map_err(lib_failure)?;
        *out = Box::into_raw(Box::new(RsddejPath { record }));
        Ok(())
    })
}

/// # Safety
/// `path` must be null or a handle from [`rsddej_session_simulate`] that has
/// not been freed.
#[no_mangle]
pub unsafe extern "C" fn rsddej_path_free(path: *mut RsddejPath) {
    if !path.is_null() {
        drop(Box::from_raw(path));
    }
}

/// Grid shape of a path: `steps + 1` rows of `dim` values.
///
/// # Safety
/// `path` must be a live handle; `steps` and `dim` writable.
#[no_mangle]
pub unsafe extern "C" fn rsddej_path_shape(
    path: *const RsddejPath,
    steps: *mut usize,
    dim: *mut usize,
) -> RsddejStatus {
    guard(|| {
        let p = path.as_ref().ok_or_else(|| null("path"))?;
        let steps = steps.as_mut().ok_or_else(|| null("steps"))?;
        let dim = dim.as_mut().ok_or_else(|| null("dim"))?;
        *steps = p.record.steps();
        *dim = p.record.dim;
        Ok(())
    })
}

/// Number of Poisson jumps applied along the path.
///
/// # Safety
/// `path` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn rsddej_path_jump_count(path: *const RsddejPath, out: *mut usize) -> RsddejStatus {
    guard(|| {
        let p = path.as_ref().ok_or_else(|| null("path"))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = p.record.jumps.len();
        Ok(())
    })
}

/// Copy one series (an [`RsddejField`] value), row-major `(steps + 1) × dim`, into `buf`. With a
/// short buffer nothing is copied, `*written` receives the required length
/// and `RSDDEJ_STATUS_BUFFER_TOO_SMALL` is returned.
///
/// # Safety
/// `path` must be a live handle, `buf` must point to `len` writable doubles
/// (or be null when `len` is 0), `written` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rsddej_path_copy(
    path: *const RsddejPath,
    field: u32,
    buf: *mut f64,
    len: usize,
    written: *mut usize,
) -> RsddejStatus {
    guard(|| {
        let p = path.as_ref().ok_or_else(|| null("path"))?;
        let written = written.as_mut().ok_or_else(|| null("written"))?;
        let r = &p.record;
        let data = match field {
            f if f == RsddejField::X as u32 => &r.x,
            f if f == RsddejField::K as u32 => &r.k,
            f if f == RsddejField::KCont as u32 => &r.k_cont,
            f if f == RsddejField::KJump as u32 => &r.k_jump,
            f if f == RsddejField::Y as u32 => &r.y,
            f if f == RsddejField::Gamma as u32 => &r.gamma,
            other => return Err((RsddejStatus::InvalidArgument, format!("unknown field {other}"))),
        };
        *written = data.len();
        if len < data.len() {
            return Err((
                RsddejStatus::BufferTooSmall,
                format!("buffer holds {len} values, {} needed", data.len()),
            ));
        }
        if buf.is_null() {
            return Err(null("buf"));
        }
        ptr::copy_nonoverlapping(data.as_ptr(), buf, data.len());
        Ok(())
    })
}

/// Run a CLI command (`"simulate"`, `"validate"`, `"moments"`,
/// `"contraction"`, `"invariant"`, `"localtime"` or `"lossrate"`) on a
/// session, writing CSVs and a manifest into `out_dir`. When `override_seed`
/// is true `seed` replaces the configured seed.
///
/// # Safety
/// `session` must be a live handle; `command` and `out_dir` must be
/// NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn rsddej_run_experiment(
    session: *const RsddejSession,
    command: *const c_char,
    out_dir: *const c_char,
    override_seed: bool,
    seed: u64,
) -> RsddejStatus {
    guard(|| {
        let s = session.as_ref().ok_or_else(|| null("session"))?;
        let name = read_str(command, "command")?;
        let dir = read_str(out_dir, "out_dir")?;
        let cmd = match name {
            "simulate" => Command::Simulate,
            "validate" => Command::Validate,
            "moments" => Command::Moments,
            "contraction" => Command::Contraction,
            "invariant" => Command::Invariant,
            "localtime" => Command::Localtime,
            "lossrate" => Command::Lossrate,
            other => return Err((RsddejStatus::InvalidArgument, format!("unknown command `{other}`"))),
        };
        let options = RunOptions {
            seed: override_seed.then_some(seed),
            out_dir: Some(PathBuf::from(dir)),
        };
        run_experiment(cmd, s.config.clone(), &options).map_err(|e| {
            let status = match &e {
                RunError::Config(_) => RsddejStatus::Config,
                RunError::Invalid(_) => RsddejStatus::InvalidArgument,
                RunError::Numerical(_) => RsddejStatus::Numerical,
                RunError::Io(_) => RsddejStatus::Io,
            };
            (status, e.to_string())
        })?;
        Ok(())
    })
}
