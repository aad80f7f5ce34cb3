//! C ABI for `persuasion-lab`.
//!
//! Objects cross the boundary as opaque handles created by `pl_*_new`/`from`
//! functions and released with the matching `pl_*_free`. Every fallible call
//! returns a [`PlStatus`]; on failure, [`pl_last_error_message`] describes
//! the error on the calling thread.
#![deny(unsafe_op_in_unsafe_fn)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use persuasion_lab::ope::{estimate_matrices, ope_value, Variant};
use persuasion_lab::oracle::exact_value;
use persuasion_lab::pomdp::{build_pomdp, LiftedPomdp};
use persuasion_lab::spp::{generate_dataset, monte_carlo_value, Dataset, EnvironmentSpec, MetaPolicy, StrategyConfig};
use persuasion_lab::{bp, Error};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    /// Config, dataset or validation error.
    Parse = 3,
    /// Rank condition failed or an action is unsupported by the data.
    Rank = 4,
    /// Lifted state space or trajectory enumeration over the size guard.
    SizeGuard = 5,
    Io = 6,
    Internal = 7,
    Panic = 8,
}

/// Validated environment.
pub struct PlEnvironment {
    spec: EnvironmentSpec,
    hash: CString,
    /// Built on first use by the exact oracle.
    pomdp: Option<LiftedPomdp>,
}

/// Meta-policy usable as behavioral or evaluation strategy.
pub struct PlStrategy {
    meta: MetaPolicy,
}

/// Logged behavioral dataset.
pub struct PlDataset {
    data: Dataset,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn status_of(e: &Error) -> PlStatus {
    match e {
        Error::RankConditionFailed(_) | Error::UnsupportedAction { .. } => PlStatus::Rank,
        Error::StateSpaceTooLarge { .. } => PlStatus::SizeGuard,
        Error::Io(_) => PlStatus::Io,
        Error::InternalInconsistency(_) => PlStatus::Internal,
        _ => PlStatus::Parse,
    }
}

/// Runs `f`, translating errors and panics into a status.
fn guard(f: impl FnOnce() -> Result<(), (PlStatus, String)>) -> PlStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => PlStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("panic: {msg}"));
            PlStatus::Panic
        }
    }
}

fn lib(e: Error) -> (PlStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (PlStatus, String) {
    (PlStatus::NullPointer, format!("{what} is null"))
}

/// # Safety
/// `p` must be null or a valid NUL-terminated string.
unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, (PlStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    // SAFETY: caller guarantees a valid C string.
    unsafe { CStr::from_ptr(p) }.to_str().map_err(|_| (PlStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

/// # Safety
/// `p` must be null or point to a live `T` created by this library.
unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, (PlStatus, String)> {
    // SAFETY: caller guarantees validity when non-null.
    unsafe { p.as_ref() }.ok_or_else(|| null(what))
}

/// # Safety
/// `out` must be null or valid for a write of `T`.
unsafe fn write_out<T>(out: *mut T, v: T, what: &str) -> Result<(), (PlStatus, String)> {
    if out.is_null() {
        return Err(null(what));
    }
    // SAFETY: checked non-null; caller guarantees it is writable.
    unsafe { out.write(v) };
    Ok(())
}

fn boxed_env(spec: EnvironmentSpec) -> *mut PlEnvironment {
    let hash = CString::new(spec.hash()).expect("hex hash has no NUL");
    Box::into_raw(Box::new(PlEnvironment { spec, hash, pomdp: None }))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn pl_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message for the last failed call on this thread, or null. The pointer is
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn pl_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |s| s.as_ptr()))
}

/// Parses an environment from TOML source.
///
/// # Safety
/// `toml` must be a valid C string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pl_env_from_toml(toml: *const c_char, out: *mut *mut PlEnvironment) -> PlStatus {
    guard(|| {
        let src = unsafe { str_arg(toml, "toml") }?;
        let spec = EnvironmentSpec::from_toml_str(src).map_err(lib)?;
        unsafe { write_out(out, boxed_env(spec), "out") }
    })
}

/// Loads an environment from a TOML file.
///
/// # Safety
/// `path` must be a valid C string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pl_env_from_path(path: *const c_char, out: *mut *mut PlEnvironment) -> PlStatus {
    guard(|| {
        let p = unsafe { str_arg(path, "path") }?;
        let spec = EnvironmentSpec::from_path(p).map_err(lib)?;
        unsafe { write_out(out, boxed_env(spec), "out") }
    })
}

/// # Safety
/// `env` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn pl_env_free(env: *mut PlEnvironment) {
    if !env.is_null() {
        // SAFETY: created by Box::into_raw in this crate.
        drop(unsafe { Box::from_raw(env) });
    }
}

/// Horizon `T`, or 0 for a null handle.
///
/// # Safety
/// `env` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn pl_env_horizon(env: *const PlEnvironment) -> usize {
    unsafe { env.as_ref() }.map_or(0, |e| e.spec.horizon())
}

/// Number of signaling policies, or 0 for a null handle.
///
/// # Safety
/// `env` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn pl_env_num_policies(env: *const PlEnvironment) -> usize {
    unsafe { env.as_ref() }.map_or(0, |e| e.spec.num_policies())
}

/// Content hash (hex); owned by the environment.
///
/// # Safety
/// `env` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn pl_env_hash(env: *const PlEnvironment) -> *const c_char {
    unsafe { env.as_ref() }.map_or(std::ptr::null(), |e| e.hash.as_ptr())
}

/// Best one-shot policy in the environment's set and its value.
///
/// # Safety
/// `env` must be a live handle; `best_index` and `value` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pl_solve_bp(env: *const PlEnvironment, best_index: *mut usize, value: *mut f64) -> PlStatus {
    guard(|| {
        let e = unsafe { handle(env, "env") }?;
        let s = &e.spec;
        let (i, v) = bp::solve_bp(s.policies(), s.prior().probs(), s.rewards(), s.tie_break()).map_err(lib)?;
        unsafe { write_out(best_index, i, "best_index") }?;
        unsafe { write_out(value, v, "value") }
    })
}

/// Builds a strategy from a TOML strategy descriptor such as
/// `family = "constant"` / `policy = 1`.
///
/// # Safety
/// `env` must be a live handle, `toml` a valid C string, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn pl_strategy_from_toml(
    env: *const PlEnvironment,
    toml: *const c_char,
    out: *mut *mut PlStrategy,
) -> PlStatus {
    guard(|| {
        let e = unsafe { handle(env, "env") }?;
        let src = unsafe { str_arg(toml, "toml") }?;
        let c: StrategyConfig =
            ::toml::from_str(src).map_err(|err| (PlStatus::Parse, format!("strategy: {}", err.to_string().trim_end())))?;
        let meta = c.build(&e.spec).map_err(lib)?.with_name(c.descriptor());
        unsafe { write_out(out, Box::into_raw(Box::new(PlStrategy { meta })), "out") }
    })
}

/// # Safety
/// `s` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn pl_strategy_free(s: *mut PlStrategy) {
    if !s.is_null() {
        // SAFETY: created by Box::into_raw in this crate.
        drop(unsafe { Box::from_raw(s) });
    }
}

/// Simulates `n` episodes under `behavioral`.
///
/// # Safety
/// Handles must be live; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn pl_dataset_generate(
    env: *const PlEnvironment,
    behavioral: *const PlStrategy,
    n: usize,
    seed: u64,
    out: *mut *mut PlDataset,
) -> PlStatus {
    guard(|| {
        let e = unsafe { handle(env, "env") }?;
        let b = unsafe { handle(behavioral, "behavioral") }?;
        let data = generate_dataset(&e.spec, &b.meta, b.meta.name(), n, seed).map_err(lib)?;
        unsafe { write_out(out, Box::into_raw(Box::new(PlDataset { data })), "out") }
    })
}

/// # Safety
/// `path` must be a valid C string; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn pl_dataset_load(path: *const c_char, out: *mut *mut PlDataset) -> PlStatus {
    guard(|| {
        let p = unsafe { str_arg(path, "path") }?;
        let data = Dataset::load(p).map_err(lib)?;
        unsafe { write_out(out, Box::into_raw(Box::new(PlDataset { data })), "out") }
    })
}

/// # Safety
/// `ds` must be a live handle; `path` a valid C string.
#[no_mangle]
pub unsafe extern "C" fn pl_dataset_save(ds: *const PlDataset, path: *const c_char) -> PlStatus {
    guard(|| {
        let d = unsafe { handle(ds, "dataset") }?;
        let p = unsafe { str_arg(path, "path") }?;
        d.data.save(p).map_err(lib)
    })
}

/// Number of records, or 0 for a null handle.
///
/// # Safety
/// `ds` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn pl_dataset_len(ds: *const PlDataset) -> usize {
    unsafe { ds.as_ref() }.map_or(0, |d| d.data.len())
}

/// # Safety
/// `ds` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn pl_dataset_free(ds: *mut PlDataset) {
    if !ds.is_null() {
        // SAFETY: created by Box::into_raw in this crate.
        drop(unsafe { Box::from_raw(ds) });
    }
}

/// Sample-mode proximal estimate of `eval`'s value from `ds`, with the
/// default estimator variant.
///
/// # Safety
/// Handles must be live; `value` writable.
#[no_mangle]
pub unsafe extern "C" fn pl_ope_value(ds: *const PlDataset, eval: *const PlStrategy, value: *mut f64) -> PlStatus {
    guard(|| {
        let d = unsafe { handle(ds, "dataset") }?;
        let g = unsafe { handle(eval, "eval") }?;
        let bundle = estimate_matrices(&d.data).map_err(lib)?;
        let est = ope_value(&bundle, &g.meta, Variant::default()).map_err(lib)?;
        unsafe { write_out(value, est.value, "value") }
    })
}

/// Exact value by trajectory enumeration on the lifted model.
///
/// # Safety
/// Handles must be live and `env` not shared across threads during the
/// call; `value` writable.
#[no_mangle]
pub unsafe extern "C" fn pl_exact_value(env: *mut PlEnvironment, strategy: *const PlStrategy, value: *mut f64) -> PlStatus {
    guard(|| {
        // SAFETY: caller guarantees exclusive access to a live handle.
        let e = unsafe { env.as_mut() }.ok_or_else(|| null("env"))?;
        let g = unsafe { handle(strategy, "strategy") }?;
        if e.pomdp.is_none() {
            e.pomdp = Some(build_pomdp(&e.spec).map_err(lib)?);
        }
        let v = exact_value(e.pomdp.as_ref().expect("just built"), &g.meta).map_err(lib)?;
        unsafe { write_out(value, v, "value") }
    })
}

/// Mean cumulative sender reward over `n` simulated episodes.
///
/// # Safety
/// Handles must be live; `value` writable.
#[no_mangle]
pub unsafe extern "C" fn pl_monte_carlo_value(
    env: *const PlEnvironment,
    strategy: *const PlStrategy,
    n: usize,
    seed: u64,
    value: *mut f64,
) -> PlStatus {
    guard(|| {
        let e = unsafe { handle(env, "env") }?;
        let g = unsafe { handle(strategy, "strategy") }?;
        let v = monte_carlo_value(&e.spec, &g.meta, n, seed).map_err(lib)?;
        unsafe { write_out(value, v, "value") }
    })
}
